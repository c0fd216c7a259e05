from __future__ import annotations

import contextlib
import io

import numpy as np
import pytest

from clstream.cli import main
from clstream.dataset import DatasetManifest, InlineRef, Sample, SynthSpec, synth_dataset


def make_manifest(labels, meta_ids=None, dim=2, image_shape=None, split="train", name="fixture"):
    """Inline manifest whose sample ``i`` has features ``[i, i + 0.5, ...]``."""
    samples = []
    for i, label in enumerate(labels):
        values = tuple(float(i) + 0.5 * k for k in range(dim))
        meta = None if meta_ids is None else meta_ids[i]
        samples.append(Sample(i, InlineRef(values), int(label), meta))
    return DatasetManifest(name, split, tuple(samples), dim, image_shape)


def one_hot_image(h, w, r, c):
    x = np.zeros(h * w)
    x[r * w + c] = 1.0
    return x


@pytest.fixture(scope="session")
def synth10():
    """10 classes x 20 samples, dim 16, seed 7."""
    return synth_dataset(SynthSpec(nb_classes=10, per_class=20, feature_dim=16, seed=7))


@pytest.fixture(scope="session")
def synth_images():
    """10 classes x 4 samples of 5x5 images."""
    return synth_dataset(SynthSpec(10, 4, 25, seed=3, image_shape=(5, 5)))


def one_hot_manifest(h, w, name="onehot"):
    """One sample per pixel; sample ``i`` is the image lit at flat position ``i``."""
    samples = tuple(
        Sample(i, InlineRef(tuple(one_hot_image(h, w, i // w, i % w).tolist())), i % 2) for i in range(h * w)
    )
    return DatasetManifest(name, "train", samples, h * w, (h, w))


def run_cli(*argv):
    """(exit code, stdout, stderr) of one in-process CLI call."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()
