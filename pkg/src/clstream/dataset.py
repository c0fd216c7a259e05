"""Dataset manifests: the raw labelled samples scenarios are cut from.

A manifest is an immutable, validated list of samples. Each sample points at
its features through one of three reference kinds:

* :class:`InlineRef`  - the feature vector itself;
* :class:`PathRef`    - an opaque external file path, never opened here;
* :class:`SynthRef`   - a (class, draw) coordinate resolved by a seeded
  Gaussian generator attached to the manifest.

Manifests are stored as UTF-8, LF-terminated, tab-separated text::

    #clstream-dataset/1<TAB>name<TAB>split<TAB>feature_dim<TAB>HxW|-<TAB>ref_kind
    id<TAB>label<TAB>meta_id|-<TAB>payload
    ...

``ref_kind`` is ``inline``, ``path`` or ``synth:<seed>:<nb_classes>:<separation>``.
The payload is a comma-separated vector of shortest round-trip decimals
(inline), the remainder of the line (path) or ``class:draw`` (synth).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    EmptyDataset,
    EmptyList,
    InvalidSpec,
    MixedRefKinds,
    ParseError,
    RefKindUnsupported,
    SplitMismatch,
    UnknownClass,
)
from .rng import SplitMix64, check_seed, derive_seed

DATASET_MAGIC = "#clstream-dataset/1"
SPLITS = ("train", "test")
_SPLIT_CODE = {"train": 0, "test": 1}
_MEANS_KEY = 2

Split = Literal["train", "test"]


@dataclass(frozen=True)
class InlineRef:
    values: tuple[float, ...]


@dataclass(frozen=True)
class PathRef:
    path: str


@dataclass(frozen=True)
class SynthRef:
    class_index: int
    draw_index: int


SampleRef = Union[InlineRef, PathRef, SynthRef]

_REF_KIND = {InlineRef: "inline", PathRef: "path", SynthRef: "synth"}


@dataclass(frozen=True)
class Sample:
    id: int
    ref: SampleRef
    label: int
    meta_id: int | None = None


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a balanced Gaussian-blob dataset.

    ``image_shape`` and ``nb_sessions`` are optional extras: the former lets
    rotation scenarios run on synthetic data, the latter assigns
    ``meta_id = draw_index % nb_sessions`` for metadata-driven scenarios.
    """

    nb_classes: int
    per_class: int
    feature_dim: int
    seed: int
    class_separation: float = 4.0
    image_shape: tuple[int, int] | None = None
    nb_sessions: int | None = None

    def __post_init__(self) -> None:
        for name in ("nb_classes", "per_class", "feature_dim"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise InvalidSpec(f"{name} must be a positive integer, got {value!r}")
        try:
            check_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec(str(exc)) from None
        if not (math.isfinite(self.class_separation) and self.class_separation > 0):
            raise InvalidSpec(f"class_separation must be positive, got {self.class_separation!r}")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h < 1 or w < 1 or h * w != self.feature_dim:
                raise InvalidSpec(f"image_shape {h}x{w} does not match feature_dim {self.feature_dim}")
        if self.nb_sessions is not None and self.nb_sessions < 1:
            raise InvalidSpec(f"nb_sessions must be positive, got {self.nb_sessions!r}")


@dataclass(frozen=True)
class SynthGenerator:
    """Random-access Gaussian sample generator.

    Class means sit on distinct points of a ``k ** feature_dim`` lattice with
    spacing ``class_separation``, so any two means are at least that far
    apart. Sample ``(c, d)`` of a split is ``mean[c]`` plus unit-variance noise
    drawn from a stream seeded by ``derive_seed(seed, split, c, d)``.
    """

    seed: int
    nb_classes: int
    feature_dim: int
    class_separation: float

    @cached_property
    def means(self) -> np.ndarray:
        k = 2
        while k**self.feature_dim < self.nb_classes:
            k += 1
        cells = k**self.feature_dim
        rng = SplitMix64(derive_seed(self.seed, _MEANS_KEY))
        if cells <= 4 * self.nb_classes:
            pool = list(range(cells))
            for i in range(self.nb_classes):
                j = i + rng.below(cells - i)
                pool[i], pool[j] = pool[j], pool[i]
            chosen = pool[: self.nb_classes]
        else:
            seen: set[int] = set()
            chosen = []
            while len(chosen) < self.nb_classes:
                cell = rng.below(cells)
                if cell not in seen:
                    seen.add(cell)
                    chosen.append(cell)
        means = np.empty((self.nb_classes, self.feature_dim), dtype=np.float64)
        for c, cell in enumerate(chosen):
            for axis in range(self.feature_dim):
                cell, digit = divmod(cell, k)
                means[c, axis] = (digit - (k - 1) / 2) * self.class_separation
        means.flags.writeable = False
        return means

    def draw(self, class_index: int, draw_index: int, split: str) -> np.ndarray:
        if not 0 <= class_index < self.nb_classes:
            raise ValueError(f"class index {class_index} outside generator range")
        rng = SplitMix64(derive_seed(self.seed, _SPLIT_CODE[split], class_index, draw_index))
        noise = np.array([rng.normal() for _ in range(self.feature_dim)])
        return self.means[class_index] + noise

    def token(self) -> str:
        return f"synth:{self.seed}:{self.nb_classes}:{_fmt_float(self.class_separation)}"


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    split: Split
    samples: tuple[Sample, ...]
    feature_dim: int
    image_shape: tuple[int, int] | None = None
    generator: SynthGenerator | None = None
    class_set: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.name or any(ch in self.name for ch in "\t\r\n"):
            raise InvalidSpec(f"invalid dataset name {self.name!r}")
        if self.split not in SPLITS:
            raise InvalidSpec(f"split must be 'train' or 'test', got {self.split!r}")
        if isinstance(self.feature_dim, bool) or not isinstance(self.feature_dim, int) or self.feature_dim < 1:
            raise InvalidSpec(f"feature_dim must be a positive integer, got {self.feature_dim!r}")
        if self.image_shape is not None:
            h, w = self.image_shape
            object.__setattr__(self, "image_shape", (int(h), int(w)))
            if h < 1 or w < 1 or h * w != self.feature_dim:
                raise DimensionMismatch(
                    f"image_shape {h}x{w} does not match feature_dim {self.feature_dim}"
                )
        if not self.samples:
            raise EmptyDataset(f"dataset {self.name!r} has no samples")

        kinds = {type(s.ref) for s in self.samples}
        if len(kinds) > 1:
            names = sorted(_REF_KIND[k] for k in kinds)
            raise MixedRefKinds(f"dataset {self.name!r} mixes reference kinds {names}")
        kind = kinds.pop()
        if kind is SynthRef and self.generator is None:
            raise InvalidSpec("synthetic references need a generator")
        if self.generator is not None and self.generator.feature_dim != self.feature_dim:
            raise DimensionMismatch("generator feature_dim differs from manifest feature_dim")

        seen: set[int] = set()
        labels: set[int] = set()
        for s in self.samples:
            if s.id < 0 or s.label < 0 or (s.meta_id is not None and s.meta_id < 0):
                raise InvalidSpec(f"sample {s.id}: ids, labels and meta ids must be non-negative")
            if s.id in seen:
                raise DuplicateId(f"sample id {s.id} appears more than once")
            seen.add(s.id)
            labels.add(s.label)
            if kind is InlineRef:
                if len(s.ref.values) != self.feature_dim:
                    raise DimensionMismatch(
                        f"sample {s.id} has {len(s.ref.values)} features, expected {self.feature_dim}"
                    )
                if not all(math.isfinite(v) for v in s.ref.values):
                    raise InvalidSpec(f"sample {s.id} has non-finite features")
            elif kind is SynthRef and not 0 <= s.ref.class_index < self.generator.nb_classes:
                raise InvalidSpec(f"sample {s.id} refers to unknown generator class")
        object.__setattr__(self, "class_set", tuple(sorted(labels)))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ref_kind(self) -> str:
        return _REF_KIND[type(self.samples[0].ref)]

    @property
    def nb_classes(self) -> int:
        return len(self.class_set)

    @cached_property
    def labels(self) -> np.ndarray:
        out = np.array([s.label for s in self.samples], dtype=np.int64)
        out.flags.writeable = False
        return out

    @property
    def has_metadata(self) -> bool:
        return all(s.meta_id is not None for s in self.samples)

    @cached_property
    def matrix(self) -> np.ndarray:
        """All feature vectors stacked into a read-only ``(n, feature_dim)`` array."""
        kind = self.ref_kind
        if kind == "path":
            raise RefKindUnsupported(f"dataset {self.name!r} holds external paths, not vectors")
        if kind == "inline":
            out = np.array([s.ref.values for s in self.samples], dtype=np.float64)
        else:
            gen = self.generator
            out = np.stack(
                [gen.draw(s.ref.class_index, s.ref.draw_index, self.split) for s in self.samples]
            )
        out.flags.writeable = False
        return out

    def features(self, position: int) -> np.ndarray:
        return self.matrix[position]

    def materialized(self) -> DatasetManifest:
        """Same dataset with synthetic references resolved to inline vectors."""
        if self.ref_kind != "synth":
            return self
        samples = [
            Sample(s.id, InlineRef(tuple(float(v) for v in row)), s.label, s.meta_id)
            for s, row in zip(self.samples, self.matrix)
        ]
        return DatasetManifest(self.name, self.split, tuple(samples), self.feature_dim, self.image_shape)


def _fmt_float(value: float) -> str:
    return repr(float(value))


def _fmt_shape(shape: tuple[int, int] | None) -> str:
    return "-" if shape is None else f"{shape[0]}x{shape[1]}"


def dumps_manifest(manifest: DatasetManifest) -> str:
    kind = manifest.ref_kind
    token = manifest.generator.token() if kind == "synth" else kind
    header = "\t".join(
        [
            DATASET_MAGIC,
            manifest.name,
            manifest.split,
            str(manifest.feature_dim),
            _fmt_shape(manifest.image_shape),
            token,
        ]
    )
    lines = [header]
    for s in manifest.samples:
        ref = s.ref
        if isinstance(ref, InlineRef):
            payload = ",".join(_fmt_float(v) for v in ref.values)
        elif isinstance(ref, PathRef):
            payload = ref.path
        else:
            payload = f"{ref.class_index}:{ref.draw_index}"
        meta = "-" if s.meta_id is None else str(s.meta_id)
        lines.append(f"{s.id}\t{s.label}\t{meta}\t{payload}")
    return "\n".join(lines) + "\n"


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_manifest(manifest))


def _parse_int(text: str, what: str, lineno: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"line {lineno}: {what} {text!r} is not an integer") from None
    if value < 0:
        raise ParseError(f"line {lineno}: {what} must be non-negative, got {value}")
    return value


def parse_shape(text: str) -> tuple[int, int] | None:
    if text == "-":
        return None
    parts = text.split("x")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ParseError(f"bad image shape {text!r}, expected HxW")
    return int(parts[0]), int(parts[1])


def split_lines(text: str) -> list[str]:
    """Split LF-terminated text; a missing final newline means a truncated file."""
    if "\r" in text:
        raise ParseError("CR characters are not allowed; use LF line endings")
    if text and not text.endswith("\n"):
        raise ParseError("file does not end with a newline (truncated?)")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _parse_ref_kind(token: str, feature_dim: int) -> tuple[str, SynthGenerator | None]:
    if token in ("inline", "path"):
        return token, None
    parts = token.split(":")
    if len(parts) == 4 and parts[0] == "synth":
        try:
            gen = SynthGenerator(int(parts[1]), int(parts[2]), feature_dim, float(parts[3]))
            check_seed(gen.seed)
        except (TypeError, ValueError):
            raise ParseError(f"bad synth reference kind {token!r}") from None
        if gen.nb_classes < 1 or not (math.isfinite(gen.class_separation) and gen.class_separation > 0):
            raise ParseError(f"bad synth reference kind {token!r}")
        return "synth", gen
    raise ParseError(f"unknown reference kind {token!r}")


def loads_manifest(text: str) -> DatasetManifest:
    lines = split_lines(text)
    if not lines:
        raise ParseError("missing manifest header")
    header = lines[0].split("\t")
    if header[0] != DATASET_MAGIC:
        raise ParseError(f"line 1: expected {DATASET_MAGIC!r} header")
    if len(header) != 6:
        raise ParseError(f"line 1: header has {len(header)} fields, expected 6")
    _, name, split, dim_text, shape_text, kind_token = header
    if split not in SPLITS:
        raise ParseError(f"line 1: unknown split {split!r}")
    feature_dim = _parse_int(dim_text, "feature_dim", 1)
    image_shape = parse_shape(shape_text)
    kind, generator = _parse_ref_kind(kind_token, feature_dim)

    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t", 3)
        if len(fields) != 4:
            raise ParseError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
        sid = _parse_int(fields[0], "id", lineno)
        label = _parse_int(fields[1], "label", lineno)
        meta = None if fields[2] == "-" else _parse_int(fields[2], "meta_id", lineno)
        payload = fields[3]
        ref: SampleRef
        if kind == "path":
            if not payload:
                raise ParseError(f"line {lineno}: empty path")
            ref = PathRef(payload)
        elif kind == "inline":
            try:
                values = tuple(float(v) for v in payload.split(","))
            except ValueError:
                raise ParseError(f"line {lineno}: malformed feature vector") from None
            ref = InlineRef(values)
        else:
            parts = payload.split(":")
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: synth payload must be class:draw")
            ref = SynthRef(_parse_int(parts[0], "class", lineno), _parse_int(parts[1], "draw", lineno))
        samples.append(Sample(sid, ref, label, meta))
    try:
        return DatasetManifest(name, split, tuple(samples), feature_dim, image_shape, generator)
    except InvalidSpec as exc:
        raise ParseError(str(exc)) from None


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ParseError(f"{os.fspath(path)}: not valid UTF-8") from None
    return loads_manifest(text)


def synth_dataset(spec: SynthSpec, split: Split = "train", *, inline: bool = True) -> DatasetManifest:
    """Build the balanced Gaussian dataset described by ``spec``.

    Samples are ordered class-major (all of class 0, then class 1, ...). With
    ``inline=False`` the manifest keeps lazy ``SynthRef`` coordinates instead
    of materialized vectors; both forms yield identical features.
    """
    if split not in SPLITS:
        raise InvalidSpec(f"split must be 'train' or 'test', got {split!r}")
    gen = SynthGenerator(spec.seed, spec.nb_classes, spec.feature_dim, float(spec.class_separation))
    samples = []
    for c in range(spec.nb_classes):
        for d in range(spec.per_class):
            meta = None if spec.nb_sessions is None else d % spec.nb_sessions
            samples.append(Sample(c * spec.per_class + d, SynthRef(c, d), c, meta))
    name = f"synth-s{spec.seed}"
    lazy = DatasetManifest(name, split, tuple(samples), spec.feature_dim, spec.image_shape, gen)
    return lazy.materialized() if inline else lazy


def concat_datasets(
    manifests: Sequence[DatasetManifest], relabel: Literal["keep", "shift"] = "shift"
) -> DatasetManifest:
    """Concatenate manifests into one (a "fellowship" of datasets).

    ``shift`` moves each manifest's labels past every label used by the
    manifests before it; ``keep`` leaves labels untouched. Sample ids are
    renumbered ``0..n-1`` in concatenation order.
    """
    if relabel not in ("keep", "shift"):
        raise InvalidSpec(f"relabel must be 'keep' or 'shift', got {relabel!r}")
    if not manifests:
        raise EmptyList("nothing to concatenate")
    first = manifests[0]
    for m in manifests[1:]:
        if m.feature_dim != first.feature_dim:
            raise DimensionMismatch(
                f"cannot concatenate feature_dim {first.feature_dim} with {m.feature_dim}"
            )
        if m.split != first.split:
            raise SplitMismatch(f"cannot concatenate split {first.split!r} with {m.split!r}")
    shapes = {m.image_shape for m in manifests} - {None}
    if len(shapes) > 1:
        raise DimensionMismatch(f"conflicting image shapes {sorted(shapes)}")
    image_shape = shapes.pop() if shapes and all(m.image_shape for m in manifests) else None

    generators = {m.generator for m in manifests}
    shared_generator = None
    if all(m.ref_kind == "synth" for m in manifests) and len(generators) == 1:
        shared_generator = generators.pop()
    else:
        manifests = [m.materialized() for m in manifests]

    samples = []
    offset = 0
    for m in manifests:
        for s in m.samples:
            samples.append(Sample(len(samples), s.ref, s.label + offset, s.meta_id))
        if relabel == "shift":
            offset += max(m.class_set) + 1
    name = "+".join(m.name for m in manifests)
    return DatasetManifest(name, first.split, tuple(samples), first.feature_dim, image_shape, shared_generator)


def class_indices(manifest: DatasetManifest, classes: Iterable[int]) -> list[int]:
    """Ascending dataset positions of every sample whose label is in ``classes``."""
    wanted = set(classes)
    unknown = wanted.difference(manifest.class_set)
    if unknown:
        raise UnknownClass(f"classes {sorted(unknown)} are not in the dataset")
    return [i for i, s in enumerate(manifest.samples) if s.label in wanted]
