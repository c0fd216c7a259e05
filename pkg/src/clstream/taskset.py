"""Per-task data view yielding ``(features, label, task_id)`` triples."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator

import numpy as np

from .dataset import DatasetManifest, InlineRef, Sample
from .errors import IndexOutOfRange, InvalidSpec
from .rng import SplitMix64, check_seed, derive_seed
from .transforms import Identity

if TYPE_CHECKING:
    from .scenario import TaskSpec


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 32
    shuffle: bool = False
    seed: int = 0
    drop_last: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.batch_size, bool) or not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise InvalidSpec(f"batch_size must be a positive integer, got {self.batch_size!r}")
        try:
            check_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec(str(exc)) from None


@dataclass(frozen=True)
class TaskSet:
    """Immutable view of one task. Transforms run on access, never up front."""

    dataset: DatasetManifest
    task: TaskSpec
    exposed_task_id: int

    def __post_init__(self) -> None:
        n = len(self.dataset)
        if any(not 0 <= i < n for i in self.task.indices):
            raise InvalidSpec(f"task {self.task.task_id} indexes positions outside the dataset")

    def __len__(self) -> int:
        return len(self.task.indices)

    def __getitem__(self, i: int) -> tuple[np.ndarray, int, int]:
        if isinstance(i, bool) or not isinstance(i, (int, np.integer)):
            raise TypeError(f"task sets are indexed by int, got {type(i).__name__}")
        if not 0 <= i < len(self):
            raise IndexOutOfRange(f"index {i} out of range for a task of {len(self)} samples")
        position = self.task.indices[i]
        x = self.task.transform.apply(self.dataset.features(position))
        y = self.task.effective_label(self.dataset.samples[position].label)
        return x, y, self.exposed_task_id

    def __iter__(self) -> Iterator[tuple[np.ndarray, int, int]]:
        for i in range(len(self)):
            yield self[i]

    @property
    def labels(self) -> np.ndarray:
        """Effective (post-relabel) labels in task order."""
        return np.array(
            [self.task.effective_label(self.dataset.samples[p].label) for p in self.task.indices],
            dtype=np.int64,
        )

    def order(self, plan: BatchPlan) -> list[int]:
        """Positions ``0..len-1`` in the order ``plan`` visits them."""
        order = list(range(len(self)))
        if plan.shuffle:
            SplitMix64(derive_seed(plan.seed, self.task.task_id)).shuffle(order)
        return order

    def batches(self, plan: BatchPlan | None = None) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Yield ``(x, y, t)`` arrays of at most ``plan.batch_size`` rows."""
        plan = plan or BatchPlan()
        order = self.order(plan)
        for start in range(0, len(order), plan.batch_size):
            chunk = order[start : start + plan.batch_size]
            if plan.drop_last and len(chunk) < plan.batch_size:
                return
            rows = [self[i] for i in chunk]
            yield (
                np.stack([r[0] for r in rows]),
                np.array([r[1] for r in rows], dtype=np.int64),
                np.full(len(rows), self.exposed_task_id, dtype=np.int64),
            )

    def materialize(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Whole task as ``(x, y, t)`` arrays, in task order."""
        return next(self.batches(BatchPlan(batch_size=len(self))))

    def class_counts(self) -> dict[int, int]:
        return dict(sorted(Counter(self.labels.tolist()).items()))

    def to_manifest(self) -> DatasetManifest:
        """The task as a standalone dataset manifest, transforms and relabelling applied.

        Sample ids and meta ids are kept. Identity-transform tasks over
        inline or path references keep their references untouched.
        """
        ds = self.dataset
        keep_refs = isinstance(self.task.transform, Identity) and ds.ref_kind != "synth"
        samples = []
        for i, position in enumerate(self.task.indices):
            src = ds.samples[position]
            if keep_refs:
                ref = src.ref
            else:
                x = self[i][0]
                ref = InlineRef(tuple(float(v) for v in x))
            samples.append(Sample(src.id, ref, self.task.effective_label(src.label), src.meta_id))
        name = f"{ds.name}.task{self.task.task_id}"
        return DatasetManifest(name, ds.split, tuple(samples), ds.feature_dim, ds.image_shape)


def iterate_batches(ts: TaskSet, plan: BatchPlan) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    return ts.batches(plan)
