"""Reproducible continual-learning task streams and their metrics."""

from .dataset import (
    DatasetManifest,
    InlineRef,
    PathRef,
    Sample,
    SynthRef,
    SynthSpec,
    class_indices,
    concat_datasets,
    load_manifest,
    synth_dataset,
    write_manifest,
)
from .metrics import AccuracyMatrix, Logger, PredictionRecord
from .scenario import (
    LabelPolicy,
    Scenario,
    ScenarioSpec,
    TaskSpec,
    build_scenario,
    class_incremental,
    get_taskset,
    load_scenario,
    write_scenario,
)
from .taskset import BatchPlan, TaskSet
from .transforms import Composition, Identity, Permutation, Rotation

__all__ = [
    "AccuracyMatrix",
    "BatchPlan",
    "Composition",
    "DatasetManifest",
    "Identity",
    "InlineRef",
    "LabelPolicy",
    "Logger",
    "PathRef",
    "Permutation",
    "PredictionRecord",
    "Rotation",
    "Sample",
    "Scenario",
    "ScenarioSpec",
    "SynthRef",
    "SynthSpec",
    "TaskSet",
    "TaskSpec",
    "build_scenario",
    "class_incremental",
    "class_indices",
    "concat_datasets",
    "get_taskset",
    "load_manifest",
    "load_scenario",
    "synth_dataset",
    "write_manifest",
    "write_scenario",
]
