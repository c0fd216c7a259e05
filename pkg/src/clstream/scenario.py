"""Turn a dataset manifest plus a scenario recipe into an ordered list of tasks.

Five scenario kinds are supported:

``class_incremental``
    each task brings classes never seen before;
``instance_incremental``
    every task holds every class, with different samples;
``nic``
    one task per metadata session, bringing new samples and possibly new classes;
``transformation``
    every task is the full dataset seen through a different transform;
``label_drift``
    every task is the full dataset under a different relabelling.
"""

from __future__ import annotations

import hashlib
import os
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterator, Literal, Mapping, Sequence

from .dataset import DatasetManifest, class_indices, dumps_manifest, load_manifest, split_lines
from .errors import (
    ClassCoverageMismatch,
    DatasetMismatch,
    EmptyMapList,
    EmptyTransformList,
    IncrementSumMismatch,
    InvalidSpec,
    MissingMetadata,
    ParseError,
    PartialRelabelMap,
    RefKindUnsupported,
    ScenarioError,
    TaskIndexOutOfRange,
    TooManyTasks,
    UnevenIncrement,
    UnknownClass,
)
from .rng import SplitMix64, check_seed, derive_seed
from .taskset import TaskSet
from .transforms import IDENTITY, Transform, check_compatible, parse_transform

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCENARIO_MAGIC = "#clstream-scenario/1"
HIDDEN_TASK_ID = -1

Kind = Literal["class_incremental", "instance_incremental", "nic", "transformation", "label_drift"]
KINDS: tuple[str, ...] = ("class_incremental", "instance_incremental", "nic", "transformation", "label_drift")

# sub-stream keys so one user seed never feeds two unrelated shuffles
_ORDER_STREAM = 0
_INSTANCE_STREAM = 1


@dataclass(frozen=True)
class LabelPolicy:
    train_task_labels: bool = True
    test_task_labels: bool = True

    def exposes(self, split: str) -> bool:
        return self.train_task_labels if split == "train" else self.test_task_labels


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative scenario recipe.

    ``increments`` of length one means a uniform increment; longer lists give
    every task's class count explicitly. ``class_order="random"`` draws a
    seeded order from ``seed``.
    """

    kind: Kind
    increments: tuple[int, ...] | None = None
    initial_increment: int | None = None
    nb_tasks: int | None = None
    class_order: tuple[int, ...] | Literal["random"] | None = None
    seed: int = 0
    transforms: tuple[Transform, ...] | None = None
    relabel_maps: tuple[Mapping[int, int], ...] | None = None
    metadata_key: bool = False
    label_policy: LabelPolicy = field(default_factory=LabelPolicy)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        try:
            check_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec(str(exc)) from None
        for name in ("increments", "class_order", "transforms", "relabel_maps"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, (str, tuple)):
                object.__setattr__(self, name, tuple(value))
        if self.increments is not None:
            if not self.increments or any(_not_positive(k) for k in self.increments):
                raise InvalidSpec(f"increments must be positive integers, got {self.increments!r}")
        for name in ("initial_increment", "nb_tasks"):
            value = getattr(self, name)
            if value is not None and _not_positive(value):
                raise InvalidSpec(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.class_order, str) and self.class_order != "random":
            raise InvalidSpec(f"class_order must be a list of class ids or 'random', got {self.class_order!r}")

        allowed = {
            "class_incremental": {"increments", "initial_increment", "class_order"},
            "instance_incremental": {"nb_tasks", "metadata_key"},
            "nic": {"metadata_key"},
            "transformation": {"transforms"},
            "label_drift": {"relabel_maps"},
        }[self.kind]
        for name in ("increments", "initial_increment", "nb_tasks", "class_order", "transforms", "relabel_maps"):
            if getattr(self, name) is not None and name not in allowed:
                raise InvalidSpec(f"{name} does not apply to {self.kind} scenarios")
        if self.metadata_key and "metadata_key" not in allowed:
            raise InvalidSpec(f"metadata_key does not apply to {self.kind} scenarios")


def _not_positive(value: object) -> bool:
    return isinstance(value, bool) or not isinstance(value, int) or value < 1


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    indices: tuple[int, ...]
    classes: tuple[int, ...]
    transform: Transform = IDENTITY
    relabel: Mapping[int, int] | None = None
    new_classes: tuple[int, ...] = ()

    def effective_label(self, label: int) -> int:
        return label if self.relabel is None else self.relabel[label]


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    dataset: DatasetManifest
    tasks: tuple[TaskSpec, ...]

    def __post_init__(self) -> None:
        if not self.tasks:
            raise InvalidSpec("a scenario needs at least one task")

    @property
    def nb_tasks(self) -> int:
        return len(self.tasks)

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(sorted({c for task in self.tasks for c in task.classes}))

    @property
    def nb_classes(self) -> int:
        return len(self.classes)

    def __len__(self) -> int:
        return self.nb_tasks

    def __getitem__(self, t: int) -> TaskSet:
        return get_taskset(self, t)

    def __iter__(self) -> Iterator[TaskSet]:
        for t in range(self.nb_tasks):
            yield get_taskset(self, t)


def get_taskset(scenario: Scenario, t: int) -> TaskSet:
    if not 0 <= t < scenario.nb_tasks:
        raise TaskIndexOutOfRange(f"task {t} out of range for a {scenario.nb_tasks}-task scenario")
    exposed = t if scenario.spec.label_policy.exposes(scenario.dataset.split) else HIDDEN_TASK_ID
    return TaskSet(scenario.dataset, scenario.tasks[t], exposed)


def resolve_class_order(dataset: DatasetManifest, spec: ScenarioSpec) -> tuple[int, ...]:
    if spec.class_order is None:
        return dataset.class_set
    if spec.class_order == "random":
        order = list(dataset.class_set)
        SplitMix64(derive_seed(spec.seed, _ORDER_STREAM)).shuffle(order)
        return tuple(order)
    order = tuple(spec.class_order)
    unknown = set(order).difference(dataset.class_set)
    if unknown:
        raise UnknownClass(f"class_order mentions classes {sorted(unknown)} absent from the dataset")
    if len(order) != len(set(order)) or len(order) != dataset.nb_classes:
        raise InvalidSpec("class_order must list every dataset class exactly once")
    return order


def _increment_sizes(nb_classes: int, spec: ScenarioSpec) -> list[int]:
    if spec.increments is None:
        raise InvalidSpec("class_incremental scenarios need increments")
    if len(spec.increments) > 1:
        if spec.initial_increment is not None:
            raise InvalidSpec("initial_increment only combines with a uniform increment")
        if sum(spec.increments) != nb_classes:
            raise IncrementSumMismatch(
                f"increments {list(spec.increments)} sum to {sum(spec.increments)}, "
                f"dataset has {nb_classes} classes"
            )
        return list(spec.increments)
    step = spec.increments[0]
    sizes = []
    remaining = nb_classes
    if spec.initial_increment is not None:
        if spec.initial_increment > nb_classes:
            raise IncrementSumMismatch(
                f"initial_increment {spec.initial_increment} exceeds the {nb_classes} classes"
            )
        sizes.append(spec.initial_increment)
        remaining -= spec.initial_increment
    if remaining % step:
        raise UnevenIncrement(f"increment {step} does not divide the {remaining} remaining classes")
    sizes.extend([step] * (remaining // step))
    return sizes


def build_class_incremental(dataset: DatasetManifest, spec: ScenarioSpec) -> Scenario:
    order = resolve_class_order(dataset, spec)
    tasks = []
    start = 0
    for t, size in enumerate(_increment_sizes(len(order), spec)):
        classes = tuple(sorted(order[start : start + size]))
        start += size
        indices = tuple(class_indices(dataset, classes))
        tasks.append(TaskSpec(t, indices, classes, new_classes=classes))
    return Scenario(spec, dataset, tuple(tasks))


def _meta_groups(dataset: DatasetManifest) -> list[tuple[int, list[int]]]:
    if not dataset.has_metadata:
        raise MissingMetadata(f"dataset {dataset.name!r} has samples without meta_id")
    groups: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(dataset.samples):
        groups[s.meta_id].append(i)
    return sorted(groups.items())


def build_instance_incremental(dataset: DatasetManifest, spec: ScenarioSpec) -> Scenario:
    classes = dataset.class_set
    if spec.metadata_key:
        if spec.nb_tasks is not None:
            raise InvalidSpec("give either nb_tasks or metadata_key, not both")
        tasks = []
        for t, (meta, indices) in enumerate(_meta_groups(dataset)):
            present = {dataset.samples[i].label for i in indices}
            if len(present) != len(classes):
                missing = sorted(set(classes) - present)
                raise ClassCoverageMismatch(f"meta_id {meta} lacks classes {missing}")
            tasks.append(TaskSpec(t, tuple(indices), classes))
        return Scenario(spec, dataset, tuple(tasks))

    if spec.nb_tasks is None:
        raise InvalidSpec("instance_incremental scenarios need nb_tasks or metadata_key")
    nb_tasks = spec.nb_tasks
    rng = SplitMix64(derive_seed(spec.seed, _INSTANCE_STREAM))
    chunks: list[list[int]] = [[] for _ in range(nb_tasks)]
    for c in classes:
        positions = class_indices(dataset, (c,))
        if len(positions) < nb_tasks:
            raise TooManyTasks(f"class {c} has {len(positions)} samples, fewer than {nb_tasks} tasks")
        rng.shuffle(positions)
        base, extra = divmod(len(positions), nb_tasks)
        start = 0
        for t in range(nb_tasks):
            size = base + (1 if t < extra else 0)
            chunks[t].extend(positions[start : start + size])
            start += size
    tasks = tuple(TaskSpec(t, tuple(sorted(chunk)), classes) for t, chunk in enumerate(chunks))
    return Scenario(spec, dataset, tasks)


def build_nic(dataset: DatasetManifest, spec: ScenarioSpec) -> Scenario:
    tasks = []
    seen: set[int] = set()
    for t, (_, indices) in enumerate(_meta_groups(dataset)):
        present = {dataset.samples[i].label for i in indices}
        new = tuple(sorted(present - seen))
        seen |= present
        tasks.append(TaskSpec(t, tuple(indices), tuple(sorted(present)), new_classes=new))
    return Scenario(spec, dataset, tuple(tasks))


def build_transformation(dataset: DatasetManifest, spec: ScenarioSpec) -> Scenario:
    if not spec.transforms:
        raise EmptyTransformList("transformation scenarios need at least one transform")
    if dataset.ref_kind == "path":
        raise RefKindUnsupported("transforms need feature vectors, dataset holds external paths")
    for transform in spec.transforms:
        check_compatible(transform, dataset.feature_dim, dataset.image_shape)
    indices = tuple(range(len(dataset)))
    tasks = tuple(
        TaskSpec(t, indices, dataset.class_set, transform, new_classes=dataset.class_set if t == 0 else ())
        for t, transform in enumerate(spec.transforms)
    )
    return Scenario(spec, dataset, tasks)


def build_label_drift(dataset: DatasetManifest, spec: ScenarioSpec) -> Scenario:
    if not spec.relabel_maps:
        raise EmptyMapList("label_drift scenarios need at least one relabel map")
    indices = tuple(range(len(dataset)))
    tasks = []
    seen: set[int] = set()
    for t, mapping in enumerate(spec.relabel_maps):
        missing = [c for c in dataset.class_set if c not in mapping]
        if missing:
            raise PartialRelabelMap(f"relabel map {t} does not cover classes {missing}")
        relabel = {c: mapping[c] for c in dataset.class_set}
        if any(_not_non_negative(v) for v in relabel.values()):
            raise InvalidSpec(f"relabel map {t} targets must be non-negative integers")
        classes = tuple(sorted(set(relabel.values())))
        tasks.append(TaskSpec(t, indices, classes, relabel=relabel, new_classes=tuple(sorted(set(classes) - seen))))
        seen |= set(classes)
    return Scenario(spec, dataset, tuple(tasks))


def _not_non_negative(value: object) -> bool:
    return isinstance(value, bool) or not isinstance(value, int) or value < 0


_BUILDERS = {
    "class_incremental": build_class_incremental,
    "instance_incremental": build_instance_incremental,
    "nic": build_nic,
    "transformation": build_transformation,
    "label_drift": build_label_drift,
}


def build_scenario(dataset: DatasetManifest, spec: ScenarioSpec) -> Scenario:
    return _BUILDERS[spec.kind](dataset, spec)


def class_incremental(dataset: DatasetManifest, increment: int | Sequence[int], **kwargs) -> Scenario:
    """Shorthand: ``class_incremental(dataset, increment=2)``."""
    increments = (increment,) if isinstance(increment, int) else tuple(increment)
    return build_class_incremental(dataset, ScenarioSpec("class_incremental", increments=increments, **kwargs))


# -- config files ----------------------------------------------------------

_CONFIG_KEYS = {
    "kind", "increments", "increment", "initial_increment", "nb_tasks", "class_order",
    "seed", "transforms", "relabel_maps", "metadata_key", "label_policy",
}


def scenario_spec_from_dict(data: Mapping, image_shape: tuple[int, int] | None = None) -> ScenarioSpec:
    """Build a spec from parsed config data.

    Transform descriptors (``rot:45``, ``perm:3:784`` ...) are bound to
    ``image_shape``. Relabel maps are tables with class ids as string keys.
    """
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ParseError(f"unknown scenario config keys {sorted(unknown)}")
    if "kind" not in data:
        raise ParseError("scenario config needs a 'kind'")
    if "increment" in data and "increments" in data:
        raise ParseError("use either 'increment' or 'increments'")
    kwargs: dict = {"kind": data["kind"]}
    incs = data.get("increments", data.get("increment"))
    if incs is not None:
        kwargs["increments"] = (incs,) if isinstance(incs, int) else tuple(incs)
    for key in ("initial_increment", "nb_tasks", "seed", "metadata_key"):
        if key in data:
            kwargs[key] = data[key]
    if "class_order" in data:
        order = data["class_order"]
        kwargs["class_order"] = order if isinstance(order, str) else tuple(order)
    if "transforms" in data:
        kwargs["transforms"] = tuple(parse_transform(str(d), image_shape) for d in data["transforms"])
    if "relabel_maps" in data:
        maps = []
        for table in data["relabel_maps"]:
            try:
                maps.append({int(k): v for k, v in table.items()})
            except (AttributeError, ValueError):
                raise ParseError("relabel maps must be tables keyed by class id") from None
        kwargs["relabel_maps"] = tuple(maps)
    if "label_policy" in data:
        policy = data["label_policy"]
        extra = set(policy) - {"train_task_labels", "test_task_labels"}
        if extra:
            raise ParseError(f"unknown label_policy keys {sorted(extra)}")
        kwargs["label_policy"] = LabelPolicy(**policy)
    return ScenarioSpec(**kwargs)


def load_scenario_config(path: str | os.PathLike, image_shape: tuple[int, int] | None = None) -> ScenarioSpec:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{os.fspath(path)}: {exc}") from None
    return scenario_spec_from_dict(data, image_shape)


# -- scenario manifests ----------------------------------------------------


def dataset_digest(dataset: DatasetManifest) -> str:
    return hashlib.sha256(dumps_manifest(dataset).encode("utf-8")).hexdigest()


def _ints(values: Sequence[int]) -> str:
    return ",".join(str(v) for v in values) if values else "-"


def _parse_ints(text: str, lineno: int) -> tuple[int, ...]:
    if text == "-":
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ParseError(f"line {lineno}: malformed integer list") from None


def dumps_scenario(scenario: Scenario, dataset_ref: str = "-") -> str:
    """Serialize ``scenario``; ``dataset_ref`` is the dataset path recorded in the header."""
    if any(ch in dataset_ref for ch in "\t\r\n"):
        raise InvalidSpec(f"dataset path {dataset_ref!r} cannot be stored")
    policy = scenario.spec.label_policy
    header = "\t".join(
        [
            SCENARIO_MAGIC,
            scenario.spec.kind,
            str(scenario.nb_tasks),
            str(scenario.nb_classes),
            str(scenario.spec.seed),
            str(int(policy.train_task_labels)),
            str(int(policy.test_task_labels)),
            dataset_ref,
            dataset_digest(scenario.dataset),
        ]
    )
    lines = [header]
    for task in scenario.tasks:
        relabel = "-" if task.relabel is None else ",".join(f"{k}>{v}" for k, v in sorted(task.relabel.items()))
        lines.append(
            "\t".join(
                [
                    str(task.task_id),
                    _ints(task.classes),
                    _ints(task.new_classes),
                    task.transform.describe(),
                    relabel,
                    _ints(task.indices),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_scenario(scenario: Scenario, path: str | os.PathLike, dataset_path: str | os.PathLike | None = None) -> None:
    """Write a scenario manifest; ``dataset_path`` is stored relative to ``path``'s directory."""
    ref = "-"
    if dataset_path is not None:
        base = os.path.dirname(os.path.abspath(path))
        ref = os.path.relpath(os.path.abspath(dataset_path), base).replace(os.sep, "/")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_scenario(scenario, ref))


def loads_scenario(text: str, dataset: DatasetManifest) -> Scenario:
    lines = split_lines(text)
    if not lines:
        raise ParseError("missing scenario header")
    header = lines[0].split("\t")
    if header[0] != SCENARIO_MAGIC or len(header) != 9:
        raise ParseError(f"line 1: expected a {SCENARIO_MAGIC!r} header with 9 fields")
    _, kind, nb_tasks, nb_classes, seed, train_flag, test_flag, _, digest = header
    if kind not in KINDS or train_flag not in "01" or test_flag not in "01" or len(train_flag) != 1 or len(test_flag) != 1:
        raise ParseError("line 1: malformed header")
    if digest != dataset_digest(dataset):
        raise DatasetMismatch("dataset content differs from the one the scenario was built on")
    try:
        nb_tasks_i, nb_classes_i, seed_i = int(nb_tasks), int(nb_classes), int(seed)
    except ValueError:
        raise ParseError("line 1: malformed header counts") from None
    if len(lines) - 1 != nb_tasks_i:
        raise ParseError(f"header announces {nb_tasks_i} tasks, file holds {len(lines) - 1}")

    tasks = []
    n = len(dataset)
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 6:
            raise ParseError(f"line {lineno}: expected 6 tab-separated fields, got {len(fields)}")
        task_id = _parse_ints(fields[0], lineno)
        if task_id != (lineno - 2,):
            raise ParseError(f"line {lineno}: task ids must be consecutive from 0")
        relabel = None
        if fields[4] != "-":
            try:
                relabel = {int(k): int(v) for k, v in (pair.split(">") for pair in fields[4].split(","))}
            except ValueError:
                raise ParseError(f"line {lineno}: malformed relabel map") from None
        try:
            transform = parse_transform(fields[3], dataset.image_shape)
        except ScenarioError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        task = TaskSpec(
            task_id[0],
            _parse_ints(fields[5], lineno),
            _parse_ints(fields[1], lineno),
            transform,
            relabel,
            _parse_ints(fields[2], lineno),
        )
        if not task.indices or any(not 0 <= i < n for i in task.indices):
            raise ParseError(f"line {lineno}: task indices out of range")
        try:
            labels = {task.effective_label(dataset.samples[i].label) for i in task.indices}
        except KeyError:
            raise ParseError(f"line {lineno}: relabel map does not cover the task's labels") from None
        if tuple(sorted(labels)) != task.classes:
            raise ParseError(f"line {lineno}: class list does not match the indexed samples")
        tasks.append(task)

    policy = LabelPolicy(train_flag == "1", test_flag == "1")
    spec = _spec_from_tasks(kind, seed_i, policy, tasks)
    scenario = Scenario(spec, dataset, tuple(tasks))
    if scenario.nb_classes != nb_classes_i:
        raise ParseError(f"header announces {nb_classes_i} classes, tasks cover {scenario.nb_classes}")
    return scenario


def _spec_from_tasks(kind: str, seed: int, policy: LabelPolicy, tasks: list[TaskSpec]) -> ScenarioSpec:
    kwargs: dict = {}
    if kind == "class_incremental":
        kwargs["increments"] = tuple(len(t.classes) for t in tasks)
    elif kind == "instance_incremental":
        kwargs["nb_tasks"] = len(tasks)
    elif kind == "transformation":
        kwargs["transforms"] = tuple(t.transform for t in tasks)
    elif kind == "label_drift":
        kwargs["relabel_maps"] = tuple(t.relabel or {} for t in tasks)
    return replace(ScenarioSpec(kind, seed=seed, label_policy=policy), **kwargs)


def scenario_dataset_path(path: str | os.PathLike) -> str | None:
    """Dataset path recorded in a scenario manifest header, resolved against its directory."""
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n").split("\t")
    if header[0] != SCENARIO_MAGIC or len(header) != 9:
        raise ParseError(f"{os.fspath(path)}: not a scenario manifest")
    ref = header[7]
    if ref == "-":
        return None
    return os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)), ref))


def load_scenario(path: str | os.PathLike, dataset: DatasetManifest | None = None) -> Scenario:
    """Read a scenario manifest, loading its dataset from the recorded path unless given."""
    if dataset is None:
        ref = scenario_dataset_path(path)
        if ref is None:
            raise ParseError("scenario manifest records no dataset path; pass the dataset explicitly")
        dataset = load_manifest(ref)
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ParseError(f"{os.fspath(path)}: not valid UTF-8") from None
    return loads_scenario(text, dataset)
