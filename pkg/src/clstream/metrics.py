"""Continual-learning metrics computed from logged predictions.

After training step ``i`` the learner is evaluated on the test data of every
task seen so far; ``R[i][j]`` is the accuracy on task ``j`` at that point.
From ``R`` (``T`` closed steps, ``A_t = mean_j<=t R[t][j]``):

* last accuracy                ``A_{T-1}``
* average incremental accuracy ``mean_t A_t``
* backward transfer            ``mean_{i<T-1} (R[T-1][i] - R[i][i])``
* remembering                  ``1 - |min(0, BWT)|``
* positive backward transfer   ``max(0, BWT)``
* model size efficiency        ``min(1, mean_t size_0 / size_t)``

Online cumulative performance is the accuracy over every prediction made on
incoming training batches, pooled across steps.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .dataset import split_lines
from .errors import (
    InsufficientTasks,
    InvalidRecord,
    MissingModelSize,
    MissingTaskEvaluation,
    NoOnlineRecords,
    NonPositiveModelSize,
    NoStepsClosed,
    OutOfOrderStep,
    ParseError,
    ScenarioError,
    StepAlreadyClosed,
)

LOG_MAGIC = "#clstream-predictions/1"


@dataclass(frozen=True)
class PredictionRecord:
    step: int
    sample_id: int
    y_true: int
    y_pred: int
    task_id: int
    online: bool = False

    @property
    def correct(self) -> bool:
        return self.y_true == self.y_pred


@dataclass(frozen=True)
class AccuracyMatrix:
    """Lower-triangular accuracies; ``rows[i]`` has ``i + 1`` entries."""

    rows: tuple[tuple[float, ...], ...]

    @property
    def nb_steps(self) -> int:
        return len(self.rows)

    def __getitem__(self, key: tuple[int, int]) -> float:
        i, j = key
        if not 0 <= j <= i < len(self.rows):
            raise KeyError(f"R[{i}][{j}] is undefined")
        return self.rows[i][j]

    def step_accuracy(self, i: int) -> float:
        row = self.rows[i]
        return sum(row) / len(row)

    def tolist(self) -> list[list[float]]:
        return [list(r) for r in self.rows]


@dataclass
class Logger:
    """Accumulates per-step evaluations and reports the metrics above.

    ``add_step`` closes one training step with its test-set predictions;
    ``add_online_batch`` records predictions made on training batches during
    the step that is still open.
    """

    records: list[PredictionRecord] = field(default_factory=list)
    model_sizes: list[int | None] = field(default_factory=list)
    current_step: int = 0

    def add_step(self, predictions: Iterable[PredictionRecord], model_size: int | None = None) -> None:
        preds = list(predictions)
        t = self.current_step
        if model_size is not None and (isinstance(model_size, bool) or model_size <= 0):
            raise NonPositiveModelSize(f"model size must be positive, got {model_size!r}")
        for r in preds:
            if r.online:
                raise InvalidRecord("add_step takes offline (post-step evaluation) records")
            if r.step != t:
                raise OutOfOrderStep(f"record tagged with step {r.step} while closing step {t}")
            if not 0 <= r.task_id <= t:
                raise InvalidRecord(f"task id {r.task_id} is not a task seen by step {t}")
        covered = {r.task_id for r in preds}
        missing = [j for j in range(t + 1) if j not in covered]
        if missing:
            raise MissingTaskEvaluation(f"step {t} has no evaluation records for tasks {missing}")
        self.records.extend(preds)
        self.model_sizes.append(model_size)
        self.current_step += 1

    def log_step(
        self,
        predictions: Sequence[int],
        labels: Sequence[int],
        task_ids: Sequence[int],
        model_size: int | None = None,
    ) -> None:
        """Array form of :meth:`add_step`; sample ids are the positions."""
        if not len(predictions) == len(labels) == len(task_ids):
            raise InvalidRecord("predictions, labels and task_ids differ in length")
        step = self.current_step
        self.add_step(
            (
                PredictionRecord(step, i, int(y), int(p), int(t))
                for i, (p, y, t) in enumerate(zip(predictions, labels, task_ids))
            ),
            model_size,
        )

    def add_online_batch(self, batch: Iterable[PredictionRecord]) -> None:
        batch = list(batch)
        for r in batch:
            if not r.online:
                raise InvalidRecord("add_online_batch takes online records")
            if r.step < self.current_step:
                raise StepAlreadyClosed(f"step {r.step} is already closed")
            if r.step > self.current_step:
                raise OutOfOrderStep(f"record tagged with future step {r.step}")
        self.records.extend(batch)

    @property
    def nb_steps(self) -> int:
        return self.current_step

    def _require_steps(self, minimum: int = 1) -> None:
        if self.current_step == 0:
            raise NoStepsClosed("no training step has been closed yet")
        if self.current_step < minimum:
            raise InsufficientTasks(f"needs at least {minimum} closed steps, have {self.current_step}")

    def accuracy_matrix(self) -> AccuracyMatrix:
        self._require_steps()
        T = self.current_step
        correct = [[0] * (i + 1) for i in range(T)]
        total = [[0] * (i + 1) for i in range(T)]
        for r in self.records:
            if r.online:
                continue
            total[r.step][r.task_id] += 1
            correct[r.step][r.task_id] += r.correct
        return AccuracyMatrix(
            tuple(tuple(c / n for c, n in zip(cs, ns)) for cs, ns in zip(correct, total))
        )

    @property
    def accuracy(self) -> float:
        return self.last_accuracy

    @property
    def last_accuracy(self) -> float:
        R = self.accuracy_matrix()
        return R.step_accuracy(R.nb_steps - 1)

    @property
    def average_incremental_accuracy(self) -> float:
        R = self.accuracy_matrix()
        return sum(R.step_accuracy(i) for i in range(R.nb_steps)) / R.nb_steps

    @property
    def backward_transfer(self) -> float:
        self._require_steps(2)
        R = self.accuracy_matrix()
        last = R.nb_steps - 1
        return sum(R[last, i] - R[i, i] for i in range(last)) / last

    @property
    def remembering(self) -> float:
        return min(1.0, max(0.0, 1.0 - abs(min(0.0, self.backward_transfer))))

    @property
    def positive_backward_transfer(self) -> float:
        return max(0.0, self.backward_transfer)

    @property
    def online_cumulative_performance(self) -> float:
        online = [r for r in self.records if r.online]
        if not online:
            raise NoOnlineRecords("no online predictions were logged")
        return sum(r.correct for r in online) / len(online)

    @property
    def model_size_efficiency(self) -> float:
        self._require_steps()
        if any(s is None for s in self.model_sizes):
            raise MissingModelSize("some closed steps were logged without a model size")
        first = self.model_sizes[0]
        return min(1.0, sum(first / s for s in self.model_sizes) / len(self.model_sizes))


# free-function forms
def add_step(state: Logger, predictions: Iterable[PredictionRecord], model_size: int | None = None) -> Logger:
    state.add_step(predictions, model_size)
    return state


def add_online_batch(state: Logger, batch: Iterable[PredictionRecord]) -> Logger:
    state.add_online_batch(batch)
    return state


def accuracy_matrix(state: Logger) -> AccuracyMatrix:
    return state.accuracy_matrix()


def last_accuracy(state: Logger) -> float:
    return state.last_accuracy


def average_incremental_accuracy(state: Logger) -> float:
    return state.average_incremental_accuracy


def backward_transfer(state: Logger) -> float:
    return state.backward_transfer


def remembering(state: Logger) -> float:
    return state.remembering


def positive_backward_transfer(state: Logger) -> float:
    return state.positive_backward_transfer


def online_cumulative_performance(state: Logger) -> float:
    return state.online_cumulative_performance


def model_size_efficiency(state: Logger) -> float:
    return state.model_size_efficiency


REPORT_METRICS: tuple[tuple[str, Callable[[Logger], float]], ...] = (
    ("last_accuracy", last_accuracy),
    ("average_incremental_accuracy", average_incremental_accuracy),
    ("backward_transfer", backward_transfer),
    ("remembering", remembering),
    ("positive_backward_transfer", positive_backward_transfer),
    ("online_cumulative_performance", online_cumulative_performance),
    ("model_size_efficiency", model_size_efficiency),
)


def _fmt(value: float) -> str:
    text = f"{value:.6f}"
    return "0.000000" if text == "-0.000000" else text


def report(state: Logger) -> str:
    """Flat ``key value`` report; metrics whose preconditions fail read ``n/a``."""
    lines = [f"nb_steps {state.nb_steps}"]
    for name, fn in REPORT_METRICS:
        try:
            value = _fmt(fn(state))
        except ScenarioError:
            value = "n/a"
        lines.append(f"{name} {value}")
    return "\n".join(lines) + "\n"


# -- prediction log files --------------------------------------------------
#
#   #clstream-predictions/1                       (optional header)
#   step  sample_id  y_true  y_pred  task_id  online_flag
#   model_size  step  size
#
# Fields are separated by tabs or commas; online_flag is 0 or 1.


@dataclass
class PredictionLog:
    records: list[PredictionRecord]
    model_sizes: dict[int, int]


def loads_prediction_log(text: str) -> PredictionLog:
    records = []
    sizes: dict[int, int] = {}
    for lineno, line in enumerate(split_lines(text), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.replace(",", "\t").split("\t")]
        try:
            if fields[0] == "model_size":
                if len(fields) != 3:
                    raise ValueError
                step, size = int(fields[1]), int(fields[2])
                if step in sizes:
                    raise ParseError(f"line {lineno}: duplicate model size for step {step}")
                sizes[step] = size
                continue
            if len(fields) != 6 or fields[5] not in ("0", "1"):
                raise ValueError
            step, sid, y_true, y_pred, task = (int(f) for f in fields[:5])
        except ValueError:
            raise ParseError(f"line {lineno}: malformed prediction record") from None
        if step < 0 or sid < 0 or y_true < 0 or y_pred < 0:
            raise ParseError(f"line {lineno}: negative step, id or class")
        records.append(PredictionRecord(step, sid, y_true, y_pred, task, fields[5] == "1"))
    return PredictionLog(records, sizes)


def load_prediction_log(path: str | os.PathLike) -> PredictionLog:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return loads_prediction_log(raw.decode("utf-8"))
    except UnicodeDecodeError:
        raise ParseError(f"{os.fspath(path)}: not valid UTF-8") from None


def dumps_prediction_log(records: Iterable[PredictionRecord], model_sizes: dict[int, int] | None = None) -> str:
    lines = [LOG_MAGIC]
    for r in records:
        lines.append(f"{r.step}\t{r.sample_id}\t{r.y_true}\t{r.y_pred}\t{r.task_id}\t{int(r.online)}")
    for step, size in sorted((model_sizes or {}).items()):
        lines.append(f"model_size\t{step}\t{size}")
    return "\n".join(lines) + "\n"


def logger_from_log(log: PredictionLog) -> Logger:
    """Replay a prediction log step by step into a fresh :class:`Logger`.

    Offline steps must be numbered ``0..T-1``; online records may also belong
    to the step after the last closed one (a step still in progress).
    """
    offline: dict[int, list[PredictionRecord]] = {}
    online: dict[int, list[PredictionRecord]] = {}
    for r in log.records:
        (online if r.online else offline).setdefault(r.step, []).append(r)
    T = len(offline)
    if sorted(offline) != list(range(T)):
        raise OutOfOrderStep(f"offline steps {sorted(offline)} are not numbered 0..{T - 1}")
    stray = [s for s in online if s > T]
    if stray:
        raise OutOfOrderStep(f"online records for steps {stray} beyond the last open step {T}")
    unknown = [s for s in log.model_sizes if s >= T]
    if unknown:
        raise OutOfOrderStep(f"model sizes given for unclosed steps {unknown}")

    logger = Logger()
    for step in range(T):
        logger.add_online_batch(online.get(step, []))
        logger.add_step(offline[step], log.model_sizes.get(step))
    logger.add_online_batch(online.get(T, []))
    return logger
