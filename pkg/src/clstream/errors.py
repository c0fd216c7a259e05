"""Exception hierarchy.

Every engine failure is a subclass of :class:`ScenarioError`; the class name is
the stable identifier printed by the CLI, so scripts can match on it.
"""

from __future__ import annotations


class ScenarioError(Exception):
    """Base class for all user/input errors raised by clstream."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class InvalidSpec(ScenarioError, ValueError):
    """A configuration value object failed validation."""


# dataset-core
class ParseError(ScenarioError, ValueError):
    pass


class DuplicateId(ScenarioError, ValueError):
    pass


class EmptyDataset(ScenarioError, ValueError):
    pass


class MixedRefKinds(ScenarioError, ValueError):
    pass


class DimensionMismatch(ScenarioError, ValueError):
    pass


class EmptyList(ScenarioError, ValueError):
    pass


class SplitMismatch(ScenarioError, ValueError):
    pass


class UnknownClass(ScenarioError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class DatasetMismatch(ScenarioError, ValueError):
    """A scenario manifest refers to a dataset whose content has changed."""


# scenario-engine
class UnevenIncrement(ScenarioError, ValueError):
    pass


class IncrementSumMismatch(ScenarioError, ValueError):
    pass


class TooManyTasks(ScenarioError, ValueError):
    pass


class MissingMetadata(ScenarioError, ValueError):
    pass


class ClassCoverageMismatch(ScenarioError, ValueError):
    """A metadata group of an instance-incremental scenario lacks some class."""


class EmptyTransformList(ScenarioError, ValueError):
    pass


class MissingImageShape(ScenarioError, ValueError):
    pass


class RefKindUnsupported(ScenarioError, TypeError):
    pass


class PartialRelabelMap(ScenarioError, ValueError):
    pass


class EmptyMapList(ScenarioError, ValueError):
    pass


class TaskIndexOutOfRange(ScenarioError, IndexError):
    pass


# taskset
class IndexOutOfRange(ScenarioError, IndexError):
    pass


# transforms
class NotInvertible(ScenarioError, ValueError):
    pass


# metrics
class InvalidRecord(ScenarioError, ValueError):
    pass


class MissingTaskEvaluation(ScenarioError, ValueError):
    pass


class NonPositiveModelSize(ScenarioError, ValueError):
    pass


class OutOfOrderStep(ScenarioError, ValueError):
    pass


class StepAlreadyClosed(ScenarioError, ValueError):
    pass


class NoStepsClosed(ScenarioError, ValueError):
    pass


class InsufficientTasks(ScenarioError, ValueError):
    pass


class NoOnlineRecords(ScenarioError, ValueError):
    pass


class MissingModelSize(ScenarioError, ValueError):
    """Some closed step was logged without a model size."""
