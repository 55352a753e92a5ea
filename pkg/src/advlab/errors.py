"""Exception hierarchy shared across the toolkit."""


class AdvlabError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(AdvlabError, ValueError):
    """Shapes of operands are incompatible for the requested operation."""


class ContractError(AdvlabError, ValueError):
    """A documented precondition of an operation was violated by the caller."""


class NumericError(AdvlabError, ArithmeticError):
    """A computation produced non-finite values (NaN/Inf)."""


class TrainingDivergedError(NumericError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class CheckpointError(AdvlabError):
    """Base for checkpoint (de)serialization failures."""


class CheckpointParseError(CheckpointError):
    """Checkpoint bytes are malformed; carries the failing byte offset."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class CheckpointVersionError(CheckpointError):
    """Checkpoint magic or format version is not one we can read."""


class HierarchyError(AdvlabError):
    """Base for hierarchy-file problems."""


class HierarchyStructureError(HierarchyError):
    """Node table does not form a valid tree (duplicate identity, empty node, ...)."""


class HierarchyConflictError(HierarchyError):
    """A class index appears in two sibling subtrees."""


class HierarchyRangeError(HierarchyError):
    """A class index lies outside [0, num_classes)."""


class ZooNotDistinctError(AdvlabError):
    """Two models in the zoo agree on every probe input; transfer study aborted."""


class LogParseError(AdvlabError):
    """A prediction-log row is malformed; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class LogConsistencyError(LogParseError):
    """A prediction-log row violates a record invariant."""
