"""Exception hierarchy shared across the toolkit."""


class LoadgenError(Exception):
    """Base class for all toolkit errors."""


class CsvFormatError(LoadgenError):
    """Structurally invalid CSV (bad header, duplicate device names)."""


class CsvParseError(LoadgenError):
    """A cell failed numeric parsing; message carries row/column."""


class InsufficientDataError(LoadgenError):
    """An operation received fewer samples than its minimum."""


class ShapeError(LoadgenError):
    """Array dimensions do not match what the operation requires."""


class InfeasibleKError(LoadgenError):
    """Requested more clusters than there are points."""


class UndefinedSilhouetteError(LoadgenError):
    """Silhouette needs at least two clusters."""


class NoDataError(LoadgenError):
    """An input collection was empty."""


class NoSpikesError(LoadgenError):
    """No samples qualified as spike events."""


class DivergenceError(LoadgenError):
    """Training produced a non-finite loss or gradient."""


class StateError(LoadgenError):
    """Operation invoked out of order (e.g. backward without forward)."""
