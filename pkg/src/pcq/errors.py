"""Exception hierarchy. The CLI maps DataError to exit 2 and UsageError to exit 1."""


class PcqError(Exception):
    """Base class for every error raised by pcq."""


class DataError(PcqError, ValueError):
    """Malformed or inconsistent input data."""


class UsageError(PcqError, ValueError):
    """Invalid invocation, option or query text."""


class OutOfBoundsCenterError(DataError):
    def __init__(self, center, width: int, height: int):
        self.center = center
        super().__init__(
            f"Center (class={center.class_index}, x={center.x}, y={center.y}) "
            f"lies outside the {width}x{height} grid"
        )


class EmptyGridError(DataError):
    pass


class DegenerateHistogramError(DataError):
    """No threshold splits the histogram into two non-empty classes."""


class ShapeMismatchError(DataError):
    pass


class PartitionError(DataError):
    pass


class HeatmapFormatError(DataError):
    pass


class CorpusFormatError(DataError):
    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {reason}")


class CorpusMismatchError(DataError):
    pass


class EmptyCorpusError(DataError):
    pass


class EmptyAssignmentError(DataError):
    pass


class PlacementError(DataError):
    pass


class QuerySyntaxError(UsageError):
    pass


class UnknownClassError(UsageError):
    pass
