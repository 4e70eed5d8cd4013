"""Exception types raised across the devkit."""


class DevkitError(Exception):
    """Base class for all devkit errors."""


class PointBehindCamera(DevkitError, ValueError):
    pass


class BoxBehindCamera(DevkitError, ValueError):
    pass


class DegenerateInput(DevkitError, ValueError):
    pass


class FrameMismatch(DevkitError, ValueError):
    pass


class MissingPlane(DevkitError, KeyError):
    pass


class EmptyTruePositives(DevkitError, ValueError):
    pass


class ConfigError(DevkitError, ValueError):
    pass


class ParseError(DevkitError, ValueError):
    """Malformed input text.

    ``line`` and ``column`` are 1-based; ``column`` points at the first
    character of the offending token (0 when the whole line is at fault).
    """

    def __init__(self, line, column, reason):
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"line {line}, column {column}: {reason}")


class MissingSection(ParseError):
    def __init__(self, section, line=0):
        self.section = section
        super().__init__(line, 0, f"missing section {section!r}")
