"""Exception types raised across the package."""


class HusimiFlowError(Exception):
    """Base class for all package errors."""


class WidthConstraintViolated(HusimiFlowError, ValueError):
    pass


class BadAxis(HusimiFlowError, ValueError):
    pass


class GridMismatch(HusimiFlowError, ValueError):
    pass


class ParseError(HusimiFlowError, ValueError):
    """Polynomial text could not be parsed.

    Carries the byte ``offset`` of the offending token and the set of
    tokens that would have been accepted there.
    """

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class RepresentationError(HusimiFlowError, ValueError):
    pass


class CenterOutOfBox(HusimiFlowError, ValueError):
    pass


class UnsupportedLevel(HusimiFlowError, ValueError):
    pass


class KindError(HusimiFlowError, ValueError):
    pass


class LengthMismatch(HusimiFlowError, ValueError):
    pass


class BlowUp(HusimiFlowError, FloatingPointError):
    pass


class BoundaryLeak(HusimiFlowError, RuntimeError):
    pass


class QuadratureNonConvergent(HusimiFlowError, RuntimeError):
    pass


class ParcelEscaped(HusimiFlowError, RuntimeError):
    pass


class MaskDominates(HusimiFlowError, RuntimeError):
    pass


class ConfigError(HusimiFlowError, ValueError):
    """Scenario configuration is invalid; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")
