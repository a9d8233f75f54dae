"""Exception hierarchy shared across the package."""


class LinShadowError(Exception):
    """Base class for all errors raised by linshadow."""


class InputError(LinShadowError):
    """Malformed input: bad file, dimension mismatch, invalid argument."""


class DomainError(LinShadowError):
    """Operation requested outside its mathematical domain (e.g. m < n)."""


class RangeError(LinShadowError):
    """Result not representable: overflow, or a window/horizon too small."""


class SplittingError(LinShadowError):
    """Subspaces fail to span, or the splitting is numerically degenerate."""


class StructuralError(LinShadowError):
    """A structural hypothesis fails mid-computation (singular kernel step)."""
