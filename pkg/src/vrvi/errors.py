"""Exception hierarchy shared by all vrvi modules."""


class VrviError(Exception):
    """Base class for all library errors."""


class DomainError(VrviError):
    """An input point violates the domain expected by an operation
    (negative simplex coordinate, mass off by more than the tolerance,
    zero denominator inside a divergence, dimension mismatch)."""


class ConfigError(VrviError):
    """A solver or problem configuration is inconsistent (step size above
    the admissible bound, geometry/algorithm mismatch, unknown keys)."""


class NumericError(VrviError):
    """A numeric failure occurred mid-computation (NaN/Inf iterate,
    non-finite dual coordinates)."""


class SupportTooLargeError(VrviError):
    """Exact enumeration over an oracle's support was refused because the
    support exceeds the enumeration bound."""
