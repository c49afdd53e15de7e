"""Exception hierarchy shared by all modules."""


class RigidFluidError(Exception):
    """Base class for every error raised by the package."""


class InputError(RigidFluidError, ValueError):
    """Invalid user-supplied data (densities, laws, scenario values)."""


class GeometryError(RigidFluidError, ValueError):
    """Invalid or infeasible geometry: non-convex curves, overlaps, clearance."""


class NumericError(RigidFluidError, RuntimeError):
    """A numerical procedure failed to converge or is ill-conditioned."""


class TorqueUnreachableError(NumericError):
    """No nonnegative boundary pressure can produce the requested torque."""

    def __init__(self, message="torque unreachable"):
        super().__init__(message)


class ScenarioError(InputError):
    """Scenario file could not be parsed or validated.

    ``field`` names the offending key or token so that callers can point the
    user at it.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")
