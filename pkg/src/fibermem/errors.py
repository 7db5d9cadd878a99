"""Exception types raised across the package."""


class FibermemError(Exception):
    """Base class for package-specific errors."""


class DegenerateElementError(FibermemError):
    """Element geometry has a non-positive Jacobian at an evaluation point."""


class MembraneIncompatibilityError(FibermemError):
    """3D base material cannot satisfy the membrane stress state.

    Raised when the out-of-plane shear coupling constant is nonzero, in which
    case the transverse shear stress cannot vanish.
    """


class SingularSystemError(FibermemError):
    """Constrained stiffness matrix is singular (unremoved rigid modes)."""

    def __init__(self, message: str, null_mode_count: int | None = None):
        super().__init__(message)
        self.null_mode_count = null_mode_count


class InvalidLoadError(FibermemError):
    """Load is inadmissible, e.g. an edge traction with a normal component."""


class MonotonicityError(FibermemError):
    """Compliance increased within an inner sizing loop at fixed directions."""

    def __init__(self, message: str, iteration: int, before: float, after: float):
        super().__init__(message)
        self.iteration = iteration
        self.before = before
        self.after = after


class ConfigError(FibermemError):
    """Run configuration is malformed or violates an invariant."""

    def __init__(self, message: str, section: str | None = None, key: str | None = None):
        context = ""
        if section is not None:
            context = f"[{section}] " if key is None else f"[{section}] {key}: "
        super().__init__(context + message)
        self.section = section
        self.key = key
