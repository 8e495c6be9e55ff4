"""Exception types shared across the package."""


class ChemoStokesError(Exception):
    """Base class for all package errors."""


class ConfigError(ChemoStokesError):
    """Invalid run configuration (bad key, bad range, violated hypothesis)."""


class ExpressionError(ConfigError):
    """Malformed or out-of-grammar coefficient expression."""


class NonConstantPerFace(ChemoStokesError):
    """Robin data varies in space along a boundary face; the closed-form
    homogenizer construction requires per-face constants."""


class NonPositiveLeavingRate(ChemoStokesError):
    """Robin leaving rate a1 must be strictly positive on the boundary."""


class SolverDivergence(ChemoStokesError):
    """A linear solve failed to reach its residual target."""


class CflViolation(ChemoStokesError):
    """Explicit transport step violates the CFL bound."""


class NonFinite(ChemoStokesError):
    """A field picked up NaN or Inf during time stepping."""
