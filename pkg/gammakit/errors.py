"""
Exceptions raised by gammakit.

Everything derives from GammakitError. Errors about bad values also derive
from ValueError, so callers that only know about the standard library can
still catch them.
"""

from __future__ import annotations

from typing import Optional, Sequence


class GammakitError(Exception):
    """
    Base class of all gammakit errors.
    """


class ShapeError(GammakitError, ValueError):
    """
    Grids, layouts or array shapes do not agree.
    """


class SpaceError(GammakitError, ValueError):
    """
    A field is in real space where Fourier space is needed, or vice versa.
    """


class UnsupportedDimensionError(GammakitError, ValueError):
    pass


class ConstraintError(GammakitError, ValueError):
    """
    Input data violates a differential constraint (e.g., a velocity field
    that is not divergence-free).
    """


class DegenerateInputError(GammakitError, ValueError):
    pass


class ConfigError(GammakitError, ValueError):
    """
    A run configuration or a set of solver options could not be parsed or
    validated.
    """


class GfldFormatError(GammakitError, ValueError):
    pass


class PenaltyError(GammakitError, ValueError):
    """
    An operation needs penalty slots that are missing, or cannot keep the
    ones that are there.
    """


class InversionError(GammakitError, ValueError):
    """
    A pointwise matrix could not be inverted.
    """

    def __init__(self, message: str, point: int):
        super().__init__(f"{message} (at grid point {point})")
        self.point = point


class DefinitenessError(GammakitError, ValueError):
    """
    A pointwise matrix that must be positive definite is not.
    """

    def __init__(self, message: str, worst_eigenvalue: float, point: int):
        super().__init__(
            f"{message}: smallest eigenvalue {worst_eigenvalue:.6g} at grid point {point}"
        )
        self.worst_eigenvalue = worst_eigenvalue
        self.point = point


def _format_k(k: Sequence[float]) -> str:
    return "(" + ", ".join(f"{float(x):.6g}" for x in k) + ")"


class SingularSymbolError(GammakitError, ValueError):
    """
    D(ik)^† D(ik) lost rank beyond its structural null space.
    """

    def __init__(self, message: str, k: Optional[Sequence[float]] = None):
        if k is not None:
            message = f"{message} at k = {_format_k(k)}"
        super().__init__(message)
        self.k = None if k is None else tuple(float(x) for x in k)


class SingularReferenceError(GammakitError, ValueError):
    """
    Γ₁ L₀ Γ₁ is not invertible on the range of Γ₁ at some frequency.
    """

    def __init__(self, k: Sequence[float]):
        super().__init__(
            f"reference operator is singular on the range of Γ₁ at k = {_format_k(k)}"
        )
        self.k = tuple(float(x) for x in k)


class InvalidNullTError(GammakitError, ValueError):
    """
    The proposed matrix T does not satisfy Γ₁ T Γ₁ = 0.
    """

    def __init__(self, k: Sequence[float], defect: float):
        super().__init__(
            f"Γ₁ T Γ₁ = 0 fails at k = {_format_k(k)} (defect {defect:.3g})"
        )
        self.k = tuple(float(x) for x in k)
        self.defect = defect


class ResolventError(GammakitError, ValueError):
    """
    I + Γ(k₀)(L − L₀) is singular, so the W-transform is undefined.
    """
