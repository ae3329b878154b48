"""Kernel functions and their closed-form one-sided moments.

Everything here is polynomial, so every integral used by the estimators is
evaluated exactly rather than by quadrature.  Quadrature is used only in the
test-suite to cross-check these closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

__all__ = [
    "EpanechnikovKernel",
    "EPANECHNIKOV",
    "MomentMatrix",
    "BoundaryCoeffs",
    "epanechnikov",
    "moment_matrix",
    "boundary_coeffs",
    "curvature_kernel",
    "curvature_kernel_dd",
    "curvature_correction_constant",
    "boundary_variance_constant",
    "boundary_bias_constant",
    "local_poly_kernel_constant",
]

MAX_ORDER = 3


def _side_limits(side: str) -> tuple[float, float]:
    if side == "+":
        return 0.0, 1.0
    if side == "-":
        return -1.0, 0.0
    raise ValueError(f"side must be '+' or '-', got {side!r}")


class EpanechnikovKernel:
    """K(u) = 0.75 (1 - u^2) on [-1, 1].

    ``moment`` and ``sq_moment`` give exact integrals of ``u**k K(u)`` and
    ``u**k K(u)**2`` over any sub-interval of the support. Another kernel
    can be dropped in by providing the same three methods.
    """

    name = "epanechnikov"

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)

    def moment(self, k: int, lo: float, hi: float) -> float:
        lo, hi = max(lo, -1.0), min(hi, 1.0)
        if hi <= lo:
            return 0.0
        return 0.75 * (
            (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
            - (hi ** (k + 3) - lo ** (k + 3)) / (k + 3)
        )

    def sq_moment(self, k: int, lo: float, hi: float) -> float:
        lo, hi = max(lo, -1.0), min(hi, 1.0)
        if hi <= lo:
            return 0.0
        # (1 - u^2)^2 = 1 - 2u^2 + u^4
        return 0.5625 * (
            (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
            - 2.0 * (hi ** (k + 3) - lo ** (k + 3)) / (k + 3)
            + (hi ** (k + 5) - lo ** (k + 5)) / (k + 5)
        )


EPANECHNIKOV = EpanechnikovKernel()


def epanechnikov(u):
    """Epanechnikov kernel, vectorised."""
    return EPANECHNIKOV(u)


@dataclass(frozen=True)
class MomentMatrix:
    """One-sided moment matrix ``int r_p(u) r_p(u)' K(u) du``."""

    p: int
    side: str
    entries: np.ndarray

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.entries)


@lru_cache(maxsize=None)
def _moment_entries(p: int, side: str) -> tuple[tuple[float, ...], ...]:
    lo, hi = _side_limits(side)
    return tuple(
        tuple(EPANECHNIKOV.moment(j + k, lo, hi) for k in range(p + 1))
        for j in range(p + 1)
    )


def moment_matrix(p: int, side: str = "+") -> MomentMatrix:
    """Return the one-sided moment matrix of order ``p`` (0 <= p <= 3)."""
    if not isinstance(p, (int, np.integer)) or not 0 <= p <= MAX_ORDER:
        raise ValueError(f"unsupported polynomial order p={p!r}; need 0..{MAX_ORDER}")
    entries = np.array(_moment_entries(int(p), side), dtype=float)
    entries.setflags(write=False)
    return MomentMatrix(p=int(p), side=side, entries=entries)


@dataclass(frozen=True)
class BoundaryCoeffs:
    """Coefficients of the linear boundary kernel ``(alpha1 + alpha2 |u|) K(u)``."""

    alpha1: float
    alpha2: float

    def corrected_kernel(self, u):
        u = np.asarray(u, dtype=float)
        return (self.alpha1 + self.alpha2 * np.abs(u)) * EPANECHNIKOV(u)


@lru_cache(maxsize=1)
def boundary_coeffs() -> BoundaryCoeffs:
    """Solve the 2x2 moment system making the one-sided kernel unbiased at 0."""
    m = moment_matrix(1, "+").entries
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    assert abs(det) > 1e-12, "singular boundary moment system"
    alpha1 = m[1, 1] / det
    alpha2 = -m[1, 0] / det
    return BoundaryCoeffs(alpha1=float(alpha1), alpha2=float(alpha2))


def curvature_kernel(u):
    """L(u) = 30 (1 - |u|)^2 u^2 on [-1, 1]."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    return np.where(a <= 1.0, 30.0 * (1.0 - a) ** 2 * u * u, 0.0)


def curvature_kernel_dd(u):
    """Second derivative of :func:`curvature_kernel` (even in ``u``)."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    return np.where(a <= 1.0, 60.0 - 360.0 * a + 360.0 * a * a, 0.0)


def _poly_times_kernel(coeffs: dict[int, float], lo: float, hi: float, squared=False) -> float:
    moment = EPANECHNIKOV.sq_moment if squared else EPANECHNIKOV.moment
    return sum(c * moment(k, lo, hi) for k, c in coeffs.items())


@lru_cache(maxsize=1)
def curvature_correction_constant() -> float:
    """``int_0^1 u^2 (alpha1 + alpha2 u) K(u) du / 2``."""
    bc = boundary_coeffs()
    return 0.5 * _poly_times_kernel({2: bc.alpha1, 3: bc.alpha2}, 0.0, 1.0)


@lru_cache(maxsize=1)
def boundary_bias_constant() -> float:
    """``int_0^1 u^2 (alpha1 + alpha2 u) K(u) du``.

    Equal to ``int_{-1}^0 u^2 (alpha1 - alpha2 u) K(u) du`` by symmetry.
    """
    return 2.0 * curvature_correction_constant()


@lru_cache(maxsize=1)
def boundary_variance_constant() -> float:
    """``int_0^1 (alpha1 + alpha2 u)^2 K(u)^2 du``."""
    bc = boundary_coeffs()
    a1, a2 = bc.alpha1, bc.alpha2
    return _poly_times_kernel({0: a1 * a1, 1: 2 * a1 * a2, 2: a2 * a2}, 0.0, 1.0, squared=True)


@lru_cache(maxsize=None)
def local_poly_kernel_constant(p: int) -> float:
    """Constant ``C_K(p)`` of the one-sided MSE-optimal local polynomial bandwidth.

    With ``h = C_K(p) * (sigma^2 / (n f m_{p+1}^2))^{1/(2p+3)}`` where
    ``m_{p+1}`` is the (p+1)-th derivative of the regression function at the
    cutoff.
    """
    gamma_inv = moment_matrix(p, "+").inverse
    delta = np.array(
        [[EPANECHNIKOV.sq_moment(j + k, 0.0, 1.0) for k in range(p + 1)] for j in range(p + 1)]
    )
    theta = np.array([EPANECHNIKOV.moment(p + 1 + j, 0.0, 1.0) for j in range(p + 1)])
    var_k = (gamma_inv @ delta @ gamma_inv)[0, 0]
    bias_k = (gamma_inv @ theta)[0]
    fac = factorial(p + 1)
    return float((fac**2 * var_k / (2.0 * (p + 1) * bias_k**2)) ** (1.0 / (2 * p + 3)))
