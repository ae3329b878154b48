"""Boundary-corrected kernel estimation of a density jump at zero.

The running variable is a signed scalar; observations with ``g >= 0`` form
the ``+`` side.  Each one-sided density limit uses the linear boundary
kernel ``(alpha1 + alpha2 |u|) K(u)``; the leading curvature bias of the
jump is estimated with the second derivative of the curvature kernel ``L``
and subtracted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateDataError, NumericalError
from .kernels import (
    EPANECHNIKOV,
    boundary_bias_constant,
    boundary_coeffs,
    boundary_variance_constant,
    curvature_correction_constant,
    curvature_kernel_dd,
)

__all__ = [
    "DensityPilot",
    "SidePilot",
    "BandwidthChoice",
    "DensityFoldFit",
    "kde_jump",
    "one_sided_kde",
    "curvature_jump",
    "bias_term",
    "bias_corrected_jump",
    "pilot_side",
    "pilot_estimates",
    "mse_bandwidth_from",
    "mse_bandwidth",
    "one_sided_density",
    "density_contributions",
    "density_multiplier_bootstrap",
    "fit_density_fold",
]

MIN_PILOT_OBS = 30
CURVATURE_FLOOR = 1e-8
PILOT_ORDER = 4
PILOT_MIN_RANK = 20


def _plus(g):
    return np.asarray(g, dtype=float) >= 0.0


def _corrected_kernel(u, coeffs=None):
    coeffs = coeffs or boundary_coeffs()
    return coeffs.corrected_kernel(u)


def one_sided_kde(g, h: float, side: str, n: int | None = None, coeffs=None) -> float:
    """Boundary-corrected density limit of ``g`` at ``0`` from one side.

    ``n`` defaults to ``len(g)``, so the result is the unconditional side
    density rather than the density within the side.
    """
    g = np.asarray(g, dtype=float)
    if h <= 0:
        raise ConfigurationError("bandwidth must be positive")
    n = len(g) if n is None else n
    mask = _plus(g) if side == "+" else ~_plus(g)
    u = g[mask] / h
    return float(np.sum(_corrected_kernel(u, coeffs)) / (n * h))


def kde_jump(gstar, h: float, coeffs=None) -> float:
    """``sum (alpha1 + alpha2|u|) K(u) (2 delta - 1) / (n h)`` with ``u = g/h``."""
    g = np.asarray(gstar, dtype=float)
    if h <= 0:
        raise ConfigurationError("bandwidth must be positive")
    if len(g) == 0:
        raise ConfigurationError("need at least one observation")
    sgn = np.where(_plus(g), 1.0, -1.0)
    return float(np.sum(_corrected_kernel(g / h, coeffs) * sgn) / (len(g) * h))


def curvature_jump(gstar, h: float) -> float:
    """``sum L''(u) (2 delta - 1) / (n h^3)``: jump in the density's curvature."""
    g = np.asarray(gstar, dtype=float)
    if h <= 0:
        raise ConfigurationError("bandwidth must be positive")
    sgn = np.where(_plus(g), 1.0, -1.0)
    return float(np.sum(curvature_kernel_dd(g / h) * sgn) / (len(g) * h**3))


def bias_term(gstar, h: float) -> float:
    """Estimated leading bias of :func:`kde_jump`."""
    return h * h * curvature_correction_constant() * curvature_jump(gstar, h)


def bias_corrected_jump(gstar, h: float, coeffs=None) -> float:
    """Re-centred jump: :func:`kde_jump` minus :func:`bias_term`."""
    return kde_jump(gstar, h, coeffs) - bias_term(gstar, h)


@dataclass(frozen=True)
class SidePilot:
    """Pilot density and curvature at the cutoff from one side."""

    f: float
    f2: float
    h: float


@dataclass(frozen=True)
class DensityPilot:
    plus: SidePilot
    minus: SidePilot

    def f(self, side: str) -> float:
        return self.plus.f if side == "+" else self.minus.f

    def f2(self, side: str) -> float:
        return self.plus.f2 if side == "+" else self.minus.f2


def pilot_side(a, n_total: int, order: int = PILOT_ORDER, window: str = "global") -> SidePilot:
    """Local polynomial fit of a side's distribution function at the cutoff.

    ``a`` holds the distances ``|g|`` of one side's observations.  The
    empirical function ``rank / n_total`` is regressed on ``a`` with
    Epanechnikov weights; the first and third derivatives at zero give the
    density and its second derivative.

    Parameters
    ----------
    order : int
        Polynomial order, at least 3.
    window : {'global', 'rule'}
        ``'global'`` spans the whole side (just beyond ``max |g|``);
        ``'rule'`` uses ``2 SD(|g|) m^(-1/7)`` clamped between the 20th
        smallest distance and the largest.

    Raises
    ------
    DegenerateDataError
        With fewer than 30 observations.
    """
    if order < 3:
        raise ConfigurationError("pilot order must be at least 3")
    a = np.sort(np.abs(np.asarray(a, dtype=float)))
    m = len(a)
    if m < MIN_PILOT_OBS:
        raise DegenerateDataError(f"density pilot needs {MIN_PILOT_OBS} observations, got {m}")
    if a[-1] <= 0:
        raise DegenerateDataError("density pilot: all distances are zero")
    F = np.arange(1, m + 1) / n_total
    if window == "global":
        # Slightly wider than the range so the farthest point keeps weight.
        h = float(a[-1]) * (1.0 + 1.0 / m)
    elif window == "rule":
        h = 2.0 * np.std(a, ddof=1) * m ** (-1.0 / 7.0)
        h = float(np.clip(h, a[min(PILOT_MIN_RANK, m) - 1], a[-1]))
    else:
        raise ConfigurationError(f"unknown pilot window {window!r}")
    w = EPANECHNIKOV(a / h)
    keep = w > 0
    if keep.sum() < order + 1:
        raise DegenerateDataError("density pilot: too few observations in the pilot window")
    t = a[keep] / h
    design = np.vander(t, order + 1, increasing=True)
    sw = np.sqrt(w[keep])
    coef, *_ = np.linalg.lstsq(design * sw[:, None], F[keep] * sw, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise NumericalError("density pilot fit failed")
    f = max(coef[1] / h, 0.0)
    f2 = 6.0 * coef[3] / h**3
    return SidePilot(f=float(f), f2=float(f2), h=h)


def pilot_estimates(g, n_total: int | None = None, order: int = PILOT_ORDER, window: str = "global") -> DensityPilot:
    """Pilot density and curvature on each side of zero; see :func:`pilot_side`."""
    g = np.asarray(g, dtype=float)
    n_total = len(g) if n_total is None else n_total
    plus = _plus(g)
    try:
        p = pilot_side(g[plus], n_total, order, window)
    except DegenerateDataError as exc:
        raise DegenerateDataError(str(exc), side="+") from None
    try:
        q = pilot_side(-g[~plus], n_total, order, window)
    except DegenerateDataError as exc:
        raise DegenerateDataError(str(exc), side="-") from None
    return DensityPilot(plus=p, minus=q)


@dataclass(frozen=True)
class BandwidthChoice:
    """Selected bandwidth; ``flagged`` marks the curvature guard or a clamp."""

    h: float
    h_raw: float
    flagged: bool
    clamped: bool


def mse_bandwidth_from(V: float, B: float) -> float:
    """``(V / B^2)^(1/5)``."""
    assert V > 0, "variance constant must be positive"
    return float((V / (B * B)) ** 0.2)


def mse_bandwidth(pilot: DensityPilot, n: int, h_max: float) -> BandwidthChoice:
    """MSE-optimal bandwidth for the jump, clamped to ``h_max``.

    With ``|B| < 1e-8`` the bandwidth is set to ``h_max`` and flagged.
    """
    V = (pilot.plus.f + pilot.minus.f) * boundary_variance_constant() / n
    if V <= 0:
        # Both pilot densities vanish; fall back to the widest window.
        return BandwidthChoice(h=h_max, h_raw=np.inf, flagged=True, clamped=True)
    B = boundary_bias_constant() * (pilot.plus.f2 - pilot.minus.f2)
    if abs(B) < CURVATURE_FLOOR:
        return BandwidthChoice(h=h_max, h_raw=np.inf, flagged=True, clamped=True)
    h_raw = mse_bandwidth_from(V, B)
    h = min(h_raw, h_max)
    return BandwidthChoice(h=h, h_raw=h_raw, flagged=False, clamped=h < h_raw)


def one_sided_density(g, side: str, pilot: SidePilot | None = None, n: int | None = None) -> float:
    """One-sided density limit of ``g`` at its own MSE-optimal bandwidth."""
    g = np.asarray(g, dtype=float)
    n = len(g) if n is None else n
    mask = _plus(g) if side == "+" else ~_plus(g)
    a = np.abs(g[mask])
    if pilot is None:
        pilot = pilot_side(a, n)
    h_max = float(a.max())
    V = pilot.f * boundary_variance_constant() / n
    B = boundary_bias_constant() * pilot.f2
    if V <= 0 or abs(B) < CURVATURE_FLOOR:
        h = h_max
    else:
        h = min(mse_bandwidth_from(V, B), h_max)
    return one_sided_kde(g, h, side, n)


def density_contributions(gstar, h: float, pilot: DensityPilot, scale: float = 1.0) -> np.ndarray:
    """Per-observation multiplier-bootstrap contributions.

    ``c_i = scale / (n h) [Kc(u) - h f - (L''(u) - h^3 f'') c] (2 delta - 1)``
    with the pilot values of the observation's side, so that
    ``sum_i u_i c_i`` is one bootstrap draw of ``phi_plus - phi_minus``.
    Both subtracted terms are the expectations of the kernel terms they
    follow: ``E[L''(g/h); side] = h^3 f''`` because ``int_0^1 u^2 L'' = 2``
    while the zeroth and first moments of ``L''`` vanish.
    """
    g = np.asarray(gstar, dtype=float)
    n = len(g)
    plus = _plus(g)
    u = g / h
    f = np.where(plus, pilot.plus.f, pilot.minus.f)
    f2 = np.where(plus, pilot.plus.f2, pilot.minus.f2)
    c2 = curvature_correction_constant()
    inner = _corrected_kernel(u) - h * f - (curvature_kernel_dd(u) - h**3 * f2) * c2
    return scale * inner * np.where(plus, 1.0, -1.0) / (n * h)


def density_multiplier_bootstrap(gstar, h: float, pilot: DensityPilot, B: int = 999, weights=None, seed=None):
    """Bootstrap draws ``(phi_plus, phi_minus)`` and the SE of their difference.

    Parameters
    ----------
    weights : ndarray of +-1, shape (n, B), optional
        Multipliers; drawn from ``seed`` when omitted.

    Returns
    -------
    phi : ndarray, shape (B, 2)
    se : float
    """
    g = np.asarray(gstar, dtype=float)
    if weights is None:
        if B < 2:
            raise ConfigurationError("need at least 2 bootstrap replications")
        weights = rademacher(len(g), B, seed)
    weights = np.asarray(weights)
    if weights.shape[1] < 2:
        raise ConfigurationError("need at least 2 bootstrap replications")
    c = density_contributions(g, h, pilot)
    plus = _plus(g)
    phi = np.column_stack([weights[plus].T @ c[plus], -(weights[~plus].T @ c[~plus])])
    se = float(np.std(phi[:, 0] - phi[:, 1], ddof=1))
    return phi, se


def rademacher(n: int, B: int, seed=None) -> np.ndarray:
    """``n x B`` matrix of independent equiprobable +-1 multipliers."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return (2 * rng.integers(0, 2, size=(n, B), dtype=np.int8) - 1).astype(np.int8)


@dataclass(frozen=True)
class DensityFoldFit:
    """Jump estimate on one fold.

    ``jump_bc = jump_raw - bias``; ``contributions`` are the fold's
    bootstrap contributions, already divided by ``n_folds``.
    """

    jump_raw: float
    bias: float
    jump_bc: float
    h: float
    pilot: DensityPilot
    bandwidth: BandwidthChoice
    contributions: np.ndarray
    n_plus: int
    n_minus: int


def fit_density_fold(
    gstar, n_folds: int = 1, h: float | None = None, pilot_order: int = PILOT_ORDER, pilot_window: str = "global"
) -> DensityFoldFit:
    """Pilot, bandwidth, bias-corrected jump and contributions for one fold."""
    g = np.asarray(gstar, dtype=float)
    n = len(g)
    pilot = pilot_estimates(g, None, pilot_order, pilot_window)
    if h is None:
        bw = mse_bandwidth(pilot, n, float(np.abs(g).max()))
    else:
        if h <= 0:
            raise ConfigurationError("bandwidth must be positive")
        bw = BandwidthChoice(h=float(h), h_raw=float(h), flagged=False, clamped=False)
    raw = kde_jump(g, bw.h)
    bias = bias_term(g, bw.h)
    plus = _plus(g)
    return DensityFoldFit(
        jump_raw=raw,
        bias=bias,
        jump_bc=raw - bias,
        h=bw.h,
        pilot=pilot,
        bandwidth=bw,
        contributions=density_contributions(g, bw.h, pilot, 1.0 / n_folds),
        n_plus=int(plus.sum()),
        n_minus=int((~plus).sum()),
    )
