"""Local polynomial RD estimation on a signed scalar running variable.

Observations with ``g >= 0`` form the ``+`` side.  Each side is fitted by
Epanechnikov-weighted least squares on ``r_p(g) = (1, g, ..., g^p)``; the
jump at zero is the difference of the intercepts.  Inference uses the
multiplier bootstrap of the order-``q`` fit's influence contributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import ConfigurationError, DegenerateDataError, NumericalError
from .kde_boundary import one_sided_density, pilot_side, rademacher
from .kernels import EPANECHNIKOV, local_poly_kernel_constant, moment_matrix

__all__ = [
    "FoldFit",
    "BootstrapDraws",
    "BandwidthSelection",
    "local_poly_fit",
    "fit_fold",
    "tau_fold",
    "density_at_cutoff",
    "influence_contributions",
    "multiplier_bootstrap",
    "select_bandwidth",
    "ce_rescale_factor",
]

MIN_BANDWIDTH_OBS = 20
_PILOT_ORDER = 4
_CLAMP_PERCENTILE = 5.0


def _g(proj_or_g) -> np.ndarray:
    return np.asarray(getattr(proj_or_g, "g", proj_or_g), dtype=float)


def _side_mask(g: np.ndarray, side: str) -> np.ndarray:
    if side == "+":
        return g >= 0.0
    if side == "-":
        return g < 0.0
    raise ConfigurationError(f"side must be '+' or '-', got {side!r}")


def _wls(g, y, h, p):
    """Scaled-design WLS; returns (coef on r_p(g/h), n_effective)."""
    u = g / h
    w = EPANECHNIKOV(u)
    keep = w > 0
    n_eff = int(keep.sum())
    if n_eff < p + 2:
        raise DegenerateDataError(
            f"degenerate fold side: {n_eff} observations within the bandwidth, need {p + 2}"
        )
    design = np.vander(u[keep], p + 1, increasing=True)
    sw = np.sqrt(w[keep])
    A = design * sw[:, None]
    coef, _, rank, _ = np.linalg.lstsq(A, y[keep] * sw, rcond=None)
    if rank < p + 1 or not np.all(np.isfinite(coef)):
        raise NumericalError("singular local polynomial design")
    return coef, n_eff


def local_poly_fit(proj, yhat, side: str, h: float, p: int = 1) -> np.ndarray:
    """Coefficients on ``r_p(g)`` of the one-sided kernel-weighted fit.

    Raises
    ------
    DegenerateDataError
        Fewer than ``p + 2`` side observations with ``|g| <= h``.
    """
    if h <= 0:
        raise ConfigurationError("bandwidth must be positive")
    g = _g(proj)
    y = np.asarray(yhat, dtype=float)
    mask = _side_mask(g, side)
    coef, _ = _wls(g[mask], y[mask], h, p)
    return coef / h ** np.arange(p + 1)


@dataclass(frozen=True)
class FoldFit:
    """Two one-sided fits of order ``p`` and their intercept difference."""

    beta_plus: np.ndarray
    beta_minus: np.ndarray
    h_plus: float
    h_minus: float
    p: int
    tau: float
    n_effective_plus: int
    n_effective_minus: int

    def beta(self, side: str) -> np.ndarray:
        return self.beta_plus if side == "+" else self.beta_minus

    def h(self, side: str) -> float:
        return self.h_plus if side == "+" else self.h_minus


def fit_fold(proj, yhat, h_plus: float, h_minus: float | None = None, p: int = 1) -> FoldFit:
    """Fit both sides; ``h_minus`` defaults to ``h_plus``."""
    h_minus = h_plus if h_minus is None else h_minus
    if h_plus <= 0 or h_minus <= 0:
        raise ConfigurationError("bandwidths must be positive")
    g = _g(proj)
    y = np.asarray(yhat, dtype=float)
    out = {}
    for side, h in (("+", h_plus), ("-", h_minus)):
        mask = _side_mask(g, side)
        try:
            coef, n_eff = _wls(g[mask], y[mask], h, p)
        except DegenerateDataError as exc:
            raise DegenerateDataError(str(exc), side=side) from None
        out[side] = (coef / h ** np.arange(p + 1), n_eff)
    bp, np_ = out["+"]
    bm, nm = out["-"]
    return FoldFit(
        beta_plus=bp,
        beta_minus=bm,
        h_plus=float(h_plus),
        h_minus=float(h_minus),
        p=p,
        tau=float(bp[0] - bm[0]),
        n_effective_plus=np_,
        n_effective_minus=nm,
    )


def tau_fold(proj, yhat, h_plus: float, h_minus: float | None = None, p: int = 1) -> float:
    """Intercept jump ``e1'(beta_plus - beta_minus)``."""
    return fit_fold(proj, yhat, h_plus, h_minus, p).tau


def density_at_cutoff(proj) -> float:
    """Density of ``g`` at zero: mean of the two boundary-corrected one-sided limits."""
    g = _g(proj)
    vals = []
    for side in ("+", "-"):
        try:
            vals.append(one_sided_density(g, side))
        except DegenerateDataError as exc:
            raise DegenerateDataError(str(exc), side=side) from None
    return 0.5 * (vals[0] + vals[1])


def influence_contributions(proj, yhat, fit_q: FoldFit, fhat_g0: float, n: int | None = None, scale: float = 1.0):
    """Per-observation bootstrap contributions of the order-``q`` fit.

    Returns ``(psi_plus, psi_minus)`` with
    ``psi_i = e1' Gamma_q^{-1} r_q(g_i/h) K(g_i/h) delta_i
    (yhat_i - r_q(g_i)' beta_q) / (n h fhat)`` for each side, times
    ``scale``.  One bootstrap draw is ``sum_i u_i (psi_plus_i - psi_minus_i)``.
    """
    if fhat_g0 <= 0:
        raise ConfigurationError("density at the cutoff must be positive")
    g = _g(proj)
    y = np.asarray(yhat, dtype=float)
    n = len(g) if n is None else n
    q = fit_q.p
    out = []
    for side in ("+", "-"):
        h = fit_q.h(side)
        sel = moment_matrix(q, side).inverse[0]
        mask = _side_mask(g, side)
        u = g / h
        k = np.where(mask, EPANECHNIKOV(u), 0.0)
        r_u = np.vander(u, q + 1, increasing=True)
        resid = y - np.vander(g, q + 1, increasing=True) @ fit_q.beta(side)
        out.append(scale * (r_u @ sel) * k * resid / (n * h * fhat_g0))
    return out[0], out[1]


@dataclass(frozen=True)
class BootstrapDraws:
    """Multiplier draws ``phi[:, 0] = phi_plus`` and ``phi[:, 1] = phi_minus``."""

    phi: np.ndarray
    weights: np.ndarray

    @property
    def se(self) -> float:
        return float(np.std(self.phi[:, 0] - self.phi[:, 1], ddof=1))


def multiplier_bootstrap(proj, yhat, fit_q: FoldFit, fhat_g0: float, B: int = 999, weights=None, seed=None):
    """Multiplier bootstrap of the order-``q`` jump.

    Returns
    -------
    draws : BootstrapDraws
    se : float
        Sample SD over bootstrap draws of ``phi_plus - phi_minus``.
    """
    g = _g(proj)
    if weights is None:
        if B < 2:
            raise ConfigurationError("need at least 2 bootstrap replications")
        weights = rademacher(len(g), B, seed)
    weights = np.asarray(weights)
    if weights.ndim != 2 or weights.shape[0] != len(g) or weights.shape[1] < 2:
        raise ConfigurationError("weights must have shape (n, B) with B >= 2")
    psi_p, psi_m = influence_contributions(g, yhat, fit_q, fhat_g0)
    phi = np.column_stack([weights.T @ psi_p, weights.T @ psi_m])
    draws = BootstrapDraws(phi=phi, weights=weights)
    return draws, draws.se


def ce_rescale_factor(n: int, p: int = 1) -> float:
    """``n^(-p / ((3 + p)(3 + 2p)))``: MSE-to-coverage-error bandwidth factor."""
    return float(n ** (-p / ((3 + p) * (3 + 2 * p))))


@dataclass(frozen=True)
class BandwidthSelection:
    """Plug-in bandwidth with its ingredients.

    ``flagged`` is set when the curvature estimate is exactly zero and the
    bandwidth falls back to the upper clamp.
    """

    h: float
    h_mse: float
    curvature: float
    sigma2: float
    density: float
    lower: float
    upper: float
    flagged: bool


def select_bandwidth(proj, yhat, side: str, p: int = 1, n: int | None = None, density: float | None = None):
    """Plug-in coverage-error bandwidth for the ``side`` fit of order ``p``.

    A global quartic fit on the side supplies the ``(p+1)``-th derivative
    of the regression function at zero and the residual variance.  Then
    ``h_mse = C_K(p) (sigma2 / (n m^2 f))^(1/(2p+3))`` and
    ``h = h_mse n^(-p/((3+p)(3+2p)))``, clamped between the 5th percentile
    and the maximum of ``|g|`` on the side.

    Parameters
    ----------
    n : int, optional
        Sample size that normalises the density; ``len(g)`` by default.
    density : float, optional
        One-sided density of ``g`` at zero; estimated when omitted.
    """
    g = _g(proj)
    y = np.asarray(yhat, dtype=float)
    n = len(g) if n is None else n
    mask = _side_mask(g, side)
    gs, ys = g[mask], y[mask]
    m = len(gs)
    if m < MIN_BANDWIDTH_OBS:
        raise DegenerateDataError(
            f"bandwidth selection needs {MIN_BANDWIDTH_OBS} observations, got {m}", side=side
        )
    a = np.abs(gs)
    lower = float(np.percentile(a, _CLAMP_PERCENTILE))
    upper = float(a.max())
    if upper <= 0:
        raise DegenerateDataError("all running-variable values on the side are zero", side=side)
    # Scale by the side range for conditioning; derivatives are rescaled below.
    design = np.vander(gs / upper, _PILOT_ORDER + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    resid = ys - design @ coef
    sigma2 = float(resid @ resid / max(m - (_PILOT_ORDER + 1), 1))
    curvature = float(factorial(p + 1) * coef[p + 1] / upper ** (p + 1))
    if density is None:
        density = one_sided_density(g, side, pilot_side(a, n), n)
    flagged = curvature == 0.0 or density <= 0.0 or sigma2 <= 0.0
    if flagged:
        h_mse = np.inf
        h = upper
    else:
        h_mse = local_poly_kernel_constant(p) * (sigma2 / (n * curvature**2 * density)) ** (1.0 / (2 * p + 3))
        h = float(np.clip(h_mse * ce_rescale_factor(n, p), lower, upper))
    return BandwidthSelection(
        h=float(h),
        h_mse=float(h_mse),
        curvature=curvature,
        sigma2=sigma2,
        density=float(density),
        lower=lower,
        upper=upper,
        flagged=bool(flagged),
    )
