"""Random partition-forest density estimation on one side of the boundary.

Each tree bisects the enclosing box at coordinate midpoints, a random
coordinate per node, down to a fixed depth.  Cell masses are divided by
*effective* volumes (cell volume times the Monte Carlo fraction of the cell
lying on the requested side), which keeps the estimate consistent at
boundary points of an irregular support.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import floor, log

import numpy as np

from ._backend import core
from .errors import ConfigurationError, DataError, DegenerateDataError
from .forest_regression import _as_seed_sequence
from .geometry import BoundaryGeometry

__all__ = [
    "DensityParams",
    "PartitionForest",
    "depth_rule",
    "enclosing_box",
    "build_partition_forest",
    "rf_density",
    "side_densities",
    "estimate_lambda",
]

_MC_CHUNK = 200_000


@dataclass(frozen=True)
class DensityParams:
    """Partition-forest settings.

    Parameters
    ----------
    num_trees : int
    depth : int, optional
        Tree depth; :func:`depth_rule` of the total sample size by default.
    mc_samples : int
        Uniform draws per cell that straddles the boundary.
    min_volume_fraction : float
        A query climbs to the parent cell while the leaf's effective-volume
        fraction is below this value.  Zero disables climbing.
    box_expand : float
        Relative expansion of the data bounding box.
    """

    num_trees: int = 100
    depth: int | None = None
    mc_samples: int = 1000
    min_volume_fraction: float = 0.25
    box_expand: float = 0.01

    def __post_init__(self):
        if self.num_trees <= 0:
            raise ConfigurationError("num_trees must be positive")
        if self.depth is not None and self.depth <= 0:
            raise ConfigurationError("depth must be positive")
        if self.mc_samples <= 0:
            raise ConfigurationError("mc_samples must be positive")
        if not 0.0 <= self.min_volume_fraction <= 1.0:
            raise ConfigurationError("min_volume_fraction must lie in [0, 1]")
        if self.box_expand < 0:
            raise ConfigurationError("box_expand must be >= 0")


def depth_rule(N: int, d: int) -> int:
    """``floor(d ln N / (1 + d ln 2))``, at least 1."""
    if N < 2:
        raise ConfigurationError("depth rule needs N >= 2")
    return max(1, floor(d * log(N) / (1.0 + d * log(2.0))))


def enclosing_box(X, expand: float = 0.01):
    """Per-coordinate data range widened by ``expand`` times its length."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lo, hi = X.min(axis=0), X.max(axis=0)
    width = hi - lo
    width = np.where(width > 0, width, 1.0)
    return lo - expand * width, hi + expand * width


@dataclass(frozen=True)
class PartitionForest:
    """Fitted partition forest for one side.

    Per-cell arrays are heap-indexed over all ``2**(depth+1) - 1`` nodes of
    each tree, so internal cells carry the sums of their children.

    Attributes
    ----------
    coords : ndarray, shape (T, 2**depth - 1)
        Split coordinate of each internal node.
    mass : ndarray, shape (T, nodes)
        Empirical mass ``D(A)``: share of the side's observations in ``A``.
    volume, eff_volume : ndarray, shape (T, nodes)
        Cell volume and effective (in-support) volume.
    """

    coords: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    depth: int
    mass: np.ndarray
    volume: np.ndarray
    eff_volume: np.ndarray
    side: str
    n_side: int
    n_total: int
    min_volume_fraction: float
    leaf_lo: np.ndarray
    leaf_hi: np.ndarray

    @property
    def num_trees(self) -> int:
        return self.coords.shape[0]

    @property
    def first_leaf(self) -> int:
        return 2**self.depth - 1

    def leaf_mass(self) -> np.ndarray:
        return self.mass[:, self.first_leaf :]

    def leaf_eff_volume(self) -> np.ndarray:
        return self.eff_volume[:, self.first_leaf :]


def _cell_boxes(coords, lo, hi, depth):
    """Heap-indexed cell boxes, shape (T, nodes, d) each."""
    T = coords.shape[0]
    n_nodes = 2 ** (depth + 1) - 1
    d = len(lo)
    los = np.empty((T, n_nodes, d))
    his = np.empty((T, n_nodes, d))
    los[:, 0] = lo
    his[:, 0] = hi
    rows = np.arange(T)[:, None]
    for level in range(depth):
        nodes = np.arange(2**level - 1, 2 ** (level + 1) - 1)
        c = coords[:, nodes]
        plo, phi = los[:, nodes], his[:, nodes]
        mid = 0.5 * (plo[rows, np.arange(len(nodes)), c] + phi[rows, np.arange(len(nodes)), c])
        for child, is_left in ((2 * nodes + 1, True), (2 * nodes + 2, False)):
            clo, chi = plo.copy(), phi.copy()
            if is_left:
                chi[rows, np.arange(len(nodes)), c] = mid
            else:
                clo[rows, np.arange(len(nodes)), c] = mid
            los[:, child] = clo
            his[:, child] = chi
    return los, his


def _side_indicator(boundary: BoundaryGeometry, side: str, X) -> np.ndarray:
    inside = boundary.membership(X)
    return inside if side == "+" else ~inside


def _support_fraction(boundary, side, lo, hi, mc_samples, rng):
    """Fraction of each box ``[lo[k], hi[k]]`` on ``side``: exact 0/1 when decidable."""
    m, d = lo.shape
    center = 0.5 * (lo + hi)
    half_diag = 0.5 * np.sqrt(np.sum((hi - lo) ** 2, axis=1))
    proj = boundary.project(center)
    on_side = _side_indicator(boundary, side, center)
    corners = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
    verts = lo[:, None, :] + corners[None, :, :] * (hi - lo)[:, None, :]
    vert_side = _side_indicator(boundary, side, verts.reshape(-1, d)).reshape(m, -1)
    clear = (np.abs(proj.g) > half_diag) & (vert_side == on_side[:, None]).all(axis=1)
    frac = on_side.astype(float)
    todo = np.flatnonzero(~clear)
    per_chunk = max(1, _MC_CHUNK // mc_samples)
    for s in range(0, len(todo), per_chunk):
        idx = todo[s : s + per_chunk]
        u = rng.random((len(idx), mc_samples, d))
        pts = lo[idx, None, :] + u * (hi - lo)[idx, None, :]
        hits = _side_indicator(boundary, side, pts.reshape(-1, d)).reshape(len(idx), mc_samples)
        frac[idx] = hits.mean(axis=1)
    return frac


def build_partition_forest(
    X_side,
    boundary: BoundaryGeometry,
    side: str,
    box,
    n_total: int,
    params: DensityParams | None = None,
    seed=None,
) -> PartitionForest:
    """Build the partition forest of one side's observations.

    Parameters
    ----------
    X_side : array_like, shape (m, d)
        Observations on ``side``.
    boundary : BoundaryGeometry
        Supplies the side's region through its membership rule.
    side : {'+', '-'}
    box : tuple of arrays
        Enclosing box ``(lo, hi)``; must contain every observation.
    n_total : int
        Sample size of both sides together (sets the depth and the scale).
    """
    params = params or DensityParams()
    if side not in ("+", "-"):
        raise ConfigurationError(f"side must be '+' or '-', got {side!r}")
    X_side = np.atleast_2d(np.asarray(X_side, dtype=float))
    m, d = X_side.shape
    if m < 1:
        raise DegenerateDataError("no observations on this side", side=side)
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    if np.any(X_side < lo) or np.any(X_side > hi):
        raise DataError("enclosing box does not contain every observation")
    depth = params.depth if params.depth is not None else depth_rule(max(n_total, 2), d)

    children = _as_seed_sequence(seed).spawn(params.num_trees)
    rngs = [np.random.default_rng(c) for c in children]
    n_internal = 2**depth - 1
    coords = np.stack([r.integers(0, d, n_internal) for r in rngs]).astype(np.int64)

    los, his = _cell_boxes(coords, lo, hi, depth)
    volume = np.prod(his - los, axis=2)
    first = n_internal
    n_leaves = 2**depth
    leaf_ids = core.dyadic_leaves(X_side, coords, lo, hi, depth)
    counts = np.stack([np.bincount(leaf_ids[t], minlength=n_leaves) for t in range(params.num_trees)])

    eff = np.zeros_like(volume)
    for t, rng in enumerate(rngs):
        frac = _support_fraction(
            boundary, side, los[t, first:], his[t, first:], params.mc_samples, rng
        )
        # A cell holding one of the side's observations meets the side.
        frac = np.where((counts[t] > 0) & (frac == 0), 0.5 / params.mc_samples, frac)
        eff[t, first:] = volume[t, first:] * frac

    mass = np.zeros_like(volume)
    mass[:, first:] = counts / m
    for level in range(depth - 1, -1, -1):
        nodes = np.arange(2**level - 1, 2 ** (level + 1) - 1)
        mass[:, nodes] = mass[:, 2 * nodes + 1] + mass[:, 2 * nodes + 2]
        eff[:, nodes] = eff[:, 2 * nodes + 1] + eff[:, 2 * nodes + 2]

    leaf_lo = np.ascontiguousarray(los[:, first:])
    leaf_hi = np.ascontiguousarray(his[:, first:])
    for arr in (coords, mass, volume, eff, leaf_lo, leaf_hi):
        arr.setflags(write=False)
    return PartitionForest(
        coords=coords,
        box_lo=lo,
        box_hi=hi,
        depth=depth,
        mass=mass,
        volume=volume,
        eff_volume=eff,
        side=side,
        n_side=m,
        n_total=int(n_total),
        min_volume_fraction=params.min_volume_fraction,
        leaf_lo=leaf_lo,
        leaf_hi=leaf_hi,
    )


def rf_density(forest: PartitionForest, x0, directions=None) -> np.ndarray:
    """Side density at ``x0`` (one or many points), scaled by ``n_side / N``.

    A query whose leaf lies mostly off the forest's side is moved, when a
    direction into the side is supplied, to the adjacent leaf across the
    exit face along that direction.  If that leaf is thin as well the query
    climbs to ancestor cells instead.

    Parameters
    ----------
    forest : PartitionForest
    x0 : array_like, shape (d,) or (q, d)
    directions : array_like, shape (q, d), optional
        Unit vectors pointing from each query into the forest's side.

    Raises
    ------
    DataError
        If a query lies outside the enclosing box.
    """
    Xq = np.atleast_2d(np.asarray(x0, dtype=float))
    if np.any(Xq < forest.box_lo) or np.any(Xq > forest.box_hi):
        raise DataError("query point outside the enclosing box")
    leaves = core.dyadic_leaves(Xq, forest.coords, forest.box_lo, forest.box_hi, forest.depth)
    node = leaves + forest.first_leaf
    rows = np.arange(forest.num_trees)[:, None]
    thr = forest.min_volume_fraction

    def thin(nodes):
        return forest.eff_volume[rows, nodes] < thr * forest.volume[rows, nodes]

    if thr > 0 and directions is not None:
        v = np.atleast_2d(np.asarray(directions, dtype=float))
        stepped = _step_across(forest, Xq, v, leaves)
        alt = stepped + forest.first_leaf
        node = np.where(thin(node) & ~thin(alt), alt, node)
    if thr > 0:
        for _ in range(forest.depth):
            t = (node > 0) & thin(node)
            if not t.any():
                break
            node = np.where(t, (node - 1) // 2, node)
    mu = forest.eff_volume[rows, node]
    D = forest.mass[rows, node]
    ratio = np.divide(D, mu, out=np.zeros_like(D), where=mu > 0)
    values = ratio.mean(axis=0) * (forest.n_side / forest.n_total)
    return values if np.ndim(x0) > 1 else values[0]


def _step_across(forest: PartitionForest, Xq, v, leaves):
    """Leaf reached by leaving each query's leaf along ``v``, shape (T, q)."""
    lo = forest.leaf_lo[np.arange(forest.num_trees)[:, None], leaves]
    hi = forest.leaf_hi[np.arange(forest.num_trees)[:, None], leaves]
    x = Xq[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(v > 0, (hi - x) / v, np.where(v < 0, (lo - x) / v, np.inf))
    t_exit = dist.min(axis=2)
    t_exit = np.where(np.isfinite(t_exit), t_exit, 0.0)
    nudge = 1e-9 * float(np.max(forest.box_hi - forest.box_lo))
    pts = x + (t_exit[:, :, None] * (1.0 + 1e-9) + nudge) * v[None, :, :]
    pts = np.clip(pts, forest.box_lo, forest.box_hi)
    out = np.empty_like(leaves)
    for t in range(forest.num_trees):
        out[t] = core.dyadic_leaves(pts[t], forest.coords[t : t + 1], forest.box_lo, forest.box_hi, forest.depth)[0]
    return out


def side_densities(X, delta, boundary: BoundaryGeometry, query_points, params=None, seed=None):
    """Scaled density estimates ``(f_plus, f_minus)`` at the query points."""
    params = params or DensityParams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    delta = np.asarray(delta).astype(bool).ravel()
    query_points = np.atleast_2d(np.asarray(query_points, dtype=float))
    # Held-out boundary points can fall outside the training data's range.
    box = enclosing_box(np.vstack([X, query_points]), params.box_expand)
    normals = boundary.treated_normals(query_points)
    seeds = _as_seed_sequence(seed).spawn(2)
    out = []
    for side, mask, s, sign in (("+", delta, seeds[0], 1.0), ("-", ~delta, seeds[1], -1.0)):
        if not mask.any():
            raise DegenerateDataError("no observations on this side", side=side)
        forest = build_partition_forest(X[mask], boundary, side, box, len(X), params, s)
        out.append(rf_density(forest, query_points, sign * normals))
    return out[0], out[1]


def estimate_lambda(X, delta, boundary: BoundaryGeometry, query_points, params=None, seed=None) -> np.ndarray:
    """Estimated sign of the density jump: 1 where ``f_plus - f_minus >= 0``."""
    fp, fm = side_densities(X, delta, boundary, query_points, params, seed)
    return (fp - fm >= 0).astype(np.int8)
