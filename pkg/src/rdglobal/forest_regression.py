"""Honest regression forests and local linear forest (LLF) prediction.

The forest supplies locality weights; the LLF solves a forest-weighted ridge
regression on ``(1, X_i - x0)`` with the intercept unpenalised.  Two one-sided
forests give the boundary treatment-effect sign used for sign normalisation.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, sqrt

import numpy as np

from ._backend import core
from .errors import ConfigurationError, DegenerateDataError, EmptyNeighborhoodError, NumericalError

__all__ = [
    "ForestParams",
    "HonestForest",
    "LlfPrediction",
    "fit_forest",
    "forest_weights",
    "llf_predict",
    "llf_predict_many",
    "boundary_contrast",
    "estimate_gamma",
]

_LAMBDA_FLOOR = 1e-12
_QUERY_CHUNK = 256


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters of the honest forest and the LLF ridge.

    Parameters
    ----------
    num_trees : int
        Number of trees.
    min_leaf : int
        Minimum number of split-building observations per leaf.
    subsample_fraction : float
        Fraction of each tree's permutation used to build splits; the rest
        is the honest weighting half.
    split_try_count : int, optional
        Candidate coordinates per node; ``ceil(sqrt(d))`` when omitted.
    lambda_scale : float
        Ridge penalty as a multiple of the weighted mean variance of the
        running variables in the query's neighbourhood.
    """

    num_trees: int = 200
    min_leaf: int = 5
    subsample_fraction: float = 0.5
    split_try_count: int | None = None
    lambda_scale: float = 0.01

    def __post_init__(self):
        if self.num_trees < 1:
            raise ConfigurationError("num_trees must be >= 1")
        if self.min_leaf < 1:
            raise ConfigurationError("min_leaf must be >= 1")
        if not 0.0 < self.subsample_fraction < 1.0:
            raise ConfigurationError("subsample_fraction must lie in (0, 1)")
        if self.split_try_count is not None and self.split_try_count < 1:
            raise ConfigurationError("split_try_count must be >= 1")
        if self.lambda_scale < 0:
            raise ConfigurationError("lambda_scale must be >= 0")

    def mtry(self, d: int) -> int:
        m = self.split_try_count if self.split_try_count is not None else ceil(sqrt(d))
        return min(int(m), d)


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        # Fresh copy: spawning from the caller's object would advance its counter.
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2**63 - 1)))
    return np.random.SeedSequence(seed)


class HonestForest:
    """Fitted honest forest; immutable after construction.

    Attributes
    ----------
    X, y : ndarray
        Training data.
    feature, threshold, left, right : ndarray
        Flattened node arrays of all trees; tree ``t`` occupies
        ``offsets[t]:offsets[t+1]`` and child ids are local to the tree.
    build_mask : ndarray of bool, shape (num_trees, n)
        ``True`` where observation ``i`` built tree ``t``'s splits; the
        complement is its honest weighting sample.
    train_leaves : ndarray of int, shape (num_trees, n)
        Leaf of every training observation in every tree.
    """

    def __init__(self, X, y, feature, threshold, left, right, offsets, build_mask, params):
        self.X = X
        self.y = y
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.offsets = offsets
        self.n_nodes = np.diff(offsets)
        self.build_mask = build_mask
        self.params = params
        self.train_leaves = self.leaves(X)
        for arr in (X, y, feature, threshold, left, right, offsets, build_mask, self.train_leaves):
            arr.setflags(write=False)

    @property
    def num_trees(self) -> int:
        return len(self.offsets) - 1

    @property
    def n(self) -> int:
        return len(self.X)

    def leaves(self, Xq) -> np.ndarray:
        """Leaf id of each query row in each tree, shape ``(num_trees, q)``."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        return core.apply_forest(Xq, self.feature, self.threshold, self.left, self.right, self.offsets)

    def weight_matrix(self, Xq, scope=None):
        """Forest weights of the in-scope weighting observations.

        Returns ``(W, scope_idx, used)``: ``W[k]`` is a weight vector over
        ``scope_idx`` and ``used[k]`` counts trees that contributed.
        """
        scope_idx = _scope_indices(scope, self.n)
        leaf_w = np.where(self.build_mask[:, scope_idx], -1, self.train_leaves[:, scope_idx])
        W, used = core.forest_weight_matrix(self.leaves(Xq), leaf_w, self.n_nodes)
        return W, scope_idx, used


def _scope_indices(scope, n: int) -> np.ndarray:
    if scope is None:
        return np.arange(n)
    scope = np.asarray(scope)
    if scope.dtype == bool:
        if scope.shape != (n,):
            raise ConfigurationError("boolean scope must have one entry per training row")
        idx = np.flatnonzero(scope)
    else:
        idx = np.asarray(scope, dtype=np.int64)
    if idx.size == 0:
        raise ConfigurationError("scope must be non-empty")
    return idx


def fit_forest(X, Y, params: ForestParams | None = None, seed=None) -> HonestForest:
    """Grow an honest regression forest.

    Each tree permutes the sample; the first ``subsample_fraction`` share
    builds CART variance-reduction splits and the remainder is held out for
    weighting.  Per-tree generators are spawned from ``seed``, so the fit is
    reproducible and independent of evaluation order.

    Raises
    ------
    DegenerateDataError
        If ``n < 2 * min_leaf``.
    """
    params = params or ForestParams()
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    Y = np.ascontiguousarray(np.asarray(Y, dtype=float).ravel())
    n, d = X.shape
    if len(Y) != n:
        raise ConfigurationError("X and Y have different numbers of rows")
    if n < 2 * params.min_leaf:
        raise DegenerateDataError(f"need at least {2 * params.min_leaf} observations, got {n}")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ConfigurationError("X and Y must be finite")

    n_build = min(max(int(params.subsample_fraction * n), 1), n - 1)
    max_nodes = 2 * (n_build // params.min_leaf) + 1
    mtry = params.mtry(d)
    children = _as_seed_sequence(seed).spawn(params.num_trees)

    feats, thrs, lefts, rights = [], [], [], []
    build_mask = np.zeros((params.num_trees, n), dtype=bool)
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        perm = rng.permutation(n)
        build = np.sort(perm[:n_build])
        keys = rng.random((max_nodes, d))
        f, th, lc, rc = core.grow_tree(X, Y, build, params.min_leaf, mtry, keys)
        feats.append(f)
        thrs.append(th)
        lefts.append(lc)
        rights.append(rc)
        build_mask[t, build] = True

    offsets = np.zeros(params.num_trees + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(f) for f in feats])
    return HonestForest(
        X,
        Y,
        np.ascontiguousarray(np.concatenate(feats), dtype=np.int64),
        np.ascontiguousarray(np.concatenate(thrs), dtype=np.float64),
        np.ascontiguousarray(np.concatenate(lefts), dtype=np.int64),
        np.ascontiguousarray(np.concatenate(rights), dtype=np.int64),
        offsets,
        build_mask,
        params,
    )


def forest_weights(forest: HonestForest, x0, scope=None) -> np.ndarray:
    """Weight vector over ``scope`` for a single query point.

    Raises
    ------
    EmptyNeighborhoodError
        If no in-scope weighting observation shares a leaf with ``x0``.
    """
    W, _, used = forest.weight_matrix(np.asarray(x0, dtype=float)[None, :], scope)
    if used[0] == 0:
        raise EmptyNeighborhoodError("empty neighborhood: no in-scope observation shares a leaf with the query")
    return W[0]


@dataclass(frozen=True)
class LlfPrediction:
    """LLF prediction at one point.

    ``effective_weight_count`` is ``1 / sum(w**2)``, the number of
    equally weighted observations carrying the same information.
    """

    value: float
    effective_weight_count: float


def llf_predict_many(forest: HonestForest, Xq, scope=None, lam=None):
    """LLF predictions at many query points.

    Parameters
    ----------
    forest : HonestForest
    Xq : array_like, shape (q, d)
    scope : array_like of int or bool, optional
        Training rows allowed to receive weight.
    lam : float, optional
        Fixed ridge penalty.  By default ``lambda_scale`` times the
        weighted mean variance of the running variables around each query.

    Returns
    -------
    values, effective_counts : ndarray
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    q, d = Xq.shape
    values = np.empty(q)
    eff = np.empty(q)
    for start in range(0, q, _QUERY_CHUNK):
        stop = min(start + _QUERY_CHUNK, q)
        W, idx, used = forest.weight_matrix(Xq[start:stop], scope)
        if (used == 0).any():
            bad = start + int(np.flatnonzero(used == 0)[0])
            raise EmptyNeighborhoodError(f"empty neighborhood at query row {bad}")
        values[start:stop] = _llf_solve(W, forest.X[idx], forest.y[idx], Xq[start:stop], lam, forest.params.lambda_scale)
        eff[start:stop] = 1.0 / np.einsum("ij,ij->i", W, W)
    return values, eff


def _llf_solve(W, Xs, ys, Xq, lam, lambda_scale):
    # Ridge with an unpenalised intercept, solved in weighted-centred
    # coordinates: slopes from the centred normal equations, then the
    # intercept at x0 is ybar + (x0 - xbar)' b.  Algebraically identical to
    # the uncentred system and stable when the neighbourhood is tiny.
    q, d = Xq.shape
    mass = W.sum(axis=1)
    xbar = (W @ Xs) / mass[:, None]
    ybar = (W @ ys) / mass
    C = Xs[None, :, :] - xbar[:, None, :]
    S = np.einsum("km,kmi,kmj->kij", W, C, C) / mass[:, None, None]
    sxy = np.einsum("km,kmi,km->ki", W, C, ys[None, :] - ybar[:, None]) / mass[:, None]
    if lam is None:
        var = np.einsum("kii->k", S) / d
        lam_k = np.maximum(lambda_scale * var, _LAMBDA_FLOOR)
    else:
        if lam < 0:
            raise ConfigurationError("lam must be >= 0")
        lam_k = np.full(q, float(lam))
    idx = np.arange(d)
    S[:, idx, idx] += lam_k[:, None]
    try:
        b = np.linalg.solve(S, sxy[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular local linear forest system; use a positive ridge penalty") from exc
    value = ybar + np.einsum("ki,ki->k", Xq - xbar, b)
    if not np.isfinite(value).all():
        raise NumericalError("non-finite local linear forest prediction")
    return value


def llf_predict(forest: HonestForest, x0, scope=None, lam=None) -> LlfPrediction:
    """LLF prediction at one point; see :func:`llf_predict_many`."""
    v, e = llf_predict_many(forest, np.asarray(x0, dtype=float)[None, :], scope, lam)
    return LlfPrediction(value=float(v[0]), effective_weight_count=float(e[0]))


def boundary_contrast(X, Y, delta, query_points, params: ForestParams | None = None, seed=None) -> np.ndarray:
    """Treated-minus-control LLF prediction at each query point.

    One honest forest is fitted on each side of the boundary and both are
    evaluated at the same points.
    """
    params = params or ForestParams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    delta = np.asarray(delta).astype(bool).ravel()
    seeds = _as_seed_sequence(seed).spawn(2)
    preds = []
    for side, sub_seed, mask in (("+", seeds[0], delta), ("-", seeds[1], ~delta)):
        m = int(mask.sum())
        if m < 2 * params.min_leaf:
            raise DegenerateDataError(
                f"too few observations to fit the forest ({m} < {2 * params.min_leaf})", side=side
            )
        forest = fit_forest(X[mask], Y[mask], params, sub_seed)
        preds.append(llf_predict_many(forest, query_points)[0])
    return preds[0] - preds[1]


def estimate_gamma(X, Y, delta, query_points, params: ForestParams | None = None, seed=None) -> np.ndarray:
    """Estimated sign of the boundary effect: 1 where the contrast is >= 0."""
    return (boundary_contrast(X, Y, delta, query_points, params, seed) >= 0).astype(np.int8)
