"""Pure-Python (numpy) implementations of the hot kernels.

These define the reference semantics; ``_core.pyx`` mirrors them operation
for operation so both backends return bit-identical results.
"""

from __future__ import annotations

from collections import deque

import numpy as np

__all__ = ["grow_tree", "apply_forest", "forest_weight_matrix", "dyadic_leaves"]

MIN_GAIN_FACTOR = 1e-10


def _candidate_features(keys_row: np.ndarray, mtry: int) -> np.ndarray:
    return np.argsort(keys_row, kind="stable")[:mtry]


def _best_split(X, y, idx, min_leaf, candidates):
    ns = len(idx)
    ynode = y[idx]
    sumsq = np.cumsum(ynode * ynode)[-1]
    best_gain = MIN_GAIN_FACTOR * sumsq
    best = None
    for f in candidates:
        xv = X[idx, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        cs = np.cumsum(ynode[order])
        tot = cs[ns - 1]
        nl = np.arange(1, ns, dtype=float)
        nr = ns - nl
        sl = cs[:-1]
        sr = tot - sl
        gain = sl * sl / nl + sr * sr / nr - tot * tot / ns
        valid = (nl >= min_leaf) & (nr >= min_leaf) & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best_gain = gain[j]
            thr = 0.5 * (xs[j] + xs[j + 1])
            if thr >= xs[j + 1]:
                thr = xs[j]
            best = (int(f), float(thr))
    return best


def grow_tree(X, y, build_idx, min_leaf, mtry, keys):
    """Grow one CART regression tree by variance reduction.

    Nodes are expanded breadth-first and numbered in creation order.  At node
    ``t`` the candidate coordinates are the ``mtry`` smallest entries of
    ``keys[t]``.  Returns ``(feature, threshold, left, right)``; leaves have
    ``feature == -1``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    build_idx = np.asarray(build_idx, dtype=np.int64)
    max_nodes = keys.shape[0]
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    queue = deque([(0, build_idx)])
    n_nodes = 1
    while queue:
        node, idx = queue.popleft()
        if len(idx) < 2 * min_leaf or n_nodes + 2 > max_nodes:
            continue
        split = _best_split(X, y, idx, min_leaf, _candidate_features(keys[node], mtry))
        if split is None:
            continue
        f, thr = split
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        queue.append((n_nodes, idx[go_left]))
        queue.append((n_nodes + 1, idx[~go_left]))
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes]


def apply_forest(X, feature, threshold, left, right, offsets):
    """Leaf id (local to each tree) of every row of ``X`` in every tree."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = len(X)
    n_trees = len(offsets) - 1
    out = np.empty((n_trees, n), dtype=np.int64)
    rows = np.arange(n)
    for t in range(n_trees):
        base = offsets[t]
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = feature[base + node]
            active = f >= 0
            if not active.any():
                break
            fa = f[active]
            na = node[active]
            go_left = X[rows[active], fa] <= threshold[base + na]
            node[active] = np.where(go_left, left[base + na], right[base + na])
        out[t] = node
    return out


def forest_weight_matrix(leaf_q, leaf_w, n_nodes):
    """Honest forest weights of every weighting observation for every query.

    ``leaf_w[t, j] == -1`` marks observation ``j`` as absent from tree ``t``'s
    weighting sample (or out of scope).  Returns ``(W, used)`` where
    ``used[k]`` counts trees whose query leaf held at least one observation;
    rows of ``W`` with ``used > 0`` sum to one.
    """
    n_trees, q = leaf_q.shape
    m = leaf_w.shape[1]
    W = np.zeros((q, m), dtype=np.float64)
    used = np.zeros(q, dtype=np.int64)
    for t in range(n_trees):
        lw = leaf_w[t]
        present = lw >= 0
        counts = np.bincount(lw[present], minlength=n_nodes[t])
        c = counts[leaf_q[t]]
        hit = c > 0
        used += hit
        inv = np.zeros(q, dtype=np.float64)
        inv[hit] = 1.0 / c[hit]
        match = (leaf_q[t][:, None] == lw[None, :]) & present[None, :]
        W += np.where(match, inv[:, None], 0.0)
    ok = used > 0
    W[ok] /= used[ok, None].astype(np.float64)
    return W, used


def dyadic_leaves(X, coords, box_lo, box_hi, depth):
    """Leaf index of each row of ``X`` in each midpoint-bisection tree.

    ``coords[t]`` lists the split coordinate of every internal node of tree
    ``t`` in heap order; a point on a cut goes to the lower cell.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    n_trees = coords.shape[0]
    out = np.empty((n_trees, n), dtype=np.int64)
    rows = np.arange(n)
    for t in range(n_trees):
        lo = np.broadcast_to(np.asarray(box_lo, dtype=np.float64), (n, d)).copy()
        hi = np.broadcast_to(np.asarray(box_hi, dtype=np.float64), (n, d)).copy()
        node = np.zeros(n, dtype=np.int64)
        for _ in range(depth):
            c = coords[t, node]
            mid = 0.5 * (lo[rows, c] + hi[rows, c])
            go_left = X[rows, c] <= mid
            hi[rows[go_left], c[go_left]] = mid[go_left]
            lo[rows[~go_left], c[~go_left]] = mid[~go_left]
            node = 2 * node + np.where(go_left, 1, 2)
        out[t] = node - (2**depth - 1)
    return out
