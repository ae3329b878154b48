# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Mirrors ``_core_python`` operation for operation (same summation order, same
tie-breaking) so results are bit-identical across backends.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t i64

cdef double MIN_GAIN_FACTOR = 1e-10


cdef void _merge_argsort(const double* key, i64* idx, i64* tmp, Py_ssize_t n) noexcept nogil:
    # Bottom-up stable merge sort of idx by key[idx].
    cdef Py_ssize_t width = 1, lo, mid, hi, i, j, k
    cdef i64* a = idx
    cdef i64* b = tmp
    cdef i64* swap
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if key[a[j]] < key[a[i]]:
                    b[k] = a[j]
                    j += 1
                else:
                    b[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                b[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                b[k] = a[j]
                j += 1
                k += 1
            lo += 2 * width
        swap = a
        a = b
        b = swap
        width *= 2
    if a != idx:
        for i in range(n):
            idx[i] = a[i]


def grow_tree(X, y, build_idx, Py_ssize_t min_leaf, Py_ssize_t mtry, keys):
    """Grow one CART regression tree; see ``_core_python.grow_tree``."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:, ::1] kv = np.ascontiguousarray(keys, dtype=np.float64)
    cdef i64[::1] work = np.array(build_idx, dtype=np.int64, copy=True)
    cdef Py_ssize_t d = Xv.shape[1]
    cdef Py_ssize_t max_nodes = kv.shape[0]
    cdef Py_ssize_t n_build = work.shape[0]

    feature_a = np.full(max_nodes, -1, dtype=np.int64)
    threshold_a = np.zeros(max_nodes, dtype=np.float64)
    left_a = np.full(max_nodes, -1, dtype=np.int64)
    right_a = np.full(max_nodes, -1, dtype=np.int64)
    cdef i64[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef i64[::1] left = left_a
    cdef i64[::1] right = right_a

    # FIFO queue of (node, start, end) over slices of ``work``.
    cdef i64[:, ::1] queue = np.empty((max_nodes, 3), dtype=np.int64)
    cdef Py_ssize_t qhead = 0, qtail = 1
    queue[0, 0] = 0
    queue[0, 1] = 0
    queue[0, 2] = n_build

    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t nbuf = n_build if n_build > d else d
    if nbuf < 1:
        nbuf = 1
    cdef i64* order = <i64*> malloc(nbuf * sizeof(i64))
    cdef i64* tmp = <i64*> malloc(nbuf * sizeof(i64))
    cdef i64* fidx = <i64*> malloc(d * sizeof(i64))
    cdef double* xbuf = <double*> malloc(nbuf * sizeof(double))
    cdef double* ybuf = <double*> malloc(nbuf * sizeof(double))
    if order == NULL or tmp == NULL or fidx == NULL or xbuf == NULL or ybuf == NULL:
        free(order); free(tmp); free(fidx); free(xbuf); free(ybuf)
        raise MemoryError()

    cdef Py_ssize_t node, start, end, ns, i, j, c, f, bj, best_f, nleft, pos
    cdef double sumsq, best_gain, tot, cs, nl, nr, sr, gain, bg, best_thr, thr, yi
    cdef double dns
    try:
        while qhead < qtail:
            node = queue[qhead, 0]
            start = queue[qhead, 1]
            end = queue[qhead, 2]
            qhead += 1
            ns = end - start
            if ns < 2 * min_leaf or n_nodes + 2 > max_nodes:
                continue
            dns = <double> ns
            for i in range(ns):
                ybuf[i] = yv[work[start + i]]
            sumsq = 0.0
            for i in range(ns):
                sumsq = sumsq + ybuf[i] * ybuf[i]
            best_gain = MIN_GAIN_FACTOR * sumsq
            best_f = -1
            best_thr = 0.0

            for i in range(d):
                fidx[i] = i
            _merge_argsort(&kv[node, 0], fidx, tmp, d)

            for c in range(mtry):
                f = fidx[c]
                for i in range(ns):
                    xbuf[i] = Xv[work[start + i], f]
                    order[i] = i
                _merge_argsort(xbuf, order, tmp, ns)
                tot = 0.0
                for i in range(ns):
                    tot = tot + ybuf[order[i]]
                bj = -1
                bg = -INFINITY
                cs = 0.0
                for j in range(ns - 1):
                    cs = cs + ybuf[order[j]]
                    nl = <double> (j + 1)
                    nr = dns - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    if not (xbuf[order[j]] < xbuf[order[j + 1]]):
                        continue
                    sr = tot - cs
                    gain = cs * cs / nl + sr * sr / nr - tot * tot / dns
                    if bj < 0 or gain > bg:
                        bj = j
                        bg = gain
                if bj < 0:
                    continue
                if bg > best_gain:
                    best_gain = bg
                    thr = 0.5 * (xbuf[order[bj]] + xbuf[order[bj + 1]])
                    if thr >= xbuf[order[bj + 1]]:
                        thr = xbuf[order[bj]]
                    best_f = f
                    best_thr = thr

            if best_f < 0:
                continue
            # Stable partition of the node slice.
            nleft = 0
            for i in range(ns):
                if Xv[work[start + i], best_f] <= best_thr:
                    nleft += 1
            pos = 0
            j = nleft
            for i in range(ns):
                if Xv[work[start + i], best_f] <= best_thr:
                    tmp[pos] = work[start + i]
                    pos += 1
                else:
                    tmp[j] = work[start + i]
                    j += 1
            for i in range(ns):
                work[start + i] = tmp[i]
            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = n_nodes
            right[node] = n_nodes + 1
            queue[qtail, 0] = n_nodes
            queue[qtail, 1] = start
            queue[qtail, 2] = start + nleft
            queue[qtail + 1, 0] = n_nodes + 1
            queue[qtail + 1, 1] = start + nleft
            queue[qtail + 1, 2] = end
            qtail += 2
            n_nodes += 2
    finally:
        free(order); free(tmp); free(fidx); free(xbuf); free(ybuf)
    return feature_a[:n_nodes], threshold_a[:n_nodes], left_a[:n_nodes], right_a[:n_nodes]


def apply_forest(X, feature, threshold, left, right, offsets):
    """Leaf id (local to each tree) of every row of ``X`` in every tree."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const i64[::1] fv = np.ascontiguousarray(feature, dtype=np.int64)
    cdef const double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const i64[::1] lv = np.ascontiguousarray(left, dtype=np.int64)
    cdef const i64[::1] rv = np.ascontiguousarray(right, dtype=np.int64)
    cdef const i64[::1] ov = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t n_trees = ov.shape[0] - 1
    out_a = np.empty((n_trees, n), dtype=np.int64)
    cdef i64[:, ::1] out = out_a
    cdef Py_ssize_t t, i, base, node, f
    with nogil:
        for t in range(n_trees):
            base = ov[t]
            for i in range(n):
                node = 0
                f = fv[base]
                while f >= 0:
                    if Xv[i, f] <= tv[base + node]:
                        node = lv[base + node]
                    else:
                        node = rv[base + node]
                    f = fv[base + node]
                out[t, i] = node
    return out_a


def forest_weight_matrix(leaf_q, leaf_w, n_nodes):
    """Honest forest weights; see ``_core_python.forest_weight_matrix``."""
    cdef const i64[:, ::1] lq = np.ascontiguousarray(leaf_q, dtype=np.int64)
    cdef const i64[:, ::1] lw = np.ascontiguousarray(leaf_w, dtype=np.int64)
    cdef const i64[::1] nn = np.ascontiguousarray(n_nodes, dtype=np.int64)
    cdef Py_ssize_t n_trees = lq.shape[0], q = lq.shape[1], m = lw.shape[1]
    W_a = np.zeros((q, m), dtype=np.float64)
    used_a = np.zeros(q, dtype=np.int64)
    cdef double[:, ::1] W = W_a
    cdef i64[::1] used = used_a
    cdef Py_ssize_t max_leaves = 1
    cdef Py_ssize_t t, k, j, leaf, s, e
    for t in range(n_trees):
        if nn[t] > max_leaves:
            max_leaves = nn[t]
    cdef i64[::1] counts = np.zeros(max_leaves + 1, dtype=np.int64)
    cdef i64[::1] members = np.zeros(m if m > 0 else 1, dtype=np.int64)
    cdef i64[::1] fill = np.zeros(max_leaves, dtype=np.int64)
    cdef double inv
    with nogil:
        for t in range(n_trees):
            # CSR layout of weighting observations by leaf, in index order.
            for leaf in range(nn[t] + 1):
                counts[leaf] = 0
            for j in range(m):
                if lw[t, j] >= 0:
                    counts[lw[t, j] + 1] += 1
            for leaf in range(nn[t]):
                counts[leaf + 1] += counts[leaf]
                fill[leaf] = counts[leaf]
            for j in range(m):
                leaf = lw[t, j]
                if leaf >= 0:
                    members[fill[leaf]] = j
                    fill[leaf] += 1
            for k in range(q):
                leaf = lq[t, k]
                s = counts[leaf]
                e = counts[leaf + 1]
                if e > s:
                    used[k] += 1
                    inv = 1.0 / <double> (e - s)
                    for j in range(s, e):
                        W[k, members[j]] += inv
        for k in range(q):
            if used[k] > 0:
                for j in range(m):
                    W[k, j] = W[k, j] / <double> used[k]
    return W_a, used_a


def dyadic_leaves(X, coords, box_lo, box_hi, Py_ssize_t depth):
    """Leaf index of each row in each midpoint-bisection tree."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const i64[:, ::1] cv = np.ascontiguousarray(coords, dtype=np.int64)
    cdef const double[::1] lo0 = np.ascontiguousarray(box_lo, dtype=np.float64)
    cdef const double[::1] hi0 = np.ascontiguousarray(box_hi, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], d = Xv.shape[1], n_trees = cv.shape[0]
    out_a = np.empty((n_trees, n), dtype=np.int64)
    cdef i64[:, ::1] out = out_a
    cdef double[::1] lo = np.empty(d, dtype=np.float64)
    cdef double[::1] hi = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t t, i, level, node, c, a
    cdef double mid
    cdef i64 first_leaf = (1 << depth) - 1
    with nogil:
        for t in range(n_trees):
            for i in range(n):
                for a in range(d):
                    lo[a] = lo0[a]
                    hi[a] = hi0[a]
                node = 0
                for level in range(depth):
                    c = cv[t, node]
                    mid = 0.5 * (lo[c] + hi[c])
                    if Xv[i, c] <= mid:
                        hi[c] = mid
                        node = 2 * node + 1
                    else:
                        lo[c] = mid
                        node = 2 * node + 2
                out[t, i] = node - first_leaf
    return out_a
