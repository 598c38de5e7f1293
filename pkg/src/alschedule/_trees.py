"""Exact-split trees compiled with numba.

Targets are 2-D, shape (n, m). With m = 1 this is an ordinary regression
tree; with one-hot class indicators the summed-variance criterion equals
Gini impurity, so the same builder grows classification trees whose leaf
values are class proportions.

Trees are stored as flat node arrays. A forest packs its trees into one set
of arrays plus per-tree root offsets so prediction is a single compiled loop.
"""
from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def presort(X):
    """Stable per-feature argsort, shape (d, n)."""
    n, d = X.shape
    order = np.empty((d, n), dtype=np.int64)
    for j in range(d):
        order[j] = np.argsort(X[:, j], kind="mergesort")
    return order


@njit(cache=True)
def _best_split(XT, Y, w, order, start, end, features, n_try, min_leaf, total, tw):
    # Features are scanned in the given order; past n_try features the scan
    # continues only until some valid split has been seen.
    m = Y.shape[1]
    best_gain = -np.inf
    best_feat = -1
    best_thr = 0.0
    best_pos = -1
    base = 0.0
    for k in range(m):
        base += total[k] * total[k] / tw
    left_sum = np.empty(m)
    inspected = 0
    for fi in range(features.shape[0]):
        if inspected >= n_try and best_feat >= 0:
            break
        j = features[fi]
        inspected += 1
        row = order[j]
        left_sum[:] = 0.0
        n_left = 0.0
        for i in range(start, end - 1):
            r = row[i]
            wr = w[r]
            for k in range(m):
                left_sum[k] += wr * Y[r, k]
            n_left += wr
            n_right = tw - n_left
            if n_left < min_leaf:
                continue
            if n_right < min_leaf:
                break
            xa = XT[j, r]
            xb = XT[j, row[i + 1]]
            if xa >= xb:
                continue
            gain = -base
            for k in range(m):
                rs = total[k] - left_sum[k]
                gain += left_sum[k] * left_sum[k] / n_left + rs * rs / n_right
            if gain > best_gain or (gain == best_gain and j < best_feat):
                best_gain = gain
                best_feat = j
                thr = 0.5 * (xa + xb)
                if thr >= xb:
                    thr = xa
                best_thr = thr
                best_pos = i + 1
    return best_feat, best_thr, best_pos, best_gain


@njit(cache=True)
def build_tree(XT, Y, w, sorted_rows, max_depth, min_leaf, n_try, seed):
    """Grow one tree on rows of (X, Y) weighted by integer counts ``w``.

    ``XT`` is the transposed feature matrix, shape (d, n). ``sorted_rows`` is
    ``presort(X)``; rows with zero weight are skipped, so a bootstrap resample
    is expressed through ``w`` without copying X. ``n_try`` < d enables
    per-node feature sampling. Split ties go to the lowest feature index,
    then the lowest threshold.
    """
    d, n_rows = XT.shape
    m = Y.shape[1]
    np.random.seed(seed)
    n = 0
    for r in range(n_rows):
        if w[r] > 0:
            n += 1
    order = np.empty((d, n), dtype=np.int64)
    for j in range(d):
        k = 0
        for r in sorted_rows[j]:
            if w[r] > 0:
                order[j, k] = r
                k += 1

    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros((cap, m))

    goes_left = np.zeros(n_rows, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)
    all_feats = np.arange(d)
    perm = np.arange(d)
    total = np.empty(m)

    # stack rows: (node, start, end, depth)
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        total[:] = 0.0
        cnt = 0.0
        pure = True
        first = order[0, start]
        for i in range(start, end):
            r = order[0, i]
            for k in range(m):
                total[k] += w[r] * Y[r, k]
                if Y[r, k] != Y[first, k]:
                    pure = False
            cnt += w[r]
        for k in range(m):
            value[node, k] = total[k] / cnt
        if depth >= max_depth or cnt < 2 * min_leaf or pure:
            continue
        if n_try < d:
            # in-place Fisher-Yates; avoids a per-node allocation
            for a in range(d - 1, 0, -1):
                b = np.random.randint(0, a + 1)
                tmp = perm[a]
                perm[a] = perm[b]
                perm[b] = tmp
            feats = perm
        else:
            feats = all_feats
        j, thr, pos, gain = _best_split(XT, Y, w, order, start, end, feats, n_try,
                                        min_leaf, total, cnt)
        if j < 0 or gain <= 1e-12 * cnt:
            continue
        for i in range(start, end):
            r = order[j, i]
            goes_left[r] = XT[j, r] <= thr
        for f in range(d):
            a = start
            b = 0
            for i in range(start, end):
                r = order[f, i]
                if goes_left[r]:
                    order[f, a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for i in range(b):
                order[f, a + i] = buf[i]
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        feature[node] = j
        threshold[node] = thr
        left[node] = lchild
        right[node] = rchild
        stack[top, 0] = rchild
        stack[top, 1] = pos
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lchild
        stack[top, 1] = start
        stack[top, 2] = pos
        stack[top, 3] = depth + 1
        top += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True)
def predict_packed(X, roots, feature, threshold, left, right, value, weights):
    """Weighted sum over trees of each tree's leaf value, shape (n, m)."""
    n = X.shape[0]
    m = value.shape[1]
    out = np.zeros((n, m))
    for t in range(roots.shape[0]):
        root = roots[t]
        wt = weights[t]
        for i in range(n):
            node = root
            while feature[node] != LEAF:
                if X[i, feature[node]] <= threshold[node]:
                    node = root + left[node]
                else:
                    node = root + right[node]
            for k in range(m):
                out[i, k] += wt * value[node, k]
    return out


class PackedTrees:
    """A list of trees flattened into contiguous arrays."""

    def __init__(self, trees, weights):
        sizes = [t[0].shape[0] for t in trees]
        self.roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.feature = np.concatenate([t[0] for t in trees])
        self.threshold = np.concatenate([t[1] for t in trees])
        self.left = np.concatenate([t[2] for t in trees])
        self.right = np.concatenate([t[3] for t in trees])
        self.value = np.concatenate([t[4] for t in trees])
        self.weights = np.asarray(weights, dtype=float)

    def __len__(self):
        return self.roots.shape[0]

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return predict_packed(X, self.roots, self.feature, self.threshold,
                              self.left, self.right, self.value, self.weights)


def grow_forest(X, Y, n_trees, max_depth, min_leaf, n_try, rng, bootstrap=True):
    """Fit ``n_trees`` trees; with ``bootstrap`` each tree sees a resample."""
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float).reshape(len(X), -1)
    n = len(X)
    XT = np.ascontiguousarray(X.T)
    sorted_rows = presort(X)
    trees = []
    ones = np.ones(n)
    for tree_seed in rng.integers(0, 2**31 - 1, size=n_trees):
        if bootstrap:
            w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        else:
            w = ones
        trees.append(build_tree(XT, Y, w, sorted_rows, max_depth, min_leaf, n_try, int(tree_seed)))
    return PackedTrees(trees, np.full(n_trees, 1.0 / n_trees))
