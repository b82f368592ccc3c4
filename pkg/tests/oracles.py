"""Brute-force references: flood-fill labelling and exhaustive matching."""

import itertools

import numpy as np


def flood_fill_components(binary):
    """4-connected components by explicit-stack flood fill. Returns (labels, count)."""
    b = np.asarray(binary).astype(bool)
    h, w = b.shape
    out = np.zeros((h, w), dtype=np.int64)
    k = 0
    for sy in range(h):
        for sx in range(w):
            if b[sy, sx] and not out[sy, sx]:
                k += 1
                stack = [(sy, sx)]
                out[sy, sx] = k
                while stack:
                    y, x = stack.pop()
                    for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                        if 0 <= ny < h and 0 <= nx < w and b[ny, nx] and not out[ny, nx]:
                            out[ny, nx] = k
                            stack.append((ny, nx))
    return out, k


def same_partition(a, b):
    """True when two label maps induce the same pixel partition."""
    a, b = np.asarray(a), np.asarray(b)
    if not np.array_equal(a > 0, b > 0):
        return False
    pairs = set(zip(a[a > 0].tolist(), b[b > 0].tolist()))
    return len(pairs) == len({p[0] for p in pairs}) == len({p[1] for p in pairs})


def max_matches(preds, gts, sigmas):
    """Largest number of admissible one-to-one pairs, by enumeration."""
    preds, gts = np.asarray(preds, float).reshape(-1, 2), np.asarray(gts, float).reshape(-1, 2)
    n_p, n_g = len(preds), len(gts)
    ok = [[np.hypot(*(preds[i] - gts[j])) <= sigmas[j] for j in range(n_g)] for i in range(n_p)]
    best = 0
    if n_p <= n_g:
        for perm in itertools.permutations(range(n_g), n_p):
            best = max(best, sum(ok[i][perm[i]] for i in range(n_p)))
    else:
        for perm in itertools.permutations(range(n_p), n_g):
            best = max(best, sum(ok[perm[j]][j] for j in range(n_g)))
    return best
