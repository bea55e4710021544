"""Dense O(n^2) reference implementations used as independent oracles."""
import itertools

import numpy as np


def dense_block_sums(A, e, k):
    n = A.shape[0]
    B = np.zeros((n, k), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if A[i, j]:
                B[i, e[j]] += 1
    return B


def dense_block_edge_counts(A, e, k):
    n = A.shape[0]
    O = np.zeros((k, k), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            O[e[i], e[j]] += A[i, j]
    sizes = [int(np.sum(e == a)) for a in range(k)]
    npairs = np.array([[sizes[a] * (sizes[b] - (a == b)) for b in range(k)] for a in range(k)])
    return O, npairs


def dense_confusion(e, c, k):
    R = np.zeros((k, k))
    for x, y in zip(e, c):
        R[x, y] += 1
    return R / len(e)


def dense_two_paths(A):
    return (A @ A).sum(axis=1)


def brute_mismatch(pred, truth, k):
    n = len(pred)
    best = n
    for perm in itertools.permutations(range(k)):
        wrong = sum(perm[p] != t for p, t in zip(pred, truth))
        best = min(best, wrong)
    return best / n


def oriented_vote(A, e, a_hat, b_hat, gamma):
    """Neighbourhood vote: class 1 iff the out-neighbour count difference,
    oriented by the signs of a_hat - b_hat and gamma - 1/2, is positive."""
    n = A.shape[0]
    out = np.empty(n, dtype=np.int64)
    s = np.sign(a_hat - b_hat) * np.sign(gamma - 0.5)
    for i in range(n):
        b1 = sum(A[i, j] for j in range(n) if e[j] == 0)
        b2 = sum(A[i, j] for j in range(n) if e[j] == 1)
        out[i] = 0 if s * (b1 - b2) > 0 else 1
    return out
