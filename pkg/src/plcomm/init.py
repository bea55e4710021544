"""Initial labelings: degree-pair K-means, spectral clustering, and spectral
clustering on the adjacency plus a constant rank-one perturbation (SCP)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .graph import SparseGraph, UnsupportedModeError, degrees, two_path_counts


class EigenConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (achieved residual {residual:.3g})")
        self.residual = residual


class DegenerateClusteringWarning(UserWarning):
    pass


@dataclass
class SpectralConfig:
    K: int
    r: int | None = None
    perturb: bool = True
    alpha_over_p: float = 0.25
    lambda_hat: float | None = None
    eig_iters: int | None = None
    eig_tol: float = 1e-8
    kmeans_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("spectral clustering needs K >= 2")
        if self.r is None:
            self.r = self.K - 1
        if self.r < 1:
            raise ValueError("embedding dimension r must be >= 1")
        if self.alpha_over_p <= 0 or self.eig_tol <= 0:
            raise ValueError("alpha_over_p and eig_tol must be positive")


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------

def _sq_dists(points, centers):
    d = (points ** 2).sum(1)[:, None] - 2.0 * points @ centers.T + (centers ** 2).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _seed_centers(points, k, rng):
    """Distance-weighted (k-means++) seeding."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(points, points[idx:idx + 1])[:, 0])
    return points[chosen].copy()


def lloyd(points, centers, max_iter=300):
    """Lloyd iterations from ``centers``.

    Returns ``(labels, centers, objective_history)``; the history holds the
    within-cluster sum of squares after every assignment step.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.array(centers, dtype=np.float64)
    k = centers.shape[0]
    labels = None
    history = []
    for _ in range(max_iter):
        dist = _sq_dists(points, centers)
        new = np.argmin(dist, axis=1)  # ties go to the lowest index
        history.append(float(dist[np.arange(points.shape[0]), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for j in range(points.shape[1]):
            sums = np.bincount(labels, weights=points[:, j], minlength=k)
            nz = counts > 0
            centers[nz, j] = sums[nz] / counts[nz]
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = dist[np.arange(points.shape[0]), labels]
            order = np.argsort(-own, kind="stable")
            for c, idx in zip(empty, order):
                centers[c] = points[idx]
    return labels, centers, history


def kmeans(points, K: int, restarts: int = 10, seed: int = 0, max_iter: int = 300) -> np.ndarray:
    """Best-of-``restarts`` K-means labels (0-based)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if n < K:
        raise ValueError(f"cannot form {K} clusters from {n} points")
    rng = np.random.default_rng(seed)
    best, best_cost = None, math.inf
    for _ in range(max(1, restarts)):
        centers = _seed_centers(points, K, rng)
        labels, centers, _ = lloyd(points, centers, max_iter=max_iter)
        cost = float(((points - centers[labels]) ** 2).sum())
        if cost < best_cost:
            best, best_cost = labels, cost
    return best.astype(np.int64)


# ---------------------------------------------------------------------------
# Degree-based clustering
# ---------------------------------------------------------------------------

def degree_features(g: SparseGraph) -> np.ndarray:
    feats = np.column_stack([degrees(g), two_path_counts(g)]).astype(np.float64)
    feats -= feats.mean(axis=0)
    sd = feats.std(axis=0)
    feats /= np.where(sd > 0, sd, 1.0)
    return feats


def degree_cluster(g: SparseGraph, K: int, seed: int = 0, restarts: int = 10) -> np.ndarray:
    """K-means on standardized (degree, two-path count) pairs."""
    if g.directed:
        raise UnsupportedModeError("degree clustering requires an undirected graph")
    feats = degree_features(g)
    distinct = np.unique(feats, axis=0).shape[0]
    if K > distinct:
        warnings.warn(f"only {distinct} distinct degree pairs for K={K}",
                      DegenerateClusteringWarning, stacklevel=2)
    return kmeans(feats, K, restarts=restarts, seed=seed)


# ---------------------------------------------------------------------------
# Spectral clustering
# ---------------------------------------------------------------------------

def perturbed_matvec(g: SparseGraph, x, c: float) -> np.ndarray:
    """``(A + c 1 1^T) x`` without forming the dense term."""
    x = np.asarray(x, dtype=np.float64)
    y = g.csr() @ x
    if c:
        y = y + c * x.sum(axis=0)
    return y


def perturbation_constant(g: SparseGraph, cfg: SpectralConfig) -> float:
    if not cfg.perturb:
        return 0.0
    lam = cfg.lambda_hat if cfg.lambda_hat is not None else g.nnz / g.n
    return cfg.alpha_over_p * lam / g.n


def laplacian_operator(g: SparseGraph, c: float):
    """Matrix-free ``D^-1/2 (A + c 1 1^T) D^-1/2`` with zero rows for isolated nodes."""
    dp = degrees(g).astype(np.float64) + g.n * c
    scale = np.zeros(g.n)
    np.divide(1.0, np.sqrt(dp), out=scale, where=dp > 0)

    def apply(x):
        x = np.asarray(x, dtype=np.float64)
        s = scale if x.ndim == 1 else scale[:, None]
        return s * perturbed_matvec(g, s * x, c)

    return apply, dp


@dataclass
class Embedding:
    vectors: np.ndarray
    values: np.ndarray
    residuals: np.ndarray


def _split_top_eigenspace(vals, vecs, perron, tol=1e-10):
    """Index of the eigenvector to discard.

    A degenerate top eigenspace (disconnected graph) is rotated in place so
    that its first vector is the projection of ``perron``; the rest are then
    orthogonal to it.
    """
    top = np.flatnonzero(vals >= vals.max() - tol)
    if top.size < 2:
        return int(np.argmax(vals))
    V = vecs[:, top]
    p = V.T @ perron
    if not np.any(p):
        return int(np.argmax(vals))
    _, _, vt = np.linalg.svd(p[None, :])
    vecs[:, top] = V @ vt.T
    vals[top] = vals[top].mean()
    return int(top[0])


def spectral_embed(g: SparseGraph, cfg: SpectralConfig, return_info: bool = False):
    """Eigenvectors of the (perturbed) normalized adjacency with the largest
    ``|mu|`` after discarding the single algebraically largest eigenvalue."""
    if g.directed:
        raise UnsupportedModeError("spectral embedding requires an undirected graph")
    c = perturbation_constant(g, cfg)
    apply, dp = laplacian_operator(g, c)
    if cfg.perturb and not np.all(dp > 0):
        raise ValueError("perturbed degrees must be strictly positive")
    n, want = g.n, cfg.r + 1
    if want > n:
        raise ValueError(f"cannot extract {want} eigenvectors from {n} nodes")
    iters = cfg.eig_iters if cfg.eig_iters is not None else int(10 * math.sqrt(n) + 200)
    rng = np.random.default_rng(cfg.seed)

    if n <= max(64, 2 * want + 2):
        # small problems: assemble the operator column by column from matvecs
        dense = apply(np.eye(n))
        vals, vecs = np.linalg.eigh((dense + dense.T) / 2)
        order = np.argsort(-np.abs(vals), kind="stable")[:want]
        vals, vecs = vals[order], vecs[:, order]
    else:
        op = spla.LinearOperator((n, n), matvec=apply, matmat=apply, dtype=np.float64)
        v0 = rng.standard_normal(n)
        ncv = min(n, max(2 * want + 1, 20))
        try:
            vals, vecs = spla.eigsh(op, k=want, which="LM", v0=v0, ncv=ncv,
                                    maxiter=iters, tol=cfg.eig_tol / 10)
        except spla.ArpackNoConvergence as exc:
            part_vals, part_vecs = exc.eigenvalues, exc.eigenvectors
            res = np.inf
            if part_vals is not None and len(part_vals):
                res = float(np.max(np.linalg.norm(apply(part_vecs) - part_vecs * part_vals, axis=0)))
            raise EigenConvergenceError("eigensolver did not converge", res) from exc

    drop = _split_top_eigenspace(vals, vecs, np.sqrt(dp))
    residuals = np.linalg.norm(apply(vecs) - vecs * vals, axis=0)
    keep = [i for i in np.argsort(-np.abs(vals), kind="stable") if i != drop][:cfg.r]
    vals, vecs, residuals = vals[keep], vecs[:, keep], residuals[keep]
    worst = float(residuals.max()) if residuals.size else 0.0
    if worst > cfg.eig_tol:
        raise EigenConvergenceError(f"residual above tolerance {cfg.eig_tol:g}", worst)
    if return_info:
        return Embedding(vectors=vecs, values=vals, residuals=residuals)
    return vecs


def spectral_cluster(g: SparseGraph, cfg: SpectralConfig) -> np.ndarray:
    """Plain spectral clustering (``perturb=False``) or SCP."""
    emb = spectral_embed(g, cfg)
    return kmeans(emb, cfg.K, restarts=cfg.kmeans_restarts, seed=cfg.seed)
