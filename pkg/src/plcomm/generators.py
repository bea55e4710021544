"""Planted-partition graph generators.

Random stream order for :func:`sample_dcsbm` is fixed: class labels, then
degree multipliers, then the pair scan (row-major over ``i < j``). The
``sparse`` sampler draws a binomial edge count for every group pair and
then a uniform subset of pairs; it matches the dense scan in distribution
but not bit-for-bit.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import SparseGraph

DENSE_SCAN_MAX_N = 10_000


class InfeasibleConfigError(ValueError):
    pass


@dataclass
class SbmConfig:
    n: int
    K: int
    pi: list[float] | None = None
    beta: float = 0.0
    w: list[float] | None = None
    lambda_: float = 10.0
    rho: float = 0.0
    theta_low: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.pi is None:
            self.pi = [1.0 / self.K] * self.K
        if self.w is None:
            self.w = [1.0] * self.K
        self.pi = [float(x) for x in self.pi]
        self.w = [float(x) for x in self.w]
        self.validate()

    def validate(self):
        if self.n < 1 or self.K < 1:
            raise InfeasibleConfigError("n and K must be positive")
        if len(self.pi) != self.K or len(self.w) != self.K:
            raise InfeasibleConfigError("pi and w must have length K")
        if abs(sum(self.pi) - 1.0) > 1e-12 or min(self.pi) < 0:
            raise InfeasibleConfigError(f"pi must be a probability vector, got {self.pi}")
        if not 0.0 <= self.beta < 1.0:
            raise InfeasibleConfigError(f"beta must lie in [0, 1), got {self.beta}")
        if min(self.w) <= 0:
            raise InfeasibleConfigError("weights w must be positive")
        if self.lambda_ <= 0:
            raise InfeasibleConfigError(f"lambda must be positive, got {self.lambda_}")
        if not 0.0 <= self.rho < 1.0:
            raise InfeasibleConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if not 0.0 < self.theta_low <= 1.0:
            raise InfeasibleConfigError("theta_low must lie in (0, 1]")

    def to_json(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SbmConfig":
        d = dict(d)
        if "lambda" in d:
            d["lambda_"] = d.pop("lambda")
        return cls(**d)


@dataclass
class DirectedPairConfig:
    m: int
    a: float
    b: float
    self_loops: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise InfeasibleConfigError("m must be positive")
        for name, rate in (("a", self.a), ("b", self.b)):
            if rate < 0 or rate / self.m > 1.0:
                raise InfeasibleConfigError(f"{name}/m = {rate / self.m:g} is not a probability")

    @property
    def n(self) -> int:
        return 2 * self.m

    def edge_prob(self) -> np.ndarray:
        return pair_edge_prob(self.m, self.a, self.b, model="directed")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "DirectedPairConfig":
        return cls(**d)


@dataclass
class EdgeProb:
    P: np.ndarray
    mean_theta: float
    notes: dict = field(default_factory=dict)


def build_edge_prob(cfg: SbmConfig) -> EdgeProb:
    """Base matrix from (beta, w), rescaled so the expected degree is lambda."""
    w = np.asarray(cfg.w, dtype=np.float64)
    pi = np.asarray(cfg.pi, dtype=np.float64)
    if cfg.beta == 0:
        p0 = np.diag(w)
    else:
        p0 = np.ones((cfg.K, cfg.K))
        np.fill_diagonal(p0, w / cfg.beta)
    mean_theta = cfg.rho * cfg.theta_low + (1.0 - cfg.rho)
    if cfg.n < 2:
        raise InfeasibleConfigError("need at least two nodes")
    scale = cfg.lambda_ / ((cfg.n - 1) * float(pi @ p0 @ pi) * mean_theta ** 2)
    P = scale * p0
    # largest multiplier product is 1*1 unless every node is low-degree
    top = 1.0 if cfg.rho < 1 else cfg.theta_low ** 2
    bad = np.argwhere(top * P > 1.0)
    if bad.size:
        k, l = bad[0]
        raise InfeasibleConfigError(
            f"edge probability P[{k + 1},{l + 1}] = {P[k, l]:.4g} exceeds 1; lower lambda or raise n")
    return EdgeProb(P=P, mean_theta=mean_theta)


def pair_edge_prob(m: int, a: float, b: float, model: str = "directed") -> np.ndarray:
    """Two-community edge probabilities: ``[[a, b], [b, a]] / m`` for the directed
    model, or the probability that at least one of two directed draws succeeds
    for the undirected (coupled) model."""
    pd = np.array([[a, b], [b, a]], dtype=np.float64) / m
    if model == "directed":
        return pd
    if model in ("undirected", "undirected-coupled"):
        return 2 * pd - pd ** 2
    raise ValueError(f"unknown model {model!r}")


def _scan_dense(rng, n, prob_row, directed):
    """Row-major Bernoulli scan. ``prob_row(i, js)`` returns probabilities."""
    rows, cols = [], []
    for i in range(n):
        js = np.arange(n) if directed else np.arange(i + 1, n)
        if js.size == 0:
            continue
        u = rng.random(js.size)
        hit = js[u < prob_row(i, js)]
        if hit.size:
            rows.append(np.full(hit.size, i, dtype=np.int64))
            cols.append(hit)
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def _unrank_upper(idx, size):
    """Map linear indices of the strict upper triangle (row-major) to (i, j)."""
    idx = np.asarray(idx, dtype=np.int64)
    # row i starts at offset s(i) = i*size - i*(i+1)/2
    fi = size - 0.5 - np.sqrt((size - 0.5) ** 2 - 2.0 * idx)
    i = np.floor(fi).astype(np.int64)

    def start(r):
        return r * size - r * (r + 1) // 2

    for _ in range(2):
        i = np.where(start(i) > idx, i - 1, i)
        i = np.where(start(i + 1) <= idx, i + 1, i)
    j = idx - start(i) + i + 1
    return i, j


def _scan_grouped(rng, groups, gprob, directed):
    """Exact sampler for block-constant probabilities.

    ``groups`` lists node-index arrays; ``gprob[g, h]`` is the edge probability
    between a node of group g and one of group h.
    """
    rows, cols = [], []
    ng = len(groups)
    for g in range(ng):
        for h in range(ng):
            if not directed and h < g:
                continue
            p = float(gprob[g, h])
            a, b = groups[g], groups[h]
            if p <= 0 or a.size == 0 or b.size == 0:
                continue
            if not directed and g == h:
                total = a.size * (a.size - 1) // 2
            else:
                total = a.size * b.size
            if total == 0:
                continue
            count = total if p >= 1 else int(rng.binomial(total, p))
            if count == 0:
                continue
            picks = np.sort(rng.choice(total, size=count, replace=False))
            if not directed and g == h:
                ii, jj = _unrank_upper(picks, a.size)
            else:
                ii, jj = np.divmod(picks, b.size)
            rows.append(a[ii])
            cols.append(b[jj])
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def sample_dcsbm(cfg: SbmConfig, sampler: str = "auto"):
    """Draw ``(graph, truth, theta)`` from the degree-corrected block model.

    ``rho = 0`` gives the plain block model. ``sampler`` is ``"dense"``,
    ``"sparse"`` or ``"auto"`` (dense up to ``DENSE_SCAN_MAX_N`` nodes).
    """
    ep = build_edge_prob(cfg)
    P = ep.P
    rng = np.random.default_rng(cfg.seed)
    truth = rng.choice(cfg.K, size=cfg.n, p=np.asarray(cfg.pi)).astype(np.int64)
    if cfg.rho > 0:
        theta = np.where(rng.random(cfg.n) < cfg.rho, cfg.theta_low, 1.0)
    else:
        theta = np.ones(cfg.n)
    if sampler == "auto":
        sampler = "dense" if cfg.n <= DENSE_SCAN_MAX_N else "sparse"
    if sampler == "dense":
        rows, cols = _scan_dense(
            rng, cfg.n,
            lambda i, js: theta[i] * theta[js] * P[truth[i], truth[js]],
            directed=False)
    elif sampler == "sparse":
        levels = np.unique(theta)
        groups, gk, gt = [], [], []
        for k in range(cfg.K):
            for t in levels:
                groups.append(np.flatnonzero((truth == k) & (theta == t)))
                gk.append(k)
                gt.append(t)
        gk, gt = np.asarray(gk), np.asarray(gt)
        gprob = np.outer(gt, gt) * P[np.ix_(gk, gk)]
        rows, cols = _scan_grouped(rng, groups, gprob, directed=False)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    g = SparseGraph.from_arrays(cfg.n, rows, cols, directed=False)
    return g, truth, theta


def sample_directed(cfg: DirectedPairConfig, sampler: str = "dense"):
    """Two equal communities (first m nodes are community 1); every ordered
    pair is an independent Bernoulli draw, self-pairs included when
    ``cfg.self_loops``."""
    P = cfg.edge_prob()
    n = cfg.n
    truth = np.repeat(np.array([0, 1], dtype=np.int64), cfg.m)
    rng = np.random.default_rng(cfg.seed)
    if sampler == "auto":
        sampler = "dense" if n <= DENSE_SCAN_MAX_N else "sparse"
    if sampler == "dense":
        def prob_row(i, js):
            p = P[truth[i], truth[js]]
            if not cfg.self_loops:
                p = np.where(js == i, 0.0, p)
            return p
        rows, cols = _scan_dense(rng, n, prob_row, directed=True)
    elif sampler == "sparse":
        groups = [np.arange(cfg.m), np.arange(cfg.m, n)]
        rows, cols = _scan_grouped(rng, groups, P, directed=True)
        if not cfg.self_loops:
            keep = rows != cols
            rows, cols = rows[keep], cols[keep]
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return SparseGraph.from_arrays(n, rows, cols, directed=True), truth


def couple_to_undirected(gd: SparseGraph) -> SparseGraph:
    """Erase orientations: ``A_ij = 1`` unless both ``i->j`` and ``j->i`` are absent.
    Self-loops are discarded."""
    if not gd.directed:
        raise ValueError("couple_to_undirected expects a directed graph")
    rows = gd.row_index()
    return SparseGraph.from_arrays(gd.n, rows, gd.indices, directed=False,
                                   node_ids=gd.node_ids)
