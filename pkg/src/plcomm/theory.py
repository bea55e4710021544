"""One-step conditional pseudo-likelihood on the balanced two-community model.

Initial labelings here overlap the truth in exactly ``gamma * m`` nodes of
each community. With equal priors and a symmetric edge-rate estimate, the
one-step rule reduces to a sign test on ``b_i1 - b_i2``; both forms are
implemented so they can be checked against each other.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .generators import DirectedPairConfig, couple_to_undirected, pair_edge_prob, sample_directed
from .graph import SparseGraph, block_sums, check_labels, confusion, mismatch_ratio

MODELS = ("directed", "undirected-coupled")
SWEEP_COLUMNS = ("model", "n", "gamma", "a", "b", "tau2", "a_bar_gamma", "seed", "mismatch")


@dataclass
class TheoryConfig:
    m: int
    a: float = 4.0
    b: float = 1.0
    gamma: float = 0.3
    a_hat: float | None = None
    b_hat: float | None = None
    model: str = "directed"
    seeds: list[int] = field(default_factory=lambda: list(range(20)))

    def __post_init__(self):
        if self.model == "undirected":
            self.model = "undirected-coupled"
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        _check_gamma(self.gamma, self.m)
        if self.a == self.b:
            raise ValueError("a and b must differ")
        if self.a_hat is None:
            self.a_hat = self.a
        if self.b_hat is None:
            self.b_hat = self.b
        if (self.a_hat - self.b_hat) * (self.a - self.b) <= 0:
            raise ValueError("(a_hat, b_hat) must be ordered like (a, b)")


def _check_gamma(gamma, m):
    if not 0.0 < gamma < 1.0 and gamma != 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if gamma == 0.5:
        raise ValueError("gamma = 1/2 carries no information about the truth")
    gm = gamma * m
    if abs(gm - round(gm)) > 1e-9:
        raise ValueError(f"gamma * m = {gm:g} is not an integer")
    return int(round(gm))


def tau_squared(a: float, b: float) -> float:
    if a + b <= 0:
        raise ValueError("a + b must be positive")
    return (a - b) ** 2 / (a + b)


def a_bar_gamma(a: float, b: float, gamma: float) -> float:
    return gamma * a + (1.0 - gamma) * b


def min_feasible_eps(a: float, b: float, gamma: float) -> float | None:
    """Smallest ``eps`` with ``2(1+eps) abar <= eps |1-2gamma| |a-b|``, or None
    if no ``eps`` in (0, 1) works."""
    abar = a_bar_gamma(a, b, gamma)
    slack = abs(1 - 2 * gamma) * abs(a - b) - 2 * abar
    if slack <= 0:
        return None
    eps = 2 * abar / slack
    return eps if eps < 1 else None


def sample_gamma_labeling(m: int, gamma: float, seed=None) -> np.ndarray:
    """Uniform draw of a balanced labeling matching ``gamma*m`` labels in each
    community (truth: first ``m`` nodes in community 1)."""
    gm = _check_gamma(gamma, m)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    e = np.empty(2 * m, dtype=np.int64)
    first = np.ones(m, dtype=np.int64)
    first[rng.choice(m, size=gm, replace=False)] = 0
    second = np.zeros(m, dtype=np.int64)
    second[rng.choice(m, size=gm, replace=False)] = 1
    e[:m] = first
    e[m:] = second
    return e


def theta_closed_form(gamma: float, a_hat: float, b_hat: float, model: str = "directed", m: int = 1):
    """Row-normalized rates for a gamma-overlap labeling; depends only on the
    estimated diagonal/off-diagonal edge probabilities."""
    P = pair_edge_prob(m, a_hat, b_hat, model="directed" if model == "directed" else "undirected")
    pa, pb = P[0, 0], P[0, 1]
    same = gamma * pa / (pa + pb) + (1 - gamma) * pb / (pa + pb)
    return np.array([[same, 1 - same], [1 - same, same]])


def theta_from_overlap(e, truth, a_hat, b_hat, model="directed"):
    """Rows of ``(n R(e) P_hat)^T`` normalized, with ``R`` against ``truth``."""
    e = check_labels(e, k=2)
    truth = check_labels(truth, e.size, 2)
    m = e.size // 2
    P = pair_edge_prob(m, a_hat, b_hat, model="directed" if model == "directed" else "undirected")
    R = confusion(e, truth, 2)
    lam = (e.size * R @ P).T
    return lam / lam.sum(axis=1, keepdims=True)


def _balanced(e):
    return e.size % 2 == 0 and np.count_nonzero(e == 0) == e.size // 2


def one_step_cpl(g: SparseGraph, e, a_hat: float, b_hat: float, *, gamma: float | None = None,
                 truth=None, model: str = "directed", return_ties: bool = False):
    """One CPL label update from ``e`` with equal priors.

    ``theta`` comes from the closed form when ``gamma`` is given, from the
    overlap with ``truth`` when that is given, and otherwise the rule runs as
    a sign test on ``b_i1 - b_i2`` assuming ``e`` leans towards the truth.
    Equal scores go to class 2 (0-based label 1).
    """
    e = check_labels(e, g.n, 2)
    if not _balanced(e):
        raise ValueError("one-step CPL needs a balanced initial labeling")
    if a_hat == b_hat:
        raise ValueError("a_hat and b_hat must differ")
    B = block_sums(g, e, 2)
    diff = B[:, 0] - B[:, 1]
    if gamma is None and truth is None:
        s = np.sign(diff) * (1 if a_hat > b_hat else -1)
        labels = np.where(s > 0, 0, 1).astype(np.int64)
        ties = s == 0
    else:
        if gamma is not None:
            theta = theta_closed_form(gamma, a_hat, b_hat, model, m=g.n // 2)
        else:
            theta = theta_from_overlap(e, truth, a_hat, b_hat, model)
        if np.allclose(theta[0], theta[1]):
            raise ValueError("identical theta rows: the overlap carries no information")
        lt = np.log(theta)
        score = B @ (lt[0] - lt[1])
        tol = 1e-9 * (B.sum(axis=1) + 1) * np.abs(lt).max()
        ties = np.abs(score) <= tol
        labels = np.where((score > 0) & ~ties, 0, 1).astype(np.int64)
    if return_ties:
        return labels, ties
    return labels


def directed_mismatch(pred, truth, ties=None) -> float:
    """Two-class mismatch ratio; nodes flagged in ``ties`` count as errors
    under both label assignments."""
    pred = check_labels(pred)
    truth = check_labels(truth, pred.size)
    k = max(int(pred.max()), int(truth.max())) + 1
    if k != 2 or ties is None:
        return mismatch_ratio(pred, truth)
    ties = np.asarray(ties, dtype=bool)
    wrong_id = np.count_nonzero((pred != truth) | ties)
    wrong_flip = np.count_nonzero((pred == truth) | ties)
    return min(wrong_id, wrong_flip) / pred.size


def rates_for_tau2(tau2: float, ratio: float = 4.0):
    """``(a, b)`` with ``a = ratio * b`` and ``(a-b)^2/(a+b) = tau2``."""
    if ratio == 1:
        raise ValueError("ratio must differ from 1")
    b = tau2 * (ratio + 1) / (ratio - 1) ** 2
    return ratio * b, b


def _sweep_cell(args):
    model, m, gamma, a, b, a_hat, b_hat, seed = args
    ss = np.random.SeedSequence(seed)
    graph_seed, label_seed = ss.spawn(2)
    cfg = DirectedPairConfig(m=m, a=a, b=b, seed=int(graph_seed.generate_state(1)[0]))
    gd, truth = sample_directed(cfg)
    g = gd if model == "directed" else couple_to_undirected(gd)
    e = sample_gamma_labeling(m, gamma, np.random.default_rng(label_seed))
    pred, ties = one_step_cpl(g, e, a_hat, b_hat, gamma=gamma, model=model, return_ties=True)
    return directed_mismatch(pred, truth, ties)


def theorem_sweep(cfg: TheoryConfig, tau2_grid: Sequence[float], ratio: float | None = None,
                  workers: int = 1) -> list[dict]:
    """Per-seed mismatch of the one-step rule over a grid of signal strengths.

    Returns one row per (tau2, seed). Undirected rows also carry the
    smallest feasible ``eps`` of the extra degree condition (None when
    infeasible). ``ratio`` defaults to ``cfg.a / cfg.b``.
    """
    ratio = cfg.a / cfg.b if ratio is None else ratio
    jobs, meta = [], []
    for tau2 in tau2_grid:
        if tau2 <= 0:
            raise ValueError("tau2 must be positive")
        a, b = rates_for_tau2(tau2, ratio)
        if max(a, b) > cfg.m:
            raise ValueError(f"rate {max(a, b):g} exceeds m = {cfg.m} at tau2 = {tau2}")
        for seed in cfg.seeds:
            jobs.append((cfg.model, cfg.m, cfg.gamma, a, b, a, b, seed))
            meta.append((tau2, a, b, seed))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    rows = []
    for (tau2, a, b, seed), mis in zip(meta, results):
        row = {
            "model": cfg.model, "n": 2 * cfg.m, "gamma": cfg.gamma, "a": a, "b": b,
            "tau2": tau2, "a_bar_gamma": a_bar_gamma(a, b, cfg.gamma), "seed": seed,
            "mismatch": mis,
        }
        if cfg.model != "directed":
            eps = min_feasible_eps(a, b, cfg.gamma)
            row["degree_condition_ok"] = eps is not None
            row["eps_min"] = eps
        rows.append(row)
    return rows


def summarize_sweep(rows: list[dict]) -> list[dict]:
    """Median and IQR of the mismatch per tau2 value, in grid order."""
    out, seen = [], {}
    for r in rows:
        seen.setdefault(r["tau2"], []).append(r["mismatch"])
    for tau2, vals in seen.items():
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        first = next(r for r in rows if r["tau2"] == tau2)
        out.append({"tau2": tau2, "gamma": first["gamma"], "n": first["n"],
                    "median_mismatch": float(med), "iqr": float(q3 - q1)})
    return out


def write_sweep_csv(rows: list[dict], fh) -> None:
    cols = list(SWEEP_COLUMNS)
    if rows and "degree_condition_ok" in rows[0]:
        cols += ["degree_condition_ok", "eps_min"]
    writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r.get(k) is None else r[k]) for k in cols})
