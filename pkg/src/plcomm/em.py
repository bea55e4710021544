"""Pseudo-likelihood block-model fitting.

Two mixture models over block-sum rows ``b_i``:

* ``upl`` -- independent Poisson counts with rates ``Lambda[l, k]``;
* ``cpl`` -- multinomial counts given the degree, with row-stochastic
  ``Theta[l, k]``.

Each outer round runs EM on fixed block sums until the parameters settle,
relabels every node by its most likely class, and refreshes the edge-rate
matrix from the soft assignments.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .graph import SparseGraph, block_edge_counts, block_sums, check_labels, degrees

log = logging.getLogger(__name__)

METHODS = ("upl", "cpl")


class EmptyClassError(ValueError):
    pass


@dataclass
class BlockParams:
    pi_hat: np.ndarray
    P_hat: np.ndarray
    Lambda_hat: np.ndarray
    Theta_hat: np.ndarray

    @property
    def K(self) -> int:
        return self.pi_hat.size

    def to_json(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in vars(self).items()}


@dataclass
class FitConfig:
    T_outer: int = 20
    inner_tol: float = 1e-6
    inner_max: int = 200
    soft_threshold: float = 1e-3
    rate_floor: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.T_outer < 1 or self.inner_max < 1:
            raise ValueError("T_outer and inner_max must be >= 1")
        if min(self.inner_tol, self.soft_threshold, self.rate_floor) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class FitResult:
    labels: np.ndarray
    soft: np.ndarray
    params: BlockParams
    loglik_trace: list[tuple[int, int, float]]
    outer_rounds_run: int
    converged: bool
    method: str = "cpl"
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "outer_rounds_run": self.outer_rounds_run,
            "converged": self.converged,
            "params": self.params.to_json(),
            "class_sizes": np.bincount(self.labels, minlength=self.params.K).tolist(),
            "diagnostics": self.diagnostics,
        }


def _row_normalize(M):
    s = M.sum(axis=1, keepdims=True)
    out = np.full_like(M, 1.0 / M.shape[1], dtype=np.float64)
    np.divide(M, s, out=out, where=s > 0)
    return out


def rates_from_edge_prob(P_hat, block_frac, n):
    """``Lambda[l, k] = n * frac_k * P[k, l]``, i.e. the transpose of ``n R P``
    with ``R = diag(frac)``."""
    return n * (block_frac[:, None] * P_hat).T


def init_params(g: SparseGraph, e, k: int | None = None) -> BlockParams:
    """Plug-in parameters treating ``e`` as the true labeling."""
    e = check_labels(e, g.n, k)
    k = k if k is not None else int(e.max()) + 1
    sizes = np.bincount(e, minlength=k)
    if np.any(sizes == 0):
        empty = [int(i) + 1 for i in np.flatnonzero(sizes == 0)]
        raise EmptyClassError(f"initial labeling leaves classes {empty} empty; re-initialize")
    o, npairs = block_edge_counts(g, e, k)
    P = np.zeros((k, k))
    np.divide(o, npairs, out=P, where=npairs > 0)
    pi = sizes / g.n
    lam = rates_from_edge_prob(P, pi, g.n)
    return BlockParams(pi_hat=pi, P_hat=P, Lambda_hat=lam, Theta_hat=_row_normalize(lam))


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _upl_scores(B, pi, lam, floor):
    # log pi_l - lambda_l + sum_k b_ik log lambda_lk
    return _safe_log(pi)[None, :] - lam.sum(axis=1)[None, :] + B @ np.log(lam + floor).T


def _cpl_scores(B, pi, theta, floor):
    return _safe_log(pi)[None, :] + B @ np.log(theta + floor).T


def _posterior(scores):
    scores = scores - scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=1, keepdims=True)
    return p


def upl_e_step(B, params: BlockParams, rate_floor: float = 1e-10) -> np.ndarray:
    return _posterior(_upl_scores(np.asarray(B, float), params.pi_hat, params.Lambda_hat, rate_floor))


def cpl_e_step(B, params: BlockParams, rate_floor: float = 1e-10) -> np.ndarray:
    return _posterior(_cpl_scores(np.asarray(B, float), params.pi_hat, params.Theta_hat, rate_floor))


def upl_loglik(B, params: BlockParams, rate_floor: float = 1e-10) -> float:
    """Poisson-mixture pseudo log-likelihood, without the ``log b!`` constant."""
    s = _upl_scores(np.asarray(B, float), params.pi_hat, params.Lambda_hat, rate_floor)
    return float(logsumexp(s, axis=1).sum())


def cpl_loglik(B, params: BlockParams, rate_floor: float = 1e-10) -> float:
    """Multinomial-mixture log-likelihood given degrees, without the multinomial coefficient."""
    s = _cpl_scores(np.asarray(B, float), params.pi_hat, params.Theta_hat, rate_floor)
    return float(logsumexp(s, axis=1).sum())


def upl_m_step(B, soft, rate_floor: float = 1e-10, flags: list | None = None):
    """Returns ``(pi_hat, Lambda_hat)``; responsibility-weighted means of ``B``."""
    B = np.asarray(B, float)
    mass = soft.sum(axis=0)
    pi = mass / soft.shape[0]
    lam = np.full((soft.shape[1], B.shape[1]), rate_floor)
    ok = mass > 0
    lam[ok] = (soft.T @ B)[ok] / mass[ok, None]
    if flags is not None and not ok.all():
        flags.append({"zero_responsibility": (np.flatnonzero(~ok) + 1).tolist()})
    return pi, lam


def cpl_m_step(B, d, soft, flags: list | None = None):
    """Returns ``(pi_hat, Theta_hat)`` with ``theta_lk = sum_i p_il b_ik / sum_i p_il d_i``."""
    B = np.asarray(B, float)
    d = np.asarray(d, float)
    pi = soft.sum(axis=0) / soft.shape[0]
    num = soft.T @ B
    den = soft.T @ d
    theta = np.full(num.shape, 1.0 / num.shape[1])
    ok = den > 0
    theta[ok] = num[ok] / den[ok, None]
    if flags is not None and not ok.all():
        flags.append({"zero_responsibility": (np.flatnonzero(~ok) + 1).tolist()})
    return pi, theta


def _rel_change(new, old):
    scale = max(float(np.max(np.abs(old))), 1e-300)
    return float(np.max(np.abs(new - old))) / scale


def run_em(B, d, params: BlockParams, method: str, cfg: FitConfig, flags: list | None = None):
    """EM on fixed block sums. Returns ``(soft, params, logliks, converged)``;
    ``logliks[0]`` is the objective at the starting parameters."""
    B = np.asarray(B, float)
    if method == "upl":
        rates, estep, ll = params.Lambda_hat, upl_e_step, upl_loglik
    elif method == "cpl":
        rates, estep, ll = params.Theta_hat, cpl_e_step, cpl_loglik
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    pi = params.pi_hat
    cur = params
    logliks = [ll(B, cur, cfg.rate_floor)]
    converged = False
    soft = None
    for _ in range(cfg.inner_max):
        soft = estep(B, cur, cfg.rate_floor)
        if method == "upl":
            new_pi, new_rates = upl_m_step(B, soft, cfg.rate_floor, flags)
            cur = BlockParams(new_pi, cur.P_hat, new_rates, _row_normalize(new_rates))
        else:
            new_pi, new_rates = cpl_m_step(B, d, soft, flags)
            cur = BlockParams(new_pi, cur.P_hat, cur.Lambda_hat, new_rates)
        logliks.append(ll(B, cur, cfg.rate_floor))
        delta = max(_rel_change(new_pi, pi), _rel_change(new_rates, rates))
        pi, rates = new_pi, new_rates
        if delta < cfg.inner_tol:
            converged = True
            break
    soft = estep(B, cur, cfg.rate_floor)
    return soft, cur, logliks, converged


def refresh_edge_prob(g: SparseGraph, soft, e, soft_threshold: float):
    """Soft edge-rate update ``sum_ij A_ij p_il p_jk / n_lk(e)``.

    Responsibilities below ``soft_threshold`` are zeroed and rows renormalized
    before the sparse pass over the edges.
    """
    k = soft.shape[1]
    filt = np.where(soft >= soft_threshold, soft, 0.0)
    filt = _row_normalize(filt)
    num = filt.T @ (g.csr() @ filt)
    if not g.directed:
        num = (num + num.T) / 2
    sizes = np.bincount(e, minlength=k).astype(float)
    npairs = np.outer(sizes, sizes)
    np.fill_diagonal(npairs, sizes * (sizes - 1))
    P = np.zeros((k, k))
    np.divide(num, npairs, out=P, where=npairs > 0)
    return P


def _reseed_empty(e, soft, k, soft_threshold, diagnostics):
    """Give each empty class the least confident nodes, preferring nodes that
    still carry at least ``soft_threshold`` responsibility for it."""
    e = e.copy()
    n = e.size
    take = max(1, n // (4 * k))
    for cls in range(k):
        if np.any(e == cls):
            continue
        sizes = np.bincount(e, minlength=k)
        confidence = soft.max(axis=1)
        eligible = sizes[e] > take  # keep donor classes non-empty
        candidates = np.flatnonzero(eligible & (soft[:, cls] >= soft_threshold))
        if candidates.size < take:
            candidates = np.flatnonzero(eligible)
        order = candidates[np.lexsort((-soft[candidates, cls], confidence[candidates]))]
        chosen = order[:take]
        e[chosen] = cls
        diagnostics.setdefault("reseeded", []).append({"class": cls + 1, "nodes": int(chosen.size)})
        log.warning("class %d collapsed; reseeded with %d nodes", cls + 1, chosen.size)
    return e


def fit(g: SparseGraph, e0, method: str = "cpl", cfg: FitConfig | None = None,
        k: int | None = None) -> FitResult:
    """Fit by pseudo-likelihood (``upl``) or conditional pseudo-likelihood (``cpl``)."""
    cfg = cfg or FitConfig()
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    e = check_labels(e0, g.n, k)
    k = k if k is not None else int(e.max()) + 1
    params = init_params(g, e, k)
    d = degrees(g).astype(float)
    trace: list[tuple[int, int, float]] = []
    diagnostics: dict = {"inner_converged": [], "flags": []}
    converged = False
    soft = None
    rounds = 0
    for rnd in range(1, cfg.T_outer + 1):
        rounds = rnd
        B = block_sums(g, e, k)
        soft, params, lls, inner_ok = run_em(B, d, params, method, cfg, diagnostics["flags"])
        diagnostics["inner_converged"].append(inner_ok)
        trace.extend((rnd, it, v) for it, v in enumerate(lls))
        new_e = np.argmax(soft, axis=1)  # lowest index wins ties
        if np.array_equal(new_e, e):
            converged = True
            break
        if np.any(np.bincount(new_e, minlength=k) == 0):
            new_e = _reseed_empty(new_e, soft, k, cfg.soft_threshold, diagnostics)
        e = new_e
        P = refresh_edge_prob(g, soft, e, cfg.soft_threshold)
        frac = np.bincount(e, minlength=k) / g.n
        lam = rates_from_edge_prob(P, frac, g.n)
        pi = params.pi_hat if np.all(params.pi_hat > 0) else frac
        params = BlockParams(pi_hat=pi, P_hat=P, Lambda_hat=lam,
                             Theta_hat=_row_normalize(lam))
    if not diagnostics["flags"]:
        del diagnostics["flags"]
    return FitResult(labels=e, soft=soft, params=params, loglik_trace=trace,
                     outer_rounds_run=rounds, converged=converged, method=method,
                     diagnostics=diagnostics)
