"""Sparse graph storage, block compression and labeling comparison metrics.

Labels are 0-based ``int64`` arrays inside the package; the 1..K convention
only appears when reading or writing label files.
"""
from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

log = logging.getLogger(__name__)

# "# nodes: N" before the first edge declares integer ids 0..N-1 up front
_NODES_DIRECTIVE = re.compile(r"#\s*nodes:\s*(\d+)\s*$")


class EdgeListError(ValueError):
    """Malformed or empty edge-list input."""


class UnsupportedModeError(ValueError):
    """Operation requested on a graph of the wrong orientation."""


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Immutable 0/1 graph in CSR form.

    ``indptr``/``indices`` hold sorted out-neighbour lists. For undirected
    graphs every edge is stored under both endpoints; ``edge_count`` counts
    each undirected edge once (each arc once for directed graphs).
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    directed: bool = False
    node_ids: tuple[str, ...] | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_arrays(cls, n, rows, cols, directed=False, node_ids=None, diagnostics=None):
        """Build from (row, col) index arrays.

        Duplicates are collapsed. Undirected input is symmetrized and
        self-loops are dropped; directed input keeps self-loops.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
            raise ValueError("edge endpoint out of range")
        if not directed:
            keep = rows != cols
            rows, cols = rows[keep], cols[keep]
            rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
        key = np.unique(rows * n + cols)
        rows, cols = key // n, key % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(
            n=int(n),
            indptr=indptr,
            indices=cols.astype(np.int64),
            directed=directed,
            node_ids=tuple(node_ids) if node_ids is not None else None,
            diagnostics=dict(diagnostics or {}),
        )

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def edge_count(self) -> int:
        if self.directed:
            return self.nnz
        return self.nnz // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def row_index(self) -> np.ndarray:
        """Source node of every stored entry, aligned with ``indices``."""
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))

    def csr(self) -> sp.csr_matrix:
        """Adjacency as a float64 scipy CSR matrix (cached)."""
        cached = self.__dict__.get("_csr")
        if cached is None:
            data = np.ones(self.nnz, dtype=np.float64)
            cached = sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))
            object.__setattr__(self, "_csr", cached)
        return cached

    def in_neighbors(self):
        """Mirrored in-neighbour index ``(indptr, indices)``; equals the
        out-index for undirected graphs."""
        if not self.directed:
            return self.indptr, self.indices
        cached = self.__dict__.get("_in_index")
        if cached is None:
            t = self.csr().T.tocsr()
            t.sort_indices()
            cached = (t.indptr.astype(np.int64), t.indices.astype(np.int64))
            object.__setattr__(self, "_in_index", cached)
        return cached

    def to_dense(self) -> np.ndarray:
        return self.csr().toarray().astype(np.int64)

    def edges(self) -> Iterable[tuple[int, int]]:
        """Yield each edge once (i < j for undirected graphs)."""
        rows = self.row_index()
        if self.directed:
            mask = np.ones(rows.size, dtype=bool)
        else:
            mask = rows < self.indices
        for i, j in zip(rows[mask].tolist(), self.indices[mask].tolist()):
            yield i, j


def from_edge_list(lines: Iterable[str] | TextIO, directed: bool = False,
                   nodes: Sequence[str] | None = None) -> SparseGraph:
    """Parse whitespace-separated edge lines into a :class:`SparseGraph`.

    Tokens map to dense indices in first-appearance order. ``nodes``
    pre-seeds the mapping (so isolated nodes survive a round trip).
    """
    index: dict[str, int] = {}
    if nodes is not None:
        for tok in nodes:
            index.setdefault(str(tok), len(index))
    rows, cols = [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _NODES_DIRECTIVE.match(line)
            if m and not rows:
                for tok in range(int(m.group(1))):
                    index.setdefault(str(tok), len(index))
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(f"line {lineno}: expected two node tokens, got {len(parts)}")
        u = index.setdefault(parts[0], len(index))
        v = index.setdefault(parts[1], len(index))
        rows.append(u)
        cols.append(v)
    if not index:
        raise EdgeListError("empty edge list")
    n = len(index)
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    self_loops = 0 if directed else int(np.count_nonzero(r == c))
    g = SparseGraph.from_arrays(n, r, c, directed=directed, node_ids=list(index))
    stored = len(rows) - self_loops
    duplicates = stored - g.edge_count if directed else stored - _count_unique_pairs(r, c, n)
    g.diagnostics.update(lines=len(rows), self_loops_dropped=self_loops,
                         duplicates_collapsed=int(duplicates))
    if self_loops or duplicates:
        log.info("edge list normalized: %d self-loops dropped, %d duplicates collapsed",
                 self_loops, duplicates)
    return g


def _count_unique_pairs(r, c, n):
    keep = r != c
    lo = np.minimum(r[keep], c[keep])
    hi = np.maximum(r[keep], c[keep])
    return int(np.unique(lo * n + hi).size)


def write_edge_list(g: SparseGraph, fh: TextIO) -> None:
    ids = g.node_ids
    if ids is None or ids == tuple(map(str, range(g.n))):
        fh.write(f"# nodes: {g.n}\n")
        ids = None
    rows = g.row_index()
    mask = np.ones(rows.size, bool) if g.directed else rows < g.indices
    src, dst = rows[mask], g.indices[mask]
    if ids is None:
        fh.writelines(f"{i} {j}\n" for i, j in zip(src.tolist(), dst.tolist()))
    else:
        fh.writelines(f"{ids[i]} {ids[j]}\n" for i, j in zip(src.tolist(), dst.tolist()))


def read_labels(fh: Iterable[str]) -> np.ndarray:
    """Read a 1-based label file into a 0-based array."""
    vals = []
    for lineno, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            v = int(line)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: not an integer label: {line!r}") from exc
        if v < 1:
            raise ValueError(f"line {lineno}: labels start at 1, got {v}")
        vals.append(v - 1)
    return np.asarray(vals, dtype=np.int64)


def write_labels(labels: np.ndarray, fh: TextIO) -> None:
    fh.write("".join(f"{int(v) + 1}\n" for v in labels))


def check_labels(e, n: int | None = None, k: int | None = None) -> np.ndarray:
    e = np.asarray(e, dtype=np.int64)
    if e.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if n is not None and e.size != n:
        raise ValueError(f"expected {n} labels, got {e.size}")
    if e.size and e.min() < 0:
        raise ValueError("negative label")
    if k is not None and e.size and e.max() >= k:
        raise ValueError(f"label {int(e.max()) + 1} outside 1..{k}")
    return e


def _num_groups(*labelings) -> int:
    return max((int(x.max()) + 1 for x in labelings if x.size), default=1)


def degrees(g: SparseGraph) -> np.ndarray:
    return np.diff(g.indptr)


def two_path_counts(g: SparseGraph) -> np.ndarray:
    """Row sums of A^2, i.e. the sum of neighbour degrees for each node."""
    if g.directed:
        raise UnsupportedModeError("two_path_counts requires an undirected graph")
    d = degrees(g)
    # integer segment sums over the CSR rows; exact and order-independent
    out = np.zeros(g.n, dtype=np.int64)
    rows = g.row_index()
    np.add.at(out, rows, d[g.indices])
    return out


def block_sums(g: SparseGraph, e, k: int | None = None) -> np.ndarray:
    """n x K matrix of neighbour counts per block, ``b_ik = sum_j A_ij [e_j = k]``."""
    e = check_labels(e, g.n, k)
    k = k if k is not None else _num_groups(e)
    flat = g.row_index() * k + e[g.indices]
    return np.bincount(flat, minlength=g.n * k).reshape(g.n, k).astype(np.int64)


def confusion(e, c, k: int | None = None) -> np.ndarray:
    """Joint label frequencies ``R[k, a] = #{i: e_i = k, c_i = a} / n``."""
    e = check_labels(e)
    c = check_labels(c)
    if e.size != c.size:
        raise ValueError(f"length mismatch: {e.size} vs {c.size}")
    k = k if k is not None else _num_groups(e, c)
    counts = np.bincount(e * k + c, minlength=k * k).reshape(k, k)
    return counts / e.size


def block_edge_counts(g: SparseGraph, e, k: int | None = None):
    """Ordered-pair edge counts ``O`` between blocks and the pair counts ``n_kl``."""
    e = check_labels(e, g.n, k)
    k = k if k is not None else _num_groups(e)
    flat = e[g.row_index()] * k + e[g.indices]
    o = np.bincount(flat, minlength=k * k).reshape(k, k).astype(np.int64)
    sizes = np.bincount(e, minlength=k).astype(np.int64)
    npairs = np.outer(sizes, sizes)
    np.fill_diagonal(npairs, sizes * (sizes - 1))
    return o, npairs


def _xlogy(x, y):
    out = np.zeros_like(x, dtype=np.float64)
    mask = x > 0
    out[mask] = x[mask] * np.log(y[mask])
    return out


def nmi(e, c) -> float:
    """Normalized mutual information, normalized by the joint entropy."""
    e = check_labels(e)
    c = check_labels(c)
    if e.size != c.size:
        raise ValueError(f"length mismatch: {e.size} vs {c.size}")
    e_const = np.unique(e).size <= 1
    c_const = np.unique(c).size <= 1
    if e_const and c_const:
        return 1.0
    if e_const or c_const:
        return 0.0
    r = confusion(e, c)
    rows = r.sum(axis=1, keepdims=True)
    cols = r.sum(axis=0, keepdims=True)
    mi = _xlogy(r, r / np.where(rows * cols > 0, rows * cols, 1.0)).sum()
    joint = -_xlogy(r, r).sum()
    return float(min(max(mi / joint, 0.0), 1.0))


def mismatch_ratio(pred, truth, k: int | None = None) -> float:
    """Fraction of misclassified nodes, minimized over relabelings of ``pred``."""
    pred = check_labels(pred)
    truth = check_labels(truth)
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    if k is None:
        kp, kt = _num_groups(pred), _num_groups(truth)
        if kp > kt:
            raise ValueError(f"prediction uses {kp} groups, truth only {kt}")
        k = kt
    n = pred.size
    agree = np.bincount(pred * k + truth, minlength=k * k).reshape(k, k)
    if k <= 8:
        best = max(
            sum(int(agree[a, perm[a]]) for a in range(k))
            for perm in itertools.permutations(range(k))
        )
    else:
        ri, ci = linear_sum_assignment(-agree)
        best = int(agree[ri, ci].sum())
    return (n - best) / n
