"""Loader for labelled real-world graphs stored as GML (e.g. political blogs)."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .graph import SparseGraph

_BLOCK = re.compile(r"\b(node|edge)\s*\[(.*?)\]", re.S)
_FIELD = re.compile(r"(\w+)\s+(\"[^\"]*\"|\S+)")


def _fields(body):
    return {k: v.strip('"') for k, v in _FIELD.findall(body)}


def load_gml(path, label_key: str = "value", largest_component: bool = True):
    """Read nodes, edges and an integer node attribute from a GML file.

    Edge directions, duplicate edges and self-loops are discarded. Returns
    ``(graph, labels)`` with 0-based labels in order of first appearance of
    each attribute value.
    """
    text = Path(path).read_text(errors="replace")
    ids, raw_labels, src, dst = [], [], [], []
    for kind, body in _BLOCK.findall(text):
        f = _fields(body)
        if kind == "node":
            ids.append(f["id"])
            raw_labels.append(f.get(label_key))
        else:
            src.append(f["source"])
            dst.append(f["target"])
    index = {tok: i for i, tok in enumerate(ids)}
    rows = np.array([index[s] for s in src], dtype=np.int64)
    cols = np.array([index[t] for t in dst], dtype=np.int64)
    g = SparseGraph.from_arrays(len(ids), rows, cols, directed=False, node_ids=ids)
    values = {v: i for i, v in enumerate(dict.fromkeys(raw_labels))}
    labels = np.array([values[v] for v in raw_labels], dtype=np.int64)
    if largest_component:
        _, comp = connected_components(g.csr(), directed=False)
        keep = np.flatnonzero(comp == np.bincount(comp).argmax())
        g, labels = induced_subgraph(g, keep), labels[keep]
    return g, labels


def induced_subgraph(g: SparseGraph, keep) -> SparseGraph:
    keep = np.asarray(keep, dtype=np.int64)
    sub = g.csr()[keep][:, keep].tocoo()
    ids = [g.node_ids[i] for i in keep] if g.node_ids else None
    return SparseGraph.from_arrays(keep.size, sub.row, sub.col, directed=g.directed, node_ids=ids)
