import numpy as np
import pytest

from plcomm.graph import SparseGraph

# criterion -> (passed, detail); passed is None when the criterion was skipped
ACCEPTANCE_RESULTS: dict[str, tuple[bool | None, str]] = {}


def random_graph(rng, n, p, directed=False):
    """Erdos-Renyi graph plus its dense adjacency matrix."""
    if directed:
        A = (rng.random((n, n)) < p).astype(np.int64)
    else:
        U = np.triu(rng.random((n, n)) < p, 1)
        A = (U | U.T).astype(np.int64)
    rows, cols = np.nonzero(A)
    return SparseGraph.from_arrays(n, rows, cols, directed=directed), A


def graph_from_edges(n, edges, directed=False):
    rows = [u for u, _ in edges]
    cols = [v for _, v in edges]
    return SparseGraph.from_arrays(n, rows, cols, directed=directed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[name]
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {name}: {detail}")
