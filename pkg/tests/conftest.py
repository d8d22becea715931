import numpy as np
import pytest

from crtcover.rand_tree import DiscreteTree, OffspringLaw, sample_conditioned_gw


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_gw(n, rng, law=None):
    return sample_conditioned_gw(law or OffspringLaw.poisson1(), n, rng)


def path_tree(n):
    return DiscreteTree.path(n)


def all_pairs_bfs(tree):
    """Distance matrix by plain BFS from every vertex (test oracle)."""
    n = tree.n
    adj = [[] for _ in range(n)]
    for v in range(n):
        p = tree.parent[v]
        if p >= 0:
            adj[v].append(int(p))
            adj[int(p)].append(v)
    out = np.full((n, n), -1, dtype=int)
    for s in range(n):
        out[s, s] = 0
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for w in adj[u]:
                    if out[s, w] < 0:
                        out[s, w] = out[s, u] + 1
                        nxt.append(w)
            frontier = nxt
    return out


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
