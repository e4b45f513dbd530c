import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mgkern.functions import GraphFunction
from mgkern.graph import build_graph, circle_union_graph, interval_graph, spider_graph, star_graph, two_edge_circle


def lasso_graph():
    """A unit stick ending in a loop of length 2 (stored as two halves)."""
    return build_graph(["a", "b"], [("stick", "a", "b", 1.0), ("loop", "b", "b", 2.0)])


GRAPHS = {
    "interval": lambda: interval_graph(1.0),
    "circle": lambda: two_edge_circle(1.0),
    "spider3": lambda: spider_graph(3),
    "star3": lambda: star_graph(3, 1.0),
    "star5": lambda: star_graph(5, 1.0),
    "circles2": lambda: circle_union_graph(2, 1.0),
    "lasso": lasso_graph,
}
COMPACT = [k for k in GRAPHS if k != "spider3"]


def smooth_function(g, rng):
    """Continuous test function: linear interpolation of random vertex values plus interior bumps.

    On rays the vertex value is kept and a decaying bump ``c x e^{-x}`` added.
    """
    vv = {v: rng.normal() for v in g.vertices}
    values, derivs = {}, {}
    for e in g.edge_ids:
        el = g.element(e)
        c, s = rng.normal(size=2)
        if g.is_ray(e):
            a = vv[el.tail]
            values[e] = lambda x, a=a, c=c: a + c * x * np.exp(-x)
            derivs[e] = lambda x, c=c: c * (1 - x) * np.exp(-x)
            continue
        a, b, L = vv[el.tail], vv[el.head], g.length(e)
        values[e] = lambda x, a=a, b=b, L=L, c=c, s=s: a + (b - a) * x / L + c * x * (L - x) / L**2 + s * np.sin(2 * np.pi * x / L)
        derivs[e] = lambda x, a=a, b=b, L=L, c=c, s=s: (b - a) / L + c * (L - 2 * x) / L**2 + s * 2 * np.pi / L * np.cos(2 * np.pi * x / L)
    return GraphFunction.from_callables(g, values, derivs)


def function_suite(g, n_random=3, seed=7):
    rng = np.random.default_rng(seed)
    fam = [smooth_function(g, rng) for _ in range(n_random)]
    e = g.edge_ids[0]
    r = min(g.length(e), 4.0)
    fam.append(GraphFunction.bump(g, e, r / 2, r / 4))
    for v in g.vertices:
        if g.degree(v) >= 2:
            e = g.incidences[v][0][0]
            fam.append(GraphFunction.vertex_ramp(g, v, e, min(0.25, g.length(e) / 4)))
            break
    return fam


@pytest.fixture(params=list(GRAPHS))
def any_graph(request):
    return GRAPHS[request.param]()


@pytest.fixture(params=COMPACT)
def compact_graph(request):
    return GRAPHS[request.param]()


# ----------------------------------------------------------------------
# acceptance summary: one line per criterion in the terminal report
# ----------------------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
