import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgkern.graph import GraphError, GraphPoint, build_graph, interval_graph, spider_graph, star_graph
from mgkern.paths import (
    CombinatorialPath,
    PathBudgetExceeded,
    branching_bound,
    enumerate_paths,
    form_scattering_amplitude,
    iter_brute_force_paths,
    path_geometry,
    path_skeleton,
    scattering_amplitude,
)


def test_trivial_path_amplitudes():
    g = star_graph(3)
    c = CombinatorialPath(("e0",))
    assert scattering_amplitude(c, g) == 1.0
    assert form_scattering_amplitude(c, g) == 1.0


def test_star_transmission_and_reflection():
    g = star_graph(3)
    through = CombinatorialPath(("e0", "e1"), ("c",))
    back = CombinatorialPath(("e0", "e0"), ("c",))
    assert scattering_amplitude(through, g) == pytest.approx(2 / 3)
    assert scattering_amplitude(back, g) == pytest.approx(2 / 3 - 1)
    # legs leave the centre: both orientation signs are +1, so the form amplitude flips sign
    assert form_scattering_amplitude(through, g) == pytest.approx(-2 / 3)
    assert form_scattering_amplitude(back, g) == pytest.approx(1 / 3)


def test_leaf_reflection_is_one():
    g = interval_graph(1.0)
    c = CombinatorialPath(("e", "e"), ("v1",))
    assert scattering_amplitude(c, g) == 1.0
    # Dirichlet-type reflection for the form kernel
    assert form_scattering_amplitude(c, g) == -1.0


def test_invalid_path_rejected():
    g = star_graph(3)
    with pytest.raises(GraphError):
        scattering_amplitude(CombinatorialPath(("e0", "e1"), ("l0",)), g)
    with pytest.raises(GraphError):
        CombinatorialPath(("e0", "e1"), ())


def test_path_geometry_lengths():
    g = star_graph(3)
    x, y = GraphPoint("e0", 0.25), GraphPoint("e1", 0.5)
    c = CombinatorialPath(("e0", "e1"), ("c",))
    assert path_geometry(g, c, x, y).length == pytest.approx(0.75)
    c2 = CombinatorialPath(("e0", "e0", "e1"), ("l0", "c"))
    assert path_geometry(g, c2, x, y).length == pytest.approx(0.75 + 1.0 + 0.5)


def _key(c):
    return (c.edges, c.vertices)


@pytest.mark.parametrize("name", ["star", "lasso", "interval"])
def test_enumeration_matches_brute_force(name):
    if name == "star":
        g = star_graph(3, 1.0)
        x, y = GraphPoint("e0", 0.3), GraphPoint("e2", 0.6)
    elif name == "interval":
        g = interval_graph(1.0)
        x, y = GraphPoint("e", 0.3), GraphPoint("e", 0.6)
    else:
        g = build_graph(["a", "b"], [("s", "a", "b", 1.0), ("loop", "b", "b", 1.0)])
        x, y = GraphPoint("s", 0.2), GraphPoint("loop.a", 0.3)
    L = 4.0
    fast = {_key(c) for c, geo in enumerate_paths(g, x, y, L)}
    slow = set()
    for c in iter_brute_force_paths(g, x, y, max_vertices=int(L / g.r_min) + 2):
        if path_geometry(g, c, x, y).length <= L:
            slow.add(_key(c))
    assert fast == slow


def test_budget_exceeded():
    g = star_graph(5, 0.1)
    with pytest.raises(PathBudgetExceeded):
        enumerate_paths(g, GraphPoint("e0", 0.05), GraphPoint("e1", 0.05), 3.0, budget=100)


def test_skeleton_agrees_with_enumeration():
    g = star_graph(3, 1.0)
    x, y = GraphPoint("e0", 0.3), GraphPoint("e1", 0.7)
    t = 0.2
    paths = enumerate_paths(g, x, y, 8.0)
    direct = sum(scattering_amplitude(c, g) * math.exp(-geo.length**2 / (4 * t)) for c, geo in paths)
    sk = path_skeleton(g, "e0", "e1", 8.0)
    # distance from the exit end of e0 plus interior plus distance to y from the entry end
    dx = np.where(sk.exit_side == 0, x.x, 1 - x.x)
    dy = np.where(sk.entry_side == 0, y.x, 1 - y.x)
    d = dx + sk.interior + dy
    keep = d <= 8.0
    via = float(np.sum(sk.amplitude[keep] * np.exp(-d[keep] ** 2 / (4 * t))))
    assert via == pytest.approx(direct, rel=1e-13, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 4.0))
def test_path_count_below_branching_bound(a):
    """Number of paths with length <= rho + a stays under (deg_max + 1)^((diam + a)/r_min)."""
    g = star_graph(3, 1.0)
    x, y = GraphPoint("e0", 0.4), GraphPoint("e1", 0.1)
    rho = 0.5
    n = len(enumerate_paths(g, x, y, rho + a))
    diam = 2.0
    assert n <= (g.max_degree + 1) ** ((diam + a) / g.r_min)


def test_branching_bound_values():
    assert branching_bound(interval_graph(1.0)) >= 1
    assert branching_bound(star_graph(4)) >= 3


def test_rays_have_no_far_reflection():
    g = spider_graph(3)
    paths = enumerate_paths(g, GraphPoint("leg0", 1.0), GraphPoint("leg1", 1.0), 10.0)
    assert {len(c) for c, _ in paths} == {1}
