import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import lasso_graph
from mgkern.functions import composite_gauss
from mgkern.graph import build_graph, circle_union_graph, interval_graph, spider_graph, star_graph, two_edge_circle
from mgkern.kernels import PathSumKernel
from mgkern.spectral import (
    BelowT1,
    SpectralError,
    SpectralKernel,
    eigen_table,
    eigen_table_csv,
    eigensolve,
    harmonic_forms,
    incidence_matrix,
    large_time_be_constant,
    large_time_t1,
    poincare_constant,
    poincare_orientation,
    sweep_M,
    weyl_window,
)

PI2 = math.pi**2


def test_interval_spectrum():
    table = eigen_table(eigensolve(interval_graph(1.0), 100.0))
    assert [m for _, _, m in table] == [1, 1, 1, 1]
    np.testing.assert_allclose([lam for _, lam, _ in table], [0, PI2, 4 * PI2, 9 * PI2], atol=1e-10)


def test_star_spectrum_exact():
    table = eigen_table(eigensolve(star_graph(3, 1.0), 60.0))
    expect = [(0.0, 1), (PI2 / 4, 2), (PI2, 1), (9 * PI2 / 4, 2), (4 * PI2, 1)]
    assert [m for _, _, m in table] == [m for _, m in expect]
    np.testing.assert_allclose([lam for _, lam, _ in table], [lam for lam, _ in expect], atol=1e-10)


def test_circle_multiplicity_two():
    table = eigen_table(eigensolve(two_edge_circle(1.0), 40.0))
    assert [m for _, _, m in table] == [1, 2, 2]
    np.testing.assert_allclose([lam for _, lam, _ in table], [0, PI2, 4 * PI2], atol=1e-10)


@pytest.mark.parametrize(
    "g,edges",
    [
        (star_graph(3, 1.0), [("c", "l0", 1.0), ("c", "l1", 1.0), ("c", "l2", 1.0)]),
        (lasso_graph(), [("a", "b", 1.0), ("b", "m", 1.0), ("m", "b", 1.0)]),
        (
            build_graph(["a", "b", "c"], [("p", "a", "b", 1.0), ("q", "b", "c", 0.7), ("r", "b", "c", 1.3)]),
            [("a", "b", 1.0), ("b", "c", 0.7), ("b", "c", 1.3)],
        ),
    ],
)
def test_against_finite_elements(g, edges):
    ours = np.sort([p.lam for p in eigensolve(g, 80.0)])[:6]
    fe = oracles.fd_eigenvalues(edges, n_per_unit=800, count=6)
    np.testing.assert_allclose(ours, fe, rtol=2e-4, atol=1e-8)


def test_eigenfunctions_orthonormal_and_kirchhoff():
    g = lasso_graph()
    pairs = eigensolve(g, 60.0)
    G = np.zeros((len(pairs), len(pairs)))
    for e in g.edge_ids:
        xs, ws = composite_gauss([0.0, g.length(e)], 0.05)
        V = np.array([p.value(e, xs) for p in pairs])
        G += (V * ws) @ V.T
    np.testing.assert_allclose(G, np.eye(len(pairs)), atol=1e-10)
    # continuity and zero derivative sum at the degree-3 vertex
    for p in pairs:
        vals, flux = [], 0.0
        for e, side in g.incidences["b"]:
            x = 0.0 if side == 0 else g.length(e)
            vals.append(float(p.value(e, x)))
            flux += (1 if side == 0 else -1) * float(p.derivative(e, x))
        assert max(vals) - min(vals) < 1e-9
        assert abs(flux) < 1e-8 * max(1.0, p.k)


def test_weyl_counts():
    g = star_graph(3, 1.0)
    pairs = eigensolve(g, 400.0)
    lo, hi = weyl_window(g, 400.0)
    assert lo <= len(pairs) <= hi


def test_poincare_constant_and_csv():
    pairs = eigensolve(interval_graph(1.0), 50.0)
    assert poincare_constant(pairs) == pytest.approx(PI2, abs=1e-10)
    text = eigen_table_csv(pairs)
    assert text.splitlines()[0] == "index,lambda,multiplicity"
    with pytest.raises(SpectralError):
        poincare_constant(pairs[:1])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_harmonic_dimension_is_cycle_rank(n):
    g = circle_union_graph(n, 1.0)
    H = harmonic_forms(g)
    assert H.dimension == n
    B = incidence_matrix(g)
    np.testing.assert_allclose(B @ H.vectors.T, 0.0, atol=1e-12)
    r = np.array([g.length(e) for e in H.edges])
    np.testing.assert_allclose(H.vectors @ (r[:, None] * H.vectors.T), np.eye(n), atol=1e-12)


def test_trees_have_no_harmonic_forms():
    assert harmonic_forms(star_graph(4)).dimension == 0
    assert harmonic_forms(interval_graph(2.0)).dimension == 0


def test_poincare_orientation_detection():
    h = poincare_orientation(circle_union_graph(2, 1.0))
    assert h is not None and set(h.values()) <= {1, -1}
    g = circle_union_graph(2, 1.0)
    B = incidence_matrix(g)
    from mgkern.spectral import _edge_order

    vec = np.array([h[e] for e in _edge_order(g)])
    np.testing.assert_allclose(B @ vec, 0.0)
    assert poincare_orientation(two_edge_circle(1.0)) is not None
    assert poincare_orientation(star_graph(3)) is None
    assert poincare_orientation(star_graph(4)) is None  # the leaves have degree one
    assert poincare_orientation(spider_graph(4)) is None


@pytest.mark.parametrize("t", [0.05, 0.5, 2.0])
def test_spectral_matches_path_sums(t):
    g = star_graph(3, 1.0)
    sk = SpectralKernel.for_time(g, 0.05)
    pk = PathSumKernel(g)
    xs = np.array([0.1, 0.5, 0.9])
    for kind in ("heat", "grad", "form", "form_grad_y"):
        a, _, _ = sk.evaluate(kind, t, "e0", xs, "e1", xs)
        b, _, _ = pk.evaluate(kind, t, "e0", xs, "e1", xs)
        np.testing.assert_allclose(a, b, atol=1e-9)


def test_form_kernel_long_time_is_harmonic_projection():
    g = two_edge_circle(1.0)
    sk = SpectralKernel(g, eigensolve(g, 100.0), 100.0)
    v, _, _ = sk.evaluate("form", 50.0, "e1", [0.3], "e2", [0.6])
    assert v[0, 0] == pytest.approx(-0.5, abs=1e-12)
    v2, _, _ = PathSumKernel(g).evaluate("form", 50.0, "e1", [0.3], "e2", [0.6])
    assert v2[0, 0] == pytest.approx(-0.5, abs=1e-10)


def test_spectral_refuses_insufficient_cutoff():
    g = star_graph(3, 1.0)
    sk = SpectralKernel(g, eigensolve(g, 50.0), 50.0)
    with pytest.raises(SpectralError):
        sk.evaluate("heat", 0.01, "e0", [0.1], "e0", [0.2])


def test_large_time_constant():
    g = star_graph(3, 1.0)
    pairs = eigensolve(g, 400.0)
    M = sweep_M(g, 1.0, PathSumKernel(g))
    t1 = large_time_t1(g, pairs, 400.0, M, 1.0)
    assert t1 > 2.0
    cs = [large_time_be_constant(g, pairs, 400.0, M, 1.0, t) for t in (1.1 * t1, 1.5 * t1, 3 * t1)]
    assert all(a > b for a, b in zip(cs, cs[1:]))
    with pytest.raises(BelowT1):
        large_time_be_constant(g, pairs, 400.0, M, 1.0, 1.5)
    with pytest.raises(BelowT1):
        large_time_be_constant(g, pairs, 400.0, M, 1.0, 0.99 * t1)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_star_with_uneven_legs_against_fe(a, b):
    g = build_graph(["c", "x", "y", "z"], [("p", "c", "x", 1.0), ("q", "c", "y", a), ("r", "c", "z", b)])
    ours = np.sort([p.lam for p in eigensolve(g, 30.0)])[:4]
    fe = oracles.fd_eigenvalues([("c", "x", 1.0), ("c", "y", a), ("c", "z", b)], n_per_unit=300, count=4)
    np.testing.assert_allclose(ours, fe[: len(ours)], rtol=2e-3, atol=1e-7)
