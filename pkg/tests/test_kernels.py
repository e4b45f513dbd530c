import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mgkern.graph import GraphError, GraphPoint, interval_graph, spider_graph, star_graph, two_edge_circle
from mgkern.kernels import (
    PathSumKernel,
    default_grid,
    detect_T0,
    fit_gloc,
    gaussian_comparison,
    gloc_profile,
    heat_kernel,
    kernel_ratio_sup,
    spider_form_kernel,
    spider_kernel,
    tail_bound,
    truncation_cutoff,
)

STAR = star_graph(3, 1.0)
STAR_K = PathSumKernel(STAR)


@settings(max_examples=80, deadline=None)
@given(
    st.integers(2, 6),
    st.sampled_from([0.01, 0.05, 0.2, 1.0]),
    st.integers(0, 5),
    st.floats(0.0, 3.0),
    st.integers(0, 5),
    st.floats(0.0, 3.0),
)
def test_spider_path_sum_matches_oracle(N, t, j, x, k, y):
    j, k = j % N, k % N
    K = PathSumKernel(spider_graph(N))
    p = K.value("heat", t, GraphPoint(f"leg{j}", x), GraphPoint(f"leg{k}", y)).value
    q = K.value("form", t, GraphPoint(f"leg{j}", x), GraphPoint(f"leg{k}", y)).value
    assert abs(p - oracles.spider_heat(N, t, j, x, k, y)) <= 1e-12
    assert abs(q - oracles.spider_form(N, t, j, x, k, y)) <= 1e-12
    # the library closed forms agree with the test oracle as well
    assert spider_kernel(N, t, j, x, k, y) == pytest.approx(oracles.spider_heat(N, t, j, x, k, y), abs=1e-15)
    assert spider_form_kernel(N, t, j, x, k, y) == pytest.approx(oracles.spider_form(N, t, j, x, k, y), abs=1e-15)


@pytest.mark.parametrize("t", [0.001, 0.05, 0.5, 3.0])
def test_interval_heat_is_neumann_series(t):
    g = interval_graph(1.0)
    K = PathSumKernel(g)
    xs = np.linspace(0, 1, 7)
    P, bound, _ = K.evaluate("heat", t, "e", xs, "e", xs)
    F, _, _ = K.evaluate("form", t, "e", xs, "e", xs)
    for i, x in enumerate(xs):
        for j, y in enumerate(xs):
            assert P[i, j] == pytest.approx(oracles.interval_neumann(t, x, y), abs=1e-11)
            assert F[i, j] == pytest.approx(oracles.interval_dirichlet(t, x, y), abs=1e-11)
    assert bound <= 1e-12


@pytest.mark.parametrize("t", [0.05, 0.3, 1.0])
def test_star_against_mode_expansion(t):
    xs = [0.0, 0.2, 0.7, 1.0]
    for i in range(3):
        for j in range(3):
            P, _, _ = STAR_K.evaluate("heat", t, f"e{i}", xs, f"e{j}", xs)
            F, _, _ = STAR_K.evaluate("form", t, f"e{i}", xs, f"e{j}", xs)
            for a, x in enumerate(xs):
                for b, y in enumerate(xs):
                    assert P[a, b] == pytest.approx(oracles.star_heat(3, t, i, x, j, y), abs=1e-10)
                    assert F[a, b] == pytest.approx(oracles.star_form(3, t, i, x, j, y), abs=1e-10)


def test_frozen_star_value():
    # three-star, unit legs, t = 0.1, x = e0:0.3, y = e1:0.5; reference from the mode expansion
    ref = oracles.star_heat(3, 0.1, 0, 0.3, 1, 0.5)
    assert ref == pytest.approx(0.12025330569774, abs=1e-12)
    assert heat_kernel(STAR, 0.1, GraphPoint("e0", 0.3), GraphPoint("e1", 0.5)).value == pytest.approx(ref, abs=1e-12)


def test_circle_heat_is_periodic_series():
    g = two_edge_circle(1.0)
    K = PathSumKernel(g)
    t = 0.2
    # e1 runs v1 -> v2 over [0, 1], e2 runs v1 -> v2 as well, so arclength on e2 is 2 - x
    v, _, _ = K.evaluate("heat", t, "e1", [0.3], "e2", [0.4])
    assert v[0, 0] == pytest.approx(oracles.circle_heat(t, 0.3, 2 - 0.4, 2.0), abs=1e-12)


@pytest.mark.parametrize("kind,fd_kind,wrt", [("grad", "heat", "x"), ("form_grad_y", "form", "y")])
def test_derivative_kernels_match_finite_differences(kind, fd_kind, wrt):
    t, h = 0.1, 1e-5
    x, y = 0.4, 0.6
    for ey in ("e0", "e1"):
        D, _, _ = STAR_K.evaluate(kind, t, "e0", [x], ey, [y])
        if wrt == "x":
            hi, _, _ = STAR_K.evaluate(fd_kind, t, "e0", [x + h], ey, [y])
            lo, _, _ = STAR_K.evaluate(fd_kind, t, "e0", [x - h], ey, [y])
        else:
            hi, _, _ = STAR_K.evaluate(fd_kind, t, "e0", [x], ey, [y + h])
            lo, _, _ = STAR_K.evaluate(fd_kind, t, "e0", [x], ey, [y - h])
        assert D[0, 0] == pytest.approx((hi[0, 0] - lo[0, 0]) / (2 * h), abs=1e-7)


def test_gradient_refused_at_vertex():
    with pytest.raises(GraphError):
        STAR_K.value("grad", 0.1, GraphPoint("e0", 0.0), GraphPoint("e1", 0.5))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1.0), st.integers(0, 2), st.floats(0, 1), st.integers(0, 2), st.floats(0, 1))
def test_kernels_symmetric_and_heat_positive(t, i, x, j, y):
    a, _, _ = STAR_K.evaluate("heat", t, f"e{i}", [x], f"e{j}", [y])
    b, _, _ = STAR_K.evaluate("heat", t, f"e{j}", [y], f"e{i}", [x])
    assert a[0, 0] == pytest.approx(b[0, 0], abs=1e-13)
    assert a[0, 0] > 0
    fa, _, _ = STAR_K.evaluate("form", t, f"e{i}", [x], f"e{j}", [y])
    fb, _, _ = STAR_K.evaluate("form", t, f"e{j}", [y], f"e{i}", [x])
    assert fa[0, 0] == pytest.approx(fb[0, 0], abs=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 1.0), st.floats(0.5, 6.0))
def test_tail_bound_covers_dropped_terms(t, L):
    """Partial sums at interior length L differ from the converged sum by at most the certified tail."""
    x, y = 0.3, 0.8
    full = STAR_K.skeleton("e0", "e1", 40.0)
    dx = np.where(full.exit_side == 0, x, 1 - x)
    dy = np.where(full.entry_side == 0, y, 1 - y)
    d = dx + full.interior + dy
    terms = full.amplitude * oracles.gauss(t, d)
    dropped = float(np.abs(terms[full.interior > L]).sum())
    assert dropped <= tail_bound(STAR, t, L) * (1 + 1e-12)


def test_tail_bound_decreasing_and_cutoff():
    t = 0.1
    b = [tail_bound(STAR, t, L) for L in (1, 2, 4, 8)]
    assert all(x > y for x, y in zip(b, b[1:]))
    L = truncation_cutoff(STAR, t, 1e-12)
    assert tail_bound(STAR, t, L) <= 1e-12
    assert tail_bound(STAR, t, 0.99 * L) > 1e-12
    assert truncation_cutoff(STAR, t, math.inf, rho=0.7) == 0.7


def test_invalid_inputs():
    with pytest.raises(ValueError):
        truncation_cutoff(STAR, -1.0, 1e-12)
    with pytest.raises(ValueError):
        truncation_cutoff(STAR, 1.0, 0.0)
    with pytest.raises(ValueError):
        STAR_K.evaluate("heat", 0.0, "e0", [0.1], "e0", [0.2])
    with pytest.raises(ValueError):
        STAR_K.evaluate("nonsense", 1.0, "e0", [0.1], "e0", [0.2])


@pytest.mark.parametrize("kind", ["heat", "form", "grad"])
def test_interval_integral_matches_quadrature(kind):
    t = 0.07
    xs = np.array([0.15, 0.5, 0.85])
    a, b = 0.2, 0.9
    got, _, _ = STAR_K.interval_integral(kind, t, "e0", xs, "e1", a, b)
    ys, ws = np.polynomial.legendre.leggauss(200)
    ys = 0.5 * (b - a) * ys + 0.5 * (a + b)
    ws = 0.5 * (b - a) * ws
    M, _, _ = STAR_K.evaluate(kind, t, "e0", xs, "e1", ys)
    np.testing.assert_allclose(got, M @ ws, atol=1e-12)


def test_ray_integral_is_total_mass():
    K = PathSumKernel(spider_graph(3))
    tot = sum(K.interval_integral("heat", 0.3, "leg0", [0.4], f"leg{i}", 0.0, math.inf)[0][0] for i in range(3))
    assert tot == pytest.approx(1.0, abs=1e-12)


def test_ratio_sup_on_spiders():
    for N in (2, 3, 4):
        g = spider_graph(N)
        rep = kernel_ratio_sup(g, 0.05, default_grid(g, 24, 0.05))
        assert rep.value <= N - 1 + 1e-9
        assert rep.pairs_used > 0


def test_gaussian_comparison_and_T0():
    cmp = gaussian_comparison(STAR, 0.01, default_grid(STAR, 12))
    assert 0 < cmp.lower <= 1 + 1e-9
    assert cmp.upper >= 1
    T0 = detect_T0(STAR, [0.001, 0.01, 0.1], 0.25, default_grid(STAR, 12))
    assert T0 >= 0.01


def test_gloc_fit_finite():
    ts = np.geomspace(1e-3, 1, 5)
    Q = gloc_profile(STAR, ts, n_x=8, kernel=STAR_K, y_density=4)
    C, beta = fit_gloc(ts, Q)
    assert np.isfinite(C) and np.isfinite(beta) and C > 0 and beta >= 0
