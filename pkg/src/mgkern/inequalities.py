"""Perimeters, Cheeger and Buser bounds, and the Brunn-Minkowski failure on spiders."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .functions import composite_gauss
from .graph import HEAD, TAIL, GraphError, GraphPoint, MetricGraph, geodesic_distance
from .kernels import default_kernel


class PerimeterUndefined(GraphError):
    """The set has a boundary point at a vertex of degree two or more."""


@dataclass(frozen=True)
class IntervalSet:
    """Finite union of disjoint closed intervals ``(edge, a, b)``, each inside one edge or ray."""

    g: MetricGraph
    intervals: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        items = []
        for e, a, b in self.intervals:
            r = self.g.length(e)
            a, b = float(a), float(b)
            if not (0.0 <= a < b <= r):
                raise GraphError(f"interval ({a}, {b}) is empty or leaves edge {e!r}")
            items.append((e, a, b))
        items.sort()
        for (e1, _, b1), (e2, a2, _) in zip(items, items[1:]):
            if e1 == e2 and a2 <= b1:
                raise GraphError(f"intervals on edge {e1!r} overlap or touch at {a2}")
        object.__setattr__(self, "intervals", tuple(items))

    @classmethod
    def parse(cls, g: MetricGraph, lines: Sequence[str]) -> "IntervalSet":
        """Lines of the form ``interval <edge> <a> <b>``."""
        out = []
        for raw in lines:
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] != "interval" or len(parts) != 4:
                raise GraphError(f"cannot parse set line {raw.strip()!r}")
            try:
                out.append((parts[1], float(parts[2]), float(parts[3])))
            except ValueError:
                raise GraphError(f"malformed number in {raw.strip()!r}") from None
        return cls(g, tuple(out))

    @property
    def measure(self) -> float:
        return math.fsum(b - a for _, a, b in self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def boundary_points(self) -> list[GraphPoint]:
        """Endpoints lying strictly inside their edge."""
        pts = []
        for e, a, b in self.intervals:
            r = self.g.length(e)
            if a > 0.0:
                pts.append(GraphPoint(e, a))
            if b < r:
                pts.append(GraphPoint(e, b))
        return pts

    def vertex_germs(self) -> dict[str, int]:
        """Number of incident edge ends covered by the set, per touched vertex."""
        out: dict[str, int] = {}
        for e, a, b in self.intervals:
            if a == 0.0:
                v = self.g.endpoint(e, TAIL)
                out[v] = out.get(v, 0) + 1
            if b == self.g.length(e) and not self.g.is_ray(e):
                v = self.g.endpoint(e, HEAD)
                out[v] = out.get(v, 0) + 1
        return out

    def contains(self, e: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for e2, a, b in self.intervals:
            if e2 == e:
                out |= (x >= a) & (x <= b)
        return out


def combinatorial_perimeter(E: IntervalSet) -> int:
    """Number of boundary points of ``E``; vertices with a partial germ are refused."""
    for v, covered in E.vertex_germs().items():
        deg = E.g.degree(v)
        if 0 < covered < deg:
            raise PerimeterUndefined(f"boundary of the set touches vertex {v!r} ({covered} of {deg} edge ends)")
    return len(E.boundary_points())


def _x_quadrature(g: MetricGraph, E: IntervalSet, t: float, e: str):
    r = g.length(e)
    breaks = [a for e2, a, b in E.intervals if e2 == e] + [b for e2, a, b in E.intervals if e2 == e]
    if not math.isfinite(r):
        r = max([0.0, *[b for b in breaks if math.isfinite(b)]]) + 2.0 * math.sqrt(t * math.log(1e18))
    pts = [0.0, r] + [b for b in breaks if 0.0 < b < r]
    return composite_gauss(pts, 0.5 * math.sqrt(t))


def heat_of_indicator(g: MetricGraph, E: IntervalSet, t: float, e: str, xs, kind: str = "heat", kernel=None) -> np.ndarray:
    """``P_t 1_E`` (``kind='heat'``) or its derivative (``kind='grad'``) at ``xs`` on ``e``, exactly per path."""
    kernel = kernel or default_kernel(g)
    out = np.zeros(len(np.atleast_1d(xs)))
    for ey, a, b in E.intervals:
        v, _, _ = kernel.interval_integral(kind, t, e, xs, ey, a, b)
        out += v
    return out


def heat_total_variation(g: MetricGraph, E: IntervalSet, t: float, kernel=None) -> float:
    """``int |(P_t 1_E)'| dmu``."""
    total = 0.0
    for e in g.edge_ids:
        xs, ws = _x_quadrature(g, E, t, e)
        total += float(ws @ np.abs(heat_of_indicator(g, E, t, e, xs, "grad", kernel)))
    return total


@dataclass(frozen=True)
class PerimeterReport:
    combinatorial: int | None
    heat_estimate: float
    heat_values: tuple[tuple[float, float], ...]
    refused: str | None = None

    def bracketed(self, C1: float, tol: float = 1e-3) -> bool:
        if self.combinatorial is None:
            return False
        return self.heat_estimate / C1**2 - tol <= self.combinatorial <= self.heat_estimate * (1 + tol)


HEAT_TIMES = (1e-3, 5e-4, 2.5e-4)


def extrapolate_to_zero(times: Sequence[float], values: Sequence[float]) -> float:
    """Richardson extrapolation in ``sqrt(t)`` with a regime guard.

    The polynomial fit through all points is used when successive
    differences shrink no faster than a power of ``sqrt(t)`` would allow.
    When they collapse faster (exponentially small corrections, typical once
    ``sqrt(t)`` is well below the distance between boundary points) the
    finest value is already converged and extrapolating would only amplify
    the remaining error, so it is returned as is.
    """
    order = np.argsort(times)[::-1]
    t = np.asarray(times, dtype=float)[order]
    h = np.asarray(values, dtype=float)[order]
    if len(h) < 2:
        return float(h[-1])
    d = np.abs(np.diff(h))
    if len(d) >= 2 and d[-2] > 0:
        ratio = d[-1] / d[-2]
        # pure sqrt(t) or t corrections give ratios near 0.71 or 0.5 for halving t
        if ratio < 0.25:
            return float(h[-1])
    if np.all(d <= 1e-14 * max(1.0, abs(h[-1]))):
        return float(h[-1])
    coeffs = np.polyfit(np.sqrt(t), h, len(h) - 1)
    return float(coeffs[-1])


def perimeter(g: MetricGraph, E: IntervalSet, times: Sequence[float] = HEAT_TIMES, kernel=None) -> PerimeterReport:
    """Combinatorial perimeter plus the heat-flow estimate ``lim int |(P_t 1_E)'|`` as ``t -> 0``."""
    refused = None
    try:
        comb = combinatorial_perimeter(E)
    except PerimeterUndefined as exc:
        comb, refused = None, str(exc)
    if E.is_empty:
        return PerimeterReport(comb, 0.0, tuple((t, 0.0) for t in times), refused)
    vals = [(t, heat_total_variation(g, E, t, kernel)) for t in times]
    est = extrapolate_to_zero([t for t, _ in vals], [v for _, v in vals])
    return PerimeterReport(comb, est, tuple(vals), refused)


@dataclass(frozen=True)
class L1Check:
    lhs: float
    rhs: float

    def holds(self, tol: float = 1e-9) -> bool:
        return self.lhs <= self.rhs * (1 + tol) + 1e-14


def l1_heat_bound_check(g: MetricGraph, E: IntervalSet, t: float, C1: float, kernel=None) -> L1Check:
    """``||P_t 1_E - 1_E||_1`` against ``C1^3 sqrt(2t) P(E)``."""
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    if E.is_empty:
        return L1Check(0.0, 0.0)
    per = combinatorial_perimeter(E)
    lhs = 0.0
    for e in g.edge_ids:
        xs, ws = _x_quadrature(g, E, t, e)
        diff = heat_of_indicator(g, E, t, e, xs, "heat", kernel) - E.contains(e, xs)
        lhs += float(ws @ np.abs(diff))
    return L1Check(lhs, C1**3 * math.sqrt(2 * t) * per)


# ----------------------------------------------------------------------
# Cheeger and Buser
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CheegerResult:
    h: float
    argmin: IntervalSet | None
    candidates: int
    resolution: int


def _single_intervals(g: MetricGraph, n: int):
    """All grid intervals per finite edge with interior-boundary counts and touched vertices."""
    idx = g.vertex_index
    rows = []
    for e in g.edges:
        el = g.edges[e]
        r = el.length
        pts = np.linspace(0.0, r, n + 1)
        i, j = np.triu_indices(n + 1, k=1)
        a, b = pts[i], pts[j]
        touch_t = np.where(i == 0, idx[el.tail], -1)
        touch_h = np.where(j == n, idx[el.head], -1)
        per = (i > 0).astype(int) + (j < n).astype(int)
        for cols in zip(a, b, i, j, per, touch_t, touch_h):
            rows.append((e,) + cols)
    return rows


def cheeger_constant(g: MetricGraph, resolution: int = 64, max_intervals: int = 2) -> CheegerResult:
    """Minimum of ``P(E)/mu(E)`` over unions of at most two grid intervals with ``mu(E) <= mu(X)/2``.

    Endpoints sit on ``resolution`` equal steps per edge.  Sets whose
    boundary would sit on a vertex of degree two or more are left out, so
    the value is an upper bound for the Cheeger constant.
    """
    if g.rays:
        raise GraphError("Cheeger search needs a compact graph")
    if g.n_components != 1:
        raise GraphError("Cheeger search needs a connected graph")
    half = g.total_length / 2
    deg = np.array([g.degree(v) for v in g.vertices])
    rows = _single_intervals(g, resolution)
    eid = np.array([list(g.edges).index(r[0]) for r in rows])
    a = np.array([r[1] for r in rows])
    b = np.array([r[2] for r in rows])
    gi = np.array([r[3] for r in rows])
    gj = np.array([r[4] for r in rows])
    per = np.array([r[5] for r in rows], dtype=float)
    t0 = np.array([r[6] for r in rows])
    t1 = np.array([r[7] for r in rows])
    mu = b - a

    def vertex_ok(v, count):
        return (v < 0) | (count == deg[np.maximum(v, 0)])

    best, arg, count = math.inf, None, 0
    ok1 = vertex_ok(t0, 1) & vertex_ok(t1, 1) & (mu <= half + 1e-12) & (per > 0)
    count += int(ok1.sum())
    if ok1.any():
        q = np.where(ok1, per / mu, np.inf)
        k = int(np.argmin(q))
        best, arg = float(q[k]), (k,)
    if max_intervals >= 2:
        n = len(rows)
        for i in range(n - 1):
            j = np.arange(i + 1, n)
            same = eid[j] == eid[i]
            disjoint = ~same | (gi[j] > gj[i]) | (gj[j] < gi[i])
            m = mu[i] + mu[j]
            ok = disjoint & (m <= half + 1e-12)
            # vertices touched by the first interval
            for v in (t0[i], t1[i]):
                if v >= 0:
                    c = 1 + (t0[j] == v) + (t1[j] == v)
                    ok &= c == deg[v]
            for tv in (t0[j], t1[j]):
                c = 1 + (tv == t0[i]) + (tv == t1[i])
                ok &= vertex_ok(tv, c)
            p = per[i] + per[j]
            ok &= p > 0
            if not ok.any():
                continue
            count += int(ok.sum())
            q = np.where(ok, p / m, np.inf)
            k = int(np.argmin(q))
            if q[k] < best - 1e-15:
                best, arg = float(q[k]), (i, int(j[k]))
    if arg is None:
        return CheegerResult(math.inf, None, count, resolution)
    E = IntervalSet(g, tuple((rows[k][0], rows[k][1], rows[k][2]) for k in arg))
    return CheegerResult(best, E, count, resolution)


def buser_constant(C1: float) -> float:
    return 2.0 * C1**6 / (1.0 - math.exp(-1.0)) ** 2


@dataclass(frozen=True)
class BuserReport:
    lambda1: float
    h: float
    C1: float
    upper: float
    lower: float

    @property
    def holds(self) -> bool:
        return self.lower <= self.lambda1 <= self.upper


def buser_check(g: MetricGraph, C1: float, lambda1: float | None = None, h: float | None = None, resolution: int = 64) -> BuserReport:
    """``h^2/4 <= lambda_1 <= 2 C1^6 (1 - 1/e)^{-2} h^2`` with in-repo ``lambda_1`` and ``h``."""
    from .spectral import eigensolve, poincare_constant

    if lambda1 is None:
        lam = 4.0 * (math.pi / min(g.edges[e].length for e in g.edges)) ** 2
        lambda1 = poincare_constant(eigensolve(g, lam))
    if h is None:
        h = cheeger_constant(g, resolution).h
    return BuserReport(lambda1, h, C1, buser_constant(C1) * h * h, h * h / 4.0)


# ----------------------------------------------------------------------
# midpoint sets and Brunn-Minkowski on spiders
# ----------------------------------------------------------------------


class UnsupportedConfiguration(GraphError):
    pass


@dataclass(frozen=True)
class MidpointSet:
    set: IntervalSet
    t: float

    @property
    def measure(self) -> float:
        return self.set.measure


def _spider_legs(g: MetricGraph) -> str:
    if g.edges or len(g.vertices) != 1 or len(g.rays) < 2:
        raise UnsupportedConfiguration("midpoint sets are implemented for spiders only")
    return g.vertices[0]


def midpoint_set(g: MetricGraph, A: IntervalSet, B: IntervalSet, t: float) -> MidpointSet:
    """Points ``z`` with ``d(x, z) = (1 - t) d(x, y)`` and ``d(z, y) = t d(x, y)`` for some ``x in A``, ``y in B``.

    Supported: ``A`` one interval on a leg, ``B`` intervals with a common
    radial range on other legs.  ``t = 1`` returns ``A`` and ``t = 0``
    returns ``B``.
    """
    _spider_legs(g)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if len(A.intervals) != 1:
        raise UnsupportedConfiguration("A must be a single interval")
    leg_a, a1, a2 = A.intervals[0]
    b_legs = {e for e, _, _ in B.intervals}
    ranges = {(b1, b2) for _, b1, b2 in B.intervals}
    if leg_a in b_legs or len(ranges) != 1:
        raise UnsupportedConfiguration("B must share one radial range on legs other than A's")
    b1, b2 = ranges.pop()
    # signed coordinate: positive on A's leg, negative towards B's legs
    lo, hi = t * a1 - (1 - t) * b2, t * a2 - (1 - t) * b1
    parts = []
    if hi > 0:
        parts.append((leg_a, max(lo, 0.0), hi))
    if lo < 0:
        for e in sorted(b_legs):
            parts.append((e, max(-hi, 0.0), -lo))
    parts = [p for p in parts if p[2] > p[1]]
    return MidpointSet(IntervalSet(g, tuple(parts)), t)


def uniform_atoms(E: IntervalSet, n: int) -> tuple[list[GraphPoint], np.ndarray]:
    """``n`` cell-midpoint atoms per interval, weighted to a probability measure uniform on ``E``."""
    pts, w = [], []
    total = E.measure
    for e, a, b in E.intervals:
        cells = a + (np.arange(n) + 0.5) * (b - a) / n
        pts += [GraphPoint(e, float(x)) for x in cells]
        w += [(b - a) / n / total] * n
    return pts, np.array(w)


def transport_cost(g: MetricGraph, xs: list[GraphPoint], ys: list[GraphPoint]) -> np.ndarray:
    return np.array([[geodesic_distance(g, x, y) ** 2 for y in ys] for x in xs])


def wasserstein2(g: MetricGraph, xs: list[GraphPoint], wx: np.ndarray, ys: list[GraphPoint], wy: np.ndarray) -> float:
    """Exact ``W_2`` between discrete measures via the transport linear program."""
    C = transport_cost(g, xs, ys)
    m, n = C.shape
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    b_eq = np.concatenate([wx, wy])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return math.sqrt(max(res.fun, 0.0))


@dataclass(frozen=True)
class BMReport:
    K: float
    scale: float
    t: float
    lhs: float
    rhs: float
    W2: float

    @property
    def margin(self) -> float:
        """``rhs - lhs``; positive means the convexity inequality fails."""
        return self.rhs - self.lhs

    @property
    def violated(self) -> bool:
        return self.margin > 0


def bm_configuration(g: MetricGraph, scale: float) -> tuple[IntervalSet, IntervalSet]:
    """``A = scale (1, 2)`` on the first leg, ``B = scale (1, 2)`` on the next two."""
    _spider_legs(g)
    legs = list(g.rays)
    if len(legs) < 3:
        raise UnsupportedConfiguration("need a spider with at least three legs")
    A = IntervalSet(g, ((legs[0], scale, 2 * scale),))
    B = IntervalSet(g, ((legs[1], scale, 2 * scale), (legs[2], scale, 2 * scale)))
    return A, B


def bm_transport(g: MetricGraph, scale: float, n_atoms: int = 64) -> float:
    A, B = bm_configuration(g, scale)
    xa, wa = uniform_atoms(A, n_atoms)
    xb, wb = uniform_atoms(B, n_atoms)
    return wasserstein2(g, xa, wa, xb, wb)


def bm_sides(g: MetricGraph, K: float, scale: float, t: float, n_atoms: int = 64, W: float | None = None) -> BMReport:
    A, B = bm_configuration(g, scale)
    mid = midpoint_set(g, A, B, t)
    if W is None:
        W = bm_transport(g, scale, n_atoms)
    lhs = math.log(mid.measure)
    rhs = t * math.log(A.measure) + (1 - t) * math.log(B.measure) + 0.5 * K * t * (1 - t) * W * W
    return BMReport(K, scale, t, lhs, rhs, W)


def brunn_minkowski_violation(
    g: MetricGraph, K: float, scale: float | None = None, t: float | None = None, n_atoms: int = 64
) -> BMReport:
    """Find ``t`` (and, when needed, a smaller ``scale``) where the convexity inequality fails.

    Without ``t`` the margin is maximised over a grid in ``[0.7, 0.99]``.
    Without ``scale`` the unit configuration is tried first; if it does not
    fail, the scale is halved until it does, the sign change is located by
    bisection, and half of the last failing scale is reported.
    """
    ts = [t] if t is not None else list(np.linspace(0.70, 0.99, 30))

    def best_at(s):
        W = bm_transport(g, s, n_atoms)
        return max((bm_sides(g, K, s, tt, n_atoms, W) for tt in ts), key=lambda r: r.margin)

    if scale is not None:
        return best_at(scale)
    s = 1.0
    while not best_at(s).violated:
        s /= 2
        if s < 1e-12:
            return best_at(s)
    if s == 1.0:
        return best_at(1.0)
    lo, hi = s, 2 * s
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if best_at(mid).violated:
            lo = mid
        else:
            hi = mid
    return best_at(lo / 2)
