"""Heat and form semigroups on metric graphs and Bakry-Emery ratio measurements.

Every routine takes a kernel provider: any object with
``evaluate(kind, t, ex, xs, ey, ys) -> (matrix, tail_bound, paths)``.
:class:`~mgkern.kernels.PathSumKernel` and
:class:`~mgkern.spectral.SpectralKernel` both qualify.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .functions import GraphFunction, GridFunction, graph_quadrature
from .graph import TAIL, GraphError, GraphPoint, MetricGraph
from .kernels import default_grid, default_kernel, kernel_ratio_sup

Grid = Mapping[str, np.ndarray]


class KernelProvider(Protocol):
    def evaluate(self, kind: str, t: float, ex: str, xs, ey: str, ys): ...


_THREADS = 1


def set_threads(n: int) -> None:
    """Worker count for per-edge evaluation (1 means serial)."""
    global _THREADS
    _THREADS = max(1, int(n))


def _map(fn, items):
    if _THREADS == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(_THREADS) as pool:
        return list(pool.map(fn, items))


def _ray_reach(g: MetricGraph, grid: Grid) -> float:
    reach = 0.0
    for e, xs in grid.items():
        if g.is_ray(e) and len(xs):
            reach = max(reach, float(np.max(xs)))
    return reach + g.diam_bound


def integrate_against(
    g: MetricGraph,
    kind: str,
    t: float,
    quad: Mapping[str, tuple[np.ndarray, np.ndarray]],
    samples: Mapping[str, np.ndarray],
    grid: Grid,
    kernel: KernelProvider,
) -> GridFunction:
    """``x -> int K(x, y) h(y) dy`` with ``h`` given by ``samples`` at the quadrature nodes."""
    items = list(grid.items())
    active = [(ey, quad[ey][0], quad[ey][1] * samples[ey]) for ey in quad if np.any(samples[ey] != 0)]
    l1 = math.fsum(float(np.abs(wf).sum()) for _, _, wf in active)

    def one(item):
        ex, xs = item
        xs = np.asarray(xs, dtype=float)
        acc = np.zeros(len(xs))
        bound = 0.0
        for ey, ys, wf in active:
            K, b, _ = kernel.evaluate(kind, t, ex, xs, ey, ys)
            acc += K @ wf
            bound = max(bound, b)
        return acc, bound

    results = _map(one, items)
    values = {ex: r[0] for (ex, _), r in zip(items, results)}
    err = max((r[1] for r in results), default=0.0) * l1
    return GridFunction({e: np.asarray(x, dtype=float) for e, x in items}, values, error=err)


def _apply(g, kind, t, f: GraphFunction, grid, kernel):
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    kernel = kernel or default_kernel(g)
    grid = default_grid(g) if grid is None else grid
    quad = graph_quadrature(g, t, f, _ray_reach(g, grid))
    samples = {e: f(e, quad[e][0]) for e in quad}
    for e, s in samples.items():
        if not np.all(np.isfinite(s)):
            raise ValueError(f"function is not finite on edge {e!r}")
    out = integrate_against(g, kind, t, quad, samples, grid, kernel)
    out.source = None
    return out


def apply_heat(g: MetricGraph, t: float, f: GraphFunction, grid: Grid | None = None, kernel=None) -> GridFunction:
    """``(P_t f)(x) = int p_t(x, y) f(y) dy`` at the grid points."""
    return _apply(g, "heat", t, f, grid, kernel)


def apply_form_heat(g: MetricGraph, t: float, omega: GraphFunction, grid: Grid | None = None, kernel=None) -> GridFunction:
    """Form semigroup applied to the 1-form ``omega`` (edge components in edge orientation)."""
    return _apply(g, "form", t, omega, grid, kernel)


def heat_gradient(g: MetricGraph, t: float, f: GraphFunction, grid: Grid | None = None, kernel=None) -> GridFunction:
    """``(P_t f)'`` by integrating the x-derivative of the kernel against ``f``."""
    grid = default_grid(g) if grid is None else grid
    for e, xs in grid.items():
        for x in np.asarray(xs, dtype=float):
            v = g.vertex_at(GraphPoint(e, float(x)))
            if v is not None:
                raise GraphError(f"derivative undefined at vertex {v!r}")
    return _apply(g, "grad", t, f, grid, kernel)


def carre_du_champ(f: GridFunction | GraphFunction, grid: Grid | None = None) -> GridFunction:
    """``Gamma(f) = (f')^2``, exact from an analytic source, else by finite differences."""
    if isinstance(f, GraphFunction):
        if grid is None:
            grid = default_grid(f.g)
        f = f.sample(grid)
    if f.source is not None:
        d = f.source.derivative()
        return GridFunction(f.nodes, {e: d(e, x) ** 2 for e, x in f.nodes.items()}, f.weights)
    vals = {}
    for e, x in f.nodes.items():
        if len(x) < 2:
            raise GraphError(f"need at least two samples on edge {e!r} to differentiate")
        order = np.argsort(x)
        d = np.empty(len(x))
        d[order] = np.gradient(f.values[e][order], x[order], edge_order=2 if len(x) > 2 else 1)
        vals[e] = d**2
    return GridFunction(f.nodes, vals, f.weights)


def intertwining_residual(g: MetricGraph, t: float, f: GraphFunction, grid: Grid | None = None, kernel=None) -> float:
    """Sup over the grid of ``|(P_t f)' - P_t^form(f')|``."""
    grid = default_grid(g) if grid is None else grid
    lhs = heat_gradient(g, t, f, grid, kernel)
    rhs = apply_form_heat(g, t, f.derivative(), grid, kernel)
    return (lhs - rhs).sup_norm()


# ----------------------------------------------------------------------
# Bakry-Emery ratios
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RatioSample:
    value: float
    argmax: GraphPoint | None
    used: int
    skipped: int


def be_ratio(g: MetricGraph, t: float, f: GraphFunction, grid: Grid | None = None, kernel=None, guard: float = 10.0) -> RatioSample:
    """Sup of ``sqrt(Gamma(P_t f)) / P_t sqrt(Gamma(f))`` over grid points with a trustworthy denominator."""
    grid = default_grid(g) if grid is None else grid
    num = heat_gradient(g, t, f, grid, kernel)
    den = apply_heat(g, t, f.sqrt_gamma(), grid, kernel)
    floor = guard * (num.error + den.error) + 1e-300
    best, arg, used, skipped = -math.inf, None, 0, 0
    for e, xs in grid.items():
        d = den.values[e]
        ok = d > floor
        used += int(ok.sum())
        skipped += int((~ok).sum())
        if ok.any():
            r = np.where(ok, np.abs(num.values[e]) / np.where(ok, d, 1.0), -np.inf)
            i = int(np.argmax(r))
            if r[i] > best:
                best, arg = float(r[i]), GraphPoint(e, float(np.asarray(xs)[i]))
    if used == 0:
        raise ValueError("no grid point has a denominator above the error floor")
    return RatioSample(best, arg, used, skipped)


def probe_width(g: MetricGraph, t: float) -> float:
    w = 1e-3 * math.sqrt(t)
    if math.isfinite(g.r_min):
        w = min(w, g.r_min / 8.0)
    return w


def vertex_probes(g: MetricGraph, t: float, min_degree: int = 2) -> list[tuple[str, str, GraphFunction]]:
    """Ramp functions whose derivative is an indicator of a short segment at a vertex."""
    w = probe_width(g, t)
    out = []
    for v in g.vertices:
        if g.degree(v) < min_degree:
            continue
        for e, _ in g.incidences[v]:
            try:
                out.append((v, e, GraphFunction.vertex_ramp(g, v, e, w)))
            except GraphError:
                continue
    return out


def probe_grid(g: MetricGraph, t: float, v: str, e: str) -> dict[str, np.ndarray]:
    w = probe_width(g, t)
    radii = w * np.array([0.125, 0.25, 0.5, 0.75])
    side = TAIL if g.element(e).tail == v else 1 - TAIL
    xs = radii if side == TAIL else g.length(e) - radii
    return {e: xs}


@dataclass(frozen=True)
class BEReport:
    """Measured weak Bakry-Emery constant: worst ratio over times, functions and grid points."""

    t: float
    ratio_sup: float
    argmax: GraphPoint | None
    curve: tuple[tuple[float, float], ...]
    kernel_ratio: tuple[tuple[float, float], ...]
    points_used: int
    points_skipped: int
    n_functions: int
    certified: bool
    tolerance: float = 1e-6

    @property
    def dominated(self) -> bool:
        """Whether every per-time ratio stays below the kernel-ratio supremum (plus tolerance)."""
        kr = dict(self.kernel_ratio)
        return all(r <= kr[t] + self.tolerance * max(1.0, kr[t]) for t, r in self.curve if t in kr)


def be_constant(
    g: MetricGraph,
    t_grid: Sequence[float],
    f_family: Sequence[GraphFunction] | Callable[[float], Sequence[GraphFunction]] | None = None,
    grid: Grid | None = None,
    kernel=None,
    cross_check: bool = True,
) -> BEReport:
    """Max of :func:`be_ratio` over ``t_grid`` and ``f_family``.

    Without a family, vertex ramps are used and each is sampled just next to
    its vertex, where the ratio peaks.  With ``cross_check`` the pairwise
    kernel ratio is measured on the same points.
    """
    kernel = kernel or default_kernel(g)
    curve, kcurve = [], []
    best, arg, best_t, used, skipped, nf = -math.inf, None, None, 0, 0, 0
    for t in t_grid:
        if f_family is None:
            jobs = [(f, _merge(probe_grid(g, t, v, e), grid)) for v, e, f in vertex_probes(g, t)]
            if not jobs:
                jobs = [(f, grid if grid is not None else default_grid(g)) for f in _smooth_family(g)]
        else:
            fam = f_family(t) if callable(f_family) else f_family
            jobs = [(f, grid if grid is not None else default_grid(g)) for f in fam]
        t_best = -math.inf
        pts: dict[str, set] = {}
        for f, fgrid in jobs:
            try:
                r = be_ratio(g, t, f, fgrid, kernel)
            except ValueError:
                continue
            nf += 1
            used += r.used
            skipped += r.skipped
            for e, xs in fgrid.items():
                pts.setdefault(e, set()).update(np.asarray(xs, dtype=float).tolist())
            t_best = max(t_best, r.value)
            if r.value > best:
                best, arg, best_t = r.value, r.argmax, t
        curve.append((t, t_best))
        if cross_check and pts:
            kgrid = {e: np.array(sorted(s)) for e, s in pts.items()}
            kr = kernel_ratio_sup(g, t, kgrid, kernel)
            kcurve.append((t, kr.value))
    if nf == 0:
        raise ValueError("no usable grid point for any function")
    return BEReport(best_t, best, arg, tuple(curve), tuple(kcurve), used, skipped, nf, used > 0)


def _merge(a: Grid, b: Grid | None) -> dict[str, np.ndarray]:
    out = {e: np.asarray(x, dtype=float) for e, x in a.items()}
    for e, x in (b or {}).items():
        out[e] = np.unique(np.concatenate([out.get(e, np.zeros(0)), np.asarray(x, dtype=float)]))
    return out


def _smooth_family(g: MetricGraph) -> list[GraphFunction]:
    fam = []
    for e in g.edges:
        r = g.length(e)
        fam.append(GraphFunction.bump(g, e, r / 2, r / 4))
    return fam


@dataclass(frozen=True)
class VarianceCheck:
    lhs: np.ndarray
    rhs: np.ndarray
    tolerance: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs + self.tolerance))

    @property
    def margin(self) -> float:
        return float(np.min(self.rhs - self.lhs)) if len(self.lhs) else math.inf


def variance_decay_check(g: MetricGraph, t: float, f: GraphFunction, C1: float, grid: Grid | None = None, kernel=None) -> VarianceCheck:
    """``Gamma(P_t f)`` against ``C1^2 / (2t) (P_t(f^2) - (P_t f)^2)`` on the grid."""
    grid = default_grid(g) if grid is None else grid
    grad = heat_gradient(g, t, f, grid, kernel)
    pf = apply_heat(g, t, f, grid, kernel)
    pf2 = apply_heat(g, t, f.square(), grid, kernel)
    lhs = grad.flat() ** 2
    rhs = C1**2 / (2 * t) * (pf2.flat() - pf.flat() ** 2)
    scale = max(1.0, f.sup_bound()) ** 2
    tol = 1e-9 * scale / t + 2 * (grad.error + pf.error + pf2.error) * scale
    return VarianceCheck(lhs, rhs, tol)


# ----------------------------------------------------------------------
# semigroup identities
# ----------------------------------------------------------------------


def semigroup_law_residual(g: MetricGraph, s: float, t: float, f: GraphFunction, grid: Grid | None = None, kernel=None) -> float:
    """Sup over the grid of ``|P_s(P_t f) - P_{s+t} f|``."""
    kernel = kernel or default_kernel(g)
    grid = default_grid(g) if grid is None else grid
    quad = graph_quadrature(g, s, None, _ray_reach(g, grid))
    nodes = {e: q[0] for e, q in quad.items()}
    inner = apply_heat(g, t, f, nodes, kernel)
    outer = integrate_against(g, "heat", s, quad, inner.values, grid, kernel)
    direct = apply_heat(g, s + t, f, grid, kernel)
    return (outer - direct).sup_norm()


def chapman_kolmogorov_residual(g: MetricGraph, s: float, t: float, x: GraphPoint, y: GraphPoint, kernel=None) -> float:
    """``|int p_s(x, z) p_t(z, y) dz - p_{s+t}(x, y)|``."""
    kernel = kernel or default_kernel(g)
    x, y = g.resolve(x), g.resolve(y)
    quad = graph_quadrature(g, min(s, t), None, max(x.x if g.is_ray(x.edge) else 0.0, y.x if g.is_ray(y.edge) else 0.0) + g.diam_bound)
    total = 0.0
    for ez, (zs, ws) in quad.items():
        a, _, _ = kernel.evaluate("heat", s, x.edge, [x.x], ez, zs)
        b, _, _ = kernel.evaluate("heat", t, y.edge, [y.x], ez, zs)
        total += float((a[0] * b[0]) @ ws)
    direct, _, _ = kernel.evaluate("heat", s + t, x.edge, [x.x], y.edge, [y.x])
    return abs(total - float(direct[0, 0]))


def mass_residual(g: MetricGraph, t: float, grid: Grid | None = None, kernel=None) -> float:
    """Sup over the grid of ``|int p_t(x, y) dy - 1|`` using exact edge integrals."""
    kernel = kernel or default_kernel(g)
    grid = default_grid(g) if grid is None else grid
    worst = 0.0
    for ex, xs in grid.items():
        total = np.zeros(len(xs))
        for ey in g.edge_ids:
            v, _, _ = kernel.interval_integral("heat", t, ex, xs, ey, 0.0, g.length(ey))
            total += v
        worst = max(worst, float(np.abs(total - 1.0).max()))
    return worst
