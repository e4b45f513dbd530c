"""Heat kernels of the Kirchhoff and anti-Kirchhoff Laplacians as path sums.

``p_t(x, y) = sum_c S(c) g_t(d_c(x, y))`` and the form kernel replaces
``S`` by the anti-Kirchhoff amplitude.  Sums are truncated at a metric
length ``L_max`` chosen from a certified bound on the neglected tail.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, logsumexp

from .graph import TAIL, GraphError, GraphPoint, MetricGraph, ball_measure
from .paths import PathBudgetExceeded, PathSkeleton, branching_bound, path_skeleton

KINDS = ("heat", "form", "grad", "form_grad_y")


class KernelToleranceError(RuntimeError):
    """The requested tolerance cannot be certified within the path budget."""

    def __init__(self, message: str, achieved_bound: float):
        super().__init__(message)
        self.achieved_bound = achieved_bound


def gaussian(t, u):
    """``(4 pi t)^{-1/2} exp(-u^2 / 4t)``."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError(f"time must be positive, got {t}")
    u = np.asarray(u, dtype=float)
    out = np.exp(-u * u / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)
    return out if out.ndim else float(out)


def _gaussian_mass(t: float, u: np.ndarray) -> np.ndarray:
    """``int_u^inf g_t`` for ``u >= 0`` (and the odd extension below zero)."""
    return 0.5 * erfc(u / (2.0 * math.sqrt(t)))


@dataclass(frozen=True)
class KernelValue:
    value: float
    tail_bound: float
    paths_used: int


# ----------------------------------------------------------------------
# tail certificate
# ----------------------------------------------------------------------


def _log_envelope(t: float, u: float, kind: str) -> float:
    """Log of a non-increasing majorant of the per-path term magnitude at length ``u``."""
    if kind in ("grad", "form_grad_y"):
        u = max(u, math.sqrt(2.0 * t))
        return math.log(u / (2.0 * t)) - u * u / (4.0 * t) - 0.5 * math.log(4.0 * math.pi * t)
    return -u * u / (4.0 * t) - 0.5 * math.log(4.0 * math.pi * t)


def tail_bound(g: MetricGraph, t: float, L: float, kind: str = "heat", sides: int = 2) -> float:
    """Bound on the sum over every path whose interior length exceeds ``L``.

    Such a path visits ``m >= 2`` vertices, has ``d_c > L`` and
    ``d_c >= (m - 1) r_min``, and there are at most ``sides * D^(m-1)`` of
    them with nonzero amplitude, ``D`` being :func:`~mgkern.paths.branching_bound`.
    Amplitudes are bounded by one in absolute value.
    """
    if not g.edges:
        return 0.0
    r = g.r_min
    D = branching_bound(g)
    logD = math.log(D)
    logs = []
    # m - 1 = j interior edges; for j * r <= L every term is bounded by the envelope at L
    J = int(math.floor(L / r))
    if J >= 1:
        if D == 1:
            log_count = math.log(J)
        else:
            log_count = logD + math.log(math.expm1(J * logD)) - math.log(D - 1.0)
        logs.append(math.log(sides) + log_count + _log_envelope(t, L, kind))
    j = max(J + 1, 1)
    while True:
        term = math.log(sides) + j * logD + _log_envelope(t, j * r, kind)
        logs.append(term)
        # terms are eventually log-concave decreasing; stop once negligible and falling
        if j * r > L and term < logs[0] - 80 and term < -750:
            break
        if term < -745 and j * r > 2 * L + 10 * math.sqrt(t):
            break
        j += 1
        if j > 100000:
            break
    return float(math.exp(logsumexp(logs))) if logs else 0.0


def truncation_cutoff(
    g: MetricGraph, t: float, eps: float, rho: float = 0.0, kind: str = "heat", sides: int = 2
) -> float:
    """Smallest (to 1e-9 relative) ``L_max >= rho`` whose certified tail is ``<= eps``."""
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    if eps <= 0:
        raise ValueError(f"tolerance must be positive, got {eps}")
    if math.isinf(eps) or tail_bound(g, t, rho, kind, sides) <= eps:
        return rho
    lo = rho
    hi = max(rho, g.r_min if math.isfinite(g.r_min) else 1.0, math.sqrt(t))
    while tail_bound(g, t, hi, kind, sides) > eps:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if tail_bound(g, t, mid, kind, sides) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------


@dataclass
class PathSumKernel:
    """Path-sum kernels on ``g`` with a per-edge-pair skeleton cache.

    ``eps`` is the tolerance on the certified tail of every evaluation.
    The cache is guarded by a lock so one instance can serve several
    threads.
    """

    g: MetricGraph
    eps: float = 1e-12
    budget: int = 2_000_000
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def skeleton(self, ex: str, ey: str, L: float) -> PathSkeleton:
        with self._lock:
            sk = self._cache.get((ex, ey))
        if sk is not None and sk.L >= L:
            return sk
        if sk is not None:
            L = max(L, 1.25 * sk.L)
        try:
            sk = path_skeleton(self.g, ex, ey, L, self.budget)
        except PathBudgetExceeded as exc:
            raise KernelToleranceError(str(exc), math.inf) from None
        with self._lock:
            old = self._cache.get((ex, ey))
            if old is None or old.L < sk.L:
                self._cache[(ex, ey)] = sk
        return sk

    def rho(self, ex: str, xs: np.ndarray, ey: str, ys: np.ndarray) -> np.ndarray:
        g = self.g
        idx = g.vertex_index
        D = g.vertex_distances
        elx, ely = g.element(ex), g.element(ey)
        ends_x = [(idx[elx.tail], xs)]
        if elx.head is not None:
            ends_x.append((idx[elx.head], elx.length - xs))
        ends_y = [(idx[ely.tail], ys)]
        if ely.head is not None:
            ends_y.append((idx[ely.head], ely.length - ys))
        out = np.full((len(xs), len(ys)), np.inf)
        for i, dx in ends_x:
            for j, dy in ends_y:
                out = np.minimum(out, dx[:, None] + D[i, j] + dy[None, :])
        if ex == ey:
            out = np.minimum(out, np.abs(xs[:, None] - ys[None, :]))
        return out

    def _prepare(self, t, kind, ex, xs, ey, ys, bound_kind=None, scale=1.0):
        if t <= 0:
            raise ValueError(f"time must be positive, got {t}")
        if kind not in KINDS:
            raise ValueError(f"unknown kernel kind {kind!r}")
        bound_kind = bound_kind or kind
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        ys_finite = ys[np.isfinite(ys)]
        rho_max = float(self.rho(ex, xs, ey, ys_finite).max()) if len(xs) and len(ys_finite) else 0.0
        if not math.isfinite(rho_max):
            raise GraphError(f"edges {ex!r} and {ey!r} are in different components")
        sides = len(self.g.sides(ex))
        L = truncation_cutoff(self.g, t, self.eps / scale, rho_max, bound_kind, sides)
        sk = self.skeleton(ex, ey, L)
        bound = scale * tail_bound(self.g, t, sk.L, bound_kind, sides)
        return xs, ys, sk, bound

    def evaluate(self, kind: str, t: float, ex: str, xs, ey: str, ys):
        """Kernel matrix ``K[i, j]`` at ``(ex:xs[i], ey:ys[j])`` and its tail bound.

        ``kind`` is ``heat`` (p_t), ``form`` (form kernel), ``grad``
        (derivative of p_t in x) or ``form_grad_y`` (derivative of the form
        kernel in y).
        """
        xs, ys, sk, bound = self._prepare(t, kind, ex, xs, ey, ys)
        g = self.g
        rx, ry = g.length(ex), g.length(ey)
        out = np.zeros((len(xs), len(ys)))
        if ex == ey:
            diff = xs[:, None] - ys[None, :]
            gd = gaussian(t, diff)
            if kind in ("heat", "form"):
                out += gd
            elif kind == "grad":
                out += -diff / (2.0 * t) * gd
            else:
                out += diff / (2.0 * t) * gd
        if len(sk.amplitude):
            if kind == "heat":
                coef = sk.amplitude
            elif kind == "form":
                coef = sk.form_amplitude
            elif kind == "grad":
                coef = sk.amplitude * sk.exit_sign
            else:
                coef = sk.form_amplitude * sk.entry_sign
            with np.errstate(invalid="ignore"):
                exit_d = np.where(sk.exit_side[:, None] == TAIL, xs[None, :], rx - xs[None, :])
                entry_d = np.where(sk.entry_side[:, None] == TAIL, ys[None, :], ry - ys[None, :])
            chunk = max(1, int(4_000_000 // max(1, len(xs) * len(ys))))
            for s in range(0, len(coef), chunk):
                sl = slice(s, s + chunk)
                d = exit_d[sl, :, None] + sk.interior[sl, None, None] + entry_d[sl, None, :]
                gd = np.exp(-d * d / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)
                if kind in ("grad", "form_grad_y"):
                    gd = gd * (-d / (2.0 * t))
                out += np.einsum("p,pij->ij", coef[sl], gd)
        return out, bound, sk.n_paths + (1 if ex == ey else 0)

    def interval_integral(self, kind: str, t: float, ex: str, xs, ey: str, a: float, b: float):
        """Exact ``int_a^b K(x, y) dy`` over ``y`` on ``ey`` for ``kind`` in heat/form/grad."""
        if kind not in ("heat", "form", "grad"):
            raise ValueError(f"interval integrals support heat, form and grad, not {kind!r}")
        g = self.g
        rx, ry = g.length(ex), g.length(ey)
        if not (0.0 <= a <= b <= ry):
            raise GraphError(f"interval [{a}, {b}] not inside edge {ey!r}")
        # per-path integrals are bounded by sqrt(pi t) g_t(d) (heat, form) or g_t(d) (grad)
        scale = min(b - a, math.sqrt(math.pi * t)) if kind != "grad" else 1.0
        xs, ys, sk, bound = self._prepare(t, kind, ex, xs, ey, np.array([a, b]), "heat", max(scale, 1e-300))
        out = np.zeros(len(xs))
        if ex == ey:
            if kind == "grad":
                out += gaussian(t, xs - a) - gaussian(t, xs - b)
            else:
                out += 0.5 * (erfc((a - xs) / (2 * math.sqrt(t))) - erfc((b - xs) / (2 * math.sqrt(t))))
        if len(sk.amplitude):
            s_in = sk.entry_sign
            if kind == "heat":
                coef = sk.amplitude
            elif kind == "form":
                coef = sk.form_amplitude
            else:
                coef = sk.amplitude * sk.exit_sign
            with np.errstate(invalid="ignore"):
                exit_d = np.where(sk.exit_side[:, None] == TAIL, xs[None, :], rx - xs[None, :])
                base = exit_d + sk.interior[:, None]
                da = base + np.where(sk.entry_side == TAIL, a, ry - a)[:, None]
                db = base + np.where(sk.entry_side == TAIL, b, ry - b)[:, None]
            if kind == "grad":
                vals = gaussian(t, db) - gaussian(t, da)
            else:
                vals = _gaussian_mass(t, da) - _gaussian_mass(t, db)
                vals = vals * s_in[:, None]
            out += coef @ vals if kind != "grad" else (coef * s_in) @ vals
        return out, bound, sk.n_paths

    def value(self, kind: str, t: float, x: GraphPoint, y: GraphPoint) -> KernelValue:
        x, y = self.g.resolve(x), self.g.resolve(y)
        if kind in ("grad",) and self.g.vertex_at(x) is not None:
            raise GraphError(f"derivative in x undefined at vertex {self.g.vertex_at(x)!r}")
        if kind == "form_grad_y" and self.g.vertex_at(y) is not None:
            raise GraphError(f"derivative in y undefined at vertex {self.g.vertex_at(y)!r}")
        m, bound, n = self.evaluate(kind, t, x.edge, [x.x], y.edge, [y.x])
        return KernelValue(float(m[0, 0]), bound, n)


_DEFAULT: dict = {}
_DEFAULT_LOCK = threading.Lock()


def default_kernel(g: MetricGraph, eps: float = 1e-12) -> PathSumKernel:
    """Shared :class:`PathSumKernel` for ``(g, eps)``; keeps skeletons warm across calls."""
    import weakref

    with _DEFAULT_LOCK:
        per_graph = _DEFAULT.setdefault("map", weakref.WeakKeyDictionary())
        kernels = per_graph.setdefault(g, {})
        if eps not in kernels:
            kernels[eps] = PathSumKernel(g, eps)
        return kernels[eps]


def heat_kernel(g: MetricGraph, t: float, x: GraphPoint, y: GraphPoint, eps: float = 1e-12) -> KernelValue:
    return default_kernel(g, eps).value("heat", t, x, y)


def form_heat_kernel(g: MetricGraph, t: float, x: GraphPoint, y: GraphPoint, eps: float = 1e-12) -> KernelValue:
    return default_kernel(g, eps).value("form", t, x, y)


def gradient_kernel(g: MetricGraph, t: float, x: GraphPoint, y: GraphPoint, eps: float = 1e-12) -> KernelValue:
    """Derivative of ``p_t(x, y)`` in ``x`` along the orientation of x's edge."""
    return default_kernel(g, eps).value("grad", t, x, y)


# ----------------------------------------------------------------------
# Walsh spider closed forms
# ----------------------------------------------------------------------


def spider_kernel(N: int, t: float, leg_j: int, x: float, leg_k: int, y: float) -> float:
    if N < 2:
        raise ValueError("a spider needs at least two legs")
    if leg_j != leg_k:
        return 2.0 / N * gaussian(t, x + y)
    return gaussian(t, x - y) - (1.0 - 2.0 / N) * gaussian(t, x + y)


def spider_form_kernel(N: int, t: float, leg_j: int, x: float, leg_k: int, y: float) -> float:
    if N < 2:
        raise ValueError("a spider needs at least two legs")
    if leg_j != leg_k:
        return -2.0 / N * gaussian(t, x + y)
    return gaussian(t, x - y) + (1.0 - 2.0 / N) * gaussian(t, x + y)


# ----------------------------------------------------------------------
# grids, ratio supremum, Gaussian comparison
# ----------------------------------------------------------------------


def default_grid(g: MetricGraph, n: int = 32, t_max: float = 1.0) -> dict[str, np.ndarray]:
    """``n`` points per edge, kept ``r_min/64`` away from the vertices."""
    cap = g.ray_cap(t_max)
    scale = g.r_min if math.isfinite(g.r_min) else cap
    off = scale / 64.0
    grid = {}
    for e in g.edge_ids:
        r = min(g.length(e), cap)
        hi = r - off if not g.is_ray(e) else r
        grid[e] = np.linspace(off, hi, n)
    return grid


def vertex_probe_grid(g: MetricGraph, v: str, radii) -> dict[str, np.ndarray]:
    """Points at distances ``radii`` from ``v`` along each incident edge."""
    radii = np.asarray(radii, dtype=float)
    grid: dict[str, list] = {}
    for e, side in g.incidences[v]:
        xs = radii if side == TAIL else g.length(e) - radii
        grid.setdefault(e, []).extend(xs.tolist())
    return {e: np.array(sorted(set(xs))) for e, xs in grid.items()}


@dataclass(frozen=True)
class RatioReport:
    value: float
    argmax: tuple[GraphPoint, GraphPoint] | None
    pairs_used: int
    pairs_skipped: int
    t: float


def kernel_ratio_sup(g: MetricGraph, t: float, grid=None, kernel: PathSumKernel | None = None) -> RatioReport:
    """Max of ``|form kernel| / heat kernel`` over all pairs of grid points.

    Pairs where the heat kernel does not exceed its tail bound are skipped.
    """
    kernel = kernel or default_kernel(g)
    grid = default_grid(g) if grid is None else grid
    best, arg, used, skipped = -math.inf, None, 0, 0
    for ex, xs in grid.items():
        for ey, ys in grid.items():
            if len(xs) == 0 or len(ys) == 0:
                continue
            p, bp, _ = kernel.evaluate("heat", t, ex, xs, ey, ys)
            q, bq, _ = kernel.evaluate("form", t, ex, xs, ey, ys)
            ok = p > max(bp, bq, 1e-300)
            skipped += int((~ok).sum())
            used += int(ok.sum())
            if not ok.any():
                continue
            ratio = np.where(ok, np.abs(q) / np.where(ok, p, 1.0), -np.inf)
            i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
            if ratio[i, j] > best:
                best = float(ratio[i, j])
                arg = (GraphPoint(ex, float(xs[i])), GraphPoint(ey, float(ys[j])))
    return RatioReport(best, arg, used, skipped, t)


@dataclass(frozen=True)
class GaussianComparison:
    t: float
    lower: float
    upper: float
    form_upper: float


def gaussian_comparison(g: MetricGraph, t: float, grid=None, kernel: PathSumKernel | None = None) -> GaussianComparison:
    """Extremes of ``p_t / g_t(rho)`` and ``|form kernel| / g_t(rho)`` over grid pairs."""
    kernel = kernel or default_kernel(g)
    grid = default_grid(g) if grid is None else grid
    lo, hi, fhi = math.inf, 0.0, 0.0
    for ex, xs in grid.items():
        for ey, ys in grid.items():
            p, _, _ = kernel.evaluate("heat", t, ex, xs, ey, ys)
            q, _, _ = kernel.evaluate("form", t, ex, xs, ey, ys)
            ref = gaussian(t, kernel.rho(ex, xs, ey, ys))
            ok = ref > 1e-250
            lo = min(lo, float((p[ok] / ref[ok]).min(initial=math.inf)))
            hi = max(hi, float((p[ok] / ref[ok]).max(initial=0.0)))
            fhi = max(fhi, float((np.abs(q[ok]) / ref[ok]).max(initial=0.0)))
    return GaussianComparison(t, lo, hi, fhi)


def detect_T0(g: MetricGraph, ts, C0: float, grid=None, kernel: PathSumKernel | None = None) -> float:
    """Largest ``t`` in increasing ``ts`` up to which ``p_t >= C0 g_t(rho)`` holds on the grid."""
    T0 = 0.0
    for t in sorted(ts):
        if gaussian_comparison(g, t, grid, kernel).lower >= C0:
            T0 = t
        else:
            break
    return T0


# ----------------------------------------------------------------------
# local gradient bound
# ----------------------------------------------------------------------


def gloc_profile(g: MetricGraph, ts, n_x: int = 32, kernel: PathSumKernel | None = None, y_density: float = 8.0):
    """``Q(t) = sup_{x,y} |d_x p_t(x, y)| sqrt(t) mu(B_sqrt(t)(x))`` over an x-grid.

    The y-grid is refined with ``t`` (spacing ``sqrt(t)/y_density``) so the
    supremum in ``y`` is resolved at every time.
    """
    kernel = kernel or default_kernel(g)
    xgrid = default_grid(g, n_x)
    out = []
    for t in ts:
        h = math.sqrt(t) / y_density
        ygrid = {}
        for e in g.edge_ids:
            r = min(g.length(e), g.ray_cap(t))
            ygrid[e] = np.linspace(0.0, r, max(8, int(math.ceil(r / h)) + 1))
        best = 0.0
        for ex, xs in xgrid.items():
            vol = np.array([ball_measure(g, GraphPoint(ex, float(x)), math.sqrt(t)) for x in xs])
            sup_y = np.zeros(len(xs))
            for ey, ys in ygrid.items():
                m, _, _ = kernel.evaluate("grad", t, ex, xs, ey, ys)
                sup_y = np.maximum(sup_y, np.abs(m).max(axis=1))
            best = max(best, float((sup_y * math.sqrt(t) * vol).max()))
        out.append(best)
    return np.array(out)


def fit_gloc(ts, Q) -> tuple[float, float]:
    """Fit ``Q(t) <= C exp(beta t)``: ``beta`` from a log-linear fit (floored at 0), ``C`` tight."""
    ts = np.asarray(ts, dtype=float)
    logQ = np.log(np.asarray(Q, dtype=float))
    beta = max(0.0, float(np.polyfit(ts, logQ, 1)[0])) if len(ts) > 1 else 0.0
    C = float(np.exp(logQ - beta * ts).max())
    return C, beta
