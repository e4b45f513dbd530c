"""Spectral side: Kirchhoff eigenpairs on compact graphs and everything built on them.

Eigenfunctions are ``A_e cos(k x) + B_e sin(k x)`` on each edge with
``lambda = k^2``.  Roots ``k > 0`` are the zeros of the determinant of the
vertex-condition matrix (continuity rows plus one Kirchhoff row per vertex).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import networkx as nx
import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq

from .functions import GraphFunction, composite_gauss
from .graph import TAIL, GraphError, GraphPoint, MetricGraph, orientation_sign
from .kernels import gaussian

NULL_TOL = 1e-8


class SpectralError(RuntimeError):
    pass


class BelowT1(ValueError):
    """The large-time constant is undefined: the time is not past t1."""


@dataclass(frozen=True)
class EigenPair:
    """``lam`` with coefficients ``A[i], B[i]`` on ``edges[i]``; L^2-normalised when ``normalized``."""

    lam: float
    edges: tuple[str, ...]
    A: np.ndarray
    B: np.ndarray
    normalized: bool = True

    @property
    def k(self) -> float:
        return math.sqrt(self.lam)

    def _idx(self, e: str) -> int:
        try:
            return self.edges.index(e)
        except ValueError:
            raise GraphError(f"unknown edge {e!r}") from None

    def value(self, e: str, x) -> np.ndarray:
        i = self._idx(e)
        x = np.asarray(x, dtype=float)
        if self.lam == 0.0:
            return self.A[i] + self.B[i] * x
        k = self.k
        return self.A[i] * np.cos(k * x) + self.B[i] * np.sin(k * x)

    def derivative(self, e: str, x) -> np.ndarray:
        i = self._idx(e)
        x = np.asarray(x, dtype=float)
        if self.lam == 0.0:
            return np.full_like(x, self.B[i])
        k = self.k
        return k * (-self.A[i] * np.sin(k * x) + self.B[i] * np.cos(k * x))

    def integral(self, e: str, a: float, b: float) -> float:
        i = self._idx(e)
        if self.lam == 0.0:
            return self.A[i] * (b - a) + 0.5 * self.B[i] * (b * b - a * a)
        k = self.k
        return (self.A[i] * (math.sin(k * b) - math.sin(k * a)) - self.B[i] * (math.cos(k * b) - math.cos(k * a))) / k


def _edge_order(g: MetricGraph) -> tuple[str, ...]:
    if g.rays:
        raise GraphError("spectral computations need a compact graph (no rays)")
    return tuple(g.edges)


def secular_matrix(g: MetricGraph, k: float) -> np.ndarray:
    """Vertex-condition matrix acting on ``(A_1, B_1, ..., A_m, B_m)``.

    Per vertex: continuity against the first incidence, then the sum of
    inward derivatives divided by ``k``.
    """
    edges = _edge_order(g)
    col = {e: 2 * i for i, e in enumerate(edges)}
    n = 2 * len(edges)
    M = np.zeros((n, n))
    row = 0
    c, s = {}, {}
    for e in edges:
        r = g.length(e)
        c[e], s[e] = math.cos(k * r), math.sin(k * r)

    def value_row(e, side):
        return (1.0, 0.0) if side == TAIL else (c[e], s[e])

    def inward_row(e, side):
        # inward derivative over k: +phi'(0)/k at the tail, -phi'(r)/k at the head
        return (0.0, 1.0) if side == TAIL else (s[e], -c[e])

    for v in g.vertices:
        inc = g.incidences[v]
        if not inc:
            continue
        e0, s0 = inc[0]
        for e, side in inc[1:]:
            a, b = value_row(e, side)
            M[row, col[e]] += a
            M[row, col[e] + 1] += b
            a, b = value_row(e0, s0)
            M[row, col[e0]] -= a
            M[row, col[e0] + 1] -= b
            row += 1
        for e, side in inc:
            a, b = inward_row(e, side)
            M[row, col[e]] += a
            M[row, col[e] + 1] += b
        row += 1
    return M


def _det(g, k):
    sign, logdet = np.linalg.slogdet(secular_matrix(g, k))
    return sign * math.exp(logdet) if sign != 0 else 0.0


def _sigma_min(g, k):
    return float(np.linalg.svd(secular_matrix(g, k), compute_uv=False)[-1])


def _gram(g: MetricGraph, edges, k: float, V: np.ndarray) -> np.ndarray:
    """L^2 Gram matrix of the eigenfunctions whose coefficient vectors are the columns of ``V``."""
    G = np.zeros((V.shape[1], V.shape[1]))
    for i, e in enumerate(edges):
        r = g.length(e)
        icc = r / 2 + math.sin(2 * k * r) / (4 * k)
        iss = r / 2 - math.sin(2 * k * r) / (4 * k)
        ics = (1 - math.cos(2 * k * r)) / (4 * k)
        A, B = V[2 * i], V[2 * i + 1]
        G += icc * np.outer(A, A) + iss * np.outer(B, B) + ics * (np.outer(A, B) + np.outer(B, A))
    return G


def _components(g: MetricGraph) -> list[list[str]]:
    d = g.vertex_distances
    seen: set[int] = set()
    comps = []
    for i in range(len(g.vertices)):
        if i in seen:
            continue
        members = np.flatnonzero(np.isfinite(d[i])).tolist()
        seen.update(members)
        comps.append([g.vertices[j] for j in members])
    return comps


def _zero_modes(g: MetricGraph, edges) -> list[EigenPair]:
    out = []
    for comp in _components(g):
        cs = set(comp)
        mask = np.array([g.edges[e].tail in cs for e in edges])
        if not mask.any():
            continue
        length = math.fsum(g.length(e) for e, m in zip(edges, mask) if m)
        A = np.where(mask, 1.0 / math.sqrt(length), 0.0)
        out.append(EigenPair(0.0, edges, A, np.zeros(len(edges))))
    return out


def weyl_window(g: MetricGraph, lam: float) -> tuple[float, float]:
    """Admissible range for the eigenvalue count up to ``lam``."""
    centre = g.total_length / math.pi * math.sqrt(lam)
    slack = len(g.vertices) + len(g.edges)
    return centre - slack, centre + slack


def _golden_min(fn, a: float, b: float) -> float:
    """Golden-section minimum to machine precision; sigma_min is V-shaped at a root."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > 4e-16 * max(1.0, abs(b)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    return c if fc <= fd else d


def _find_roots(g: MetricGraph, k_max: float, h: float) -> list[float]:
    ks = np.arange(1e-3 * h, k_max + 2 * h, h)
    dets = np.array([_det(g, k) for k in ks])
    sig = np.array([_sigma_min(g, k) for k in ks])
    roots = []
    for i in range(len(ks) - 1):
        if dets[i] == 0.0:
            roots.append(float(ks[i]))
        elif dets[i] * dets[i + 1] < 0:
            roots.append(brentq(lambda k: _det(g, k), ks[i], ks[i + 1], xtol=1e-14, rtol=1e-13, maxiter=500))
    bisected = list(roots)
    # even-multiplicity roots touch zero without a sign change: catch them at minima of sigma_min
    for i in range(1, len(ks) - 1):
        if sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1]:
            k = _golden_min(lambda k: _sigma_min(g, k), ks[i - 1], ks[i + 1])
            if any(abs(k - r) <= 1e-7 * max(1.0, k) for r in bisected):
                continue
            M = secular_matrix(g, k)
            if _sigma_min(g, k) < NULL_TOL * np.linalg.norm(M, 2):
                roots.append(k)
    roots.sort()
    merged: list[float] = []
    for k in roots:
        if merged and abs(k - merged[-1]) <= 1e-9 * max(1.0, k):
            if _sigma_min(g, k) < _sigma_min(g, merged[-1]):
                merged[-1] = k
            continue
        merged.append(k)
    return [k for k in merged if k * k <= k_max * k_max * (1 + 1e-12)]


def eigensolve(g: MetricGraph, lambda_max: float, max_refinements: int = 4) -> list[EigenPair]:
    """All eigenpairs with eigenvalue in ``[0, lambda_max]``, L^2-orthonormal, with multiplicity."""
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    edges = _edge_order(g)
    if not edges:
        raise GraphError("graph has no edges")
    k_max = math.sqrt(lambda_max)
    h = math.pi / (8.0 * g.total_length)
    for _ in range(max_refinements + 1):
        pairs = list(_zero_modes(g, edges))
        for k in _find_roots(g, k_max, h):
            M = secular_matrix(g, k)
            V = null_space(M, rcond=NULL_TOL)
            if V.shape[1] == 0:
                continue
            G = _gram(g, edges, k, V)
            w, Q = np.linalg.eigh(G)
            C = V @ Q / np.sqrt(w)
            for j in range(C.shape[1]):
                pairs.append(EigenPair(k * k, edges, C[0::2, j].copy(), C[1::2, j].copy()))
        if _weyl_consistent(g, pairs, lambda_max):
            return sorted(pairs, key=lambda p: p.lam)
        h /= 2
    raise SpectralError("eigenvalue count inconsistent with Weyl's law after refinement; roots missed")


def _weyl_consistent(g: MetricGraph, pairs: list[EigenPair], lambda_max: float) -> bool:
    lams = np.sort([p.lam for p in pairs])
    for lam in np.linspace(0.0, lambda_max, 64)[1:]:
        n = int(np.searchsorted(lams, lam, side="right"))
        lo, hi = weyl_window(g, lam)
        if not lo <= n <= hi:
            return False
    return True


def eigen_table(pairs: Sequence[EigenPair], rel_tol: float = 1e-9) -> list[tuple[int, float, int]]:
    """Distinct eigenvalues with multiplicities, as ``(index, lambda, multiplicity)``."""
    rows: list[list] = []
    for p in sorted(pairs, key=lambda q: q.lam):
        if rows and abs(p.lam - rows[-1][1]) <= rel_tol * max(1.0, p.lam):
            rows[-1][2] += 1
        else:
            rows.append([len(rows), p.lam, 1])
    return [tuple(r) for r in rows]


def eigen_table_csv(pairs: Sequence[EigenPair]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "lambda", "multiplicity"])
    for i, lam, m in eigen_table(pairs):
        w.writerow([i, "%.17g" % lam, m])
    return buf.getvalue()


def poincare_constant(pairs: Sequence[EigenPair], tol: float = 1e-9) -> float:
    """Smallest positive eigenvalue."""
    pos = [p.lam for p in pairs if p.lam > tol]
    if not pos:
        raise SpectralError("no positive eigenvalue in the supplied list")
    return min(pos)


# ----------------------------------------------------------------------
# harmonic forms and duality
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class HarmonicFormBasis:
    """Edge-constant 1-forms ``vectors[a, i]`` on ``edges[i]``, orthonormal in L^2."""

    edges: tuple[str, ...]
    vectors: np.ndarray

    @property
    def dimension(self) -> int:
        return self.vectors.shape[0]

    def value(self, a: int, e: str) -> float:
        return float(self.vectors[a, self.edges.index(e)])


def incidence_matrix(g: MetricGraph) -> np.ndarray:
    edges = _edge_order(g)
    B = np.zeros((len(g.vertices), len(edges)))
    idx = g.vertex_index
    for j, e in enumerate(edges):
        el = g.edges[e]
        B[idx[el.tail], j] += orientation_sign(g, el.tail, e)
        B[idx[el.head], j] += orientation_sign(g, el.head, e)
    return B


def harmonic_forms(g: MetricGraph) -> HarmonicFormBasis:
    """Basis of edge-constant forms with zero signed sum at every vertex."""
    edges = _edge_order(g)
    B = incidence_matrix(g)
    N = null_space(B) if len(edges) else np.zeros((0, 0))
    if N.size == 0:
        return HarmonicFormBasis(edges, np.zeros((0, len(edges))))
    r = np.array([g.length(e) for e in edges])
    G = N.T @ (r[:, None] * N)
    w, Q = np.linalg.eigh(G)
    H = (N @ Q / np.sqrt(w)).T
    return HarmonicFormBasis(edges, H)


def poincare_orientation(g: MetricGraph) -> dict[str, int] | None:
    """Signs ``h_e = +-1`` with zero signed vertex sums, or ``None`` if none exists."""
    if g.rays:
        return None
    if any(g.degree(v) % 2 for v in g.vertices):
        return None
    M = nx.MultiGraph()
    M.add_nodes_from(g.vertices)
    for e in g.edges.values():
        M.add_edge(e.tail, e.head, key=e.id)
    h: dict[str, int] = {}
    for comp in nx.connected_components(M):
        sub = M.subgraph(comp)
        if sub.number_of_edges() == 0:
            continue
        for u, v, key in nx.eulerian_circuit(sub, keys=True):
            el = g.edges[key]
            h[key] = 1 if (el.tail, el.head) == (u, v) else -1
    return h


# ----------------------------------------------------------------------
# spectral kernels
# ----------------------------------------------------------------------


class SpectralKernel:
    """Kernels from a truncated eigen-expansion; same ``evaluate`` interface as the path sums."""

    def __init__(self, g: MetricGraph, pairs: Sequence[EigenPair], lambda_max: float, eps: float = 1e-10):
        self.g = g
        self.pairs = list(pairs)
        self.lambda_max = lambda_max
        self.eps = eps
        self.harmonic = harmonic_forms(g)
        self.lams = np.array([p.lam for p in self.pairs])

    @classmethod
    def for_time(cls, g: MetricGraph, t_min: float, eps: float = 1e-10) -> "SpectralKernel":
        """Eigenpairs up to ``lambda_max`` with ``exp(-lambda_max t_min) < eps / 10``.

        ``lambda_max`` is raised further until the certified tail at ``t_min``
        is below ``eps`` for every kernel kind.
        """
        lam = math.log(10.0 / eps) / t_min
        probe = cls.__new__(cls)
        probe.g = g
        while True:
            probe.lambda_max = lam
            if max(probe.tail_bound(t_min, k) for k in ("heat", "grad")) <= eps:
                break
            lam *= 1.1
        return cls(g, eigensolve(g, lam), lam, eps)

    def tail_bound(self, t: float, kind: str) -> float:
        """Bound on the dropped eigen-terms.

        Above ``k = 2/r_min`` every normalised eigenfunction obeys
        ``|phi|^2 <= 4/r_min`` and ``|phi'|^2 <= 4 k^2 / r_min``; the number
        of eigenvalues below ``k^2`` is at most ``L k / pi + |V|``.
        """
        g = self.g
        k0 = math.sqrt(self.lambda_max)
        if k0 < 2.0 / g.r_min:
            return math.inf
        total, n = 0.0, 0
        while True:
            k = k0 + n
            count = g.total_length * (k + 1) / math.pi + len(g.vertices)
            amp = 4.0 / g.r_min * (k + 1) ** 2 if kind in ("grad", "form_grad_y") else 4.0 / g.r_min
            term = count * amp * math.exp(-k * k * t)
            total += term
            if term < 1e-18 * max(total, 1e-300) or term == 0.0:
                break
            n += 1
        return total

    def _basis(self, kind_side: str, e: str, xs: np.ndarray) -> np.ndarray:
        if kind_side == "value":
            return np.array([p.value(e, xs) for p in self.pairs])
        return np.array([p.derivative(e, xs) for p in self.pairs])

    def evaluate(self, kind: str, t: float, ex: str, xs, ey: str, ys):
        if t <= 0:
            raise ValueError(f"time must be positive, got {t}")
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        bound = self.tail_bound(t, kind)
        if bound > self.eps:
            raise SpectralError(f"eigenvalues up to {self.lambda_max} insufficient at t={t}: tail {bound:.3g}")
        w = np.exp(-self.lams * t)
        pos = self.lams > 0
        if kind == "heat":
            Fx, Fy = self._basis("value", ex, xs), self._basis("value", ey, ys)
        elif kind == "grad":
            Fx, Fy = self._basis("deriv", ex, xs), self._basis("value", ey, ys)
        elif kind == "form":
            Fx, Fy = self._basis("deriv", ex, xs), self._basis("deriv", ey, ys)
            w = np.where(pos, w / np.where(pos, self.lams, 1.0), 0.0)
        elif kind == "form_grad_y":
            Fx, Fy = self._basis("deriv", ex, xs), -self._basis("value", ey, ys)
            w = np.where(pos, w, 0.0)
        else:
            raise ValueError(f"unknown kernel kind {kind!r}")
        K = Fx.T @ (w[:, None] * Fy)
        if kind == "form" and self.harmonic.dimension:
            hx = self.harmonic.vectors[:, self.harmonic.edges.index(ex)]
            hy = self.harmonic.vectors[:, self.harmonic.edges.index(ey)]
            K = K + float(hx @ hy)
        return K, bound, len(self.pairs)

    def interval_integral(self, kind: str, t: float, ex: str, xs, ey: str, a: float, b: float):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        bound = self.tail_bound(t, "heat" if kind != "grad" else "grad") * (b - a)
        w = np.exp(-self.lams * t)
        ints = np.array([p.integral(ey, a, b) for p in self.pairs])
        if kind == "heat":
            Fx = self._basis("value", ex, xs)
        elif kind == "grad":
            Fx = self._basis("deriv", ex, xs)
        elif kind == "form":
            Fx = self._basis("deriv", ex, xs)
            pos = self.lams > 0
            ints = np.array([(p.value(ey, b) - p.value(ey, a)) for p in self.pairs])
            w = np.where(pos, w / np.where(pos, self.lams, 1.0), 0.0)
        else:
            raise ValueError(f"unknown kernel kind {kind!r}")
        out = Fx.T @ (w * ints)
        if kind == "form" and self.harmonic.dimension:
            hx = self.harmonic.vectors[:, self.harmonic.edges.index(ex)]
            hy = self.harmonic.vectors[:, self.harmonic.edges.index(ey)]
            out = out + float(hx @ hy) * (b - a)
        return out, bound, len(self.pairs)


def spectral_heat_kernel(g: MetricGraph, t: float, x: GraphPoint, y: GraphPoint, kernel: SpectralKernel) -> float:
    x, y = g.resolve(x), g.resolve(y)
    return float(kernel.evaluate("heat", t, x.edge, [x.x], y.edge, [y.x])[0][0, 0])


def spectral_form_kernel(g: MetricGraph, t: float, x: GraphPoint, y: GraphPoint, kernel: SpectralKernel) -> float:
    x, y = g.resolve(x), g.resolve(y)
    return float(kernel.evaluate("form", t, x.edge, [x.x], y.edge, [y.x])[0][0, 0])


# ----------------------------------------------------------------------
# large-time Bakry-Emery constant
# ----------------------------------------------------------------------


def sweep_M(g: MetricGraph, t0: float, kernel, n: int = 64) -> float:
    """``max(sup p_t0, sup (d_x p_t0)^2)`` over an ``n``-point-per-edge grid (vertices included for p)."""
    best = 0.0
    grid = {e: np.linspace(0.0, g.length(e), n) for e in g.edges}
    inner = {e: np.linspace(0.0, g.length(e), n + 1)[1:-1] for e in g.edges}
    for ex in g.edges:
        for ey in g.edges:
            p, _, _ = kernel.evaluate("heat", t0, ex, grid[ex], ey, grid[ey])
            d, _, _ = kernel.evaluate("grad", t0, ex, inner[ex], ey, grid[ey])
            best = max(best, float(p.max()), float((d**2).max()))
    return best


@dataclass(frozen=True)
class LargeTimeConstant:
    t: float
    C: float
    M: float
    t0: float


def _tail_sums(g: MetricGraph, lams: np.ndarray, lambda_max: float, s: float) -> tuple[float, float]:
    """``sum e^{-lam s}`` and ``sum e^{-lam s}/lam`` over positive eigenvalues, plus a Weyl tail."""
    pos = lams[lams > 1e-12]
    e = np.exp(-pos * s)
    s0, s1 = float(e.sum()), float((e / pos).sum())
    k0 = math.sqrt(lambda_max)
    n = 0
    while True:
        k = k0 + n
        count = g.total_length * (k + 1) / math.pi + len(g.vertices)
        term = count * math.exp(-k * k * s)
        s0 += term
        s1 += term / (k * k)
        if term < 1e-18 * s0 or term == 0.0:
            break
        n += 1
    return s0, s1


def large_time_be_constant(
    g: MetricGraph, pairs: Sequence[EigenPair], lambda_max: float, M: float, t0: float, t: float
) -> float:
    """``C(t)`` with ``sqrt(Gamma(P_t f)) <= C(t) P_t sqrt(Gamma(f))`` for ``t`` past ``t1``.

    With total mass ``m`` the eigenfunction bounds read ``|phi_j| <= M_eff e^{lambda_j t0}``
    where ``M_eff = max(M sqrt(m), sqrt(M m))``, and the constant is
    ``M_eff^2 S_1 / (1/m - M_eff^2 S_0)`` with ``S_0 = sum e^{-lambda (t - 2 t0)}`` and
    ``S_1`` the same sum weighted by ``1/lambda``.
    """
    if t <= 2 * t0:
        raise BelowT1(f"t={t} not above 2 t0={2 * t0}")
    mass = g.total_length
    m_eff2 = max(M * math.sqrt(mass), math.sqrt(M * mass)) ** 2
    s0, s1 = _tail_sums(g, np.array([p.lam for p in pairs]), lambda_max, t - 2 * t0)
    den = 1.0 / mass - m_eff2 * s0
    if den <= 0:
        raise BelowT1(f"t={t} is below t1: denominator {den:.3g}")
    return m_eff2 * s1 / den


def large_time_t1(g: MetricGraph, pairs, lambda_max: float, M: float, t0: float) -> float:
    """Smallest ``t`` (to 1e-9) where the denominator of :func:`large_time_be_constant` is positive."""
    mass = g.total_length
    m_eff2 = max(M * math.sqrt(mass), math.sqrt(M * mass)) ** 2
    lams = np.array([p.lam for p in pairs])

    def den(t):
        return 1.0 / mass - m_eff2 * _tail_sums(g, lams, lambda_max, t - 2 * t0)[0]

    lo, hi = 2 * t0, 2 * t0 + 1.0
    while den(hi) <= 0:
        lo, hi = hi, hi * 2
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if den(mid) > 0:
            hi = mid
        else:
            lo = mid
    return hi


# ----------------------------------------------------------------------
# union of circles
# ----------------------------------------------------------------------


def periodic_heat_kernel(t: float, s, s2, period: float, terms: int = 30) -> np.ndarray:
    s = np.asarray(s, dtype=float)[..., None]
    n = np.arange(-terms, terms + 1)
    return gaussian(t, s - np.asarray(s2, dtype=float)[..., None] + n * period).sum(axis=-1)


def dirichlet_heat_kernel(t: float, s, s2, length: float, terms: int = 30) -> np.ndarray:
    s = np.asarray(s, dtype=float)[..., None]
    s2 = np.asarray(s2, dtype=float)[..., None]
    n = np.arange(-terms, terms + 1)
    return (gaussian(t, s - s2 + 2 * n * length) - gaussian(t, s + s2 + 2 * n * length)).sum(axis=-1)


def circle_function(g: MetricGraph, F, dF, n: int, circumference: float) -> GraphFunction:
    """Graph function from ``F(i, s)`` on circle ``i`` with arclength ``s`` measured from the junction."""
    half = circumference / 2
    values, derivs = {}, {}
    for i in range(n):
        values[f"c{i}.a"] = lambda x, i=i: F(i, x)
        values[f"c{i}.b"] = lambda x, i=i: F(i, x + half)
        derivs[f"c{i}.a"] = lambda x, i=i: dF(i, x)
        derivs[f"c{i}.b"] = lambda x, i=i: dF(i, x + half)
    return GraphFunction.from_callables(g, values, derivs)


@dataclass(frozen=True)
class CircleUnionCheck:
    residual: float
    symmetric_be_ratio: float | None


def circle_union_decomposition_check(
    g: MetricGraph, n: int, t: float, F, dF, circumference: float = 1.0, kernel=None, samples: int = 16
) -> CircleUnionCheck:
    """Compare ``P_t f`` with the periodic flow of the symmetric part plus the Dirichlet flow of the rest.

    ``F(i, s)`` gives ``f`` on circle ``i``.  If ``f`` is symmetric (same on
    every circle) the constant-one gradient bound is also measured.
    """
    from .semigroup import apply_heat, be_ratio

    for i in range(n):
        for name in (f"c{i}.a", f"c{i}.b"):
            if name not in g.edges:
                raise GraphError(f"graph is not a union of {n} circles: missing {name!r}")
    if len(g.edges) != 2 * n:
        raise GraphError(f"graph is not a union of {n} circles")
    half = circumference / 2
    f = circle_function(g, F, dF, n, circumference)
    off = circumference / 64
    grid = {}
    for i in range(n):
        grid[f"c{i}.a"] = np.linspace(off, half - off, samples)
        grid[f"c{i}.b"] = np.linspace(off, half - off, samples)
    got = apply_heat(g, t, f, grid, kernel)

    zs, ws = composite_gauss(np.linspace(0.0, circumference, 65), min(math.sqrt(t), circumference / 8))
    vals = np.array([F(i, zs) for i in range(n)])
    sym = vals.mean(axis=0)
    worst = 0.0
    for i in range(n):
        for name, shift in ((f"c{i}.a", 0.0), (f"c{i}.b", half)):
            s = grid[name] + shift
            P = periodic_heat_kernel(t, s[:, None], zs[None, :], circumference)
            D = dirichlet_heat_kernel(t, s[:, None], zs[None, :], circumference)
            expect = P @ (ws * sym) + D @ (ws * (vals[i] - sym))
            worst = max(worst, float(np.abs(got.values[name] - expect).max()))
    ratio = None
    if np.allclose(vals, sym[None, :], atol=1e-14):
        try:
            ratio = be_ratio(g, t, f, grid, kernel).value
        except ValueError:
            # constant data: no gradient to compare
            ratio = None
    return CircleUnionCheck(worst, ratio)
