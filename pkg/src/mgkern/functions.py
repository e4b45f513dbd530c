"""Functions on metric graphs and composite Gauss-Legendre quadrature.

A :class:`GraphFunction` is an analytic description (one callable per edge,
with an optional exact derivative and the points where smoothness drops).
A :class:`GridFunction` holds samples at explicit points, optionally with
quadrature weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from .graph import TAIL, GraphError, MetricGraph

EdgeMap = Callable[[np.ndarray], np.ndarray]

GL_NODES = 16
# ray quadrature stops where g_t has dropped below 1e-18 of its peak
RAY_DECAY = math.log(1e18)


@dataclass(frozen=True)
class EdgePiece:
    value: EdgeMap
    derivative: EdgeMap | None = None
    breakpoints: tuple[float, ...] = ()


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class GraphFunction:
    """Per-edge analytic function; edges without a piece carry zero."""

    g: MetricGraph
    pieces: Mapping[str, EdgePiece] = field(default_factory=dict)

    def __post_init__(self):
        for e in self.pieces:
            self.g.element(e)

    def __call__(self, e: str, x) -> np.ndarray:
        piece = self.pieces.get(e)
        x = np.asarray(x, dtype=float)
        if piece is None:
            return _zero(x)
        return np.broadcast_to(np.asarray(piece.value(x), dtype=float), x.shape).copy()

    def breakpoints(self, e: str) -> tuple[float, ...]:
        piece = self.pieces.get(e)
        return piece.breakpoints if piece else ()

    # constructors -----------------------------------------------------

    @classmethod
    def constant(cls, g: MetricGraph, c: float) -> "GraphFunction":
        return cls(g, {e: EdgePiece(lambda x, c=c: np.full_like(x, c), _zero) for e in g.edge_ids})

    @classmethod
    def polynomial(cls, g: MetricGraph, coeffs: Mapping[str, list[float]]) -> "GraphFunction":
        """``coeffs[e]`` lists coefficients in increasing degree, in edge ``e``'s coordinate."""
        pieces = {}
        for e, c in coeffs.items():
            p = Polynomial(np.asarray(c, dtype=float))
            pieces[e] = EdgePiece(p, p.deriv())
        return cls(g, pieces)

    @classmethod
    def trigonometric(
        cls, g: MetricGraph, terms: Mapping[str, list[tuple[float, float, float]]], offset: Mapping[str, float] | None = None
    ) -> "GraphFunction":
        """``f_e(x) = offset_e + sum a cos(k x) + b sin(k x)`` over ``(a, b, k)`` in ``terms[e]``."""
        offset = offset or {}
        pieces = {}
        for e in set(terms) | set(offset):
            tr = [tuple(map(float, term)) for term in terms.get(e, [])]
            c0 = float(offset.get(e, 0.0))

            def val(x, tr=tr, c0=c0):
                out = np.full_like(np.asarray(x, dtype=float), c0)
                for a, b, k in tr:
                    out = out + a * np.cos(k * x) + b * np.sin(k * x)
                return out

            def der(x, tr=tr):
                out = _zero(x)
                for a, b, k in tr:
                    out = out - a * k * np.sin(k * x) + b * k * np.cos(k * x)
                return out

            pieces[e] = EdgePiece(val, der)
        return cls(g, pieces)

    @classmethod
    def from_callables(
        cls,
        g: MetricGraph,
        values: Mapping[str, EdgeMap],
        derivatives: Mapping[str, EdgeMap] | None = None,
        breakpoints: Mapping[str, tuple[float, ...]] | None = None,
    ) -> "GraphFunction":
        derivatives = derivatives or {}
        breakpoints = breakpoints or {}
        return cls(
            g,
            {e: EdgePiece(f, derivatives.get(e), tuple(breakpoints.get(e, ()))) for e, f in values.items()},
        )

    @classmethod
    def bump(cls, g: MetricGraph, e: str, center: float, width: float, height: float = 1.0) -> "GraphFunction":
        """C^1 bump ``height cos^2(pi (x - center) / (2 width))`` supported in ``|x - center| < width``."""
        r = g.length(e)
        if not (width > 0 and center - width >= 0 and center + width <= r):
            raise GraphError(f"bump [{center - width}, {center + width}] does not fit on edge {e!r}")
        q = math.pi / (2 * width)

        def val(x):
            u = np.asarray(x, dtype=float) - center
            return np.where(np.abs(u) < width, height * np.cos(q * u) ** 2, 0.0)

        def der(x):
            u = np.clip(x - center, -width, width)
            return -height * q * np.sin(2 * q * u) * (np.abs(x - center) < width)

        return cls(g, {e: EdgePiece(val, der, (center - width, center, center + width))})

    @classmethod
    def vertex_ramp(cls, g: MetricGraph, v: str, e: str, width: float) -> "GraphFunction":
        """Zero at ``v``, slope one along ``e`` for ``width``, then flat.

        The plateau runs to the far end of ``e`` when that end is a leaf or
        ``e`` is a ray; otherwise the function ramps back down over the last
        ``width`` of ``e`` so that it stays continuous.  Every other edge
        carries zero.
        """
        el = g.element(e)
        if v not in (el.tail, el.head):
            raise GraphError(f"vertex {v!r} is not incident to {e!r}")
        if el.tail == el.head:
            raise GraphError("vertex ramps need an edge with distinct endpoints")
        r = el.length
        side = TAIL if el.tail == v else 1 - TAIL
        far = None if g.is_ray(e) else g.endpoint(e, 1 - side)
        keep = far is None or g.degree(far) == 1
        if not keep and r <= 2 * width:
            raise GraphError(f"edge {e!r} too short for a ramp of width {width}")

        def dist(x):
            return x if side == TAIL else r - x

        def val(x):
            s = dist(np.asarray(x, dtype=float))
            out = np.minimum(s, width)
            if not keep:
                out = np.minimum(out, r - s)
            return out

        def der(x):
            s = dist(np.asarray(x, dtype=float))
            d = np.where(s < width, 1.0, 0.0)
            if not keep:
                d = d - np.where(s > r - width, 1.0, 0.0)
            return d if side == TAIL else -d

        breaks = [width] if side == TAIL else [r - width]
        if not keep:
            breaks.append(r - width if side == TAIL else width)
        return cls(g, {e: EdgePiece(val, der, tuple(sorted(breaks)))})

    # derived functions --------------------------------------------------

    def derivative(self) -> "GraphFunction":
        """Edgewise derivative, as a 1-form in each edge's orientation."""
        pieces = {}
        for e, p in self.pieces.items():
            if p.derivative is None:
                raise GraphError(f"no derivative available on edge {e!r}")
            pieces[e] = EdgePiece(p.derivative, None, p.breakpoints)
        return GraphFunction(self.g, pieces)

    def map(self, fn: Callable[[np.ndarray], np.ndarray], extra_breaks: bool = False) -> "GraphFunction":
        """Pointwise ``fn(f)``; with ``extra_breaks`` the zeros of ``f`` become breakpoints."""
        pieces = {}
        for e, p in self.pieces.items():
            br = p.breakpoints
            if extra_breaks:
                br = tuple(sorted(set(br) | set(self.zeros(e))))
            pieces[e] = EdgePiece(lambda x, v=p.value: fn(np.asarray(v(x), dtype=float)), None, br)
        return GraphFunction(self.g, pieces)

    def abs(self) -> "GraphFunction":
        return self.map(np.abs, extra_breaks=True)

    def square(self) -> "GraphFunction":
        pieces = {}
        for e, p in self.pieces.items():
            der = None
            if p.derivative is not None:
                der = lambda x, v=p.value, d=p.derivative: 2.0 * v(x) * d(x)
            pieces[e] = EdgePiece(lambda x, v=p.value: np.asarray(v(x), dtype=float) ** 2, der, p.breakpoints)
        return GraphFunction(self.g, pieces)

    def sqrt_gamma(self) -> "GraphFunction":
        """``|f'|``, the square root of the carre du champ."""
        return self.derivative().abs()

    def zeros(self, e: str, samples: int = 4097, span: float | None = None) -> list[float]:
        """Sign changes of the piece on ``e`` (sampled, then refined by Brent)."""
        p = self.pieces.get(e)
        if p is None:
            return []
        r = self.g.length(e)
        hi = r if math.isfinite(r) else (span or max(self.breakpoints(e), default=0.0) + 1.0)
        xs = np.linspace(0.0, hi, samples)
        ys = np.asarray(p.value(xs), dtype=float)
        out = []
        for i in np.flatnonzero(np.sign(ys[:-1]) * np.sign(ys[1:]) < 0):
            out.append(brentq(lambda s: float(p.value(np.array(s))), xs[i], xs[i + 1], xtol=1e-15))
        return out

    def vertex_values(self, v: str) -> list[float]:
        vals = []
        for e, side in self.g.incidences[v]:
            x = 0.0 if side == TAIL else self.g.length(e)
            vals.append(float(self(e, np.array([x]))[0]))
        return vals

    def is_continuous(self, tol: float = 1e-12) -> bool:
        """Whether vertex values agree across incident edges (membership in H^1_0)."""
        for v in self.g.vertices:
            vals = self.vertex_values(v)
            if vals and max(vals) - min(vals) > tol * max(1.0, max(abs(a) for a in vals)):
                return False
        return True

    def sup_bound(self, samples: int = 2049, span: float = 50.0) -> float:
        best = 0.0
        for e in self.pieces:
            r = self.g.length(e)
            xs = np.linspace(0.0, r if math.isfinite(r) else span, samples)
            best = max(best, float(np.abs(self(e, xs)).max()))
        return best

    def sample(self, grid: Mapping[str, np.ndarray]) -> "GridFunction":
        return GridFunction({e: np.asarray(x, dtype=float) for e, x in grid.items()},
                            {e: self(e, x) for e, x in grid.items()}, source=self)


@dataclass
class GridFunction:
    """Samples ``values[e]`` at ``nodes[e]``; ``weights`` make it integrable, ``error`` bounds the samples."""

    nodes: dict[str, np.ndarray]
    values: dict[str, np.ndarray]
    weights: dict[str, np.ndarray] | None = None
    error: float = 0.0
    source: GraphFunction | None = None

    def __post_init__(self):
        for e in self.nodes:
            if len(self.nodes[e]) != len(self.values[e]):
                raise ValueError(f"edge {e!r}: {len(self.nodes[e])} nodes but {len(self.values[e])} values")

    def sup_norm(self) -> float:
        return max((float(np.abs(v).max(initial=0.0)) for v in self.values.values()), default=0.0)

    def integral(self) -> float:
        if self.weights is None:
            raise ValueError("grid function has no quadrature weights")
        return math.fsum(float(self.weights[e] @ self.values[e]) for e in self.nodes)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.values[e] for e in self.nodes]) if self.nodes else np.zeros(0)

    def map(self, fn) -> "GridFunction":
        return GridFunction(self.nodes, {e: fn(v) for e, v in self.values.items()}, self.weights)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.nodes, {e: self.values[e] - other.values[e] for e in self.nodes},
                            self.weights, self.error + other.error)


# ----------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------


@lru_cache(maxsize=8)
def _legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def composite_gauss(breaks, h_max: float, n: int = GL_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[breaks[0], breaks[-1]]``.

    Every gap between consecutive breakpoints is split into equal
    subintervals no longer than ``h_max``.
    """
    b = np.unique(np.asarray(breaks, dtype=float))
    gx, gw = _legendre(n)
    xs, ws = [], []
    for lo, hi in zip(b[:-1], b[1:]):
        m = max(1, int(math.ceil((hi - lo) / h_max - 1e-12)))
        edges = np.linspace(lo, hi, m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        xs.append((mid[:, None] + half[:, None] * gx[None, :]).ravel())
        ws.append((half[:, None] * gw[None, :]).ravel())
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


def edge_quadrature(
    g: MetricGraph,
    e: str,
    t: float,
    breaks=(),
    ray_reach: float = 0.0,
    n: int = GL_NODES,
) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on edge ``e`` resolving scale ``sqrt(t)`` and ``r_min/4``.

    On a ray the rule stops ``2 sqrt(t ln 1e18)`` beyond ``ray_reach`` and
    the last breakpoint.
    """
    r = g.length(e)
    h = math.sqrt(t)
    if math.isfinite(g.r_min):
        h = min(h, g.r_min / 4.0)
    if not math.isfinite(r):
        r = max([ray_reach, *breaks, 0.0]) + 2.0 * math.sqrt(t * RAY_DECAY)
    pts = [0.0, r] + [b for b in breaks if 0.0 < b < r]
    return composite_gauss(pts, h, n)


def graph_quadrature(g: MetricGraph, t: float, f: GraphFunction | None = None, ray_reach: float = 0.0, n: int = GL_NODES):
    """Per-edge ``(nodes, weights)`` for integrating against kernels at time ``t``."""
    out = {}
    for e in g.edge_ids:
        br = f.breakpoints(e) if f is not None else ()
        out[e] = edge_quadrature(g, e, t, br, ray_reach, n)
    return out
