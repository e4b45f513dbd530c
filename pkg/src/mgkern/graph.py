"""Metric graph model: vertices, oriented edges with lengths, rays.

Every edge ``e`` is parametrised by ``[0, r(e)]`` with ``0`` sitting at the
tail vertex ``e-`` and ``r(e)`` at the head vertex ``e+``.  Rays are
parametrised by ``[0, inf)`` with ``0`` at their only vertex.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse.csgraph import shortest_path

TAIL = 0
HEAD = 1


class GraphError(ValueError):
    """Invalid graph description or invalid query against a graph."""


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    length: float


@dataclass(frozen=True)
class Ray:
    id: str
    tail: str

    @property
    def head(self) -> None:
        return None

    @property
    def length(self) -> float:
        return math.inf


@dataclass(frozen=True, order=True)
class GraphPoint:
    """A point ``x`` on edge (or ray) ``edge``, in that edge's coordinate."""

    edge: str
    x: float

    @classmethod
    def parse(cls, text: str) -> "GraphPoint":
        try:
            edge, x = text.rsplit(":", 1)
            return cls(edge.strip(), float(x))
        except ValueError:
            raise GraphError(f"malformed point {text!r}, expected <edge>:<coordinate>") from None

    def __str__(self) -> str:
        return f"{self.edge}:{self.x!r}"


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Immutable metric graph without tadpoles.

    Build instances with :func:`build_graph` or :func:`parse_graph`; those
    split tadpoles and validate ids.  ``aliases`` maps the id of a split
    tadpole to its two halves so points given in the original coordinate can
    still be resolved.
    """

    vertices: tuple[str, ...]
    edges: Mapping[str, Edge]
    rays: Mapping[str, Ray] = field(default_factory=dict)
    aliases: Mapping[str, tuple[tuple[str, float], tuple[str, float]]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "edges", MappingProxyType(dict(self.edges)))
        object.__setattr__(self, "rays", MappingProxyType(dict(self.rays)))
        object.__setattr__(self, "aliases", MappingProxyType(dict(self.aliases)))
        inc: dict[str, list[tuple[str, int]]] = {v: [] for v in self.vertices}
        for e in self.edges.values():
            inc[e.tail].append((e.id, TAIL))
            inc[e.head].append((e.id, HEAD))
        for ray in self.rays.values():
            inc[ray.tail].append((ray.id, TAIL))
        object.__setattr__(
            self, "incidences", MappingProxyType({v: tuple(lst) for v, lst in inc.items()})
        )

    # ------------------------------------------------------------------
    # combinatorics
    # ------------------------------------------------------------------

    @property
    def edge_ids(self) -> tuple[str, ...]:
        """All edge and ray ids, finite edges first."""
        return tuple(self.edges) + tuple(self.rays)

    def is_ray(self, e: str) -> bool:
        return e in self.rays

    def element(self, e: str) -> Edge | Ray:
        try:
            return self.edges[e] if e in self.edges else self.rays[e]
        except KeyError:
            raise GraphError(f"unknown edge {e!r}") from None

    def length(self, e: str) -> float:
        return self.element(e).length

    def endpoint(self, e: str, side: int) -> str:
        el = self.element(e)
        if side == TAIL:
            return el.tail
        if el.head is None:
            raise GraphError(f"ray {e!r} has no head vertex")
        return el.head

    def sides(self, e: str) -> tuple[int, ...]:
        return (TAIL,) if self.is_ray(e) else (TAIL, HEAD)

    def degree(self, v: str) -> int:
        return len(self.incidences[v])

    @cached_property
    def max_degree(self) -> int:
        return max((self.degree(v) for v in self.vertices), default=0)

    @cached_property
    def r_min(self) -> float:
        return min((e.length for e in self.edges.values()), default=math.inf)

    @cached_property
    def total_length(self) -> float:
        if self.rays:
            return math.inf
        return math.fsum(e.length for e in self.edges.values())

    @property
    def is_compact(self) -> bool:
        return not self.rays

    # ------------------------------------------------------------------
    # geometry
    # ------------------------------------------------------------------

    @cached_property
    def vertex_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def vertex_distances(self) -> np.ndarray:
        n = len(self.vertices)
        if n == 0:
            return np.zeros((0, 0))
        w = np.full((n, n), np.inf)
        idx = self.vertex_index
        for e in self.edges.values():
            i, j = idx[e.tail], idx[e.head]
            w[i, j] = w[j, i] = min(w[i, j], e.length)
        w[~np.isfinite(w)] = 0.0
        dist = shortest_path(w, method="D", directed=False)
        dist.setflags(write=False)
        return dist

    @cached_property
    def n_components(self) -> int:
        d = self.vertex_distances
        seen: set[int] = set()
        count = 0
        for i in range(len(self.vertices)):
            if i not in seen:
                count += 1
                seen.update(np.flatnonzero(np.isfinite(d[i])).tolist())
        return count

    @cached_property
    def diam_bound(self) -> float:
        """Upper bound for the distance between points on finite edges."""
        d = self.vertex_distances
        finite = d[np.isfinite(d)]
        longest = max((e.length for e in self.edges.values()), default=0.0)
        return float(finite.max(initial=0.0)) + longest

    def ray_cap(self, t_max: float) -> float:
        """Default coordinate bound on rays for grids and quadrature."""
        return 40.0 * math.sqrt(t_max) + self.diam_bound

    def resolve(self, p: GraphPoint) -> GraphPoint:
        """Map a point onto stored edges (through split tadpoles) and validate it."""
        if p.edge in self.aliases:
            (ea, _), (eb, off) = self.aliases[p.edge]
            p = GraphPoint(ea, p.x) if p.x <= off else GraphPoint(eb, p.x - off)
        r = self.length(p.edge)
        if not (0.0 <= p.x <= r) or math.isnan(p.x):
            raise GraphError(f"coordinate {p.x} outside edge {p.edge!r} of length {r}")
        return p

    def point_vertex_distances(self, p: GraphPoint) -> np.ndarray:
        """Distance from ``p`` to every vertex."""
        p = self.resolve(p)
        idx = self.vertex_index
        d = self.vertex_distances
        el = self.element(p.edge)
        out = p.x + d[idx[el.tail]]
        if el.head is not None:
            out = np.minimum(out, el.length - p.x + d[idx[el.head]])
        return out

    def vertex_at(self, p: GraphPoint, tol: float = 0.0) -> str | None:
        """The vertex ``p`` sits on, if any."""
        p = self.resolve(p)
        el = self.element(p.edge)
        if p.x <= tol:
            return el.tail
        if el.head is not None and el.length - p.x <= tol:
            return el.head
        return None

    def other_end(self, e: str, v: str) -> str:
        el = self.element(e)
        if el.tail == v and el.head is not None:
            return el.head
        if el.head == v:
            return el.tail
        raise GraphError(f"vertex {v!r} is not the tail or head of {e!r}")


# ----------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------


def build_graph(
    vertices: Iterable[str],
    edges: Iterable[tuple[str, str, str, float]] = (),
    rays: Iterable[tuple[str, str]] = (),
) -> MetricGraph:
    """Validate a graph description and split tadpoles at their midpoints."""
    vlist = [str(v) for v in vertices]
    seen: set[str] = set()
    for v in vlist:
        if v in seen:
            raise GraphError(f"duplicate vertex id {v!r}")
        seen.add(v)
    vset = set(vlist)
    ids: set[str] = set()
    out_edges: dict[str, Edge] = {}
    out_rays: dict[str, Ray] = {}
    aliases = {}

    def claim(i: str):
        if i in ids:
            raise GraphError(f"duplicate edge id {i!r}")
        ids.add(i)

    edges = [(str(i), str(a), str(b), float(r)) for i, a, b, r in edges]
    rays = [(str(i), str(a)) for i, a in rays]
    for eid, a, b, r in edges:
        claim(eid)
        for v in (a, b):
            if v not in vset:
                raise GraphError(f"edge {eid!r} references unknown vertex {v!r}")
        if not (r > 0.0 and math.isfinite(r)):
            raise GraphError(f"edge {eid!r} has nonpositive or non-finite length {r}")
    for rid, a in rays:
        claim(rid)
        if a not in vset:
            raise GraphError(f"ray {rid!r} references unknown vertex {a!r}")

    for eid, a, b, r in edges:
        if a != b:
            out_edges[eid] = Edge(eid, a, b, r)
            continue
        mid, ea, eb = f"{eid}.mid", f"{eid}.a", f"{eid}.b"
        for new in (ea, eb):
            if new in ids:
                raise GraphError(f"cannot split tadpole {eid!r}: id {new!r} already used")
        if mid in vset:
            raise GraphError(f"cannot split tadpole {eid!r}: vertex {mid!r} already used")
        vlist.append(mid)
        vset.add(mid)
        out_edges[ea] = Edge(ea, a, mid, r / 2)
        out_edges[eb] = Edge(eb, mid, a, r / 2)
        aliases[eid] = ((ea, 0.0), (eb, r / 2))
    for rid, a in rays:
        out_rays[rid] = Ray(rid, a)
    return MetricGraph(tuple(vlist), out_edges, out_rays, aliases)


_LINE = re.compile(r"\s+")


def parse_graph(text: str) -> MetricGraph:
    """Parse the line format ``vertex <id>`` / ``edge <id> <v-> <v+> <r>`` / ``ray <id> <v->``."""
    vertices, edges, rays = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = _LINE.split(line)
        kind = parts[0]
        try:
            if kind == "vertex" and len(parts) == 2:
                vertices.append(parts[1])
            elif kind == "edge" and len(parts) == 5:
                edges.append((parts[1], parts[2], parts[3], float(parts[4])))
            elif kind == "ray" and len(parts) == 3:
                rays.append((parts[1], parts[2]))
            else:
                raise GraphError(f"line {lineno}: cannot parse {raw.strip()!r}")
        except ValueError as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"line {lineno}: malformed length in {raw.strip()!r}") from None
    return build_graph(vertices, edges, rays)


def load_graph(path) -> MetricGraph:
    with open(path) as fh:
        return parse_graph(fh.read())


def format_graph(g: MetricGraph) -> str:
    lines = [f"vertex {v}" for v in g.vertices]
    lines += [f"edge {e.id} {e.tail} {e.head} {e.length!r}" for e in g.edges.values()]
    lines += [f"ray {r.id} {r.tail}" for r in g.rays.values()]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# queries
# ----------------------------------------------------------------------


def orientation_sign(g: MetricGraph, v: str, e: str) -> int:
    """+1 if ``v`` is the tail of ``e``, -1 if it is the head."""
    el = g.element(e)
    if el.tail == v:
        return 1
    if el.head == v:
        return -1
    raise GraphError(f"vertex {v!r} is not incident to {e!r}")


def geodesic_distance(g: MetricGraph, p: GraphPoint, q: GraphPoint) -> float:
    """Length of the shortest path from ``p`` to ``q``; ``math.inf`` if disconnected."""
    p, q = g.resolve(p), g.resolve(q)
    to_v = g.point_vertex_distances(p)
    idx = g.vertex_index
    el = g.element(q.edge)
    best = to_v[idx[el.tail]] + q.x
    if el.head is not None:
        best = min(best, to_v[idx[el.head]] + el.length - q.x)
    if p.edge == q.edge:
        best = min(best, abs(p.x - q.x))
    return float(best)


def ball_measure(g: MetricGraph, p: GraphPoint, radius: float) -> float:
    """Exact measure of the closed geodesic ball of ``radius`` around ``p``."""
    p = g.resolve(p)
    to_v = g.point_vertex_distances(p)
    idx = g.vertex_index
    total = 0.0
    for e in g.edge_ids:
        el = g.element(e)
        r = el.length
        pieces = []
        reach = radius - to_v[idx[el.tail]]
        if reach > 0:
            pieces.append((0.0, min(reach, r)))
        if el.head is not None:
            reach = radius - to_v[idx[el.head]]
            if reach > 0:
                pieces.append((max(r - reach, 0.0), r))
        if e == p.edge:
            pieces.append((max(p.x - radius, 0.0), min(p.x + radius, r)))
        total += _union_length(pieces)
    return total


def _union_length(pieces: list[tuple[float, float]]) -> float:
    total, end = 0.0, -math.inf
    for a, b in sorted(pieces):
        if b <= end:
            continue
        total += b - max(a, end)
        end = b
    return total


# ----------------------------------------------------------------------
# standard graphs
# ----------------------------------------------------------------------


def interval_graph(length: float = 1.0) -> MetricGraph:
    return build_graph(["v0", "v1"], [("e", "v0", "v1", length)])


def star_graph(n: int, length: float | Iterable[float] = 1.0) -> MetricGraph:
    """Compact star: ``n`` edges oriented from the center ``c`` to leaves ``l{i}``."""
    lengths = [float(length)] * n if np.isscalar(length) else [float(r) for r in length]
    verts = ["c"] + [f"l{i}" for i in range(n)]
    return build_graph(verts, [(f"e{i}", "c", f"l{i}", lengths[i]) for i in range(n)])


def spider_graph(n: int) -> MetricGraph:
    """Walsh spider: ``n`` rays ``leg{i}`` glued at ``c``."""
    return build_graph(["c"], rays=[(f"leg{i}", "c") for i in range(n)])


def two_edge_circle(length: float = 1.0) -> MetricGraph:
    """Circle made of two parallel edges ``e1``, ``e2`` from ``v1`` to ``v2``."""
    return build_graph(["v1", "v2"], [("e1", "v1", "v2", length), ("e2", "v1", "v2", length)])


def circle_union_graph(n: int, circumference: float = 1.0) -> MetricGraph:
    """``n`` circles glued at ``o``; circle ``c{i}`` is a tadpole split into two halves."""
    return build_graph(["o"], [(f"c{i}", "o", "o", circumference) for i in range(n)])
