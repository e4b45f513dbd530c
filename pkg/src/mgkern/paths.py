"""Combinatorial paths between points of a metric graph and their amplitudes.

A path ``(e0, v0, e1, ..., vn, e_{n+1})`` leaves the point ``x`` on ``e0``
through ``v0``, runs through the interior edges ``e1..en`` end to end and
arrives at ``y`` on ``e_{n+1}`` from ``vn``.  The trivial path ``(e0,)``
joins two points of the same edge directly.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .graph import HEAD, TAIL, GraphError, GraphPoint, MetricGraph, geodesic_distance

_SLACK = 1e-12
_LEN_QUANTUM = 1e-12


class PathBudgetExceeded(RuntimeError):
    """Raised when enumeration would visit more states than allowed."""


def _sign(side: int) -> int:
    return 1 if side == TAIL else -1


@dataclass(frozen=True)
class CombinatorialPath:
    edges: tuple[str, ...]
    vertices: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.edges) != len(self.vertices) + 1:
            raise GraphError("a path alternates edges and vertices and starts and ends with an edge")

    @property
    def is_trivial(self) -> bool:
        return not self.vertices

    @property
    def combinatorial_length(self) -> int:
        return len(self.vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    def __str__(self) -> str:
        items = [self.edges[0]]
        for v, e in zip(self.vertices, self.edges[1:]):
            items += [v, e]
        return "(" + ", ".join(items) + ")"


@dataclass(frozen=True)
class PathGeometry:
    length: float
    exit_sign: int = 0
    entry_sign: int = 0


class PathList(list):
    """List of ``(path, geometry)`` pairs; ``below_distance`` flags a cutoff under rho(x, y)."""

    below_distance: bool = False


def _side_of(g: MetricGraph, e: str, v: str) -> int:
    el = g.element(e)
    if el.tail == v:
        return TAIL
    if el.head == v:
        return HEAD
    raise GraphError(f"vertex {v!r} is not an endpoint of {e!r}")


def validate_path(g: MetricGraph, c: CombinatorialPath) -> None:
    for e in c.edges:
        g.element(e)
    if c.is_trivial:
        return
    _side_of(g, c.edges[0], c.vertices[0])
    _side_of(g, c.edges[-1], c.vertices[-1])
    for k in range(1, len(c.edges) - 1):
        e = c.edges[k]
        if g.is_ray(e):
            raise GraphError(f"ray {e!r} cannot be traversed through")
        a, b = c.vertices[k - 1], c.vertices[k]
        if a == b or {a, b} != {g.element(e).tail, g.element(e).head}:
            raise GraphError(f"{a!r} and {b!r} are not the two endpoints of {e!r}")


def scattering_amplitude(c: CombinatorialPath, g: MetricGraph) -> float:
    """Kirchhoff amplitude: product of ``2/deg(v_k) - [e_k == e_{k+1}]`` along the path."""
    validate_path(g, c)
    s = 1.0
    for k, v in enumerate(c.vertices):
        s *= 2.0 / g.degree(v) - (1.0 if c.edges[k] == c.edges[k + 1] else 0.0)
    return s


def exit_entry_signs(c: CombinatorialPath, g: MetricGraph) -> tuple[int, int]:
    """Orientation signs ``U_{v0}(e0)`` and ``U_{vn}(e_{n+1})``."""
    if c.is_trivial:
        return 0, 0
    return (
        _sign(_side_of(g, c.edges[0], c.vertices[0])),
        _sign(_side_of(g, c.edges[-1], c.vertices[-1])),
    )


def form_scattering_amplitude(c: CombinatorialPath, g: MetricGraph) -> float:
    """Anti-Kirchhoff amplitude ``-U_{v0}(e0) U_{vn}(e_{n+1}) S(c)``; ``+1`` for the trivial path.

    In the local outward frame each anti-Kirchhoff vertex scatters with the
    negated Kirchhoff matrix and each interior edge flips the frame once, so
    only the two outermost orientation factors survive, with one overall
    minus sign.
    """
    if c.is_trivial:
        validate_path(g, c)
        return 1.0
    s_exit, s_entry = exit_entry_signs(c, g)
    return -s_exit * s_entry * scattering_amplitude(c, g)


def path_geometry(g: MetricGraph, c: CombinatorialPath, x: GraphPoint, y: GraphPoint) -> PathGeometry:
    x, y = g.resolve(x), g.resolve(y)
    if c.edges[0] != x.edge or c.edges[-1] != y.edge:
        raise GraphError(f"path {c} does not join {x} and {y}")
    if c.is_trivial:
        return PathGeometry(abs(x.x - y.x))
    validate_path(g, c)
    s0, s1 = exit_entry_signs(c, g)
    d = x.x if s0 > 0 else g.length(x.edge) - x.x
    d += y.x if s1 > 0 else g.length(y.edge) - y.x
    d += math.fsum(g.length(e) for e in c.edges[1:-1])
    return PathGeometry(d, s0, s1)


def enumerate_paths(
    g: MetricGraph,
    x: GraphPoint,
    y: GraphPoint,
    L_max: float,
    skip_zero: bool = False,
    budget: int = 1_000_000,
) -> PathList:
    """All combinatorial paths from ``x`` to ``y`` with metric length ``<= L_max``.

    Depth-first with pruning by ``accumulated + dist(vertex, y)``.  With
    ``skip_zero`` paths carrying a zero amplitude (reflections at degree-2
    vertices) are dropped.
    """
    x, y = g.resolve(x), g.resolve(y)
    out = PathList()
    rho = geodesic_distance(g, x, y)
    if L_max < rho - _SLACK:
        warnings.warn(f"L_max={L_max} below rho(x, y)={rho}: no paths", RuntimeWarning, stacklevel=2)
        out.below_distance = True
        return out
    limit = L_max + _SLACK * max(1.0, L_max)
    to_y = _vertex_to_point(g, y)
    ry = g.length(y.edge)

    if x.edge == y.edge:
        out.append((CombinatorialPath((x.edge,)), PathGeometry(abs(x.x - y.x))))

    count = 0
    rx = g.length(x.edge)
    for side in g.sides(x.edge):
        v0 = g.endpoint(x.edge, side)
        start = x.x if side == TAIL else rx - x.x
        stack = [(v0, (x.edge,), (v0,), start)]
        while stack:
            v, edges, verts, acc = stack.pop()
            count += 1
            if count > budget:
                raise PathBudgetExceeded(f"more than {budget} partial paths")
            deg = g.degree(v)
            for e, side_v in g.incidences[v]:
                factor = 2.0 / deg - (1.0 if e == edges[-1] else 0.0)
                if skip_zero and factor == 0.0:
                    continue
                if e == y.edge:
                    d = acc + (y.x if side_v == TAIL else ry - y.x)
                    if d <= limit:
                        c = CombinatorialPath(edges + (e,), verts)
                        out.append((c, PathGeometry(d, _sign(_side_of(g, x.edge, verts[0])), _sign(side_v))))
                if g.is_ray(e):
                    continue
                w = g.endpoint(e, 1 - side_v)
                nacc = acc + g.length(e)
                if nacc + to_y[w] <= limit:
                    stack.append((w, edges + (e,), verts + (w,), nacc))
    out.sort(key=lambda item: (item[1].length, str(item[0])))
    return out


def _vertex_to_point(g: MetricGraph, y: GraphPoint) -> dict[str, float]:
    d = g.point_vertex_distances(y)
    return {v: float(d[i]) for i, v in enumerate(g.vertices)}


def iter_brute_force_paths(g: MetricGraph, x: GraphPoint, y: GraphPoint, max_vertices: int) -> Iterator[CombinatorialPath]:
    """Breadth-first enumeration of every path visiting at most ``max_vertices`` vertices.

    No length pruning; used as an exhaustiveness oracle on small graphs.
    """
    x, y = g.resolve(x), g.resolve(y)
    if x.edge == y.edge:
        yield CombinatorialPath((x.edge,))
    layer = [((x.edge,), (g.endpoint(x.edge, s),)) for s in g.sides(x.edge)]
    for _ in range(max_vertices):
        nxt = []
        for edges, verts in layer:
            v = verts[-1]
            for e, side_v in g.incidences[v]:
                if e == y.edge:
                    yield CombinatorialPath(edges + (e,), verts)
                if not g.is_ray(e):
                    nxt.append((edges + (e,), verts + (g.endpoint(e, 1 - side_v),)))
        layer = nxt


# ----------------------------------------------------------------------
# merged skeletons
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class PathSkeleton:
    """All nontrivial paths from edge ``ex`` to edge ``ey`` with interior length ``<= L``.

    Paths sharing exit side, entry side and interior length are merged and
    their amplitudes summed; coordinates only enter through the exit and
    entry distances, so one skeleton serves every pair of points on the two
    edges.
    """

    ex: str
    ey: str
    L: float
    exit_side: np.ndarray
    entry_side: np.ndarray
    interior: np.ndarray
    amplitude: np.ndarray
    n_paths: int

    @property
    def exit_sign(self) -> np.ndarray:
        return np.where(self.exit_side == TAIL, 1.0, -1.0)

    @property
    def entry_sign(self) -> np.ndarray:
        return np.where(self.entry_side == TAIL, 1.0, -1.0)

    @property
    def form_amplitude(self) -> np.ndarray:
        return -self.exit_sign * self.entry_sign * self.amplitude


def path_skeleton(g: MetricGraph, ex: str, ey: str, L: float, budget: int = 2_000_000) -> PathSkeleton:
    """Dynamic program over (exit side, vertex, incoming edge, interior length)."""
    g.element(ex)
    g.element(ey)
    limit = L + _SLACK * max(1.0, L)
    pending: dict[tuple, list] = {}
    heap: list[tuple[float, tuple]] = []

    def push(key, ell, amp, count):
        slot = pending.get(key)
        if slot is None:
            pending[key] = [ell, amp, count]
            heapq.heappush(heap, (ell, key))
        else:
            slot[1] += amp
            slot[2] += count

    for side in g.sides(ex):
        push((side, g.endpoint(ex, side), ex, 0), 0.0, 1.0, 1)

    found: dict[tuple, list] = {}
    pops = 0
    n_paths = 0
    while heap:
        _, key = heapq.heappop(heap)
        ell, amp, count = pending.pop(key)
        pops += 1
        if pops > budget:
            raise PathBudgetExceeded(f"path skeleton {ex}->{ey} needs more than {budget} states")
        exit_side, v, prev, _ = key
        deg = g.degree(v)
        for e, side_v in g.incidences[v]:
            factor = 2.0 / deg - (1.0 if e == prev else 0.0)
            if factor == 0.0:
                continue
            a = amp * factor
            if e == ey:
                fk = (exit_side, side_v, key[3])
                slot = found.get(fk)
                if slot is None:
                    found[fk] = [ell, a]
                else:
                    slot[1] += a
                n_paths += count
            if g.is_ray(e):
                continue
            nell = ell + g.length(e)
            if nell <= limit:
                w = g.endpoint(e, 1 - side_v)
                push((exit_side, w, e, round(nell / _LEN_QUANTUM)), nell, a, count)

    keys = sorted(found, key=lambda k: (found[k][0], k[0], k[1]))
    return PathSkeleton(
        ex,
        ey,
        L,
        np.array([k[0] for k in keys], dtype=np.int8),
        np.array([k[1] for k in keys], dtype=np.int8),
        np.array([found[k][0] for k in keys], dtype=float),
        np.array([found[k][1] for k in keys], dtype=float),
        n_paths,
    )


def branching_bound(g: MetricGraph) -> int:
    """Upper bound on nonzero-amplitude continuations through a finite edge at any vertex."""
    best = 1
    for v in g.vertices:
        if g.degree(v) == 2:
            continue
        finite = sum(1 for e, _ in g.incidences[v] if not g.is_ray(e))
        best = max(best, finite)
    return best
