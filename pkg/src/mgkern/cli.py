"""Command-line driver: ``mgkern <command> [options]``, CSV on stdout (or ``--out``)."""

from __future__ import annotations

import argparse
import csv
import math
import os
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from . import graph as gr
from .functions import GraphFunction
from .graph import GraphError, GraphPoint, MetricGraph
from .inequalities import (
    IntervalSet,
    brunn_minkowski_violation,
    buser_check,
    cheeger_constant,
    perimeter,
)
from .kernels import (
    KernelToleranceError,
    PathSumKernel,
    kernel_ratio_sup,
    spider_form_kernel,
    spider_kernel,
    vertex_probe_grid,
)
from .semigroup import be_constant, set_threads
from .spectral import eigen_table, eigensolve, harmonic_forms, poincare_orientation

COMMANDS = (
    "kernel",
    "spectrum",
    "be-constant",
    "ratio-sup",
    "spider-oracle",
    "buser",
    "cheeger",
    "bm-check",
    "perimeter",
    "duality",
)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "yes" if x else "no"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


# ----------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------


def parse_t_grid(text: str) -> list[float]:
    """``a:b:logN`` (log-spaced) or ``a:b:linN`` or a comma-separated list."""
    m = re.fullmatch(r"\s*([^:]+):([^:]+):(log|lin)(\d+)\s*", text)
    if m:
        a, b, n = float(m.group(1)), float(m.group(2)), int(m.group(4))
        if n < 1 or a <= 0 or b < a:
            raise ValueError(f"bad time grid {text!r}")
        if n == 1:
            return [a]
        pts = np.geomspace(a, b, n) if m.group(3) == "log" else np.linspace(a, b, n)
        return [float(x) for x in pts]
    return [float(x) for x in text.split(",") if x.strip()]


def read_config(path: str) -> list[str]:
    """``key=value`` lines become ``--key value`` arguments."""
    argv = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            argv += [f"--{k.replace('_', '-')}", v]
    return argv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mgkern", description="Heat kernels and functional inequalities on metric graphs.")
    p.add_argument("--version", action="version", version="mgkern 0.1.0")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp, graph=True):
        if graph:
            sp.add_argument("--graph", required=False, help="graph file or builtin (spider:N, star:N[:r], interval:r, circle:r, circles:N[:c])")
        sp.add_argument("--config", help="file of key=value lines with the same names as the flags")
        sp.add_argument("--eps", type=float, default=1e-12, help="kernel tail tolerance")
        sp.add_argument("--out", help="write CSV here instead of stdout")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    sp = sub.add_parser("kernel", help="p_t, form kernel and x-gradient at one pair of points")
    common(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--x", required=True, help="edge:coordinate")
    sp.add_argument("--y", required=True, help="edge:coordinate")

    sp = sub.add_parser("spectrum", help="eigenvalue table")
    common(sp)
    sp.add_argument("--lambda-max", type=float, default=200.0)

    sp = sub.add_parser("be-constant", help="measured Bakry-Emery constant over a time grid")
    common(sp)
    sp.add_argument("--t-grid", default="0.01:1:log8")
    sp.add_argument("--poly", action="append", default=[], help="edge:c0,c1,... polynomial test function piece")
    sp.add_argument("--trig", action="append", default=[], help="edge:a,b,k[;a,b,k] trigonometric test function piece")

    sp = sub.add_parser("ratio-sup", help="sup of |form kernel| / heat kernel over a grid")
    common(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--grid-n", type=int, default=32)

    sp = sub.add_parser("spider-oracle", help="path sums against the closed-form spider kernels")
    common(sp, graph=False)
    sp.add_argument("--legs", type=int, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--pairs", type=int, default=20)

    sp = sub.add_parser("buser", help="Cheeger lower bound and Buser upper bound against lambda_1")
    common(sp)
    sp.add_argument("--c1", type=float, default=1.0)
    sp.add_argument("--resolution", type=int, default=64)

    sp = sub.add_parser("cheeger", help="Cheeger constant search")
    common(sp)
    sp.add_argument("--resolution", type=int, default=64)

    sp = sub.add_parser("bm-check", help="Brunn-Minkowski failure on the three-leg spider")
    common(sp, graph=False)
    sp.add_argument("--K", type=float, default=0.0)
    sp.add_argument("--t", type=float, default=None)
    sp.add_argument("--scale", type=float, default=None)
    sp.add_argument("--atoms", type=int, default=64)

    sp = sub.add_parser("perimeter", help="combinatorial and heat-flow perimeter of an interval set")
    common(sp)
    sp.add_argument("--set", help="file of 'interval <edge> <a> <b>' lines")
    sp.add_argument("--interval", action="append", default=[], help="edge:a:b (repeatable)")

    sp = sub.add_parser("duality", help="Poincare orientation and harmonic dimension")
    common(sp)
    return p


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one command; ``options`` keeps the command-specific flags."""

    command: str
    graph: str | None
    t_values: tuple[float, ...]
    eps: float
    grid_n: int | None
    out: str | None
    seed: int
    threads: int
    options: argparse.Namespace = field(compare=False, repr=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        bad = [t for t in self.t_values if not t > 0]
        if bad:
            raise ValueError(f"times must be positive, got {bad[0]}")
        if self.grid_n is not None and self.grid_n < 1:
            raise ValueError(f"grid density must be at least 1, got {self.grid_n}")
        if self.threads < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")

    @classmethod
    def from_namespace(cls, a: argparse.Namespace) -> "RunConfig":
        if getattr(a, "t_grid", None) is not None:
            ts = tuple(parse_t_grid(a.t_grid))
        elif getattr(a, "t", None) is not None:
            ts = (float(a.t),)
        else:
            ts = ()
        return cls(
            command=a.command,
            graph=getattr(a, "graph", None),
            t_values=ts,
            eps=a.eps,
            grid_n=getattr(a, "grid_n", None),
            out=a.out,
            seed=a.seed,
            threads=a.threads,
            options=a,
        )


def parse_namespace(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            parser.error("--config needs a path")
        try:
            extra = read_config(argv[i + 1])
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
        # config values go right after the command so explicit flags override them
        del argv[i : i + 2]
        cmd_at = next((k for k, tok in enumerate(argv) if tok in COMMANDS), None)
        if cmd_at is None:
            parser.error("no command given")
        argv = argv[: cmd_at + 1] + extra + argv[cmd_at + 1 :]
    return parser.parse_args(argv)


def parse_args(argv: list[str]) -> RunConfig:
    """Parse the command line; bad values raise ValueError, bad syntax exits with status 2."""
    return RunConfig.from_namespace(parse_namespace(argv))


_BUILTIN = re.compile(r"(spider|star|interval|circle|circles):([0-9.:]+)")


def load_graph_arg(text: str | None) -> MetricGraph:
    if not text:
        raise GraphError("--graph is required for this command")
    if os.path.exists(text):
        return gr.load_graph(text)
    m = _BUILTIN.fullmatch(text)
    if not m:
        raise GraphError(f"graph file {text!r} not found")
    kind, args = m.group(1), [a for a in m.group(2).split(":") if a]
    if kind == "spider":
        return gr.spider_graph(int(args[0]))
    if kind == "star":
        return gr.star_graph(int(args[0]), float(args[1]) if len(args) > 1 else 1.0)
    if kind == "interval":
        return gr.interval_graph(float(args[0]))
    if kind == "circle":
        return gr.two_edge_circle(float(args[0]) / 2)
    return gr.circle_union_graph(int(args[0]), float(args[1]) if len(args) > 1 else 1.0)


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def _cmd_kernel(a, w):
    g = load_graph_arg(a.graph)
    k = PathSumKernel(g, a.eps)
    x, y = g.resolve(GraphPoint.parse(a.x)), g.resolve(GraphPoint.parse(a.y))
    w.writerow(["kind", "t", "x", "y", "value", "tail_bound", "paths", "tolerance"])
    kinds = ["heat", "form"] + (["grad"] if g.vertex_at(x) is None else [])
    for kind in kinds:
        v = k.value(kind, a.t, x, y)
        w.writerow([kind, fmt(a.t), str(x), str(y), fmt(v.value), fmt(v.tail_bound), fmt(v.paths_used), fmt(a.eps)])


def _cmd_spectrum(a, w):
    g = load_graph_arg(a.graph)
    pairs = eigensolve(g, a.lambda_max)
    w.writerow(["index", "lambda", "multiplicity", "tolerance"])
    for i, lam, m in eigen_table(pairs):
        w.writerow([i, fmt(lam), m, fmt(1e-12)])


def _test_function(g: MetricGraph, polys, trigs) -> GraphFunction | None:
    if not polys and not trigs:
        return None
    coeffs, terms = {}, {}
    for item in polys:
        e, cs = item.split(":", 1)
        coeffs[e] = [float(c) for c in cs.split(",")]
    for item in trigs:
        e, body = item.split(":", 1)
        terms[e] = [tuple(float(v) for v in term.split(",")) for term in body.split(";") if term]
    pieces = {}
    if coeffs:
        pieces.update(GraphFunction.polynomial(g, coeffs).pieces)
    if terms:
        tf = GraphFunction.trigonometric(g, terms)
        for e, p in tf.pieces.items():
            if e in pieces:
                a0, b0 = pieces[e], p
                pieces[e] = type(p)(lambda x, a0=a0, b0=b0: a0.value(x) + b0.value(x),
                                    lambda x, a0=a0, b0=b0: a0.derivative(x) + b0.derivative(x))
            else:
                pieces[e] = p
    f = GraphFunction(g, pieces)
    if not f.is_continuous(1e-9):
        raise GraphError("test function is not continuous at the vertices")
    return f


def _cmd_be_constant(a, w):
    g = load_graph_arg(a.graph)
    k = PathSumKernel(g, a.eps)
    ts = parse_t_grid(a.t_grid)
    f = _test_function(g, a.poly, a.trig)
    rep = be_constant(g, ts, [f] if f is not None else None, None, k)
    kr = dict(rep.kernel_ratio)
    w.writerow(["t", "be_ratio", "kernel_ratio", "tolerance"])
    for t, r in rep.curve:
        w.writerow([fmt(t), fmt(r), fmt(kr.get(t, math.nan)), fmt(a.eps)])
    if f is None:
        # two routes to the same constant; their gap is the grid slack
        slack = max((abs(r - kr[t]) for t, r in rep.curve if t in kr), default=0.0)
    else:
        slack = rep.tolerance
    return f"C1={rep.ratio_sup:.6f}±{slack:.1e}"


def _cmd_ratio_sup(a, w):
    from .kernels import default_grid

    g = load_graph_arg(a.graph)
    k = PathSumKernel(g, a.eps)
    grid = default_grid(g, a.grid_n, a.t)
    for v in g.vertices:
        if g.degree(v) >= 3:
            d = 1e-3 * math.sqrt(a.t)
            for e, xs in vertex_probe_grid(g, v, d * np.array([0.25, 0.5, 1.0])).items():
                grid[e] = np.unique(np.concatenate([grid.get(e, np.zeros(0)), xs]))
    rep = kernel_ratio_sup(g, a.t, grid, k)
    x, y = rep.argmax if rep.argmax else ("", "")
    w.writerow(["t", "ratio_sup", "x", "y", "pairs_used", "pairs_skipped", "tolerance"])
    w.writerow([fmt(a.t), fmt(rep.value), str(x), str(y), rep.pairs_used, rep.pairs_skipped, fmt(a.eps)])


def _cmd_spider_oracle(a, w):
    N = a.legs
    g = gr.spider_graph(N)
    k = PathSumKernel(g, a.eps)
    rng = np.random.default_rng(a.seed)
    w.writerow(["kind", "leg_x", "x", "leg_y", "y", "path_sum", "closed_form", "abs_diff", "tolerance"])
    worst = 0.0
    for _ in range(a.pairs):
        j, l = rng.integers(N), rng.integers(N)
        x, y = rng.uniform(0, 2), rng.uniform(0, 2)
        for kind, oracle in (("heat", spider_kernel), ("form", spider_form_kernel)):
            v = k.value(kind, a.t, GraphPoint(f"leg{j}", x), GraphPoint(f"leg{l}", y)).value
            ref = oracle(N, a.t, j, x, l, y)
            d = abs(v - ref)
            worst = max(worst, d)
            w.writerow([kind, j, fmt(x), l, fmt(y), fmt(v), fmt(ref), fmt(d), fmt(a.eps)])
    return f"max_abs_diff={worst:.3e}"


def _cmd_buser(a, w):
    g = load_graph_arg(a.graph)
    rep = buser_check(g, a.c1, resolution=a.resolution)
    w.writerow(["lambda1", "h", "C1", "lower", "upper", "holds", "tolerance"])
    w.writerow([fmt(rep.lambda1), fmt(rep.h), fmt(rep.C1), fmt(rep.lower), fmt(rep.upper), fmt(rep.holds), fmt(1e-12)])


def _cmd_cheeger(a, w):
    g = load_graph_arg(a.graph)
    rep = cheeger_constant(g, a.resolution)
    sets = ";".join(f"{e}:{fmt(x0)}:{fmt(x1)}" for e, x0, x1 in rep.argmin.intervals) if rep.argmin else ""
    w.writerow(["h", "set", "candidates", "resolution", "tolerance"])
    w.writerow([fmt(rep.h), sets, rep.candidates, rep.resolution, fmt(0.0)])


def _cmd_bm(a, w):
    g = gr.spider_graph(3)
    rep = brunn_minkowski_violation(g, a.K, a.scale, a.t, a.atoms)
    w.writerow(["K", "scale", "t", "lhs", "rhs", "W2", "margin", "violated", "tolerance"])
    w.writerow([fmt(rep.K), fmt(rep.scale), fmt(rep.t), fmt(rep.lhs), fmt(rep.rhs), fmt(rep.W2), fmt(rep.margin),
                fmt(rep.violated), fmt(1e-12)])


def _cmd_perimeter(a, w):
    g = load_graph_arg(a.graph)
    lines = []
    if a.set:
        with open(a.set) as fh:
            lines += fh.read().splitlines()
    for item in a.interval:
        e, x0, x1 = item.rsplit(":", 2)
        lines.append(f"interval {e} {x0} {x1}")
    E = IntervalSet.parse(g, lines)
    rep = perimeter(g, E, kernel=PathSumKernel(g, a.eps))
    w.writerow(["combinatorial", "heat_estimate", "t", "heat_value", "refused", "tolerance"])
    for t, v in rep.heat_values:
        comb = "" if rep.combinatorial is None else rep.combinatorial
        w.writerow([comb, fmt(rep.heat_estimate), fmt(t), fmt(v), rep.refused or "", fmt(a.eps)])


def _cmd_duality(a, w):
    g = load_graph_arg(a.graph)
    h = poincare_orientation(g)
    dim = harmonic_forms(g).dimension
    return f"orientation={'yes' if h is not None else 'no'}, harmonic_dim={dim}"


HANDLERS = {
    "kernel": _cmd_kernel,
    "spectrum": _cmd_spectrum,
    "be-constant": _cmd_be_constant,
    "ratio-sup": _cmd_ratio_sup,
    "spider-oracle": _cmd_spider_oracle,
    "buser": _cmd_buser,
    "cheeger": _cmd_cheeger,
    "bm-check": _cmd_bm,
    "perimeter": _cmd_perimeter,
    "duality": _cmd_duality,
}


def run(config: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    set_threads(config.threads)
    fh = open(config.out, "w", newline="") if config.out else stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        tail = HANDLERS[config.command](config.options, w)
        if tail:
            fh.write(tail + "\n")
    finally:
        if fh is not stdout:
            fh.close()
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(parse_args(argv))
    except (GraphError, ValueError, KernelToleranceError, RuntimeError, OSError) as exc:
        print(f"error={type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
