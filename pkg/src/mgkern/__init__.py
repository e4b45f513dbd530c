"""Heat kernels, Bakry-Emery constants and functional inequalities on metric graphs."""

from .graph import (
    GraphError,
    GraphPoint,
    MetricGraph,
    build_graph,
    circle_union_graph,
    geodesic_distance,
    interval_graph,
    load_graph,
    parse_graph,
    spider_graph,
    star_graph,
    two_edge_circle,
)
from .kernels import (
    KernelToleranceError,
    PathSumKernel,
    form_heat_kernel,
    gradient_kernel,
    heat_kernel,
    kernel_ratio_sup,
)
from .semigroup import apply_form_heat, apply_heat, be_constant
from .spectral import eigensolve, harmonic_forms, poincare_orientation

__version__ = "0.1.0"

__all__ = [
    "GraphError",
    "GraphPoint",
    "MetricGraph",
    "build_graph",
    "circle_union_graph",
    "geodesic_distance",
    "interval_graph",
    "load_graph",
    "parse_graph",
    "spider_graph",
    "star_graph",
    "two_edge_circle",
    "KernelToleranceError",
    "PathSumKernel",
    "form_heat_kernel",
    "gradient_kernel",
    "heat_kernel",
    "kernel_ratio_sup",
    "apply_form_heat",
    "apply_heat",
    "be_constant",
    "eigensolve",
    "harmonic_forms",
    "poincare_orientation",
]
