"""First-order boundary triples for Laplacians on intervals, metric graphs and discretizations."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, ContractError, DomainError, EigenvalueAt,  # noqa: E402
                     NearDirichletSpectrum, SingularSystem)
from .metric_graph import Edge, MetricGraph, path_graph, star_graph, unit_interval  # noqa: E402
from .core import (dtn, kernel_correspondence, krein_resolvent_diff, lambda_metric,  # noqa: E402
                   q0, robin, spectral_relation_scan, verify_suite)

__all__ = [
    "__version__",
    "ConfigurationError", "ContractError", "DomainError", "EigenvalueAt",
    "NearDirichletSpectrum", "SingularSystem",
    "Edge", "MetricGraph", "path_graph", "star_graph", "unit_interval",
    "dtn", "kernel_correspondence", "krein_resolvent_diff", "lambda_metric", "q0", "robin",
    "spectral_relation_scan", "verify_suite",
]
