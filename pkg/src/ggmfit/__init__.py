"""Maximum likelihood estimation in Gaussian graphical models.

Two solvers over a shared objective layer:

* :func:`ips_fit` -- iterative proportional scaling, cycling through
  edges or cliques, with simultaneous covariance/concentration updates;
* :func:`ncd_fit` -- neighbourhood coordinate descent on the convex
  dual, with a positive-definiteness certificate and duality-gap report.

Plus graph utilities, benchmark generators, existence diagnostics, and a
command line tool (``ggmfit``).  The hot update loops run in a compiled
extension when available and fall back to pure NumPy otherwise; see
:mod:`ggmfit.backend`.
"""

from . import errors
from .backend import available_backends, default_name as default_backend
from .existence import ExistenceVerdict, check_existence, decomposable_mle
from .graph import (Graph, cliques, core_numbers, gen_grid,
                    gen_random_density, gen_tree_plus, max_coreness,
                    read_edge_list, write_edge_list)
from .ips import IpsConfig, ips_fit
from .likelihood import (SampleStats, dual_bound, duality_gap,
                         empirical_cov, grad_norm_primal, loglik,
                         stats_from_covariance, to_correlation)
from .ncd import NcdConfig, ncd_fit
from .report import FitReport

__version__ = "0.1.0"

__all__ = [
    "ExistenceVerdict",
    "FitReport",
    "Graph",
    "IpsConfig",
    "NcdConfig",
    "SampleStats",
    "available_backends",
    "check_existence",
    "cliques",
    "core_numbers",
    "decomposable_mle",
    "default_backend",
    "dual_bound",
    "duality_gap",
    "empirical_cov",
    "errors",
    "gen_grid",
    "gen_random_density",
    "gen_tree_plus",
    "grad_norm_primal",
    "ips_fit",
    "loglik",
    "max_coreness",
    "ncd_fit",
    "read_edge_list",
    "stats_from_covariance",
    "to_correlation",
    "write_edge_list",
    "__version__",
]
