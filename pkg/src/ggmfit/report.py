"""Fit reports shared by both solvers and the command line tool."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .existence import ExistenceVerdict

__all__ = ["FitReport", "STATUS_CONVERGED", "STATUS_MAX_CYCLES",
           "STATUS_STUCK_SINGULAR"]

STATUS_CONVERGED = "converged"
STATUS_MAX_CYCLES = "max_cycles_exceeded"
STATUS_STUCK_SINGULAR = "stuck_singular"


@dataclass
class FitReport:
    """Outcome of a solver run.

    ``grad_norm`` is the max-abs pattern deviation for the scaling
    algorithms and the max column sum of the off-pattern concentration
    entries for coordinate descent; ``converged`` guarantees it is below
    the respective threshold (eps_prime, resp. eps_dprime).  Matrices are
    on the original variable scale even when the solver worked on the
    correlation scale internally.
    """

    algorithm: str
    converged: bool
    status: str
    cycles: int
    wall_time: float
    setup_time: float
    eps: float
    eps_prime: float
    n: int
    d: int
    backend: str
    loglik: float | None = None
    grad_norm: float | None = None
    eps_dprime: float | None = None
    dual_bound: float | None = None
    duality_gap: float | None = None
    update_sets: str | None = None
    updates_performed: int = 0
    updates_skipped: int = 0
    cycles_phase1: int | None = None
    cycles_phase2: int | None = None
    rank_trace: list[int] | None = None
    loglik_trace: list[float] | None = None
    grad_trace: list[float] | None = None
    logdet_trace: list[float] | None = None
    min_update_delta: float | None = None
    divergence_suspected: bool = False
    existence: ExistenceVerdict | None = None
    K_hat: np.ndarray | None = None
    Sigma_hat: np.ndarray | None = None
    invocation: dict = field(default_factory=dict)

    def to_dict(self, include_matrices: bool = False) -> dict:
        """JSON-ready dictionary; matrices included only on request."""
        out = {
            "algorithm": self.algorithm,
            "converged": self.converged,
            "status": self.status,
            "cycles": self.cycles,
            "wall_time": self.wall_time,
            "setup_time": self.setup_time,
            "eps": self.eps,
            "eps_prime": self.eps_prime,
            "eps_dprime": self.eps_dprime,
            "n": self.n,
            "d": self.d,
            "backend": self.backend,
            "loglik": self.loglik,
            "grad_norm": self.grad_norm,
            "dual_bound": self.dual_bound,
            "duality_gap": self.duality_gap,
            "update_sets": self.update_sets,
            "updates_performed": self.updates_performed,
            "updates_skipped": self.updates_skipped,
            "cycles_phase1": self.cycles_phase1,
            "cycles_phase2": self.cycles_phase2,
            "rank_trace": self.rank_trace,
            "min_update_delta": self.min_update_delta,
            "divergence_suspected": self.divergence_suspected,
            "existence": self.existence.to_dict() if self.existence else None,
            "invocation": self.invocation,
        }
        if include_matrices:
            out["K_hat"] = (None if self.K_hat is None
                            else self.K_hat.tolist())
            out["Sigma_hat"] = (None if self.Sigma_hat is None
                                else self.Sigma_hat.tolist())
        return out
