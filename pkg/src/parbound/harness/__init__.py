"""Theorem-level experiments, their configuration and reports."""

from ..regdist import RegularizedDistanceField
from .config import DATA_KINDS, EXPERIMENTS, SOURCE_KINDS, ExperimentConfig
from .experiments import (clear_cache, run_almost_positivity, run_boundary_harnack_ratio,
                          run_dyadic_consistency, run_hopf, run_interior_modulus,
                          run_upper_bound, thread_cap)
from .green import dyadic_green_bound, dyadic_tail
from .report import FAIL, PASS, ExperimentReport

RUNNERS = {
    "hopf": run_hopf,
    "upper_bound": run_upper_bound,
    "almost_positivity": run_almost_positivity,
    "boundary_harnack": run_boundary_harnack_ratio,
    "interior_modulus": run_interior_modulus,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Dispatch on ``cfg.kind``; dyadic consistency builds its distance field from the domain."""
    if cfg.kind == "dyadic_consistency":
        field = RegularizedDistanceField(cfg.domain_obj())
        return run_dyadic_consistency(field, cfg)
    return RUNNERS[cfg.kind](cfg)


__all__ = [
    "DATA_KINDS", "EXPERIMENTS", "SOURCE_KINDS", "ExperimentConfig", "ExperimentReport",
    "PASS", "FAIL", "RUNNERS", "run_experiment", "run_hopf", "run_upper_bound",
    "run_almost_positivity", "run_boundary_harnack_ratio", "run_dyadic_consistency",
    "run_interior_modulus", "dyadic_green_bound", "dyadic_tail", "clear_cache", "thread_cap",
]
