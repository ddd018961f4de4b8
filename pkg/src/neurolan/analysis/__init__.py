"""Monte Carlo experiments, distance metrics and reports."""
from .experiments import (EXPERIMENTS, chaos_rate_experiment, consistency_experiment,
                          identifiability_scan, lan_experiment, normality_experiment,
                          run_tasks, score_calibration)
from .metrics import frobenius_relative, ks_critical_value, ks_normal, loglog_slope, wasserstein1
from .report import ExperimentReport, Verdict

__all__ = [
    "EXPERIMENTS", "ExperimentReport", "Verdict", "chaos_rate_experiment", "consistency_experiment",
    "frobenius_relative", "identifiability_scan", "ks_critical_value", "ks_normal", "lan_experiment",
    "loglog_slope", "normality_experiment", "run_tasks", "score_calibration", "wasserstein1",
]
