"""Monte Carlo experiments with reproducible seeding and standard test statistics."""
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .result import Check, EnsembleResult, Table
from .runners import (
    RUNNERS,
    default_jobs,
    experiment_seed,
    run_current,
    run_experiment,
    run_local_time,
    run_qip,
    run_quenched_mean,
    run_return_decay,
    run_two_point_cov,
)
from .stats import KSResult, ScalingFit, covariance, fit_scaling, ks_normal_fitted, ks_statistic, moments
