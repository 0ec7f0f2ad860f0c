"""Lattice model: environments, quenched kernels, webs, smoothing and fluctuations."""
from .env import (
    EnvDistribution,
    Environment,
    RowLayout,
    gen_cone_environment,
    gen_environment,
    parity_round,
    round_half_down,
)
from .fluctuations import (
    FluctuationSample,
    current_fluctuations,
    exact_current_covariance,
    lattice_point,
    quenched_mean_fluctuations,
    two_sided_walk,
)
from .kernels import (
    KernelSlice,
    chapman_kolmogorov_gap,
    compose,
    dual_cdf_from_forward,
    dual_distribution,
    forward_distribution,
    pair_collision_probability,
    propagate_kernel,
    quenched_mean_field,
)
from .smoothing import SmoothingState, current_identity_check, evolve_smoothing, height_function, initial_state
from .web import ArrowConfig, DualArrowConfig, build_dual_web, check_noncrossing, corrupt_dual, sample_web
