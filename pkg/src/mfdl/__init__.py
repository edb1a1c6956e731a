"""Mean-field depth scales for deep dropout networks.

Theory side: Gaussian-expectation recursions for squared lengths and
correlations, their fixed points, slope quantities, depth scales, and
closed-form linear-network gradient metrics.  Experiment side: a seeded
finite-width Monte-Carlo engine whose backward pass reuses the forward
weights, per-layer gradient metrics over ensembles, variance-vs-mean
power-law fits, and trainable-length bound curves.
"""

from .activations import Activation
from .errors import (
    ConfigError,
    DegenerateStateError,
    EvaluationError,
    MfdlError,
    NonConvergenceError,
    NonExponentialDecayError,
)
from .linear_theory import (
    appendix_layer_oracle,
    g_aa_closed,
    g_ab_closed,
    independence_baseline,
)
from .meanfield import (
    DepthScales,
    LengthState,
    MeanFieldParams,
    c_convergence_rate,
    c_fixed_point,
    c_step,
    c_trajectory,
    chi1,
    chi2,
    depth_scales,
    q_fixed_point,
    q_step,
    q_trajectory,
    xi_from_chi,
)
from .phase import PhaseCurve, critical_line, depth_scale_grid, trainable_length
from .quadrature import QuadratureRule, expect1, expect2, make_rule
from .simulator import (
    EnsembleStats,
    ForwardTrace,
    GradientTrace,
    NetworkConfig,
    NetworkInstance,
    backward,
    ensemble_run,
    ensemble_run_many,
    forward,
    gradient_metrics,
    sample_inputs,
    sample_network,
)
from .universality import PowerLawFit, fit_power_law, universality_report

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "ConfigError",
    "DegenerateStateError",
    "DepthScales",
    "EnsembleStats",
    "EvaluationError",
    "ForwardTrace",
    "GradientTrace",
    "LengthState",
    "MeanFieldParams",
    "MfdlError",
    "NetworkConfig",
    "NetworkInstance",
    "NonConvergenceError",
    "NonExponentialDecayError",
    "PhaseCurve",
    "PowerLawFit",
    "QuadratureRule",
    "appendix_layer_oracle",
    "backward",
    "c_convergence_rate",
    "c_fixed_point",
    "c_step",
    "c_trajectory",
    "chi1",
    "chi2",
    "critical_line",
    "depth_scale_grid",
    "depth_scales",
    "ensemble_run",
    "ensemble_run_many",
    "expect1",
    "expect2",
    "fit_power_law",
    "forward",
    "g_aa_closed",
    "g_ab_closed",
    "gradient_metrics",
    "independence_baseline",
    "make_rule",
    "q_fixed_point",
    "q_step",
    "q_trajectory",
    "sample_inputs",
    "sample_network",
    "trainable_length",
    "universality_report",
    "xi_from_chi",
]
