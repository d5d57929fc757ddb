"""Arbitrage-consistent option premium surfaces.

A premium surface C(moneyness, tau) is fit by a small MLP whose training
loss penalizes violations of the no-arbitrage derivative inequalities
(monotone and convex in strike, monotone in expiry) on a mesh, using exact
layer-wise propagation of first and second input derivatives. Synthetic
ground truth comes from a SABR pricer; evaluation runs in both premium and
implied-vol space.
"""

from .activations import ActivationKind, activation_from_name
from .config import ConfigError, ExperimentConfig, default_config, dump_config, load_config
from .constraints import (
    LossReport,
    PenaltyConfig,
    lambda_penalty,
    mesh_violations,
    mse_loss,
    penalty_loss,
    total_cost,
)
from .datasets import (
    GridSpec,
    QuoteGrid,
    QuotePoint,
    boundary_augment,
    grid_manifest,
    load_quotes_csv,
    market_style_grid,
    penalty_mesh,
    synth_in_sample,
    synth_out_sample,
    write_quotes_csv,
)
from .experiments import (
    CONDITIONS,
    MetricsRow,
    OracleSurface,
    RiskProfile,
    bench,
    bench_summary,
    eval_metrics,
    risk_profiles,
    run_matrix,
    sigma_domain,
)
from .network import (
    MlpParams,
    forward,
    forward_derivatives,
    forward_hessian,
    forward_jacobian,
    forward_second,
    init_params,
    load_checkpoint,
    param_gradients,
    save_checkpoint,
)
from .plots import history_svg, line_plot, matrix_svg, mesh_violation_svg, profile_svg
from .sabr import IvResult, SabrParams, black_call, implied_vol_black, norm_cdf, sabr_iv
from .training import TrainConfig, TrainingError, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "activation_from_name",
    "ConfigError",
    "ExperimentConfig",
    "default_config",
    "dump_config",
    "load_config",
    "LossReport",
    "PenaltyConfig",
    "lambda_penalty",
    "mesh_violations",
    "mse_loss",
    "penalty_loss",
    "total_cost",
    "GridSpec",
    "QuoteGrid",
    "QuotePoint",
    "boundary_augment",
    "grid_manifest",
    "load_quotes_csv",
    "market_style_grid",
    "penalty_mesh",
    "synth_in_sample",
    "synth_out_sample",
    "write_quotes_csv",
    "CONDITIONS",
    "MetricsRow",
    "OracleSurface",
    "RiskProfile",
    "bench",
    "bench_summary",
    "eval_metrics",
    "risk_profiles",
    "run_matrix",
    "sigma_domain",
    "MlpParams",
    "forward",
    "forward_derivatives",
    "forward_hessian",
    "forward_jacobian",
    "forward_second",
    "init_params",
    "load_checkpoint",
    "param_gradients",
    "save_checkpoint",
    "history_svg",
    "line_plot",
    "matrix_svg",
    "mesh_violation_svg",
    "profile_svg",
    "IvResult",
    "SabrParams",
    "black_call",
    "implied_vol_black",
    "norm_cdf",
    "sabr_iv",
    "TrainConfig",
    "TrainingError",
    "TrainReport",
    "train",
]
