"""Deterministic policy gradient primal-dual methods for constrained MDPs."""
from .cmdp import CmdpInstance, RegularizationParams, lambda_cap, regularized_reward, translate_utility
from .features import FeatureMap, LinearModel, projected_sgd
from .lq import AffinePolicy, QuadraticValue, eval_policy_quadratic, exact_q
from .pgpd import (ImplicitPolicy, SolverOptions, approx_primal_update, dual_update, fit_augmented_model,
                   run_adpgpd, run_dpgpd_exact, run_pgdual)
from .records import DriverAbort, RunRecord, potential_phi
from .rollout import RolloutConfig, RolloutEstimator, estimate_q, estimate_v

__version__ = "0.1.0"
