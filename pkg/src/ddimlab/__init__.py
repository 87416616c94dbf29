"""Generalized DDIM and probability-flow samplers for general forward diffusions,
with exact ground-truth marginals and convergence diagnostics."""

__version__ = "0.1.0"

from .errors import (BoundaryError, ConfigError, DegenerateDiffusionError, DomainError,
                     FailureFractionError, OutOfSupportError, StabilityError,
                     UnsupportedProcessError)
from .laws import GaussianMixture1D, GridDensity1D, IsotropicGaussian
from .process import (ForwardProcess, SmoothnessParams, TimeGrid, custom, drift_at,
                      linear_marginal, linear_marginal_gmm, nonlinear_test, ou_marginal,
                      ou_standard, simulate_forward_em, ve, vp)
from .restore_ga import GAConfig, cond_loglik_gradient, ga_restore, learning_rate
from .samplers import (Ensemble, ExcessDiagnostics, SamplerConfig, ddim_step, degrade,
                       delta_ell, excess_terms, lambda_step, pf_euler_step, reference_solve,
                       restore, reverse_sde_em_step, run_reverse_sde, run_sampler, simulated_noise,
                       xi_ell)
from .score import (ScoreField, analytic_score, analytic_score_field, fp_evolve_1d,
                    grid_score_field, score_from_grid)
