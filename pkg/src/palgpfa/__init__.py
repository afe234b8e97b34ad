"""Polynomial approximate log-likelihood (PAL) estimation for count-GPFA models."""
from .dataset import CountDataset
from .evaluate import AlignmentResult, align_latents, error_vs_neurons, rate_mse, run_pipeline
from .inference import FitConfig, FitResult, evidence_gradient_fd, fit, map_latents, reconstruct_rates
from .kernels import GpPrior, PriorFactorization, build_prior, prior_solve, se_kernel
from .obs_models import (NeuronIntervals, ObservationModel, binomial, exact_loglik,
                         fit_neuron_quadratics, negbinom, nonlinear_term, poisson, rate,
                         select_intervals)
from .pal_core import (ApproxPosterior, assemble_linear, assemble_precision, evidence,
                       export_hyperparameters, import_hyperparameters)
from .poly_approx import Interval, QuadApprox, eval_quadratic, fit_quadratic, max_abs_error
from .simulate import SimOutput, SimSpec, paper_setup, sample_counts, sample_gp_latents, simulate

__version__ = "0.1.0"
