"""Space-time separable Gaussian-process solver for underdetermined
linear inverse problems, with fast Kronecker-eigendecomposition posteriors,
marginal-likelihood hyperparameter selection and probabilistic summaries."""

from .estimator import SeparableGPRegressor
from .evidence import EvidenceResult, evidence_grid, nll, optimize_gamma
from .kernels import KernelSpec
from .model import ForwardProblem, load_problem, read_matrix, save_problem, \
    validate, write_matrix
# note: the simulate() entry point stays namespaced (kroneig.simulate.simulate)
# so the top-level attribute keeps pointing at the submodule
from .simulate import RecoveryScore, SimConfig, score
from .solver import PosteriorPoint, SolverState, mne_closed_form, \
    naive_posterior_at, posterior_at, posterior_grid, precompute, with_gamma
from .summarize import grand_average, peak_extract, positivity, \
    threshold_top_fraction
from .whiten import WhitenResult, whiten_auto, whiten_spatial, \
    whiten_spatiotemporal

__all__ = [
    "EvidenceResult", "ForwardProblem", "KernelSpec", "PosteriorPoint",
    "RecoveryScore", "SeparableGPRegressor", "SimConfig", "SolverState",
    "WhitenResult", "evidence_grid", "grand_average", "load_problem",
    "mne_closed_form", "naive_posterior_at", "nll", "optimize_gamma",
    "peak_extract", "positivity", "posterior_at", "posterior_grid",
    "precompute", "read_matrix", "save_problem", "score",
    "threshold_top_fraction", "validate", "whiten_auto", "whiten_spatial",
    "whiten_spatiotemporal", "with_gamma", "write_matrix",
]

__version__ = "0.1.0"
