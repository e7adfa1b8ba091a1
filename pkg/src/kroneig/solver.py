# Posterior inference for the separable space-time GP prior.
#
# Fast path: eigendecompose G K_x G^T and K_t once, then every posterior
# mean/variance is a cheap contraction against the elementwise matrix
# Pi_{j,i} = 1 / (lambda_x_j lambda_t_i + 1).  The naive full-covariance
# solver is retained as a testing oracle behind a size guard.

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .kernels import KernelSpec
from .model import ForwardProblem

EIG_CLAMP_RTOL = 1e-10
VARIANCE_CLAMP_RTOL = 1e-10
NAIVE_SIZE_GUARD = 5000


class NumericalError(RuntimeError):
    """Raised when an eigendecomposition or variance is inconsistent."""


class SizeGuardError(ValueError):
    """Raised when the dense oracle is asked to build an oversized system."""


@dataclass(frozen=True)
class PosteriorPoint:
    mean: float
    variance: float


@dataclass(frozen=True)
class SolverState:
    """Immutable precomputation shared by all posterior queries."""

    problem: ForwardProblem
    spatial: KernelSpec
    temporal: KernelSpec
    V_x: np.ndarray          # eigenvectors of G K_x G^T
    lambda_x: np.ndarray
    V_t: np.ndarray          # eigenvectors of (possibly conjugated) K_t
    lambda_t: np.ndarray
    Pi: np.ndarray           # 1 / (lambda_x lambda_t + 1), n_n x n_t
    transformed_data: np.ndarray       # C = Pi o (V_x^T B V_t)
    transformed_data_raw: np.ndarray   # V_x^T B V_t
    Gt_Vx: np.ndarray        # G^T V_x, n_m x n_n


def _clamped_eigh(M: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    top = max(w.max(), 0.0)
    if w.min() < -EIG_CLAMP_RTOL * max(top, 1e-300):
        raise NumericalError(
            f"{what} has significantly negative eigenvalue "
            f"{w.min():.3e} (max {top:.3e}); kernel is not PSD")
    return np.clip(w, 0.0, None), V


def precompute(problem: ForwardProblem, spatial: KernelSpec,
               temporal: KernelSpec) -> SolverState:
    """Eigendecompositions, Pi and the transformed data shared by all queries."""
    if not problem.whitened:
        raise ValueError("problem must be whitened before solving")
    G = problem.lead_field
    B = problem.sensor_data

    K_x = kernels.gram_spatial(spatial, problem.source_points)
    lam_x, V_x = _clamped_eigh(G @ K_x @ G.T, "G K_x G^T")

    K_t = kernels.gram_temporal(temporal, problem.time_points)
    if problem.temporal_transform is not None:
        W_t = problem.temporal_transform
        K_t = W_t @ K_t @ W_t.T
    lam_t, V_t = _clamped_eigh(K_t, "K_t")

    Pi = 1.0 / (np.outer(lam_x, lam_t) + 1.0)
    T = V_x.T @ B @ V_t
    return SolverState(problem=problem, spatial=spatial, temporal=temporal,
                       V_x=V_x, lambda_x=lam_x, V_t=V_t, lambda_t=lam_t,
                       Pi=Pi, transformed_data=Pi * T,
                       transformed_data_raw=T, Gt_Vx=G.T @ V_x)


def with_gamma(state: SolverState, gamma2: float) -> SolverState:
    """Rescale a state's prior magnitude without re-decomposing.

    Valid because gamma2 scales K_x, leaving the eigenvectors of
    G K_x G^T unchanged and multiplying its eigenvalues.
    """
    if gamma2 <= 0:
        raise ValueError(f"gamma2 must be positive, got {gamma2}")
    lam_x = gamma2 * state.lambda_x
    Pi = 1.0 / (np.outer(lam_x, state.lambda_t) + 1.0)
    spatial = replace(state.spatial, gamma2=gamma2 * state.spatial.gamma2)
    return replace(state, spatial=spatial, lambda_x=lam_x, Pi=Pi,
                   transformed_data=Pi * state.transformed_data_raw)


def _temporal_cross(state: SolverState, t_star) -> np.ndarray:
    k_t = kernels.cross_temporal(state.temporal, t_star,
                                 state.problem.time_points)
    if state.problem.temporal_transform is not None:
        k_t = state.problem.temporal_transform @ k_t
    return k_t


def posterior_at(state: SolverState, x_star, t_star) -> PosteriorPoint:
    """Posterior mean and variance of the latent source at (x_star, t_star)."""
    k_x = kernels.cross_spatial(state.spatial, x_star,
                                state.problem.source_points)
    a = k_x @ state.Gt_Vx
    b = state.V_t.T @ _temporal_cross(state, t_star)
    mean = (a @ state.transformed_data) @ b
    prior = (kernels.eval_spatial(state.spatial, x_star, x_star)
             * kernels.eval_temporal(state.temporal, t_star, t_star))
    var = prior - (a * a) @ state.Pi @ (b * b)
    var = _clamp_variance(var, prior)
    return PosteriorPoint(mean=float(mean), variance=float(var))


def _clamp_variance(var, prior):
    floor = -VARIANCE_CLAMP_RTOL * max(abs(prior), 1.0)
    bad = np.minimum(var, 0.0) < floor
    if np.any(bad):
        raise NumericalError(f"posterior variance {np.min(var):.3e} below "
                             f"tolerance (prior {prior:.3e})")
    return np.clip(var, 0.0, None)


def posterior_grid(state: SolverState) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at every (mesh point, time point).

    Batched form of ``posterior_at``: row j uses the spatial cross vector
    k_x(x_j, .) (a gram row) and column i the temporal cross k_t(t_i, .).
    Returns (mean, variance), both n_m x n_t.
    """
    problem = state.problem
    K_xs = kernels.gram_spatial(state.spatial, problem.source_points)
    A = K_xs @ state.Gt_Vx                       # n_m x n_n

    K_ts = kernels.gram_temporal(state.temporal, problem.time_points)
    if problem.temporal_transform is not None:
        K_ts = problem.temporal_transform @ K_ts  # columns are W_t k_t(t_i)
    Bt = state.V_t.T @ K_ts                      # columns b_i

    mean = (A @ state.transformed_data) @ Bt

    prior_x = np.array([kernels.eval_spatial(state.spatial, x, x)
                        for x in problem.source_points])
    prior_t = np.array([kernels.eval_temporal(state.temporal, t, t)
                        for t in problem.time_points])
    prior = np.outer(prior_x, prior_t)
    var = prior - (A * A) @ state.Pi @ (Bt * Bt)
    floor = -VARIANCE_CLAMP_RTOL * max(prior.max(), 1.0)
    if var.min() < floor:
        raise NumericalError(f"posterior variance {var.min():.3e} below "
                             f"tolerance")
    return mean, np.clip(var, 0.0, None)


def naive_posterior_at(problem: ForwardProblem, spatial: KernelSpec,
                       temporal: KernelSpec, x_star, t_star) -> PosteriorPoint:
    """Dense full-covariance posterior; the testing oracle.

    Materializes K = K_t (x) K_x and the full observation operator and
    solves the n_n*n_t system directly.  Guarded against oversized use.
    """
    if not problem.whitened:
        raise ValueError("problem must be whitened before solving")
    n_obs = problem.sensor_data.size
    if n_obs > NAIVE_SIZE_GUARD:
        raise SizeGuardError(
            f"naive solver refused: {n_obs} observations exceed the "
            f"{NAIVE_SIZE_GUARD} guard")
    G = problem.lead_field
    B = problem.sensor_data

    K_x = kernels.gram_spatial(spatial, problem.source_points)
    K_t = kernels.gram_temporal(temporal, problem.time_points)
    Ht = (np.eye(problem.n_t) if problem.temporal_transform is None
          else problem.temporal_transform)
    H = np.kron(Ht, G)
    K = np.kron(K_t, K_x)

    S = H @ K @ H.T + np.eye(n_obs)
    k_star = np.kron(kernels.cross_temporal(temporal, t_star,
                                            problem.time_points),
                     kernels.cross_spatial(spatial, x_star,
                                           problem.source_points))
    Hk = H @ k_star
    sol_b = np.linalg.solve(S, B.flatten(order="F"))
    sol_k = np.linalg.solve(S, Hk)
    mean = k_star @ (H.T @ sol_b)
    prior = (kernels.eval_spatial(spatial, x_star, x_star)
             * kernels.eval_temporal(temporal, t_star, t_star))
    var = prior - Hk @ sol_k
    var = _clamp_variance(var, prior)
    return PosteriorPoint(mean=float(mean), variance=float(var))


def mne_closed_form(problem: ForwardProblem, gamma2: float) -> np.ndarray:
    """Ridge-regularized pseudoinverse G^T (G G^T + gamma^{-2} I)^{-1} B, column-wise."""
    if not problem.whitened:
        raise ValueError("problem must be whitened")
    if gamma2 <= 0:
        raise ValueError(f"gamma2 must be positive, got {gamma2}")
    G = problem.lead_field
    S = G @ G.T + np.eye(problem.n_n) / gamma2
    return G.T @ np.linalg.solve(S, problem.sensor_data)
