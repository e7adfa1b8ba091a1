# Noise whitening: spatial eigendecomposition of sigma_x and the
# Kronecker-structured spatio-temporal extension sigma_t (x) sigma_x.

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import ForwardProblem

RANK_RTOL = 1e-12


class WhitenError(ValueError):
    pass


@dataclass(frozen=True)
class WhitenResult:
    problem: ForwardProblem
    spatial_transform: np.ndarray
    spatial_rank: int
    temporal_transform: np.ndarray | None = None
    temporal_rank: int | None = None


def _whitening_transform(cov: np.ndarray, what: str) -> tuple[np.ndarray, int]:
    """Return W = D^{-1/2} U^T restricted to eigenvalues above threshold."""
    scale = max(np.abs(cov).max(), 1.0)
    if np.abs(cov - cov.T).max() > 1e-10 * scale:
        raise WhitenError(f"{what} covariance is not symmetric")
    w, U = np.linalg.eigh(0.5 * (cov + cov.T))
    keep = w > RANK_RTOL * w.max()
    if not np.any(keep) or w.max() <= 0:
        raise WhitenError(f"{what} covariance has no positive eigenvalues")
    w, U = w[keep], U[:, keep]
    return (U / np.sqrt(w)).T, int(keep.sum())


def whiten_spatial(problem: ForwardProblem) -> WhitenResult:
    """Whiten the spatial noise: G, B <- W_x G, W_x B with W_x Sx W_x^T = I."""
    if problem.whitened:
        raise WhitenError("problem is already whitened")
    W_x, rank = _whitening_transform(problem.noise_cov_spatial, "spatial")
    whitened = ForwardProblem(
        lead_field=W_x @ problem.lead_field,
        sensor_data=W_x @ problem.sensor_data,
        noise_cov_spatial=np.eye(rank),
        noise_cov_temporal=problem.noise_cov_temporal,
        source_points=problem.source_points,
        time_points=problem.time_points,
        whitened=True,
    )
    return WhitenResult(problem=whitened, spatial_transform=W_x,
                        spatial_rank=rank)


def whiten_spatiotemporal(problem: ForwardProblem) -> WhitenResult:
    """Whiten Kronecker noise sigma_t (x) sigma_x on both sides.

    B <- W_x B W_t^T; the whitened problem carries W_t so that the solver
    can conjugate its temporal gram matrix (the observation operator is
    then W_t (x) whitened-G, still of Kronecker form).
    """
    if problem.whitened:
        raise WhitenError("problem is already whitened")
    if problem.noise_cov_temporal is None:
        raise WhitenError("no temporal noise covariance present")
    W_x, rank_x = _whitening_transform(problem.noise_cov_spatial, "spatial")
    W_t, rank_t = _whitening_transform(problem.noise_cov_temporal, "temporal")
    whitened = ForwardProblem(
        lead_field=W_x @ problem.lead_field,
        sensor_data=W_x @ problem.sensor_data @ W_t.T,
        noise_cov_spatial=np.eye(rank_x),
        noise_cov_temporal=None,
        source_points=problem.source_points,
        time_points=problem.time_points,
        whitened=True,
        temporal_transform=W_t,
    )
    return WhitenResult(problem=whitened, spatial_transform=W_x,
                        spatial_rank=rank_x, temporal_transform=W_t,
                        temporal_rank=rank_t)


def whiten_auto(problem: ForwardProblem) -> WhitenResult:
    """Spatio-temporal whitening when sigma_t is present, spatial otherwise."""
    if problem.noise_cov_temporal is not None:
        return whiten_spatiotemporal(problem)
    return whiten_spatial(problem)
