# Synthetic two-patch experiment: fabricated lead fields, patch sources on
# the unit sphere, structured sensor noise and scoring against ground truth.

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import summarize
from .model import ForwardProblem

# two patches of 9.2 cm^2 total, mapped to solid angle assuming a 10 cm
# cortical sphere: per-patch cap area 4.6 / 100 steradian
_DEFAULT_PATCH_RADIUS = float(np.arccos(1.0 - (9.2 / 100.0 / 2.0) / (2.0 * np.pi)))

LEAD_FIELD_FALLOFF = 0.3
SENSOR_SHELL_RADIUS = 1.2


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_n: int = 50
    n_m: int = 1000
    n_t: int = 200
    t_start: float = 0.0
    t_end: float = 0.5
    patch_count: int = 2
    patch_radius: float = _DEFAULT_PATCH_RADIUS
    amplitude: float = 40e-10
    bump_center: float = 0.1
    bump_width: float = 0.02
    noise_kind: str = "random_spd"   # none | identity | random_spd
    condition_number: float = 10.0
    snr: float = 1.0

    def __post_init__(self):
        if min(self.n_n, self.n_m, self.n_t) <= 0:
            raise ValueError("dimensions must be positive")
        if not 0.0 < self.patch_radius < np.pi / 2:
            raise ValueError(f"patch radius {self.patch_radius} outside (0, pi/2)")
        if self.condition_number < 1.0:
            raise ValueError("condition number must be >= 1")
        if self.noise_kind not in ("none", "identity", "random_spd"):
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "SimConfig":
        return cls(**d)


def _fibonacci_lattice(n: int) -> np.ndarray:
    # near-uniform deterministic point set on the unit sphere
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def make_mesh(n_m: int) -> np.ndarray:
    """Deterministic Fibonacci-lattice source mesh on the unit sphere."""
    if n_m < 4:
        raise ValueError("need at least 4 mesh points")
    return _fibonacci_lattice(n_m)


def make_lead_field(n_n: int, mesh: np.ndarray, seed: int) -> np.ndarray:
    """Smooth synthetic gain matrix: exponential falloff of sensor-to-source
    distance with a random per-sensor gain in [0.5, 1.5]."""
    if n_n >= len(mesh):
        raise ValueError("lead field must be underdetermined (n_n < n_m)")
    rng = np.random.default_rng(seed)
    sensors = SENSOR_SHELL_RADIUS * _fibonacci_lattice(n_n)
    dist = np.linalg.norm(sensors[:, None, :] - mesh[None, :, :], axis=2)
    gains = rng.uniform(0.5, 1.5, size=n_n)
    return gains[:, None] * np.exp(-dist / LEAD_FIELD_FALLOFF)


def patch_centers(config: SimConfig) -> np.ndarray:
    """Patch center directions; two patches are placed antipodally."""
    rng = np.random.default_rng(config.seed)
    c = rng.standard_normal(3)
    c /= np.linalg.norm(c)
    if config.patch_count == 2:
        return np.vstack([c, -c])
    centers = [c]
    while len(centers) < config.patch_count:
        v = rng.standard_normal(3)
        centers.append(v / np.linalg.norm(v))
    return np.vstack(centers)


def make_sources(config: SimConfig, mesh: np.ndarray,
                 times: np.ndarray) -> np.ndarray:
    """Ground-truth source matrix: smooth patches with alternating sign,
    modulated by a temporal Gaussian bump; zero outside all patches."""
    centers = patch_centers(config)
    r = config.patch_radius
    spatial = np.zeros(len(mesh))
    for p, center in enumerate(centers):
        geo = np.arccos(np.clip(mesh @ center, -1.0, 1.0))
        inside = geo <= r
        sign = 1.0 if p % 2 == 0 else -1.0
        profile = sign * np.exp(-geo ** 2 / (2.0 * r ** 2))
        spatial = np.where(inside, profile, spatial)
    bump = np.exp(-(times - config.bump_center) ** 2
                  / (2.0 * config.bump_width ** 2))
    return config.amplitude * np.outer(spatial, bump)


def make_noise(config: SimConfig, signal: np.ndarray,
               seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sensor noise E (columns i.i.d. N(0, sigma_x)) and its covariance,
    scaled so ||signal||_F / ||E||_F matches the configured SNR."""
    n_n, n_t = signal.shape
    if config.noise_kind == "none":
        return np.zeros_like(signal), np.eye(n_n)
    rng = np.random.default_rng(seed + 1)
    if config.noise_kind == "identity" or config.condition_number == 1.0:
        sigma = np.eye(n_n)
        L = np.eye(n_n)
    else:
        Q, _ = np.linalg.qr(rng.standard_normal((n_n, n_n)))
        d = np.exp(np.linspace(0.0, np.log(config.condition_number), n_n))
        d /= d.mean()
        sigma = (Q * d) @ Q.T
        L = Q * np.sqrt(d)
    E = L @ rng.standard_normal((n_n, n_t))
    norm_e = np.linalg.norm(E)
    if norm_e > 0 and np.linalg.norm(signal) > 0:
        s = np.linalg.norm(signal) / (config.snr * norm_e)
        E = s * E
        sigma = s * s * sigma
    return E, sigma


def simulate(config: SimConfig) -> tuple[ForwardProblem, np.ndarray]:
    """Full synthetic bundle: (forward problem with B = G J + E, true J)."""
    mesh = make_mesh(config.n_m)
    times = np.linspace(config.t_start, config.t_end, config.n_t)
    G = make_lead_field(config.n_n, mesh, config.seed)
    J = make_sources(config, mesh, times)
    E, sigma_x = make_noise(config, G @ J, config.seed)
    problem = ForwardProblem(
        lead_field=G,
        sensor_data=G @ J + E,
        noise_cov_spatial=sigma_x,
        source_points=mesh,
        time_points=times,
        whitened=False,
    )
    return problem, J


@dataclass(frozen=True)
class RecoveryScore:
    support_overlap: float
    amplitude_rmse: float
    sign_agreement: float


def score(reconstruction: np.ndarray, truth: np.ndarray,
          fraction: float = 0.025) -> RecoveryScore:
    """Compare a reconstruction against ground truth on the true support.

    support_overlap: fraction of the top-|fraction| reconstructed entries
    that fall on the nonzero entries of the truth; amplitude_rmse over the
    true support; sign agreement on the overlapping entries.
    """
    reconstruction = np.asarray(reconstruction, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if reconstruction.shape != truth.shape:
        raise ValueError(f"shape mismatch {reconstruction.shape} vs "
                         f"{truth.shape}")
    mask = summarize.threshold_top_fraction(reconstruction, fraction)
    support = truth != 0
    hit = mask & support
    overlap = hit.sum() / mask.sum()
    rmse = float(np.sqrt(np.mean((reconstruction[support] - truth[support]) ** 2))) \
        if support.any() else 0.0
    if hit.any():
        agree = float(np.mean(np.sign(reconstruction[hit])
                              == np.sign(truth[hit])))
    else:
        agree = 0.0
    return RecoveryScore(support_overlap=float(overlap), amplitude_rmse=rmse,
                         sign_agreement=agree)
