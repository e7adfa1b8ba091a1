# Forward problem container and the bit-exact on-disk matrix format.

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KMAT_MAGIC = b"KRONMAT1"

SYMMETRY_RTOL = 1e-12
UNIT_NORM_ATOL = 1e-9


@dataclass(frozen=True)
class ForwardProblem:
    """Linear forward model B = G J + E with known noise covariance.

    Shapes: G is n_n x n_m, B is n_n x n_t, sigma_x is n_n x n_n,
    optional sigma_t is n_t x n_t.  Source points live on the unit
    sphere; time points are strictly increasing (seconds).

    ``temporal_transform`` is set by temporal whitening: it maps raw
    time samples into the whitened temporal basis, so B then has
    ``temporal_transform.shape[0]`` columns instead of n_t.
    """

    lead_field: np.ndarray
    sensor_data: np.ndarray
    noise_cov_spatial: np.ndarray
    source_points: np.ndarray
    time_points: np.ndarray
    noise_cov_temporal: np.ndarray | None = None
    whitened: bool = False
    temporal_transform: np.ndarray | None = None

    def __post_init__(self):
        for name in ("lead_field", "sensor_data", "noise_cov_spatial",
                     "source_points", "time_points", "noise_cov_temporal",
                     "temporal_transform"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.array(value, dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_n(self) -> int:
        return self.lead_field.shape[0]

    @property
    def n_m(self) -> int:
        return self.lead_field.shape[1]

    @property
    def n_t(self) -> int:
        return len(self.time_points)


def validate(problem: ForwardProblem) -> list[str]:
    """Return a description of every invariant violation (empty if none)."""
    v = []
    G = problem.lead_field
    B = problem.sensor_data
    Sx = problem.noise_cov_spatial
    pts = problem.source_points
    times = np.asarray(problem.time_points).ravel()

    if G.ndim != 2:
        v.append(f"lead field must be 2-D, got ndim={G.ndim}")
        return v

    if pts.ndim != 2 or pts.shape[1] != 3:
        v.append(f"source points must be (n_m, 3), got {pts.shape}")
    elif pts.shape[0] != G.shape[1]:
        v.append(f"lead field has {G.shape[1]} columns but "
                 f"{pts.shape[0]} source points")

    if B.shape[0] != G.shape[0]:
        v.append(f"sensor data has {B.shape[0]} rows but lead field has "
                 f"{G.shape[0]}")

    expected_cols = len(times)
    if problem.temporal_transform is not None:
        expected_cols = problem.temporal_transform.shape[0]
    if B.shape[1] != expected_cols:
        v.append(f"sensor data has {B.shape[1]} columns but expected "
                 f"{expected_cols} time samples")

    if Sx.shape != (G.shape[0], G.shape[0]):
        v.append(f"spatial noise covariance shape {Sx.shape} does not match "
                 f"{G.shape[0]} sensors")
    else:
        scale = max(np.abs(Sx).max(), 1.0)
        asym = np.abs(Sx - Sx.T).max()
        if asym > SYMMETRY_RTOL * scale:
            v.append(f"spatial noise covariance asymmetric "
                     f"(max deviation {asym:.3e})")
        else:
            eigs = np.linalg.eigvalsh(0.5 * (Sx + Sx.T))
            if eigs.max() <= 0:
                v.append("spatial noise covariance has no positive eigenvalues")

    St = problem.noise_cov_temporal
    if St is not None:
        if St.shape != (len(times), len(times)):
            v.append(f"temporal noise covariance shape {St.shape} does not "
                     f"match {len(times)} time points")
        else:
            scale = max(np.abs(St).max(), 1.0)
            if np.abs(St - St.T).max() > SYMMETRY_RTOL * scale:
                v.append("temporal noise covariance asymmetric")

    if pts.ndim == 2 and pts.shape[1] == 3:
        norms = np.linalg.norm(pts, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_ATOL)
        for j in bad:
            v.append(f"source point {j} has norm {norms[j]:.12f}, not 1")

    if len(times) >= 2 and np.any(np.diff(times) <= 0):
        v.append("time points are not strictly increasing")

    return v


# ----------------------------------------------------------------------
# KRONMAT1 matrix file format: 8 magic bytes, u32 rows, u32 cols, then
# rows*cols little-endian f64 values in column-major order.
# ----------------------------------------------------------------------

def write_matrix(path, matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={matrix.ndim}")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(KMAT_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(np.ascontiguousarray(matrix.T, dtype="<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != KMAT_MAGIC:
            raise ValueError(f"{path}: bad magic bytes {magic!r}")
        rows, cols = struct.unpack("<II", fh.read(8))
        payload = fh.read(8 * rows * cols)
    if len(payload) != 8 * rows * cols:
        raise ValueError(f"{path}: truncated payload")
    data = np.frombuffer(payload, dtype="<f8")
    return data.reshape((rows, cols), order="F").astype(np.float64)


# ----------------------------------------------------------------------
# Problem directories
# ----------------------------------------------------------------------

def save_problem(directory, problem: ForwardProblem, force: bool = False) -> None:
    """Write a problem directory (G/B/sigma_x[/sigma_t]/sources/times + manifest)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / "problem.json"
    if manifest.exists() and not force:
        raise FileExistsError(f"{manifest} exists; pass force=True to overwrite")
    write_matrix(directory / "G.kmat", problem.lead_field)
    write_matrix(directory / "B.kmat", problem.sensor_data)
    write_matrix(directory / "sigma_x.kmat", problem.noise_cov_spatial)
    if problem.noise_cov_temporal is not None:
        write_matrix(directory / "sigma_t.kmat", problem.noise_cov_temporal)
    if problem.temporal_transform is not None:
        write_matrix(directory / "W_t.kmat", problem.temporal_transform)
    write_matrix(directory / "sources.kmat", problem.source_points)
    write_matrix(directory / "times.kmat",
                 np.asarray(problem.time_points).reshape(-1, 1))
    meta = {
        "n_n": problem.n_n,
        "n_m": problem.n_m,
        "n_t": problem.n_t,
        "whitened": problem.whitened,
        "has_sigma_t": problem.noise_cov_temporal is not None,
        "has_temporal_transform": problem.temporal_transform is not None,
    }
    manifest.write_text(json.dumps(meta, indent=2) + "\n")


def load_problem(directory) -> ForwardProblem:
    directory = Path(directory)
    meta = json.loads((directory / "problem.json").read_text())
    sigma_t = None
    if meta.get("has_sigma_t"):
        sigma_t = read_matrix(directory / "sigma_t.kmat")
    W_t = None
    if meta.get("has_temporal_transform"):
        W_t = read_matrix(directory / "W_t.kmat")
    return ForwardProblem(
        lead_field=read_matrix(directory / "G.kmat"),
        sensor_data=read_matrix(directory / "B.kmat"),
        noise_cov_spatial=read_matrix(directory / "sigma_x.kmat"),
        noise_cov_temporal=sigma_t,
        source_points=read_matrix(directory / "sources.kmat"),
        time_points=read_matrix(directory / "times.kmat").ravel(),
        whitened=bool(meta.get("whitened", False)),
        temporal_transform=W_t,
    )
