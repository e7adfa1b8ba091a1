# Covariance function family: spatial kernels on the unit sphere, temporal
# kernels on the line, gram/cross construction and JSON (de)serialization.

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import sphere

SPATIAL_KINDS = {"delta", "exponential", "matern32", "rbf",
                 "rational_quadratic", "harmony", "spline"}
TEMPORAL_KINDS = {"temporal_delta", "temporal_exponential"}

# kinds whose positive-semidefiniteness on the sphere is only guaranteed
# under the chordal embedding
_CHORDAL_ONLY = {"rbf", "rational_quadratic"}

DELTA_DISTANCE_TOL = 1e-12


class KernelSpecError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Tagged covariance function description with hyperparameters.

    ``kind`` selects the family; only the fields relevant to that family
    are consulted.  A ``product`` spec pairs one spatial and one temporal
    sub-spec with the magnitude gamma2 carried once, on the product.
    """

    kind: str
    gamma2: float = 1.0
    length_scale: float | None = None
    alpha: float = 1.5
    spectral_p: float = 0.9
    l_max: int = 10
    spline_h: float = 0.8
    spline_level: int = 2
    metric: str = "chordal"
    spatial: "KernelSpec | None" = None
    temporal: "KernelSpec | None" = None

    def __post_init__(self):
        validate_spec(self)

    @property
    def is_spatial(self) -> bool:
        return self.kind in SPATIAL_KINDS

    @property
    def is_temporal(self) -> bool:
        return self.kind in TEMPORAL_KINDS

    def split(self) -> tuple["KernelSpec", "KernelSpec"]:
        """Split a product spec into (spatial with gamma2, temporal)."""
        if self.kind != "product":
            raise KernelSpecError("split() only applies to product specs")
        return replace(self.spatial, gamma2=self.gamma2), self.temporal

    def to_json_dict(self) -> dict:
        if self.kind == "product":
            return {"kind": "product", "gamma2": self.gamma2,
                    "spatial": self.spatial.to_json_dict(),
                    "temporal": self.temporal.to_json_dict()}
        return {"kind": self.kind, "gamma2": self.gamma2,
                "length_scale": self.length_scale, "alpha": self.alpha,
                "spectral_p": self.spectral_p, "l_max": self.l_max,
                "spline_h": self.spline_h, "spline_level": self.spline_level,
                "metric": self.metric}

    @classmethod
    def from_json_dict(cls, d: dict) -> "KernelSpec":
        d = dict(d)
        if d.get("kind") == "product":
            return cls(kind="product", gamma2=float(d.get("gamma2", 1.0)),
                       spatial=cls.from_json_dict(d["spatial"]),
                       temporal=cls.from_json_dict(d["temporal"]))
        kwargs = {}
        for key in ("kind", "gamma2", "length_scale", "alpha", "spectral_p",
                    "l_max", "spline_h", "spline_level", "metric"):
            if key in d and d[key] is not None:
                kwargs[key] = d[key]
        return cls(**kwargs)


_NEEDS_LENGTH = {"exponential", "matern32", "rbf", "rational_quadratic",
                 "temporal_exponential"}


def validate_spec(spec: KernelSpec) -> None:
    kind = spec.kind
    if kind == "product":
        if spec.spatial is None or spec.temporal is None:
            raise KernelSpecError("product spec needs spatial and temporal parts")
        if not spec.spatial.is_spatial:
            raise KernelSpecError(f"{spec.spatial.kind} is not a spatial kind")
        if not spec.temporal.is_temporal:
            raise KernelSpecError(f"{spec.temporal.kind} is not a temporal kind")
        if spec.gamma2 <= 0:
            raise KernelSpecError(f"gamma2 must be positive, got {spec.gamma2}")
        return
    if kind not in SPATIAL_KINDS | TEMPORAL_KINDS:
        raise KernelSpecError(f"unknown kernel kind {kind!r}")
    if spec.gamma2 <= 0:
        raise KernelSpecError(f"gamma2 must be positive, got {spec.gamma2}")
    if kind in _NEEDS_LENGTH:
        if spec.length_scale is None or spec.length_scale <= 0:
            raise KernelSpecError(f"{kind} needs a positive length_scale")
    if kind == "rational_quadratic" and spec.alpha <= 0:
        raise KernelSpecError("alpha must be positive")
    if kind == "harmony" and spec.l_max < 0:
        raise KernelSpecError("l_max must be nonnegative")
    if kind == "spline" and not 0.0 < spec.spline_h < 1.0:
        raise KernelSpecError("spline_h must lie in (0, 1)")
    if spec.metric not in ("chordal", "geodesic"):
        raise KernelSpecError(f"unknown metric {spec.metric!r}")
    if spec.metric == "geodesic" and kind in _CHORDAL_ONLY:
        raise KernelSpecError(f"{kind} is only positive semidefinite with "
                              f"the chordal metric")


def _harmony_weights(l_max: int, p: float) -> np.ndarray:
    # spectrum 1 / (1 + l^p); the l = 0 weight is 1
    weights = []
    for l in range(l_max + 1):
        w = 1.0 / (1.0 + (float(l) ** p if l > 0 else 0.0))
        weights.extend([w] * (2 * l + 1))
    return np.array(weights)


def _spatial_matrix(spec: KernelSpec, points_a, points_b) -> np.ndarray:
    """Kernel values between two sets of unit 3-vectors (rows)."""
    kind = spec.kind
    if kind in ("delta", "exponential", "matern32", "rbf",
                "rational_quadratic"):
        d = sphere.pairwise_distance(points_a, points_b, metric=spec.metric)
        if kind == "delta":
            return np.where(d < DELTA_DISTANCE_TOL, spec.gamma2, 0.0)
        if kind == "exponential":
            return spec.gamma2 * np.exp(-d / spec.length_scale)
        if kind == "matern32":
            s = np.sqrt(3.0) * d / spec.length_scale
            return spec.gamma2 * (1.0 + s) * np.exp(-s)
        if kind == "rbf":
            return spec.gamma2 * np.exp(-d * d / (2.0 * spec.length_scale ** 2))
        s = d * d / (2.0 * spec.alpha * spec.length_scale ** 2)
        return spec.gamma2 * (1.0 + s) ** (-spec.alpha)
    if kind == "harmony":
        Ya = sphere.harmonic_basis(points_a, spec.l_max)
        Yb = sphere.harmonic_basis(points_b, spec.l_max)
        w = _harmony_weights(spec.l_max, spec.spectral_p)
        return spec.gamma2 * ((Ya * w) @ Yb.T)
    if kind == "spline":
        nodes = sphere.icosphere_nodes(spec.spline_level).nodes
        Ka = sphere.abel_poisson_basis(points_a, nodes, spec.spline_h)
        Kb = sphere.abel_poisson_basis(points_b, nodes, spec.spline_h)
        return spec.gamma2 * (Ka @ Kb.T)
    raise KernelSpecError(f"{kind} is not a spatial kind")


def eval_spatial(spec: KernelSpec, x, xp) -> float:
    if not spec.is_spatial:
        raise KernelSpecError(f"{spec.kind} is not a spatial kind")
    return float(_spatial_matrix(spec, np.asarray(x)[None, :],
                                 np.asarray(xp)[None, :])[0, 0])


def gram_spatial(spec: KernelSpec, points) -> np.ndarray:
    """Symmetric gram matrix [K_x]_{ij} = kappa_x(x_i, x_j)."""
    if not spec.is_spatial:
        raise KernelSpecError(f"{spec.kind} is not a spatial kind")
    K = _spatial_matrix(spec, points, points)
    # mirror the upper triangle so gram.T == gram holds exactly
    return np.triu(K) + np.triu(K, 1).T


def cross_spatial(spec: KernelSpec, x_star, points) -> np.ndarray:
    """Vector of kappa_x(x_star, x_j) over all mesh points."""
    if not spec.is_spatial:
        raise KernelSpecError(f"{spec.kind} is not a spatial kind")
    return _spatial_matrix(spec, np.asarray(x_star)[None, :], points)[0]


def _temporal_matrix(spec: KernelSpec, times_a, times_b) -> np.ndarray:
    dt = np.abs(np.subtract.outer(np.asarray(times_a, dtype=float),
                                  np.asarray(times_b, dtype=float)))
    if spec.kind == "temporal_delta":
        return np.where(dt < DELTA_DISTANCE_TOL, 1.0, 0.0)
    if spec.kind == "temporal_exponential":
        return np.exp(-dt / spec.length_scale)
    raise KernelSpecError(f"{spec.kind} is not a temporal kind")


def eval_temporal(spec: KernelSpec, t, tp) -> float:
    return float(_temporal_matrix(spec, [t], [tp])[0, 0])


def gram_temporal(spec: KernelSpec, times) -> np.ndarray:
    K = _temporal_matrix(spec, times, times)
    return np.triu(K) + np.triu(K, 1).T


def cross_temporal(spec: KernelSpec, t_star, times) -> np.ndarray:
    return _temporal_matrix(spec, [t_star], times)[0]
