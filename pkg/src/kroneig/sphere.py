# Spherical geometry: distances, associated Legendre polynomials, real
# spherical harmonics, Abel-Poisson kernels and icosphere node meshes.

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_UNIT_ATOL = 1e-8

MAX_ICOSPHERE_LEVEL = 6


def _check_unit(x, name="input"):
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {x.shape}")
    n = np.linalg.norm(x)
    if abs(n - 1.0) > _UNIT_ATOL:
        raise ValueError(f"{name} must have unit norm, got {n}")
    return x


@dataclass(frozen=True)
class SphericalCoord:
    """Colatitude theta in [0, pi], azimuth phi in [-pi, pi]."""

    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta={self.theta} outside [0, pi]")
        if not -np.pi <= self.phi <= np.pi:
            raise ValueError(f"phi={self.phi} outside [-pi, pi]")

    @classmethod
    def from_unit_vector(cls, x) -> "SphericalCoord":
        x = _check_unit(x)
        theta = float(np.arccos(np.clip(x[2], -1.0, 1.0)))
        phi = float(np.arctan2(x[1], x[0]))
        return cls(theta, phi)

    def to_unit_vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi),
                         st * np.sin(self.phi),
                         np.cos(self.theta)])


def chordal_distance(x, xp) -> float:
    """Euclidean distance between unit vectors in the 3-D embedding; in [0, 2]."""
    x = _check_unit(x, "x")
    xp = _check_unit(xp, "xp")
    return float(np.linalg.norm(x - xp))


def geodesic_distance(x, xp) -> float:
    """Great-circle distance arccos(x . xp); in [0, pi]."""
    x = _check_unit(x, "x")
    xp = _check_unit(xp, "xp")
    return float(np.arccos(np.clip(np.dot(x, xp), -1.0, 1.0)))


def pairwise_distance(points, other=None, metric="chordal") -> np.ndarray:
    """Distance matrix between two point sets (rows are unit 3-vectors).

    Chordal distances use the difference form ||x - y||, which stays
    accurate near zero where sqrt(2 - 2 x.y) loses half the digits; the
    geodesic follows as 2 asin(chord / 2).  Row blocks bound the memory
    of the broadcasted differences.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    other = points if other is None else np.atleast_2d(np.asarray(other, dtype=float))
    if metric not in ("chordal", "geodesic"):
        raise ValueError(f"unknown metric {metric!r}")
    out = np.empty((len(points), len(other)))
    for start in range(0, len(points), 512):
        block = points[start:start + 512]
        diff = block[:, None, :] - other[None, :, :]
        out[start:start + 512] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "geodesic":
        return 2.0 * np.arcsin(np.clip(out / 2.0, -1.0, 1.0))
    return out


def associated_legendre(l: int, m: int, u):
    """Unnormalized associated Legendre P_l^m(u), Condon-Shortley phase excluded.

    Standard upward recurrences: P_m^m via the double factorial closed form,
    then (l-m) P_l^m = (2l-1) u P_{l-1}^m - (l+m-1) P_{l-2}^m.
    Accepts scalar or array u in [-1, 1].
    """
    if l < 0 or m < 0 or m > l:
        raise ValueError(f"need 0 <= m <= l, got l={l}, m={m}")
    u = np.asarray(u, dtype=float)
    if np.any(u < -1.0) or np.any(u > 1.0):
        raise ValueError("argument must lie in [-1, 1]")

    # P_m^m = (2m-1)!! (1-u^2)^{m/2}
    pmm = np.ones_like(u)
    if m > 0:
        somx2 = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
        fact = 1.0
        for _ in range(m):
            pmm = pmm * fact * somx2
            fact += 2.0
    if l == m:
        return pmm if pmm.ndim else float(pmm)
    pmmp1 = u * (2 * m + 1) * pmm
    if l == m + 1:
        return pmmp1 if pmmp1.ndim else float(pmmp1)
    for ll in range(m + 2, l + 1):
        pll = ((2 * ll - 1) * u * pmmp1 - (ll + m - 1) * pmm) / (ll - m)
        pmm, pmmp1 = pmmp1, pll
    return pmmp1 if pmmp1.ndim else float(pmmp1)


def real_spherical_harmonic(l: int, m: int, coord: SphericalCoord) -> float:
    """Orthonormal real spherical harmonic Y_l^m(theta, phi)."""
    if abs(m) > l:
        raise ValueError(f"need |m| <= l, got l={l}, m={m}")
    am = abs(m)
    norm = np.sqrt((2 * l + 1) / (4.0 * np.pi)
                   * _factorial_ratio(l - am, l + am))
    plm = associated_legendre(l, am, np.cos(coord.theta))
    if m == 0:
        azim = 1.0
    elif m > 0:
        azim = np.sqrt(2.0) * np.cos(m * coord.phi)
    else:
        azim = np.sqrt(2.0) * np.sin(am * coord.phi)
    return float(norm * plm * azim)


def _factorial_ratio(num: int, den: int) -> float:
    # num! / den! for num <= den, evaluated without large intermediates
    out = 1.0
    for k in range(num + 1, den + 1):
        out /= k
    return out


def harmonic_basis(points, l_max: int) -> np.ndarray:
    """Matrix of Y_l^m over all (l, m) with l <= l_max at given unit points.

    Columns ordered (l, m) with l ascending and m = -l..l; shape
    (n_points, (l_max + 1)^2).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.clip(points[:, 2], -1.0, 1.0)
    phi = np.arctan2(points[:, 1], points[:, 0])
    cols = []
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            am = abs(m)
            norm = np.sqrt((2 * l + 1) / (4.0 * np.pi)
                           * _factorial_ratio(l - am, l + am))
            plm = associated_legendre(l, am, z)
            if m == 0:
                azim = np.ones_like(phi)
            elif m > 0:
                azim = np.sqrt(2.0) * np.cos(m * phi)
            else:
                azim = np.sqrt(2.0) * np.sin(am * phi)
            cols.append(norm * plm * azim)
    return np.column_stack(cols)


def abel_poisson(x, center, h: float) -> float:
    """Abel-Poisson kernel (1-h^2) / (4 pi (1 + h^2 - 2 h x.c)^{3/2})."""
    if not 0.0 < h < 1.0:
        raise ValueError(f"h must lie in (0, 1), got {h}")
    x = _check_unit(x, "x")
    center = _check_unit(center, "center")
    dot = float(np.dot(x, center))
    return float((1.0 - h * h)
                 / (4.0 * np.pi * (1.0 + h * h - 2.0 * h * dot) ** 1.5))


def abel_poisson_basis(points, centers, h: float) -> np.ndarray:
    """Abel-Poisson kernel values between point rows and center rows."""
    if not 0.0 < h < 1.0:
        raise ValueError(f"h must lie in (0, 1), got {h}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    dots = points @ centers.T
    return (1.0 - h * h) / (4.0 * np.pi * (1.0 + h * h - 2.0 * h * dots) ** 1.5)


@dataclass(frozen=True)
class IcosphereNodes:
    """Vertices of a subdivided icosahedron projected to the unit sphere."""

    level: int
    nodes: np.ndarray

    def __len__(self):
        return len(self.nodes)


def icosphere_nodes(level: int) -> IcosphereNodes:
    """Icosphere vertex set at the given subdivision level.

    Midpoint subdivision with reprojection to the unit sphere; the final
    node list is sorted lexicographically by coordinates so that the mesh
    is reproducible.  Node count is 10 * 4^level + 2.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    if level > MAX_ICOSPHERE_LEVEL:
        raise ValueError(f"level {level} exceeds cap {MAX_ICOSPHERE_LEVEL}")

    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]

    verts = [v for v in verts]
    for _ in range(level):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint_cache:
                mid = verts[i] + verts[j]
                mid /= np.linalg.norm(mid)
                verts.append(mid)
                midpoint_cache[key] = len(verts) - 1
            return midpoint_cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    nodes = np.array(verts)
    order = np.lexsort((nodes[:, 2], nodes[:, 1], nodes[:, 0]))
    return IcosphereNodes(level=level, nodes=nodes[order])
