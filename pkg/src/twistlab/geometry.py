"""Sphere and rotation primitives with exact Haar-measure sampling on SO(3).

Conventions: angles are radians; sphere points are unit vectors in R^3
(radius-1 convention, height z in [-1, 1]); rotations follow the right-hand
rule.  The Haar rotation-angle density on [0, 2*pi] is (1 - cos(theta)) /
(2*pi), sampled exactly by inverting the eccentricity-1 Kepler equation
z = theta - sin(theta).

All samplers take an explicit ``numpy.random.Generator``; there is no hidden
global state.  Batched helpers operate on ``(n, 3)`` arrays and are the same
code paths the scalar operations wrap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

TAU = 2.0 * np.pi

__all__ = [
    "TAU",
    "Rotation",
    "SpherePoint",
    "TangentState",
    "HaarSample",
    "solve_kepler",
    "sample_sphere",
    "sample_sphere_array",
    "sample_haar",
    "sample_haar_array",
    "sample_ball",
    "sample_ball_array",
    "sample_tangent",
    "sample_tangent_array",
    "rodrigues_rotate",
    "horizontal_at",
    "northward_at",
    "rng_for",
]


def _unit(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n <= eps:
        raise ValueError("cannot normalize a near-zero vector")
    return v / n


def rng_for(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, domain, task-index).

    Philox guarantees the stream is a pure function of the key, so parallel
    and serial runs that assign the same (domain, index) to a task produce
    bit-identical draws.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(domain), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def solve_kepler(z):
    """Invert z = theta - sin(theta) for theta in [0, 2*pi].

    Bisection down to an ~6e-9 bracket followed by two guarded Newton steps.
    The derivative 1 - cos(theta) vanishes at both endpoints; bisection
    protects those, Newton polishes the interior.  Accepts scalars or arrays.

    Raises ValueError if any argument lies outside [0, 2*pi].
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < -1e-12) or np.any(z_arr > TAU + 1e-12):
        raise ValueError("solve_kepler argument must lie in [0, 2*pi]")
    z_arr = np.clip(z_arr, 0.0, TAU)
    lo = np.zeros_like(z_arr)
    hi = np.full_like(z_arr, TAU)
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        below = mid - np.sin(mid) < z_arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    theta = 0.5 * (lo + hi)
    for _ in range(2):
        f = theta - np.sin(theta) - z_arr
        fp = 1.0 - np.cos(theta)
        step = np.where(fp > 1e-18, f / np.where(fp > 1e-18, fp, 1.0), 0.0)
        theta = np.clip(theta - step, lo, hi)
    # the endpoints are exact fixed points of theta - sin(theta)
    theta = np.where(z_arr == 0.0, 0.0, theta)
    theta = np.where(z_arr == TAU, TAU, theta)
    if np.ndim(z) == 0:
        return float(theta)
    return theta


@dataclass(frozen=True, eq=False)
class Rotation:
    """Element of SO(3) stored as an orthogonal 3x3 matrix, det = +1.

    ``axis``/``angle`` report the construction values when the rotation was
    built from axis-angle data (so a Haar sample keeps its Kepler-solved
    angle even beyond pi); otherwise the canonical extraction with angle in
    [0, pi] is used.
    """

    matrix: np.ndarray
    _axis: Optional[np.ndarray] = None
    _angle: Optional[float] = None

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3), np.array([0.0, 0.0, 1.0]), 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        axis = _unit(axis)
        angle = float(angle) % TAU
        k = np.array(
            [
                [0.0, -axis[2], axis[1]],
                [axis[2], 0.0, -axis[0]],
                [-axis[1], axis[0], 0.0],
            ]
        )
        mat = np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
        return cls(mat, axis, angle)

    @classmethod
    def from_quaternion(cls, w: float, x: float, y: float, z: float) -> "Rotation":
        q = np.array([w, x, y, z], dtype=float)
        q = q / np.linalg.norm(q)
        w, x, y, z = q
        mat = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return cls(mat)

    @classmethod
    def from_matrix(cls, mat) -> "Rotation":
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        return cls(mat)

    @property
    def angle(self) -> float:
        if self._angle is not None:
            return self._angle
        tr = float(np.trace(self.matrix))
        return float(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)))

    @property
    def axis(self) -> np.ndarray:
        if self._axis is not None:
            return self._axis
        m = self.matrix
        skew = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
        n = np.linalg.norm(skew)
        if n > 1e-9:
            return skew / n
        # angle ~ 0 or pi: take the dominant eigenvector of (M + I)
        b = m + np.eye(3)
        col = b[:, int(np.argmax(np.einsum("ij,ij->j", b, b)))]
        return _unit(col) if np.linalg.norm(col) > 1e-12 else np.array([0.0, 0.0, 1.0])

    @property
    def quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) built from axis-angle."""
        a, t = self.axis, self.angle
        return np.concatenate(([np.cos(t / 2.0)], np.sin(t / 2.0) * a))

    def compose(self, other: "Rotation") -> "Rotation":
        return Rotation(self.matrix @ other.matrix)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return self.compose(other)

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T.copy())

    def renormalized(self) -> "Rotation":
        """Project back onto SO(3); use after composition chains > 1e4 long."""
        u, _, vt = np.linalg.svd(self.matrix)
        m = u @ vt
        if np.linalg.det(m) < 0:
            u[:, -1] = -u[:, -1]
            m = u @ vt
        return Rotation(m)

    def apply(self, v):
        """Rotate a 3-vector or the rows of an (n, 3) array."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return self.matrix @ v
        return v @ self.matrix.T


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """Point of the unit sphere; ``vec`` is the unit position in R^3."""

    vec: np.ndarray

    @classmethod
    def from_vec(cls, v) -> "SpherePoint":
        return cls(_unit(v))

    @classmethod
    def from_lonlat(cls, longitude: float, latitude: float) -> "SpherePoint":
        cb = np.cos(latitude)
        return cls(
            np.array(
                [cb * np.cos(longitude), cb * np.sin(longitude), np.sin(latitude)]
            )
        )

    @property
    def longitude(self) -> float:
        lon = float(np.arctan2(self.vec[1], self.vec[0]))
        return lon % TAU

    @property
    def latitude(self) -> float:
        return float(np.arcsin(np.clip(self.vec[2], -1.0, 1.0)))


def horizontal_at(p: np.ndarray) -> np.ndarray:
    """Unit tangent to the latitude circle through p, positive sense.

    Undefined at the poles (raises there); the poles have measure zero for
    every sampler in this module.
    """
    r = np.hypot(p[0], p[1])
    if r < 1e-12:
        raise ValueError("horizontal direction undefined at the poles")
    return np.array([-p[1] / r, p[0] / r, 0.0])


def northward_at(p: np.ndarray) -> np.ndarray:
    """Unit tangent pointing toward increasing latitude: p x horizontal."""
    return np.cross(p, horizontal_at(p))


@dataclass(frozen=True, eq=False)
class TangentState:
    """Unit tangent vector of the sphere: base point plus direction.

    The direction is re-orthogonalized against the base point and
    renormalized at construction, so transported states can be fed back in
    without drift accumulating.
    """

    point: SpherePoint
    direction: np.ndarray

    def __post_init__(self):
        p = self.point.vec
        d = np.asarray(self.direction, dtype=float)
        d = d - np.dot(d, p) * p
        object.__setattr__(self, "direction", _unit(d))

    @classmethod
    def from_psi(cls, point: SpherePoint, psi: float) -> "TangentState":
        """State whose direction makes angle psi with the horizontal at p."""
        h = horizontal_at(point.vec)
        v = np.cross(point.vec, h)
        return cls(point, np.cos(psi) * h + np.sin(psi) * v)

    @property
    def psi(self) -> float:
        h = horizontal_at(self.point.vec)
        v = np.cross(self.point.vec, h)
        return float(np.arctan2(np.dot(self.direction, v), np.dot(self.direction, h))) % TAU


@dataclass(frozen=True, eq=False)
class HaarSample:
    """Haar-distributed rotation plus the raw uniforms that produced it.

    The provenance triple (z_axis, lon_axis, z_angle) is retained for
    reproducibility audits: ``angle`` solves z_angle = theta - sin(theta).
    """

    rotation: Rotation
    z_axis: float
    lon_axis: float
    z_angle: float

    @property
    def axis(self) -> np.ndarray:
        return self.rotation.axis

    @property
    def angle(self) -> float:
        return self.rotation.angle


def sphere_points_from_uniforms(lon, z) -> np.ndarray:
    """Map uniform (longitude, height) draws to points; rows of (n, 3)."""
    lon = np.asarray(lon, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(lon), r * np.sin(lon), z], axis=-1)


def sample_sphere_array(rng: np.random.Generator, n: int) -> np.ndarray:
    """n uniform points of S^2 as an (n, 3) array (z and longitude uniform)."""
    lon = rng.uniform(0.0, TAU, n)
    z = rng.uniform(-1.0, 1.0, n)
    return sphere_points_from_uniforms(lon, z)


def sample_sphere(rng: np.random.Generator) -> SpherePoint:
    """One uniform point of S^2."""
    return SpherePoint(sample_sphere_array(rng, 1)[0])


def sample_tangent_array(rng: np.random.Generator, n: int):
    """Uniform unit-tangent-bundle samples: points (n,3) and directions (n,3)."""
    p = sample_sphere_array(rng, n)
    psi = rng.uniform(0.0, TAU, n)
    r = np.hypot(p[:, 0], p[:, 1])
    r = np.where(r < 1e-300, 1.0, r)
    h = np.stack([-p[:, 1] / r, p[:, 0] / r, np.zeros(n)], axis=-1)
    v = np.cross(p, h)
    d = np.cos(psi)[:, None] * h + np.sin(psi)[:, None] * v
    return p, d


def sample_tangent(rng: np.random.Generator) -> TangentState:
    p, d = sample_tangent_array(rng, 1)
    return TangentState(SpherePoint(p[0]), d[0])


def sample_haar_array(rng: np.random.Generator, n: int):
    """n Haar rotations as (axes (n,3), angles (n,)).

    Axis uniform on S^2; angle with density (1 - cos(theta)) / (2*pi) via
    the Kepler inversion of a uniform draw on [0, 2*pi].
    """
    axes = sample_sphere_array(rng, n)
    z_angle = rng.uniform(0.0, TAU, n)
    angles = solve_kepler(z_angle)
    return axes, angles


def sample_haar(rng: np.random.Generator) -> HaarSample:
    """One Haar-distributed rotation with provenance uniforms."""
    lon = rng.uniform(0.0, TAU)
    z = rng.uniform(-1.0, 1.0)
    z_angle = rng.uniform(0.0, TAU)
    axis = sphere_points_from_uniforms(lon, z)
    theta = solve_kepler(z_angle)
    return HaarSample(Rotation.from_axis_angle(axis, theta), z, lon, z_angle)


def sample_ball_array(rng: np.random.Generator, delta: float, n: int):
    """n rotations from the Haar-restricted delta-ball, as (axes, angles).

    delta is the maximal rotation angle; the angle density is proportional
    to (1 - cos(theta)) on [0, delta].
    """
    if not 0.0 < delta <= TAU:
        raise ValueError("ball radius delta must lie in (0, 2*pi]")
    axes = sample_sphere_array(rng, n)
    mass = delta - np.sin(delta)
    angles = solve_kepler(rng.uniform(0.0, 1.0, n) * mass)
    return axes, angles


def sample_ball(rng: np.random.Generator, delta: float) -> Rotation:
    """One rotation uniform (w.r.t. Haar) in the angle-delta ball around e."""
    axes, angles = sample_ball_array(rng, delta, 1)
    return Rotation.from_axis_angle(axes[0], float(angles[0]))


def rodrigues_rotate(axes: np.ndarray, cos_a, sin_a, vecs: np.ndarray) -> np.ndarray:
    """Rotate rows of ``vecs`` about the unit rows of ``axes``, batched.

    ``cos_a``/``sin_a`` are (n,) arrays (precomputed once when the same
    rotations act on several vector fields).
    """
    cos_a = np.asarray(cos_a, dtype=float)[:, None]
    sin_a = np.asarray(sin_a, dtype=float)[:, None]
    dot = np.einsum("ij,ij->i", axes, vecs)[:, None]
    return vecs * cos_a + np.cross(axes, vecs) * sin_a + axes * dot * (1.0 - cos_a)
