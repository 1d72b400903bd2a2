"""The latitude-twist family on the unit sphere and its tangent dynamics.

In the frame of its axis (default: the z-axis) the map rotates every
latitude circle rigidly: a point at height z advances in longitude by
pi * eps * (1 + z).  Poles are fixed.  The derivative acts, in the moving
(horizontal, northward) frame at height z, as the unit shear
[[1, alpha], [0, 1]] with alpha = pi * eps * (1 - z^2); the same coefficient
reads 4*pi*eps*x*(1-x) in the Archimedean cylinder chart x = (1+z)/2.

Tangent transport happens in ambient R^3 with per-step re-orthogonalization
against the base point; the chart shear is kept as an independent
cross-check path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Rotation, SpherePoint, TangentState, TAU, _unit

__all__ = [
    "TwistFamily",
    "CylinderPoint",
    "ShearMatrix",
    "shear_at",
    "compose_and_apply",
    "twist_points",
    "twist_tangent_step",
    "cylinder_to_sphere",
    "sphere_to_cylinder",
    "chart_log_stretch",
]

_POLE_CLAMP = 1e-12


def twist_points(eps: float, points: np.ndarray) -> np.ndarray:
    """Apply the z-axis twist to the rows of an (n, 3) array."""
    z = points[:, 2]
    a = np.pi * eps * (1.0 + z)
    ca, sa = np.cos(a), np.sin(a)
    out = np.empty_like(points)
    out[:, 0] = ca * points[:, 0] - sa * points[:, 1]
    out[:, 1] = sa * points[:, 0] + ca * points[:, 1]
    out[:, 2] = z
    return out


def twist_tangent_step(eps: float, points: np.ndarray, dirs: np.ndarray):
    """One tangent-map step of the z-axis twist, batched.

    Returns (new_points, new_dirs, log_stretch) for unit tangent pairs given
    as (n, 3) rows.  The stretch comes from the shear term alone (the
    latitude rotation is an isometry); directions are renormalized and
    re-orthogonalized against the transported base every step.
    """
    if eps == 0.0:
        # f_0 is the identity; its cocycle is exactly zero
        return points.copy(), dirs.copy(), np.zeros(points.shape[0])
    z = points[:, 2]
    coef = np.pi * eps * dirs[:, 2]
    w = dirs.copy()
    w[:, 0] -= coef * points[:, 1]
    w[:, 1] += coef * points[:, 0]
    stretch = np.sqrt(np.einsum("ij,ij->i", w, w))
    log_stretch = np.log(stretch)

    a = np.pi * eps * (1.0 + z)
    ca, sa = np.cos(a), np.sin(a)
    new_points = np.empty_like(points)
    new_points[:, 0] = ca * points[:, 0] - sa * points[:, 1]
    new_points[:, 1] = sa * points[:, 0] + ca * points[:, 1]
    new_points[:, 2] = z
    new_dirs = np.empty_like(w)
    new_dirs[:, 0] = ca * w[:, 0] - sa * w[:, 1]
    new_dirs[:, 1] = sa * w[:, 0] + ca * w[:, 1]
    new_dirs[:, 2] = w[:, 2]
    new_dirs /= stretch[:, None]
    # re-orthogonalize against the base point, then renormalize
    proj = np.einsum("ij,ij->i", new_dirs, new_points)
    new_dirs -= proj[:, None] * new_points
    new_dirs /= np.sqrt(np.einsum("ij,ij->i", new_dirs, new_dirs))[:, None]
    return new_points, new_dirs, log_stretch


@dataclass(frozen=True, eq=False)
class TwistFamily:
    """Twist with stretch parameter eps about a configurable axis.

    ``axis_frame`` carries the twist axis to the z-axis; the default
    identity means the twist is about z itself.
    """

    eps: float
    axis_frame: Rotation = field(default_factory=Rotation.identity)

    def __post_init__(self):
        if self.eps < 0.0:
            raise ValueError("twist parameter eps must be >= 0")

    def _to_frame(self, v: np.ndarray) -> np.ndarray:
        return self.axis_frame.matrix @ v

    def _from_frame(self, v: np.ndarray) -> np.ndarray:
        return self.axis_frame.matrix.T @ v

    def apply(self, p: SpherePoint) -> SpherePoint:
        q = self._to_frame(p.vec)
        q = twist_points(self.eps, q[None, :])[0]
        return SpherePoint(_unit(self._from_frame(q)))

    def tangent_apply(self, s: TangentState):
        """Map a tangent state and report the log of the tangent stretch."""
        q = self._to_frame(s.point.vec)[None, :]
        w = self._to_frame(s.direction)[None, :]
        q, w, ls = twist_tangent_step(self.eps, q, w)
        out = TangentState(SpherePoint(_unit(self._from_frame(q[0]))), self._from_frame(w[0]))
        value = float(ls[0])
        if not np.isfinite(value):
            raise ArithmeticError("non-finite tangent stretch")
        return out, value


def compose_and_apply(g: Rotation, f: TwistFamily, s: TangentState):
    """Tangent step of g o f.  g is an isometry, so the log-stretch is f's."""
    t, log_stretch = f.tangent_apply(s)
    return TangentState(SpherePoint(g.apply(t.point.vec)), g.apply(t.direction)), log_stretch


@dataclass(frozen=True)
class CylinderPoint:
    """Archimedean chart coordinates: angle theta, height x in [0, 1]."""

    theta: float
    x: float


def cylinder_to_sphere(cp: CylinderPoint) -> SpherePoint:
    """Inverse Archimedean projection, scaled to the unit sphere."""
    g = np.sqrt(max(cp.x * (1.0 - cp.x), 0.0))
    return SpherePoint.from_vec(
        np.array([2.0 * g * np.cos(cp.theta), 2.0 * g * np.sin(cp.theta), 2.0 * cp.x - 1.0])
    )


def sphere_to_cylinder(p: SpherePoint) -> CylinderPoint:
    """Chart coordinates of a sphere point; x clamped away from the poles."""
    x = (1.0 + p.vec[2]) / 2.0
    x = min(max(x, _POLE_CLAMP), 1.0 - _POLE_CLAMP)
    return CylinderPoint(float(np.arctan2(p.vec[1], p.vec[0])) % TAU, float(x))


@dataclass(frozen=True)
class ShearMatrix:
    """Unit shear [[1, alpha], [0, 1]]; determinant exactly one."""

    alpha: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[1.0, self.alpha], [0.0, 1.0]])

    @property
    def det(self) -> float:
        return 1.0

    @property
    def operator_norm(self) -> float:
        half = abs(self.alpha) / 2.0
        return half + np.sqrt(1.0 + half * half)


def shear_at(eps: float, x: float) -> ShearMatrix:
    """Conjugated chart derivative of the twist at height x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("chart height x must lie in [0, 1]")
    return ShearMatrix(4.0 * np.pi * eps * x * (1.0 - x))


def chart_log_stretch(eps: float, s: TangentState) -> float:
    """Log-stretch via the 2x2 chart shear; cross-check for tangent_apply.

    Expands the direction in the (horizontal, northward) frame at the base
    point and applies the shear of the matching chart height.  Undefined at
    the poles (the frame degenerates there).
    """
    p = s.point.vec
    r = np.hypot(p[0], p[1])
    if r < 1e-8:
        raise ValueError("chart frame degenerates at the poles")
    h = np.array([-p[1] / r, p[0] / r, 0.0])
    v = np.cross(p, h)
    a = float(np.dot(s.direction, h))
    b = float(np.dot(s.direction, v))
    x = (1.0 + p[2]) / 2.0
    m = shear_at(eps, x).matrix
    image = m @ np.array([a, b])
    return float(0.5 * np.log(image @ image))
