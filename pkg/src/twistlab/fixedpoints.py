"""Fixed points of g o f_eps: location, stability, and bifurcation curves.

With the twist about the z-axis and the rotation axis placed at longitude 0
and latitude beta, a fixed point at latitude b sits at longitude -delta(b),
delta(b) = (pi/2) eps (1 + sin b), and b solves

  sin(t/2) sin(beta) cos(b) cos(delta) - sin(t/2) cos(beta) sin(b)
    + cos(t/2) cos(b) sin(delta) = 0.

Scanning b over the full circle [0, 2*pi) covers both longitude branches
(b -> pi - b swaps them).  Every root is reconstructed on the sphere and
re-validated by applying the map directly, so branch ambiguities surface as
residual failures instead of silent misclassifications.

Stability comes from central-difference differentiation of the composed map
in an orthonormal tangent frame (step 1e-6, one Richardson refinement), the
single code path for all parameters; the b = 0 family, where the analytic
shear is available, cross-validates it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .geometry import Rotation, SpherePoint, TAU
from .twistmap import twist_points

__all__ = [
    "FixedPointRecord",
    "BifurcationCell",
    "BifurcationMap",
    "delta_of",
    "fixed_point_function",
    "fixed_point_location",
    "find_fixed_points",
    "double_zero_curves",
    "beta0_double_roots",
    "max_eigenvalue",
    "b0_family_max_eigenvalue",
    "bifurcation_map",
]

SCAN_POINTS = 4096
RESIDUAL_TOL = 1e-6
DEGENERATE_TOL = 1e-6
MERGE_TOL = 1e-6
_DIFF_STEP = 1e-6


def delta_of(b, eps: float):
    """Half the longitude advance of the twist at latitude b."""
    return 0.5 * np.pi * eps * (1.0 + np.sin(b))


def fixed_point_function(b, beta: float, theta: float, eps: float):
    """Zero exactly at latitudes b carrying fixed points of g o f_eps."""
    d = delta_of(b, eps)
    st = np.sin(theta / 2.0)
    return (
        st * np.sin(beta) * np.cos(b) * np.cos(d)
        - st * np.cos(beta) * np.sin(b)
        + np.cos(theta / 2.0) * np.cos(b) * np.sin(d)
    )


def fixed_point_location(b: float, eps: float) -> SpherePoint:
    """Sphere point at latitude b, longitude -delta(b) (axis meridian = 0)."""
    d = delta_of(b, eps)
    return SpherePoint(
        np.array([np.cos(b) * np.cos(d), -np.cos(b) * np.sin(d), np.sin(b)])
    )


@dataclass(frozen=True)
class FixedPointRecord:
    """One fixed point: root parameter, location, eigenvalue data, flags.

    ``stability`` is E (elliptic, |trace| < 2), H (hyperbolic, trace > 2) or
    R (hyperbolic with reflection, trace < -2).  ``flags`` may contain
    "degenerate" (|trace| within 1e-6 of 2, excluded from Euler-Poincare
    counts), "residual" (dynamic validation failed; never silently dropped)
    and "double-candidate" (merged near-coincident roots).
    """

    b: float
    location: SpherePoint
    trace: float
    eigenvalues: Tuple[complex, complex]
    stability: str
    residual: float
    flags: Tuple[str, ...] = ()

    @property
    def flagged(self) -> bool:
        return len(self.flags) > 0


def _rotation_for(beta: float, theta: float) -> Rotation:
    axis = np.array([np.cos(beta), 0.0, np.sin(beta)])
    return Rotation.from_axis_angle(axis, theta)


def _apply_map(gmat: np.ndarray, eps: float, pts: np.ndarray) -> np.ndarray:
    return twist_points(eps, pts) @ gmat.T


def _scan_roots(beta: float, theta: float, eps: float, n_scan: int) -> np.ndarray:
    """All simple roots of the fixed-point function on [0, 2*pi).

    Sign-change scan on an n_scan grid followed by vectorized bisection to
    ~1e-13 in b.  Tangencies between grid nodes are invisible at this stage;
    they sit on bifurcation lines and are caught by the flagging pass.
    """
    bs = np.linspace(0.0, TAU, n_scan + 1)
    fs = fixed_point_function(bs, beta, theta, eps)
    exact = bs[:-1][fs[:-1] == 0.0]
    change = fs[:-1] * fs[1:] < 0.0
    lo = bs[:-1][change]
    hi = bs[1:][change]
    flo = fs[:-1][change]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = fixed_point_function(mid, beta, theta, eps)
        left = flo * fm <= 0.0
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        flo = np.where(left, flo, fm)
    roots = np.concatenate([exact, 0.5 * (lo + hi)])
    return np.sort(roots) % TAU


def _tangent_matrix(gmat: np.ndarray, eps: float, point: np.ndarray, h: float = _DIFF_STEP):
    """2x2 derivative of g o f_eps at a fixed point, in an orthonormal frame.

    Central differences with one Richardson refinement (h and h/2).
    """
    p = point
    r = np.hypot(p[0], p[1])
    if r > 1e-8:
        e1 = np.array([-p[1] / r, p[0] / r, 0.0])
    else:
        e1 = np.array([1.0, 0.0, 0.0])
        e1 = e1 - np.dot(e1, p) * p
        e1 /= np.linalg.norm(e1)
    e2 = np.cross(p, e1)

    def d_matrix(step: float) -> np.ndarray:
        offsets = np.array([step * e1, -step * e1, step * e2, -step * e2])
        pts = p[None, :] + offsets
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        images = _apply_map(gmat, eps, pts)
        cols = np.empty((2, 2))
        for j in range(2):
            diff = (images[2 * j] - images[2 * j + 1]) / (2.0 * step)
            cols[0, j] = np.dot(diff, e1)
            cols[1, j] = np.dot(diff, e2)
        return cols

    d1 = d_matrix(h)
    d2 = d_matrix(h / 2.0)
    return (4.0 * d2 - d1) / 3.0


def _classify(trace: float) -> Tuple[str, bool]:
    degenerate = abs(abs(trace) - 2.0) < DEGENERATE_TOL
    if trace > 2.0:
        return "H", degenerate
    if trace < -2.0:
        return "R", degenerate
    return "E", degenerate


def find_fixed_points(
    beta: float,
    theta: float,
    eps: float,
    n_scan: int = SCAN_POINTS,
) -> List[FixedPointRecord]:
    """Locate, validate, and classify all fixed points of g o f_eps.

    beta in [0, pi/2] is the rotation-axis latitude, theta in [0, 2*pi) the
    rotation angle.  Roots closer than 1e-6 in b are merged and flagged as
    double-zero candidates; every record carries its dynamic residual
    ||(g o f_eps)(A) - A||.
    """
    if not 0.0 <= beta <= np.pi / 2.0:
        raise ValueError("beta must lie in [0, pi/2]")
    g = _rotation_for(beta, theta)
    gmat = g.matrix
    roots = _scan_roots(beta, theta, eps, n_scan)

    merged: List[Tuple[float, bool]] = []
    for b in roots:
        if merged and min(abs(b - merged[-1][0]), TAU - abs(b - merged[-1][0])) < MERGE_TOL:
            merged[-1] = (0.5 * (b + merged[-1][0]), True)
        else:
            merged.append((float(b), False))
    if len(merged) > 1:
        gap = min(abs(merged[0][0] + TAU - merged[-1][0]), abs(merged[0][0] - merged[-1][0]))
        if gap < MERGE_TOL:
            first = merged.pop(0)
            merged[-1] = (merged[-1][0], True)

    records = []
    for b, double_candidate in merged:
        loc = fixed_point_location(b, eps)
        residual = float(
            np.linalg.norm(_apply_map(gmat, eps, loc.vec[None, :])[0] - loc.vec)
        )
        d = _tangent_matrix(gmat, eps, loc.vec)
        trace = float(np.trace(d))
        eigs = np.linalg.eigvals(d)
        stability, degenerate = _classify(trace)
        flags = []
        if residual > RESIDUAL_TOL:
            flags.append("residual")
        if degenerate:
            flags.append("degenerate")
        if double_candidate:
            flags.append("double-candidate")
        records.append(
            FixedPointRecord(
                b=b,
                location=loc,
                trace=trace,
                eigenvalues=(complex(eigs[0]), complex(eigs[1])),
                stability=stability,
                residual=residual,
                flags=tuple(flags),
            )
        )
    return records


def double_zero_curves(samples: int, b_range: Tuple[float, float] = (np.pi / 2.0, 1.5 * np.pi)):
    """The two double-zero curves of the small-eps limit equation.

    Parameterized by b in (pi/2, 3*pi/2); returns (b, m, beta) arrays with
    m on the [-2, 0] branch.  The curves bound the four-fixed-point wedge
    and meet at the triple zero (m, beta) = (-sqrt(2), pi/4) at b = pi.

    The squared-modulus relation is m^2 = 2 + 2 sin^3(b) - (3/4) sin^2(2b):
    the coefficient 2 on sin^3 makes the pair (value, derivative) of
    m sin(b - beta) - cos(b)(1 + sin(b)) vanish identically along the curve,
    which is asserted here.
    """
    lo, hi = b_range
    if not (np.pi / 2.0 <= lo < hi <= 1.5 * np.pi):
        raise ValueError("b_range must lie inside [pi/2, 3*pi/2]")
    # the upper endpoint b = 3*pi/2 is degenerate (m = 0 and the direction
    # vector vanishes quadratically, leaving only rounding noise); stop at a
    # distance where the components still dominate double-precision error
    hi = min(hi, 1.5 * np.pi - 1e-5)
    b = np.linspace(lo, hi, samples)
    m_sq = 2.0 + 2.0 * np.sin(b) ** 3 - 0.75 * np.sin(2.0 * b) ** 2
    if np.any(m_sq < -1e-12):
        raise ArithmeticError("m^2 went negative on the parameter range")
    m = -np.sqrt(np.clip(m_sq, 0.0, None))
    w = (np.sin(b) - np.cos(2.0 * b)) - 1j * (np.cos(b) + 0.5 * np.sin(2.0 * b))
    beta = b - np.angle(w)
    return b, m, beta


def limit_equation(b, m, beta):
    """m sin(b - beta) - cos(b)(1 + sin(b)); double zeros lie on the curves."""
    return m * np.sin(b - beta) - np.cos(b) * (1.0 + np.sin(b))


def limit_equation_db(b, m, beta):
    """d/db of the limit equation."""
    return m * np.cos(b - beta) + np.sin(b) - np.cos(2.0 * b)


def beta0_double_roots(eps: float, n_scan: int = 8192) -> List[float]:
    """Latitudes b where the beta = 0 fixed-point equation has double roots.

    Solves (2 / (pi eps)) tan(delta(b)) = sin(b) cos^2(b) branch-wise
    between the tangent poles; the degenerate latitudes |cos b| = 0 are
    excluded.  New solutions appear exactly as eps crosses positive
    integers.
    """
    if eps <= 0.0:
        raise ValueError("eps must be > 0")

    def h(b):
        return (2.0 / (np.pi * eps)) * np.tan(delta_of(b, eps)) - np.sin(b) * np.cos(b) ** 2

    # breakpoints: tan poles delta(b) = pi/2 + k*pi, plus the excluded
    # degenerate latitudes b = pi/2, 3*pi/2
    breaks = [0.0, TAU, np.pi / 2.0, 1.5 * np.pi]
    k = 0
    while True:
        s = (2.0 * k + 1.0) / eps - 1.0
        if s > 1.0:
            break
        if s >= -1.0:
            base = float(np.arcsin(s))
            breaks.extend([base % TAU, (np.pi - base) % TAU])
        k += 1
    breaks = sorted(set(breaks))

    roots: List[float] = []
    margin = 1e-9
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi - lo < 3.0 * margin:
            continue
        bs = np.linspace(lo + margin, hi - margin, max(int(n_scan * (hi - lo) / TAU), 16))
        fs = h(bs)
        change = fs[:-1] * fs[1:] < 0.0
        los, his, flos = bs[:-1][change], bs[1:][change], fs[:-1][change]
        for _ in range(60):
            mid = 0.5 * (los + his)
            fm = h(mid)
            left = flos * fm <= 0.0
            his = np.where(left, mid, his)
            los = np.where(left, los, mid)
            flos = np.where(left, flos, fm)
        for b in 0.5 * (los + his):
            if abs(np.cos(b)) > 1e-6:
                roots.append(float(b))
    return sorted(roots)


def max_eigenvalue(eps: float) -> float:
    """Largest eigenvalue modulus over all fixed points, attained at b = 0."""
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    half = 0.5 * np.pi * eps
    return float(half + np.sqrt(1.0 + half * half))


def _b0_eigenvalue(eps: float, beta: float, theta: float) -> float:
    """|eigenvalue| at the b = 0 fixed point of g(beta, theta) o f_eps.

    Returns 0 when the reconstructed point fails dynamic validation.
    """
    g = _rotation_for(float(beta), float(theta))
    loc = fixed_point_location(0.0, eps)
    res = float(np.linalg.norm(_apply_map(g.matrix, eps, loc.vec[None, :])[0] - loc.vec))
    if res > RESIDUAL_TOL:
        return 0.0
    d = _tangent_matrix(g.matrix, eps, loc.vec)
    return float(np.max(np.abs(np.linalg.eigvals(d))))


def b0_family_max_eigenvalue(eps: float, n_grid: int = 1024, zoom_rounds: int = 6) -> float:
    """Numerical maximum of |eigenvalue| over validated b = 0 fixed points.

    Two parameter branches carry b = 0 roots: axis latitudes beta > 0 with
    the angle fixed by theta = 2 atan2(-sin(delta0), sin(beta) cos(delta0)),
    and beta = 0 where theta = pi always works (for even-integer eps, where
    the twist at the equator is a full turn, every theta does).  The grid
    maximum over both branches is refined by iterative zooming; it
    cross-validates the closed-form bound.
    """
    d0 = delta_of(0.0, eps)

    def family_eig(beta: float) -> float:
        theta = (2.0 * np.arctan2(-np.sin(d0), np.sin(beta) * np.cos(d0))) % TAU
        if theta < 1e-9:
            return 0.0
        return _b0_eigenvalue(eps, beta, theta)

    def beta0_eig(theta: float) -> float:
        if theta < 1e-9:
            return 0.0
        return _b0_eigenvalue(eps, 0.0, theta)

    best = 0.0
    for func, lo, hi in ((family_eig, 1e-6, np.pi / 2.0), (beta0_eig, 1e-3, TAU - 1e-3)):
        xs = np.linspace(lo, hi, n_grid)
        vals = np.array([func(x) for x in xs])
        peak = int(np.argmax(vals))
        if vals[peak] <= 0.0:
            continue
        best = max(best, float(vals[peak]))
        span = xs[1] - xs[0]
        center = xs[peak]
        for _ in range(zoom_rounds):
            local = np.linspace(max(center - span, lo), min(center + span, hi), 33)
            lvals = np.array([func(x) for x in local])
            k = int(np.argmax(lvals))
            center = local[k]
            best = max(best, float(lvals[k]))
            span = local[1] - local[0]
    return best


@dataclass(frozen=True)
class BifurcationCell:
    """Counts of fixed points by type in one parameter cell."""

    theta: float
    beta: float
    n_e: int
    n_h: int
    n_r: int
    code: str
    flagged: bool
    boundary: bool = False

    @property
    def total(self) -> int:
        return self.n_e + self.n_h + self.n_r


@dataclass
class BifurcationMap:
    """Cell-centered map of the (theta, beta) parameter rectangle."""

    eps: float
    thetas: np.ndarray
    betas: np.ndarray
    cells: List[List[BifurcationCell]]

    def counts(self) -> np.ndarray:
        n = len(self.thetas)
        out = np.zeros((n, len(self.betas)), dtype=int)
        for i in range(n):
            for j in range(len(self.betas)):
                out[i, j] = self.cells[i][j].total
        return out


def _cell_code(n_e: int, n_h: int, n_r: int) -> str:
    parts = []
    for label, count in (("R", n_r), ("H", n_h), ("E", n_e)):
        if count > 0:
            parts.append(f"{label}^{count}")
    return "".join(parts) if parts else "-"


def bifurcation_map(
    eps: float,
    n_cells: int,
    theta_range: Tuple[float, float] = (0.0, TAU),
    beta_range: Tuple[float, float] = (0.0, np.pi / 2.0),
    n_scan: int = SCAN_POINTS,
) -> BifurcationMap:
    """Classify fixed points on an n x n grid of cell centers.

    Cells containing degenerate or unvalidated records are flagged; a
    second pass marks cells whose total count differs from a neighbor
    (bifurcation lines cross there).
    """
    t_lo, t_hi = theta_range
    b_lo, b_hi = beta_range
    thetas = t_lo + (np.arange(n_cells) + 0.5) * (t_hi - t_lo) / n_cells
    betas = b_lo + (np.arange(n_cells) + 0.5) * (b_hi - b_lo) / n_cells

    cells: List[List[BifurcationCell]] = []
    for theta in thetas:
        row = []
        for beta in betas:
            records = find_fixed_points(float(beta), float(theta), eps, n_scan=n_scan)
            clean = [r for r in records if "degenerate" not in r.flags and "residual" not in r.flags]
            n_e = sum(1 for r in clean if r.stability == "E")
            n_h = sum(1 for r in clean if r.stability == "H")
            n_r = sum(1 for r in clean if r.stability == "R")
            flagged = any(r.flagged for r in records)
            row.append(
                BifurcationCell(
                    theta=float(theta),
                    beta=float(beta),
                    n_e=n_e,
                    n_h=n_h,
                    n_r=n_r,
                    code=_cell_code(n_e, n_h, n_r),
                    flagged=flagged,
                )
            )
        cells.append(row)

    # flag cells where the neighbor totals change: a bifurcation line crosses
    totals = [[c.total for c in row] for row in cells]
    for i in range(n_cells):
        for j in range(n_cells):
            here = totals[i][j]
            boundary = False
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n_cells and 0 <= jj < n_cells and totals[ii][jj] != here:
                    boundary = True
                    break
            if boundary:
                c = cells[i][j]
                cells[i][j] = BifurcationCell(
                    theta=c.theta,
                    beta=c.beta,
                    n_e=c.n_e,
                    n_h=c.n_h,
                    n_r=c.n_r,
                    code=c.code,
                    flagged=c.flagged,
                    boundary=True,
                )
    return BifurcationMap(eps=eps, thetas=thetas, betas=betas, cells=cells)
