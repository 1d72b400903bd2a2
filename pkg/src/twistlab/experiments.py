"""Estimation pipelines for the average exponent and the diffused exponent.

The average-exponent scan integrates per-rotation phase-space averages over
SO(3) with a product Simpson rule in the rotation angle theta_g in [0, 2*pi]
and the axis latitude beta_g in [0, pi/2], weighted by the Haar density
cos(beta) (1 - cos(theta)) / (2*pi); the axis longitude is irrelevant and
fixed at 0.  Per-orbit exponents default to the improved MEGNO estimator
after a 512-iterate transient, and scans are repeated at M, M/2, M/4
iterates to extrapolate the ctant/M estimator bias away.

The diffused exponent replaces the single rotation g by u_k * g with u_k
drawn fresh each step from the Haar delta-ball, interpolating between the
fully random process (delta = 2*pi) and the deterministic family.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .exponents import ExponentEstimate, kahan_add
from .geometry import (
    Rotation,
    rodrigues_rotate,
    sample_ball_array,
    sample_haar_array,
    sample_tangent_array,
)
from .twistmap import twist_tangent_step

__all__ = [
    "GridSpec",
    "LambdaScanResult",
    "DiffusedSpec",
    "lambda_for_rotation",
    "lambda_scan",
    "sigma_statistics",
    "diffused_exponent",
    "exponential_smallness_fit",
]

DEFAULT_TRANSIENT = 512
ESTIMATORS = ("classical", "megno", "megno_improved")

# upper bound on simultaneously integrated orbits; keeps peak memory modest
_MAX_BATCH = 600_000


@dataclass(frozen=True)
class GridSpec:
    """Product-Simpson grid over (theta_g, beta_g).

    ``n_g`` counts the (even) number of intervals per axis, giving n_g + 1
    nodes; theta spans [0, 2*pi] and beta spans [0, pi/2].  The node weight
    is the Simpson tensor weight times cos(beta) (1 - cos(theta)) / (2*pi),
    which integrates to one over the rectangle.
    """

    n_g: int

    def __post_init__(self):
        if self.n_g < 2 or self.n_g % 2 != 0:
            raise ValueError("n_g must be an even number of intervals >= 2")

    def nodes(self) -> Tuple[np.ndarray, np.ndarray]:
        thetas = np.linspace(0.0, 2.0 * np.pi, self.n_g + 1)
        betas = np.linspace(0.0, np.pi / 2.0, self.n_g + 1)
        return thetas, betas

    @staticmethod
    def simpson_weights(n_intervals: int, width: float) -> np.ndarray:
        w = np.ones(n_intervals + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * (width / n_intervals) / 3.0

    @staticmethod
    def haar_density(thetas, betas) -> np.ndarray:
        """cos(beta) (1 - cos(theta)) / (2*pi) on the node tensor grid."""
        t = np.asarray(thetas)[:, None]
        b = np.asarray(betas)[None, :]
        return np.cos(b) * (1.0 - np.cos(t)) / (2.0 * np.pi)

    def quadrature_weights(self) -> np.ndarray:
        """Combined weights: Simpson tensor times the Haar density.

        The boundary lines theta in {0, 2*pi} and beta = pi/2 carry zero
        density; their weights are zeroed exactly so scans skip those nodes.
        """
        thetas, betas = self.nodes()
        wt = self.simpson_weights(self.n_g, 2.0 * np.pi)
        wb = self.simpson_weights(self.n_g, np.pi / 2.0)
        w = wt[:, None] * wb[None, :] * self.haar_density(thetas, betas)
        w[:, betas == np.pi / 2.0] = 0.0
        w[thetas == 0.0, :] = 0.0
        w[thetas == 2.0 * np.pi, :] = 0.0
        return w


@dataclass(frozen=True)
class DiffusedSpec:
    """Sizes for a delta-diffused run: eps, ball radius, and sample counts."""

    eps: float
    delta: float
    n_iterates: int
    m_rotations: int
    m_points: int

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("delta must be > 0")
        if min(self.n_iterates, self.m_rotations, self.m_points) < 1:
            raise ValueError("all sample sizes must be >= 1")


@dataclass
class LambdaScanResult:
    """Scan output: the weighted Simpson sum, its per-cell table, and spread.

    ``lambda_cells`` and ``sigma_cells`` are (n_g+1, n_g+1) node tables
    (zero where the quadrature weight vanishes); ``h_table`` is the plotted
    surface lambda_g * cos(beta)(1 - cos(theta)) * pi/2.  ``lambda_by_m``
    maps each iterate budget (M/4, M/2, M) to its weighted sum, and
    ``lambda_extrap`` is the intercept of the a + b/M fit.
    """

    eps: float
    thetas: np.ndarray
    betas: np.ndarray
    weights: np.ndarray
    lambda_cells: np.ndarray
    sigma_cells: np.ndarray
    meansq_cells: np.ndarray
    h_table: np.ndarray
    lambda_num: float
    lambda_by_m: Dict[int, float]
    lambda_extrap: float
    extrap_slope: float
    extrap_residual: float
    sigma_s2: float
    sigma_total: float
    n_points: int
    m_iterates: int
    estimator: str
    transient: int


def _orbit_estimates(
    eps: float,
    axes: np.ndarray,
    angles: np.ndarray,
    points: np.ndarray,
    dirs: np.ndarray,
    m_iterates: int,
    transient: int,
    estimator: str,
    checkpoints,
):
    """Per-orbit exponent estimates under iteration of g o f_eps.

    ``axes``/``angles`` give each orbit its own fixed rotation; checkpoints
    is an increasing list of iterate counts at which to snapshot the
    estimator (the last entry must be m_iterates).
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    ca, sa = np.cos(angles), np.sin(angles)
    points = points.copy()
    dirs = dirs.copy()
    for _ in range(transient):
        points, dirs, _ = twist_tangent_step(eps, points, dirs)
        points = rodrigues_rotate(axes, ca, sa, points)
        dirs = rodrigues_rotate(axes, ca, sa, dirs)

    n = points.shape[0]
    sum_y = np.zeros(n)
    ybar = np.zeros(n)
    total = np.zeros(n)
    comp = np.zeros(n)
    out = {}
    marks = set(int(c) for c in checkpoints)
    for k in range(1, m_iterates + 1):
        points, dirs, ls = twist_tangent_step(eps, points, dirs)
        points = rodrigues_rotate(axes, ca, sa, points)
        dirs = rodrigues_rotate(axes, ca, sa, dirs)
        if estimator == "classical":
            kahan_add(total, comp, ls)
        else:
            sum_y += ls * float(k) ** 2
            ybar += sum_y
        if k in marks:
            kf = float(k)
            if estimator == "classical":
                out[k] = total / kf
            elif estimator == "megno":
                out[k] = 12.0 * ybar / kf**4
            else:
                out[k] = 12.0 * ybar / (kf**4 + 4.0 * kf**3 + 5.0 * kf**2)
    return out


def lambda_for_rotation(
    g: Rotation,
    eps: float,
    n_points: int,
    m_iterates: int,
    rng: np.random.Generator,
    estimator: str = "megno_improved",
    transient: int = DEFAULT_TRANSIENT,
    starts: Optional[Tuple[np.ndarray, np.ndarray]] = None,
):
    """Phase-space average of the top exponent of g o f_eps.

    Returns (lambda_g, sigma_g): the mean and sample standard deviation of
    the per-orbit estimates over n_points random starts.
    """
    if starts is None:
        points, dirs = sample_tangent_array(rng, n_points)
    else:
        points, dirs = starts
        n_points = points.shape[0]
    axes = np.tile(g.axis, (n_points, 1))
    angles = np.full(n_points, g.angle)
    values = _orbit_estimates(
        eps, axes, angles, points, dirs, m_iterates, transient, estimator, [m_iterates]
    )[m_iterates]
    lam = float(values.mean())
    sig = float(values.std(ddof=1)) if n_points > 1 else 0.0
    return lam, sig


def lambda_scan(
    eps: float,
    grid: GridSpec,
    n_points: int,
    m_iterates: int,
    rng: np.random.Generator,
    estimator: str = "megno_improved",
    transient: int = DEFAULT_TRANSIENT,
) -> LambdaScanResult:
    """Average exponent over SO(3) by product Simpson in (theta_g, beta_g).

    The same n_points random starts are reused for every grid node (a
    variance-reduction choice: node-to-node comparisons share their sampling
    noise).  Estimates are recorded at M/4, M/2 and M iterates and
    extrapolated with a least-squares a + b/M fit.
    """
    thetas, betas = grid.nodes()
    weights = grid.quadrature_weights()
    n_nodes = grid.n_g + 1

    # one shared set of starts, reused across all grid nodes
    points0, dirs0 = sample_tangent_array(rng, n_points)

    active = np.argwhere(weights != 0.0)
    checkpoints = sorted({max(1, m_iterates // 4), max(1, m_iterates // 2), m_iterates})

    lam = {c: np.zeros((n_nodes, n_nodes)) for c in checkpoints}
    sig = np.zeros((n_nodes, n_nodes))
    msq = np.zeros((n_nodes, n_nodes))

    cells_per_chunk = max(1, _MAX_BATCH // max(n_points, 1))
    for lo in range(0, len(active), cells_per_chunk):
        block = active[lo : lo + cells_per_chunk]
        nb = len(block)
        ax_lat = betas[block[:, 1]]
        cell_axes = np.stack(
            [np.cos(ax_lat), np.zeros(nb), np.sin(ax_lat)], axis=-1
        )
        axes = np.repeat(cell_axes, n_points, axis=0)
        angles = np.repeat(thetas[block[:, 0]], n_points)
        points = np.tile(points0, (nb, 1))
        dirs = np.tile(dirs0, (nb, 1))
        values = _orbit_estimates(
            eps, axes, angles, points, dirs, m_iterates, transient, estimator, checkpoints
        )
        for c in checkpoints:
            per_cell = values[c].reshape(nb, n_points)
            lam[c][block[:, 0], block[:, 1]] = per_cell.mean(axis=1)
        final = values[m_iterates].reshape(nb, n_points)
        sig[block[:, 0], block[:, 1]] = final.std(axis=1, ddof=1) if n_points > 1 else 0.0
        msq[block[:, 0], block[:, 1]] = (final * final).mean(axis=1)

    lambda_by_m = {c: float(np.sum(weights * lam[c])) for c in checkpoints}
    lambda_num = lambda_by_m[m_iterates]

    ms = np.array(checkpoints, dtype=float)
    ys = np.array([lambda_by_m[c] for c in checkpoints])
    design = np.stack([np.ones_like(ms), 1.0 / ms], axis=-1)
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    resid = ys - design @ coef
    extrap_residual = float(np.sqrt(np.mean(resid**2)))

    lam_final = lam[m_iterates]
    h_table = (
        lam_final
        * np.cos(betas)[None, :]
        * (1.0 - np.cos(thetas))[:, None]
        * (np.pi / 2.0)
    )

    result = LambdaScanResult(
        eps=eps,
        thetas=thetas,
        betas=betas,
        weights=weights,
        lambda_cells=lam_final,
        sigma_cells=sig,
        meansq_cells=msq,
        h_table=h_table,
        lambda_num=lambda_num,
        lambda_by_m=lambda_by_m,
        lambda_extrap=float(coef[0]),
        extrap_slope=float(coef[1]),
        extrap_residual=extrap_residual,
        sigma_s2=0.0,
        sigma_total=0.0,
        n_points=n_points,
        m_iterates=m_iterates,
        estimator=estimator,
        transient=transient,
    )
    result.sigma_s2, result.sigma_total = sigma_statistics(result)
    return result


def sigma_statistics(scan: LambdaScanResult) -> Tuple[float, float]:
    """Spread measures of a scan: (sigma_S2, sigma_total).

    sigma_S2 is the Haar-weighted mean of the per-rotation standard
    deviations sigma_g; sigma_total pools every per-orbit determination
    (with the same weights) around the global mean.  For a single-node scan
    the pooled value collapses to sigma_g.
    """
    w = scan.weights
    total_w = float(np.sum(w))
    if total_w <= 0.0:
        return 0.0, 0.0
    wn = w / total_w
    sigma_s2 = float(np.sum(wn * scan.sigma_cells))
    mean = float(np.sum(wn * scan.lambda_cells))
    second = float(np.sum(wn * (scan.meansq_cells - scan.lambda_cells**2 + (scan.lambda_cells - mean) ** 2)))
    n_p = scan.n_points
    bessel = n_p / (n_p - 1.0) if n_p > 1 else 1.0
    sigma_total = float(np.sqrt(max(second * bessel, 0.0)))
    return sigma_s2, sigma_total


def diffused_exponent(
    spec: DiffusedSpec, rng: np.random.Generator, return_group_means: bool = False
):
    """Monte-Carlo delta-diffused exponent R(eps, delta).

    Outer average over m_rotations Haar rotations g; inner process applies
    u_k * g * f_eps with a fresh ball rotation u_k every step, averaged over
    m_points starts and n_iterates steps.  The standard error is computed
    across the per-rotation means (the clustered level of the design).
    """
    n_orbits = spec.m_rotations * spec.m_points
    g_axes, g_angles = sample_haar_array(rng, spec.m_rotations)
    axes = np.repeat(g_axes, spec.m_points, axis=0)
    ca = np.repeat(np.cos(g_angles), spec.m_points)
    sa = np.repeat(np.sin(g_angles), spec.m_points)
    points, dirs = sample_tangent_array(rng, n_orbits)
    total = np.zeros(n_orbits)
    comp = np.zeros(n_orbits)
    for _ in range(spec.n_iterates):
        points, dirs, ls = twist_tangent_step(spec.eps, points, dirs)
        kahan_add(total, comp, ls)
        points = rodrigues_rotate(axes, ca, sa, points)
        dirs = rodrigues_rotate(axes, ca, sa, dirs)
        u_axes, u_angles = sample_ball_array(rng, spec.delta, n_orbits)
        uc, us = np.cos(u_angles), np.sin(u_angles)
        points = rodrigues_rotate(u_axes, uc, us, points)
        dirs = rodrigues_rotate(u_axes, uc, us, dirs)
    runs = total / spec.n_iterates
    group_means = runs.reshape(spec.m_rotations, spec.m_points).mean(axis=1)
    value = float(group_means.mean())
    se = (
        float(group_means.std(ddof=1) / np.sqrt(spec.m_rotations))
        if spec.m_rotations > 1
        else 0.0
    )
    est = ExponentEstimate(
        value=value,
        std_error=se,
        n_iterates=spec.n_iterates,
        n_samples=n_orbits,
        estimator="classical",
    )
    if return_group_means:
        return est, group_means
    return est


def exponential_smallness_fit(eps_values, lambda_values) -> Tuple[float, float]:
    """Fit log(Lambda) ~ a - b / eps by least squares; returns (a, b).

    Reproduces the small-eps trend-fitting step; the coefficients are
    indicative only and nothing downstream depends on their values.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    lam = np.asarray(lambda_values, dtype=float)
    if np.any(lam <= 0.0):
        raise ValueError("lambda values must be positive to fit their logs")
    design = np.stack([np.ones_like(eps_values), -1.0 / eps_values], axis=-1)
    coef, *_ = np.linalg.lstsq(design, np.log(lam), rcond=None)
    return float(coef[0]), float(coef[1])
