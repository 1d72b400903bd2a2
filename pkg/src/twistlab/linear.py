"""The exactly solvable linear case: SO(2)-cosets of 2x2 matrices.

For |det A| = 1 the circle average of log ||A u|| has the closed form
log((s + 1/s)/2) with s the operator norm, and the coset average of
log |e_1(R_phi A)| over the rotation angle equals it.  The delta-diffused
matrix exponent interpolates toward log |e_1(gA)| as delta -> 0.

The stationary densities of the diffused process are realized on the circle
by the Markov operator (L_alpha phi)(z) = integral of k(alpha conj(z) f(y))
phi(y) dy with a width-2*delta top-hat kernel and f the circle map induced
by the projective action of A; averaging the fixed points over alpha
recovers Lebesgue measure, which ``verify_m_delta_lebesgue`` checks on a
grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

TAU = 2.0 * np.pi

__all__ = [
    "Matrix2",
    "CircleDensity",
    "avila_bochi",
    "lambda_of_coset",
    "matrix_diffused_exponent",
    "circle_operator_fixed_point",
    "verify_m_delta_lebesgue",
    "bernoulli_product_exponent",
    "eigenvalue_modulus_max",
    "tanh_sinh",
]


def rot2(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class Matrix2:
    """Real 2x2 matrix with determinant and operator-norm accessors."""

    arr: np.ndarray

    @classmethod
    def of(cls, a) -> "Matrix2":
        a = np.asarray(a, dtype=float)
        if a.shape != (2, 2):
            raise ValueError("Matrix2 expects a 2x2 array")
        return cls(a)

    @property
    def det(self) -> float:
        a = self.arr
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])

    @property
    def operator_norm(self) -> float:
        a = self.arr
        frob = float(np.sum(a * a))
        disc = max(frob * frob - 4.0 * self.det**2, 0.0)
        return float(np.sqrt((frob + np.sqrt(disc)) / 2.0))

    def normalized(self) -> "Matrix2":
        """Scale to |det| = 1 (A -> A / sqrt|det A|)."""
        d = self.det
        if d == 0.0:
            raise ValueError("cannot normalize a singular matrix")
        return Matrix2(self.arr / np.sqrt(abs(d)))


def _as_matrix2(a) -> Matrix2:
    return a if isinstance(a, Matrix2) else Matrix2.of(a)


def eigenvalue_modulus_max(a) -> float:
    """|e_1|: the larger eigenvalue modulus of a 2x2 matrix."""
    m = _as_matrix2(a)
    return float(np.max(np.abs(np.linalg.eigvals(m.arr))))


def avila_bochi(a) -> float:
    """Circle average of log ||A u|| in closed form, |det A| = 1 required.

    Equals log((s + 1/s) / 2) with s the operator norm; raises ValueError
    when the determinant is not unimodular (normalize first).
    """
    m = _as_matrix2(a)
    if abs(abs(m.det) - 1.0) > 1e-12:
        raise ValueError("avila_bochi requires |det A| = 1; normalize first")
    s = m.operator_norm
    return float(np.log((s + 1.0 / s) / 2.0))


def tanh_sinh(f, a: float, b: float, tol: float = 1e-12, max_level: int = 12) -> float:
    """Tanh-sinh quadrature on [a, b]; robust to square-root endpoint behavior.

    Abscissae are positioned by their distance from the nearer endpoint
    (1 - tanh(u) evaluated stably), so integrands may blow up at a or b as
    long as they stay integrable.
    """
    if b <= a:
        return 0.0
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    t_max = 4.0

    def nodes_at(h: float, only_odd: bool) -> float:
        ks = np.arange(1, int(np.floor(t_max / h)) + 1)
        if only_odd:
            ks = ks[ks % 2 == 1]
        t = ks * h
        u = 0.5 * np.pi * np.sinh(t)
        # distance of the node from the nearer endpoint: r * (1 - tanh(u))
        dist = r * 2.0 / (np.expm1(2.0 * u) + 2.0)
        w = 0.5 * np.pi * np.cosh(t) / np.cosh(u) ** 2
        total = 0.0
        for d, weight in zip(dist, w):
            if d == 0.0 or weight == 0.0:
                continue
            total += (f(b - d) + f(a + d)) * weight
        return total

    h = 1.0
    s = f(c) * 0.5 * np.pi + nodes_at(h, only_odd=False)
    prev = s * h * r
    for _ in range(max_level):
        h /= 2.0
        s += nodes_at(h, only_odd=True)
        cur = s * h * r
        if abs(cur - prev) < tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    return prev


def _trace_of_coset(a: np.ndarray):
    # trace(R_phi A) = (a11 + a22) cos(phi) + (a12 - a21) sin(phi)
    p = a[0, 0] + a[1, 1]
    q = a[0, 1] - a[1, 0]
    return p, q


def lambda_of_coset(a, n_phi: int = 2**14) -> float:
    """Coset average of log |e_1(R_phi A)| over the rotation angle.

    The integrand is arccosh(|trace|/2) on the hyperbolic arcs and zero on
    the elliptic ones; arc endpoints (square-root singularities of the
    derivative) are located by bisection on trace^2 - 4 and each smooth arc
    is integrated by tanh-sinh quadrature.  n_phi controls the crossing
    scan resolution.
    """
    m = _as_matrix2(a).normalized()
    if m.det < 0.0:
        raise ValueError("lambda_of_coset expects det A > 0")
    arr = m.arr
    p, q = _trace_of_coset(arr)

    def trace(phi):
        return p * np.cos(phi) + q * np.sin(phi)

    def gap(phi):
        t = trace(phi)
        return t * t - 4.0

    phis = np.linspace(0.0, TAU, n_phi + 1)
    gs = gap(phis)
    # exact zeros at scan nodes are genuine crossings too (parabolic points
    # of the coset can land on the grid, e.g. unit shears)
    crossings: List[float] = [float(p) for p in phis[:-1][gs[:-1] == 0.0]]
    idx = np.nonzero(gs[:-1] * gs[1:] < 0.0)[0]
    for i in idx:
        lo, hi = phis[i], phis[i + 1]
        flo = gs[i]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = gap(mid)
            if flo * fm <= 0.0:
                hi = mid
            else:
                lo, flo = mid, fm
        crossings.append(0.5 * (lo + hi))

    def integrand(phi: float) -> float:
        t = abs(trace(phi))
        if t <= 2.0:
            return 0.0
        return float(np.arccosh(t / 2.0))

    if not crossings:
        # either entirely elliptic (Lambda = 0) or a touching case
        return 0.0

    # integrate over the maximal hyperbolic arcs between consecutive crossings
    bounds = sorted(crossings)
    bounds.append(bounds[0] + TAU)
    total = 0.0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            total += tanh_sinh(integrand, lo, hi, tol=1e-13)
    return float(total / TAU)


def matrix_diffused_exponent(
    a,
    g_angle: float,
    delta: float,
    n_iterates: int,
    m_samples: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo top exponent of products u_k R_g A, u_k uniform (-delta, delta).

    A is normalized to |det| = 1 first.  The rotations carry no stretch, so
    only log ||A v|| accumulates.
    """
    if delta <= 0.0:
        raise ValueError("delta must be > 0")
    m = _as_matrix2(a).normalized()
    arr = m.arr
    psi = rng.uniform(0.0, TAU, m_samples)
    v = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
    total = np.zeros(m_samples)
    for _ in range(n_iterates):
        w = v @ arr.T
        r = np.sqrt(np.einsum("ij,ij->i", w, w))
        total += np.log(r)
        w /= r[:, None]
        ang = g_angle + rng.uniform(-delta, delta, m_samples)
        ca, sa = np.cos(ang), np.sin(ang)
        v = np.stack([ca * w[:, 0] - sa * w[:, 1], sa * w[:, 0] + ca * w[:, 1]], axis=-1)
    return float(total.mean() / n_iterates)


def bernoulli_product_exponent(
    mats: Sequence[np.ndarray],
    n_iterates: int,
    m_samples: int,
    rng: np.random.Generator,
):
    """Top exponent of i.i.d. uniform choices from ``mats`` (2x2 each).

    Returns (value, std_error) over the m_samples independent runs.
    """
    stack = np.stack([np.asarray(m, dtype=float) for m in mats])
    psi = rng.uniform(0.0, TAU, m_samples)
    v = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
    total = np.zeros(m_samples)
    for _ in range(n_iterates):
        choice = rng.integers(0, len(mats), m_samples)
        sel = stack[choice]
        w = np.einsum("nij,nj->ni", sel, v)
        r = np.sqrt(np.einsum("ij,ij->i", w, w))
        total += np.log(r)
        v = w / r[:, None]
    runs = total / n_iterates
    se = float(runs.std(ddof=1) / np.sqrt(m_samples)) if m_samples > 1 else 0.0
    return float(runs.mean()), se


@dataclass(frozen=True, eq=False)
class CircleDensity:
    """Probability density w.r.t. normalized Lebesgue on an n-cell grid.

    ``values[j]`` is the density on the cell centered at (j + 1/2) * 2*pi/n;
    the mean value is 1 within 1e-8.
    """

    values: np.ndarray

    def __post_init__(self):
        if abs(float(np.mean(self.values)) - 1.0) > 1e-8:
            raise ValueError("density mean must equal 1")

    @property
    def n(self) -> int:
        return len(self.values)

    def angles(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * (TAU / self.n)


def _circle_map_lift(a: np.ndarray, n_z: int) -> np.ndarray:
    """Monotone lift of the circle map induced by A, at the n_z + 1 nodes.

    The projective action on direction angles is doubled onto the circle;
    det A > 0 makes the lift strictly increasing with winding number one.
    """
    y = np.arange(n_z + 1) * (TAU / n_z)
    phi = y / 2.0
    wx = a[0, 0] * np.cos(phi) + a[0, 1] * np.sin(phi)
    wy = a[1, 0] * np.cos(phi) + a[1, 1] * np.sin(phi)
    psi = 2.0 * np.arctan2(wy, wx)
    psi = np.unwrap(psi)
    psi -= TAU * np.floor(psi[0] / TAU)
    if np.any(np.diff(psi) <= 0.0):
        raise ArithmeticError("circle-map lift is not strictly increasing")
    if abs((psi[-1] - psi[0]) - TAU) > 1e-9:
        raise ArithmeticError("circle-map lift does not have winding number 1")
    return psi


class _TopHatOperator:
    """Discretized L_alpha for a batch of alpha values on a shared grid.

    Cell densities are treated as piecewise constant; the operator value at
    a cell center is the exact integral of that density over the preimage
    interval psi^-1([x - alpha - delta, x - alpha + delta]) divided by
    2*delta (midpoint collocation, O(h^2)).  Each application renormalizes
    the mean so the discrete operator is exactly Markov.
    """

    _PERIODS = (-2, -1, 0, 1, 2)

    def __init__(self, a: np.ndarray, alphas: np.ndarray, delta: float, n_z: int):
        if delta <= 0.0:
            raise ValueError("delta must be > 0")
        self.n_z = n_z
        self.n_alpha = len(alphas)
        self.delta = delta
        h = TAU / n_z
        psi = _circle_map_lift(a, n_z)

        y_nodes = np.arange(n_z + 1) * h
        y_ext = np.concatenate([y_nodes[:-1] + k * TAU for k in self._PERIODS] + [[y_nodes[-1] + self._PERIODS[-1] * TAU]])
        psi_ext = np.concatenate([psi[:-1] + k * TAU for k in self._PERIODS] + [[psi[-1] + self._PERIODS[-1] * TAU]])

        centers = (np.arange(n_z) + 0.5) * h
        lo_idx = np.empty((self.n_alpha, n_z), dtype=np.int64)
        lo_frac = np.empty((self.n_alpha, n_z))
        hi_idx = np.empty((self.n_alpha, n_z), dtype=np.int64)
        hi_frac = np.empty((self.n_alpha, n_z))
        n_ext_cells = len(y_ext) - 1
        for i, alpha in enumerate(alphas):
            for target, idx, frac in (
                (centers - alpha - delta, lo_idx, lo_frac),
                (centers - alpha + delta, hi_idx, hi_frac),
            ):
                y_star = np.interp(target, psi_ext, y_ext)
                pos = (y_star - y_ext[0]) / h
                k = np.clip(np.floor(pos).astype(np.int64), 0, n_ext_cells - 1)
                idx[i] = k
                frac[i] = pos - k
        self._lo_idx, self._lo_frac = lo_idx, lo_frac
        self._hi_idx, self._hi_frac = hi_idx, hi_frac
        self._h = h

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """One operator step for the (n_alpha, n_z) density batch."""
        tiled = np.concatenate([phi] * len(self._PERIODS), axis=1)
        nodes = np.zeros((phi.shape[0], tiled.shape[1] + 1))
        np.cumsum(tiled * self._h, axis=1, out=nodes[:, 1:])
        lo = np.take_along_axis(nodes, self._lo_idx, axis=1) + self._lo_frac * (
            np.take_along_axis(nodes, self._lo_idx + 1, axis=1)
            - np.take_along_axis(nodes, self._lo_idx, axis=1)
        )
        hi = np.take_along_axis(nodes, self._hi_idx, axis=1) + self._hi_frac * (
            np.take_along_axis(nodes, self._hi_idx + 1, axis=1)
            - np.take_along_axis(nodes, self._hi_idx, axis=1)
        )
        out = (hi - lo) / (2.0 * self.delta)
        out /= out.mean(axis=1, keepdims=True)
        return out


def _fixed_point_batch(
    a: np.ndarray,
    alphas: np.ndarray,
    delta: float,
    n_z: int,
    tol: float = 1e-10,
    max_iter: int = 100000,
    phi0: Optional[np.ndarray] = None,
) -> np.ndarray:
    op = _TopHatOperator(a, alphas, delta, n_z)
    phi = np.ones((len(alphas), n_z)) if phi0 is None else phi0.copy()
    phi /= phi.mean(axis=1, keepdims=True)
    diff = prev_diff = float("nan")
    for _ in range(max_iter):
        nxt = op.apply(phi)
        prev_diff = diff
        diff = float(np.max(np.mean(np.abs(nxt - phi), axis=1)))
        phi = nxt
        if diff < tol:
            return phi
    raise ArithmeticError(
        f"power iteration did not converge after {max_iter} steps "
        f"(last L1 change {diff:.3e}, contraction estimate {diff / prev_diff:.6f})"
    )


def circle_operator_fixed_point(
    a,
    alpha: float,
    delta: float,
    n_z: int,
    tol: float = 1e-10,
    max_iter: int = 100000,
    phi0: Optional[np.ndarray] = None,
) -> CircleDensity:
    """Stationary density of the discretized operator L_{alpha, f}.

    ``alpha`` is the rotation offset as an angle; the iteration starts from
    the flat density (or phi0) and stops when successive iterates differ by
    less than tol in L^1.  Non-convergence raises ArithmeticError with a
    contraction diagnostic.
    """
    m = _as_matrix2(a).normalized()
    start = None if phi0 is None else np.asarray(phi0, dtype=float)[None, :]
    phi = _fixed_point_batch(
        m.arr, np.array([alpha], dtype=float), delta, n_z, tol=tol, max_iter=max_iter, phi0=start
    )
    return CircleDensity(phi[0])


def stationary_densities(a, delta: float, n_alpha: int, n_z: int):
    """Fixed densities phi_alpha for n_alpha equispaced alphas.

    Returns (alphas, phi) with phi of shape (n_alpha, n_z); row k is the
    stationary density of L_{alpha_k, f} on the n_z cell grid.
    """
    m = _as_matrix2(a).normalized()
    alphas = np.arange(n_alpha) * (TAU / n_alpha)
    phi = _fixed_point_batch(m.arr, alphas, delta, n_z)
    return alphas, phi


def verify_m_delta_lebesgue(a, delta: float, n_alpha: int, n_z: int) -> float:
    """Max deviation of the alpha-averaged stationary density from 1.

    Solves the fixed point for n_alpha equispaced alphas, averages the
    densities pointwise, and returns max_z |average - 1|.  The continuum
    identity says the average is exactly Lebesgue; the returned number is
    pure discretization error and shrinks under grid refinement.
    """
    _, phi = stationary_densities(a, delta, n_alpha, n_z)
    avg = phi.mean(axis=0)
    return float(np.max(np.abs(avg - 1.0)))
