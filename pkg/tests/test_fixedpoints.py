import numpy as np
import pytest

from twistlab.fixedpoints import (
    SCAN_POINTS,
    _scan_roots,
    b0_family_max_eigenvalue,
    beta0_double_roots,
    bifurcation_map,
    delta_of,
    double_zero_curves,
    find_fixed_points,
    fixed_point_function,
    fixed_point_location,
    limit_equation,
    limit_equation_db,
    max_eigenvalue,
)
from twistlab.geometry import TAU, Rotation
from twistlab.twistmap import twist_points


def _compose_apply(beta, theta, eps, pts):
    g = Rotation.from_axis_angle([np.cos(beta), 0.0, np.sin(beta)], theta)
    return twist_points(eps, pts) @ g.matrix.T


# ------------------------------------------------------ fixed_point_function


def test_zero_eps_reduces_to_sine():
    beta, theta = np.pi / 4.0, np.pi
    bs = np.linspace(0.0, TAU, 100)
    vals = fixed_point_function(bs, beta, theta, 0.0)
    np.testing.assert_allclose(vals, np.sin(theta / 2.0) * np.sin(beta - bs), atol=1e-12)
    roots = _scan_roots(beta, theta, 0.0, 1024)
    expected = np.sort([beta, beta + np.pi])
    np.testing.assert_allclose(np.sort(roots), expected, atol=1e-10)


def test_asymptotic_root_location_small_eps():
    eps, beta, theta = 0.01, 0.3, 2.0
    gamma = (np.pi / 2.0) * np.cos(beta) * (1.0 + np.sin(beta)) / np.tan(theta / 2.0)
    roots = _scan_roots(beta, theta, eps, 8192)
    near = roots[np.argmin(np.abs(roots - beta))]
    assert abs(near - (beta + gamma * eps)) < 5.0 * eps**2


def test_every_root_is_a_dynamic_fixed_point():
    # the independent oracle for the whole module: reconstruct each root on
    # the sphere and apply g o f_eps directly
    rng = np.random.default_rng(40)
    for _ in range(100):
        beta = rng.uniform(0.0, np.pi / 2.0)
        theta = rng.uniform(0.05, TAU - 0.05)
        eps = rng.uniform(0.05, 4.0)
        records = find_fixed_points(beta, theta, eps, n_scan=2048)
        assert records, "at least two fixed points always exist"
        for r in records:
            assert r.residual < 1e-8
            prod = r.eigenvalues[0] * r.eigenvalues[1]
            assert abs(prod - 1.0) < 1e-8


def test_root_count_parity():
    rng = np.random.default_rng(41)
    for _ in range(10_000):
        beta = rng.uniform(0.0, np.pi / 2.0)
        theta = rng.uniform(0.05, TAU - 0.05)
        eps = rng.uniform(0.02, 4.0)
        roots = _scan_roots(beta, theta, eps, 1024)
        assert len(roots) % 2 == 0


# --------------------------------------------------------- find_fixed_points


def test_generic_small_eps_has_exactly_two():
    records = find_fixed_points(0.3, np.pi, 0.05)
    assert len(records) == 2
    assert all(not r.flagged for r in records)


def test_wedge_has_exactly_four():
    eps = 0.1
    b, m, beta_curve = double_zero_curves(20_001)
    # both branch m-values at beta = 0.35*pi, mapped to angles 2*pi + m*pi*eps
    target = 0.35 * np.pi
    first = b <= np.pi
    m1 = np.interp(target, beta_curve[first][::-1], m[first][::-1])
    m2 = np.interp(target, beta_curve[~first], m[~first])
    th1 = TAU + m1 * np.pi * eps
    th2 = TAU + m2 * np.pi * eps
    inside = 0.5 * (th1 + th2)
    assert len(find_fixed_points(target, inside, eps)) == 4
    assert len(find_fixed_points(target, min(th1, th2) - 0.06, eps)) == 2
    assert len(find_fixed_points(target, np.pi, eps)) == 2


@pytest.mark.parametrize("eps", [0.5, 1.5, 2.5])
def test_beta0_count_bound(eps):
    bound = 2 * (1 + int(eps))
    counts = [
        len(_scan_roots(0.0, theta, eps, SCAN_POINTS))
        for theta in np.linspace(0.01, TAU - 0.01, 257)
    ]
    assert max(counts) == bound


def test_root_continuity_along_eps_homotopy():
    # root count changes only at the predicted double-zero parameters: the
    # two wedge boundaries are crossed once each along this homotopy
    beta, theta = 0.3 * np.pi, TAU - 0.1 * np.pi
    b, m, beta_curve = double_zero_curves(20_001)
    first = b <= np.pi
    m1 = np.interp(beta, beta_curve[first][::-1], m[first][::-1])
    m2 = np.interp(beta, beta_curve[~first], m[~first])
    eps_stars = sorted([(theta - TAU) / (np.pi * m1), (theta - TAU) / (np.pi * m2)])
    eps_grid = np.arange(0.05, 0.12, 1e-3)
    counts = np.array([len(_scan_roots(beta, theta, e, 4096)) for e in eps_grid])
    jumps = np.nonzero(np.diff(counts) != 0)[0]
    assert len(jumps) == 2
    assert counts[0] == 2 and counts[-1] == 2
    assert counts[jumps[0] + 1] == 4
    for j, star in zip(jumps, eps_stars):
        assert abs(eps_grid[j] - star) < 0.01


# -------------------------------------------------------- double-zero curves


def test_triple_point():
    b, m, beta = double_zero_curves(4097)
    k = np.argmin(np.abs(b - np.pi))
    assert abs(m[k] + np.sqrt(2.0)) < 1e-10
    assert abs(beta[k] - np.pi / 4.0) < 1e-10


def test_curve_ranges():
    _, m, beta = double_zero_curves(4097)
    assert np.all(beta >= np.pi / 4.0 - 1e-12)
    assert np.all(beta <= np.pi / 2.0 + 1e-12)
    assert np.all(m <= 0.0)
    assert np.all(m >= -2.0 - 1e-12)


def test_curves_carry_double_zeros_of_the_limit_equation():
    b, m, beta = double_zero_curves(101, b_range=(np.pi / 2.0 + 0.05, 1.5 * np.pi - 0.05))
    for bi, mi, betai in zip(b, m, beta):
        assert abs(limit_equation(bi, mi, betai)) < 1e-6
        assert abs(limit_equation_db(bi, mi, betai)) < 1e-6


def test_curve_range_validation():
    with pytest.raises(ValueError):
        double_zero_curves(100, b_range=(0.0, np.pi))


# -------------------------------------------------------- beta = 0 doubling


def test_beta0_double_roots_appear_at_integer_eps():
    assert beta0_double_roots(0.5) == []
    assert beta0_double_roots(0.99) == []
    assert len(beta0_double_roots(1.01)) >= 1
    assert len(beta0_double_roots(1.5)) >= 1


def test_beta0_double_roots_are_double_roots():
    # oracle: at each reported b, pick theta from the beta=0 equation and
    # check that F and dF/db both vanish
    for eps in (1.2, 1.5, 2.3):
        for b in beta0_double_roots(eps):
            d = delta_of(b, eps)
            theta = 2.0 * np.arctan2(np.cos(b) * np.sin(d), np.sin(b)) % TAU
            f0 = fixed_point_function(b, 0.0, theta, eps)
            h = 1e-7
            df = (
                fixed_point_function(b + h, 0.0, theta, eps)
                - fixed_point_function(b - h, 0.0, theta, eps)
            ) / (2.0 * h)
            assert abs(f0) < 1e-9
            assert abs(df) < 1e-5


def test_beta0_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        beta0_double_roots(0.0)


# ----------------------------------------------------------- max eigenvalue


def test_max_eigenvalue_closed_form():
    assert max_eigenvalue(0.0) == 1.0
    assert abs(max_eigenvalue(2.0) - (np.pi + np.sqrt(1.0 + np.pi**2))) < 1e-12
    assert abs(max_eigenvalue(2.0) - 6.4385) < 1e-4


def test_max_eigenvalue_bounds_random_scan():
    rng = np.random.default_rng(42)
    eps = 2.0
    bound = max_eigenvalue(eps)
    worst = 0.0
    for _ in range(1000):
        beta = rng.uniform(0.0, np.pi / 2.0)
        theta = rng.uniform(0.05, TAU - 0.05)
        for r in find_fixed_points(beta, theta, eps, n_scan=1024):
            worst = max(worst, max(abs(r.eigenvalues[0]), abs(r.eigenvalues[1])))
    assert worst <= bound + 1e-6


def test_max_eigenvalue_attained_on_b0_family():
    for eps in (0.5, 2.0):
        attained = b0_family_max_eigenvalue(eps, n_grid=512)
        assert abs(attained - max_eigenvalue(eps)) < 1e-6


# ---------------------------------------------------------- bifurcation map


@pytest.fixture(scope="module")
def map_eps01():
    return bifurcation_map(0.1, 32)


def test_euler_poincare_on_clean_cells(map_eps01):
    checked = 0
    for row in map_eps01.cells:
        for cell in row:
            if cell.flagged:
                continue
            assert cell.n_e - cell.n_h + cell.n_r == 2
            checked += 1
    assert checked > 500


def test_generic_cell_has_two_fixed_points():
    records = find_fixed_points(0.1, np.pi, 0.1)
    assert len(records) == 2


def _wedge_bounds(beta_values, eps):
    """Map the double-zero curves to rotation angles at the given latitudes."""
    b, m, beta_curve = double_zero_curves(20_001)
    first = b <= np.pi
    m1 = np.interp(beta_values, beta_curve[first][::-1], m[first][::-1])
    m2 = np.interp(beta_values, beta_curve[~first], m[~first])
    th1 = TAU + m1 * np.pi * eps
    th2 = TAU + m2 * np.pi * eps
    return np.minimum(th1, th2), np.maximum(th1, th2)


def test_four_point_region_bounded_by_double_zero_curves(map_eps01):
    # cells more than one cell away from the curve-mapped boundary must agree
    # exactly with the two/four prediction
    eps = map_eps01.eps
    cell_w_theta = map_eps01.thetas[1] - map_eps01.thetas[0]
    cell_w_beta = map_eps01.betas[1] - map_eps01.betas[0]
    checked_inside = 0
    for i, theta in enumerate(map_eps01.thetas):
        for j, beta in enumerate(map_eps01.betas):
            cell = map_eps01.cells[i][j]
            if cell.flagged:
                continue
            if beta < np.pi / 4.0 + cell_w_beta:
                # outside the wedge latitudes (modulo the corner cell)
                if beta < np.pi / 4.0 - cell_w_beta:
                    assert cell.total == 2, (theta, beta)
                continue
            lo, hi = _wedge_bounds(np.array([beta]), eps)
            lo, hi = float(lo[0]), float(hi[0])
            inside = lo < theta < hi
            if min(abs(theta - lo), abs(theta - hi)) < cell_w_theta:
                continue
            assert cell.total == (4 if inside else 2), (theta, beta)
            checked_inside += inside
    # the wedge is a few cells wide at this resolution; the zoomed acceptance
    # map exercises many interior cells
    assert checked_inside >= 2


def test_triple_point_sits_on_region_corner(map_eps01):
    # The two curves meet quadratically at (m, beta) = (-sqrt(2), pi/4); the
    # four-point region's lowest-latitude cell therefore appears where the
    # wedge first becomes one theta-cell wide, within a couple of cells of
    # the corner at this resolution.
    eps = map_eps01.eps
    theta_star = TAU - np.sqrt(2.0) * np.pi * eps
    cell_w_theta = map_eps01.thetas[1] - map_eps01.thetas[0]
    cell_w_beta = map_eps01.betas[1] - map_eps01.betas[0]
    betas = np.linspace(np.pi / 4.0, np.pi / 2.0 - 1e-6, 2000)
    lo, hi = _wedge_bounds(betas, eps)
    resolvable = betas[np.nonzero(hi - lo >= cell_w_theta)[0][0]]
    four_cells = [
        (cell.theta, cell.beta)
        for row in map_eps01.cells
        for cell in row
        if cell.total == 4
    ]
    assert four_cells
    lowest = min(four_cells, key=lambda tb: tb[1])
    assert abs(lowest[1] - resolvable) < 2.0 * cell_w_beta
    lo_c, hi_c = _wedge_bounds(np.array([lowest[1]]), eps)
    assert lo_c[0] - cell_w_theta < lowest[0] < hi_c[0] + cell_w_theta
    # and the wedge midline at the corner latitude passes through theta_star
    assert abs(0.5 * (lo_c[0] + hi_c[0]) - theta_star) < 0.1


def test_boundary_flags_mark_count_changes(map_eps01):
    counts = map_eps01.counts()
    n = counts.shape[0]
    for i in range(n):
        for j in range(n):
            neighbor_diff = False
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n and 0 <= jj < n and counts[ii, jj] != counts[i, j]:
                    neighbor_diff = True
            assert map_eps01.cells[i][j].boundary == neighbor_diff


def test_cell_codes_follow_paper_convention(map_eps01):
    seen = {cell.code for row in map_eps01.cells for cell in row}
    assert "E^2" in seen or "R^1E^1" in seen or "R^2" in seen
    for code in seen:
        assert all(part[0] in "RHE" for part in code.split("^")[:1])
