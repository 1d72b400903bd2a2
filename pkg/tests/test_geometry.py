import numpy as np
import pytest
from scipy import stats

from twistlab.geometry import (
    TAU,
    Rotation,
    SpherePoint,
    TangentState,
    sample_ball,
    sample_ball_array,
    sample_haar,
    sample_haar_array,
    sample_sphere_array,
    solve_kepler,
    sphere_points_from_uniforms,
)


# ------------------------------------------------------------------ kepler


def test_kepler_endpoint_fixed_points():
    assert solve_kepler(0.0) == 0.0
    assert abs(solve_kepler(np.pi) - np.pi) < 1e-12


def test_kepler_reference_value():
    # independent oracle: bisection on theta - sin(theta) - 1 gives 1.934563210752
    theta = solve_kepler(1.0)
    assert abs(theta - 1.9346) < 1e-3
    assert abs(theta - np.sin(theta) - 1.0) < 1e-12


def test_kepler_residual_and_monotonicity_on_grid():
    z = np.linspace(0.0, TAU, 10_000)
    theta = solve_kepler(z)
    assert np.all(theta >= 0.0) and np.all(theta <= TAU)
    assert np.max(np.abs(theta - np.sin(theta) - z)) < 1e-12
    assert np.all(np.diff(theta) >= 0.0)


def test_kepler_is_a_bijection():
    # Near the endpoints the inverse is ill-conditioned: z = theta - sin(theta)
    # carries ~2*pi*ulp of representation error and d(theta)/dz = 1/(1-cos)
    # blows up, so no double-precision solver can beat eps*2*pi/(1-cos(theta))
    # there.  Assert 1e-10 wherever that bound allows it, and the
    # conditioning-limited bound at the endpoint-adjacent nodes.
    theta = np.linspace(0.0, TAU, 10_000)
    back = solve_kepler(theta - np.sin(theta))
    err = np.abs(back - theta)
    conditioning = 4.0 * np.pi * np.finfo(float).eps / np.maximum(1.0 - np.cos(theta), 1e-300)
    well_posed = conditioning < 1e-10
    assert well_posed.sum() > 9_900
    assert np.max(err[well_posed]) < 1e-10
    assert np.all(err <= np.maximum(conditioning, 1e-10))


def test_kepler_domain_errors():
    with pytest.raises(ValueError):
        solve_kepler(-0.1)
    with pytest.raises(ValueError):
        solve_kepler(TAU + 0.1)


# ------------------------------------------------------------------ sphere


def test_sphere_raw_uniform_mapping():
    np.testing.assert_allclose(sphere_points_from_uniforms(0.0, 1.0), [0.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(
        sphere_points_from_uniforms(np.pi, 0.0), [-1.0, 0.0, 0.0], atol=1e-12
    )


def test_sphere_z_marginal_is_uniform():
    rng = np.random.default_rng(101)
    pts = sample_sphere_array(rng, 1_000_000)
    d = stats.kstest(pts[:, 2], stats.uniform(loc=-1.0, scale=2.0).cdf).statistic
    assert d < 0.002


def test_sphere_longitude_is_uniform():
    rng = np.random.default_rng(102)
    pts = sample_sphere_array(rng, 200_000)
    lon = np.arctan2(pts[:, 1], pts[:, 0]) % TAU
    d = stats.kstest(lon, stats.uniform(loc=0.0, scale=TAU).cdf).statistic
    assert d < 0.005


# -------------------------------------------------------------------- haar


def test_haar_zero_angle_gives_identity():
    rot = Rotation.from_axis_angle([0.3, -0.5, 0.81], solve_kepler(0.0))
    np.testing.assert_allclose(rot.matrix, np.eye(3), atol=1e-14)


def test_haar_angle_density_chi2():
    rng = np.random.default_rng(103)
    _, angles = sample_haar_array(rng, 1_000_000)
    edges = np.linspace(0.0, TAU, 65)
    observed, _ = np.histogram(angles, bins=edges)
    cdf = (edges - np.sin(edges)) / TAU
    expected = len(angles) * np.diff(cdf)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    p = stats.chi2.sf(chi2, df=64 - 1)
    assert p > 0.01


def test_haar_left_invariance():
    rng = np.random.default_rng(104)
    axes, angles = sample_haar_array(rng, 100_000)
    h = Rotation.from_axis_angle([0.2, 0.9, -0.4], 1.234)
    # angle of h*g via the trace, batched through Rodrigues matrices
    ca, sa = np.cos(angles), np.sin(angles)
    # trace(h g) assembled column by column from h applied to g's columns
    traces = np.zeros(len(angles))
    basis = np.eye(3)
    for col in range(3):
        e = basis[col]
        dot = axes @ e
        g_col = (
            np.outer(ca, e)
            + np.cross(axes, np.tile(e, (len(angles), 1))) * sa[:, None]
            + axes * (dot * (1.0 - ca))[:, None]
        )
        traces += g_col @ h.matrix[col]
    hg_angles = np.arccos(np.clip((traces - 1.0) / 2.0, -1.0, 1.0))
    folded = np.minimum(angles, TAU - angles)  # canonical angle in [0, pi]
    d = stats.ks_2samp(folded, hg_angles).statistic
    assert d < 0.01


def test_haar_hemisphere_identification():
    rng = np.random.default_rng(105)
    for _ in range(50):
        axis = sample_sphere_array(rng, 1)[0]
        theta = rng.uniform(0.0, TAU)
        a = Rotation.from_axis_angle(axis, theta)
        b = Rotation.from_axis_angle(-axis, TAU - theta)
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)


def test_haar_sample_provenance():
    rng = np.random.default_rng(106)
    s = sample_haar(rng)
    assert abs(s.angle - np.sin(s.angle) - s.z_angle) < 1e-12
    assert -1.0 <= s.z_axis <= 1.0


# -------------------------------------------------------------------- ball


def test_ball_full_radius_matches_haar():
    rng1 = np.random.default_rng(107)
    rng2 = np.random.default_rng(108)
    _, ball_angles = sample_ball_array(rng1, TAU, 100_000)
    _, haar_angles = sample_haar_array(rng2, 100_000)
    assert stats.ks_2samp(ball_angles, haar_angles).pvalue > 0.01


def test_ball_angle_support_and_mean():
    rng = np.random.default_rng(109)
    delta = 0.5
    _, angles = sample_ball_array(rng, delta, 100_000)
    assert np.max(angles) <= delta + 1e-12
    # oracle: fine trapezoid quadrature of the two moments of (1 - cos t) on [0, 0.5]
    t = np.linspace(0.0, delta, 20_001)
    w = 1.0 - np.cos(t)
    expected = np.trapezoid(t * w, t) / np.trapezoid(w, t)
    assert abs(expected - 0.374477) < 1e-5
    assert abs(np.mean(angles) - expected) < 0.005


def test_ball_tiny_radius_is_near_identity():
    rng = np.random.default_rng(110)
    rot = sample_ball(rng, 1e-6)
    assert np.linalg.norm(rot.matrix - np.eye(3), ord=2) < 2e-6


def test_ball_domain_error():
    rng = np.random.default_rng(111)
    with pytest.raises(ValueError):
        sample_ball(rng, 0.0)
    with pytest.raises(ValueError):
        sample_ball(rng, -1.0)


# ---------------------------------------------------------------- rotation


def test_compose_inverse_identity_bulk():
    rng = np.random.default_rng(112)
    axes, angles = sample_haar_array(rng, 10_000)
    worst = 0.0
    for axis, angle in zip(axes, angles):
        g = Rotation.from_axis_angle(axis, angle)
        err = np.max(np.abs((g @ g.inverse()).matrix - np.eye(3)))
        worst = max(worst, err)
    assert worst < 1e-10


def test_compose_is_action_composition():
    rng = np.random.default_rng(113)
    p = sample_sphere_array(rng, 100)
    for _ in range(20):
        g = sample_haar(rng).rotation
        h = sample_haar(rng).rotation
        np.testing.assert_allclose(
            (g @ h).apply(p), g.apply(h.apply(p)), atol=1e-10
        )


def test_rotation_matrix_invariants():
    rng = np.random.default_rng(114)
    for _ in range(200):
        g = sample_haar(rng).rotation
        np.testing.assert_allclose(g.matrix.T @ g.matrix, np.eye(3), atol=1e-10)
        assert abs(np.linalg.det(g.matrix) - 1.0) < 1e-10
        assert abs(np.linalg.norm(g.quaternion) - 1.0) < 1e-12


def test_rotation_axis_angle_round_trip():
    g = Rotation.from_axis_angle([0.0, 0.0, 1.0], 5.5)
    assert abs(g.angle - 5.5) < 1e-15  # construction angle kept, even beyond pi
    h = Rotation.from_matrix(g.matrix)
    assert abs(h.angle - (TAU - 5.5)) < 1e-12  # canonical extraction folds


def test_renormalized_projects_to_so3():
    g = Rotation.from_axis_angle([1.0, 2.0, 2.0], 0.7)
    drifted = Rotation(g.matrix + 1e-8 * np.ones((3, 3)))
    clean = drifted.renormalized()
    np.testing.assert_allclose(clean.matrix.T @ clean.matrix, np.eye(3), atol=1e-14)


# ---------------------------------------------------------------- tangent


def test_rotations_transport_tangent_states_isometrically():
    rng = np.random.default_rng(115)
    for _ in range(1000):
        g = sample_haar(rng).rotation
        pt = SpherePoint(sample_sphere_array(rng, 1)[0])
        state = TangentState.from_psi(pt, rng.uniform(0.0, TAU))
        gp = g.apply(state.point.vec)
        gv = g.apply(state.direction)
        assert abs(np.dot(gp, gv)) < 1e-12
        assert abs(np.linalg.norm(gv) - 1.0) < 1e-12


def test_tangent_state_orthogonalizes_input():
    pt = SpherePoint.from_lonlat(0.3, 0.4)
    skewed = np.array([0.1, 0.9, 0.4]) + 0.5 * pt.vec
    state = TangentState(pt, skewed)
    assert abs(np.dot(state.direction, pt.vec)) < 1e-12
    assert abs(np.linalg.norm(state.direction) - 1.0) < 1e-12


def test_tangent_psi_round_trip():
    pt = SpherePoint.from_lonlat(1.1, -0.7)
    for psi in (0.0, 1.0, np.pi, 4.5):
        state = TangentState.from_psi(pt, psi)
        assert abs((state.psi - psi + np.pi) % TAU - np.pi) < 1e-12


def test_sphere_point_lonlat_accessors():
    pt = SpherePoint.from_lonlat(2.5, 0.9)
    assert abs(pt.longitude - 2.5) < 1e-12
    assert abs(pt.latitude - 0.9) < 1e-12
    assert abs(np.linalg.norm(pt.vec) - 1.0) < 1e-12
