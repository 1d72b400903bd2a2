"""twistlab: random vs. average Lyapunov exponents of sphere twist maps."""

__version__ = "0.1.0"

from .geometry import (
    HaarSample,
    Rotation,
    SpherePoint,
    TangentState,
    sample_ball,
    sample_haar,
    sample_sphere,
    solve_kepler,
)
from .twistmap import CylinderPoint, ShearMatrix, TwistFamily, compose_and_apply, shear_at
from .exponents import (
    ExponentEstimate,
    MegnoAccumulator,
    classical_exponent,
    megno_exponent,
    random_exponent_montecarlo,
    random_exponent_quadrature,
    random_exponent_series,
)
from .experiments import (
    DiffusedSpec,
    GridSpec,
    LambdaScanResult,
    diffused_exponent,
    lambda_for_rotation,
    lambda_scan,
    sigma_statistics,
)
from .fixedpoints import (
    BifurcationCell,
    FixedPointRecord,
    beta0_double_roots,
    bifurcation_map,
    double_zero_curves,
    find_fixed_points,
    fixed_point_function,
    max_eigenvalue,
)
from .linear import (
    CircleDensity,
    Matrix2,
    avila_bochi,
    circle_operator_fixed_point,
    lambda_of_coset,
    matrix_diffused_exponent,
    stationary_densities,
    verify_m_delta_lebesgue,
)

__all__ = [
    "__version__",
    "HaarSample",
    "Rotation",
    "SpherePoint",
    "TangentState",
    "sample_ball",
    "sample_haar",
    "sample_sphere",
    "solve_kepler",
    "CylinderPoint",
    "ShearMatrix",
    "TwistFamily",
    "compose_and_apply",
    "shear_at",
    "ExponentEstimate",
    "MegnoAccumulator",
    "classical_exponent",
    "megno_exponent",
    "random_exponent_montecarlo",
    "random_exponent_quadrature",
    "random_exponent_series",
    "DiffusedSpec",
    "GridSpec",
    "LambdaScanResult",
    "diffused_exponent",
    "lambda_for_rotation",
    "lambda_scan",
    "sigma_statistics",
    "BifurcationCell",
    "FixedPointRecord",
    "beta0_double_roots",
    "bifurcation_map",
    "double_zero_curves",
    "find_fixed_points",
    "fixed_point_function",
    "max_eigenvalue",
    "CircleDensity",
    "Matrix2",
    "avila_bochi",
    "circle_operator_fixed_point",
    "lambda_of_coset",
    "matrix_diffused_exponent",
    "stationary_densities",
    "verify_m_delta_lebesgue",
]
