"""Chart-based geometry, diffusion-induced connections, and an intrinsic
nonlinear filter update, verified against Monte Carlo oracles."""

__version__ = "0.1.0"

from .charts import (
    Chart,
    ChartDomainError,
    CurveJet,
    NewtonConvergenceError,
    TangentVector,
    covariant_derivative,
    curvature,
    exp_taylor,
    geodesic_integrate,
    log_newton,
    log_taylor,
    make_chart,
    parallel_transport_integrate,
    sectional_curvature,
)

__all__ = [
    "Chart",
    "ChartDomainError",
    "CurveJet",
    "NewtonConvergenceError",
    "TangentVector",
    "covariant_derivative",
    "curvature",
    "exp_taylor",
    "geodesic_integrate",
    "log_newton",
    "log_taylor",
    "make_chart",
    "parallel_transport_integrate",
    "sectional_curvature",
    "__version__",
]
