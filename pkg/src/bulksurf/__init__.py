"""Principal eigenvalues of a bulk-surface coupled Laplacian: radial, modal and FEM solvers,
shape-Hessian coefficients at the ball, and symmetrization comparison tools."""

from .ball_radial import BallEigen, robin_eigenvalue, solve_principal_ball
from .shape_hessian import ball_coefficients, hessian_row, regime_scan

__version__ = "0.1.0"

__all__ = [
    "BallEigen",
    "solve_principal_ball",
    "robin_eigenvalue",
    "ball_coefficients",
    "hessian_row",
    "regime_scan",
]
