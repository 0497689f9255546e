"""Fast pseudo-differential Hessian approximations for inversion and sampling."""

from .grid import Grid2D, forward_transform, inverse_transform
from .prior import BiharmonicPrior, matern_parameters
from .psido import LinearOperator2D, LowRankSymbol, psido_apply, psido_apply_adjoint

__all__ = [
    "Grid2D", "forward_transform", "inverse_transform",
    "BiharmonicPrior", "matern_parameters",
    "LinearOperator2D", "LowRankSymbol", "psido_apply", "psido_apply_adjoint",
]
__version__ = "0.1.0"
