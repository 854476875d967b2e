"""Dataset generation: Gaussian random fields and verified PDE solvers."""

from .burgers import burgers_solve
from .darcy import darcy_solve
from .grf import GrfSpec, sample_grf_1d_periodic, sample_grf_2d, threshold_coefficient

__all__ = [
    "GrfSpec",
    "sample_grf_2d",
    "sample_grf_1d_periodic",
    "threshold_coefficient",
    "darcy_solve",
    "burgers_solve",
]
