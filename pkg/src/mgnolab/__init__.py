"""mgnolab: multi-scale graph neural operators for PDE surrogate learning.

The package bundles a small float64 autodiff engine, multilevel radius-graph
construction, V/F/W-cycle kernel operators with single-scale baselines,
verified Darcy and Burgers data generators, and a training/ablation harness
with a CLI front end.
"""

from .backend import BACKEND
from .rng import SeededRng
from .tensor import Tape, Tensor, backward, gradcheck

__version__ = "0.1.0"

__all__ = ["BACKEND", "SeededRng", "Tape", "Tensor", "backward", "gradcheck", "__version__"]
