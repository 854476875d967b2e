"""Dataset assembly: sample fields, run the solvers, write containers.

Each sample draws from its own stream keyed by the global sample index
(train samples come first, then test), so splits are disjoint by
construction and regeneration from the same meta is bit-exact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .. import dataio
from ..rng import SeededRng
from .burgers import burgers_solve
from .darcy import darcy_solve, grid_gradients
from .grf import GrfSpec, sample_grf_1d_periodic, sample_grf_2d, threshold_coefficient

PDE_KINDS = ("darcy", "burgers")


@dataclass(frozen=True)
class DatasetMeta:
    pde: str
    n_train: int = 100
    n_test: int = 100
    grid: int = 64
    seed: int = 0
    alpha: float = 2.0
    tau: float = 9.0
    sigma: float = 1.0
    f_const: float = 1.0        # Darcy forcing
    a_hi: float = 12.0          # Darcy coefficient levels
    a_lo: float = 3.0
    grad_clamp: float | None = 9.0  # bound on the Darcy coefficient gradients
    viscosity: float = 0.1      # Burgers
    t_end: float = 1.0

    def validate(self) -> None:
        if self.pde not in PDE_KINDS:
            raise ValueError(f"pde must be one of {PDE_KINDS}, got {self.pde!r}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("need at least one train and one test sample")

    def grf_spec(self) -> GrfSpec:
        return GrfSpec(alpha=self.alpha, tau=self.tau, sigma=self.sigma,
                       resolution=self.grid)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "DatasetMeta":
        return DatasetMeta(**d)


def default_meta(pde: str, **overrides) -> DatasetMeta:
    """Desk-scale defaults: Darcy on a 64² grid, Burgers on 1024 points."""
    if pde == "darcy":
        base = dict(pde="darcy", grid=64, tau=9.0, sigma=1.0)
    elif pde == "burgers":
        base = dict(pde="burgers", grid=1024, tau=5.0, sigma=25.0)
    else:
        raise ValueError(f"pde must be one of {PDE_KINDS}, got {pde!r}")
    base.update(overrides)
    return DatasetMeta(**base)


def generate_sample(meta: DatasetMeta, index: int) -> dict[str, np.ndarray]:
    """Fields of one sample; index is global across the train/test split."""
    rng = SeededRng(meta.seed, (1, index))
    spec = meta.grf_spec()
    if meta.pde == "darcy":
        a = threshold_coefficient(sample_grf_2d(spec, rng), meta.a_hi, meta.a_lo)
        gx, gy = grid_gradients(a, clamp=meta.grad_clamp)
        u = darcy_solve(a, meta.f_const)
        return {"a": a, "grad_a": np.stack([gx, gy]), "u": u}
    u0 = sample_grf_1d_periodic(spec, rng)
    u1 = burgers_solve(u0, meta.viscosity, meta.t_end)
    return {"u0": u0, "u1": u1}


def generate_dataset(meta: DatasetMeta, out_dir) -> dataio.DatasetContainer:
    """Generate n_train + n_test samples and write the container."""
    meta.validate()
    n_total = meta.n_train + meta.n_test
    stacked: dict[str, list[np.ndarray]] = {}
    for index in range(n_total):
        try:
            sample = generate_sample(meta, index)
        except Exception as exc:
            raise RuntimeError(f"sample {index} failed: {exc}") from exc
        for name, arr in sample.items():
            stacked.setdefault(name, []).append(arr)
    fields = {name: np.stack(arrs) for name, arrs in stacked.items()}
    dataio.write_container(out_dir, meta.to_dict(), fields)
    return dataio.read_container(out_dir)
