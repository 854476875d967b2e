"""Gaussian random fields with inverse-Laplacian covariance.

Two samplers:

* 2-d fields on the unit square with covariance (-Δ + τ²I)^{-α} in the
  homogeneous-Neumann cosine basis: field = σ Σ_k √λ_k z_k φ_k with
  λ_k = (π²|k|² + τ²)^{-α} and φ_k the L²-normalized cosine products.
  Used (after thresholding) as the piecewise-constant Darcy coefficient.

* 1-d periodic fields on (0, 2π) by Fourier synthesis with mode variance
  σ²(4π²k² + τ²)^{-α}, used as Burgers initial conditions.

Both truncate at the grid Nyquist and are pure functions of (spec, rng).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import SeededRng


@dataclass(frozen=True)
class GrfSpec:
    alpha: float = 2.0   # spectral decay exponent
    tau: float = 9.0     # inverse length scale
    sigma: float = 1.0   # amplitude
    resolution: int = 64

    def __post_init__(self):
        if self.resolution < 2 or (self.resolution & (self.resolution - 1)) != 0:
            raise ValueError(f"resolution must be a power of 2, got {self.resolution}")

    def validate(self, dim: int) -> None:
        if 2 * self.alpha <= dim:
            raise ValueError(f"alpha={self.alpha} gives a non-summable spectrum "
                             f"in {dim}d (need alpha > dim/2)")


def neumann_variance_2d(spec: GrfSpec, points: np.ndarray) -> np.ndarray:
    """Pointwise variance σ² Σ_k λ_k φ_k(x)² of the truncated expansion."""
    n = spec.resolution
    k = np.arange(n)
    lam = _eigenvalues_2d(spec)
    cx = _cosine_block(points[:, 0], k)  # (P, n) with normalization folded in
    cy = _cosine_block(points[:, 1], k)
    return spec.sigma ** 2 * np.einsum("pi,ij,pj->p", cx ** 2, lam, cy ** 2)


def _eigenvalues_2d(spec: GrfSpec) -> np.ndarray:
    k = np.arange(spec.resolution)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    return (np.pi ** 2 * k2 + spec.tau ** 2) ** (-spec.alpha)


def _cosine_block(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """cos(πkx) columns with the L²(0,1) normalization (1 for k=0, else √2)."""
    block = np.cos(np.pi * np.outer(x, k))
    block[:, 1:] *= np.sqrt(2.0)
    return block


def sample_grf_2d(spec: GrfSpec, rng: SeededRng) -> np.ndarray:
    """One (n, n) field on the vertex grid x_i = i/(n-1) of the unit square."""
    spec.validate(dim=2)
    n = spec.resolution
    z = rng.standard_normal((n, n))
    coeff = spec.sigma * np.sqrt(_eigenvalues_2d(spec)) * z
    x = np.linspace(0.0, 1.0, n)
    c = _cosine_block(x, np.arange(n))
    # field[i, j] = Σ_k coeff[k1, k2] φ_k(x_i, y_j), separable in the two axes
    return c @ coeff @ c.T


def threshold_coefficient(field: np.ndarray, a_hi: float = 12.0,
                          a_lo: float = 3.0) -> np.ndarray:
    """Piecewise-constant coefficient: a_hi where the field is >= 0, else a_lo."""
    return np.where(field >= 0.0, a_hi, a_lo)


def grf_1d_mode_std(spec: GrfSpec, k: np.ndarray) -> np.ndarray:
    return spec.sigma * (4.0 * np.pi ** 2 * k.astype(np.float64) ** 2
                         + spec.tau ** 2) ** (-spec.alpha / 2.0)


def sample_grf_1d_periodic(spec: GrfSpec, rng: SeededRng) -> np.ndarray:
    """One length-n periodic field on x_j = 2πj/n via Fourier synthesis."""
    spec.validate(dim=1)
    n = spec.resolution
    half = n // 2
    std = grf_1d_mode_std(spec, np.arange(half + 1))
    z_ends = rng.standard_normal(2)
    z_re = rng.standard_normal(half - 1)
    z_im = rng.standard_normal(half - 1)
    coeff = np.empty(half + 1, dtype=np.complex128)
    # interior modes split variance between real and imaginary parts;
    # the mean mode and the Nyquist mode are real
    coeff[0] = std[0] * z_ends[0]
    coeff[half] = std[half] * z_ends[1]
    coeff[1:half] = std[1:half] * (z_re + 1j * z_im) / np.sqrt(2.0)
    return np.fft.irfft(coeff * n, n=n)
