"""Viscous Burgers' equation on the periodic interval (0, 2π).

    u_t + (u²/2)_x = ν u_xx,  u(x, 0) = u0(x),  periodic in x

Pseudospectral in space: the quadratic term is formed in physical space and
dealiased with the 2/3 rule; diffusion is integrated exactly through an
integrating factor; time stepping is RK4 with an advective CFL bound
dt <= cfl * dx / max|u0| (diffusion poses no step restriction here).

The conservation-form nonlinearity leaves the k=0 mode untouched, so the
spatial mean is conserved to rounding; viscosity makes the L2 norm
non-increasing.
"""

from __future__ import annotations

import math

import numpy as np


class BurgersBlowupError(RuntimeError):
    def __init__(self, step: int, n_steps: int):
        super().__init__(f"solution became non-finite at step {step}/{n_steps}")
        self.step = step


def burgers_solve(u0: np.ndarray, nu: float, t_end: float = 1.0,
                  cfl: float = 0.5) -> np.ndarray:
    u0 = np.asarray(u0, dtype=np.float64)
    n = u0.shape[0]
    if u0.ndim != 1 or n < 4 or (n & (n - 1)) != 0:
        raise ValueError(f"u0 must be 1-d with a power-of-2 length, got shape {u0.shape}")
    if nu <= 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    if not np.isfinite(u0).all():
        raise BurgersBlowupError(step=0, n_steps=0)

    dx = 2.0 * np.pi / n
    dt_bound = cfl * dx / max(float(np.abs(u0).max()), 1e-12)
    n_steps = max(1, math.ceil(t_end / dt_bound))
    dt = t_end / n_steps

    k = np.arange(n // 2 + 1, dtype=np.float64)  # integer wavenumbers on (0, 2π)
    dealias = k <= n / 3.0
    e_full = np.exp(-nu * k ** 2 * dt)
    e_half = np.exp(-nu * k ** 2 * (dt / 2.0))

    def rhs(v_hat: np.ndarray) -> np.ndarray:
        u = np.fft.irfft(v_hat, n=n)
        return (-1j * k) * (np.fft.rfft(0.5 * u * u) * dealias)

    v = np.fft.rfft(u0)
    for step in range(n_steps):
        ka = dt * rhs(v)
        kb = dt * rhs(e_half * (v + 0.5 * ka))
        kc = dt * rhs(e_half * v + 0.5 * kb)
        kd = dt * rhs(e_full * v + e_half * kc)
        v = e_full * v + (e_full * ka + 2.0 * e_half * (kb + kc) + kd) / 6.0
        if not np.isfinite(v).all():
            raise BurgersBlowupError(step=step + 1, n_steps=n_steps)
    return np.fft.irfft(v, n=n)
