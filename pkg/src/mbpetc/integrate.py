"""Fixed-step RK4 integration helpers.

All integrators here are deterministic fixed-step classic Runge-Kutta.  The
sampled-data loop has piecewise-constant inputs with known breakpoints, so
adaptive stepping and event detection are unnecessary.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def rk4_step(field: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt: float) -> np.ndarray:
    """One classic RK4 step for an autonomous field; broadcasts over batches."""
    k1 = field(x)
    k2 = field(x + (0.5 * dt) * k1)
    k3 = field(x + (0.5 * dt) * k2)
    k4 = field(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_fixed(
    field: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    duration: float,
    n_steps: int,
) -> np.ndarray:
    """Integrate over ``duration`` with ``n_steps`` RK4 steps; final state only."""
    x = np.asarray(x0, dtype=float)
    dt = duration / n_steps
    for _ in range(n_steps):
        x = rk4_step(field, x, dt)
    return x


def integrate_frozen_input(model, x0, u_star, duration: float, n_steps: int) -> np.ndarray:
    """Flow of x' = f(x, u*) with the input frozen; supports batched x0/u_star."""
    u_star = np.asarray(u_star, dtype=float)

    def field(x):
        return model.f(x, u_star)

    return integrate_fixed(field, x0, duration, n_steps)


def trajectory_frozen_input(model, x0, u_star, duration: float, n_steps: int) -> np.ndarray:
    """Dense flow of x' = f(x, u*): array of n_steps + 1 states incl. x0."""
    u_star = np.asarray(u_star, dtype=float)
    x = np.asarray(x0, dtype=float)
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x
    dt = duration / n_steps

    def field(xx):
        return model.f(xx, u_star)

    for i in range(n_steps):
        x = rk4_step(field, x, dt)
        out[i + 1] = x
    return out
