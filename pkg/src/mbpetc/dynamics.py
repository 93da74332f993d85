"""Continuous-time plant, feedback law and Lyapunov certificate objects.

A :class:`SystemModel` bundles the vector field ``f``, the stabilizing
feedback ``kappa``, the Lyapunov function ``v`` with its analytic gradient
``v_grad`` and the certified decay function ``gamma``.  All callables follow
numpy broadcasting over leading axes: states have shape ``(..., state_dim)``,
inputs ``(..., input_dim)``, ``v`` returns shape ``(...)``.  Models are
immutable after construction and safe to evaluate concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import MbpetcError


@dataclass(frozen=True)
class SystemModel:
    name: str
    state_dim: int
    input_dim: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kappa: Callable[[np.ndarray], np.ndarray]
    v: Callable[[np.ndarray], np.ndarray]
    v_grad: Callable[[np.ndarray], np.ndarray]
    gamma: Callable[[float], float]
    # Slope of gamma when it is linear (gamma(s) = gamma_rate * s); None for
    # user-supplied nonlinear gamma.
    gamma_rate: Optional[float] = None
    # Optional ellipsoid bounds alpha1*||x||^2 <= v(x) <= alpha2*||x||^2 for
    # quadratic benchmarks (documentation-level metadata, not consumed by the
    # trigger).
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None

    def with_gamma_rate(self, rate: float) -> "SystemModel":
        """Return a copy with a certified linear decay gamma(s) = rate*s."""
        return replace(self, gamma=_linear_gamma(rate), gamma_rate=float(rate))

    def closed_loop(self, x: np.ndarray) -> np.ndarray:
        """Vector field under continuous feedback u = kappa(x)."""
        return self.f(x, self.kappa(x))


@dataclass(frozen=True)
class LevelSetSpec:
    """Sublevel set {x | v(x) <= c} with a small origin exclusion.

    ``margin`` is a Lyapunov level: points with v(x) <= margin are excluded
    from ratio estimates where numerator and denominator both vanish at the
    origin.  Defaults to 1e-6 * c, i.e. a ball of roughly 1e-3 times the
    level-set radius for quadratic v.
    """

    c: float
    margin: Optional[float] = None

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"level c must be positive, got {self.c}")
        if self.margin is None:
            object.__setattr__(self, "margin", 1e-6 * self.c)
        if not 0 < self.margin < self.c:
            raise ValueError(f"margin must satisfy 0 < margin << c, got {self.margin}")


class _LinearGamma:
    """Picklable linear class-K function gamma(s) = rate * s."""

    def __init__(self, rate: float):
        self.rate = float(rate)

    def __call__(self, s):
        return self.rate * s


def _linear_gamma(rate: float) -> _LinearGamma:
    if rate <= 0:
        raise ValueError(f"linear decay rate must be positive, got {rate}")
    return _LinearGamma(rate)


def lie_derivative(model: SystemModel, x: np.ndarray, u: np.ndarray) -> float:
    """Directional derivative of v along f: v_grad(x) . f(x, u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != model.state_dim:
        raise ValueError(f"state has dimension {x.shape[-1]}, expected {model.state_dim}")
    if u.shape[-1] != model.input_dim:
        raise ValueError(f"input has dimension {u.shape[-1]}, expected {model.input_dim}")
    g = model.v_grad(x)
    fx = model.f(x, u)
    out = np.einsum("...i,...i->...", g, fx)
    return float(out) if out.ndim == 0 else out


# --- inverted pendulum benchmark -------------------------------------------

_PEND_P = np.array([[1.278, 0.316], [0.316, 0.404]])

#: Benchmark initial condition used by the reproduction experiments.  Lies
#: inside the certified level set for c = 0.258 (v(x0) = 0.2474).
PENDULUM_X0 = np.array([0.44, 0.0])


class _PendulumField:
    def __init__(self, omega0: float):
        self.omega0 = omega0

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.ndim == 1:
            # scalar fast path; the simulator calls this millions of times
            x1 = x[0]
            return np.array(
                [x[1], (math.sin(x1) - u[0] * math.cos(x1)) * self.omega0]
            )
        return np.stack(
            [x[..., 1], (np.sin(x[..., 0]) - u[..., 0] * np.cos(x[..., 0])) * self.omega0],
            axis=-1,
        )


class _PendulumFeedback:
    def __init__(self):
        pass

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x1 = x[0]
            if abs(x1) >= math.pi / 2:
                raise MbpetcError(
                    f"feedback undefined at |x1| >= pi/2 (got x1 = {x1})"
                )
            return np.array(
                [(31.6 * x1 + 40.4 * x[1] + math.sin(x1)) / math.cos(x1)]
            )
        if np.any(np.abs(x[..., 0]) >= math.pi / 2):
            raise MbpetcError("feedback undefined at |x1| >= pi/2 in batch evaluation")
        return (
            (31.6 * x[..., 0] + 40.4 * x[..., 1] + np.sin(x[..., 0])) / np.cos(x[..., 0])
        )[..., None]


class _QuadraticV:
    def __init__(self, p: np.ndarray):
        self.p = p

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x1, x2 = x[0], x[1]
            p = self.p
            return p[0, 0] * x1 * x1 + 2 * p[0, 1] * x1 * x2 + p[1, 1] * x2 * x2
        return np.einsum("...i,ij,...j->...", x, self.p, x)


class _QuadraticVGrad:
    def __init__(self, p: np.ndarray):
        self.p = p

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            p = self.p
            return np.array(
                [
                    2 * (p[0, 0] * x[0] + p[0, 1] * x[1]),
                    2 * (p[0, 1] * x[0] + p[1, 1] * x[1]),
                ]
            )
        return 2 * np.einsum("ij,...j->...i", self.p, x)


def pendulum_model(omega0: float = 0.1, gamma_rate: Optional[float] = None) -> SystemModel:
    """Inverted pendulum benchmark with quadratic Lyapunov certificate.

    Dynamics: x1' = x2, x2' = (sin x1 - u cos x1) * omega0, with the
    linearizing feedback kappa(x) = (31.6 x1 + 40.4 x2 + sin x1) / cos x1 and
    v(x) = 1.278 x1^2 + 0.632 x1 x2 + 0.404 x2^2.

    If ``gamma_rate`` is None, a linear decay rate is certified numerically
    on the default operating level set (c = 0.258).  Pass a pinned rate from
    a constants manifest to skip re-estimation.
    """
    if omega0 <= 0:
        raise ValueError(f"omega0 must be positive, got {omega0}")
    eigs = np.linalg.eigvalsh(_PEND_P)
    model = SystemModel(
        name="pendulum",
        state_dim=2,
        input_dim=1,
        f=_PendulumField(omega0),
        kappa=_PendulumFeedback(),
        v=_QuadraticV(_PEND_P),
        v_grad=_QuadraticVGrad(_PEND_P),
        gamma=_linear_gamma(1.0),  # placeholder, replaced below
        alpha1=float(eigs[0]),
        alpha2=float(eigs[-1]),
    )
    if gamma_rate is None:
        from .certificates import estimate_gamma_rate

        gamma_rate = estimate_gamma_rate(model, LevelSetSpec(0.258), grid_resolution=200)
    return model.with_gamma_rate(gamma_rate)


MODEL_BUILDERS = {
    "pendulum": pendulum_model,
}


def get_model(name: str, **kwargs) -> SystemModel:
    """Build a registered model by name."""
    try:
        builder = MODEL_BUILDERS[name]
    except KeyError:
        raise KeyError(
            f"unknown model {name!r}; registered: {sorted(MODEL_BUILDERS)}"
        ) from None
    return builder(**kwargs)
