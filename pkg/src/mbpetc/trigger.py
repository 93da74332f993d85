"""Sensor-side event-triggered transmission mechanism.

The trigger is evaluated once per sampling instant.  It mirrors the
actuator's prediction, bounds the Lyapunov function one sampling period
ahead under the predicted input, and transmits the true state whenever the
bound would violate the relaxed reference decay, the predicted state leaves
the certified level set, or the maximum inter-transmission interval is hit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .certificates import CertifiedConstants
from .dynamics import SystemModel
from .errors import PredictionDomainError, SimulationAbort
from .prediction import PredictionModel, predict


class TriggerReason(enum.Enum):
    INITIAL = "initial"
    MAX_INTERVAL = "max_interval"
    LEVEL_SET_EXIT = "level_set_exit"
    LYAPUNOV_BOUND = "lyapunov_bound"
    PREDICTION_DOMAIN = "prediction_domain"
    NONE = "none"


@dataclass
class TriggerDecision:
    transmit: bool
    reason: TriggerReason
    u_next: np.ndarray
    lambda_k: Optional[float] = None  # absent at k = 0
    budget: Optional[float] = None

    def __post_init__(self):
        if (self.reason is TriggerReason.NONE) == self.transmit:
            raise ValueError("reason must be NONE exactly when transmit is false")


def default_nu(h: float, sigma: float, gamma_rate: float) -> int:
    """Effectively non-binding maximum inter-transmission sample count."""
    return math.ceil(10.0 / (h * sigma * gamma_rate))


class TriggerState:
    """Persistent sensor-side state of the triggering mechanism.

    Single-owner mutable object: one instance per simulation run.
    """

    def __init__(
        self,
        model: SystemModel,
        constants: CertifiedConstants,
        pm: PredictionModel,
        h: float,
        nu: Optional[int] = None,
    ):
        if nu is None:
            nu = default_nu(h, constants.sigma, constants.gamma_rate)
        if nu < 1:
            raise ValueError(f"nu must be >= 1, got {nu}")
        self.model = model
        self.constants = constants
        self.pm = pm
        self.h = float(h)
        self.nu = int(nu)
        self.i_ref: Optional[int] = None
        self.V_ref: Optional[float] = None
        self.xhat_sens: Optional[np.ndarray] = None
        self._last_k: Optional[int] = None

    def decay_budget(self, k: int) -> float:
        """Right-hand side of the trigger test: the relaxed decay budget."""
        if self.i_ref is None:
            raise RuntimeError("decay_budget called before the initial transmission")
        if k < self.i_ref:
            raise ValueError(f"k = {k} precedes the last transmission index {self.i_ref}")
        steps = k - self.i_ref + 1
        return self.V_ref - steps * self.h * self.constants.sigma * self.model.gamma(self.V_ref)

    def evaluate(self, k: int, x_k: np.ndarray) -> TriggerDecision:
        """Run the mechanism at sampling instant k with the measured state."""
        x_k = np.asarray(x_k, dtype=float)
        if not np.all(np.isfinite(x_k)):
            raise SimulationAbort(f"non-finite state at sample {k}: {x_k}")
        if self._last_k is not None and k != self._last_k + 1:
            raise ValueError(f"samples must be consecutive; got k = {k} after {self._last_k}")
        if self._last_k is None and k != 0:
            raise ValueError(f"first evaluation must be at k = 0, got {k}")
        self._last_k = k

        if k == 0:
            self._reset(0, x_k)
            return TriggerDecision(
                transmit=True,
                reason=TriggerReason.INITIAL,
                u_next=self.model.kappa(x_k),
            )

        domain_exit = False
        try:
            self.xhat_sens = predict(self.pm, self.xhat_sens)
        except PredictionDomainError:
            domain_exit = True
        budget = self.decay_budget(k)

        if domain_exit:
            self._reset(k, x_k)
            return TriggerDecision(
                transmit=True,
                reason=TriggerReason.PREDICTION_DOMAIN,
                u_next=self.model.kappa(x_k),
                budget=budget,
            )

        u_sens = self.model.kappa(self.xhat_sens)
        lam = self._lambda(x_k, u_sens)
        if not math.isfinite(lam):
            raise SimulationAbort(
                f"non-finite Lyapunov increment at sample {k}; state left the certified region"
            )

        reason = TriggerReason.NONE
        if k - self.i_ref > self.nu:
            reason = TriggerReason.MAX_INTERVAL
        elif float(self.model.v(self.xhat_sens)) > self.constants.c:
            reason = TriggerReason.LEVEL_SET_EXIT
        elif float(self.model.v(x_k)) + lam >= budget:
            reason = TriggerReason.LYAPUNOV_BOUND

        if reason is TriggerReason.NONE:
            return TriggerDecision(
                transmit=False,
                reason=reason,
                u_next=u_sens,
                lambda_k=lam,
                budget=budget,
            )
        self._reset(k, x_k)
        return TriggerDecision(
            transmit=True,
            reason=reason,
            u_next=self.model.kappa(x_k),
            lambda_k=lam,
            budget=budget,
        )

    def _reset(self, k: int, x_k: np.ndarray):
        self.i_ref = k
        self.V_ref = float(self.model.v(x_k))
        self.xhat_sens = x_k.copy()

    def _lambda(self, x_k: np.ndarray, u_sens: np.ndarray) -> float:
        """Worst-case Lyapunov increment over the next sampling period.

        Equals v_bound(x_k, u_sens, h) - v(x_k); kept inline because this is
        the per-sample hot path.
        """
        m = self.model
        fx = m.f(x_k, u_sens)
        grad = m.v_grad(x_k)
        lie = float(np.dot(grad, fx))
        nf = math.sqrt(float(np.dot(fx, fx)))
        ng = math.sqrt(float(np.dot(grad, grad)))
        h = self.h
        return h * lie + (2.0 / 3.0) * h**1.5 * self.constants.mu_c * (ng * nf + nf * nf)
