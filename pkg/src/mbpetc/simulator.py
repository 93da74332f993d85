"""Closed-loop simulation of the sampled-data networked control loop.

Between sampling instants the plant flows under a constant input computed
from the actuator's predicted state; at sampling instants the predicted
state jumps (prediction step, or reset to the measured state when the
trigger transmits).  The true state is continuous across jumps.

Traces are recorded at sub-step resolution, optionally decimated, and are
bit-reproducible: the same configuration always yields the same trace.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .certificates import CertifiedConstants, format_float, level_set_box
from .dynamics import SystemModel, get_model
from .errors import ConfigError, SimulationAbort
from .prediction import (
    PredictionModel,
    REFERENCE_EXACT,
    RUNGE_KUTTA4,
    SCALED_EULER,
    ZOH,
    load_table,
    predict,
)
from .trigger import TriggerDecision, TriggerReason, TriggerState

#: Cap on recorded rows when no explicit decimation factor is given.
AUTO_ROW_CAP = 500_000

_REASON_PERIODIC = "periodic"


@dataclass
class SimConfig:
    x0: np.ndarray
    model: str = "pendulum"
    prediction: str = ZOH
    prediction_params: dict = field(default_factory=dict)
    h: Optional[float] = None  # None: use the certified sigma-MASP
    horizon: float = 10.0
    nu: Optional[int] = None
    substeps: int = 20
    decimation: Optional[int] = None
    seed: int = 0
    unsafe_h_override: bool = False

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.substeps < 1:
            raise ConfigError(f"substeps must be >= 1, got {self.substeps}")
        if self.decimation is not None and self.decimation < 1:
            raise ConfigError(f"decimation must be >= 1, got {self.decimation}")

    def resolve_h(self, constants: CertifiedConstants) -> float:
        h = self.h if self.h is not None else constants.h_sigma_masp
        if h <= 0:
            raise ConfigError(f"sampling period must be positive, got {h}")
        if h > constants.h_sigma_masp and not self.unsafe_h_override:
            raise ConfigError(
                f"sampling period h = {h} exceeds the certified bound "
                f"{constants.h_sigma_masp}; pass unsafe_h_override to force"
            )
        if self.horizon < h:
            raise ConfigError(f"horizon {self.horizon} is shorter than one sampling period {h}")
        return h


@dataclass
class SimTrace:
    model_name: str
    prediction: str
    h: float
    horizon: float
    substeps: int
    decimation: int
    nu: int
    sigma: float
    c: float
    gamma_rate: float
    x0: np.ndarray
    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray  # reference decay S(t - h); nan for t < h
    transmit: np.ndarray
    reason: np.ndarray  # object array of lowercase strings
    lambda_k: np.ndarray
    budget: np.ndarray
    event_times: np.ndarray
    event_ks: np.ndarray
    event_reasons: list
    event_v: np.ndarray  # v at the transmitted state (the new V_ref)
    summary: dict = field(default_factory=dict)

    def gaps(self) -> np.ndarray:
        return np.diff(self.event_times)


def _resolve_prediction(config: SimConfig, model: SystemModel, h: float) -> PredictionModel:
    params = dict(config.prediction_params)
    kind = config.prediction
    if kind == ZOH:
        return PredictionModel(kind=ZOH, step=h)
    if kind == SCALED_EULER:
        return PredictionModel(kind=SCALED_EULER, step=h, model=model, scale=params.get("scale", 1.0))
    if kind == RUNGE_KUTTA4:
        return PredictionModel(kind=RUNGE_KUTTA4, step=h, model=model)
    if kind == REFERENCE_EXACT:
        return PredictionModel(
            kind=REFERENCE_EXACT, step=h, model=model, substeps=params.get("substeps", 100)
        )
    if kind == "lookup":
        table_path = params.get("table")
        if table_path is None:
            raise ConfigError("lookup prediction needs a 'table' path in prediction_params")
        pm = load_table(table_path)
        if abs(pm.step - h) > 1e-12 * max(1.0, h):
            raise ConfigError(f"table step {pm.step} does not match sampling period {h}")
        return pm
    raise ConfigError(f"unknown prediction kind {kind!r}")


def _build_model(config: SimConfig, constants: CertifiedConstants) -> SystemModel:
    if config.model != constants.model:
        raise ConfigError(
            f"config model {config.model!r} does not match certified model {constants.model!r}"
        )
    return get_model(config.model, gamma_rate=constants.gamma_rate)


class _Recorder:
    """Preallocated dense trace arrays with sub-step decimation."""

    def __init__(self, n_rows: int, n: int, m: int):
        self.t = np.empty(n_rows)
        self.x = np.empty((n_rows, n))
        self.xhat = np.empty((n_rows, n))
        self.u = np.empty((n_rows, m))
        self.v = np.empty(n_rows)
        self.transmit = np.zeros(n_rows, dtype=bool)
        self.reason = np.full(n_rows, TriggerReason.NONE.value, dtype=object)
        self.lambda_k = np.full(n_rows, np.nan)
        self.budget = np.full(n_rows, np.nan)
        self.row = 0

    def push(self, t, x, xhat, u, v, transmit=False, reason=TriggerReason.NONE.value,
             lam=np.nan, budget=np.nan):
        i = self.row
        self.t[i] = t
        self.x[i] = x
        self.xhat[i] = xhat
        self.u[i] = u
        self.v[i] = v
        self.transmit[i] = transmit
        self.reason[i] = reason
        self.lambda_k[i] = lam
        self.budget[i] = budget
        self.row = i + 1


def _n_rows(total_substeps: int, decim: int) -> int:
    return (total_substeps - 1) // decim + 2  # recorded sub-steps + final row


def _auto_decimation(config: SimConfig, total_substeps: int) -> int:
    if config.decimation is not None:
        return config.decimation
    return max(1, -(-(total_substeps + 1) // AUTO_ROW_CAP))


def _finish_trace(config, constants, model, h, nu, rec, events, horizon_eff) -> SimTrace:
    times = np.array([e[0] for e in events])
    trace = SimTrace(
        model_name=config.model,
        prediction=config.prediction,
        h=h,
        horizon=horizon_eff,
        substeps=config.substeps,
        decimation=-1,  # set by caller
        nu=nu,
        sigma=constants.sigma,
        c=constants.c,
        gamma_rate=constants.gamma_rate,
        x0=config.x0.copy(),
        t=rec.t[: rec.row],
        x=rec.x[: rec.row],
        xhat=rec.xhat[: rec.row],
        u=rec.u[: rec.row],
        v=rec.v[: rec.row],
        s=np.full(rec.row, np.nan),
        transmit=rec.transmit[: rec.row],
        reason=rec.reason[: rec.row],
        lambda_k=rec.lambda_k[: rec.row],
        budget=rec.budget[: rec.row],
        event_times=times,
        event_ks=np.array([e[1] for e in events], dtype=int),
        event_reasons=[e[2] for e in events],
        event_v=np.array([e[3] for e in events]),
    )
    # reference decay column, shifted by one sampling period
    decay = analysis.reference_decay(model, constants.sigma, config.x0, trace.t)
    mask = trace.t >= h
    trace.s[mask] = decay.value(trace.t[mask] - h)

    gaps = trace.gaps()
    trace.summary = {
        "transmissions": len(times),
        "min_gap": float(gaps.min()) if len(gaps) else horizon_eff,
        "mean_gap": float(gaps.mean()) if len(gaps) else horizon_eff,
        "max_gap": float(gaps.max()) if len(gaps) else horizon_eff,
        "final_v": float(trace.v[-1]),
        "h": h,
        "horizon": horizon_eff,
    }
    return trace


def run(config: SimConfig, constants: CertifiedConstants) -> SimTrace:
    """Simulate the event-triggered loop and record the full trace."""
    model = _build_model(config, constants)
    h = config.resolve_h(constants)
    if float(model.v(config.x0)) > constants.c:
        raise ConfigError(
            f"v(x0) = {float(model.v(config.x0)):.6g} exceeds the certified level {constants.c}"
        )
    pm = _resolve_prediction(config, model, h)
    trig = TriggerState(model, constants, pm, h, nu=config.nu)

    n_steps = int(math.floor(config.horizon / h + 1e-9))
    nsub = config.substeps
    dt = h / nsub
    total = n_steps * nsub
    decim = _auto_decimation(config, total)
    rec = _Recorder(_n_rows(total, decim), model.state_dim, model.input_dim)
    safety_hw = 10.0 * level_set_box(model, constants.c)

    f = model.f
    v = model.v
    events = []
    x = config.x0.astype(float).copy()
    xhat = x.copy()
    for k in range(n_steps):
        decision = trig.evaluate(k, x)
        if decision.transmit:
            xhat = x.copy()
            events.append((k * h, k, decision.reason.value, float(v(x))))
        else:
            xhat = predict(pm, xhat)
        if not np.array_equal(xhat, trig.xhat_sens):
            raise SimulationAbort(
                f"sensor/actuator prediction mirror broken at sample {k}"
            )
        u = decision.u_next
        lam = np.nan if decision.lambda_k is None else decision.lambda_k
        bud = np.nan if decision.budget is None else decision.budget

        s0 = k * nsub
        if s0 % decim == 0:
            rec.push(k * h, x, xhat, u, v(x), decision.transmit, decision.reason.value, lam, bud)
        half = 0.5 * dt
        sixth = dt / 6.0
        for j in range(1, nsub + 1):
            k1 = f(x, u)
            k2 = f(x + half * k1, u)
            k3 = f(x + half * k2, u)
            k4 = f(x + dt * k3, u)
            x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if j < nsub and (s0 + j) % decim == 0:
                rec.push(k * h + j * dt, x, xhat, u, v(x), lam=lam, budget=bud)
        if np.any(np.abs(x) > safety_hw):
            raise SimulationAbort(
                f"state escaped the safety box at t = {(k + 1) * h:.6g}: {x}"
            )
    rec.push(n_steps * h, x, xhat, u, v(x))
    trace = _finish_trace(config, constants, model, h, trig.nu, rec, events, n_steps * h)
    trace.decimation = decim
    return trace


def run_time_triggered(config: SimConfig, constants: CertifiedConstants) -> SimTrace:
    """Baseline with a transmission at every sampling instant."""
    model = _build_model(config, constants)
    h = config.resolve_h(constants)
    if float(model.v(config.x0)) > constants.c:
        raise ConfigError(
            f"v(x0) = {float(model.v(config.x0)):.6g} exceeds the certified level {constants.c}"
        )
    n_steps = int(math.floor(config.horizon / h + 1e-9))
    nsub = config.substeps
    dt = h / nsub
    total = n_steps * nsub
    decim = _auto_decimation(config, total)
    rec = _Recorder(_n_rows(total, decim), model.state_dim, model.input_dim)
    safety_hw = 10.0 * level_set_box(model, constants.c)

    f = model.f
    v = model.v
    kappa = model.kappa
    events = []
    x = config.x0.astype(float).copy()
    for k in range(n_steps):
        xhat = x.copy()
        u = kappa(x)
        reason = TriggerReason.INITIAL.value if k == 0 else _REASON_PERIODIC
        events.append((k * h, k, reason, float(v(x))))
        s0 = k * nsub
        if s0 % decim == 0:
            rec.push(k * h, x, xhat, u, v(x), True, reason)
        half = 0.5 * dt
        sixth = dt / 6.0
        for j in range(1, nsub + 1):
            k1 = f(x, u)
            k2 = f(x + half * k1, u)
            k3 = f(x + half * k2, u)
            k4 = f(x + dt * k3, u)
            x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if j < nsub and (s0 + j) % decim == 0:
                rec.push(k * h + j * dt, x, xhat, u, v(x))
        if np.any(np.abs(x) > safety_hw):
            raise SimulationAbort(
                f"state escaped the safety box at t = {(k + 1) * h:.6g}: {x}"
            )
    rec.push(n_steps * h, x, x.copy(), u, v(x))
    nu = config.nu if config.nu is not None else 1
    trace = _finish_trace(config, constants, model, h, nu, rec, events, n_steps * h)
    trace.decimation = decim
    return trace


# --- comparison -------------------------------------------------------------

@dataclass
class ComparisonReport:
    labels: list
    rows: list  # dicts with transmissions, mean_gap, min_gap, v_half_life, input_energy

    def as_table(self) -> str:
        cols = ["label", "transmissions", "mean_gap", "min_gap", "v_half_life", "input_energy"]
        lines = ["\t".join(cols)]
        for label, row in zip(self.labels, self.rows):
            cells = [label] + [
                str(row[c]) if c == "transmissions" else format_float(row[c])
                for c in cols[1:]
            ]
            lines.append("\t".join(cells))
        return "\n".join(lines)


def _half_life(trace: SimTrace) -> float:
    v0 = trace.v[0]
    below = trace.v <= 0.5 * v0
    if not below.any():
        return float("nan")
    return float(trace.t[int(np.argmax(below))])


def _input_energy(trace: SimTrace) -> float:
    return float(np.trapezoid(np.sum(trace.u**2, axis=1), trace.t))


def compare(traces: list) -> ComparisonReport:
    """Tabulate transmission and convergence statistics of aligned runs."""
    if not traces:
        raise ValueError("need at least one trace to compare")
    ref = traces[0]
    for tr in traces[1:]:
        if tr.model_name != ref.model_name or not np.array_equal(tr.x0, ref.x0) or tr.horizon != ref.horizon:
            raise ValueError("traces must share model, initial state and horizon")
    labels, rows = [], []
    for tr in traces:
        labels.append(tr.prediction)
        gaps = tr.gaps()
        rows.append(
            {
                "transmissions": len(tr.event_times),
                "mean_gap": float(gaps.mean()) if len(gaps) else tr.horizon,
                "min_gap": float(gaps.min()) if len(gaps) else tr.horizon,
                "v_half_life": _half_life(tr),
                "input_energy": _input_energy(tr),
            }
        )
    return ComparisonReport(labels=labels, rows=rows)


# --- trace files ------------------------------------------------------------

def save_trace(trace: SimTrace, prefix) -> None:
    """Write <prefix>.csv (dense rows), <prefix>.events.csv and <prefix>.summary.txt."""
    prefix = Path(prefix)
    n = trace.x.shape[1]
    m = trace.u.shape[1]
    header = (
        ["t"]
        + [f"x{i+1}" for i in range(n)]
        + [f"xhat{i+1}" for i in range(n)]
        + [f"u{i+1}" for i in range(m)]
        + ["V", "S", "transmit", "reason", "lambda", "budget"]
    )
    ff = format_float
    with open(prefix.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(trace.t)):
            row = (
                [ff(trace.t[i])]
                + [ff(val) for val in trace.x[i]]
                + [ff(val) for val in trace.xhat[i]]
                + [ff(val) for val in trace.u[i]]
                + [
                    ff(trace.v[i]),
                    ff(trace.s[i]),
                    str(int(trace.transmit[i])),
                    trace.reason[i],
                    ff(trace.lambda_k[i]),
                    ff(trace.budget[i]),
                ]
            )
            w.writerow(row)
    with open(prefix.parent / (prefix.name + ".events.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "k", "reason", "v_ref"])
        for i in range(len(trace.event_times)):
            w.writerow(
                [ff(trace.event_times[i]), int(trace.event_ks[i]), trace.event_reasons[i], ff(trace.event_v[i])]
            )
    meta = {
        "model": trace.model_name,
        "prediction": trace.prediction,
        "h": ff(trace.h),
        "horizon": ff(trace.horizon),
        "substeps": trace.substeps,
        "decimation": trace.decimation,
        "nu": trace.nu,
        "sigma": ff(trace.sigma),
        "c": ff(trace.c),
        "gamma_rate": ff(trace.gamma_rate),
        "x0": " ".join(ff(val) for val in trace.x0),
    }
    meta.update(
        {
            key: (ff(val) if isinstance(val, float) else val)
            for key, val in trace.summary.items()
        }
    )
    with open(prefix.parent / (prefix.name + ".summary.txt"), "w") as fh:
        for key, val in meta.items():
            fh.write(f"{key} = {val}\n")


def load_trace(prefix) -> SimTrace:
    """Rebuild a trace from the three files written by :func:`save_trace`."""
    prefix = Path(prefix)
    meta = {}
    for line in (prefix.parent / (prefix.name + ".summary.txt")).read_text().splitlines():
        key, _, val = line.partition("=")
        meta[key.strip()] = val.strip()
    data = np.genfromtxt(
        prefix.with_suffix(".csv"), delimiter=",", names=True, dtype=None, encoding="utf-8"
    )
    names = list(data.dtype.names)
    n = sum(1 for nm in names if nm.startswith("x") and not nm.startswith("xhat") and nm[1:].isdigit())
    m = sum(1 for nm in names if nm.startswith("u") and nm[1:].isdigit())
    col = lambda nm: np.atleast_1d(data[nm])
    events = np.genfromtxt(
        prefix.parent / (prefix.name + ".events.csv"),
        delimiter=",",
        names=True,
        dtype=None,
        encoding="utf-8",
    )
    events = np.atleast_1d(events)
    return SimTrace(
        model_name=meta["model"],
        prediction=meta["prediction"],
        h=float(meta["h"]),
        horizon=float(meta["horizon"]),
        substeps=int(meta["substeps"]),
        decimation=int(meta["decimation"]),
        nu=int(meta["nu"]),
        sigma=float(meta["sigma"]),
        c=float(meta["c"]),
        gamma_rate=float(meta["gamma_rate"]),
        x0=np.array([float(val) for val in meta["x0"].split()]),
        t=col("t"),
        x=np.stack([col(f"x{i+1}") for i in range(n)], axis=1),
        xhat=np.stack([col(f"xhat{i+1}") for i in range(n)], axis=1),
        u=np.stack([col(f"u{i+1}") for i in range(m)], axis=1),
        v=col("V"),
        s=col("S"),
        transmit=col("transmit").astype(bool),
        reason=col("reason").astype(object),
        lambda_k=col("lambda"),
        budget=col("budget"),
        event_times=np.atleast_1d(events["t"]).astype(float),
        event_ks=np.atleast_1d(events["k"]).astype(int),
        event_reasons=[str(r) for r in np.atleast_1d(events["reason"])],
        event_v=np.atleast_1d(events["v_ref"]).astype(float),
        summary={key: meta[key] for key in ("transmissions", "min_gap", "mean_gap", "max_gap", "final_v") if key in meta},
    )
