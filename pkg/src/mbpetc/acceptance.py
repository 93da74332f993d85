"""Reproduction battery for the benchmark claims.

Each criterion is a function returning an :class:`AcceptanceResult`; the
battery caches expensive intermediates (certified constants, the 10 s
benchmark traces) so criteria can share them.  The same battery backs the
``accept`` CLI subcommand and the acceptance test module.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import analysis, certificates, simulator
from .dynamics import PENDULUM_X0, LevelSetSpec, pendulum_model
from .integrate import integrate_frozen_input
from .simulator import SimConfig

# Benchmark pins (recorded manifest values for the reproduction runs)
PENDULUM_C = 0.258
PENDULUM_SIGMA = 0.35
PENDULUM_GRID = 200
PENDULUM_EULER_SCALE = 1.05
ACCEPT_HORIZON = 10.0
# h is ~2e-5 s, so one RK4 sub-step is already far below integrator noise;
# 4 sub-steps keep the 3.6e5-sample runs inside the runtime budgets while A8
# verifies convergence under doubling.
ACCEPT_SUBSTEPS = 4

CRITERIA = ("A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8")


@dataclass
class AcceptanceResult:
    criterion: str
    passed: bool
    detail: str
    runtime: float

    def __str__(self):
        state = "PASS" if self.passed else "FAIL"
        return f"{self.criterion}: {state}  [{self.runtime:.1f}s]  {self.detail}"


class AcceptanceBattery:
    def __init__(self):
        self._certify_runtime = None

    @cached_property
    def constants(self):
        start = time.perf_counter()
        model = pendulum_model(gamma_rate=1.0)  # placeholder rate; certify supplies the real one
        constants = certificates.certify(
            model, LevelSetSpec(PENDULUM_C), PENDULUM_SIGMA, PENDULUM_GRID
        )
        self._certify_runtime = time.perf_counter() - start
        return constants

    @cached_property
    def model(self):
        return pendulum_model(gamma_rate=self.constants.gamma_rate)

    def _config(self, prediction, **overrides):
        params = {}
        if prediction == "scaled_euler":
            params["scale"] = PENDULUM_EULER_SCALE
        base = dict(
            x0=PENDULUM_X0,
            prediction=prediction,
            prediction_params=params,
            horizon=ACCEPT_HORIZON,
            substeps=ACCEPT_SUBSTEPS,
        )
        base.update(overrides)
        return SimConfig(**base)

    @cached_property
    def zoh_trace(self):
        start = time.perf_counter()
        trace = simulator.run(self._config("zoh"), self.constants)
        trace.summary["runtime"] = time.perf_counter() - start
        return trace

    @cached_property
    def euler_trace(self):
        start = time.perf_counter()
        trace = simulator.run(self._config("scaled_euler"), self.constants)
        trace.summary["runtime"] = time.perf_counter() - start
        return trace

    @cached_property
    def periodic_trace(self):
        return simulator.run_time_triggered(self._config("zoh"), self.constants)

    # --- criteria -----------------------------------------------------------

    def a1(self) -> AcceptanceResult:
        """sigma-MASP and Lipschitz-term reproduction at grid 200."""
        cc = self.constants
        runtime = self._certify_runtime if self._certify_runtime is not None else 0.0
        h_ok = 0.75 * 2.77e-5 <= cc.h_sigma_masp <= 1.25 * 2.77e-5
        lip = 1.0 / (1.0 + 2.0 * cc.L1c)
        lip_ok = 0.75 / 4.3 <= lip <= 1.25 / 4.3
        time_ok = runtime < 60.0
        detail = (
            f"h = {cc.h_sigma_masp:.3e} (target 2.77e-5 +-25%), "
            f"(1+2L1)^-1 = {lip:.4f} (target 0.2326 +-25%), certify {runtime:.1f}s"
        )
        return AcceptanceResult("A1", h_ok and lip_ok and time_ok, detail, runtime)

    def a2(self) -> AcceptanceResult:
        trace = self.zoh_trace
        mean_gap = trace.summary["mean_gap"]
        runtime = trace.summary["runtime"]
        ok = 0.8 * 0.47 <= mean_gap <= 1.2 * 0.47 and runtime < 120.0
        detail = (
            f"ZOH mean inter-transmission gap {mean_gap:.3f}s (target 0.47 +-20%), "
            f"{trace.summary['transmissions']} transmissions, run {runtime:.1f}s"
        )
        return AcceptanceResult("A2", ok, detail, runtime)

    def a3(self) -> AcceptanceResult:
        zoh, mb = self.zoh_trace, self.euler_trace
        runtime = mb.summary["runtime"]
        min_gap = mb.summary["min_gap"]
        report = simulator.compare([zoh, mb])
        half_zoh, half_mb = (row["v_half_life"] for row in report.rows)
        fewer = mb.summary["transmissions"] < zoh.summary["transmissions"]
        faster = half_mb < half_zoh
        ok = min_gap >= 2.5 and fewer and faster
        detail = (
            f"min gap {min_gap:.2f}s (>= 2.5), transmissions {mb.summary['transmissions']} "
            f"vs ZOH {zoh.summary['transmissions']}, V half-life {half_mb:.3f}s vs {half_zoh:.3f}s"
        )
        return AcceptanceResult("A3", ok, detail, runtime)

    def a4(self) -> AcceptanceResult:
        start = time.perf_counter()
        reports = []
        for trace in (self.zoh_trace, self.euler_trace, self.periodic_trace):
            decay = analysis.reference_decay(self.model, trace.sigma, trace.x0, trace.t[:2])
            reports.append(analysis.check_convergence_criterion(trace, decay))
        ok = all(r.passed for r in reports)
        worst = min(r.worst_margin for r in reports)
        detail = f"convergence criterion on zoh/euler/periodic traces, worst margin {worst:.3e}"
        return AcceptanceResult("A4", ok, detail, time.perf_counter() - start)

    def a5(self) -> AcceptanceResult:
        start = time.perf_counter()
        reports = []
        for trace in (self.zoh_trace, self.euler_trace):
            reports.extend(analysis.check_nonmonotone_conditions(trace, self.constants))
        ok = all(r.passed for r in reports)
        worst = min(r.worst_margin for r in reports)
        detail = f"spacing/within-interval/decrease-rate on zoh+euler traces, worst margin {worst:.3e}"
        return AcceptanceResult("A5", ok, detail, time.perf_counter() - start)

    def a6(self) -> AcceptanceResult:
        start = time.perf_counter()
        cc = self.constants
        model = self.model
        rng = np.random.default_rng(6)
        pts = _sample_inside(model, cc.c, rng, 200)
        x0s, x1s = pts[:100], pts[100:]
        us = model.kappa(x1s)
        h = cc.h_sigma_masp
        lie0 = np.einsum("ij,ij->i", model.v_grad(x0s), model.f(x0s, us))
        violations = 0
        worst = np.inf
        for t in (h / 4, h / 2, h):
            xt = integrate_frozen_input(model, x0s, us, t, 64)
            lie_t = np.einsum("ij,ij->i", model.v_grad(xt), model.f(xt, us))
            bound = certificates.corollary1_deviation_bound(model, cc, x0s, us, t)
            margin = bound - np.abs(lie_t - lie0)
            violations += int(np.sum(margin < 0))
            worst = min(worst, float(margin.min()))
            vb = certificates.v_bound(model, cc, x0s, us, t)
            vmargin = vb - model.v(xt)
            violations += int(np.sum(vmargin < 0))
            worst = min(worst, float(vmargin.min()))
        runtime = time.perf_counter() - start
        ok = violations == 0 and runtime < 30.0
        detail = f"{violations} violations over 100 pairs x 3 horizons, worst margin {worst:.3e}, {runtime:.1f}s"
        return AcceptanceResult("A6", ok, detail, runtime)

    def a7(self) -> AcceptanceResult:
        start = time.perf_counter()
        rate = self.constants.gamma_rate
        sigma = self.constants.sigma
        model = self.model
        rng = np.random.default_rng(7)
        n = 10**5
        v0 = rng.uniform(0.01, 1.0, n)
        s = rng.uniform(0.0, 5.0, n)
        r = rng.uniform(0.0, 5.0, n)
        decayed = v0 * np.exp(-sigma * rate * s)
        c2 = decayed * rng.uniform(0.0, 1.0, n)
        headroom = c2 - r * sigma * rate * c2
        valid = headroom >= 0
        c1 = np.where(valid, headroom * rng.uniform(0.0, 1.0, n), 0.0)
        conclusion = v0 * np.exp(-sigma * rate * (s + r))
        violations = int(np.sum(valid & (c1 > conclusion)))
        # sanity: the checker itself agrees on a subsample
        decay = analysis.ReferenceDecay(sigma, model.gamma, 1.0, np.array([0.0]), np.array([1.0]), rate)
        checked = sum(
            analysis.proposition1_check(
                float(c1[i] / v0[i]), float(c2[i] / v0[i]), float(r[i]), float(s[i]), decay
            )
            for i in np.nonzero(valid)[0][:100]
        )
        runtime = time.perf_counter() - start
        ok = violations == 0 and runtime < 5.0
        detail = f"{violations} conclusion violations over {int(valid.sum())} premise-satisfying tuples ({checked} checker-confirmed), {runtime:.1f}s"
        return AcceptanceResult("A7", ok, detail, runtime)

    def a8(self) -> AcceptanceResult:
        start = time.perf_counter()
        cfg = self._config("scaled_euler", horizon=0.25)
        t1 = simulator.run(cfg, self.constants)
        t2 = simulator.run(self._config("scaled_euler", horizon=0.25), self.constants)
        identical = (
            np.array_equal(t1.x, t2.x)
            and np.array_equal(t1.u, t2.u)
            and _csv_bytes(t1) == _csv_bytes(t2)
        )
        t4 = simulator.run(self._config("scaled_euler", horizon=0.25, substeps=2 * ACCEPT_SUBSTEPS), self.constants)
        rel = np.linalg.norm(t4.x[-1] - t1.x[-1]) / np.linalg.norm(t1.x[-1])
        ok = identical and rel < 1e-6
        detail = f"byte-identical repeat: {identical}, sub-step doubling relative change {rel:.2e}"
        return AcceptanceResult("A8", ok, detail, time.perf_counter() - start)

    def run(self, only=None) -> list:
        results = []
        for cid in CRITERIA:
            if only and cid not in only:
                continue
            results.append(getattr(self, cid.lower())())
        return results


def _sample_inside(model, c, rng, count):
    hw = certificates.level_set_box(model, c)
    pts = np.empty((count, model.state_dim))
    filled = 0
    while filled < count:
        cand = rng.uniform(-hw, hw, (4 * count, model.state_dim))
        cand = cand[model.v(cand) <= c]
        take = min(len(cand), count - filled)
        pts[filled : filled + take] = cand[:take]
        filled += take
    return pts


def _csv_bytes(trace) -> bytes:
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as td:
        prefix = Path(td) / "t"
        simulator.save_trace(trace, prefix)
        return prefix.with_suffix(".csv").read_bytes()


def run_battery(only=None) -> list:
    return AcceptanceBattery().run(only=only)
