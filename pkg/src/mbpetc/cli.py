"""Command-line front end.

Subcommands::

    mbpetc certify  --model pendulum --c 0.258 --sigma 0.35 --grid 200 --out constants.txt
    mbpetc run      --spec experiment.ini --out results/
    mbpetc compare  results/zoh results/euler
    mbpetc accept   [--only A1,A3]

Experiment specs are INI files with a ``[common]`` section and one
``[scenario:NAME]`` section per run; see ``specs/pendulum_fig2.ini``.
Exit codes: 0 success, 1 a check or acceptance criterion failed,
2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance, analysis, certificates, simulator
from .dynamics import LevelSetSpec, get_model
from .errors import ConfigError, MbpetcError
from .simulator import SimConfig

#: Default output root when --out is not given.
OUT_ENV = "MBPETC_OUT"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2


def _default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def cmd_certify(args) -> int:
    model = get_model(args.model, gamma_rate=1.0)  # rate is re-estimated below
    constants = certificates.certify(
        model, LevelSetSpec(args.c), args.sigma, grid_resolution=args.grid
    )
    out = Path(args.out) if args.out else _default_out() / f"{args.model}_constants.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    certificates.save_constants(constants, out)
    ff = certificates.format_float
    print(f"model        {constants.model}")
    print(f"L1           {ff(constants.L1c)}")
    print(f"L2           {ff(constants.L2c)}")
    print(f"mu           {ff(constants.mu_c)}")
    print(f"M_max        {ff(constants.M_max_c)}")
    print(f"gamma_rate   {ff(constants.gamma_rate)}")
    print(f"sigma-MASP   {ff(constants.h_sigma_masp)}  (active term: {constants.active_term})")
    print(f"wrote {out}")
    return EXIT_OK


# --- experiment specs -------------------------------------------------------

_COMMON_KEYS = {
    "model", "constants", "x0", "horizon", "substeps", "h", "nu",
    "decimation", "c", "sigma", "grid", "checks", "unsafe_h_override",
}
_SCENARIO_KEYS = {
    "prediction", "scale", "table", "mode", "substeps", "h", "nu", "decimation",
}


def _parse_spec(path: Path):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not path.is_file():
        raise ConfigError(f"spec file not found: {path}")
    cp.read(path)
    if "common" not in cp:
        raise ConfigError(f"{path}: missing [common] section")
    common = dict(cp["common"])
    unknown = set(common) - _COMMON_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown [common] keys {sorted(unknown)}")
    scenarios = []
    for section in cp.sections():
        if section == "common":
            continue
        if not section.startswith("scenario:"):
            raise ConfigError(f"{path}: unexpected section [{section}]")
        name = section.split(":", 1)[1].strip()
        if not name:
            raise ConfigError(f"{path}: empty scenario name in [{section}]")
        opts = dict(cp[section])
        unknown = set(opts) - _SCENARIO_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)} in [{section}]")
        scenarios.append((name, opts))
    if not scenarios:
        raise ConfigError(f"{path}: no [scenario:NAME] sections")
    return common, scenarios


def _resolve_constants(common: dict, spec_dir: Path):
    rel = common.get("constants", "constants.txt")
    path = Path(rel)
    if not path.is_absolute():
        path = spec_dir / path
    if path.is_file():
        return certificates.load_constants(path)
    # chain a certification run when the manifest is absent
    for key in ("c", "sigma"):
        if key not in common:
            raise ConfigError(
                f"constants manifest {path} not found and [common] lacks {key!r} to certify one"
            )
    model_name = common.get("model", "pendulum")
    model = get_model(model_name, gamma_rate=1.0)
    constants = certificates.certify(
        model,
        LevelSetSpec(float(common["c"])),
        float(common["sigma"]),
        grid_resolution=int(common.get("grid", 200)),
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    certificates.save_constants(constants, path)
    print(f"certified constants written to {path} (active term: {constants.active_term})")
    return constants


def _scenario_config(common: dict, name: str, opts: dict, spec_dir: Path) -> tuple:
    """Build (name, mode, SimConfig, check names) for one scenario."""
    merged = {**{k: v for k, v in common.items() if k in _SCENARIO_KEYS}, **opts}
    if "prediction" not in merged and merged.get("mode", "event") != "periodic":
        raise ConfigError(f"scenario {name!r}: missing 'prediction'")
    params = {}
    if "scale" in merged:
        params["scale"] = float(merged["scale"])
    if "table" in merged:
        table = Path(merged["table"])
        params["table"] = str(table if table.is_absolute() else spec_dir / table)
    x0 = np.array([float(tok) for tok in common.get("x0", "").split()])
    if x0.size == 0:
        raise ConfigError("[common] must set x0")
    config = SimConfig(
        x0=x0,
        model=common.get("model", "pendulum"),
        prediction=merged.get("prediction", "zoh"),
        prediction_params=params,
        h=float(merged["h"]) if "h" in merged else None,
        horizon=float(common.get("horizon", 10.0)),
        nu=int(merged["nu"]) if "nu" in merged else None,
        substeps=int(merged.get("substeps", common.get("substeps", 20))),
        decimation=int(merged["decimation"]) if "decimation" in merged else None,
        unsafe_h_override=common.get("unsafe_h_override", "false").lower() in ("1", "true", "yes"),
    )
    checks = common.get("checks", "convergence nonmonotone").split()
    return name, merged.get("mode", "event"), config, checks


def _run_scenario(task):
    """Worker: simulate one scenario and write its artifacts. Picklable."""
    name, mode, config, checks, constants, out_dir = task
    if mode == "periodic":
        trace = simulator.run_time_triggered(config, constants)
    elif mode == "event":
        trace = simulator.run(config, constants)
    else:
        raise ConfigError(f"scenario {name!r}: mode must be 'event' or 'periodic', got {mode!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    simulator.save_trace(trace, out_dir / name)

    model = get_model(config.model, gamma_rate=constants.gamma_rate)
    reports = []
    for check in checks:
        if check == "convergence":
            decay = analysis.reference_decay(model, constants.sigma, config.x0, trace.t[:2])
            reports.append(analysis.check_convergence_criterion(trace, decay))
        elif check == "nonmonotone":
            reports.extend(analysis.check_nonmonotone_conditions(trace, constants))
        else:
            raise ConfigError(f"unknown check {check!r} (expected convergence/nonmonotone)")
    with open(out_dir / f"{name}.checks.txt", "w") as fh:
        for rep in reports:
            fh.write(str(rep) + "\n")
    return name, trace, reports


def cmd_run(args) -> int:
    spec_path = Path(args.spec)
    common, scenarios = _parse_spec(spec_path)
    constants = _resolve_constants(common, spec_path.parent)
    out_dir = Path(args.out) if args.out else _default_out() / spec_path.stem
    print(f"sampling period h = {constants.h_sigma_masp:.6g} "
          f"(sigma-MASP active term: {constants.active_term})")

    tasks = [
        (*_scenario_config(common, name, opts, spec_path.parent), constants, out_dir)
        for name, opts in scenarios
    ]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_scenario, tasks))
    else:
        results = [_run_scenario(task) for task in tasks]

    failed = False
    traces = []
    for name, trace, reports in results:
        traces.append(trace)
        summary = trace.summary
        print(f"[{name}] {summary['transmissions']} transmissions, "
              f"mean gap {summary['mean_gap']:.4g} s, min gap {summary['min_gap']:.4g} s")
        for rep in reports:
            print(f"[{name}] {rep}")
            failed |= not rep.passed
    if len(traces) > 1:
        report = simulator.compare(traces)
        report.labels = [name for name, _, _ in results]
        table = report.as_table()
        (out_dir / "comparison.txt").write_text(table + "\n")
        print(table)
    print(f"artifacts under {out_dir}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_compare(args) -> int:
    traces = [simulator.load_trace(prefix) for prefix in args.prefixes]
    report = simulator.compare(traces)
    report.labels = [Path(p).name for p in args.prefixes]
    table = report.as_table()
    print(table)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table + "\n")
    return EXIT_OK


def cmd_accept(args) -> int:
    only = None
    if args.only:
        only = {tok.strip().upper() for tok in args.only.split(",")}
        unknown = only - set(acceptance.CRITERIA)
        if unknown:
            raise ConfigError(f"unknown criteria {sorted(unknown)}; valid: {acceptance.CRITERIA}")
    results = acceptance.run_battery(only=only)
    for res in results:
        print(res)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "acceptance.txt").write_text("\n".join(str(r) for r in results) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbpetc",
        description="Certify, simulate and verify model-based event-triggered control loops.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="estimate certified constants and the sampling bound")
    p.add_argument("--model", default="pendulum")
    p.add_argument("--c", type=float, default=0.258, help="operating level-set value")
    p.add_argument("--sigma", type=float, default=0.35, help="decay relaxation in (0, 1)")
    p.add_argument("--grid", type=int, default=200, help="grid resolution per axis")
    p.add_argument("--out", help="constants manifest path")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("run", help="run the scenarios of an experiment spec")
    p.add_argument("--spec", required=True, help="INI experiment spec")
    p.add_argument("--out", help="output directory (default: $MBPETC_OUT/<spec name>)")
    p.add_argument("--jobs", type=int, default=1, help="parallel scenario workers")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="tabulate statistics of saved traces")
    p.add_argument("prefixes", nargs="+", help="trace path prefixes (as passed to save)")
    p.add_argument("--out", help="write the table to this file as well")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("accept", help="run the benchmark reproduction battery")
    p.add_argument("--only", help="comma-separated criteria subset, e.g. A1,A3")
    p.add_argument("--out", help="directory for the acceptance report")
    p.set_defaults(func=cmd_accept)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MbpetcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
