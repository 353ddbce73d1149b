"""Command line entry point: simulate | fastlimit | meanfield | check."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import _accel
from .dynamics import UndisclosedOperator, probe_assumptions
from .errors import ConfigError, EntropicError
from .fast_reaction import fast_reaction_study, mean_field_study
from .particles import ParticleEnsemble, integrate
from .scenario import ScenarioConfig

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2

log = logging.getLogger("entropic_agents")


def _header(cfg: ScenarioConfig, system) -> dict:
    b = system.box
    return {"config_hash": cfg.hash, "seed": cfg["seed"], "r_eps": b.r_eps, "R_eps": b.R_eps,
            "theta_eps": system.theta, "backend": _accel.backend()}


def _header_lines(h: dict) -> list[str]:
    return [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in h.items()]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _finite(x):
    return x if isinstance(x, (int, bool)) or math.isfinite(x) else str(x)


def cmd_simulate(cfg: ScenarioConfig, out: Path) -> int:
    system = cfg.build_system()
    X, L = cfg.sample_initial(system)
    head = _header(cfg, system)
    try:
        traj = integrate(ParticleEnsemble(system, X, L), cfg["T"], cfg["dt"], cfg["method"],
                         n_samples=cfg["n_samples"])
    except EntropicError as exc:
        _write_json(out / "summary.json", {**head, "error": f"{type(exc).__name__}: {exc}", "passed": False})
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    traj.to_csv(out / "trajectory.csv", _header_lines(head))
    summary = {**head, **traj.summary()}
    _write_json(out / "summary.json", summary)
    ok = summary["audit"]["passed"]
    print(f"simulate: N={X.shape[0]} steps={summary['steps']} audit={'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_fastlimit(cfg: ScenarioConfig, out: Path) -> int:
    system = cfg.build_system()
    if not isinstance(system.operator, UndisclosedOperator):
        raise ConfigError("fastlimit needs an undisclosed kernel (undisclosed, penalized or integral_tanh)")
    X, L = cfg.sample_initial(system)
    fl = cfg["fastlimit"]
    head = _header(cfg, system)
    initial = "minimizer" if fl["initial"] == "minimizer" else "given"
    try:
        fit = fast_reaction_study(system, X, fl["lambdas"], cfg["T"], fl["t_burn"], fl["n_samples"],
                                  initial, L, cfg["method"], cfg["tolerances"]["solver_tol"])
    except EntropicError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    with open(out / "rates.csv", "w", newline="") as fh:
        for line in _header_lines(head):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "gap", "position_gap", "slope"])
        for lam, gap, xg in zip(fit.lambdas, fit.gaps, fit.x_gaps):
            w.writerow([repr(float(lam)), repr(float(gap)), repr(float(xg)), repr(fit.slope)])
    _write_json(out / "rates.json", {**head, "fit": fit.to_dict()})
    print(f"fastlimit: slope={fit.slope:.4f} (expected {fit.expected_slope():.3f}) r2={fit.r2:.4f}")
    return EXIT_OK


def cmd_meanfield(cfg: ScenarioConfig, out: Path) -> int:
    system = cfg.build_system()
    mf = cfg["meanfield"]
    Ns = sorted(mf["Ns"])
    X, L = cfg.sample_initial(system, n=2 * Ns[-1])
    head = _header(cfg, system)
    try:
        table = mean_field_study(system, X, L, Ns, cfg["T"], mf["n_samples"], cfg["method"])
    except EntropicError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    with open(out / "meanfield.csv", "w", newline="") as fh:
        for line in _header_lines(head):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "N2", "sup_w1", "w1_initial", "rho"])
        for row in table.rows():
            w.writerow([row["N"], row["N2"], repr(row["sup_w1"]), repr(row["w1_initial"]), repr(row["rho"])])
    _write_json(out / "meanfield.json", {
        **head, "rows": [{k: _finite(v) for k, v in r.items()} for r in table.rows()],
        "inversions": table.inversions(), "rho_spread": _finite(table.rho_spread()),
        "cauchy_ok": table.cauchy_ok, "stable_ok": table.stable_ok})
    print(f"meanfield: inversions={table.inversions()} rho_spread={table.rho_spread():.3f}")
    return EXIT_OK


def cmd_check(cfg: ScenarioConfig, out: Path) -> int:
    system = cfg.build_system()
    ck = cfg["check"]
    report = probe_assumptions(system, cfg["d"], cfg.rng(), ck["n_probes"], ck["n_atoms"], tuple(ck["radii"]))
    head = _header(cfg, system)
    body = {**head, "M_eps": system.M_eps, "C_T": system.C_T, **report.to_dict()}
    _write_json(out / "report.json", body)
    b = system.box
    print(f"r_eps={b.r_eps!r} R_eps={b.R_eps!r} theta_eps={system.theta!r} M_eps={system.M_eps!r}")
    for c in report.checks:
        print(f"  {'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.4g} (bound {c.bound:.4g})")
    return EXIT_OK if report.passed else EXIT_INVARIANT


COMMANDS = {"simulate": cmd_simulate, "fastlimit": cmd_fastlimit, "meanfield": cmd_meanfield, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="entropic-agents", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="scenario JSON file")
    ap.add_argument("--out", default=None, help="output directory (default: config output.dir or '.')")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=None, help="numba thread count")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _accel.set_threads(args.threads)
    try:
        cfg = ScenarioConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = Path(args.out or cfg["output"]["dir"] or ".")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
