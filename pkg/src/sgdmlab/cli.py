"""Command-line harness: wires a flat INI config (plus flag overrides) to
the experiment functions, runs Monte-Carlo work over a process pool with
counter-based per-run seeding, and writes CSV artifacts plus a
machine-readable ``verdict.json`` into the output directory.

Exit codes: 0 all checks passed, 1 at least one check failed, 2 config error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import concentration as conc
from . import continuous as cont
from . import stats
from .lyapunov import check_descent
from .optimizers import StepSchedule, run_trajectory
from .problems import (
    NoiseModel,
    Objective,
    load_csv_dataset,
    logreg_new,
    quadratic_new,
    synthetic_blobs,
)
from .seeding import seed_split

SUBCOMMANDS = (
    "run", "verify-descent", "verify-expectation", "verify-anytime",
    "ode-compare", "concentration", "smoothness", "constants",
)

_DEFAULTS = {
    "problem": "quadratic",
    "dim": "10",
    "problem_seed": "0",
    "n_samples": "200",
    "algorithm": "sgdm",
    "schedule": "anytime_log2",
    "scale": "1.0",
    "epsilon": "0.5",
    "noise": "gaussian",
    "noise_var": "1.0",
    "steps": "1000",
    "runs": "1",
    "seed": "0",
    "out": "out",
    "workers": "1",
    "beta": "0.05",
    "eta_grid": "0.1,0.05,0.02",
    "p": "1.0",
    "alpha": "1.5",
    "t0": "1.0",
    "t": "4.0",
    "dt": "0.001",
    "lambda_grid": "0.25,0.5,1.0,1.33",
    "omega_grid": "0.5,1.0,2.0,3.0",
    "mgf_samples": "100000",
    "tail_samples": "100000",
    "k_trunc": "1000000",
    "tol": "1e-10",
    "width_tol": "1e-4",
    "sgd_scale": "1.0",
    "c": "0.25",
}


class ConfigError(Exception):
    pass


def load_config(subcommand: str, path: str | None, overrides: dict) -> dict:
    """Merge defaults <- [common] section <- subcommand section <- CLI flags,
    with type validation. Returns a plain dict of resolved values."""
    raw = dict(_DEFAULTS)
    if path is not None:
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ConfigError(f"config file not found or unreadable: {path}")
        for section in ("common", subcommand):
            if cp.has_section(section):
                for key, val in cp.items(section):
                    if key not in _DEFAULTS:
                        raise ConfigError(f"unknown config key '{key}' in [{section}]")
                    raw[key] = val
    for key, val in overrides.items():
        if val is not None:
            raw[key] = str(val)

    cfg: dict = {"subcommand": subcommand}
    try:
        cfg["problem"] = raw["problem"]
        cfg["dim"] = int(raw["dim"])
        cfg["problem_seed"] = int(raw["problem_seed"])
        cfg["n_samples"] = int(raw["n_samples"])
        cfg["algorithm"] = raw["algorithm"]
        cfg["schedule"] = raw["schedule"]
        cfg["scale"] = float(raw["scale"])
        cfg["epsilon"] = float(raw["epsilon"])
        cfg["noise"] = raw["noise"]
        cfg["noise_var"] = float(raw["noise_var"])
        cfg["steps"] = int(raw["steps"])
        cfg["runs"] = int(raw["runs"])
        cfg["seed"] = int(raw["seed"])
        cfg["out"] = raw["out"]
        cfg["workers"] = int(raw["workers"])
        cfg["beta"] = float(raw["beta"])
        cfg["eta_grid"] = [float(v) for v in str(raw["eta_grid"]).split(",") if v]
        cfg["p"] = float(raw["p"])
        cfg["alpha"] = float(raw["alpha"])
        cfg["t0"] = float(raw["t0"])
        cfg["t"] = float(raw["t"])
        cfg["dt"] = float(raw["dt"])
        cfg["lambda_grid"] = [float(v) for v in str(raw["lambda_grid"]).split(",") if v]
        cfg["omega_grid"] = [float(v) for v in str(raw["omega_grid"]).split(",") if v]
        cfg["mgf_samples"] = int(raw["mgf_samples"])
        cfg["tail_samples"] = int(raw["tail_samples"])
        cfg["k_trunc"] = int(raw["k_trunc"])
        cfg["tol"] = float(raw["tol"])
        cfg["width_tol"] = float(raw["width_tol"])
        cfg["sgd_scale"] = float(raw["sgd_scale"])
        cfg["c"] = float(raw["c"])
    except ValueError as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc

    if cfg["problem"] not in ("quadratic", "logreg") and not cfg["problem"].startswith("csv:"):
        raise ConfigError(f"problem must be quadratic, logreg, or csv:PATH (got '{cfg['problem']}')")
    if cfg["algorithm"] not in ("sgdm", "sgd", "acsa"):
        raise ConfigError(f"algorithm must be sgdm, sgd, or acsa (got '{cfg['algorithm']}')")
    if cfg["noise"] not in ("gaussian", "bounded", "none"):
        raise ConfigError(f"noise must be gaussian, bounded, or none (got '{cfg['noise']}')")
    if cfg["steps"] < 1 or cfg["runs"] < 1 or cfg["workers"] < 1:
        raise ConfigError("steps, runs, and workers must be positive")
    if not 0.0 < cfg["beta"] < 1.0:
        raise ConfigError("beta must lie in (0, 1)")
    return cfg


def default_quadratic(dim: int, seed: int, cond: float = 10.0) -> Objective:
    """Seeded SPD quadratic with eigenvalues spread linearly over [1, cond]."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = np.linspace(1.0, cond, dim)
    return quadratic_new(q @ np.diag(eigs) @ q.T)


def build_problem(cfg: dict) -> Objective:
    if cfg["problem"] == "quadratic":
        return default_quadratic(cfg["dim"], cfg["problem_seed"])
    if cfg["problem"] == "logreg":
        X, y = synthetic_blobs(cfg["n_samples"], cfg["dim"], cfg["problem_seed"])
        return logreg_new(X, y)
    X, y = load_csv_dataset(cfg["problem"][4:])
    return logreg_new(X, y)


def build_noise(cfg: dict, dim: int) -> NoiseModel:
    if cfg["noise"] == "gaussian":
        return NoiseModel.gaussian(dim, cfg["noise_var"])
    if cfg["noise"] == "bounded":
        return NoiseModel.bounded_uniform(dim, np.sqrt(cfg["noise_var"]))
    return NoiseModel.noiseless(dim)


def build_schedule(cfg: dict, L: float) -> StepSchedule:
    return StepSchedule(kind=cfg["schedule"], L=L, scale=cfg["scale"],
                        epsilon=cfg["epsilon"])


def _check(name: str, passed: bool, value, threshold) -> dict:
    return {
        "name": name,
        "passed": bool(passed),
        "value": None if value is None else float(value),
        "threshold": None if threshold is None else float(threshold),
    }


def write_verdict(out: Path, subcommand: str, checks: list[dict]) -> bool:
    passed = all(c["passed"] for c in checks)
    verdict = {"subcommand": subcommand, "passed": passed, "checks": checks}
    with open(out / "verdict.json", "w") as fh:
        json.dump(verdict, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"[{status}] {c['name']}: value={c['value']} threshold={c['threshold']}")
    return passed


def _trajectory_task(args):
    """Process-pool unit of work: rebuild the problem and run one seeded
    trajectory, returning its suboptimality trace (and descent residual)."""
    cfg, run_index = args
    obj = build_problem(cfg)
    noise = build_noise(cfg, obj.dim)
    sched = build_schedule(cfg, obj.lipschitz)
    rec = run_trajectory(obj, noise, cfg["algorithm"], sched, cfg["steps"],
                         seed_split(cfg["seed"], run_index),
                         sgd_scale=cfg["sgd_scale"])
    residual = None
    if cfg["algorithm"] == "sgdm" and sched.monotone:
        residual = check_descent(rec, obj.lipschitz, obj.xstar, obj.fstar,
                                 tol=cfg["tol"]).max_residual
    return run_index, rec.f_gap, residual, rec


def _run_pool(cfg: dict) -> list[tuple]:
    tasks = [(cfg, i) for i in range(cfg["runs"])]
    if cfg["workers"] == 1:
        results = [_trajectory_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            results = list(pool.map(_trajectory_task, tasks))
    return sorted(results, key=lambda r: r[0])


def cmd_run(cfg: dict, out: Path) -> list[dict]:
    results = _run_pool(cfg)
    if cfg["runs"] == 1:
        results[0][3].to_csv(out / "trajectory.csv")
    else:
        f_gap = np.column_stack([r[1] for r in results])
        stats.save_ensemble_csv(out / "ensemble.csv", stats.ensemble_summary(f_gap))
    finite = all(np.all(np.isfinite(r[1])) for r in results)
    return [_check("all_finite", finite, None, None),
            _check("final_f_gap_run0", finite, results[0][1][-1], None)]


def cmd_verify_descent(cfg: dict, out: Path) -> list[dict]:
    if cfg["algorithm"] != "sgdm":
        raise ConfigError("verify-descent applies to the sgdm algorithm only")
    results = _run_pool(cfg)
    results[0][3].to_csv(out / "trajectory.csv")
    max_res = max(r[2] for r in results)
    return [_check("max_descent_residual", max_res <= cfg["tol"], max_res, cfg["tol"])]


def cmd_verify_expectation(cfg: dict, out: Path) -> list[dict]:
    obj = build_problem(cfg)
    noise = build_noise(cfg, obj.dim)
    rep = stats.expectation_rate_check(obj, noise, cfg["steps"], cfg["runs"],
                                       cfg["seed"], c=cfg["c"])
    stats.save_ensemble_csv(out / "ensemble.csv", rep["summary"])
    excess = np.max((rep["mean"] - rep["bound"]) / np.maximum(rep["stderr"], 1e-300))
    return [_check("max_excess_stderr_units", rep["passed"], excess, 3.0)]


def cmd_verify_anytime(cfg: dict, out: Path) -> list[dict]:
    obj = build_problem(cfg)
    noise = build_noise(cfg, obj.dim)
    if noise.sigma2 == 0.0:
        raise ConfigError("verify-anytime requires a stochastic noise model")
    sched = build_schedule(cfg, obj.lipschitz)
    rep = conc.anytime_coverage(obj, noise, sched, cfg["steps"], cfg["runs"],
                                cfg["beta"], cfg["seed"], k_trunc=cfg["k_trunc"])
    return [_check("fraction_violating", rep["passed"], rep["fraction_violating"],
                   rep["nominal_level"])]


def cmd_ode_compare(cfg: dict, out: Path) -> list[dict]:
    obj = build_problem(cfg)
    params = cont.OdeParams(p=cfg["p"], alpha=cfg["alpha"], T0=cfg["t0"],
                            T=cfg["t"], dt=cfg["dt"])
    x0 = np.ones(obj.dim)
    sol = cont.ode_integrate(obj, params, x0, np.zeros(obj.dim))
    sol.to_csv(out / "ode.csv", obj)
    rep = cont.ode_rate_check(sol, obj, params)
    checks = [
        _check("energy_monotone", rep["energy_monotone"],
               rep["max_energy_increase"], 1e-8 * rep["energy_T0"]),
        _check("rate_bound_holds", rep["rate_bound_holds"], None, None),
    ]
    rows = cont.l2_limit_estimate(obj, cfg["eta_grid"], cfg["t0"], cfg["t"],
                                  cfg["runs"], cfg["seed"], x0=x0, dt=cfg["dt"])
    table = np.array([[r["eta"], r["mean_sq_dist"], r["stderr"], r["runs"]] for r in rows])
    np.savetxt(out / "l2_table.csv", table, delimiter=",",
               header="eta,mean_sq_dist,stderr,runs", comments="", fmt="%.17g")
    decreasing = True
    for a, b in zip(rows, rows[1:]):
        gate = 2.0 * np.hypot(a["stderr"], b["stderr"])
        if not b["mean_sq_dist"] < a["mean_sq_dist"] + gate:
            decreasing = False
    checks.append(_check("l2_distance_decreasing", decreasing,
                         rows[-1]["mean_sq_dist"], rows[0]["mean_sq_dist"]))
    return checks


def cmd_concentration(cfg: dict, out: Path) -> list[dict]:
    checks = []
    for row in conc.mgf_lemma_check(cfg["lambda_grid"], cfg["mgf_samples"], cfg["seed"]):
        checks.append(_check(f"mgf_lambda_{row['lambda']:g}", row["passed"],
                             row["mean"], row["ceiling"] + 3.0 * row["stderr"]))
    for row in conc.tail_lemma_check(cfg["omega_grid"], 20, cfg["tail_samples"], cfg["seed"]):
        checks.append(_check(f"tail_omega_{row['omega']:g}", row["passed"],
                             row["fraction"], row["level"] + 3.0 * row["stderr"]))
    return checks


def cmd_smoothness(cfg: dict, out: Path) -> list[dict]:
    obj = build_problem(cfg)
    noise = build_noise(cfg, obj.dim)
    sched = build_schedule(cfg, obj.lipschitz)
    rep = stats.smoothness_comparison(obj, noise, cfg["steps"], cfg["runs"],
                                      cfg["seed"], schedule=sched,
                                      sgd_scale=cfg["sgd_scale"])
    if rep.get("skipped"):
        raise ConfigError(f"smoothness comparison skipped: {rep['reason']}")
    return [_check("sgdm_median_below_sgd", rep["passed"],
                   rep["median_var_sgdm"], rep["median_var_sgd"])]


def cmd_constants(cfg: dict, out: Path) -> list[dict]:
    obj = build_problem(cfg)
    noise = build_noise(cfg, obj.dim)
    sched = build_schedule(cfg, obj.lipschitz)
    sigma2 = noise.hp_sigma2
    const = conc.anytime_constants(
        sched, conc.initial_energy(obj, sched, np.ones(obj.dim)),
        obj.lipschitz, sigma2, cfg["k_trunc"])
    br = const.brackets
    return [
        _check("gamma1_width", br.gamma1_width <= cfg["width_tol"],
               br.gamma1_width, cfg["width_tol"]),
        _check("gamma2_width", br.gamma2_width <= cfg["width_tol"],
               br.gamma2_width, cfg["width_tol"]),
        _check("gamma1_upper", True, br.gamma1_upper, None),
        _check("gamma2_upper", True, br.gamma2_upper, None),
        _check("C1", True, const.C1, None),
        _check("C2", True, const.C2, None),
    ]


_HANDLERS = {
    "run": cmd_run,
    "verify-descent": cmd_verify_descent,
    "verify-expectation": cmd_verify_expectation,
    "verify-anytime": cmd_verify_anytime,
    "ode-compare": cmd_ode_compare,
    "concentration": cmd_concentration,
    "smoothness": cmd_smoothness,
    "constants": cmd_constants,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgdmlab",
        description="Numerical verification lab for a momentum-SGD method: "
                    "trajectory runs, Lyapunov descent checks, rate and "
                    "coverage experiments, and ODE/SDE comparisons.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--beta", type=float, default=None)
        sp.add_argument("--steps", type=int, default=None)
        sp.add_argument("--runs", type=int, default=None)
        sp.add_argument("--eta-grid", dest="eta_grid", default=None)
        sp.add_argument("--p", type=float, default=None)
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--t0", type=float, default=None)
        sp.add_argument("--t", type=float, default=None)
        sp.add_argument("--dt", type=float, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors (including unknown subcommands)
        return int(exc.code) if exc.code else 0
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("subcommand", "config")}
    try:
        cfg = load_config(args.subcommand, args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config_resolved.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    try:
        checks = _HANDLERS[args.subcommand](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    passed = write_verdict(out, args.subcommand, checks)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
