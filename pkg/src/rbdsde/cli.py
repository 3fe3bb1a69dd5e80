"""Command-line experiment runner.

Subcommands ``basis | solve | converge | oracle | verify | simulate`` read one
JSON config and write deterministic JSON/CSV files to ``--out``.  Exit codes:
0 success, 1 a check failed, 2 configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .drivers import Driver, DriverPair
from .errors import (
    AssumptionViolation,
    ConfigError,
    ConsistencyError,
    DivergenceError,
    InvalidInputError,
    NumericalError,
    StepSizeError,
)
from .levy import build_tree, empirical_bracket, simulate_levy_paths, teugels_basis
from .reflection import (
    barrier_violation,
    penalization_sweep,
    skorokhod_residual,
    snell_oracle,
    sup_node_diff,
)
from .regulated import RegulatedPath
from .solver import expected_path, extract_K, solve_penalized
from .verify import (
    beta_norms,
    comparison_check,
    comparison_instance,
    doleans_gamma,
    energy_identity_residual,
    representation_residual,
)

__all__ = ["main", "build_parser"]

log = logging.getLogger("rbdsde")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _oracle_applicable(drivers: DriverPair) -> bool:
    return not drivers.f.depends_on_z and drivers.g_exogenous


def _summary(sol, tree, drivers, barrier, beta) -> dict:
    K = expected_path(tree, [sol.K_increment(k) for k in range(tree.N)])
    return {
        "n": sol.n,
        "Y0_mean": float(np.mean(sol.Y0())),
        "K_T_mean": float(np.mean(K[:, -1])),
        "violation": barrier_violation(sol, barrier),
        "skorokhod": skorokhod_residual(sol, barrier, tree),
        "right_jump_steps": list(sol.jumps.times),
        "norms": beta_norms(sol, barrier, drivers, tree, beta).as_dict(),
    }


def _path_rows(sol, tree):
    P = tree.n_scenarios
    rows = []
    K = expected_path(tree, [sol.K_increment(k) for k in range(tree.N)]).mean(axis=0)
    for k, t in enumerate(tree.times):
        ey = float(np.mean(tree.expectation(np.broadcast_to(sol.Y.v[k], (P, tree.n_nodes(k))), k)))
        eyp = float(np.mean(tree.expectation(np.broadcast_to(sol.Y.v_plus[k], (P, tree.n_nodes(k))), k)))
        rows.append((float(t), ey, eyp, float(K[k])))
    return rows


def cmd_basis(cfg: ExperimentConfig, out: Path, args) -> int:
    basis = teugels_basis(cfg.measure())
    gram = basis.gram()
    payload = {
        "atoms": [list(a) for a in cfg.atoms],
        "alpha": basis.alpha,
        "moments": basis.moments,
        "dim": basis.dim,
        "gram_error": float(np.abs(gram - np.eye(basis.dim)).max()),
    }
    _write_json(out / "basis.json", payload)
    print(json.dumps(_clean(payload), sort_keys=True))
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig, out: Path, args) -> int:
    tree = cfg.tree()
    drivers = cfg.drivers()
    barrier = cfg.barrier_path(tree)
    n = args.n if args.n is not None else cfg.schedule[-1]
    sol = solve_penalized(tree, drivers, barrier, n)
    extract_K(sol, drivers, tree)
    summary = _summary(sol, tree, drivers, barrier, cfg.beta)
    _write_json(out / "solve.json", summary)
    _write_csv(out / "solve.csv", ("t", "EY", "EY_plus", "EK"), _path_rows(sol, tree))
    return EXIT_OK


def cmd_converge(cfg: ExperimentConfig, out: Path, args) -> int:
    tree = cfg.tree()
    drivers = cfg.drivers()
    barrier = cfg.barrier_path(tree)
    oracle = snell_oracle(tree, drivers, barrier, scheme="explicit") if _oracle_applicable(drivers) else None
    rep = penalization_sweep(tree, drivers, barrier, cfg.schedule, oracle=oracle, beta=cfg.beta, jobs=args.jobs)
    rep.to_csv(out / "convergence.csv")
    rep.to_json(out / "convergence.json")
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, out: Path, args) -> int:
    tree = cfg.tree()
    drivers = cfg.drivers()
    barrier = cfg.barrier_path(tree)
    if not _oracle_applicable(drivers):
        raise ConfigError("drivers", "the Snell oracle needs f = f(t, y) and g = g(t)")
    oracle = snell_oracle(tree, drivers, barrier, scheme="explicit")
    payload = _summary(oracle, tree, drivers, barrier, cfg.beta)
    _write_json(out / "oracle.json", payload)
    _write_csv(out / "oracle.csv", ("t", "EY", "EY_plus", "EK"), _path_rows(oracle, tree))
    rows = []
    for n in cfg.schedule:
        sol = solve_penalized(tree, drivers, barrier, n)
        rows.append((n, sup_node_diff(sol.Y, oracle.Y)))
    _write_csv(out / "oracle_comparison.csv", ("n", "oracle_err"), rows)
    return EXIT_OK


def _verify_report(cfg: ExperimentConfig, jobs: int) -> dict:
    tree = cfg.tree()
    drivers = cfg.drivers()
    barrier = cfg.barrier_path(tree)
    n = cfg.schedule[-1]
    checks = {}
    sol = solve_penalized(tree, drivers, barrier, n)

    kr = extract_K(sol, drivers, tree)
    checks["K_consistency"] = {"pass": kr.nondecreasing, "mismatch": kr.max_mismatch, "min_increment": kr.min_increment}
    res = energy_identity_residual(sol, drivers, tree)
    checks["energy_identity"] = {"pass": res <= 1e-10, "residual": res}

    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2**31,)))
    reps = [representation_residual(rng.normal(size=tree.n_nodes(tree.N)), tree) for _ in range(10)]
    checks["representation"] = {"pass": max(reps) <= 1e-12, "residual": max(reps)}

    gram_err = float(np.abs(tree.basis.gram() - np.eye(tree.dim)).max())
    paths = simulate_levy_paths(cfg.measure(), cfg.T, 20000, cfg.seed)
    worst_z = 0.0
    for i in range(1, tree.dim + 1):
        for j in range(1, tree.dim + 1):
            est, se = empirical_bracket(paths, tree.basis, i, j, cfg.T)
            target = cfg.T if i == j else 0.0
            worst_z = max(worst_z, abs(est - target) / se if se > 0 else (0.0 if est == target else math.inf))
    checks["brackets"] = {"pass": gram_err <= 1e-10 and worst_z <= 4.0, "gram_error": gram_err, "max_z_score": worst_z}

    # comparison: shift f down by 1 (every family has an intercept a) and the barrier by 0.5
    f = drivers.f
    if f.family == "zero":
        f1 = Driver("affine", {"a": -1.0}, 0.0)
    else:
        f1 = Driver(f.family, dict(f.params, a=f.params.get("a", 0.0) - 1.0), f.L, f.alpha)
    d1 = DriverPair(f1, drivers.g)
    b1 = RegulatedPath(barrier.times, tuple(v - 0.5 for v in barrier.v), tuple(v - 0.5 for v in barrier.v_plus))
    s1 = solve_penalized(tree, d1, b1, n)
    rep = comparison_check(comparison_instance(tree, s1, sol, d1, drivers))
    checks["comparison"] = {
        "pass": rep.holds,
        "max_violation": rep.max_violation,
        "worst_node": rep.worst_node,
        "gamma_positive": rep.gamma_positive,
        "classification": rep.classification,
    }

    g1 = doleans_gamma(np.ones(100), np.zeros((100, 1)), np.zeros((100, 1)), 0, 100, 0.01)
    checks["gamma"] = {"pass": abs(g1.value - 1.01**100) <= 1e-12, "value": g1.value, "closed_form": g1.closed_form}

    if _oracle_applicable(drivers):
        oracle = snell_oracle(tree, drivers, barrier, scheme="explicit")
        rep = penalization_sweep(tree, drivers, barrier, cfg.schedule, oracle=oracle, beta=cfg.beta, jobs=jobs)
        errs = rep.column("oracle_err")
        checks["oracle_convergence"] = {
            "pass": bool(np.all(np.diff(errs) <= 1e-12)),
            "errors": errs,
        }
    return {"n": n, "checks": checks, "pass": all(c["pass"] for c in checks.values())}


def cmd_verify(cfg: ExperimentConfig, out: Path, args) -> int:
    report = _verify_report(cfg, args.jobs)
    _write_json(out / "verify.json", report)
    for name, c in sorted(report["checks"].items()):
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name}", file=sys.stderr)
    return EXIT_OK if report["pass"] else EXIT_CHECK


def cmd_simulate(cfg: ExperimentConfig, out: Path, args) -> int:
    paths = simulate_levy_paths(cfg.measure(), cfg.T, cfg.P, cfg.seed)
    rows = [(i, float(t), float(x)) for i, p in enumerate(paths) for t, x in zip(p.times, p.sizes)]
    _write_csv(out / "jumps.csv", ("path", "t", "size"), rows)
    tree = build_tree(cfg.measure(), T=cfg.T, N=cfg.N, P=cfg.P, seed=cfg.seed, recombining=cfg.recombining)
    _write_csv(out / "brownian.csv", ["path"] + [f"t{k}" for k in range(cfg.N + 1)],
               [[i] + [repr(float(b)) for b in row] for i, row in enumerate(tree.brownian_paths)])
    return EXIT_OK


COMMANDS = {
    "basis": cmd_basis,
    "solve": cmd_solve,
    "converge": cmd_converge,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbdsde", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON experiment file")
    ap.add_argument("--out", default=None, help="output directory (default: config output.dir)")
    ap.add_argument("--n", type=float, default=None, help="penalty level for 'solve'")
    ap.add_argument("--seed", type=int, default=None, help="override grid.seed")
    ap.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        if args.n is not None and args.n < 0:
            raise ConfigError("--n", "must be nonnegative")
        out = Path(args.out if args.out is not None else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, StepSizeError, DivergenceError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConsistencyError, AssumptionViolation) as e:
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_CHECK
    except InvalidInputError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
