"""Command-line interface.

Subcommands: validate (schema check), solve (one allocation), sweep (full
trade-off CSVs plus manifest), framesim (frame-level traces), verify (oracle
suites). Exit codes: 0 success, 1 I/O, 2 validation, 3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .channel import build_channels, steering_derivative, steering_vector
from .evaluator import (run_sweep, write_diagnostics_csv, write_tradeoff_csv)
from .ei_service import representation
from .framesim import simulate, trace_to_csv
from .oracles import (dual_grid_lower_bound, fd_fim_3x3, fd_steering_derivative,
                      grid_search_subproblem,
                      random_subproblem, schur_theta_from_fim,
                      synthetic_target_channelset)
from .scenario import (ScenarioError, ScenarioParseError, ScenarioValidationError,
                       load_scenario)
from .sensing import equivalent_fim_theta, fim_3x3
from .solver import (set_fault_injection, solve_compute_unaware, solve_problem_p,
                     solve_subproblem)

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_VERIFICATION = 3


def _out_dir(arg: str | None) -> Path:
    if arg is not None:
        return Path(arg)
    return Path(os.environ.get("COEXSIM_OUT_DIR", "."))


def _load(path: str):
    """Returns (scenario, exit_code); scenario is None on failure."""
    try:
        return load_scenario(path), EXIT_OK
    except ScenarioValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return None, EXIT_VALIDATION
    except ScenarioParseError as e:
        print(f"cannot load scenario: {e}", file=sys.stderr)
        return None, EXIT_IO
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return None, EXIT_VALIDATION


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, scenario_path: str, seed: int,
                    outputs: list[Path], extra: dict):
    manifest = {
        "scenario_path": str(scenario_path),
        "scenario_sha256": _sha256(Path(scenario_path)),
        "seed": seed,
        "tool": "coexsim",
        "version": __version__,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": [{"name": p.name, "sha256": _sha256(p)} for p in outputs],
        **extra,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def cmd_validate(args) -> int:
    s, code = _load(args.scenario)
    if s is None:
        return code
    print(f"ok: {args.scenario} "
          f"(F={s.num_sc}, models={[m.name for m in s.models]}, "
          f"bottlenecks={list(s.bottleneck_set)}, sigma points={len(s.sigma_grid)})")
    return EXIT_OK


def cmd_solve(args) -> int:
    s, code = _load(args.scenario)
    if s is None:
        return code
    try:
        model = s.model_by_name(args.model)
    except KeyError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    if not 0.0 <= args.sigma <= 1.0:
        print("validation error: sigma: must be in [0,1]", file=sys.stderr)
        return EXIT_VALIDATION
    cs = build_channels(s, args.seed)
    if args.strategy == "aware":
        alloc = solve_problem_p(s, cs, model, args.sigma)
    else:
        alloc = solve_compute_unaware(s, cs, model, args.sigma)
    print(f"model={model.name} strategy={args.strategy} sigma={args.sigma:g}")
    if not alloc.feasible:
        print("infeasible:")
        for c, reason in sorted(alloc.failure_reasons.items()):
            print(f"  c={c}: {reason}")
        return EXIT_OK
    print(f"  c={alloc.c_choice} rho_dl={alloc.rho_dl:.6f} "
          f"total_power_w={alloc.total_power_w:.6g}")
    print(f"  crb_rad2={alloc.achieved_crb:.6g} rate_bps={alloc.achieved_rate_bps:.6g} "
          f"kkt_residual={alloc.kkt_residual:.3g} objective={alloc.objective:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    s, code = _load(args.scenario)
    if s is None:
        return code
    sigma_grid = None
    if args.sigma_points is not None:
        if args.sigma_points < 1:
            print("validation error: sigma-points: must be >= 1", file=sys.stderr)
            return EXIT_VALIDATION
        sigma_grid = tuple(np.linspace(0.0, 1.0, args.sigma_points)) \
            if args.sigma_points > 1 else (1.0,)
    out_dir = _out_dir(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"cannot create output directory: {e}", file=sys.stderr)
        return EXIT_IO
    result = run_sweep(s, args.seed, n_trials=args.trials, sigma_grid=sigma_grid,
                       jobs=args.jobs)
    tradeoff = out_dir / "tradeoff.csv"
    diagnostics = out_dir / "diagnostics.csv"
    write_tradeoff_csv(result.points, tradeoff)
    write_diagnostics_csv(result.diagnostics, diagnostics)
    manifest = _write_manifest(
        out_dir, args.scenario, args.seed, [tradeoff, diagnostics],
        {"trials": s.mc_trials if args.trials is None else args.trials,
         "sigma_points": len(sigma_grid or s.sigma_grid), "jobs": args.jobs})
    n_feas = sum(1 for p in result.points if p.feasible)
    print(f"wrote {tradeoff} ({len(result.points)} rows, {n_feas} feasible), "
          f"{diagnostics}, {manifest}")
    return EXIT_OK


def cmd_framesim(args) -> int:
    s, code = _load(args.scenario)
    if s is None:
        return code
    try:
        model = s.model_by_name(args.model)
        rep = representation(s, args.c)
    except (KeyError, ValueError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    if not 0.0 < args.rho_ul <= 1.0:
        print("validation error: rho-ul: must be in (0,1]", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = _out_dir(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"cannot create output directory: {e}", file=sys.stderr)
        return EXIT_IO
    cs = build_channels(s, args.seed)
    trace = simulate(s, cs, rep, model, args.rho_ul, args.batches, args.seed,
                     ul_placement=args.ul_placement)
    frames = out_dir / "frames.csv"
    batches = out_dir / "batches.csv"
    trace_to_csv(trace, frames, batches)
    manifest = _write_manifest(out_dir, args.scenario, args.seed, [frames, batches],
                               {"model": model.name, "c": args.c,
                                "rho_ul": args.rho_ul, "batches": args.batches})
    mean_lcomm = float(np.mean([b.l_comm_s for b in trace.batches]))
    print(f"wrote {frames}, {batches}, {manifest} "
          f"(mean L_comm = {mean_lcomm:.6g} s over {len(trace.batches)} batches)")
    return EXIT_OK


def _verify_solver(rng: np.random.Generator, instances: int, max_f: int,
                   violations: list[str]) -> dict:
    worst_obj, worst_kkt, worst_gap = 0.0, 0.0, 0.0
    for i in range(instances):
        inst_seed = int(rng.integers(2 ** 63))
        inst_rng = np.random.default_rng(inst_seed)
        sp = random_subproblem(inst_rng, num_sc=int(inst_rng.integers(1, max_f + 1)))
        sol = solve_subproblem(sp)
        grid = grid_search_subproblem(sp)
        if sol.status == "numerical-failure":
            violations.append(f"solver[{i}] seed={inst_seed}: numerical failure: {sol.reason}")
            continue
        if sol.feasible != grid.feasible:
            violations.append(
                f"solver[{i}] seed={inst_seed}: status mismatch "
                f"(solver {sol.status!r} vs grid feasible={grid.feasible})")
            continue
        if not sol.feasible:
            continue
        # certified sandwich: the solver's point is primal-feasible, so its
        # total is >= the optimum; the dual-plane grid value is <= the optimum
        # by weak duality.

        # upper side: no feasible lattice point may undercut the solver
        if grid.total_power_w < sol.total_power_w * (1.0 - 1e-9):
            violations.append(
                f"solver[{i}] seed={inst_seed}: grid point {grid.total_power_w:.12g} "
                f"beats KKT solution {sol.total_power_w:.12g} (suboptimal solve)")
        # lower side: solver total within 1e-4 above the dual bound
        d_lb = dual_grid_lower_bound(sp, witness=(sol.lam, sol.mu))
        scale = max(d_lb, 1e-300)
        rel = abs(sol.total_power_w - d_lb) / scale
        worst_obj = max(worst_obj, rel)
        worst_kkt = max(worst_kkt, sol.kkt_residual)
        gap = (sol.total_power_w - sol.dual_value) / max(sol.total_power_w, 1e-300)
        worst_gap = max(worst_gap, abs(gap))
        if sol.total_power_w < d_lb * (1.0 - 1e-6):
            violations.append(
                f"solver[{i}] seed={inst_seed}: objective {sol.total_power_w:.12g} "
                f"below the weak-duality bound {d_lb:.12g} (broken constraint check)")
        if rel > 1e-4:
            violations.append(
                f"solver[{i}] seed={inst_seed}: objective {sol.total_power_w:.12g} "
                f"vs dual grid bound {d_lb:.12g} disagree (rel {rel:.3g})")
        if sol.kkt_residual > 1e-6:
            violations.append(
                f"solver[{i}] seed={inst_seed}: KKT residual {sol.kkt_residual:.3g}")
    return {"objective_rel": worst_obj, "kkt": worst_kkt, "duality_gap_rel": worst_gap}


def _verify_schur(rng: np.random.Generator, instances: int,
                  violations: list[str]) -> dict:
    worst_analytic, worst_fd = 0.0, 0.0
    for i in range(instances):
        inst_seed = int(rng.integers(2 ** 63))
        inst_rng = np.random.default_rng(inst_seed)
        cs = synthetic_target_channelset(inst_rng)
        p = 10.0 ** inst_rng.uniform(-3, 0)
        k = 10.0 ** inst_rng.uniform(2, 6)
        noise = 10.0 ** inst_rng.uniform(-16, -12)
        closed = equivalent_fim_theta(cs, 0, p, k, noise)
        from_fim = schur_theta_from_fim(fim_3x3(cs, 0, p, k, noise))
        from_fd = schur_theta_from_fim(fd_fim_3x3(
            cs.theta_rad, complex(cs.alpha[0]), np.asarray(cs.w_dl[0]),
            cs.h_rx_tgt.shape[1], cs.h_tx_tgt.shape[1], 0.5, p, k, noise))
        scale = max(abs(closed), 1e-300)
        rel_analytic = abs(closed - from_fim) / scale
        rel_fd = abs(closed - from_fd) / scale
        worst_analytic = max(worst_analytic, rel_analytic)
        worst_fd = max(worst_fd, rel_fd)
        if rel_analytic > 1e-8:
            violations.append(f"schur[{i}] seed={inst_seed}: analytic rel {rel_analytic:.3g}")
        if rel_fd > 1e-4:
            violations.append(f"schur[{i}] seed={inst_seed}: finite-diff rel {rel_fd:.3g}")
    return {"analytic_rel": worst_analytic, "fd_rel": worst_fd}


def _verify_steering(rng: np.random.Generator, instances: int,
                     violations: list[str]) -> dict:
    worst = 0.0
    for i in range(instances):
        inst_seed = int(rng.integers(2 ** 63))
        inst_rng = np.random.default_rng(inst_seed)
        theta = float(inst_rng.uniform(-1.4, 1.4))
        n = int(inst_rng.integers(1, 33))
        analytic = steering_derivative(theta, n, 0.5)
        fd = fd_steering_derivative(theta, n, 0.5)
        scale = max(float(np.max(np.abs(analytic))), 1.0)
        rel = float(np.max(np.abs(analytic - fd))) / scale
        worst = max(worst, rel)
        if rel > 1e-6:
            violations.append(f"steering[{i}] seed={inst_seed}: rel {rel:.3g} "
                              f"(theta={theta:.6f}, n={n})")
    return {"rel": worst}


def cmd_verify(args) -> int:
    if args.max_f > 6:
        print("validation error: max-f: grid oracle is exponential in F; max 6",
              file=sys.stderr)
        return EXIT_VALIDATION
    if args.instances == 0:
        warnings.warn("verify ran with --instances 0: vacuous pass")
        print("WARNING: 0 instances requested; nothing was verified (vacuous pass)")
        return EXIT_OK
    if args.inject_bias:
        set_fault_injection(power_bias=args.inject_bias)
    try:
        rng = np.random.default_rng(args.seed)
        violations: list[str] = []
        solver_stats = _verify_solver(rng, args.instances, args.max_f, violations)
        schur_stats = _verify_schur(rng, args.instances, violations)
        steer_stats = _verify_steering(rng, args.instances, violations)
    finally:
        if args.inject_bias:
            set_fault_injection(power_bias=0.0)
    print(f"solver vs grid oracle   ({args.instances} instances): "
          f"max objective rel {solver_stats['objective_rel']:.3g}, "
          f"max KKT residual {solver_stats['kkt']:.3g}, "
          f"max duality gap {solver_stats['duality_gap_rel']:.3g}")
    print(f"schur vs 3x3 FIM        ({args.instances} instances): "
          f"max analytic rel {schur_stats['analytic_rel']:.3g}, "
          f"max finite-diff rel {schur_stats['fd_rel']:.3g}")
    print(f"steering vs finite diff ({args.instances} instances): "
          f"max rel {steer_stats['rel']:.3g}")
    if violations:
        print(f"{len(violations)} violation(s):", file=sys.stderr)
        for v in violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_VERIFICATION
    print("all suites passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="coexsim",
        description="Simulate and optimally share one TDD frame between a "
                    "sensing/communication service and edge inference uploads.")
    ap.add_argument("--version", action="version", version=f"coexsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve one (model, sigma) allocation")
    p.add_argument("scenario")
    p.add_argument("--model", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--strategy", choices=("aware", "unaware"), default="aware")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="trace the full trade-off grid to CSV")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None,
                   help="output directory (default: $COEXSIM_OUT_DIR or .)")
    p.add_argument("--trials", type=int, default=None,
                   help="Monte-Carlo trials per point (default: scenario's mc_trials)")
    p.add_argument("--sigma-points", type=int, default=None,
                   help="override the scenario's sigma grid with a linspace")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("framesim", help="frame-by-frame upload trace")
    p.add_argument("scenario")
    p.add_argument("--model", required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--rho-ul", type=float, required=True)
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ul-placement", choices=("tail", "head"), default="tail")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_framesim)

    p = sub.add_parser("verify", help="run the oracle verification suites")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--max-f", type=int, default=4)
    p.add_argument("--seed", type=int, default=20260814)
    p.add_argument("--inject-bias", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return ap


def entrypoint(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def main():
    sys.exit(entrypoint())


if __name__ == "__main__":
    main()
