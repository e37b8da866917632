"""Acceptance suite.

One test per primary acceptance criterion; each prints exactly one
``[PASS]``/``[FAIL]`` line (visible even under captured output) with the
headline numbers, then asserts. Tolerances are stated inline next to each
check. The desk-scale scenario (64 subcarriers, rescaled bandwidth) keeps
runtimes in seconds while preserving every structural property the checks
rely on.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from coexsim.channel import build_channels
from coexsim.cli import entrypoint
from coexsim.ei_service import representation, ul_rate, upload_delay
from coexsim.evaluator import run_sweep
from coexsim.framesim import simulate
from coexsim.oracles import (
    analytic_effectiveness,
    dual_grid_lower_bound,
    fd_fim_3x3,
    grid_search_subproblem,
    random_subproblem,
    schur_theta_from_fim,
    synthetic_target_channelset,
)
from coexsim.scenario import derived_constants
from coexsim.sensing import (
    crb_theta,
    equivalent_fim_theta,
    fim_3x3,
    point_target_gains,
    sensing_gains,
)
from coexsim.solver import ConvexSubproblem, solve_candidates, solve_subproblem

MASTER_SEED = 20260814
SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def _report(capsys, name: str, ok: bool, detail: str):
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_solver_certified_against_oracles_on_200_instances(capsys):
    """KKT solver vs the two independent oracles on 200 random instances,
    F in 1..4: no feasible grid point may undercut the solver, the solver
    objective must sit within relative 1e-4 of the weak-duality dual-grid
    bound, KKT residuals <= 1e-6, all under 60 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED)
    failures = []
    worst_rel = worst_kkt = 0.0
    solved = 0
    for i in range(200):
        inst_seed = int(rng.integers(2 ** 63))
        inst_rng = np.random.default_rng(inst_seed)
        sp = random_subproblem(inst_rng, num_sc=int(inst_rng.integers(1, 5)))
        sol = solve_subproblem(sp)
        grid = grid_search_subproblem(sp)
        if sol.status == "numerical-failure":
            failures.append(f"[{i}] numerical failure: {sol.reason}")
            continue
        if sol.feasible != grid.feasible:
            failures.append(f"[{i}] seed={inst_seed} feasibility mismatch")
            continue
        if not sol.feasible:
            continue
        solved += 1
        if grid.total_power_w < sol.total_power_w * (1.0 - 1e-9):
            failures.append(f"[{i}] seed={inst_seed} grid beats solver")
        d_lb = dual_grid_lower_bound(sp, witness=(sol.lam, sol.mu))
        rel = abs(sol.total_power_w - d_lb) / max(d_lb, 1e-300)
        worst_rel = max(worst_rel, rel)
        worst_kkt = max(worst_kkt, sol.kkt_residual)
        if rel > 1e-4:
            failures.append(f"[{i}] seed={inst_seed} dual gap rel {rel:.3g}")
        if sol.kkt_residual > 1e-6:
            failures.append(f"[{i}] seed={inst_seed} KKT {sol.kkt_residual:.3g}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 60.0:
        failures.append(f"runtime {elapsed:.1f} s >= 60 s")
    _report(capsys, "solver-oracle equivalence (200 instances)",
            not failures and solved >= 100,
            f"{solved} feasible solves, max dual-gap rel {worst_rel:.3g} "
            f"(tol 1e-4), max KKT {worst_kkt:.3g} (tol 1e-6), {elapsed:.1f} s"
            + (f"; FAILURES: {failures[:3]}" if failures else ""))


def test_single_subcarrier_closed_form_100_instances(capsys):
    """With one subcarrier the optimum is max(A/g, (2^r - 1)/c) by hand;
    the solver must hit it to relative 1e-10 on 100 random instances."""
    rng = np.random.default_rng(MASTER_SEED + 1)
    worst = 0.0
    for _ in range(100):
        g = 10.0 ** rng.uniform(-9, -6)
        c = 10.0 ** rng.uniform(3, 7)
        A = 10.0 ** rng.uniform(-10, -7)
        r = float(rng.uniform(0.1, 25.0))
        expect = max(A / g, (2.0 ** r - 1.0) / c)
        sol = solve_subproblem(ConvexSubproblem(np.array([g]), np.array([c]),
                                                A, r, 10.0 * expect))
        if not sol.feasible:
            _report(capsys, "single-subcarrier closed form", False,
                    f"unexpected infeasible at g={g} c={c} A={A} r={r}")
        worst = max(worst, abs(sol.total_power_w - expect) / expect)
    _report(capsys, "single-subcarrier closed form (100 instances)",
            worst <= 1e-10, f"max rel error {worst:.3g} (tol 1e-10)")


def test_crb_schur_equivalence_and_exact_scaling(capsys):
    """The closed-form equivalent information must match the Schur complement
    of the assembled 3x3 FIM (rel 1e-8 analytic, 1e-4 finite-difference) on
    100 random instances, and CRB(c P) = CRB(P)/c must hold exactly for
    power-of-two c (to 1e-14 for general c)."""
    rng = np.random.default_rng(MASTER_SEED + 2)
    worst_an = worst_fd = worst_c3 = 0.0
    exact_ok = True
    for _ in range(100):
        cs = synthetic_target_channelset(rng)
        p = 10.0 ** rng.uniform(-3, 0)
        k = 10.0 ** rng.uniform(2, 6)
        noise = 10.0 ** rng.uniform(-16, -12)
        closed = equivalent_fim_theta(cs, 0, p, k, noise)
        from_fim = schur_theta_from_fim(fim_3x3(cs, 0, p, k, noise))
        from_fd = schur_theta_from_fim(fd_fim_3x3(
            cs.theta_rad, complex(cs.alpha[0]), np.asarray(cs.w_dl[0]),
            cs.h_rx_tgt.shape[1], cs.h_tx_tgt.shape[1], 0.5, p, k, noise))
        scale = max(abs(closed), 1e-300)
        worst_an = max(worst_an, abs(closed - from_fim) / scale)
        worst_fd = max(worst_fd, abs(closed - from_fd) / scale)
        # scaling: gamma is linear in the power vector, so scaling the power
        # by 2^m divides the CRB by exactly 2^m in floating point as well
        g = point_target_gains(cs)
        pv = np.array([p])
        base = crb_theta(sensing_gains(g, pv, 0.8, 0.002, 781250.0), noise)
        x16 = crb_theta(sensing_gains(g, 16.0 * pv, 0.8, 0.002, 781250.0), noise)
        x3 = crb_theta(sensing_gains(g, 3.0 * pv, 0.8, 0.002, 781250.0), noise)
        exact_ok &= (x16 * 16.0 == base)
        worst_c3 = max(worst_c3, abs(x3 * 3.0 - base) / base)
    ok = worst_an <= 1e-8 and worst_fd <= 1e-4 and exact_ok and worst_c3 <= 1e-14
    _report(capsys, "CRB Schur equivalence + scaling (100 instances)", ok,
            f"max analytic rel {worst_an:.3g} (tol 1e-8), max FD rel "
            f"{worst_fd:.3g} (tol 1e-4), power-of-two scaling exact: "
            f"{exact_ok}, c=3 scaling rel {worst_c3:.3g} (tol 1e-14)")


def test_upload_latency_quantization_50_pairs(capsys, desk_scenario,
                                              desk_channels):
    """The frame simulator's measured upload latency must equal
    ceil(n_b/(R T)) * T bit-for-bit on 50 (payload, uplink-share) pairs, and
    its gap to the fluid n_b/R approximation must lie in [0, T)."""
    s = desk_scenario
    T = s.frame_duration_s
    base_rhos = [0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95, 1.0]
    pairs = [(c, r) for c in (4, 8, 16, 32) for r in base_rhos]
    pairs += [(4, r) for r in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)]
    assert len(pairs) == 50
    model = s.model_by_name("mobilenet_v3_small")
    mismatches = []
    max_gap_over_t = 0.0
    for c, rho_ul in pairs:
        rep = representation(s, c)
        rate = ul_rate(s, desk_channels, rho_ul)
        trace = simulate(s, desk_channels, rep, model, rho_ul, n_batches=2,
                         seed=0)
        measured = trace.batches[0].l_comm_s
        ceil_form = math.ceil(rep.n_b / (rate * T)) * T
        closed = upload_delay(rep.n_b, rate, T, exact=True)
        fluid = upload_delay(rep.n_b, rate, T, exact=False)
        if not (measured == ceil_form == closed):
            mismatches.append(f"(c={c}, rho={rho_ul}): {measured} vs {ceil_form}")
        gap = measured - fluid
        if not 0.0 <= gap < T:
            mismatches.append(f"(c={c}, rho={rho_ul}): gap {gap} outside [0,T)")
        max_gap_over_t = max(max_gap_over_t, gap / T)
    _report(capsys, "frame-quantized upload latency (50 pairs)",
            not mismatches,
            f"all exact, max quantization gap {max_gap_over_t:.3f} T"
            + (f"; MISMATCHES: {mismatches[:3]}" if mismatches else ""))


def test_tradeoff_sweep_monotone_and_aware_dominates(capsys, desk_scenario):
    """Full 101-sigma sweep at 1e4 trials: per model, aware points sorted by
    power are non-decreasing in effectiveness; the computation-aware strategy
    never spends more power than the benchmark for models lighter than the
    planning model; for the heaviest model the two strategies coincide."""
    s = desk_scenario
    res = run_sweep(s, seed=MASTER_SEED, n_trials=10 ** 4)
    heaviest = s.heaviest_model().name
    problems = []
    assert len(res.points) == 101 * len(s.models) * 2
    for m in s.models:
        aware = [p for p in res.points
                 if p.model == m.name and p.strategy == "aware"]
        if not all(p.feasible for p in aware):
            problems.append(f"{m.name}: infeasible aware cells")
            continue
        by_power = sorted(aware, key=lambda p: p.total_power_w)
        effs = [p.goal_effectiveness for p in by_power]
        if any(e1 < e0 for e0, e1 in zip(effs, effs[1:])):
            problems.append(f"{m.name}: effectiveness not monotone in power")
        for p in aware:
            twin = next(q for q in res.points
                        if q.sigma == p.sigma and q.model == m.name
                        and q.strategy == "unaware")
            if m.name == heaviest:
                if not (p.c_choice == twin.c_choice
                        and p.total_power_w == pytest.approx(
                            twin.total_power_w, rel=1e-9)
                        and p.rho_dl == pytest.approx(twin.rho_dl, rel=1e-9)):
                    problems.append(f"{m.name}: strategies differ at "
                                    f"sigma={p.sigma}")
            elif p.total_power_w > twin.total_power_w * (1.0 + 1e-12):
                problems.append(f"{m.name}: aware costs more at sigma={p.sigma}")
    span = {m.name: (min(p.total_power_w for p in res.points
                         if p.model == m.name and p.strategy == "aware"),
                     max(p.total_power_w for p in res.points
                         if p.model == m.name and p.strategy == "aware"))
            for m in s.models}
    _report(capsys, "trade-off sweep structure (101 sigma, 1e4 trials)",
            not problems,
            "monotone + aware<=unaware + heaviest coincide; power spans "
            + ", ".join(f"{k} [{a:.4f},{b:.4f}] W" for k, (a, b) in span.items())
            + (f"; PROBLEMS: {problems[:3]}" if problems else ""))


def test_relaxed_sensing_threshold_never_costs_power(capsys, desk_scenario,
                                                     desk_crb06_scenario):
    """Doubling the angle-error budget (0.3 deg -> 0.6 deg std) can only relax
    the problem: at every sigma the minimum feasible candidate power and the
    selected power must weakly decrease and no cell may turn infeasible."""
    from coexsim.solver import select_allocation
    tight, loose = desk_scenario, desk_crb06_scenario
    sigmas = np.linspace(0.0, 1.0, 101)
    problems = []
    max_delta = -float("inf")
    for m in tight.models:
        cands = {}
        for tag, s in (("tight", tight), ("loose", loose)):
            cs = build_channels(s, MASTER_SEED)
            cands[tag] = solve_candidates(s, cs, s.model_by_name(m.name))
        min_feas = {tag: min((c.solution.total_power_w for c in cl if c.feasible),
                             default=float("inf"))
                    for tag, cl in cands.items()}
        if min_feas["loose"] > min_feas["tight"] * (1.0 + 1e-12):
            problems.append(f"{m.name}: min feasible power rose")
        for sig in sigmas:
            at = select_allocation(tight, cands["tight"], float(sig))
            al = select_allocation(loose, cands["loose"], float(sig))
            if at.feasible and not al.feasible:
                problems.append(f"{m.name}: feasibility lost at sigma={sig}")
            elif at.feasible and al.feasible:
                delta = al.total_power_w - at.total_power_w
                max_delta = max(max_delta, delta)
                if delta > at.total_power_w * 1e-12:
                    problems.append(f"{m.name}: power rose at sigma={sig}")
    _report(capsys, "relaxed sensing threshold dominance (101 sigma)",
            not problems,
            f"pointwise weak dominance holds, max power delta {max_delta:.3g} W "
            "(sensing is slack at desk scale, so equality is expected)"
            + (f"; PROBLEMS: {problems[:3]}" if problems else ""))


def test_effectiveness_estimator_matches_analytic_product(capsys,
                                                          desk_scenario,
                                                          desk_channels):
    """At 1e5 trials the Monte-Carlo estimate must match the closed-form
    product (1 - BinomCDF(Q_min - 1; B, acc)) * Pr(L_tot <= L_max) within a
    3-sigma binomial interval, and a degenerate always-pass configuration
    must return exactly 1."""
    import dataclasses
    s = desk_scenario
    n = 10 ** 5
    configs = [("mobilenet_v3_small", 4, 0.9653612175670895),
               ("mobilenet_v3_small", 32, 0.7228897405367158),
               ("resnet50", 8, 0.93), ("resnet50", 16, 0.86),
               ("vit_b_16", 4, 0.79), ("vit_b_16", 8, 0.58)]
    from coexsim.ei_service import goal_effectiveness
    worst_z = 0.0
    problems = []
    for name, c, rho_dl in configs:
        model = s.model_by_name(name)
        rep = representation(s, c)
        mc = goal_effectiveness(s, rep, model, rho_dl, desk_channels, n,
                                np.random.SeedSequence([MASTER_SEED, c]))
        exact = analytic_effectiveness(s, c, rep.n_b, model, rho_dl,
                                       desk_channels)
        sd = math.sqrt(max(exact * (1.0 - exact), 1e-12) / n)
        z = abs(mc - exact) / sd
        worst_z = max(worst_z, z)
        if z > 3.0:
            problems.append(f"{name} c={c}: mc {mc:.5f} vs exact {exact:.5f} "
                            f"({z:.2f} sigma)")
    # degenerate: perfect accuracy and an unbounded latency budget -> exactly 1
    model = s.model_by_name("mobilenet_v3_small")
    sure_model = dataclasses.replace(
        model, accuracy_curve=tuple((c, 1.0) for c in s.bottleneck_set))
    reqs = dataclasses.replace(s.requirements, l_max_s=10.0)
    s_sure = dataclasses.replace(s, requirements=reqs)
    certain = goal_effectiveness(s_sure, representation(s, 4), sure_model, 0.9,
                                 desk_channels, n, 7)
    if certain != 1.0:
        problems.append(f"degenerate config returned {certain} != 1.0")
    _report(capsys, "effectiveness estimator vs analytic (6 configs, 1e5 trials)",
            not problems,
            f"max deviation {worst_z:.2f} sigma (limit 3), degenerate exact"
            + (f"; PROBLEMS: {problems}" if problems else ""))


def test_sweep_determinism_across_parallelism(capsys, tmp_path):
    """Byte-identical tradeoff.csv and diagnostics.csv across a rerun and
    across --jobs 1 vs --jobs 3 at identical scenario and seed."""
    desk = str(SCENARIOS / "desk_scale.yaml")
    outs = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / name
        rc = entrypoint(["sweep", desk, "--seed", str(MASTER_SEED),
                         "--trials", "2000", "--out-dir", str(out),
                         "--jobs", str(jobs)])
        assert rc == 0
        outs.append(out)
    same = all((out / f).read_bytes() == (outs[0] / f).read_bytes()
               for out in outs[1:]
               for f in ("tradeoff.csv", "diagnostics.csv"))
    rows = len((outs[0] / "tradeoff.csv").read_text().splitlines()) - 1
    _report(capsys, "sweep determinism across parallelism", same,
            f"3 runs (jobs 1,1,3) byte-identical over {rows} rows"
            if same else "CSV outputs differ between runs")
