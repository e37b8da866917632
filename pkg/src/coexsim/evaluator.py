"""End-to-end experiment runner.

For every (sigma, model, strategy) cell the runner needs an allocation and a
goal-effectiveness estimate. Both are heavily shared: the inner solves do not
depend on sigma at all (one candidate list per model covers the whole grid,
and the compute-unaware benchmark shares a single candidate list planned with
the heaviest model), and the Monte-Carlo estimate depends only on
(true model, c, rho_dl). The runner therefore solves once per (planner, c),
selects per sigma, and memoizes effectiveness on (model, c, rho_dl) with a
seed derived only from (master seed, model, c) so equal cells are bit-equal
regardless of evaluation order or parallelism degree.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import groupby
from pathlib import Path

import numpy as np

from .channel import ChannelSet, build_channels
from .ei_service import goal_effectiveness, representation
from .scenario import Scenario, derived_constants
from .sensing import crb_theta, general_gains, sensing_gains
from .solver import (Allocation, CandidateSolve, SolverTolerances,
                     select_allocation, solve_candidates)

TRADEOFF_COLUMNS = ("sigma", "model", "strategy", "c", "total_power_w", "crb",
                    "rate_bps", "rho_dl", "goal_effectiveness", "feasible")

DIAGNOSTICS_COLUMNS = ("sigma", "model", "strategy", "c", "rho_dl",
                       "kkt_residual", "duality_gap_rel", "crb_simplified",
                       "crb_general", "gamma_ratio")


@dataclass(frozen=True)
class TradeoffPoint:
    sigma: float
    model: str
    strategy: str           # aware | unaware
    c_choice: int
    total_power_w: float
    achieved_crb_rad2: float
    achieved_rate_bps: float
    rho_dl: float
    goal_effectiveness: float
    feasible: bool


@dataclass(frozen=True)
class DiagnosticsRow:
    sigma: float
    model: str
    strategy: str
    c_choice: int
    rho_dl: float
    kkt_residual: float
    duality_gap_rel: float
    crb_simplified_rad2: float
    crb_general_rad2: float
    gamma_ratio: float


@dataclass(frozen=True)
class SweepResult:
    points: tuple[TradeoffPoint, ...]
    diagnostics: tuple[DiagnosticsRow, ...]


def _effectiveness_seed(master_seed: int, model_idx: int, c: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(model_idx), int(c)])


def _eff_task(args):
    key, s, cs, model_idx, c, rho_dl, n_trials, master_seed = args
    model = s.models[model_idx]
    eff = goal_effectiveness(s, representation(s, c), model, rho_dl, cs,
                             n_trials, _effectiveness_seed(master_seed, model_idx, c))
    return key, eff


def run_sweep(s: Scenario, seed: int, n_trials: int | None = None,
              sigma_grid: tuple[float, ...] | None = None, jobs: int = 1,
              cs: ChannelSet | None = None,
              tol: SolverTolerances = SolverTolerances()) -> SweepResult:
    """Trace the power/effectiveness trade-off over the whole sigma grid."""
    if cs is None:
        cs = build_channels(s, seed)
    trials = s.mc_trials if n_trials is None else int(n_trials)
    sigmas = s.sigma_grid if sigma_grid is None else tuple(sigma_grid)
    dc = derived_constants(s)
    heaviest = s.heaviest_model()

    aware_cands = {m.name: solve_candidates(s, cs, m, tol) for m in s.models}
    unaware_cands = solve_candidates(s, cs, heaviest, tol)

    # every distinct Monte-Carlo evaluation the grid can request
    tasks: dict[tuple[int, int, float], tuple] = {}
    cells: list[tuple[float, int, str, Allocation]] = []
    for sigma in sigmas:
        for idx, m in enumerate(s.models):
            for strategy in ("aware", "unaware"):
                cands = aware_cands[m.name] if strategy == "aware" else unaware_cands
                alloc = select_allocation(s, cands, sigma)
                cells.append((sigma, idx, strategy, alloc))
                if alloc.feasible:
                    key = (idx, alloc.c_choice, alloc.rho_dl)
                    tasks.setdefault(key, (key, s, cs, idx, alloc.c_choice,
                                           alloc.rho_dl, trials, seed))

    ordered = [tasks[k] for k in sorted(tasks)]
    if jobs > 1 and len(ordered) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            eff_by_key = dict(pool.map(_eff_task, ordered))
    else:
        eff_by_key = dict(map(_eff_task, ordered))

    gen_gains = general_gains(cs)
    points: list[TradeoffPoint] = []
    diags: list[DiagnosticsRow] = []
    for sigma, idx, strategy, alloc in cells:
        m = s.models[idx]
        if not alloc.feasible:
            points.append(TradeoffPoint(sigma, m.name, strategy, 0, float("nan"),
                                        float("nan"), float("nan"), 0.0, 0.0, False))
            diags.append(DiagnosticsRow(sigma, m.name, strategy, 0, 0.0,
                                        float("nan"), float("nan"), float("nan"),
                                        float("nan"), float("nan")))
            continue
        eff = eff_by_key[(idx, alloc.c_choice, alloc.rho_dl)]
        points.append(TradeoffPoint(sigma, m.name, strategy, alloc.c_choice,
                                    alloc.total_power_w, alloc.achieved_crb,
                                    alloc.achieved_rate_bps, alloc.rho_dl, eff, True))
        cands = aware_cands[m.name] if strategy == "aware" else unaware_cands
        cand = next(cd for cd in cands if cd.c == alloc.c_choice)
        g_general = sensing_gains(gen_gains, alloc.p_dl, alloc.rho_dl,
                                  s.frame_duration_s, s.sc_spacing_hz)
        crb_general = crb_theta(g_general, dc.noise_power_w_per_sc)
        gap = cand.solution.total_power_w - cand.solution.dual_value
        diags.append(DiagnosticsRow(
            sigma, m.name, strategy, alloc.c_choice, alloc.rho_dl,
            alloc.kkt_residual,
            gap / max(cand.solution.total_power_w, 1e-300),
            alloc.achieved_crb, crb_general,
            alloc.achieved_crb / crb_general if crb_general > 0 else float("nan")))
    return SweepResult(points=tuple(points), diagnostics=tuple(diags))


def pareto_filter(points: list[TradeoffPoint]) -> list[TradeoffPoint]:
    """Drop points dominated in (lower power, higher effectiveness).

    Infeasible points carry no coordinates and are dropped. Output is ordered
    by power, original order preserved among equals.
    """
    feas = [p for p in points if p.feasible]
    indexed = sorted(enumerate(feas), key=lambda ie: (ie[1].total_power_w, ie[0]))
    out: list[TradeoffPoint] = []
    best_eff = -float("inf")
    for _, group in groupby(indexed, key=lambda ie: ie[1].total_power_w):
        members = list(group)
        emax = max(ie[1].goal_effectiveness for ie in members)
        if emax > best_eff:
            out.extend(p for _, p in members if p.goal_effectiveness == emax)
            best_eff = emax
    return out


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_tradeoff_csv(points, path: str | Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRADEOFF_COLUMNS)
        for p in points:
            w.writerow([_fmt(p.sigma), p.model, p.strategy, p.c_choice,
                        _fmt(p.total_power_w), _fmt(p.achieved_crb_rad2),
                        _fmt(p.achieved_rate_bps), _fmt(p.rho_dl),
                        _fmt(p.goal_effectiveness),
                        "true" if p.feasible else "false"])


def write_diagnostics_csv(rows, path: str | Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTICS_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.sigma), r.model, r.strategy, r.c_choice,
                        _fmt(r.rho_dl), _fmt(r.kkt_residual),
                        _fmt(r.duality_gap_rel), _fmt(r.crb_simplified_rad2),
                        _fmt(r.crb_general_rad2), _fmt(r.gamma_ratio)])
