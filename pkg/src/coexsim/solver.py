"""Exact solver for the coexistence power-allocation problem.

Outer layer: enumerate the (finite) bottleneck dimensions, fix the DL time
share from the latency budget, and score each candidate with the scalarized
objective sigma * P/P_max + (1 - sigma) * n_b_max/n_b. Inner layer: for fixed
rho_dl the problem is convex,

    min  sum_f P_f
    s.t. sum_f g_f P_f >= A          (sensing accuracy, linear)
         sum_f log2(1 + c_f P_f) >= r  (DL rate, concave)
         P_f >= 0,

and stationarity gives P_f(lam, mu) = max(0, mu/(ln2 (1 - lam g_f)) - 1/c_f),
so the solve reduces to a nested dual bisection. Because the objective is the
plain power sum, the budget sum_f P_f <= P_max can never bind at an optimum;
it is enforced after the fact by declaring the candidate infeasible when the
unbudgeted minimum exceeds it.

Both bisections run to floating-point exhaustion (the interval midpoint stops
moving), returning the iterate from the constraint-satisfying side, so the
reported KKT residuals and duality gaps sit near machine precision rather than
at the configured acceptance tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, dl_rate_coeff_per_sc
from .ei_service import DelayBudget, representation, rho_dl_star
from .scenario import InferenceModelProfile, Scenario, derived_constants
from .sensing import point_target_gains, sensing_gains, crb_theta

LN2 = math.log(2.0)

# test hook: cmd_verify uses this to demonstrate that a corrupted solver is
# caught by the oracle/KKT suites. Never set outside tests.
_FAULT_POWER_BIAS = 0.0


def set_fault_injection(power_bias: float = 0.0):
    global _FAULT_POWER_BIAS
    _FAULT_POWER_BIAS = power_bias


@dataclass(frozen=True)
class SolverTolerances:
    dual_abs: float = 1e-9
    constraint_rel: float = 1e-7


@dataclass(frozen=True)
class ConvexSubproblem:
    g_lin: np.ndarray
    c_lin: np.ndarray
    crb_rhs: float
    rate_rhs_bits_per_sc_use: float
    p_max: float

    def __post_init__(self):
        object.__setattr__(self, "g_lin", np.asarray(self.g_lin, dtype=float))
        object.__setattr__(self, "c_lin", np.asarray(self.c_lin, dtype=float))
        self.g_lin.setflags(write=False)
        self.c_lin.setflags(write=False)
        if self.g_lin.shape != self.c_lin.shape:
            raise ValueError("g_lin and c_lin must have the same length")
        if np.any(self.g_lin < 0) or np.any(self.c_lin < 0):
            raise ValueError("gain coefficients must be nonnegative")
        if self.crb_rhs < 0 or self.rate_rhs_bits_per_sc_use < 0:
            raise ValueError("constraint right-hand sides must be nonnegative")
        if self.p_max <= 0:
            raise ValueError("p_max must be > 0")


@dataclass(frozen=True)
class SubproblemSolution:
    p_dl: np.ndarray
    status: str              # optimal | infeasible | numerical-failure
    reason: str
    lam: float
    mu: float
    total_power_w: float
    kkt_residual: float
    dual_value: float

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


def _powers(lam: float, mu: float, g: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Stationarity-optimal powers for fixed duals; lam must keep 1-lam*g > 0
    wherever c > 0 power could flow."""
    denom = 1.0 - lam * g
    p = np.zeros_like(c)
    live = (c > 0) & (denom > 0)
    with np.errstate(over="ignore"):
        p[live] = mu / (LN2 * denom[live]) - 1.0 / c[live]
    return np.maximum(p, 0.0)


def _rate(p: np.ndarray, c: np.ndarray) -> float:
    return float(np.sum(np.log2(1.0 + c * p)))


def _mu_for_rate(lam: float, g: np.ndarray, c: np.ndarray, r: float) -> tuple[float, np.ndarray]:
    """Smallest mu whose stationarity powers meet the rate target at this lam.

    The achieved rate is continuous and nondecreasing in mu with rate(0) = 0,
    so double to bracket then bisect to exhaustion, keeping the rate >= r side.
    """
    if r <= 0.0:
        return 0.0, np.zeros_like(c)
    hi = LN2 / float(np.max(c[c > 0]))
    for _ in range(400):
        if _rate(_powers(lam, hi, g, c), c) >= r:
            break
        hi *= 2.0
    else:
        raise FloatingPointError("rate bracket not found")
    lo = 0.0
    p_hi = _powers(lam, hi, g, c)
    while True:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            return hi, p_hi
        p_mid = _powers(lam, mid, g, c)
        if _rate(p_mid, c) >= r:
            hi, p_hi = mid, p_mid
        else:
            lo = mid


def _max_rate_at_budget(c_sub: np.ndarray, total: float) -> np.ndarray:
    """Split a fixed power total across channels to maximize sum log2(1+cP):
    water-filling by bisection on the water level."""
    p = np.zeros_like(c_sub)
    live = c_sub > 0
    if not np.any(live) or total <= 0:
        if total > 0:
            p[0] = total
        return p
    inv = 1.0 / c_sub[live]
    lo, hi = float(np.min(inv)), float(np.max(inv)) + total
    while True:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if float(np.sum(np.maximum(mid - inv, 0.0))) >= total:
            hi = mid
        else:
            lo = mid
    alloc = np.maximum(hi - inv, 0.0)
    s = float(np.sum(alloc))
    if s > 0:
        alloc *= total / s
    else:
        alloc[int(np.argmin(inv))] = total
    out = np.zeros_like(c_sub)
    out[live] = alloc
    return out


def _kkt_residual(sp: ConvexSubproblem, p: np.ndarray, lam: float, mu: float) -> float:
    """Max of dimensionless stationarity / feasibility / slackness violations."""
    g, c = sp.g_lin, sp.c_lin
    A, r = sp.crb_rhs, sp.rate_rhs_bits_per_sc_use
    grad = 1.0 - lam * g
    live = c > 0
    grad = grad - np.where(live, mu * c / (LN2 * (1.0 + c * p)), 0.0)
    active = p > 0
    station = float(np.max(np.abs(grad[active]), initial=0.0))
    bound = float(np.max(np.maximum(-grad[~active], 0.0), initial=0.0))

    crb_val = float(g @ p)
    rate_val = _rate(p, c)
    scale_a = max(A, 1e-300)
    viol_a = max(0.0, (A - crb_val) / scale_a)
    viol_b = max(0.0, (r - rate_val) / max(r, 1.0))

    lam_hat = lam * float(np.max(g, initial=0.0))
    mu_hat = mu * float(np.max(c, initial=0.0)) / LN2
    slack_a = lam_hat * abs(crb_val - A) / scale_a if A > 0 or lam > 0 else 0.0
    slack_b = mu_hat * abs(rate_val - r) / max(r, 1.0)
    return max(station, bound, viol_a, viol_b, slack_a, slack_b)


def _dual_value(sp: ConvexSubproblem, lam: float, mu: float) -> float:
    """Lagrange dual objective q(lam, mu); -inf off the dual domain."""
    g, c = sp.g_lin, sp.c_lin
    denom = 1.0 - lam * g
    # a boundary multiplier can overshoot 1 - lam*g by an ulp; that is
    # rounding, not a domain violation
    denom = np.where(denom > -4e-16, np.maximum(denom, 0.0), denom)
    if np.any(denom < 0) or (mu > 0 and np.any((denom == 0) & (c > 0))):
        return -math.inf
    p = _powers(lam, mu, g, c)
    terms = p * denom - mu * np.log2(1.0 + c * p)
    return lam * sp.crb_rhs + mu * sp.rate_rhs_bits_per_sc_use + float(np.sum(terms))


def _finish(sp: ConvexSubproblem, p: np.ndarray, lam: float, mu: float,
            tol: SolverTolerances) -> SubproblemSolution:
    if _FAULT_POWER_BIAS:
        p = p * (1.0 + _FAULT_POWER_BIAS)
    total = float(np.sum(p))
    if total > sp.p_max * (1.0 + tol.constraint_rel):
        return SubproblemSolution(
            p_dl=p, status="infeasible",
            reason=f"exceeds power budget (needs {total:.6g} W > {sp.p_max:.6g} W)",
            lam=lam, mu=mu, total_power_w=total,
            kkt_residual=_kkt_residual(sp, p, lam, mu),
            dual_value=_dual_value(sp, lam, mu))
    return SubproblemSolution(
        p_dl=p, status="optimal", reason="", lam=lam, mu=mu, total_power_w=total,
        kkt_residual=_kkt_residual(sp, p, lam, mu),
        dual_value=_dual_value(sp, lam, mu))


def solve_subproblem(sp: ConvexSubproblem,
                     tol: SolverTolerances = SolverTolerances()) -> SubproblemSolution:
    g, c = sp.g_lin, sp.c_lin
    A, r = sp.crb_rhs, sp.rate_rhs_bits_per_sc_use
    F = g.shape[0]
    zeros = np.zeros(F)

    if A > 0 and not np.any(g > 0):
        return SubproblemSolution(zeros, "infeasible",
                                  "sensing constraint unsatisfiable: zero sensing gain",
                                  0.0, 0.0, 0.0, 0.0, -math.inf)
    if r > 0 and not np.any(c > 0):
        return SubproblemSolution(zeros, "infeasible",
                                  "rate constraint unsatisfiable: zero rate gain",
                                  0.0, 0.0, 0.0, 0.0, -math.inf)
    if A <= 0 and r <= 0:
        return _finish(sp, zeros, 0.0, 0.0, tol)

    # stage 1: ignore the sensing constraint (lam = 0); pure rate water-filling
    try:
        mu_wf, p_wf = _mu_for_rate(0.0, g, c, r)
    except FloatingPointError as e:
        return SubproblemSolution(zeros, "numerical-failure", str(e),
                                  0.0, 0.0, 0.0, math.inf, -math.inf)
    if float(g @ p_wf) >= A:
        return _finish(sp, p_wf, 0.0, mu_wf, tol)

    # stage 2: sensing at equality with the minimum-power linear solution
    # (all power on the max-gain subcarriers), rate as a bonus: spread the
    # fixed total across the tied set for maximum rate. If the rate target is
    # met here the corner (lam = 1/g_max, mu = 0) is KKT-stationary.
    gmax = float(np.max(g))
    tied = g >= gmax * (1.0 - 1e-12)
    p_corner = np.zeros(F)
    p_corner[tied] = _max_rate_at_budget(c[tied], A / gmax)
    if _rate(p_corner, c) >= r:
        return _finish(sp, p_corner, 1.0 / gmax, 0.0, tol)

    # stage 2b: when no max-gain subcarrier carries rate (all tied ones have
    # c = 0), interior lam cannot place power on them at all — stationarity
    # pins c = 0 subcarriers to zero whenever 1 - lam*g > 0 — so the optimum
    # sits exactly on the boundary lam = 1/gmax: rate-matched powers on the
    # other subcarriers, sensing topped up for free (zero reduced cost) on a
    # tied subcarrier. If the rate powers alone already exceed the sensing
    # target the boundary is not needed and the stage-3 bracket closes.
    if not np.any(tied & (c > 0)):
        # one ulp inside the boundary keeps every 1 - lam*g non-negative
        lam_b = math.nextafter(1.0 / gmax, 0.0)
        try:
            mu_b, p_b = _mu_for_rate(lam_b, g, c, r)
        except FloatingPointError as e:
            return SubproblemSolution(zeros, "numerical-failure", str(e),
                                      0.0, 0.0, 0.0, math.inf, -math.inf)
        topup = (A - float(g @ p_b)) / gmax
        if topup >= 0.0:
            p_b[int(np.argmax(tied))] += topup
            return _finish(sp, p_b, lam_b, mu_b, tol)

    # stage 3: both constraints bind; bisect lam in (0, 1/gmax), where the
    # inner rate-matched powers sweep the sensing value from below A (stage 1
    # failed) to above it (stage 2 failed), keeping the feasible-side iterate
    lo, hi = 0.0, 1.0 / gmax
    best = None
    while True:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        try:
            mu_mid, p_mid = _mu_for_rate(mid, g, c, r)
        except FloatingPointError:
            lo = mid
            continue
        if float(g @ p_mid) >= A:
            hi = mid
            best = (p_mid, mid, mu_mid)
        else:
            lo = mid
    if best is None:
        return SubproblemSolution(zeros, "numerical-failure",
                                  "dual bracket collapsed without a feasible iterate",
                                  0.0, 0.0, 0.0, math.inf, -math.inf)
    return _finish(sp, best[0], best[1], best[2], tol)


@dataclass(frozen=True)
class CandidateSolve:
    """sigma-independent result of the inner solve for one bottleneck width."""
    c: int
    n_b: int
    budget: DelayBudget
    rho_dl: float
    solution: SubproblemSolution | None
    achieved_crb: float
    achieved_rate_bps: float
    reason: str

    @property
    def feasible(self) -> bool:
        return self.solution is not None and self.solution.feasible


@dataclass(frozen=True)
class Allocation:
    p_dl: np.ndarray
    c_choice: int
    rho_dl: float
    objective: float
    total_power_w: float
    achieved_crb: float
    achieved_rate_bps: float
    feasible: bool
    kkt_residual: float
    failure_reasons: dict[int, str] = field(default_factory=dict)


def build_subproblem(s: Scenario, cs: ChannelSet, rho_dl: float) -> ConvexSubproblem:
    dc = derived_constants(s)
    noise = dc.noise_power_w_per_sc
    k_symbols = rho_dl * s.frame_duration_s * s.sc_spacing_hz
    return ConvexSubproblem(
        g_lin=point_target_gains(cs),
        c_lin=dl_rate_coeff_per_sc(cs, noise),
        crb_rhs=noise / (2.0 * k_symbols * s.requirements.crb_theta_th_rad2),
        rate_rhs_bits_per_sc_use=s.requirements.r_dl_th_bps / (rho_dl * s.sc_spacing_hz),
        p_max=s.p_dl_max_w,
    )


def solve_candidates(s: Scenario, cs: ChannelSet,
                     planning_model: InferenceModelProfile,
                     tol: SolverTolerances = SolverTolerances()) -> list[CandidateSolve]:
    """Inner solves for every bottleneck width, planning the DL share with the
    given model's delay quantile. Results carry everything sigma-dependent
    selection needs, so one pass serves the whole sigma grid."""
    out = []
    for c in s.bottleneck_set:
        rep = representation(s, c)
        budget = rho_dl_star(s, cs, rep, planning_model)
        if not budget.feasible:
            out.append(CandidateSolve(c, rep.n_b, budget, 0.0, None,
                                      math.inf, 0.0, budget.reason))
            continue
        sp = build_subproblem(s, cs, budget.rho_dl_star)
        sol = solve_subproblem(sp, tol)
        if not sol.feasible:
            out.append(CandidateSolve(c, rep.n_b, budget, budget.rho_dl_star, sol,
                                      math.inf, 0.0, sol.reason))
            continue
        gains = sensing_gains(sp.g_lin, sol.p_dl, budget.rho_dl_star,
                              s.frame_duration_s, s.sc_spacing_hz)
        crb = crb_theta(gains, derived_constants(s).noise_power_w_per_sc)
        rate = budget.rho_dl_star * s.sc_spacing_hz * _rate(sol.p_dl, sp.c_lin)
        out.append(CandidateSolve(c, rep.n_b, budget, budget.rho_dl_star, sol,
                                  crb, rate, ""))
    return out


def select_allocation(s: Scenario, candidates: list[CandidateSolve],
                      sigma: float) -> Allocation:
    """Score feasible candidates with the scalarized objective and pick the
    minimum; ties prefer the richer representation, then lower power."""
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"sigma must be in [0,1], got {sigma}")
    n_b_max = max(cand.n_b for cand in candidates)
    best = None
    best_key = None
    for cand in candidates:
        if not cand.feasible:
            continue
        obj = (sigma * cand.solution.total_power_w / s.p_dl_max_w
               + (1.0 - sigma) * n_b_max / cand.n_b)
        key = (obj, -cand.n_b, cand.solution.total_power_w)
        if best_key is None or key < best_key:
            best, best_key = (cand, obj), key
    if best is None:
        return Allocation(
            p_dl=np.zeros(s.num_sc), c_choice=0, rho_dl=0.0, objective=math.inf,
            total_power_w=math.nan, achieved_crb=math.nan, achieved_rate_bps=math.nan,
            feasible=False, kkt_residual=math.nan,
            failure_reasons={cand.c: cand.reason for cand in candidates})
    cand, obj = best
    return Allocation(
        p_dl=cand.solution.p_dl, c_choice=cand.c, rho_dl=cand.rho_dl, objective=obj,
        total_power_w=cand.solution.total_power_w, achieved_crb=cand.achieved_crb,
        achieved_rate_bps=cand.achieved_rate_bps, feasible=True,
        kkt_residual=cand.solution.kkt_residual)


def solve_problem_p(s: Scenario, cs: ChannelSet, model: InferenceModelProfile,
                    sigma: float,
                    tol: SolverTolerances = SolverTolerances()) -> Allocation:
    return select_allocation(s, solve_candidates(s, cs, model, tol), sigma)


def solve_compute_unaware(s: Scenario, cs: ChannelSet,
                          true_model: InferenceModelProfile, sigma: float,
                          planning_model: InferenceModelProfile | None = None,
                          tol: SolverTolerances = SolverTolerances()) -> Allocation:
    """Benchmark: plan the DL share as if every model had the heaviest model's
    compute delay. The allocation is later evaluated under true_model; the
    optimization itself never sees it."""
    planner = planning_model if planning_model is not None else s.heaviest_model()
    del true_model  # evaluation-side only; kept in the signature for symmetry
    return select_allocation(s, solve_candidates(s, cs, planner, tol), sigma)
