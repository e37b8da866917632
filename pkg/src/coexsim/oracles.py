"""Independent reference implementations used to cross-check the fast paths.

Everything here prefers clarity and independence over speed: closed forms
where they exist, finite differences for derivatives, dense grid search with
local refinement for the convex subproblem, and textbook distribution algebra
for the effectiveness estimator. The main code never calls these for results;
tests and the verification command compare against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .channel import ChannelSet, steering_derivative, steering_vector
from .ei_service import upload_delay, ul_rate
from .scenario import InferenceModelProfile, Scenario
from .solver import ConvexSubproblem

LN2 = math.log(2.0)


def waterfill_closed_form(c_lin: np.ndarray, r: float) -> np.ndarray:
    """Minimum-power allocation meeting sum log2(1+cP) >= r, by the sorted
    active-set construction (no iteration): with the k strongest channels
    active the water level is nu_k = (2^r / prod c_i)^(1/k); pick the largest
    k whose level covers its weakest active channel."""
    c_lin = np.asarray(c_lin, dtype=float)
    p = np.zeros_like(c_lin)
    if r <= 0:
        return p
    order = np.argsort(-c_lin)
    c_sorted = c_lin[order]
    if c_sorted[0] <= 0:
        raise ValueError("rate target unreachable: no positive rate coefficient")
    best_level, best_k = None, 0
    for k in range(1, len(c_sorted) + 1):
        if c_sorted[k - 1] <= 0:
            break
        # log-domain to dodge overflow for large r
        log2_nu = (r - float(np.sum(np.log2(c_sorted[:k])))) / k
        nu = 2.0 ** log2_nu
        if nu >= 1.0 / c_sorted[k - 1]:
            best_level, best_k = nu, k
    if best_k == 0:
        # level below even the strongest channel's floor cannot happen for r>0
        raise ValueError("active-set construction failed")
    p[order[:best_k]] = best_level - 1.0 / c_sorted[:best_k]
    return np.maximum(p, 0.0)


def subproblem_power_upper_bound(sp: ConvexSubproblem) -> float:
    """A certified bound: the sum of the two single-constraint optima is
    feasible for both constraints, so the true optimum costs no more."""
    corner = 0.0
    if sp.crb_rhs > 0:
        gmax = float(np.max(sp.g_lin))
        if gmax <= 0:
            return math.inf
        corner = sp.crb_rhs / gmax
    wf_total = 0.0
    if sp.rate_rhs_bits_per_sc_use > 0:
        wf_total = float(np.sum(waterfill_closed_form(sp.c_lin,
                                                      sp.rate_rhs_bits_per_sc_use)))
    return corner + wf_total


@dataclass(frozen=True)
class GridSearchResult:
    p_dl: np.ndarray | None
    total_power_w: float
    feasible: bool
    evaluations: int


def grid_search_subproblem(sp: ConvexSubproblem, n: int = 13, rounds: int = 12,
                           enforce_budget: bool = True, starts: int = 4) -> GridSearchResult:
    """Brute-force the subproblem on [0, U]^F lattices with shrinking boxes.

    U bounds every coordinate of some optimum (subproblem_power_upper_bound).
    A single shrinking box can lock onto a near-optimal vertex of the almost
    flat constraint face and exclude the true optimum forever, so refinement
    is multi-start: up to ``starts`` well-separated cheapest feasible points
    of the full-box scan, plus the superposition of the two single-constraint
    optima (always constraint-feasible), each refined independently with a
    box of a third the width per round. Boxes with no feasible lattice point
    re-center on the least-violating point and keep shrinking.
    """
    g, c = sp.g_lin, sp.c_lin
    A, r = sp.crb_rhs, sp.rate_rhs_bits_per_sc_use
    F = g.shape[0]
    u = subproblem_power_upper_bound(sp)
    if not math.isfinite(u):
        return GridSearchResult(None, math.inf, False, 0)
    u = min(u, sp.p_max) if enforce_budget else u
    u = max(u, 1e-300)
    slack = 1.0 - 1e-12
    evals = 0

    def scan(lo: np.ndarray, hi: np.ndarray):
        axes = [np.linspace(lo[i], hi[i], n) for i in range(F)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, F)
        sens = mesh @ g
        rate = np.sum(np.log2(1.0 + c[None, :] * mesh), axis=1)
        total = mesh.sum(axis=1)
        ok = (sens >= A * slack) & (rate >= r * slack)
        if enforce_budget:
            ok &= total <= sp.p_max * (1.0 + 1e-12)
        viol = np.maximum(0.0, A * slack - sens) / max(A, 1e-300) \
            + np.maximum(0.0, r * slack - rate) / max(r, 1e-300) \
            + np.maximum(0.0, total - sp.p_max) / sp.p_max
        return mesh, ok, total, viol

    mesh, ok, total, viol = scan(np.zeros(F), np.full(F, u))
    evals += mesh.shape[0]

    best_p, best_total = None, math.inf
    seeds: list[np.ndarray] = []
    sep = 1.5 * u / (n - 1)

    def try_seed(p: np.ndarray) -> None:
        if all(float(np.max(np.abs(p - s))) >= sep for s in seeds):
            seeds.append(np.asarray(p, dtype=float).copy())

    if np.any(ok):
        fpts, ftot = mesh[ok], total[ok]
        order = np.argsort(ftot, kind="stable")
        best_p, best_total = fpts[order[0]].copy(), float(ftot[order[0]])
        for idx in order:
            if len(seeds) >= starts:
                break
            try_seed(fpts[idx])
    superpos = np.zeros(F)
    if A > 0:
        superpos[int(np.argmax(g))] = A / float(np.max(g))
    if r > 0 and np.any(c > 0):
        superpos = superpos + waterfill_closed_form(c, r)
    try_seed(superpos)
    if best_p is None:
        # nothing feasible on the coarse lattice: crawl from the least bad point
        try_seed(mesh[int(np.argmin(viol))])

    for seed in seeds:
        center = seed
        width = np.full(F, u) / 3.0
        for _ in range(rounds):
            lo = np.maximum(center - width / 2.0, 0.0)
            mesh, ok, total, viol = scan(lo, lo + width)
            evals += mesh.shape[0]
            if np.any(ok):
                fpts, ftot = mesh[ok], total[ok]
                i = int(np.argmin(ftot))
                center = fpts[i]
                if ftot[i] < best_total:
                    best_total, best_p = float(ftot[i]), fpts[i].copy()
            else:
                center = mesh[int(np.argmin(viol))]
            width /= 3.0

    if best_p is None:
        return GridSearchResult(None, math.inf, False, evals)
    return GridSearchResult(best_p, best_total, True, evals)


def _inner_lagrangian_min(slope: np.ndarray, mu: np.ndarray, c: np.ndarray) -> np.ndarray:
    """min over P >= 0 of P*slope - mu*log2(1 + c P), elementwise-vectorized.

    Requires slope > 0 (caller masks the rest). Bracket by doubling — for a
    convex f, f(2H) >= f(H) proves the minimizer lies in [0, 2H] — then golden
    section. Deliberately avoids the stationarity closed form the fast solver
    is built on, so this route cannot inherit its algebra errors.
    """
    slope, mu, c = np.broadcast_arrays(slope, mu, c)
    slope = np.asarray(slope, dtype=float)

    def f(p: np.ndarray) -> np.ndarray:
        return p * slope - mu * np.log2(1.0 + c * p)

    hi = np.ones_like(slope)
    for _ in range(200):
        grow = f(2.0 * hi) < f(hi)
        if not np.any(grow):
            break
        hi = np.where(grow, 2.0 * hi, hi)
    a = np.zeros_like(slope)
    b = 2.0 * hi
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(60):
        take1 = f1 <= f2
        b = np.where(take1, x2, b)
        a = np.where(take1, a, x1)
        x1 = b - invphi * (b - a)
        x2 = a + invphi * (b - a)
        f1, f2 = f(x1), f(x2)
    # P = 0 always scores exactly 0, so the true inner min is never positive
    return np.minimum(f((a + b) / 2.0), 0.0)


def dual_grid_lower_bound(sp: ConvexSubproblem, n: int = 17, rounds: int = 24,
                          witness: tuple[float, float] | None = None) -> float:
    """Grid search over the dual plane (lam, mu) of the budget-free subproblem.

    Every evaluated point is a certified lower bound on the primal optimum by
    weak duality, so the returned max-over-everything-evaluated is one too.
    Two search stages: a global shrink-around-best lattice, and, when a
    ``witness`` multiplier pair is supplied (e.g. the duals a solver under
    test reports), a fine lattice centered there. Seeding with the witness is
    not circular — a wrong witness can only make the bound weaker, never
    certify a wrong objective. Returns +inf when the dual is unbounded in a
    direction the box can certify (positive sensing target with no positive
    gain, or positive rate target with no positive rate coefficient), which
    means the primal is infeasible.
    """
    g, c = sp.g_lin, sp.c_lin
    A, r = sp.crb_rhs, sp.rate_rhs_bits_per_sc_use
    if A <= 0 and r <= 0:
        return 0.0
    gmax = float(np.max(g)) if g.size else 0.0
    if (A > 0 and gmax <= 0) or (r > 0 and not np.any(c > 0)):
        return math.inf
    lam_top = (1.0 - 1e-12) / gmax if A > 0 else 0.0
    mu_top = 0.0
    if r > 0:
        u = subproblem_power_upper_bound(sp)
        mu_top = 10.0 * LN2 * (u + 1.0 / float(np.min(c[c > 0])))

    czero = c <= 0

    def q(lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
        # lam, mu: (M,) -> dual values (M,)
        slope = 1.0 - lam[:, None] * g[None, :]
        ok = np.all(slope > 0, axis=1)
        val = np.full(lam.shape, -math.inf)
        if np.any(ok):
            s = slope[ok]
            m = np.broadcast_to(mu[ok, None], s.shape)
            cc = np.broadcast_to(c[None, :], s.shape)
            inner = _inner_lagrangian_min(s, m, cc)
            # c == 0 subcarriers contribute min P*slope = 0
            inner = np.where(np.broadcast_to(czero[None, :], s.shape), 0.0, inner)
            val[ok] = lam[ok] * A + mu[ok] * r + inner.sum(axis=1)
        return val

    best = -math.inf

    def run_box(lam_lo: float, lam_hi: float, mu_lo: float, mu_hi: float,
                nrounds: int) -> None:
        nonlocal best
        b_lam, b_mu = (lam_lo + lam_hi) / 2.0, (mu_lo + mu_hi) / 2.0
        for _ in range(nrounds):
            lam_ax = np.linspace(lam_lo, lam_hi, n)
            mu_ax = np.linspace(mu_lo, mu_hi, n)
            lam_m, mu_m = np.meshgrid(lam_ax, mu_ax, indexing="ij")
            vals = q(lam_m.ravel(), mu_m.ravel())
            i = int(np.argmax(vals))
            if vals[i] > best:
                best = float(vals[i])
                b_lam, b_mu = float(lam_m.ravel()[i]), float(mu_m.ravel()[i])
            lam_w = (lam_hi - lam_lo) / 2.0
            mu_w = (mu_hi - mu_lo) / 2.0
            lam_lo = min(max(b_lam - lam_w / 2.0, 0.0), lam_top)
            lam_hi = min(lam_lo + lam_w, lam_top)
            mu_lo = min(max(b_mu - mu_w / 2.0, 0.0), mu_top)
            mu_hi = min(mu_lo + mu_w, mu_top)

    run_box(0.0, lam_top, 0.0, mu_top, rounds)
    if witness is not None:
        w_lam = min(max(float(witness[0]), 0.0), lam_top)
        w_mu = min(max(float(witness[1]), 0.0), mu_top)
        best = max(best, float(q(np.array([w_lam]), np.array([w_mu]))[0]))
        lam_w = max(lam_top * 1e-3, abs(w_lam) * 1e-3)
        mu_w = max(mu_top * 1e-3, abs(w_mu) * 1e-3)
        run_box(min(max(w_lam - lam_w, 0.0), lam_top),
                min(w_lam + lam_w, lam_top) if lam_top > 0 else 0.0,
                min(max(w_mu - mu_w, 0.0), mu_top),
                min(w_mu + mu_w, mu_top) if mu_top > 0 else 0.0, 16)
    return best


def random_subproblem(rng: np.random.Generator, num_sc: int | None = None) -> ConvexSubproblem:
    """Instance generator shared by the test suite and the verification CLI.

    Coefficients span the magnitudes the real scenarios produce; right-hand
    sides are drawn around a random reference allocation so optima land at
    interesting interior/corner mixes, and the budget is occasionally tight.
    """
    F = int(num_sc) if num_sc is not None else int(rng.integers(1, 5))
    g = 10.0 ** rng.uniform(-9.0, -6.0, F)
    c = 10.0 ** rng.uniform(3.0, 7.0, F)
    if F > 1 and rng.random() < 0.25:
        g[rng.integers(F)] = 0.0
    if F > 1 and rng.random() < 0.15:
        c[rng.integers(F)] = 0.0
    if not np.any(c > 0):
        c[0] = 1.0e5
    ref = 10.0 ** rng.uniform(-3.0, -0.5, F)
    a_rhs = 0.0 if rng.random() < 0.15 else float(g @ ref) * rng.uniform(0.3, 1.5)
    if not np.any(g > 0):
        a_rhs = 0.0
    r_rhs = 0.0 if rng.random() < 0.15 else \
        float(np.sum(np.log2(1.0 + c * ref))) * rng.uniform(0.3, 1.2)
    sp_unbudgeted = ConvexSubproblem(g_lin=g, c_lin=c, crb_rhs=a_rhs,
                                     rate_rhs_bits_per_sc_use=r_rhs, p_max=1e9)
    u = subproblem_power_upper_bound(sp_unbudgeted)
    p_max = u * rng.uniform(0.6, 1.1) if rng.random() < 0.15 else u * 10.0
    return ConvexSubproblem(g_lin=g, c_lin=c, crb_rhs=a_rhs,
                            rate_rhs_bits_per_sc_use=r_rhs, p_max=max(p_max, 1e-12))


def fd_steering_derivative(theta: float, n_elems: int, spacing_over_lambda: float,
                           h: float = 1e-6) -> np.ndarray:
    fwd = steering_vector(theta + h, n_elems, spacing_over_lambda)
    bwd = steering_vector(theta - h, n_elems, spacing_over_lambda)
    return (fwd - bwd) / (2.0 * h)


def fd_fim_3x3(theta: float, alpha: complex, w_dl_row: np.ndarray, n_rx: int,
               n_tx: int, spacing_over_lambda: float, p_dl_f: float,
               k_symbols: float, noise_w: float, h: float = 1e-7) -> np.ndarray:
    """FIM assembled from numerically differentiated mean vectors.

    The mean of one snapshot is mu(theta, aR, aI) = (aR + j aI) *
    a_rx(theta) * (a_tx(theta)^H w) * sqrt(P); entries are
    (2K/noise) Re{dmu_i^H dmu_j} with the theta derivative finite-differenced
    and the (linear) alpha derivatives exact.
    """
    def mean(th: float, a: complex) -> np.ndarray:
        t = steering_vector(th, n_tx, spacing_over_lambda) @ w_dl_row
        return a * steering_vector(th, n_rx, spacing_over_lambda) * t * math.sqrt(p_dl_f)

    dmu = [
        (mean(theta + h, alpha) - mean(theta - h, alpha)) / (2.0 * h),
        mean(theta, 1.0),
        1j * mean(theta, 1.0),
    ]
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = (2.0 * k_symbols / noise_w) * float(np.real(np.vdot(dmu[i], dmu[j])))
    return out


def synthetic_target_channelset(rng: np.random.Generator, num_sc: int = 1,
                                spacing_over_lambda: float = 0.5) -> ChannelSet:
    """Small randomized ChannelSet for sensing-algebra checks: random target
    angle, array sizes, unit-norm precoder, and reflection coefficient."""
    n_rx = int(rng.integers(2, 9))
    n_tx = int(rng.integers(2, 9))
    theta = float(rng.uniform(-1.2, 1.2))
    w = rng.normal(size=n_tx) + 1j * rng.normal(size=n_tx)
    w = w / np.linalg.norm(w)
    a_rx = steering_vector(theta, n_rx, spacing_over_lambda)
    da_rx = steering_derivative(theta, n_rx, spacing_over_lambda)
    a_tx = steering_vector(theta, n_tx, spacing_over_lambda)
    da_tx = steering_derivative(theta, n_tx, spacing_over_lambda)
    ones = np.ones((num_sc, 1))
    alpha = (10.0 ** rng.uniform(-8, -4)) * np.exp(1j * rng.uniform(0, 2 * math.pi, num_sc))
    h_ul = ones * (rng.normal(size=n_rx) + 1j * rng.normal(size=n_rx))[None, :]
    h_dl = ones * (rng.normal(size=n_tx) + 1j * rng.normal(size=n_tx))[None, :]
    return ChannelSet(
        h_ul=h_ul, h_dl=h_dl,
        h_tx_tgt=ones * a_tx[None, :],
        h_rx_tgt=ones * a_rx[None, :],
        dh_rx_tgt=ones * da_rx[None, :],
        dh_tx_tgt=ones * da_tx[None, :],
        alpha=alpha,
        theta_rad=theta,
        w_ul=h_ul / np.linalg.norm(h_ul, axis=1, keepdims=True),
        w_dl=ones * w[None, :],
    )


def schur_theta_from_fim(J: np.ndarray) -> float:
    """(theta,theta) information after eliminating the nuisance block, by
    plain 2x2 block inversion."""
    return float(J[0, 0] - J[0, 1:] @ np.linalg.inv(J[1:, 1:]) @ J[1:, 0])


def analytic_effectiveness(s: Scenario, c: int, n_b: int,
                           model: InferenceModelProfile, rho_dl: float,
                           cs) -> float:
    """Closed-form E{1(Q >= Q_min) 1(L <= L_max)} under independence.

    The upload term is deterministic, so the latency factor is the compute
    delay's CDF at the remaining budget; the quality factor is an exact
    binomial tail.
    """
    rate = ul_rate(s, cs, 1.0 - rho_dl)
    l_comm = upload_delay(n_b, rate, s.frame_duration_s, exact=True)
    budget = s.requirements.l_max_s - l_comm
    dd = model.delay_dist
    if dd.kind == "fixed":
        p_delay = 1.0 if dd.value_s <= budget else 0.0
    elif dd.kind == "empirical":
        p_delay = float(np.mean(np.asarray(dd.samples_s) <= budget))
    else:
        if budget <= 0:
            p_delay = 0.0
        else:
            s2 = math.log1p(dd.cv * dd.cv)
            mu = math.log(dd.mean_s) - 0.5 * s2
            p_delay = float(stats.norm.cdf((math.log(budget) - mu) / math.sqrt(s2)))
    acc = model.accuracy_for(c)
    p_quality = float(stats.binom.sf(s.requirements.q_min - 1, s.batch_size, acc))
    return p_delay * p_quality
