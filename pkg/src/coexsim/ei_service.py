"""Edge-inference service model: upload volume, UL rate, the latency-driven
DL time share, and the Monte-Carlo goal-effectiveness estimator.

The device uploads one batch of bottleneck features per inference round
(14 x 14 x c scalars per sample). Planning uses a pessimistic compute-delay
quantile to size the communication budget; effectiveness is then evaluated
against true delay realizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, ul_snr_per_sc
from .scenario import (BOTTLENECK_GRID, InferenceModelProfile, Scenario,
                       derived_constants)


@dataclass(frozen=True)
class Representation:
    c: int
    n_b: int


@dataclass(frozen=True)
class DelayBudget:
    feasible: bool
    reason: str
    l_comm_star_s: float
    rho_dl_star: float
    ul_rate_full_frame_bps: float


def n_bits(c: int, batch_size: int, bits_per_scalar: int,
           bottleneck_set: tuple[int, ...] | None = None) -> int:
    if bottleneck_set is not None and c not in bottleneck_set:
        raise ValueError(f"bottleneck dimension {c} not in configured set {bottleneck_set}")
    if c < 1 or batch_size < 1 or bits_per_scalar < 1:
        raise ValueError("c, batch size, and bits per scalar must be positive")
    return BOTTLENECK_GRID * c * bits_per_scalar * batch_size


def representation(s: Scenario, c: int) -> Representation:
    return Representation(c=c, n_b=n_bits(c, s.batch_size, s.bits_per_scalar,
                                          s.bottleneck_set))


def ul_rate(s: Scenario, cs: ChannelSet, rho_ul: float) -> float:
    """Average UL rate in bps when a fraction rho_ul of the frame is uplink."""
    if not 0.0 <= rho_ul <= 1.0:
        raise ValueError(f"rho_ul must be in [0,1], got {rho_ul}")
    noise = derived_constants(s).noise_power_w_per_sc
    snr = ul_snr_per_sc(cs, s.p_ul_total_w / s.num_sc, noise)
    return rho_ul * s.sc_spacing_hz * float(np.sum(np.log2(1.0 + snr)))


def _frames_needed(n_b: int, bits_per_frame: float) -> int:
    """Minimal k with k * bits_per_frame >= n_b under float product semantics.

    The plain ceil of the float ratio can be off by one when the true ratio is
    an exact integer; the correction loops pin k to the same completion test a
    frame-by-frame accumulation would apply.
    """
    k = max(1, math.ceil(n_b / bits_per_frame))
    while k > 1 and (k - 1) * bits_per_frame >= n_b:
        k -= 1
    while k * bits_per_frame < n_b:
        k += 1
    return k


def upload_delay(n_b: int, mean_rate_bps: float, frame_duration_s: float,
                 exact: bool = True) -> float:
    """Time to push n_b bits at rate R: frame-quantized, or the fluid n_b/R."""
    if n_b <= 0:
        raise ValueError("n_b must be > 0")
    if mean_rate_bps <= 0.0:
        return float("inf")
    if not exact:
        return n_b / mean_rate_bps
    bits_per_frame = mean_rate_bps * frame_duration_s
    return _frames_needed(n_b, bits_per_frame) * frame_duration_s


def rho_dl_star(s: Scenario, cs: ChannelSet, rep: Representation,
                model: InferenceModelProfile) -> DelayBudget:
    """Largest DL share that still lets the upload finish inside the latency
    budget left over after the planning quantile of the compute delay."""
    l_comp = model.delay_dist.quantile(model.delay_quantile_for_planning)
    l_star = s.requirements.l_max_s - l_comp
    r_full = ul_rate(s, cs, 1.0)
    if l_star <= 0.0:
        return DelayBudget(False, "no communication budget", l_star, 0.0, r_full)
    rho = 1.0 - rep.n_b / (l_star * r_full) if r_full > 0 else -float("inf")
    if rho <= 0.0:
        return DelayBudget(False, "upload exceeds latency budget", l_star, 0.0, r_full)
    return DelayBudget(True, "", l_star, rho, r_full)


def goal_effectiveness(s: Scenario, rep: Representation, model: InferenceModelProfile,
                       rho_dl: float, cs: ChannelSet, n_trials: int,
                       seed) -> float:
    """Monte-Carlo P(batch quality >= Q_min and total latency <= L_max).

    Draw order is part of the contract (it pins determinism per seed): the
    n_trials compute delays first, then the n_trials x B per-sample correctness
    matrix. Delays use true realizations; the upload term is deterministic.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if not 0.0 <= rho_dl < 1.0 + 1e-12:
        raise ValueError(f"rho_dl must be in [0,1], got {rho_dl}")
    rng = np.random.default_rng(seed)
    rate = ul_rate(s, cs, min(1.0, max(0.0, 1.0 - rho_dl)))
    l_comm = upload_delay(rep.n_b, rate, s.frame_duration_s, exact=True)
    delays = model.delay_dist.sample(rng, n_trials)
    ok_delay = (l_comm + delays) <= s.requirements.l_max_s
    acc = model.accuracy_for(rep.c)
    quality = np.sum(rng.random((n_trials, s.batch_size)) < acc, axis=1)
    return float(np.mean(ok_delay & (quality >= s.requirements.q_min)))
