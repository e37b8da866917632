"""Angle-estimation accuracy bounds for the monostatic sensing link.

Per subcarrier the received sensing snapshot has mean ``alpha * g * s`` with
``g = h_rx * (h_tx w_dl) * sqrt(P)`` and unknowns eta = [theta, Re alpha,
Im alpha]. The 3x3 Fisher information matrix over K snapshots reduces, after
eliminating the nuisance alpha by Schur complement, to a scalar per subcarrier;
subcarriers carry independent nuisances, so the scalars add. The optimizer
consumes the point-target simplification (the projector term dropped), which
keeps gamma linear in the per-subcarrier powers; both forms are exposed and
their ratio is reported so the simplification error is never hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet


@dataclass(frozen=True)
class SensingGains:
    """gamma = g_lin . p_dl, with K = rho_dl * T * W symbols of integration."""

    g_lin: np.ndarray
    gamma: float
    k_symbols: float

    def __post_init__(self):
        self.g_lin.setflags(write=False)
        if np.any(self.g_lin < 0):
            raise ValueError("sensing gain coefficients must be nonnegative")
        # k_symbols == 0 (rho_dl = 0) is representable so crb_theta can map it to +inf
        if self.k_symbols < 0:
            raise ValueError("k_symbols must be >= 0")


def _sc_vectors(cs: ChannelSet, f: int, p_dl_f: float):
    """g and its angle derivative (alpha factored out) on subcarrier f."""
    sqrt_p = np.sqrt(p_dl_f)
    t = cs.h_tx_tgt[f] @ cs.w_dl[f]
    dt = cs.dh_tx_tgt[f] @ cs.w_dl[f]
    g = cs.h_rx_tgt[f] * (t * sqrt_p)
    dg = (cs.dh_rx_tgt[f] * t + cs.h_rx_tgt[f] * dt) * sqrt_p
    return g, dg


def fim_3x3(cs: ChannelSet, f: int, p_dl_f: float, k_symbols: float,
            noise_w: float) -> np.ndarray:
    """FIM of [theta, Re alpha, Im alpha] on subcarrier f, K unit-power symbols."""
    if p_dl_f < 0:
        raise ValueError("p_dl_f must be >= 0")
    if k_symbols <= 0:
        raise ValueError("k_symbols must be > 0")
    g, dg = _sc_vectors(cs, f, p_dl_f)
    a = cs.alpha[f]
    scale = 2.0 * k_symbols / noise_w
    cross = np.conj(a) * np.vdot(dg, g)
    gg = float(np.real(np.vdot(g, g)))
    out = np.array([
        [abs(a) ** 2 * float(np.real(np.vdot(dg, dg))), cross.real, -cross.imag],
        [cross.real, gg, 0.0],
        [-cross.imag, 0.0, gg],
    ])
    return scale * out


def equivalent_fim_theta(cs: ChannelSet, f: int, p_dl_f: float, k_symbols: float,
                         noise_w: float) -> float:
    """Schur complement of the FIM onto theta, via the orthogonal projector."""
    if p_dl_f < 0:
        raise ValueError("p_dl_f must be >= 0")
    if k_symbols <= 0:
        raise ValueError("k_symbols must be > 0")
    g, dg = _sc_vectors(cs, f, p_dl_f)
    gg = float(np.real(np.vdot(g, g)))
    dgdg = float(np.real(np.vdot(dg, dg)))
    if gg == 0.0:
        proj = dgdg
    else:
        proj = dgdg - abs(np.vdot(g, dg)) ** 2 / gg
    return (2.0 * k_symbols / noise_w) * abs(cs.alpha[f]) ** 2 * max(proj, 0.0)


def point_target_gains(cs: ChannelSet) -> np.ndarray:
    """Coefficient of P_dl,f in the simplified gamma: |alpha|^2 ||dh_rx||^2 |h_tx w|^2."""
    t = np.einsum("fi,fi->f", cs.h_tx_tgt, cs.w_dl)
    dh2 = np.sum(np.abs(cs.dh_rx_tgt) ** 2, axis=1)
    return np.abs(cs.alpha) ** 2 * dh2 * np.abs(t) ** 2


def general_gains(cs: ChannelSet) -> np.ndarray:
    """Coefficient of P_dl,f in the projector-form gamma.

    The projector is onto the complement of g; since g is parallel to h_rx the
    illumination-derivative term h_rx*(dh_tx w) is annihilated and only the
    receive-steering derivative survives, shrunk by its overlap with h_rx.
    """
    t = np.einsum("fi,fi->f", cs.h_tx_tgt, cs.w_dl)
    h2 = np.sum(np.abs(cs.h_rx_tgt) ** 2, axis=1)
    dh2 = np.sum(np.abs(cs.dh_rx_tgt) ** 2, axis=1)
    overlap = np.abs(np.einsum("fi,fi->f", cs.h_rx_tgt.conj(), cs.dh_rx_tgt)) ** 2
    perp = dh2 - np.divide(overlap, h2, out=np.zeros_like(h2), where=h2 > 0)
    return np.abs(cs.alpha) ** 2 * np.maximum(perp, 0.0) * np.abs(t) ** 2


def gain_ratio(cs: ChannelSet) -> float:
    """Mean general/simplified gain ratio (1 means the simplification is exact)."""
    simple = point_target_gains(cs)
    general = general_gains(cs)
    mask = simple > 0
    if not np.any(mask):
        return float("nan")
    return float(np.mean(general[mask] / simple[mask]))


def sensing_gains(g_lin: np.ndarray, p_dl: np.ndarray, rho_dl: float,
                  frame_duration_s: float, sc_spacing_hz: float) -> SensingGains:
    g_lin = np.asarray(g_lin, dtype=float)
    p_dl = np.asarray(p_dl, dtype=float)
    if g_lin.shape != p_dl.shape:
        raise ValueError("g_lin and p_dl must have the same shape")
    return SensingGains(
        g_lin=g_lin.copy(),
        gamma=float(g_lin @ p_dl),
        k_symbols=rho_dl * frame_duration_s * sc_spacing_hz,
    )


def crb_theta(gains: SensingGains, noise_w: float) -> float:
    """Aggregated angle CRB: noise / (2 K gamma); +inf with no sensing energy."""
    if gains.gamma <= 0.0 or gains.k_symbols <= 0.0:
        return float("inf")
    return noise_w / (2.0 * gains.k_symbols * gains.gamma)
