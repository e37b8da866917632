"""LOS channel synthesis for one BS serving an uplink device, a downlink user,
and a monostatic sensing target.

Geometry: both BS arrays are half-wavelength ULAs along the x axis with
broadside pointing at +y, so a node at position p (relative to the BS) sits at
angle ``atan2(p_x, p_y)``; broadside is 0 and angles grow clockwise toward +x.
Channel magnitudes are frequency flat; each subcarrier carries the
deterministic propagation phase of its frequency offset, plus an optional
seeded random phase on the sensing return.

Convention: ``h_dl`` and ``h_tx_tgt`` are row vectors, so scalar link gains are
plain products ``h_dl @ w_dl`` and ``h_tx_tgt @ w_dl``. The rank-one sensing
channel is a_rx(theta) a_tx(theta)^T (plain transpose): with the conjugate
matched precoder w = conj(h_dl)/|h_dl| the illumination |h_tx_tgt @ w_dl| then
peaks exactly when the user and target directions coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .scenario import SPEED_OF_LIGHT_M_S, Scenario, derived_constants

FOUR_PI = 4.0 * math.pi


def steering_vector(theta: float, n_elems: int, spacing_over_lambda: float = 0.5) -> np.ndarray:
    """Array response of a ULA, element 0 at the origin; unit-modulus entries."""
    if n_elems < 1:
        raise ValueError("n_elems must be >= 1")
    k = np.arange(n_elems)
    return np.exp(1j * 2.0 * math.pi * spacing_over_lambda * k * math.sin(theta))


def steering_derivative(theta: float, n_elems: int,
                        spacing_over_lambda: float = 0.5) -> np.ndarray:
    """Analytic d/d(theta) of steering_vector at the same angle."""
    if n_elems < 1:
        raise ValueError("n_elems must be >= 1")
    k = np.arange(n_elems)
    phase_rate = 2.0 * math.pi * spacing_over_lambda * k * math.cos(theta)
    return 1j * phase_rate * steering_vector(theta, n_elems, spacing_over_lambda)


def pathloss_amplitude(d_m: float, lambda_m: float, beta: float) -> float:
    """One-way amplitude gain sqrt((lambda/4pi)^2 d^-beta)."""
    if d_m <= 0:
        raise ValueError("distance must be > 0")
    return (lambda_m / FOUR_PI) * d_m ** (-beta / 2.0)


def two_way_amplitude(d_m: float, lambda_m: float, rcs_m2: float) -> float:
    """Monostatic radar-equation amplitude for a point scatterer."""
    if d_m <= 0:
        raise ValueError("distance must be > 0")
    return math.sqrt(lambda_m ** 2 * rcs_m2 / (FOUR_PI ** 3 * d_m ** 4))


def angle_from_bs(position_m, bs_m) -> float:
    dx = position_m[0] - bs_m[0]
    dy = position_m[1] - bs_m[1]
    return math.atan2(dx, dy)


@dataclass(frozen=True)
class ChannelSet:
    """Per-subcarrier channel state; every array has leading dimension num_sc.

    h_ul      (F, n_rx)  device -> BS uplink channel (column vector per SC)
    h_dl      (F, n_tx)  BS -> user downlink channel (row vector per SC)
    h_tx_tgt  (F, n_tx)  transmit steering row toward the target (plain, not
                         conjugated); illumination is the scalar h_tx_tgt @ w_dl
    h_rx_tgt  (F, n_rx)  receive steering toward the target
    dh_rx_tgt (F, n_rx)  d/dtheta of h_rx_tgt
    dh_tx_tgt (F, n_tx)  d/dtheta of h_tx_tgt
    alpha     (F,)       two-way reflection coefficient (radar amplitude + phase)
    w_ul      (F, n_rx)  unit-norm maximum-ratio combiner for the uplink
    w_dl      (F, n_tx)  unit-norm maximum-ratio precoder for the downlink user
    """

    h_ul: np.ndarray
    h_dl: np.ndarray
    h_tx_tgt: np.ndarray
    h_rx_tgt: np.ndarray
    dh_rx_tgt: np.ndarray
    dh_tx_tgt: np.ndarray
    alpha: np.ndarray
    theta_rad: float
    w_ul: np.ndarray
    w_dl: np.ndarray
    theta_ul_rad: float = 0.0
    theta_dl_rad: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v.setflags(write=False)

    @property
    def num_sc(self) -> int:
        return self.alpha.shape[0]

    def save(self, path: str | Path):
        arrays, scalars = {}, {}
        for f in fields(self):
            v = getattr(self, f.name)
            (arrays if isinstance(v, np.ndarray) else scalars)[f.name] = v
        np.savez(path, **arrays, **{k: np.float64(v) for k, v in scalars.items()})

    @classmethod
    def load(cls, path: str | Path) -> "ChannelSet":
        with np.load(path) as data:
            kwargs = {}
            for f in fields(cls):
                v = data[f.name]
                kwargs[f.name] = float(v) if v.ndim == 0 else v.copy()
        return cls(**kwargs)


def build_channels(s: Scenario, seed: int | None = None) -> ChannelSet:
    """Synthesize the three links of the deployment on every subcarrier."""
    dc = derived_constants(s)
    lam = dc.wavelength_m
    spacing = s.element_spacing_wavelengths
    F = s.num_sc
    bs = s.positions.bs_m

    th_ul = angle_from_bs(s.positions.device_m, bs)
    th_dl = angle_from_bs(s.positions.user_m, bs)
    th_t = angle_from_bs(s.positions.target_m, bs)
    d_ul, d_dl, d_t = dc.distances_m["ul"], dc.distances_m["dl"], dc.distances_m["target"]
    for label, d in (("device", d_ul), ("user", d_dl), ("target", d_t)):
        if d <= 0:
            raise ValueError(f"{label} is colocated with the BS (zero link distance)")

    # one-way propagation phase of each subcarrier's frequency offset
    f_off = (np.arange(F) - (F - 1) / 2.0) * s.sc_spacing_hz

    def phases(distance_m: float, ways: int) -> np.ndarray:
        tau = ways * distance_m / SPEED_OF_LIGHT_M_S
        return np.exp(-1j * 2.0 * math.pi * f_off * tau)

    a_rx_ul = steering_vector(th_ul, s.n_rx, spacing)
    a_tx_dl = steering_vector(th_dl, s.n_tx, spacing)
    a_rx_t = steering_vector(th_t, s.n_rx, spacing)
    da_rx_t = steering_derivative(th_t, s.n_rx, spacing)
    a_tx_t = steering_vector(th_t, s.n_tx, spacing)
    da_tx_t = steering_derivative(th_t, s.n_tx, spacing)

    h_ul = pathloss_amplitude(d_ul, lam, s.pathloss_exp) * \
        phases(d_ul, 1)[:, None] * a_rx_ul[None, :]
    h_dl = pathloss_amplitude(d_dl, lam, s.pathloss_exp) * \
        phases(d_dl, 1)[:, None] * a_tx_dl[None, :]
    w_ul = h_ul / np.linalg.norm(h_ul, axis=1, keepdims=True)
    w_dl = h_dl.conj() / np.linalg.norm(h_dl, axis=1, keepdims=True)

    alpha = two_way_amplitude(d_t, lam, s.rcs_m2) * phases(d_t, 2)
    if s.random_phase:
        rng = np.random.default_rng(0 if seed is None else seed)
        alpha = alpha * np.exp(1j * 2.0 * math.pi * rng.random(F))

    ones = np.ones((F, 1))
    return ChannelSet(
        h_ul=h_ul, h_dl=h_dl,
        h_tx_tgt=ones * a_tx_t[None, :],
        h_rx_tgt=ones * a_rx_t[None, :],
        dh_rx_tgt=ones * da_rx_t[None, :],
        dh_tx_tgt=ones * da_tx_t[None, :],
        alpha=alpha,
        theta_rad=th_t,
        w_ul=w_ul, w_dl=w_dl,
        theta_ul_rad=th_ul, theta_dl_rad=th_dl,
    )


def ul_snr_per_sc(cs: ChannelSet, p_ul_per_sc, noise_w: float) -> np.ndarray:
    """Post-combining uplink SNR per subcarrier: P_f |w_ul^H h_ul|^2 / noise."""
    p = np.broadcast_to(np.asarray(p_ul_per_sc, dtype=float), (cs.num_sc,))
    if np.any(p < 0):
        raise ValueError("powers must be >= 0")
    gain = np.abs(np.einsum("fi,fi->f", cs.w_ul.conj(), cs.h_ul)) ** 2
    return p * gain / noise_w


def dl_snr_per_sc(cs: ChannelSet, p_dl_per_sc, noise_w: float) -> np.ndarray:
    """Beamformed downlink SNR per subcarrier: P_f |h_dl w_dl|^2 / noise."""
    p = np.broadcast_to(np.asarray(p_dl_per_sc, dtype=float), (cs.num_sc,))
    if np.any(p < 0):
        raise ValueError("powers must be >= 0")
    gain = np.abs(np.einsum("fi,fi->f", cs.h_dl, cs.w_dl)) ** 2
    return p * gain / noise_w


def dl_rate_coeff_per_sc(cs: ChannelSet, noise_w: float) -> np.ndarray:
    """Per-watt DL SNR coefficients c_f = |h_dl w_dl|^2 / noise."""
    return dl_snr_per_sc(cs, np.ones(cs.num_sc), noise_w)
