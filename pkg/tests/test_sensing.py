"""Angle-CRB algebra: the 3x3 information matrix, its Schur reduction, the
point-target simplification, and the aggregated bound.

Oracles: a finite-difference FIM built from numerically differentiated mean
vectors (independent of the analytic derivative algebra), plain 2x2 block
inversion for the Schur step, and an exact-rational expression for the
general/simplified gain ratio of a half-wavelength ULA:

    ratio = 1 - (sum k)^2 / (N sum k^2),   k = 0..N-1,

which follows from a^H(theta) da(theta) = j pi cos(theta) sum(k): the cos^2
factors cancel, so the ratio depends on the array size only. For N = 16 it is
exactly 17/62.
"""

import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from coexsim.channel import ChannelSet, steering_derivative, steering_vector
from coexsim.oracles import (
    fd_fim_3x3,
    schur_theta_from_fim,
    synthetic_target_channelset,
)
from coexsim.sensing import (
    SensingGains,
    crb_theta,
    equivalent_fim_theta,
    fim_3x3,
    gain_ratio,
    general_gains,
    point_target_gains,
    sensing_gains,
)


def _ula_ratio(n: int) -> float:
    k = range(n)
    return float(1 - Fraction(sum(k) ** 2, n * sum(i * i for i in k)))


# --- 3x3 FIM ---------------------------------------------------------------------

def test_fim_zero_power_is_zero(desk_channels):
    assert np.array_equal(fim_3x3(desk_channels, 0, 0.0, 1e4, 1e-14),
                          np.zeros((3, 3)))


def test_fim_linear_in_power_and_snapshots(desk_channels):
    base = fim_3x3(desk_channels, 3, 0.01, 2048.0, 1e-14)
    assert np.array_equal(fim_3x3(desk_channels, 3, 0.04, 2048.0, 1e-14), 4.0 * base)
    assert np.array_equal(fim_3x3(desk_channels, 3, 0.01, 8192.0, 1e-14), 4.0 * base)


def test_fim_symmetric_and_psd(desk_channels):
    J = fim_3x3(desk_channels, 0, 0.02, 1e4, 1e-14)
    assert np.array_equal(J, J.T)
    assert np.all(np.linalg.eigvalsh(J) > -1e-9 * np.max(J))


def test_fim_rejects_bad_arguments(desk_channels):
    with pytest.raises(ValueError):
        fim_3x3(desk_channels, 0, -0.1, 1e4, 1e-14)
    with pytest.raises(ValueError):
        fim_3x3(desk_channels, 0, 0.1, 0.0, 1e-14)


# --- Schur reduction ---------------------------------------------------------------

def test_schur_of_fim_equals_closed_form_on_random_instances():
    rng = np.random.default_rng(314159)
    for _ in range(30):
        cs = synthetic_target_channelset(rng)
        p = 10.0 ** rng.uniform(-3, 0)
        k = 10.0 ** rng.uniform(2, 6)
        noise = 10.0 ** rng.uniform(-16, -12)
        closed = equivalent_fim_theta(cs, 0, p, k, noise)
        from_fim = schur_theta_from_fim(fim_3x3(cs, 0, p, k, noise))
        assert from_fim == pytest.approx(closed, rel=1e-8, abs=1e-300)


def test_schur_of_finite_difference_fim_matches_closed_form():
    rng = np.random.default_rng(271828)
    for _ in range(30):
        cs = synthetic_target_channelset(rng)
        p = 10.0 ** rng.uniform(-3, 0)
        k = 10.0 ** rng.uniform(2, 6)
        noise = 10.0 ** rng.uniform(-16, -12)
        closed = equivalent_fim_theta(cs, 0, p, k, noise)
        fd = schur_theta_from_fim(fd_fim_3x3(
            cs.theta_rad, complex(cs.alpha[0]), np.asarray(cs.w_dl[0]),
            cs.h_rx_tgt.shape[1], cs.h_tx_tgt.shape[1], 0.5, p, k, noise))
        assert fd == pytest.approx(closed, rel=1e-4, abs=1e-300)


def test_single_rx_element_leaves_no_angle_information():
    """With one receive element the derivative direction collapses onto the
    nuisance direction, so the projector annihilates everything."""
    theta, n_tx = 0.37, 6
    w = np.ones(n_tx, dtype=complex) / math.sqrt(n_tx)
    ones = np.ones((1, 1))
    cs = ChannelSet(
        h_ul=ones * np.ones((1, 1), dtype=complex),
        h_dl=ones * np.ones((1, n_tx), dtype=complex),
        h_tx_tgt=ones * steering_vector(theta, n_tx)[None, :],
        h_rx_tgt=ones * steering_vector(theta, 1)[None, :],
        dh_rx_tgt=ones * steering_derivative(theta, 1)[None, :],
        dh_tx_tgt=ones * steering_derivative(theta, n_tx)[None, :],
        alpha=np.array([1e-6 + 0j]),
        theta_rad=theta,
        w_ul=np.ones((1, 1), dtype=complex),
        w_dl=ones * w[None, :],
    )
    assert equivalent_fim_theta(cs, 0, 0.1, 1e4, 1e-14) == pytest.approx(0.0, abs=1e-20)
    assert general_gains(cs)[0] == pytest.approx(0.0, abs=1e-30)


# --- gain coefficients ---------------------------------------------------------------

def test_general_gains_never_exceed_simplified(desk_channels):
    simple = point_target_gains(desk_channels)
    general = general_gains(desk_channels)
    assert np.all(general <= simple * (1.0 + 1e-12))
    assert np.all(general >= 0.0) and np.all(simple >= 0.0)


def test_gain_ratio_desk_is_17_over_62(desk_channels):
    # [DERIVED] exact rational for a 16-element half-wavelength ULA
    assert 1 - Fraction(120 ** 2, 16 * 1240) == Fraction(17, 62)  # self-check
    assert gain_ratio(desk_channels) == pytest.approx(_ula_ratio(16), rel=1e-12)
    assert gain_ratio(desk_channels) == pytest.approx(17.0 / 62.0, rel=1e-12)


def test_gain_ratio_depends_only_on_rx_array_size():
    rng = np.random.default_rng(99)
    for _ in range(10):
        cs = synthetic_target_channelset(rng)
        n_rx = cs.h_rx_tgt.shape[1]
        assert gain_ratio(cs) == pytest.approx(_ula_ratio(n_rx), rel=1e-12)


def test_gains_invariant_to_reflection_phase(desk_channels):
    rotated = dataclasses.replace(
        desk_channels, alpha=desk_channels.alpha * np.exp(1j * 0.7))
    np.testing.assert_allclose(point_target_gains(rotated),
                               point_target_gains(desk_channels), rtol=1e-12)
    np.testing.assert_allclose(general_gains(rotated),
                               general_gains(desk_channels), rtol=1e-12)


def test_desk_gain_coefficient_value(desk_channels):
    # [DERIVED] |alpha|^2 * pi^2 sum(k^2) * 16 pl_dl^2-free illumination:
    # frozen from the scalar hand route after the convention fix
    assert point_target_gains(desk_channels)[0] == \
        pytest.approx(5.3678657978295135e-08, rel=1e-9)


# --- aggregated CRB --------------------------------------------------------------------

def test_sensing_gains_gamma_is_inner_product(desk_channels):
    g = point_target_gains(desk_channels)
    p = np.linspace(0.0, 0.01, g.size)
    gains = sensing_gains(g, p, 0.8, 0.002, 781250.0)
    assert gains.gamma == float(g @ p)
    assert gains.k_symbols == 0.8 * 0.002 * 781250.0


def test_sensing_gains_validation():
    with pytest.raises(ValueError):
        sensing_gains(np.ones(3), np.ones(2), 0.5, 0.002, 781250.0)
    with pytest.raises(ValueError):
        SensingGains(g_lin=np.array([-1.0]), gamma=0.0, k_symbols=1.0)


def test_crb_scaling_is_exact():
    # CRB(c * P) = CRB(P) / c holds bit-for-bit for power-of-two c
    g = np.array([3.1e-8, 1.7e-8, 2.3e-8])
    p = np.array([0.011, 0.002, 0.0071])
    lo = crb_theta(sensing_gains(g, p, 0.9, 0.002, 781250.0), 3.11e-14)
    hi = crb_theta(sensing_gains(g, 16.0 * p, 0.9, 0.002, 781250.0), 3.11e-14)
    assert hi * 16.0 == lo


def test_crb_formula(desk_scenario, desk_channels):
    # noise / (2 K gamma), straight from the definition
    g = point_target_gains(desk_channels)
    p = np.full(g.size, 0.001)
    gains = sensing_gains(g, p, 0.75, desk_scenario.frame_duration_s,
                          desk_scenario.sc_spacing_hz)
    noise = 3.1102122699492075e-14
    expect = noise / (2.0 * gains.k_symbols * gains.gamma)
    assert crb_theta(gains, noise) == pytest.approx(expect, rel=1e-15)


def test_crb_infinite_without_energy_or_time():
    g = np.array([1e-8])
    assert crb_theta(sensing_gains(g, np.zeros(1), 0.5, 0.002, 781250.0),
                     1e-14) == math.inf
    assert crb_theta(sensing_gains(g, np.ones(1), 0.0, 0.002, 781250.0),
                     1e-14) == math.inf
