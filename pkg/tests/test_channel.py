import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semcontest import channel
from semcontest.channel import LinkModel
from semcontest.errors import InfeasibleError, OutageLimitError, ParameterError

mp.mp.dps = 50
GAMMA = channel.calibrated_snr_threshold()


def link(power=50.0, gain=1e-4, gamma=GAMMA, bandwidth=5e6, noise=9e-6):
    return LinkModel(bandwidth, noise, gamma, gain, power)


def hp_rate(b, p, g, n):
    return mp.mpf(b) * mp.log(1 + mp.mpf(p) * mp.mpf(g) / mp.mpf(n)) / mp.log(2)


def hp_outage(gamma, n, p):
    return 1 - mp.exp(-mp.mpf(gamma) * mp.mpf(n) / mp.mpf(p))


def test_rate_zero_power():
    assert channel.data_rate(link(power=0.0)) == 0.0


def test_rate_snr_three():
    lk = LinkModel(5e6, 1.0, 1.0, 1.0, 3.0)
    assert channel.data_rate(lk) == pytest.approx(10e6, rel=1e-15)


def test_rate_table_point():
    expected = hp_rate(5e6, 50, 1e-4, 9e-6)
    assert float(channel.data_rate(link())) == pytest.approx(float(expected), rel=1e-12)


def test_outage_half():
    lk = LinkModel(5e6, 1.0, math.log(2), 1e-4, 1.0)
    assert channel.outage_probability(lk) == pytest.approx(0.5, rel=1e-15)


def test_outage_one_minus_inv_e():
    lk = LinkModel(5e6, 2.0, 3.0, 1e-4, 6.0)
    assert channel.outage_probability(lk) == pytest.approx(0.6321205588285577, rel=1e-14)


def test_outage_vanishes_at_large_power():
    assert channel.outage_probability(link(power=1e15)) < 1e-12


def test_outage_zero_power_flags_limit():
    with pytest.raises(OutageLimitError) as info:
        channel.outage_probability(link(power=0.0))
    assert info.value.value == 1.0


def test_min_power_inverse_e():
    lk = link()
    theta = 1 - math.exp(-1)
    assert channel.min_power_for_outage(lk, theta) == pytest.approx(GAMMA * 9e-6, rel=1e-14)


def test_min_power_half():
    lk = link()
    assert channel.min_power_for_outage(lk, 0.5) == pytest.approx(GAMMA * 9e-6 / math.log(2),
                                                                  rel=1e-14)


def test_calibrated_threshold_puts_floor_at_five():
    lk = link()
    pmin = channel.min_power_for_outage(lk, 0.05)
    assert pmin == pytest.approx(5.0, rel=1e-14)
    assert channel.outage_probability(lk.with_power(pmin)) == pytest.approx(0.05, abs=1e-12)


@pytest.mark.parametrize("theta", [0.0, 1.0, -0.1, 1.5])
def test_min_power_rejects_theta(theta):
    with pytest.raises(ParameterError):
        channel.min_power_for_outage(link(), theta)


def test_compression_level_unit():
    lk = link()
    eff = channel.effective_rate(lk)
    assert channel.compression_level(eff, 1.0, lk) == pytest.approx(1.0, rel=1e-14)
    assert channel.compression_level(4 * eff, 1.0, lk) == pytest.approx(2.0, rel=1e-14)


def test_compression_level_table_point():
    lk = link(power=5.0)
    d = hp_rate(5e6, 5, 1e-4, 9e-6) * (1 - hp_outage(GAMMA, 9e-6, 5))
    expected = mp.sqrt(mp.mpf(1e6) * 30 / d)
    assert channel.compression_level(1e6, 30, lk) == pytest.approx(float(expected), rel=1e-12)


def test_compression_level_zero_power_infeasible():
    with pytest.raises(InfeasibleError):
        channel.compression_level(1e6, 30, link(power=0.0))


@pytest.mark.parametrize("field,value", [("bandwidth_hz", 0.0), ("noise_mw", -1.0),
                                         ("snr_threshold", 0.0), ("gain", 0.0),
                                         ("power_mw", -1.0)])
def test_link_invariants(field, value):
    kwargs = dict(bandwidth_hz=5e6, noise_mw=9e-6, snr_threshold=1.0, gain=1e-4, power_mw=1.0)
    kwargs[field] = value
    with pytest.raises(ParameterError):
        LinkModel(**kwargs)


def test_vectorized_matches_scalar():
    powers = np.linspace(5, 100, 20)
    vec = channel.compression_level(1e6, 30, link(power=powers))
    for p, z in zip(powers, vec):
        assert z == channel.compression_level(1e6, 30, link(power=float(p)))


positive_power = st.floats(0.01, 1e4)
gains = st.floats(1e-7, 1.0)


@settings(max_examples=200, deadline=None)
@given(p1=positive_power, p2=positive_power, g=gains)
def test_monotone_in_power(p1, p2, g):
    lo, hi = sorted((p1, p2))
    a, b = link(power=lo, gain=g), link(power=hi, gain=g)
    assert channel.data_rate(a) <= channel.data_rate(b)
    assert channel.outage_probability(a) >= channel.outage_probability(b)
    assert channel.compression_level(1e6, 30, a) >= channel.compression_level(1e6, 30, b)


@settings(max_examples=200, deadline=None)
@given(p=positive_power, g1=gains, g2=gains)
def test_rate_monotone_in_gain(p, g1, g2):
    lo, hi = sorted((g1, g2))
    assert channel.data_rate(link(power=p, gain=lo)) <= channel.data_rate(link(power=p, gain=hi))


@settings(max_examples=200, deadline=None)
@given(theta=st.floats(1e-6, 1 - 1e-6))
def test_outage_inversion_round_trip(theta):
    lk = link()
    p = channel.min_power_for_outage(lk, theta)
    assert channel.outage_probability(lk.with_power(p)) == pytest.approx(theta, rel=1e-9)
