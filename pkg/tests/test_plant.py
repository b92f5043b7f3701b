import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrftid.errors import DegenerateDrag, InvalidFrequency, InvalidParameter
from mrftid.plant import (
    SoiptdParams,
    TimeDelayLTI,
    altitude_plant,
    as_soiptd,
    attitude_plant,
    freq_response,
    gain_scale,
    magnitude,
    phase,
    soiptd,
    state_space,
    time_scale,
)

positive = st.floats(1e-3, 1e2)


def direct(K, Tp, Td, tau, w):
    s = 1j * w
    return K * Td * np.exp(-tau * s) / (s * (Tp * s + 1) * (Td * s + 1))


def test_soiptd_matches_direct_complex_formula():
    p = soiptd(K=2.0, T_p=0.05, T_d=1.3, tau=0.02)
    w = np.geomspace(0.01, 1e3, 50)
    np.testing.assert_allclose(freq_response(p, w), direct(2.0, 0.05, 1.3, 0.02, w), rtol=1e-12)


def test_state_space_realization_agrees_at_twenty_frequencies():
    p = TimeDelayLTI(3.0, 1, (0.4,), (0.1, 0.7, 2.0), 0.05)
    A, B, C = state_space(p)
    for w in np.geomspace(0.05, 200, 20):
        ss = C @ np.linalg.solve(1j * w * np.eye(len(A)) - A, B) * np.exp(-1j * w * p.delay)
        assert abs(ss - freq_response(p, w)) <= 1e-9 * abs(ss)


def test_phase_is_unwrapped_past_minus_pi():
    p = soiptd(K=1, T_p=0.1, T_d=1.0, tau=0.5)
    ph = phase(p, np.geomspace(0.1, 100, 200))
    assert ph[-1] < -10
    assert np.all(np.diff(ph) < 0)


def test_negative_gain_shifts_phase_by_pi():
    p = TimeDelayLTI(-1.0, 1, (), (0.2,))
    q = TimeDelayLTI(1.0, 1, (), (0.2,))
    assert phase(p, 3.0) == pytest.approx(phase(q, 3.0) - math.pi)
    assert freq_response(p, 3.0) == pytest.approx(-freq_response(q, 3.0))


@pytest.mark.parametrize("w", [0.0, -1.0, math.nan, math.inf])
def test_bad_frequency(w):
    with pytest.raises(InvalidFrequency):
        magnitude(soiptd(K=1, T_p=0.1, T_d=1), w)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(gain=0.0, integrators=1, den_tc=(0.1,)),
        dict(gain=1.0, integrators=0, num_tc=(1.0,), den_tc=(0.1,)),
        dict(gain=1.0, integrators=1, den_tc=(-0.1,)),
        dict(gain=1.0, integrators=1, den_tc=(0.1,), delay=-0.01),
        dict(gain=1.0, integrators=-1, den_tc=(0.1, 0.2)),
    ],
)
def test_invalid_plants_rejected(kwargs):
    with pytest.raises(InvalidParameter):
        TimeDelayLTI(**kwargs)


def test_soiptd_round_trip():
    params = SoiptdParams(0.5, 0.03, 2.0, 0.1)
    assert as_soiptd(soiptd(params)) == params


def test_dict_round_trip():
    p = TimeDelayLTI(2.5, 2, (0.3,), (0.1, 0.05), 0.01)
    assert TimeDelayLTI.from_dict(p.to_dict()) == p


@settings(max_examples=40, deadline=None)
@given(positive, positive, positive, st.floats(0, 1), st.floats(0.1, 10), st.floats(1e-2, 1e2))
def test_gain_scaling_scales_magnitude_only(K, Tp, Td, tau, alpha, w):
    p = soiptd(K=K, T_p=Tp, T_d=Td, tau=tau)
    q = gain_scale(p, alpha)
    assert magnitude(q, w) == pytest.approx(alpha * magnitude(p, w), rel=1e-12)
    assert phase(q, w) == pytest.approx(phase(p, w), rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(positive, positive, positive, st.floats(0, 1), st.floats(0.2, 5), st.floats(1e-2, 1e2))
def test_time_scaling_relation(K, Tp, Td, tau, gamma, w):
    # W_gamma(j w / gamma) = gamma^{n_i} W(j w) when the factored gain is kept
    p = soiptd(K=K, T_p=Tp, T_d=Td, tau=tau)
    q = time_scale(p, gamma)
    assert freq_response(q, w / gamma) == pytest.approx(gamma * freq_response(p, w), rel=1e-10)
    assert q.gain == p.gain


def test_attitude_mapping():
    p = attitude_plant(J_x=0.02, B_x=0.05, k_M=0.3, T_p=0.04, tau_p=0.01, tau_imu=0.005)
    params = as_soiptd(p)
    assert params.T_d == pytest.approx(0.4)
    assert params.K == pytest.approx(15.0)
    assert params.tau == pytest.approx(0.015)
    # rate'' form: J theta'' + B theta' = M
    w = 7.0
    s = 1j * w
    expected = 0.3 / (s * (0.02 * s + 0.05) * (0.04 * s + 1)) * np.exp(-0.015 * s)
    assert freq_response(p, w) == pytest.approx(expected, rel=1e-12)


def test_altitude_mapping():
    p = altitude_plant(m=1.5, k_F=4.0, mu_n=4, D_z=0.5, T_p=0.05, tau_p=0.02)
    params = as_soiptd(p)
    assert params.T_d == pytest.approx(2.0)
    assert params.K == pytest.approx(4 * 4.0 / 1.5)


def test_zero_drag_is_degenerate():
    with pytest.raises(DegenerateDrag):
        attitude_plant(J_x=1, B_x=0, k_M=1, T_p=0.1, tau_p=0.01)
    with pytest.raises(DegenerateDrag):
        altitude_plant(m=1, k_F=1, mu_n=4, D_z=0, T_p=0.1, tau_p=0.01)
