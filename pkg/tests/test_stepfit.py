import io

import numpy as np
import pytest

from mrftid.errors import FormatError, NoStepDetected
from mrftid.stepfit import fit_step_response, read_step_log, write_step_log


def record(k, T, tau, noise=0.0, seed=0, rate=1000.0, t_step=0.0):
    rng = np.random.default_rng(seed)
    t = t_step + np.arange(-0.1, 0.4, 1 / rate)
    s = t - t_step
    f = 0.2 + k * np.where(s >= tau, 1 - np.exp(-(s - tau) / T), 0.0)
    return t, f + noise * k * rng.standard_normal(len(t))


def test_noise_free_recovery():
    fit = fit_step_response(*record(1.0, 0.0422, 0.017))
    assert fit.k == pytest.approx(1.0, rel=5e-3)
    assert fit.T_p == pytest.approx(0.0422, rel=5e-3)
    assert fit.tau_p == pytest.approx(0.017, rel=5e-3)
    assert fit.offset == pytest.approx(0.2, abs=1e-9)
    assert fit.rms < 1e-9


def test_off_grid_delay_and_step_time():
    t, f = record(3.0, 0.03, 0.0123, t_step=1.5)
    fit = fit_step_response(t, f, t_step=1.5)
    assert fit.tau_p == pytest.approx(0.0123, rel=1e-6)
    assert fit.k == pytest.approx(3.0, rel=1e-6)


def test_noisy_recovery():
    fit = fit_step_response(*record(1.0, 0.0499, 0.0203, noise=0.01, seed=3))
    for est, true in ((fit.k, 1.0), (fit.T_p, 0.0499), (fit.tau_p, 0.0203)):
        assert abs(est - true) / true < 0.03
    assert fit.rms == pytest.approx(0.01, rel=0.15)


def test_constant_signal():
    t = np.linspace(-0.1, 0.4, 500)
    with pytest.raises(NoStepDetected):
        fit_step_response(t, np.full_like(t, 0.5))


def test_pure_noise():
    rng = np.random.default_rng(1)
    t = np.linspace(-0.1, 0.4, 500)
    with pytest.raises(NoStepDetected):
        fit_step_response(t, 0.01 * rng.standard_normal(500))


def test_csv_round_trip():
    t, f = record(1.0, 0.04, 0.02)
    buf = io.StringIO()
    write_step_log(t, f, buf)
    t2, f2 = read_step_log(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(t, t2)
    np.testing.assert_array_equal(f, f2)


def test_csv_needs_columns():
    with pytest.raises(FormatError):
        read_step_log(io.StringIO("time,force\n0,1\n"))
