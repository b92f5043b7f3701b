import io
import json
import math

import numpy as np
import pytest

from conftest import EQ_TAU, EQ_TD, EQ_TP, log_uniform, rel
from mrftid.errors import CorruptManifold, InvalidFrequency, OutOfGridRange, StaleManifold, UnsupportedVersion
from mrftid.lprs import solve_limit_cycle
from mrftid.manifold import (
    GridSpec,
    generate_ufm,
    interpolate,
    load_manifold,
    manifold_to_dict,
    save_manifold,
    scale_manifold,
    slice_at_tp,
    solve_cell,
)
from mrftid.mrft import MrftConfig
from mrftid.plant import soiptd, time_scale

SMALL = GridSpec((0.02, 0.3), (0.2, 5.0), 8, 12)


@pytest.fixture(scope="module")
def small():
    return generate_ufm(-0.7, SMALL)


def resolve_hz(beta, tp, td, tau):
    return solve_limit_cycle(soiptd(K=1.0, T_p=tp, T_d=td, tau=tau), MrftConfig(beta)).frequency_hz


def test_feasible_cells_oscillate_at_one_hertz(small):
    assert small.n_feasible > 0
    for i, j in np.argwhere(small.feasible):
        assert abs(resolve_hz(-0.7, small.tp_axis[i], small.td_axis[j], small.tau[i, j]) - 1.0) < 1e-3
        assert small.tau[i, j] >= 0
        assert small.amp[i, j] > 0


def test_infeasible_cells_are_too_slow_without_delay(small):
    bad = np.argwhere(~small.feasible)
    assert len(bad) > 0
    for i, j in bad[:5]:
        assert resolve_hz(-0.7, small.tp_axis[i], small.td_axis[j], 0.0) <= 1.0
        assert math.isnan(small.amp[i, j])


def test_cell_amplitude_matches_solver():
    tau, amp = solve_cell(-0.4, 0.05, 1.0)
    lc = solve_limit_cycle(soiptd(K=1.0, T_p=0.05, T_d=1.0, tau=tau), MrftConfig(-0.4))
    assert lc.amplitude == pytest.approx(amp, rel=1e-9)


def test_deterministic(small):
    again = generate_ufm(-0.7, SMALL)
    assert np.array_equal(again.tau, small.tau, equal_nan=True)
    assert np.array_equal(again.amp, small.amp, equal_nan=True)
    assert again.checksum == small.checksum


def test_parallel_generation_is_identical(small):
    assert generate_ufm(-0.7, SMALL, workers=2) == small


def test_normalised_roll_channel(manifolds):
    plant = soiptd(K=1.0, T_p=EQ_TP, T_d=EQ_TD, tau=EQ_TAU)
    f = solve_limit_cycle(plant, MrftConfig(-0.7)).frequency_hz
    unit = time_scale(plant, f)
    tp, td = unit.den_tc
    assert resolve_hz(-0.7, tp, td, unit.delay) == pytest.approx(1.0, rel=1e-9)
    assert interpolate(manifolds[-0.7], tp, td) == pytest.approx(unit.delay, rel=2e-3)


def test_scaling_identity_and_halving(small):
    same = scale_manifold(small, 1.0)
    assert same.gamma == 1.0
    assert np.array_equal(same.tau, small.tau, equal_nan=True)
    half = scale_manifold(small, 2.0)
    np.testing.assert_array_equal(half.tp_axis, small.tp_axis / 2)
    np.testing.assert_array_equal(half.td_axis, small.td_axis / 2)
    np.testing.assert_array_equal(half.amp, small.amp / 2)


def test_scaling_to_altitude_frequency(small):
    s = scale_manifold(small, 0.63)
    assert s.gamma == pytest.approx(1.587, abs=1e-3)
    np.testing.assert_allclose(s.td_axis, small.td_axis * s.gamma)


def test_scaled_cells_oscillate_at_scaled_frequency(small):
    rng = np.random.default_rng(5)
    cells = np.argwhere(small.feasible)
    for k in rng.choice(len(cells), 5, replace=False):
        i, j = cells[k]
        gamma = log_uniform(rng, 0.2, 5)
        f = resolve_hz(-0.7, gamma * small.tp_axis[i], gamma * small.td_axis[j], gamma * small.tau[i, j])
        assert rel(f, 1 / gamma) < 1e-3


def test_bad_frequency(small):
    with pytest.raises(InvalidFrequency):
        scale_manifold(small, 0.0)


def test_slice_at_node_is_the_row(small):
    sl = slice_at_tp(small, small.tp_axis[3])
    assert np.array_equal(sl.tau, small.tau[3], equal_nan=True)


def test_slice_out_of_range(small):
    with pytest.raises(OutOfGridRange) as info:
        slice_at_tp(small, 0.001)
    assert info.value.valid_range == (small.tp_axis[0], small.tp_axis[-1])


def test_scaled_slice_passes_through_truth(manifolds):
    plant = soiptd(K=1.0, T_p=EQ_TP, T_d=EQ_TD, tau=EQ_TAU)
    f = solve_limit_cycle(plant, MrftConfig(-0.7)).frequency_hz
    sl = slice_at_tp(scale_manifold(manifolds[-0.7], f), EQ_TP)
    assert sl.at(EQ_TD) == pytest.approx(EQ_TAU, rel=3e-3)


def test_slices_are_continuous(manifolds):
    for man in manifolds.values():
        for i in range(0, len(man.tp_axis), 6):
            tau = man.tau[i]
            ok = np.flatnonzero(np.isfinite(tau))
            steps = np.abs(np.diff(tau[ok]))
            if len(steps) < 3:
                continue
            for k in range(1, len(steps) - 1):
                local = max(steps[k - 1], steps[k + 1])
                assert steps[k] <= 3 * local + 1e-9, (man.beta, i, k)


def test_amplitude_is_linear_in_h_at_lookup(small):
    i, j = np.argwhere(small.feasible)[0]
    tau = small.tau[i, j]
    plant = soiptd(K=1.0, T_p=small.tp_axis[i], T_d=small.td_axis[j], tau=tau)
    assert solve_limit_cycle(plant, MrftConfig(-0.7, 2.0)).amplitude == pytest.approx(2 * small.amp[i, j], rel=1e-8)


class TestPersistence:
    def text(self, man):
        buf = io.StringIO()
        save_manifold(man, buf)
        return buf.getvalue()

    def test_round_trip(self, small, tmp_path):
        path = tmp_path / "m.json"
        save_manifold(small, path)
        back = load_manifold(path)
        assert back == small
        assert back.checksum == small.checksum
        assert np.array_equal(back.amp, small.amp, equal_nan=True)

    def test_null_marks_infeasible(self, small):
        doc = json.loads(self.text(small))
        assert None in doc["tau"][0] or None in doc["tau"][-1]
        assert doc["model"] == "SOIPTD" and doc["freq_hz"] == 1.0 and doc["gain"] == 1.0

    def test_version(self, small):
        doc = json.loads(self.text(small))
        doc["format_version"] = "9.9"
        with pytest.raises(UnsupportedVersion):
            load_manifold(io.StringIO(json.dumps(doc)))

    def test_checksum(self, small):
        doc = json.loads(self.text(small))
        i, j = map(int, np.argwhere(small.feasible)[0])
        doc["tau"][i][j] *= 1.01
        with pytest.raises(CorruptManifold):
            load_manifold(io.StringIO(json.dumps(doc)))

    def test_garbage(self):
        with pytest.raises(CorruptManifold):
            load_manifold(io.StringIO("{not json"))

    def test_stale_cell(self, small):
        doc = manifold_to_dict(small)
        i, j = map(int, np.argwhere(small.feasible)[2])
        doc["tau"][i][j] *= 1.2
        # a consistently written file with outdated values
        from mrftid.manifold import _checksum

        doc["checksum"] = _checksum(doc)
        with pytest.raises(StaleManifold):
            load_manifold(io.StringIO(json.dumps(doc)), cells=[(i, j)])
