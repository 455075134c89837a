import math

import numpy as np
import pytest
from scipy.optimize import brentq

from relaytherm.config import settings_override
from relaytherm.core.errors import ConfigurationError, UsageError, ZenoSuspected
from relaytherm.models import ModeVector, RelayState, Threshold
from relaytherm.services import dynamics
from relaytherm.services.spectral_model import build_rod_model


def test_advance_by_zero_is_identity(rod2):
    v = ModeVector(np.arange(5.0), time=1.5)
    out = dynamics.advance_modes(rod2, v, 1, 0.0)
    np.testing.assert_array_equal(out.values, v.values)
    assert out.time == 1.5


def test_advance_rejects_negative_time(rod2):
    with pytest.raises(UsageError):
        dynamics.advance_modes(rod2, ModeVector(np.zeros(5)), 1, -0.1)


def test_advance_composes(rod2):
    v = ModeVector(np.array([0.1, -0.2, 0.3, 0.05, -0.01]))
    once = dynamics.advance_modes(rod2, v, -1, 0.7)
    twice = dynamics.advance_modes(rod2, dynamics.advance_modes(rod2, v, -1, 0.3), -1, 0.4)
    np.testing.assert_allclose(once.values, twice.values, rtol=1e-12, atol=1e-15)


def test_advance_mode_zero_is_linear(single_mode):
    out = dynamics.advance_modes(single_mode, ModeVector(np.array([0.5])), -1, 2.0)
    assert out.values[0] == pytest.approx(0.5 - 2.0 / math.sqrt(math.pi))


def test_mean_temperature_ignores_guided_modes(rod2):
    a = ModeVector(np.array([1.0, 0.5, -0.5, 0.0, 0.0]))
    b = ModeVector(np.array([1.0, 0.5, -0.5, 7.0, -3.0]))
    assert dynamics.mean_temperature(rod2, a) == dynamics.mean_temperature(rod2, b)
    assert dynamics.mean_temperature(rod2, a) == pytest.approx(2.0)


def test_mean_rate_matches_difference_quotient(rod2):
    v = ModeVector(np.array([0.1, -0.2, 0.3, 0.0, 0.0]))
    dt = 1e-7
    ahead = dynamics.advance_modes(rod2, v, 1, dt)
    quotient = (dynamics.mean_temperature(rod2, ahead) - dynamics.mean_temperature(rod2, v)) / dt
    assert dynamics.mean_rate(rod2, v, 1) == pytest.approx(quotient, rel=1e-5)


def test_single_mode_switches_are_equally_spaced(single_mode):
    gap = 0.23
    traj = dynamics.simulate(single_mode, dynamics.section_start(single_mode, 0.0), 0.0, gap, 10.0)
    spacing = gap / single_mode.m0k0
    times = np.asarray(traj.switch_times)
    assert times.size == int(10.0 / spacing)
    np.testing.assert_allclose(times, spacing * np.arange(1, times.size + 1), atol=1e-9)
    assert traj.relay_history[:4] == [1, -1, 1, -1]


def test_switches_land_on_thresholds(rod2):
    traj = dynamics.simulate(rod2, dynamics.section_start(rod2, 0.0), 0.0, 0.23, 10.0)
    assert traj.events
    for seg, event in zip(traj.segments, traj.events):
        state = dynamics.advance_modes(rod2, seg.start, seg.output, event.time - seg.start_time)
        level = 0.23 if event.threshold is Threshold.at_beta else 0.0
        assert dynamics.mean_temperature(rod2, state) == pytest.approx(level, abs=1e-10)
    assert np.all(np.diff(traj.switch_times) > 0.0)


def test_switch_times_ignore_guided_components(rod2):
    rng = np.random.default_rng(7)
    for _ in range(10):
        values = np.zeros(5)
        values[1:] = 0.2 * rng.standard_normal(4)
        shifted = values.copy()
        shifted[3:] += rng.standard_normal(2)
        a = dynamics.simulate(rod2, dynamics.section_start(rod2, 0.0, values), 0.0, 0.23, 4.0)
        b = dynamics.simulate(rod2, dynamics.section_start(rod2, 0.0, shifted), 0.0, 0.23, 4.0)
        assert a.switch_times == b.switch_times


def test_next_switching_rejects_state_past_threshold(rod2):
    v = dynamics.section_start(rod2, 0.5)
    relay = RelayState(alpha=0.0, beta=0.23, output=1)
    with pytest.raises(UsageError):
        dynamics.next_switching(rod2, v, relay, 1.0)


def test_next_switching_none_before_crossing(single_mode):
    v = dynamics.section_start(single_mode, 0.0)
    relay = RelayState(alpha=0.0, beta=1.0, output=1)
    assert dynamics.next_switching(single_mode, v, relay, 0.5) is None


def test_next_switching_flags_tangential_touch(rod2):
    v = dynamics.section_start(rod2, 0.0)
    flow = dynamics.SegmentFlow(rod2, v, 1)
    t_peak = brentq(lambda t: float(flow.rate(t)), 0.01, 0.5, xtol=1e-14)
    relay = RelayState(alpha=-1.0, beta=float(flow.mean(t_peak)), output=1)
    event = dynamics.next_switching(rod2, v, relay, 1.0)
    assert event is not None
    assert event.grazing
    assert event.time == pytest.approx(t_peak, abs=1e-6)


def test_zeno_is_reported(single_mode):
    with settings_override(dwell_factor=0.5):
        with pytest.raises(ZenoSuspected):
            dynamics.simulate(single_mode, dynamics.section_start(single_mode, 0.0), 0.0, 0.23, 10.0)


def test_simulate_rejects_nonpositive_horizon(rod2):
    with pytest.raises(ConfigurationError):
        dynamics.simulate(rod2, dynamics.section_start(rod2, 0.0), 0.0, 0.23, 0.0)


def test_decompose_splits_state(rod2):
    v = ModeVector(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
    parts = dynamics.decompose(rod2, v)
    np.testing.assert_array_equal(parts.guiding + parts.guided, v.values)
    assert parts.guided.tolist() == [0.0, 0.0, 0.0, 4.0, 5.0]
    assert parts.guided_norm == pytest.approx(math.sqrt(10.0 * 16.0 + 17.0 * 25.0))


def test_trajectory_frame_contains_switch_times(rod2):
    traj = dynamics.simulate(rod2, dynamics.section_start(rod2, 0.0), 0.0, 0.23, 5.0)
    frame = dynamics.trajectory_frame(rod2, traj, 0.1)
    assert list(frame.columns) == ["time", "h", "vhat", "v_0", "v_1", "v_2", "v_3", "v_4"]
    assert np.all(np.diff(frame["time"].to_numpy()) >= 0.0)
    for t in traj.switch_times:
        assert (frame["time"] == t).any()
    assert frame["time"].iloc[-1] == pytest.approx(5.0)


def test_truncation_does_not_move_switch_times():
    assert dynamics.truncation_check({0: 2.0, 1: 4.0, 2: 4.0}, 0.0, 0.23, 10.0) <= 1e-10


def _rk4(system, values, h, dt, steps):
    lam, k = system.lambdas, system.k_coeffs

    def f(v):
        return -lam * v + h * k

    v = np.array(values, dtype=float)
    step = dt / steps
    for _ in range(steps):
        k1 = f(v)
        k2 = f(v + 0.5 * step * k1)
        k3 = f(v + 0.5 * step * k2)
        k4 = f(v + step * k3)
        v = v + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return v


def test_advance_modes_agrees_with_rk4():
    system = build_rod_model(3, {0: 1.0})
    exact = dynamics.advance_modes(system, ModeVector(np.zeros(3)), 1, 1.0).values
    c = math.sqrt(2.0 / math.pi)
    np.testing.assert_allclose(
        exact, [1.0 / math.sqrt(math.pi), -c * (1.0 - math.exp(-1.0)), c * (1.0 - math.exp(-4.0)) / 4.0], rtol=1e-14
    )
    np.testing.assert_allclose(exact, _rk4(system, np.zeros(3), 1, 1.0, 10_000), atol=1e-12)

    start = np.array([0.3, -0.2, 0.5])
    cooled = dynamics.advance_modes(system, ModeVector(start), -1, 0.7).values
    np.testing.assert_allclose(cooled, _rk4(system, start, -1, 0.7, 10_000), atol=1e-12)


def test_guided_difference_contracts_at_kappa(rod2):
    guided = rod2.guided_indices
    kappa = float(np.min(rod2.lambdas[guided]))
    assert kappa == 9.0
    values = np.array([0.0, 0.15, -0.1, 0.0, 0.0])
    shifted = values.copy()
    shifted[guided] = [0.8, -0.6]
    a = dynamics.simulate(rod2, dynamics.section_start(rod2, 0.0, values), 0.0, 0.23, 3.0)
    b = dynamics.simulate(rod2, dynamics.section_start(rod2, 0.0, shifted), 0.0, 0.23, 3.0)
    assert a.switch_times == b.switch_times

    d0 = dynamics.weighted_norm(rod2, a.segments[0].start.values - b.segments[0].start.values, guided)
    assert d0 > 0.0
    for seg_a, seg_b in zip(a.segments, b.segments):
        diff = seg_a.start.values - seg_b.start.values
        bound = d0 * math.exp(-kappa * seg_a.start_time) * (1.0 + 1e-9) + 1e-15
        assert dynamics.weighted_norm(rod2, diff, guided) <= bound
        np.testing.assert_allclose(diff[rod2.guiding_indices], 0.0, atol=1e-15)
