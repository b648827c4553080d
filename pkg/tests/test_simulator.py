import math

import numpy as np
import pytest

from vamopt.config import Experiment, VamThresholds, with_scenario
from vamopt import rates, simulator

TH = VamThresholds()


def exp_with(n_p=16, **kw):
    return with_scenario(Experiment(), n_p=n_p, **kw)


# ---------------------------------------------------------------------------
# placement

def test_init_even_split():
    state = simulator.init_street(exp_with(16), seed=1)
    assert list(np.bincount(state.sidewalk)) == [8, 8]
    for s in (0, 1):
        dirs = state.direction[state.sidewalk == s]
        assert (dirs > 0).sum() == 4 and (dirs < 0).sum() == 4


def test_init_deterministic():
    a = simulator.init_street(exp_with(16), seed=5)
    b = simulator.init_street(exp_with(16), seed=5)
    assert np.array_equal(a.pos, b.pos)
    assert np.array_equal(a.direction, b.direction)


def test_init_speeds_at_desired():
    state = simulator.init_street(exp_with(16), seed=1)
    assert np.allclose(state.speed, 1.34)
    assert np.allclose(state.w, 1.34)


def test_init_min_spacing():
    state = simulator.init_street(exp_with(40), seed=2)
    dx = simulator.wrap_dx(state.pos[:, 0][None, :] - state.pos[:, 0][:, None],
                           state.length)
    dy = state.pos[:, 1][None, :] - state.pos[:, 1][:, None]
    d = np.hypot(dx, dy)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 0.1


def test_init_overcrowded_raises():
    exp = with_scenario(Experiment(), n_p=500, street_length=2.0,
                        sidewalk_width=1.0)
    with pytest.raises(ValueError, match="density"):
        simulator.init_street(exp, seed=1)


def test_init_requires_pedestrians():
    with pytest.raises(ValueError):
        simulator.init_street(with_scenario(Experiment(), n_p=0), seed=1)


# ---------------------------------------------------------------------------
# stepping

def test_free_walker_straight_line():
    exp = exp_with(1)
    state = simulator.init_street(exp, seed=3)
    y0 = state.pos[0, 1]
    # drop the walker mid-sidewalk, away from both walls
    lo, hi = state.walls[state.sidewalk[0]]
    state.pos[0, 1] = 0.5 * (lo + hi)
    for _ in range(200):
        simulator.step(state, exp)
    assert state.pos[0, 1] == pytest.approx(0.5 * (lo + hi), abs=1e-9)
    assert np.allclose(state.speed, 1.34)


def test_head_on_walkers_deflect_opposite():
    exp = exp_with(2)
    state = simulator.init_street(exp, seed=4)
    mid = 0.5 * sum(state.walls[0])
    state.sidewalk[:] = 0
    state.direction[:] = [1, -1]
    state.heading[:] = [0.0, math.pi]
    state.pos[0] = [100.0, mid - 0.075]
    state.pos[1] = [100.5, mid + 0.075]
    y0, y1 = state.pos[:, 1].copy()
    simulator.step(state, exp)
    assert state.pos[0, 1] < y0   # pushed away from the neighbor above
    assert state.pos[1, 1] > y1   # pushed away from the neighbor below


def test_speeds_bounded_in_free_flow():
    exp = exp_with(16)
    state = simulator.init_street(exp, seed=6)
    for _ in range(400):
        simulator.step(state, exp)
        assert state.speed.max() <= exp.gnm.v * (1 + 1e-6)
        assert state.speed.min() >= 0.0


def test_containment_long_run():
    exp = exp_with(16)
    state = simulator.init_street(exp, seed=8)
    steps = int(round(600.0 / exp.gnm.h))
    lo = np.where(state.sidewalk == 0, state.walls[0][0], state.walls[1][0])
    hi = np.where(state.sidewalk == 0, state.walls[0][1], state.walls[1][1])
    for k in range(steps):
        simulator.step(state, exp)
        if k % 50 == 0:
            assert np.all(state.pos[:, 1] >= lo - 0.05)
            assert np.all(state.pos[:, 1] <= hi + 0.05)
    assert np.all(state.pos[:, 1] >= lo - 0.05)
    assert np.all(state.pos[:, 1] <= hi + 0.05)


def test_time_monotone():
    exp = exp_with(4)
    state = simulator.init_street(exp, seed=9)
    t = state.time
    for _ in range(10):
        simulator.step(state, exp)
        assert state.time > t
        t = state.time


# ---------------------------------------------------------------------------
# trigger classification

def snap(x=0.0, y=0.0, speed=1.34, heading=0.0, t=0.0):
    return simulator.Snapshot((x, y), speed, heading, t)


def test_trigger_timer_for_stationary():
    cls = simulator.vam_trigger_check((0.0, 0.0), 1.34, 0.0, snap(), TH, now=5.1)
    assert cls == "timer"
    assert simulator.vam_trigger_check((0.0, 0.0), 1.34, 0.0, snap(), TH,
                                       now=4.9) is None


def test_trigger_position():
    cls = simulator.vam_trigger_check((4.01, 0.0), 1.34, 0.0, snap(), TH, now=1.0)
    assert cls == "position"


def test_trigger_priority_position_over_orientation():
    cls = simulator.vam_trigger_check((4.01, 0.0), 1.34, math.radians(5.0),
                                      snap(), TH, now=1.0)
    assert cls == "position"


def test_trigger_speed_and_orientation():
    assert simulator.vam_trigger_check((0.5, 0.0), 1.9, 0.0, snap(), TH,
                                       now=1.0) == "speed"
    assert simulator.vam_trigger_check((0.5, 0.0), 1.34, math.radians(4.2),
                                       snap(), TH, now=1.0) == "orientation"


def test_trigger_orientation_wraps():
    # headings straddling the -pi/pi seam differ by a hair, not by 2 pi
    cls = simulator.vam_trigger_check((0.5, 0.0), 1.34, math.pi - 0.001,
                                      snap(heading=-math.pi + 0.001), TH, now=1.0)
    assert cls is None


def test_trigger_position_wraps_street():
    # 1 m walk across the wrap seam must not read as a 1999 m jump
    cls = simulator.vam_trigger_check((0.5, 0.0), 1.34, 0.0,
                                      snap(x=1999.5), TH, now=1.0,
                                      wrap_length=2000.0)
    assert cls is None


# ---------------------------------------------------------------------------
# full runs

def test_run_deterministic():
    exp = exp_with(8)
    a = simulator.run_simulation(exp, 2.0, duration=20.0, warmup=5.0, seed=12)
    b = simulator.run_simulation(exp, 2.0, duration=20.0, warmup=5.0, seed=12)
    assert a.counts == b.counts


def test_run_undersampled_near_zero():
    exp = exp_with(8)
    run = simulator.run_simulation(exp, 0.01, duration=60.0, warmup=10.0, seed=3)
    assert run.rate_total <= 0.02


def test_run_position_plateau_free_flow():
    exp = exp_with(2)  # one walker per sidewalk: free flow, no encounters
    run = simulator.run_simulation(exp, 10.0, duration=200.0, warmup=50.0, seed=2)
    assert run.rates["position"] == pytest.approx(1.34 / 4.0, rel=0.05)


def test_run_event_log():
    exp = exp_with(8)
    run = simulator.run_simulation(exp, 5.0, duration=30.0, warmup=10.0, seed=4,
                                   collect_events=True)
    assert len(run.events) == sum(run.counts.values())
    times = [t for t, _, _ in run.events]
    assert all(t > 10.0 for t in times)
    assert times == sorted(times)
    classes = {cls for _, _, cls in run.events}
    assert classes <= set(simulator.EVENT_CLASSES)


def test_run_inter_vam_spacing():
    exp = exp_with(8)
    omega = 2.0
    run = simulator.run_simulation(exp, omega, duration=120.0, warmup=0.0,
                                   seed=5, collect_events=True)
    th = exp.thresholds
    by_ped = {}
    for t, ped, _ in run.events:
        by_ped.setdefault(ped, []).append(t)
    checked = 0
    for times in by_ped.values():
        for a, b in zip(times, times[1:]):
            gap = b - a
            assert th.t_gen_min - exp.gnm.h <= gap <= th.t_gen_max + 1.0 / omega
            checked += 1
    assert checked > 0


# ---------------------------------------------------------------------------
# validation table

def _fake_curve(omegas, d=0.3, s=0.02, o=0.05):
    entries = tuple(rates.RateEntry(w, d, s, o) for w in omegas)
    return rates.RateCurve(entries=entries, provenance="analytic", seed=0,
                           n_realizations=0, scenario_hash="x")


def _fake_run(omega, seed, pos, spd, orient):
    counts = {"position": pos, "speed": spd, "orientation": orient, "timer": 0}
    return simulator.EmpiricalRates(omega=omega, duration=100.0, warmup=0.0,
                                    n_p=1, seed=seed, counts=counts)


def test_compare_rates_identity_zero_errors():
    omegas = (0.5, 1.0, 2.0)
    runs = [_fake_run(w, s, 30, 2, 5) for w in omegas for s in range(3)]
    curve = _fake_curve(omegas, d=0.3, s=0.02, o=0.05)
    table = simulator.compare_rates(runs, curve)
    assert table.percentiles["position"][100] == pytest.approx(0.0)
    assert table.percentiles["speed"][100] == pytest.approx(0.0)
    assert table.percentiles["orientation"][100] == pytest.approx(0.0)
    assert table.conservative_for(0.1)


def test_compare_rates_percentiles_against_sorted_oracle():
    omegas = (0.25, 0.5, 1.0, 2.0, 4.0)
    pos_counts = [10, 20, 30, 40, 55]
    runs = [_fake_run(w, 0, c, 0, 0) for w, c in zip(omegas, pos_counts)]
    curve = _fake_curve(omegas, d=0.3, s=0.0, o=0.0)
    table = simulator.compare_rates(runs, curve)
    errors = sorted(abs(0.3 - c / 100.0) for c in pos_counts)

    def oracle(q):
        pos = q / 100 * (len(errors) - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, len(errors) - 1)
        return errors[lo] + (pos - lo) * (errors[hi] - errors[lo])

    for q in (25, 50, 75, 100):
        assert table.percentiles["position"][q] == pytest.approx(oracle(q))
        assert table.percentiles["position"][q] == pytest.approx(
            float(np.percentile(errors, q)))


def test_compare_rates_grid_mismatch():
    runs = [_fake_run(0.7, 0, 10, 0, 0)]
    curve = _fake_curve((0.5, 1.0))
    with pytest.raises(ValueError, match="grid"):
        simulator.compare_rates(runs, curve)


def test_empirical_curve_scheduling_invariance():
    exp = exp_with(6, omega_grid=(1.0, 5.0))
    serial = simulator.empirical_curve(exp, seed=7, duration=10.0, warmup=2.0,
                                       repetitions=2, jobs=1)
    parallel = simulator.empirical_curve(exp, seed=7, duration=10.0, warmup=2.0,
                                         repetitions=2, jobs=2)
    assert [r.counts for r in serial] == [r.counts for r in parallel]
