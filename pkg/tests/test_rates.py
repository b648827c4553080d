import math
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vamopt.config import Experiment, GnmParams, ScenarioConfig, with_scenario
from vamopt import gnm, rates

P = GnmParams()
DATA = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# position trigger

def test_lambda_position_examples():
    assert rates.lambda_position(10, 4, 1.34) == pytest.approx(10 / 30)
    assert rates.lambda_position(0.3, 4, 1.34) == pytest.approx(0.3)
    assert rates.lambda_position(2, 2, 2.68) == pytest.approx(1.0)


def test_lambda_position_rejects_nonpositive():
    for bad in [(0, 4, 1), (1, 0, 1), (1, 4, 0), (-2, 4, 1)]:
        with pytest.raises(ValueError):
            rates.lambda_position(*bad)


@given(st.floats(0.01, 20), st.floats(0.5, 10), st.floats(0.1, 4))
@settings(max_examples=500, deadline=None)
def test_lambda_position_bounds(omega, delta, sigma):
    lam = rates.lambda_position(omega, delta, sigma)
    assert lam == pytest.approx(omega / math.ceil(omega * delta / sigma))
    assert lam <= min(omega, sigma / delta) + 1e-12


def test_lambda_position_peaks_at_multiples():
    # sigma/delta an exact binary ratio so omega = k*sigma/delta is exact
    sigma, delta = 1.0, 4.0
    for k in range(1, 40):
        omega = k * sigma / delta
        assert rates.lambda_position(omega, delta, sigma) == sigma / delta


def test_lambda_position_low_frequency_identity():
    for omega in (0.01, 0.05, 0.2, 0.25):
        assert rates.lambda_position(omega, 4.0, 1.34) == pytest.approx(omega)


# ---------------------------------------------------------------------------
# speed trigger

def test_lambda_speed_zero_threshold_triggers_first_sample():
    rate = rates.lambda_speed(2.0, P, 0, 0.0, n_realizations=50, seed=1)
    assert rate == pytest.approx(2.0)


def test_lambda_speed_pinned_norms_never_cross():
    pinned = lambda rng, size: np.ones(size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rate = rates.lambda_speed(1.0, P, 0, 0.5, n_realizations=20, seed=1,
                                  norm_sampler=pinned)
    assert rate == 0.0


def test_lambda_speed_no_crossing_warns():
    pinned = lambda rng, size: np.ones(size)
    with pytest.warns(RuntimeWarning):
        rates.lambda_speed(1.0, P, 0, 0.5, n_realizations=5, seed=1,
                           norm_sampler=pinned)


def test_lambda_speed_matches_golden_curve():
    rows = (DATA / "speed_rate_warmup_omega1.csv").read_text().strip().splitlines()[1:]
    expected = [float(line.split(",")[1]) for line in rows]
    got = rates.speed_rate_by_warmup(1.0, P, list(range(31)), 0.5, 10_000,
                                     seed=20250809)
    assert np.allclose(got, expected, rtol=0, atol=0)


def test_lambda_speed_decreasing_in_warmup():
    curve = rates.speed_rate_by_warmup(1.0, P, list(range(31)), 0.5, 5000, seed=7)
    assert all(a >= b for a, b in zip(curve, curve[1:]))


def test_lambda_speed_single_matches_batch():
    batch = rates.speed_rate_by_warmup(1.0, P, [0, 5], 0.5, 500, seed=9)
    single = rates.lambda_speed(1.0, P, 5, 0.5, n_realizations=500, seed=9)
    assert single == pytest.approx(batch[1])


# ---------------------------------------------------------------------------
# band geometry

BAND = rates.BandSpec(0.25, 0.25)


def test_band_validate():
    BAND.validate(P)
    with pytest.raises(ValueError):
        rates.BandSpec(1.0, 1.0).validate(P)
    with pytest.raises(ValueError):
        rates.BandSpec(0.0, 0.1).validate(P)


def test_influence_bands_tile_range():
    bands = rates.influence_bands(P)
    top = float(gnm.influence_kernel(0.0, 0.0, P))
    assert len(bands) == 20
    assert bands[0].level == pytest.approx(1e-3 * top)
    assert bands[-1].level + bands[-1].width == pytest.approx(top)
    for a, b in zip(bands, bands[1:]):
        assert a.level + a.width == pytest.approx(b.level)


def test_band_area_wall_beyond_support():
    far = rates.band_area(BAND, 10.0, P)
    at_support = rates.band_area(BAND, P.r_h, P)
    assert far == pytest.approx(at_support, rel=1e-12)
    assert far > 0


def test_band_area_empty_above_maximum():
    top = float(gnm.influence_kernel(0.0, 0.0, P))
    assert rates.band_area(rates.BandSpec(top, 0.1), 2.0, P) == 0.0


def test_band_area_clipped_smaller():
    assert rates.band_area(BAND, 0.3, P) < rates.band_area(BAND, 2.0, P)


def test_band_area_matches_rejection_sampling():
    # area oracle: uniform points over the kernel's bounding square
    rng = np.random.default_rng(99)
    n = 2_000_000
    side = P.r_h
    pts = rng.uniform(-side, side, size=(n, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    val = np.asarray(gnm.influence_kernel(r, theta, P))
    for d in (2.0, 0.3):
        inside = (val > BAND.level) & (val <= BAND.level + BAND.width) & (pts[:, 1] >= -d)
        oracle = inside.mean() * (2 * side) ** 2
        quad = rates.band_area(BAND, d, P)
        assert quad == pytest.approx(oracle, rel=0.01)


def test_band_area_quadrature_converged():
    coarse = rates.band_area(BAND, 0.4, P, n_theta=720)
    fine = rates.band_area(BAND, 0.4, P, n_theta=1440)
    assert coarse == pytest.approx(fine, rel=0.005)


def test_band_influence_k_zero_and_linear():
    assert np.allclose(rates.band_influence_k(BAND, 2.0, 0, P), 0.0)
    v2 = rates.band_influence_k(BAND, 2.0, 2, P)
    v4 = rates.band_influence_k(BAND, 2.0, 4, P)
    assert np.allclose(v4, 2.0 * v2)


def test_band_influence_k_symmetric_without_wall():
    vec = rates.band_influence_k(BAND, 10.0, 3, P)
    assert vec[1] == pytest.approx(0.0, abs=1e-15)
    assert vec[0] > 0


def test_band_influence_k_wall_clips_from_below():
    vec = rates.band_influence_k(BAND, 0.3, 1, P)
    assert vec[1] > 0  # surviving mass sits above the walker


def test_band_influence_zero_density():
    assert np.allclose(rates.band_influence(BAND, 2.0, 0.0, 1.96, P), 0.0)


def test_band_influence_multiple_of_unit_vector():
    unit = rates.band_influence_k(BAND, 2.0, 1, P)
    total = rates.band_influence(BAND, 2.0, 0.2505, 1.96, P)
    cross = unit[0] * total[1] - unit[1] * total[0]
    assert abs(cross) < 1e-15
    assert np.dot(unit, total) >= 0


def test_band_influence_matches_bessel_closed_form():
    # the double population sum collapses to |H| * mu * exp(-2x) * I1(2x)
    # per unit gradient, with x = mu*|B|; scipy's Bessel is the oracle
    from scipy.special import iv

    mu, box = 0.2505, 1.96
    unit = rates.band_influence_k(BAND, 2.0, 1, P)
    area_h = rates.band_area(BAND, 2.0, P)
    x = mu * box
    closed = area_h * mu * math.exp(-2 * x) * float(iv(1, 2 * x))
    got = rates.band_influence(BAND, 2.0, mu, box, P)
    assert got[0] == pytest.approx(unit[0] * closed, rel=1e-9)
    assert got[1] == pytest.approx(unit[1] * closed, abs=1e-15)


def test_band_influence_vs_point_process_sampling():
    # Reported, not asserted: the population weighting in the averaged
    # formula double-counts the box law, so a direct draw of Poisson
    # point sets disagrees by a density-dependent factor.
    rng = np.random.default_rng(5)
    mu, d = 0.2505, 2.0
    side = P.r_h
    box_area = (2 * side) ** 2
    total = np.zeros(2)
    n_runs = 4000
    for _ in range(n_runs):
        k = rng.poisson(mu * box_area)
        pts = rng.uniform(-side, side, size=(k, 2))
        r = np.hypot(pts[:, 0], pts[:, 1])
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        val = np.asarray(gnm.influence_kernel(r, theta, P))
        keep = (val > BAND.level) & (val <= BAND.level + BAND.width) & (pts[:, 1] >= -d)
        if keep.any():
            total += (val[keep][:, None] * pts[keep] / r[keep][:, None]).sum(axis=0)
    sampled = total / n_runs
    formula = rates.band_influence(BAND, d, mu, box_area, P)
    ratio = sampled[0] / formula[0] if formula[0] else float("nan")
    print(f"point-process oracle / formula ratio: {ratio:.3f} "
          f"(sampled={sampled}, formula={formula})")
    assert np.isfinite(sampled).all()


# ---------------------------------------------------------------------------
# orientation deflection and trigger probability

def test_orientation_change_unperturbed():
    assert rates.expected_orientation_change(1, 1.0, 2.0, 0.0, P) == 0.0


def test_orientation_change_wall_only_positive():
    assert rates.expected_orientation_change(1, 1.0, 0.4, 0.0, P) > 0.0


def test_orientation_change_monotone_in_wall_distance():
    near = rates.expected_orientation_change(1, 1.0, 0.3, 0.2505, P)
    far = rates.expected_orientation_change(1, 1.0, 1.9, 0.2505, P)
    assert near >= far


def test_orientation_change_validates():
    with pytest.raises(ValueError):
        rates.expected_orientation_change(0, 1.0, 0.5, 0.0, P)
    with pytest.raises(ValueError):
        rates.expected_orientation_change(1, 1.0, -0.5, 0.0, P)


def test_trigger_prob_unreachable_threshold():
    assert rates.orientation_trigger_prob(1, 1.0, 0.13, 0.6, 2.0, 180.0, P,
                                          delta=4.0, sigma=1.34) == 0.0


def test_trigger_prob_zero_threshold_wall_zone():
    # every distance inside the wall support deflects, so threshold 0 fires
    p = rates.orientation_trigger_prob(1, 1.0, 0.0, 0.3, 0.5, 0.0, P,
                                       delta=4.0, sigma=1.34)
    assert p == pytest.approx(1.0)


def test_trigger_prob_nondecreasing_in_density():
    probs = [rates.orientation_trigger_prob(1, 1.0, mu, 0.55, 0.75, 4.0, P,
                                            delta=4.0, sigma=1.34)
             for mu in (0.0, 0.13, 0.2505, 0.4015)]
    assert all(a <= b + 1e-12 for a, b in zip(probs, probs[1:]))


def test_trigger_prob_validity_window():
    with pytest.raises(ValueError):
        rates.orientation_trigger_prob(5, 1.0, 0.13, 0.6, 2.0, 4.0, P,
                                       delta=4.0, sigma=1.34)  # I_delta = 3


def test_trigger_prob_in_unit_interval():
    p = rates.orientation_trigger_prob(1, 1.0, 0.13, 0.2, 2.0, 4.0, P,
                                       delta=4.0, sigma=1.34)
    assert 0.0 <= p <= 1.0


# ---------------------------------------------------------------------------
# orientation renewal rate

def test_rate_from_probs_never_triggers():
    assert rates.orientation_rate_from_probs([0.0] * 5, 2.0) == 0.0


def test_rate_from_probs_always_triggers():
    assert rates.orientation_rate_from_probs([1.0, 0.3, 0.3], 2.0) == pytest.approx(2.0)


def test_rate_from_probs_matches_renewal_simulation():
    # trigger-sequence oracle: per sample of a length-3 cycle the
    # orientation fires with probability q; a trigger closes the gap, a
    # full quiet cycle resets the reference
    q, i_delta, omega = 0.3, 3, 2.0
    rng = np.random.default_rng(11)
    draws = rng.random(size=4_000_000) < q
    gaps = []
    pos = 0
    start = 0
    k_in_cycle = 0
    for trig in draws:
        pos += 1
        k_in_cycle += 1
        if trig:
            gaps.append(pos - start)
            start = pos
            k_in_cycle = 0
        elif k_in_cycle == i_delta:
            k_in_cycle = 0  # position message resets the reference only
        if len(gaps) >= 300_000:
            break
    mc_rate = omega / np.mean(gaps)
    formula = rates.orientation_rate_from_probs([q] * i_delta, omega)
    assert formula == pytest.approx(mc_rate, rel=0.01)


def test_lambda_orientation_bounds_and_low_rate_zero():
    lam = rates.lambda_orientation(10.0, 1.34, 4.0, 0.002, P,
                                   delta_theta_deg=4.0, d_m=0.6, d_M=2.0)
    assert 0.0 <= lam <= 10.0
    none = rates.lambda_orientation(1.0, 1.34, 4.0, 0.0, P,
                                    delta_theta_deg=179.0, d_m=1.0, d_M=2.0)
    assert none == 0.0


def test_lambda_orientation_quadrature_converged():
    kw = dict(delta_theta_deg=4.0, d_m=0.6, d_M=2.0)
    base = rates.lambda_orientation(5.0, 1.34, 4.0, 0.002, P, **kw)
    fine = rates.lambda_orientation(5.0, 1.34, 4.0, 0.002, P, n_d=362,
                                    n_theta=1440, **kw)
    assert base == pytest.approx(fine, rel=0.005)


# ---------------------------------------------------------------------------
# total rate and curve

def test_lambda_total_zero_scenario():
    exp = with_scenario(Experiment(), n_p=0)
    assert rates.lambda_total(1.0, exp) == 0.0


def test_lambda_total_below_one_hz_at_max_rate():
    exp = with_scenario(Experiment(), n_p=16)
    total = rates.lambda_total(10.0, exp, seed=1, n_realizations=4000)
    assert total < 1.0


def test_lambda_total_coarse_trend():
    exp = with_scenario(Experiment(), n_p=16)
    vals = [rates.lambda_total(w, exp, seed=1, n_realizations=4000)
            for w in (0.1, 1.0, 10.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_lambda_total_memoized():
    exp = with_scenario(Experiment(), n_p=16)
    a = rates.lambda_total(2.0, exp, seed=3, n_realizations=2000)
    b = rates.lambda_total(2.0, exp, seed=3, n_realizations=2000)
    assert a == b


def test_build_rate_curve_structure():
    exp = with_scenario(Experiment(), n_p=16, omega_grid=(0.5, 1.0, 10.0))
    curve = rates.build_rate_curve(exp, seed=0, n_realizations=1000)
    assert curve.provenance == "analytic"
    assert [e.omega for e in curve.entries] == [0.5, 1.0, 10.0]
    for e in curve.entries:
        assert e.lambda_total == pytest.approx(
            e.lambda_delta + e.lambda_sigma + e.lambda_theta)
        assert min(e.lambda_delta, e.lambda_sigma, e.lambda_theta) >= 0
    assert curve.lookup(1.0).omega == 1.0
    with pytest.raises(KeyError):
        curve.lookup(3.3)


def test_rate_curve_sigma_theta_nondecreasing():
    exp = with_scenario(Experiment(), n_p=16, omega_grid=(0.5, 1.0, 2.0, 5.0, 10.0))
    curve = rates.build_rate_curve(exp, seed=0, n_realizations=4000)
    sig = [e.lambda_sigma for e in curve.entries]
    th = [e.lambda_theta for e in curve.entries]
    assert all(a <= b + 5e-3 for a, b in zip(sig, sig[1:]))
    assert all(a <= b + 1e-9 for a, b in zip(th, th[1:]))
