import numpy as np
import pytest
from scipy import stats

from aoi_sched.env import Observation
from aoi_sched.nn import FeatureScale, NetShape, featurize, forward_actor, init_params
from aoi_sched.schedulers import (
    EdfScheduler,
    OsrpScheduler,
    PolicyScheduler,
    edf_select,
    osrp_probs,
    osrp_select,
    policy_select,
)

PAPER_THRESHOLDS = np.arange(30.0, 211.0, 20.0)  # 30..210 step 20


def obs_of(ages, window, last=0.0):
    return Observation(ages=np.asarray(ages, dtype=float),
                       recent_throughput=np.asarray(window, dtype=float),
                       last_service_time=last)


# ---------------------------------------------------------------- EDF

def test_edf_minimum_slack():
    assert edf_select(np.array([10.0, 50.0]), np.array([30.0, 210.0])) == 0


def test_edf_zero_ages_picks_tightest_threshold():
    assert edf_select(np.zeros(10), PAPER_THRESHOLDS) == 0


def test_edf_tie_breaks_to_lowest_index():
    assert edf_select(np.array([5.0, 10.0, 15.0]), np.array([20.0, 25.0, 30.0])) == 0


def test_edf_overdue_sensor_wins():
    # negative slack beats positive slack
    assert edf_select(np.array([50.0, 10.0]), np.array([30.0, 210.0])) == 0
    # most overdue wins among several violators
    assert edf_select(np.array([50.0, 300.0]), np.array([30.0, 210.0])) == 1


def test_edf_exhaustive_small_n():
    # against a brute-force reference for every slack ordering incl. ties
    values = [10.0, 20.0, 30.0, 40.0]
    for n in (2, 3, 4):
        grids = np.array(np.meshgrid(*[values] * n)).T.reshape(-1, n)
        for slacks in grids:
            thresholds = np.full(n, 100.0)
            ages = thresholds - slacks
            best = min(range(n), key=lambda i: (slacks[i], i))
            assert edf_select(ages, thresholds) == best


def test_edf_shift_invariance():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        ages = rng.uniform(0, 100, n)
        thresholds = rng.uniform(1, 300, n)
        c = float(rng.uniform(-50, 50))
        assert edf_select(ages, thresholds) == edf_select(ages + c, thresholds + c)


def test_edf_input_validation():
    with pytest.raises(ValueError):
        edf_select(np.array([1.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        edf_select(np.array([]), np.array([]))


# ---------------------------------------------------------------- OSRP

def test_osrp_probs_two_sensors_exact():
    q = osrp_probs(np.array([30.0, 210.0]))
    assert q[0] == pytest.approx(7 / 8, abs=1e-12)
    assert q[1] == pytest.approx(1 / 8, abs=1e-12)


def test_osrp_probs_equal_thresholds_uniform():
    q = osrp_probs(np.full(7, 55.0))
    assert np.allclose(q, 1 / 7, atol=1e-12)


def test_osrp_probs_paper_thresholds():
    # independent evaluation of the harmonic normalization
    inv = [1.0 / t for t in PAPER_THRESHOLDS]
    expected = [w / sum(inv) for w in inv]
    q = osrp_probs(PAPER_THRESHOLDS)
    assert np.allclose(q, expected, atol=1e-14)
    assert q[0] == pytest.approx(0.282277, abs=5e-6)


def test_osrp_probs_properties():
    rng = np.random.default_rng(5)
    for _ in range(50):
        thresholds = rng.uniform(1, 500, size=int(rng.integers(1, 12)))
        q = osrp_probs(thresholds)
        assert np.all(q > 0) and np.all(q < 1 + 1e-12)
        assert abs(q.sum() - 1.0) < 1e-12
        # scale invariance
        assert np.allclose(q, osrp_probs(thresholds * 3.7), atol=1e-12)


def test_osrp_select_degenerate():
    rng = np.random.default_rng(0)
    assert all(osrp_select(np.array([1.0, 0.0]), rng) == 0 for _ in range(100))


def test_osrp_select_fair_coin_frequency():
    rng = np.random.default_rng(123)
    n = 100_000
    draws = np.array([osrp_select(np.array([0.5, 0.5]), rng) for _ in range(n)])
    freq0 = np.mean(draws == 0)
    assert abs(freq0 - 0.5) < 3 * np.sqrt(0.25 / n)


def test_osrp_select_chi2_against_paper_probs():
    q = osrp_probs(PAPER_THRESHOLDS)
    rng = np.random.default_rng(42)
    n = 100_000
    counts = np.bincount([osrp_select(q, rng) for _ in range(n)], minlength=q.size)
    chi2 = float(((counts - n * q) ** 2 / (n * q)).sum())
    critical = stats.chi2.isf(0.001, df=q.size - 1)
    assert chi2 < critical


def test_osrp_select_rejects_bad_distribution():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        osrp_select(np.array([0.5, 0.4]), rng)
    with pytest.raises(ValueError):
        osrp_select(np.array([-0.1, 1.1]), rng)


# ---------------------------------------------------------------- learned policy

def small_actor(seed=0, n=4, j=5):
    shape = NetShape(n_sensors=n, window=j, filters=6, kernel=4, hidden=8)
    return init_params(shape, n, seed=seed)


def test_policy_select_greedy_uniform_ties_to_zero():
    n, j = 4, 5
    shape = NetShape(n_sensors=n, window=j, filters=6, kernel=4, hidden=8)
    params = init_params(shape, n, seed=0)
    for _, a in params.arrays():
        a[...] = 0.0  # uniform policy
    obs = obs_of([1, 2, 3, 4], [1, 1, 1, 1, 1])
    assert policy_select(obs, params, FeatureScale(), mode="greedy") == 0


def test_policy_select_greedy_is_argmax():
    params = small_actor(seed=3)
    scale = FeatureScale()
    obs = obs_of([5, 1, 9, 2], [3, 1, 4, 1, 5], last=2.0)
    probs = forward_actor(params, featurize(obs, scale))
    assert policy_select(obs, params, scale, mode="greedy") == int(np.argmax(probs))


def test_policy_select_sample_frequencies_match_probs():
    params = small_actor(seed=11)
    scale = FeatureScale()
    obs = obs_of([2, 4, 1, 7], [2, 2, 3, 3, 4], last=1.5)
    probs = forward_actor(params, featurize(obs, scale))
    rng = np.random.default_rng(7)
    n = 100_000
    counts = np.bincount(
        [policy_select(obs, params, scale, mode="sample", rng=rng) for _ in range(n)],
        minlength=4)
    freq = counts / n
    se = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(freq - probs) < 3 * se + 1e-12)


def test_policy_select_greedy_invariant_to_monotone_logit_transform():
    # scaling the head weights/bias by a positive factor preserves ordering
    params = small_actor(seed=5)
    scale = FeatureScale()
    obs = obs_of([1, 2, 3, 4], [1, 2, 1, 2, 1], last=3.0)
    pick = policy_select(obs, params, scale, mode="greedy")
    boosted = params.copy()
    boosted.out_w *= 4.0
    boosted.out_b *= 4.0
    assert policy_select(obs, boosted, scale, mode="greedy") == pick


def test_policy_select_rejects_bad_mode_and_shape():
    params = small_actor()
    obs = obs_of([1, 2, 3], [1, 1, 1, 1, 1])  # 3 ages for a 4-sensor net
    with pytest.raises(ValueError):
        policy_select(obs, params, FeatureScale(), mode="greedy")
    good = obs_of([1, 2, 3, 4], [1, 1, 1, 1, 1])
    with pytest.raises(ValueError):
        policy_select(good, params, FeatureScale(), mode="nope")


# ---------------------------------------------------------------- wrappers

def test_scheduler_objects():
    rng = np.random.default_rng(0)
    obs = obs_of([10.0, 50.0], [1, 1, 1, 1, 1])
    edf = EdfScheduler(np.array([30.0, 210.0]))
    assert edf.select(obs, rng) == 0
    osrp = OsrpScheduler(np.array([30.0, 210.0]))
    picks = {osrp.select(obs, rng) for _ in range(200)}
    assert picks == {0, 1}
    pol = PolicyScheduler(small_actor(n=2), FeatureScale(), mode="greedy")
    assert pol.select(obs_of([1, 2], [1, 1, 1, 1, 1]), rng) in (0, 1)
