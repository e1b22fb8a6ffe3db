import numpy as np
import pytest

from aoi_sched.env import (
    AoIEnv,
    EnvConfig,
    SensorConfig,
    TrajectoryLog,
    replay_ages,
)
from aoi_sched.traces import Trace, gen_constant, gen_lognormal_walk


def make_env(sizes, thresholds, weights, rate=1.0, p=1.0, seed=0, j=5,
             trace=None, offset=0.0):
    sensors = tuple(SensorConfig(s, t, w) for s, t, w in zip(sizes, thresholds, weights))
    cfg = EnvConfig(sensors=sensors, success_prob=p, history_len=j)
    trace = trace or gen_constant(rate=rate, duration=10000, step=1000)
    return AoIEnv(cfg, trace, seed=seed, start_offset=offset)


class ScriptedRng:
    """Stand-in drop stream returning a fixed sequence of uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


# ---------------------------------------------------------------- reset / observe

def test_reset_zeroes_everything():
    env = make_env([100, 200], [50, 60], [1, 1], j=4)
    obs = env.reset()
    assert obs.ages.tolist() == [0.0, 0.0]
    assert obs.recent_throughput.tolist() == [0.0] * 4
    assert obs.last_service_time == 0.0


def test_reset_vector_lengths_match_config():
    env = make_env([50] * 10, [30] * 10, [1] * 10, j=5)
    obs = env.reset()
    assert obs.ages.shape == (10,)
    assert obs.recent_throughput.shape == (5,)


def test_observe_is_a_pure_copy():
    env = make_env([100], [50], [1])
    a = env.observe()
    b = env.observe()
    assert a.ages.tolist() == b.ages.tolist()
    a.ages[0] = 123.0  # mutating the copy must not touch the env
    assert env.observe().ages[0] == 0.0


def test_reset_determinism_whole_trajectory():
    trace = gen_lognormal_walk(median=50, sigma=0.4, lo=5, hi=400,
                               duration=60000, step=500, seed=3)
    actions = [0, 1, 1, 0, 2, 1, 0, 2, 2, 1] * 10
    runs = []
    for _ in range(2):
        env = make_env([100, 200, 300], [50, 100, 150], [1, 2, 3],
                       p=0.8, seed=9, trace=trace, offset=1234.0)
        env.reset(seed=9, start_offset=1234.0)
        runs.append([env.step(a) for a in actions])
    for r1, r2 in zip(*runs):
        assert r1.reward == r2.reward
        assert r1.outcome == r2.outcome
        assert r1.observation.ages.tolist() == r2.observation.ages.tolist()


# ---------------------------------------------------------------- transmit

def test_transmit_single_attempt_at_p1():
    env = make_env([100], [1000], [1], rate=2.0)
    out = env.transmit(0)
    assert out.attempts == 1
    assert out.duration == 50.0
    assert not out.truncated
    assert env.clock == 50.0


def test_transmit_geometric_attempt_statistics():
    # mean attempts 1/p and Pr(attempts=2)=(1-p)p under the geometric law
    p = 0.9
    env = make_env([100], [1000], [1], rate=10.0, p=p, seed=123)
    n = 100_000
    attempts = np.empty(n)
    for i in range(n):
        env.reset(seed=i)
        attempts[i] = env.transmit(0).attempts
    mean_se = np.sqrt((1 - p) / p**2 / n)
    assert abs(attempts.mean() - 1 / p) < 3 * mean_se
    p2 = (1 - p) * p
    frac2 = np.mean(attempts == 2)
    assert abs(frac2 - p2) < 3 * np.sqrt(p2 * (1 - p2) / n)


def test_transmit_two_attempts_across_rate_step():
    # rate 100 B/ms before t=1ms, 50 B/ms after; forced fail-then-succeed
    trace = Trace(np.array([0.0, 1.0]), np.array([100.0, 50.0]), duration=100.0)
    env = make_env([100], [1000], [1], p=0.9, trace=trace)
    env._drop_rng = ScriptedRng([0.95, 0.05])  # fail, then succeed
    out = env.transmit(0)
    assert out.attempts == 2
    assert out.attempt_rates == (100.0, 50.0)
    assert out.duration == pytest.approx(100 / 100 + 100 / 50)


def test_transmit_respects_max_attempts_cap():
    sensors = (SensorConfig(10, 100, 1),)
    cfg = EnvConfig(sensors=sensors, success_prob=0.5, max_attempts=3)
    env = AoIEnv(cfg, gen_constant(rate=10, duration=1000, step=100), seed=0)
    env._drop_rng = ScriptedRng([0.9, 0.9, 0.9, 0.9])
    out = env.transmit(0)
    assert out.attempts == 3
    assert out.truncated


def test_transmit_rejects_bad_sensor_index():
    env = make_env([100], [50], [1])
    with pytest.raises(ValueError):
        env.transmit(1)
    with pytest.raises(ValueError):
        env.transmit(-1)


# ---------------------------------------------------------------- step

def test_step_ages_and_reward_no_violation():
    env = make_env([100, 100], [1000, 1000], [10, 10])
    result = env.step(0)
    assert result.outcome.duration == 100.0
    assert result.observation.ages.tolist() == [100.0, 100.0]
    assert result.reward == -200.0
    assert not result.violations.any()


def test_step_reward_with_violation():
    env = make_env([100, 100], [150, 90], [10, 10])
    result = env.step(0)
    assert result.violations.tolist() == [False, True]  # 100 > 90 only
    assert result.reward == -210.0


def test_step_updates_history_and_service_time():
    env = make_env([100, 100], [1000, 1000], [1, 1], rate=2.0, j=3)
    result = env.step(1)
    # achieved throughput = bytes sent / duration = 100/50 = 2 B/ms
    assert result.observation.recent_throughput.tolist() == [0.0, 0.0, 2.0]
    assert result.observation.last_service_time == 50.0
    result = env.step(0)
    assert result.observation.recent_throughput.tolist() == [0.0, 2.0, 2.0]
    assert env.job_index == 2


def test_step_rejects_out_of_range_action():
    env = make_env([100, 100], [50, 50], [1, 1])
    with pytest.raises(ValueError):
        env.step(2)
    with pytest.raises(ValueError):
        env.step("0")


def test_step_additivity_invariant():
    # every non-selected age grows by exactly the selected service time
    trace = gen_lognormal_walk(median=30, sigma=0.5, lo=5, hi=300,
                               duration=50000, step=250, seed=21)
    env = make_env([50, 120, 340], [40, 90, 200], [3, 2, 1], p=0.85,
                   seed=4, trace=trace)
    rng = np.random.default_rng(0)
    prev = env.observe().ages
    for _ in range(300):
        action = int(rng.integers(0, 3))
        result = env.step(action)
        ages = result.observation.ages
        d = result.outcome.duration
        assert d > 0
        for m in range(3):
            if m == action:
                assert ages[m] == d
            else:
                assert ages[m] == prev[m] + d
        prev = ages


def test_monotone_violation_until_served():
    env = make_env([100, 100], [150, 120], [1, 1])
    env.step(0)  # ages [100, 100]
    result = env.step(0)  # ages [100, 200]: sensor 1 violates
    assert result.violations.tolist() == [False, True]
    result = env.step(0)  # still not served: must still violate
    assert result.violations[1]


def test_replay_oracle_matches_env_exactly():
    rng = np.random.default_rng(77)
    for case in range(40):
        n = int(rng.integers(1, 6))
        trace = gen_lognormal_walk(median=float(rng.uniform(20, 200)), sigma=0.4,
                                   lo=5, hi=500, duration=40000, step=500,
                                   seed=case)
        env = make_env(rng.uniform(20, 400, n).tolist(),
                       rng.uniform(20, 300, n).tolist(),
                       rng.uniform(0, 5, n).tolist(),
                       p=float(rng.uniform(0.5, 1.0)), seed=case, trace=trace)
        log = TrajectoryLog(n_sensors=n)
        for _ in range(50):
            action = int(rng.integers(0, n))
            log.append(action, env.step(action))
        replayed = replay_ages(log.actions, log.durations, n)
        for k in range(50):
            assert log.ages[k].tolist() == replayed[k]  # bit-exact


def test_reward_identity_over_trajectory():
    # (1/K) sum(-R) == N * grand-mean age + sum_n lambda_n * viol_freq_n
    env = make_env([100, 250], [60, 140], [7, 3], p=0.9, seed=5,
                   trace=gen_lognormal_walk(median=40, sigma=0.3, lo=10, hi=200,
                                            duration=30000, step=300, seed=8))
    rng = np.random.default_rng(2)
    n, k_jobs = 2, 400
    rewards, ages, viols = [], [], []
    for _ in range(k_jobs):
        result = env.step(int(rng.integers(0, n)))
        rewards.append(result.reward)
        ages.append(result.observation.ages.copy())
        viols.append(result.violations.copy())
    lhs = -np.mean(rewards)
    aoi_term = np.mean(ages)  # (1/(KN)) sum over jobs and sensors
    penalty = np.dot([7, 3], np.mean(viols, axis=0))
    rhs = n * aoi_term + penalty
    assert abs(lhs - rhs) / abs(rhs) < 1e-9


def test_trajectory_log_csv_round_trip(tmp_path):
    env = make_env([100, 200], [50, 100], [1, 2], p=0.8, seed=3)
    log = TrajectoryLog(n_sensors=2)
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = int(rng.integers(0, 2))
        log.append(a, env.step(a))
    path = tmp_path / "traj.csv"
    log.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "k,action,attempts,duration_ms,reward,age_0,age_1"
    assert len(lines) == 21
    fields = lines[1].split(",")
    assert int(fields[0]) == 0
    assert float(fields[3]) == log.durations[0]


# ---------------------------------------------------------------- config validation

def test_config_validation():
    with pytest.raises(ValueError):
        SensorConfig(packet_size=0, threshold=10, weight=1)
    with pytest.raises(ValueError):
        SensorConfig(packet_size=10, threshold=10, weight=-1)
    with pytest.raises(ValueError):
        EnvConfig(sensors=(), success_prob=0.9)
    with pytest.raises(ValueError):
        EnvConfig(sensors=(SensorConfig(1, 1, 0),), success_prob=0.0)
    with pytest.raises(ValueError):
        EnvConfig(sensors=(SensorConfig(1, 1, 0),), success_prob=1.1)


def test_start_offset_changes_rates_seen():
    trace = Trace(np.array([0.0, 1000.0]), np.array([10.0, 100.0]), duration=2000.0)
    env0 = make_env([100], [1000], [1], trace=trace, offset=0.0)
    env1 = make_env([100], [1000], [1], trace=trace, offset=1000.0)
    assert env0.step(0).outcome.duration == 10.0  # 100 B at 10 B/ms
    assert env1.step(0).outcome.duration == 1.0  # 100 B at 100 B/ms
