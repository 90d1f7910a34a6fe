from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from tpmab.env import (
    ArmSpec,
    BetaScaled,
    Environment,
    EnvironmentConfig,
    TraceFormatError,
    UniformScaled,
    environment_from_spec,
    load_trace,
    make_setting1,
    make_setting2,
    make_trace_env,
    setting2_vectors,
    true_mean,
    write_trace,
)
from tpmab.spread import InvalidParameterError


def single_arm(max_reward=100.0, tau=1, alpha=1, sampler=None):
    return EnvironmentConfig(1, tau, alpha, (ArmSpec(max_reward, sampler or UniformScaled()),))


class TestSampling:
    def test_single_round_support(self):
        env = Environment(single_arm(), seed=3)
        xs = np.array([env.sample_pull(0, t + 1)[0] for t in range(2000)])
        assert xs.min() >= 0 and xs.max() <= 100
        # roughly uniform on [0, 100]
        assert stats.kstest(xs / 100, "uniform").pvalue > 0.001

    def test_group_structure_and_caps(self):
        cfg = make_setting1(alpha_true=20)
        env = Environment(cfg, seed=1)
        for arm in range(cfg.num_arms):
            for _ in range(50):
                x = env.draw_reward(arm)
                groups = x.reshape(cfg.alpha, cfg.phi)
                # equal spread inside each group
                assert np.all(groups == groups[:, :1])
                z = groups.sum(axis=1)
                assert np.all(z >= 0) and np.all(z <= cfg.arms[arm].max_reward / cfg.alpha * (1 + 1e-12))
                assert x.sum() <= cfg.arms[arm].max_reward * (1 + 1e-12)

    def test_draw_groups(self):
        cfg = make_setting2(1, "late")
        a = Environment(cfg, seed=4)
        b = Environment(cfg, seed=4)
        np.testing.assert_allclose(a.draw_groups(2), b.draw_reward(2).reshape(10, 10).sum(axis=1))

    def test_beta_one_one_matches_uniform(self):
        alpha = 4
        uni = EnvironmentConfig(1, 8, alpha, (ArmSpec(40.0),))
        beta = EnvironmentConfig(1, 8, alpha, (ArmSpec(40.0, BetaScaled(np.ones(alpha), np.ones(alpha))),))
        eu, eb = Environment(uni, seed=11), Environment(beta, seed=12)
        zu = np.concatenate([eu.draw_groups(0) for _ in range(2500)])
        zb = np.concatenate([eb.draw_groups(0) for _ in range(2500)])
        assert zu.size == zb.size == 10_000
        assert stats.ks_2samp(zu, zb).pvalue > 0.01

    def test_rewards_are_read_only(self):
        env = Environment(make_setting1(), seed=0)
        x = env.draw_reward(0)
        with pytest.raises(ValueError):
            x[0] = 1.0

    def test_bad_arm(self):
        env = Environment(make_setting1(), seed=0)
        with pytest.raises(IndexError):
            env.sample_pull(10, 1)
        with pytest.raises(IndexError):
            env.draw_reward(-1)

    @pytest.mark.parametrize("arm", [0, 9])
    def test_empirical_mean(self, arm):
        cfg = make_setting2(3, "early")
        env = Environment(cfg, seed=arm)
        totals = np.array([env.draw(arm)[1] for _ in range(100_000)])
        se = totals.std(ddof=1) / np.sqrt(totals.size)
        assert abs(totals.mean() - true_mean(cfg, arm)) < 3 * se


class TestObserve:
    def test_window_counts(self):
        cfg = EnvironmentConfig(2, 3, 1, (ArmSpec(1.0), ArmSpec(2.0)))
        env = Environment(cfg, seed=0)
        assert len(env.observe(1)) == 0
        env.sample_pull(0, 1)
        batch = env.observe(1)
        assert len(batch) == 1 and batch.items[0][:2] == (0, 1)
        env.sample_pull(1, 2)
        env.observe(2)
        env.sample_pull(0, 3)
        batch = env.observe(3)
        assert len(batch) == 3
        assert batch.pull_rounds.tolist() == [1, 2, 3]
        env.sample_pull(1, 4)
        # pull from round 1 has expired
        assert env.observe(4).pull_rounds.tolist() == [2, 3, 4]

    def test_conservation_bit_exact(self):
        cfg = make_setting2(1, "late")
        env = Environment(cfg, seed=5)
        rng = np.random.default_rng(0)
        tau = cfg.tau_max
        running: dict[int, float] = {}
        totals: dict[int, float] = {}
        for t in range(1, 600):
            env.sample_pull(int(rng.integers(cfg.num_arms)), t)
            totals[t] = env.cumulative_reward(t)
            for _, h, v in env.observe(t).items:
                running[h] = running.get(h, 0.0) + v
        for h in range(1, 600 - tau):
            assert running[h] == totals[h]

    def test_determinism(self):
        cfg = make_setting1()
        pulls = np.random.default_rng(1).integers(10, size=300)

        def stream(seed):
            env = Environment(cfg, seed=seed)
            out = []
            for t, arm in enumerate(pulls.tolist(), start=1):
                env.sample_pull(arm, t)
                out.append(env.observe(t).values.copy())
            return np.concatenate(out)

        assert np.array_equal(stream(9), stream(9))
        assert not np.array_equal(stream(9), stream(10))

    def test_common_random_numbers(self):
        # the n-th pull of an arm does not depend on what else was pulled
        cfg = make_setting1()
        a, b = Environment(cfg, seed=2), Environment(cfg, seed=2)
        first = [a.draw_reward(3).copy() for _ in range(300)]
        for _ in range(500):
            b.draw_reward(7)
        second = [b.draw_reward(3).copy() for _ in range(300)]
        assert all(np.array_equal(x, y) for x, y in zip(first, second))


class TestMeans:
    def test_uniform(self):
        assert true_mean(single_arm(100.0), 0) == 50.0

    def test_beta_one_one(self):
        cfg = EnvironmentConfig(1, 2, 2, (ArmSpec(100.0, BetaScaled([1, 1], [1, 1])),))
        assert true_mean(cfg, 0) == pytest.approx(50.0, abs=1e-12)

    def test_setting2_late_configuration1(self):
        a = [2, 4, 6, 8, 10, 10, 10, 10, 10, 10]
        b = a[::-1]
        expected = Fraction(100, 10) * sum(Fraction(x, x + y) for x, y in zip(a, b))
        cfg = make_setting2(1, "late")
        assert true_mean(cfg, 0) == pytest.approx(float(expected), rel=1e-14)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            true_mean(make_setting1(), 10)


class TestSettings:
    def test_setting1(self):
        cfg = make_setting1()
        assert cfg.arms[0].max_reward == 100
        assert cfg.arms[9].max_reward == 2300
        assert cfg.optimal_arm == 9
        assert (cfg.num_arms, cfg.tau_max, cfg.alpha, cfg.phi) == (10, 100, 20, 5)

    def test_setting2_vectors(self):
        a, b = setting2_vectors(1, "late")
        assert a.tolist() == [2, 4, 6, 8, 10, 10, 10, 10, 10, 10]
        assert b.tolist() == a[::-1].tolist()
        a, b = setting2_vectors(1, "early")
        assert a.tolist() == [10, 10, 10, 10, 10, 10, 8, 6, 4, 2]
        a, b = setting2_vectors(4, "uniform")
        assert a.tolist() == [1] * 100 and b.tolist() == [1] * 100

    def test_setting2_configuration3(self):
        cfg = make_setting2(3, "early")
        assert (cfg.tau_max, cfg.alpha) == (200, 20)

    def test_unknown(self):
        with pytest.raises(InvalidParameterError):
            make_setting2(5, "late")
        with pytest.raises(InvalidParameterError):
            make_setting2(1, "middle")

    def test_config_validation(self):
        with pytest.raises(InvalidParameterError, match="divide"):
            EnvironmentConfig(1, 10, 3, (ArmSpec(1.0),))
        with pytest.raises(InvalidParameterError, match="expected 2 arms"):
            EnvironmentConfig(2, 10, 5, (ArmSpec(1.0),))
        with pytest.raises(InvalidParameterError, match="length"):
            EnvironmentConfig(1, 10, 5, (ArmSpec(1.0, BetaScaled([1, 1], [1, 1])),))
        with pytest.raises(InvalidParameterError):
            BetaScaled([1, 0], [1, 1])
        with pytest.raises(InvalidParameterError):
            ArmSpec(0.0)

    def test_dict_round_trip(self):
        for cfg in (make_setting1(), make_setting2(2, "early")):
            assert EnvironmentConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_spec(self):
        assert environment_from_spec({"setting": 1, "alpha": 20}) == make_setting1()
        assert environment_from_spec({"setting": 2, "configuration": 3, "scenario": "late"}) == make_setting2(3, "late")
        with pytest.raises(InvalidParameterError):
            environment_from_spec({"setting": 7})


class TestTrace:
    def test_constant_vectors(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace(path, [(0, [1.0, 2.0]), (1, [0.5, 0.5]), (0, [1.0, 2.0])], K=2, tau_max=2)
        cfg = make_trace_env(path, 2, 2)
        assert true_mean(cfg, 0) == 3.0
        assert true_mean(cfg, 1) == 1.0
        env = Environment(cfg, seed=0)
        assert env.draw_reward(0).tolist() == [1.0, 2.0]

    def test_replay_deterministic(self, tmp_path):
        path = tmp_path / "t.csv"
        rng = np.random.default_rng(0)
        write_trace(path, [(i % 2, rng.random(3)) for i in range(20)], K=2, tau_max=3)
        cfg = make_trace_env(path, 2, 3)
        a, b = Environment(cfg, seed=4), Environment(cfg, seed=4)
        assert all(np.array_equal(a.draw_reward(1), b.draw_reward(1)) for _ in range(50))

    def test_malformed_record(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("tpmab-trace v1 K=1 tau_max=2\n0,1,2,3\n")
        with pytest.raises(TraceFormatError, match=r"t.csv:2: malformed record"):
            load_trace(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("")
        with pytest.raises(TraceFormatError, match="0 records"):
            load_trace(path)
        path.write_text("tpmab-trace v1 K=1 tau_max=2\n")
        with pytest.raises(TraceFormatError, match="0 records"):
            load_trace(path)

    def test_missing_arm(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("tpmab-trace v1 K=2 tau_max=1\n0,1\n")
        with pytest.raises(TraceFormatError, match=r"arms \[1\] have zero records"):
            load_trace(path)

    def test_bad_header_and_missing_file(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("arm,x1\n0,1\n")
        with pytest.raises(TraceFormatError, match="bad header"):
            load_trace(path)
        with pytest.raises(TraceFormatError, match="not found"):
            load_trace(tmp_path / "nope.csv")

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace(path, [(0, [1.0])], K=1, tau_max=1)
        with pytest.raises(TraceFormatError, match="requested"):
            make_trace_env(path, 2, 1)

    def test_bundled_demo(self):
        cfg = environment_from_spec({"setting": "trace", "trace": "demo_trace.csv", "num_arms": 3, "tau_max": 4})
        assert cfg.num_arms == 3 and cfg.tau_max == 4
        assert np.all(cfg.means > 0)
