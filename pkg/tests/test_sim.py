import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from survcontrast import SimSetting, TestConfig, run_replications, simulate_dataset
from survcontrast.sim import (SettingKind, exposure_density, exposure_slope, gen_covariates,
                              gen_exposure, gen_times, rep_seed, time_means)


def test_covariates_support_and_moments():
    W = gen_covariates(100_000, np.random.default_rng(0))
    assert np.all((W[:, 0] > 1) & (W[:, 0] < 2))
    assert set(np.unique(W[:, 1])) == {0.0, 1.0}
    assert abs(W[:, 0].mean() - 1.5) < 0.01
    assert abs(W[:, 1].mean() - 0.5) < 0.01
    np.testing.assert_array_equal(W, gen_covariates(100_000, np.random.default_rng(0)))


def test_null_exposure_is_uniform():
    rng = np.random.default_rng(1)
    W = gen_covariates(10_000, rng)
    A = gen_exposure("A", W, rng)
    assert stats.kstest(A, stats.uniform(-1, 2).cdf).statistic < 0.02


@pytest.mark.parametrize("slope", [-2.5, -1.0, 0.0, 0.4, 2.0])
def test_exposure_density_normalised(slope):
    mass, _ = integrate.quad(lambda a: float(exposure_density(a, slope)), -1, 1)
    assert mass == pytest.approx(1.0, abs=1e-10)


def test_zero_slope_density_is_half():
    np.testing.assert_allclose(exposure_density(np.linspace(-0.9, 0.9, 7), 0.0), 0.5)


def test_exposure_mean_matches_quadrature():
    # w1 chosen so that the slope is exactly 1 when w2 = 0
    w1 = 1.0 + math.log(0.7 / 0.3)
    W = np.tile([w1, 0.0], (100_000, 1))
    assert exposure_slope(W[:1])[0] == pytest.approx(1.0, abs=1e-12)
    A = gen_exposure("B", W, np.random.default_rng(2))
    mean, _ = integrate.quad(lambda a: a * float(exposure_density(a, 1.0)), -1, 1)
    assert abs(A.mean() - mean) < 0.01


def test_supports():
    for kind in "ABC":
        data = simulate_dataset(SimSetting(kind, 5000), np.random.default_rng(3))
        assert np.all((data.A > -1) & (data.A < 1))
        assert np.all(data.Y >= 1) and np.all(data.Y == np.ceil(data.Y))
        assert np.all(data.Y[data.delta == 0] <= 35)


def test_survival_past_25_matches_quadrature():
    setting = SimSetting("A", 100_000)
    rng = np.random.default_rng(4)
    W = np.column_stack([rng.uniform(1, 2, setting.n), np.ones(setting.n)])
    A = gen_exposure(setting, W, rng)
    mean_t, _ = time_means(setting, A, W)
    T = np.ceil(rng.exponential(mean_t))

    # ceil(T) > 25 iff T > 25; mean 10 exp(-0.2 f1) under the hazard reading
    def surv(w1):
        return math.exp(-25.0 / (10.0 * math.exp(-0.2 * (-3 + 0.3 * w1 + 1.1))))

    expected, _ = integrate.quad(surv, 1, 2)
    assert abs(np.mean(T > 25) - expected) < 0.02


class _FixedRng:
    def __init__(self, *draws):
        self.draws = list(draws)

    def exponential(self, scale):
        return np.broadcast_to(self.draws.pop(0), np.shape(scale)).astype(float)


def test_tie_counts_as_event():
    setting = SimSetting("A", 2)
    W = np.array([[1.5, 0.0], [1.5, 1.0]])
    Y, delta = gen_times(setting, np.zeros(2), W, _FixedRng([2.3, 50.2], [2.7, 80.0]))
    np.testing.assert_array_equal(Y, [3, 35])
    np.testing.assert_array_equal(delta, [1, 0])


def test_null_exposure_uncorrelated_with_time():
    data = simulate_dataset(SimSetting("A", 10_000), np.random.default_rng(5))
    assert abs(np.corrcoef(data.A, data.Y)[0, 1]) < 0.03


def test_monotone_setting_orders_survival():
    setting = SimSetting("B", 10_000)
    rng = np.random.default_rng(6)
    W = gen_covariates(setting.n, rng)
    A = gen_exposure(setting, W, rng)
    T = np.ceil(rng.exponential(time_means(setting, A, W)[0]))
    assert np.mean(T[A > 0] > 25) > np.mean(T[A < 0] > 25)


def test_parametrizations_differ():
    W = np.array([[1.5, 1.0]])
    A = np.array([0.3])
    means = {p: time_means(SimSetting("B", 1, parametrization=p), A, W)[0][0]
             for p in ("hazard", "mean", "rate")}
    assert means["rate"] * means["mean"] == pytest.approx(1.0, rel=1e-12)
    assert means["hazard"] * means["mean"] == pytest.approx(3.5 ** 2, rel=1e-12)
    with pytest.raises(ValueError):
        SimSetting("A", 10, parametrization="odds")


def test_setting_parse():
    assert SettingKind.parse("c") is SettingKind.C_QUADRATIC
    with pytest.raises(ValueError):
        SettingKind.parse("D")


def test_rep_seeds_are_distinct_and_stable():
    seeds = [rep_seed(42, r) for r in range(100)]
    assert len(set(seeds)) == 100
    assert rep_seed(42, 7) == seeds[7]


CONFIG = TestConfig(kappa=5, num_null_draws=100)


def test_single_replication():
    report = run_replications(SimSetting("A", 100), 1, CONFIG, master_seed=3)
    assert report.reps == 1 and len(report.per_rep_pvalues) == 1
    assert report.rejection_rate == report.rejections / 1


def test_replications_independent_of_workers(tmp_path):
    setting = SimSetting("A", 100)
    one = run_replications(setting, 8, CONFIG, threads=1, master_seed=11)
    many = run_replications(setting, 8, CONFIG, threads=8, master_seed=11)
    assert json.dumps(one.to_dict()) == json.dumps(many.to_dict())
    one.write_csv(tmp_path / "a.csv")
    many.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_failed_replications_are_counted():
    # t beyond the truncation horizon fails validation in every replication
    setting = SimSetting("A", 50, t_eval=40.0)
    report = run_replications(setting, 3, CONFIG, master_seed=1)
    assert report.failures == 3 and report.completed == []
    assert math.isnan(report.rejection_rate)
    assert report.to_dict()["rejection_rate"] is None
