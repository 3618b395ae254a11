import csv
import math

import numpy as np
import pytest
from scipy import stats

from plcmix import simulation
from plcmix.exceptions import SimulationIntegrityError
from plcmix.models import MixtureFamily
from plcmix.simulation import (
    SimConfig,
    alternative_parameters,
    binomial_se,
    critical_value,
    critical_value_from,
    estimate_c_squared,
    power_curve,
    rejects,
    sample_mixture,
    simulate_null,
    stream,
    summarize,
    worker_count,
    write_raw_csv,
)

# Independent straight-line Monte Carlo (scipy optimizer, MT19937 draws,
# 10^4 null and 10^4 alternative replications), frozen before the build.
ORACLE_VARIANCE_N100_G15 = (0.7309, 0.004434920405148215)
ORACLE_MEAN_N100_G1 = (0.0, 0.0)


class TestStreams:
    def test_reproducible(self):
        a = stream(9, 0, 3).standard_normal(5)
        b = stream(9, 0, 3).standard_normal(5)
        assert np.array_equal(a, b)

    def test_keys_independent(self):
        a = stream(9, 0, 3).standard_normal(5)
        b = stream(9, 0, 4).standard_normal(5)
        assert not np.array_equal(a, b)

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("PLC_THREADS", "3")
        assert worker_count() == 3
        assert worker_count(2) == 2
        monkeypatch.setenv("PLC_THREADS", "many")
        with pytest.raises(ValueError):
            worker_count()


class TestSampleMixture:
    def test_collapsed_components(self):
        z = sample_mixture("variance", 4.0, 4.0, 1.5, 100_000, stream(1, 0))
        assert abs(z.mean() - 1.5) < 4 * 2.0 / math.sqrt(z.size)
        assert z.var() == pytest.approx(4.0, rel=0.02)

    def test_mixture_variance(self):
        z = sample_mixture("mean", -3.0, 3.0, 1.0, 100_000, stream(2, 0))
        # 0.25 (theta1 - theta2)^2 + eta^2
        assert z.var() == pytest.approx(10.0, rel=0.02)

    def test_domain(self):
        with pytest.raises(ValueError):
            sample_mixture("variance", -1.0, 1.0, 0.0, 10, stream(0))


class TestConfig:
    @pytest.mark.parametrize("kwargs", [dict(n=1), dict(reps=0), dict(seed=-1), dict(seed=2**64)])
    def test_invalid(self, kwargs):
        base = dict(family="variance", n=10, reps=10)
        base.update(kwargs)
        with pytest.raises(ValueError):
            SimConfig(**base)

    def test_to_dict_has_optimizer(self):
        d = SimConfig("mean", 10, 5, seed=3).to_dict()
        assert d["family"] == "mean" and d["seed"] == 3
        assert d["optimizer"]["zero_threshold"] == 1e-8


class TestSimulateNull:
    def test_worker_independent(self):
        cfg = SimConfig("variance", 30, 120, seed=11)
        a = simulate_null(cfg, workers=1)
        b = simulate_null(cfg, workers=4)
        assert np.array_equal(a.by_rep, b.by_rep)
        assert a.percentiles == b.percentiles and a.mean == b.mean

    def test_single_rep(self):
        s = simulate_null(SimConfig("variance", 20, 1, seed=5))
        assert len(set(s.percentiles.values())) == 1
        assert s.percentiles[50.0] == s.lambdas[0]
        assert s.zero_fraction in (0.0, 1.0)

    def test_summary_fields(self):
        s = simulate_null(SimConfig("variance", 40, 300, seed=2))
        assert np.all(s.lambdas >= 0)
        assert np.all(np.diff(s.lambdas) >= 0)
        assert s.c_squared_hat == pytest.approx(2 * s.mean)
        assert s.zero_fraction == pytest.approx(np.mean(s.lambdas < 1e-8))
        assert s.percentiles[95.0] == pytest.approx(np.percentile(s.lambdas, 95))

    def test_invariance_across_generating_point(self):
        a = simulate_null(SimConfig("variance", 50, 1000, seed=1))
        b = simulate_null(SimConfig("variance", 50, 1000, seed=2), theta0=9.0, eta0=-4.0)
        assert stats.ks_2samp(a.lambdas, b.lambdas).pvalue > 0.01

    def test_same_seed_different_point_matches(self):
        cfg = SimConfig("variance", 30, 50, seed=8)
        a = simulate_null(cfg)
        b = simulate_null(cfg, theta0=25.0, eta0=3.0)
        assert np.allclose(a.by_rep, b.by_rep, atol=1e-7)

    def test_integrity_error(self, monkeypatch):
        monkeypatch.setattr(simulation, "sample_mixture", lambda *a, **k: np.ones(a[4]))
        with pytest.raises(SimulationIntegrityError):
            simulate_null(SimConfig("mean", 10, 20))

    def test_raw_csv(self, tmp_path):
        s = simulate_null(SimConfig("variance", 20, 15, seed=4))
        path = tmp_path / "raw.csv"
        write_raw_csv(s, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["rep", "lambda"]
        assert [float(r[1]) for r in rows[1:]] == s.by_rep.tolist()


class TestCriticalValues:
    def test_alpha_near_one_hits_atom(self):
        cfg = SimConfig("variance", 40, 400, seed=3)
        assert critical_value(cfg, 0.99) == 0.0

    def test_alpha_range(self):
        s = summarize(np.zeros(4), np.ones(4, bool), 1e-8)
        with pytest.raises(ValueError):
            critical_value_from(s, 1.0)

    def test_all_zero_c_squared(self):
        s = summarize(np.zeros(10), np.ones(10, bool), 1e-8)
        assert estimate_c_squared(s) == 0.0

    def test_rejects_ignores_numerical_zero(self):
        lam = np.array([0.0, 1e-12, 3.0])
        out = rejects(lam, lam < 1e-8, 0.0)
        assert out.tolist() == [False, False, True]


class TestPower:
    def test_alternative_parameters(self):
        assert alternative_parameters("mean", 1.5) == (-1.5, 1.5, 1.0)
        t1, t2, eta = alternative_parameters("variance", 2.0)
        assert math.sqrt(math.sqrt(t2 / t1)) == pytest.approx(2.0) and eta == 0.0
        with pytest.raises(ValueError):
            alternative_parameters("variance", 0.5)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            power_curve(SimConfig("variance", 20, 10), [2.0, 1.0])

    def test_variance_family_against_oracle(self):
        curve = power_curve(SimConfig("variance", 100, 2000, seed=21), [1.0, 1.5], 0.05, null_reps=4000)
        p0, p = curve.power
        assert abs(p0 - 0.05) <= 2 * binomial_se(0.05, 2000) + 0.01
        want, want_se = ORACLE_VARIANCE_N100_G15
        se = math.hypot(binomial_se(p, 2000), want_se)
        assert abs(p - want) < 3 * se

    def test_mean_family_against_oracle(self):
        curve = power_curve(SimConfig("mean", 100, 500, seed=21), [0.0, 1.0], 0.05, null_reps=500)
        want, want_se = ORACLE_MEAN_N100_G1
        assert abs(curve.power[1] - want) <= 3 * max(want_se, binomial_se(curve.power[1], 500))

    def test_standard_error(self):
        curve = power_curve(SimConfig("variance", 20, 50, seed=1), [1.0, 3.0], null_reps=100)
        assert curve.standard_error.shape == (2,)
        assert np.all(curve.power[1] >= curve.power[0])
