import io

import numpy as np
import pytest

from plcmix.changepoint import (
    SignalSpec,
    WindowScanResult,
    detect_changepoints,
    generate_jump_signal,
    read_signal_csv,
    scan_critical_value,
    window_scan,
    write_scan_csv,
)
from plcmix.models import MixtureFamily


def make_result(centers, lambdas, crit, window=10):
    centers = np.asarray(centers)
    lambdas = np.asarray(lambdas, dtype=float)
    exceeds = lambdas > crit
    return WindowScanResult(centers=centers, lambdas=lambdas, window=window, step=1,
                            family=MixtureFamily.VARIANCE, alpha=0.05, critical_value=crit,
                            exceeds=exceeds, detections=centers[exceeds])


class TestSignal:
    def test_noiseless_jump(self):
        y = generate_jump_signal(SignalSpec(100, (50,), (1.0, 4.0), noise_sd=1e-6, seed=3))
        assert np.allclose(y[:50], 1.0, atol=1e-4)
        assert np.allclose(y[50:], 4.0, atol=1e-4)

    def test_pure_noise_variance(self):
        y = generate_jump_signal(SignalSpec(10_000, noise_sd=2.0, seed=1))
        assert y.var() == pytest.approx(4.0, rel=0.05)

    def test_deterministic(self):
        spec = SignalSpec(300, (100, 200), (0.0, 1.0, -1.0), seed=12)
        assert np.array_equal(generate_jump_signal(spec), generate_jump_signal(spec))

    @pytest.mark.parametrize("kwargs", [dict(breakpoints=(0,), levels=(0, 1)), dict(breakpoints=(60, 40), levels=(0, 1, 2)),
                                        dict(breakpoints=(50,), levels=(0,)), dict(noise_sd=-1.0)])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ValueError):
            SignalSpec(100, **kwargs)


class TestWindowScan:
    def test_geometry(self):
        y = generate_jump_signal(SignalSpec(120, seed=2))
        r = window_scan(y, window=20, step=7, family="variance", critical=1.0)
        assert np.all(np.diff(r.centers) == 7)
        assert r.centers[0] == 10
        assert r.lambdas.size == r.centers.size
        assert set(r.detections) <= set(r.centers[r.lambdas > 1.0])

    def test_constant_signal_all_missing(self):
        r = window_scan(np.full(80, 2.0), window=10, step=1, family="variance", critical=1.0)
        assert r.missing == 71 and r.lambdas.size == 0
        assert detect_changepoints(r).size == 0

    def test_missing_accounting(self):
        y = np.r_[np.zeros(30), generate_jump_signal(SignalSpec(50, seed=4))]
        r = window_scan(y, window=10, step=1, family="variance", critical=1.0)
        assert r.lambdas.size + r.missing == y.size - 10 + 1
        assert r.missing == 21

    @pytest.mark.parametrize("window,step", [(3, 1), (500, 1), (10, 0)])
    def test_bad_geometry(self, window, step):
        with pytest.raises(ValueError):
            window_scan(np.arange(100.0), window=window, step=step, critical=1.0)

    def test_affine_invariance_mean_family(self):
        y = generate_jump_signal(SignalSpec(200, (100,), (0.0, 2.0), seed=6))
        a = window_scan(y, 30, 5, "mean", critical=1.0)
        b = window_scan(7.0 - 3.0 * y, 30, 5, "mean", critical=1.0)
        assert np.allclose(a.lambdas, b.lambdas, atol=1e-6)

    def test_affine_invariance_variance_family(self):
        y = generate_jump_signal(SignalSpec(200, (100,), (0.0, 0.0), seed=6, scale_levels=(1.0, 3.0)))
        a = window_scan(y, 30, 5, "variance", critical=1.0)
        b = window_scan(-2.0 + 0.5 * y, 30, 5, "variance", critical=1.0)
        assert np.allclose(a.lambdas, b.lambdas, atol=1e-6)

    def test_critical_value_cached(self):
        a = scan_critical_value("variance", 20, 0.05)
        b = scan_critical_value("variance", 20, 0.05)
        assert a == b > 0

    def test_disjoint_windows_size(self):
        crit = scan_critical_value("variance", 50, 0.05)
        y = generate_jump_signal(SignalSpec(50 * 600, seed=99))
        r = window_scan(y, 50, 50, "variance", 0.05, critical=crit)
        assert abs(r.exceeds.mean() - 0.05) <= 0.03


class TestDetect:
    def test_no_exceedances(self):
        r = make_result([5, 6, 7], [0.1, 0.2, 0.3], 1.0)
        assert detect_changepoints(r).size == 0

    def test_single_run_argmax(self):
        r = make_result(np.arange(5, 15), [0, 2, 3, 5, 4, 3, 0, 0, 0, 0], 1.0)
        assert detect_changepoints(r, 3).tolist() == [8]

    def test_separation(self):
        r = make_result(np.arange(0, 40), np.r_[np.linspace(2, 3, 20), np.linspace(3, 2, 20)], 1.0)
        d = detect_changepoints(r, 7)
        assert np.all(np.diff(d) >= 7)
        assert set(d) <= set(r.centers[r.exceeds])

    def test_invalid_separation(self):
        with pytest.raises(ValueError):
            detect_changepoints(make_result([1], [0.0], 1.0), 0)

    @pytest.mark.slow
    def test_two_amplitude_jumps(self):
        # derived signal: noise scale 1 -> 5 -> 1; seeded trials, window 50, 99% level
        crit = scan_critical_value("variance", 50, 0.01)
        hits = 0
        for seed in range(200):
            spec = SignalSpec(400, (133, 266), (0.0, 0.0, 0.0), seed=seed, scale_levels=(1.0, 5.0, 1.0))
            r = window_scan(generate_jump_signal(spec), 50, 1, "variance", 0.01, critical=crit)
            d = detect_changepoints(r, 100)
            hits += len(d) == 2 and abs(d[0] - 133) <= 25 and abs(d[1] - 266) <= 25
        assert hits / 200 >= 0.9


class TestIO:
    def test_read_with_header(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("value\n1.5\n-2\n\n3e1\n")
        assert read_signal_csv(p).tolist() == [1.5, -2.0, 30.0]

    def test_read_without_header(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("1\n2\n")
        assert read_signal_csv(p).tolist() == [1.0, 2.0]

    def test_read_malformed(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("x\n1\nabc\n")
        with pytest.raises(ValueError, match="line 3"):
            read_signal_csv(p)

    def test_write(self):
        r = make_result([3, 4], [0.5, 2.0], 1.0)
        buf = io.StringIO()
        write_scan_csv(r, buf)
        assert buf.getvalue().splitlines() == ["center,lambda,exceeds", "3,0.5,0", "4,2.0,1"]
