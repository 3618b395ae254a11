"""Running-window PLC scan of a one-dimensional signal.

A window straddling a discontinuity holds values from two regimes, so its
contents look like an equal-weight two-component mixture.  Each window is
tested on its own; exceedances of a simulated per-window critical value are
then thinned to well-separated local maxima.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .models import MixtureFamily
from .plc import OptimizerOptions, plc_batch
from .simulation import SIGNAL_PURPOSE, SimConfig, critical_value, stream

DEFAULT_WINDOW = 50


@dataclass(frozen=True)
class SignalSpec:
    """Piecewise-constant mean (and optionally noise scale) plus Gaussian noise.

    ``levels`` has one more entry than ``breakpoints``; segment k covers
    ``breakpoints[k-1] <= t < breakpoints[k]``.  ``scale_levels``, when
    given, multiplies the noise segment by segment (amplitude jumps).
    """

    length: int
    breakpoints: tuple[int, ...] = ()
    levels: tuple[float, ...] = (0.0,)
    noise_sd: float = 1.0
    seed: int = 0
    scale_levels: tuple[float, ...] | None = None

    def __post_init__(self):
        bp = tuple(int(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if self.length < 1:
            raise ValueError("length must be positive")
        if any(b <= 0 or b >= self.length for b in bp) or any(
            b2 <= b1 for b1, b2 in zip(bp, bp[1:])
        ):
            raise ValueError("breakpoints must be strictly increasing inside (0, length)")
        if len(self.levels) != len(bp) + 1:
            raise ValueError("levels must have one entry per segment")
        if self.scale_levels is not None and len(self.scale_levels) != len(bp) + 1:
            raise ValueError("scale_levels must have one entry per segment")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be non-negative")


@dataclass(frozen=True)
class WindowScanResult:
    centers: np.ndarray
    lambdas: np.ndarray
    window: int
    step: int
    family: MixtureFamily
    alpha: float
    critical_value: float
    exceeds: np.ndarray
    detections: np.ndarray
    missing_centers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def missing(self) -> int:
        return int(self.missing_centers.size)


def segment_values(spec: SignalSpec, values: Sequence[float]) -> np.ndarray:
    seg = np.searchsorted(np.asarray(spec.breakpoints, dtype=int), np.arange(spec.length), side="right")
    return np.asarray(values, dtype=float)[seg]


def generate_jump_signal(spec: SignalSpec) -> np.ndarray:
    """``y_t = mean(t) + noise_sd * scale(t) * eps_t`` with seeded standard normal noise."""
    eps = stream(spec.seed, SIGNAL_PURPOSE).standard_normal(spec.length)
    scale = 1.0 if spec.scale_levels is None else segment_values(spec, spec.scale_levels)
    return segment_values(spec, spec.levels) + spec.noise_sd * scale * eps


@lru_cache(maxsize=64)
def _cached_critical_value(family, window, alpha, reps, seed, optimizer):
    cfg = SimConfig(family=family, n=window, reps=reps, seed=seed, optimizer=optimizer)
    return critical_value(cfg, alpha)


def scan_critical_value(family: MixtureFamily | str, window: int, alpha: float, cfg: SimConfig | None = None) -> float:
    """Per-window critical value, simulated once per configuration and cached."""
    family = MixtureFamily.parse(family)
    cfg = cfg or SimConfig(family=family, n=window, reps=1000)
    return _cached_critical_value(family, int(window), float(alpha), cfg.reps, cfg.seed, cfg.optimizer)


def window_scan(
    signal: Sequence[float],
    window: int = DEFAULT_WINDOW,
    step: int = 1,
    family: MixtureFamily | str = MixtureFamily.MEAN,
    alpha: float = 0.05,
    cfg: SimConfig | None = None,
    *,
    critical: float | None = None,
) -> WindowScanResult:
    """Compute the PLC statistic on every window of ``signal``.

    Windows are ``signal[s : s + window]`` for ``s = 0, step, 2*step, ...``
    and are labelled by their center ``s + window // 2``.  Zero-variance
    windows are reported in ``missing_centers`` and never flagged.
    ``critical`` overrides the simulated critical value.
    """
    family = MixtureFamily.parse(family)
    y = np.asarray(signal, dtype=float)
    if window < 4:
        raise ValueError("window must be at least 4")
    if window > y.size:
        raise ValueError("window is longer than the signal")
    if step < 1:
        raise ValueError("step must be at least 1")
    if not np.all(np.isfinite(y)):
        raise ValueError("signal contains non-finite values")
    opts = cfg.optimizer if cfg is not None else OptimizerOptions()
    if critical is None:
        critical = scan_critical_value(family, window, alpha, cfg)

    starts = np.arange(0, y.size - window + 1, step)
    windows = sliding_window_view(y, window)[starts]
    centers_all = starts + window // 2
    res = plc_batch(windows, family, opts)
    ok = ~res["degenerate"]
    lambdas = res["lambda"][ok]
    exceeds = (lambdas > critical) & ~res["is_zero"][ok]
    centers = centers_all[ok]
    return WindowScanResult(
        centers=centers,
        lambdas=lambdas,
        window=int(window),
        step=int(step),
        family=family,
        alpha=float(alpha),
        critical_value=float(critical),
        exceeds=exceeds,
        detections=centers[exceeds],
        missing_centers=centers_all[~ok],
    )


def detect_changepoints(result: WindowScanResult, min_separation: int | None = None) -> np.ndarray:
    """Thin exceedances to local maxima at least ``min_separation`` apart.

    Candidates are taken in decreasing order of the statistic; one is kept
    only if no kept center lies closer than ``min_separation``.  The default
    separation is half the window.
    """
    if min_separation is None:
        min_separation = max(1, result.window // 2)
    if min_separation < 1:
        raise ValueError("min_separation must be at least 1")
    idx = np.flatnonzero(result.exceeds)
    order = idx[np.argsort(-result.lambdas[idx], kind="stable")]
    kept: list[int] = []
    for i in order:
        c = int(result.centers[i])
        if all(abs(c - k) >= min_separation for k in kept):
            kept.append(c)
    return np.array(sorted(kept), dtype=int)


def read_signal_csv(path: str | os.PathLike) -> np.ndarray:
    """One numeric value per line, with an optional single header line."""
    with open(path, newline="") as fh:
        text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    values = []
    for lineno, row in enumerate(rows):
        cell = row[0].strip()
        try:
            values.append(float(cell))
        except ValueError:
            if lineno == 0:
                continue
            raise ValueError(f"line {lineno + 1}: cannot parse {cell!r} as a number") from None
    return np.asarray(values, dtype=float)


def write_scan_csv(result: WindowScanResult, fh) -> None:
    """Columns ``center,lambda,exceeds`` in center order."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["center", "lambda", "exceeds"])
    for c, lam, ex in zip(result.centers, result.lambdas, result.exceeds):
        writer.writerow([int(c), repr(float(lam)), int(bool(ex))])


def with_window(cfg: SimConfig, window: int) -> SimConfig:
    return replace(cfg, n=window)
