"""Seeded Monte Carlo engine for null distributions, critical values and power.

Every replication draws from its own counter-based Philox stream keyed by
``(seed, purpose, ..., replication index)``.  Replications can therefore be
split across any number of workers (``PLC_THREADS``) without changing a
single output bit.  Normal variates come from numpy's ziggurat sampler.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .exceptions import SimulationIntegrityError
from .models import MixtureFamily, check_domain
from .plc import OptimizerOptions, plc_batch

# stream purposes, the second element of every stream key
NULL_PURPOSE = 0
ALTERNATIVE_PURPOSE = 1
SIGNAL_PURPOSE = 2

MAX_RETRY_FRACTION = 0.01
DEFAULT_PERCENTILES = (5.0, 50.0, 95.0)


@dataclass(frozen=True)
class SimConfig:
    family: MixtureFamily
    n: int
    reps: int
    seed: int = 0
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)

    def __post_init__(self):
        object.__setattr__(self, "family", MixtureFamily.parse(self.family))
        if self.n < 2:
            raise ValueError("sample size n must be at least 2")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "optimizer": self.optimizer.to_dict(),
        }


@dataclass(frozen=True)
class NullSimSummary:
    """Summary of ``reps`` simulated null statistics.

    ``lambdas`` is sorted; ``by_rep`` keeps replication order.
    """

    lambdas: np.ndarray
    by_rep: np.ndarray
    percentiles: dict[float, float]
    mean: float
    zero_fraction: float
    c_squared_hat: float
    retries: int
    zero_threshold: float

    def to_dict(self) -> dict:
        return {
            "percentiles": {_pct_key(p): v for p, v in self.percentiles.items()},
            "mean": self.mean,
            "zero_fraction": self.zero_fraction,
            "c_squared_hat": self.c_squared_hat,
            "reps": int(self.lambdas.size),
            "retries": self.retries,
            "zero_threshold": self.zero_threshold,
        }


@dataclass(frozen=True)
class PowerCurve:
    grid: np.ndarray
    power: np.ndarray
    alpha: float
    critical_value: float
    n: int
    reps: int

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.power * (1.0 - self.power) / self.reps)


def _pct_key(p: float) -> str:
    return f"{p:g}"


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("PLC_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"PLC_THREADS must be an integer, got {env!r}") from None
    return 1


def sample_mixture(
    family: MixtureFamily | str,
    theta1: float,
    theta2: float,
    eta: float,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``n`` observations from the equal-weight two-component mixture."""
    family = MixtureFamily.parse(family)
    check_domain(family, np.array([theta1, theta2]), eta)
    first = rng.random(n) < 0.5
    noise = rng.standard_normal(n)
    if family is MixtureFamily.MEAN:
        return np.where(first, theta1, theta2) + eta * noise
    return eta + np.sqrt(np.where(first, theta1, theta2)) * noise


def _draw_matrix(family, theta1, theta2, eta, n, reps, seed, key):
    out = np.empty((reps, n))
    for i in range(reps):
        out[i] = sample_mixture(family, theta1, theta2, eta, n, stream(seed, *key, i, 0))
    return out


def _plc_parallel(samples, family, opts, workers):
    workers = worker_count(workers)
    if workers == 1 or samples.shape[0] < 2 * workers:
        return plc_batch(samples, family, opts)
    bounds = np.linspace(0, samples.shape[0], workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(lambda lo_hi: plc_batch(samples[lo_hi[0] : lo_hi[1]], family, opts),
                     zip(bounds[:-1], bounds[1:]))
        )
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def simulate_lambdas(
    family: MixtureFamily | str,
    theta1: float,
    theta2: float,
    eta: float,
    n: int,
    reps: int,
    seed: int,
    key: Sequence[int],
    opts: OptimizerOptions,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """PLC statistics of ``reps`` mixture samples, in replication order.

    Degenerate (zero-variance) draws are redrawn from the next attempt of the
    same replication's stream.  Returns ``(lambdas, is_zero, retries)``.
    """
    family = MixtureFamily.parse(family)
    samples = _draw_matrix(family, theta1, theta2, eta, n, reps, seed, key)
    res = _plc_parallel(samples, family, opts, workers)
    lam, is_zero = res["lambda"], res["is_zero"]
    retries = 0
    limit = MAX_RETRY_FRACTION * reps
    attempt = 0
    while res["degenerate"].any():
        bad = np.flatnonzero(res["degenerate"])
        retries += bad.size
        if retries > limit:
            raise SimulationIntegrityError(
                f"{retries} of {reps} replications were degenerate (limit {limit:g})"
            )
        attempt += 1
        redo = np.stack(
            [sample_mixture(family, theta1, theta2, eta, n, stream(seed, *key, i, attempt)) for i in bad]
        )
        res = plc_batch(redo, family, opts)
        lam[bad], is_zero[bad] = res["lambda"], res["is_zero"]
        res = {"degenerate": res["degenerate"]}
    return lam, is_zero, retries


def summarize(
    by_rep: np.ndarray,
    is_zero: np.ndarray,
    zero_threshold: float,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    retries: int = 0,
) -> NullSimSummary:
    """Assemble a :class:`NullSimSummary`; percentiles use linear interpolation."""
    lambdas = np.sort(by_rep)
    pct = {float(p): float(np.percentile(lambdas, p)) for p in percentiles}
    mean = float(np.mean(lambdas))
    return NullSimSummary(
        lambdas=lambdas,
        by_rep=np.asarray(by_rep),
        percentiles=pct,
        mean=mean,
        zero_fraction=float(np.mean(is_zero)),
        c_squared_hat=2.0 * mean,
        retries=retries,
        zero_threshold=zero_threshold,
    )


def simulate_null(
    cfg: SimConfig,
    theta0: float | None = None,
    eta0: float | None = None,
    *,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    workers: int | None = None,
) -> NullSimSummary:
    """Null distribution of the PLC statistic from ``cfg.reps`` replications.

    The generating point defaults to the standard normal; by invariance the
    summary does not depend on it beyond rounding.
    """
    if cfg.family is MixtureFamily.MEAN:
        theta0 = 0.0 if theta0 is None else theta0
        eta0 = 1.0 if eta0 is None else eta0
    else:
        theta0 = 1.0 if theta0 is None else theta0
        eta0 = 0.0 if eta0 is None else eta0
    lam, is_zero, retries = simulate_lambdas(
        cfg.family, theta0, theta0, eta0, cfg.n, cfg.reps, cfg.seed, (NULL_PURPOSE,),
        cfg.optimizer, workers,
    )
    return summarize(lam, is_zero, cfg.optimizer.zero_threshold, percentiles, retries)


def critical_value_from(summary: NullSimSummary, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return float(np.percentile(summary.lambdas, 100.0 * (1.0 - alpha)))


def critical_value(cfg: SimConfig, alpha: float, *, workers: int | None = None) -> float:
    """Empirical ``1 - alpha`` percentile of the simulated null statistics."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return critical_value_from(simulate_null(cfg, workers=workers), alpha)


def estimate_c_squared(summary: NullSimSummary) -> float:
    """Moment estimate of the limit scale: ``E[c^2 max(0, Z)^2] = c^2 / 2``."""
    return 2.0 * float(np.mean(summary.lambdas))


def rejects(lambdas: np.ndarray, is_zero: np.ndarray, critical: float) -> np.ndarray:
    """Rejection indicator; a statistic at the numerical zero never rejects."""
    return (lambdas > critical) & ~is_zero


def alternative_parameters(family: MixtureFamily | str, g: float) -> tuple[float, float, float]:
    """``(theta1, theta2, eta)`` of the power-curve alternative indexed by ``g``.

    Means: components at ``-g`` and ``+g`` with unit standard deviation, so
    half the mean separation is ``g``.  Variances: component variances 1 and
    ``g**4`` about a zero mean, i.e. standard deviations whose ratio has square
    root ``g``.
    """
    family = MixtureFamily.parse(family)
    if family is MixtureFamily.MEAN:
        if g < 0:
            raise ValueError("mean-separation grid values must be >= 0")
        return -g, g, 1.0
    if g < 1:
        raise ValueError("variance-ratio grid values must be >= 1")
    return 1.0, g**4, 0.0


def power_curve(
    cfg: SimConfig,
    grid: Sequence[float],
    alpha: float = 0.05,
    null_reps: int | None = None,
    *,
    workers: int | None = None,
) -> PowerCurve:
    """Monte Carlo power of the level-``alpha`` PLC test along ``grid``.

    The critical value comes from a null run with ``null_reps`` replications;
    each grid point then uses ``cfg.reps`` replications on its own streams.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a non-empty strictly increasing sequence")
    null_cfg = replace(cfg, reps=null_reps or cfg.reps)
    crit = critical_value(null_cfg, alpha, workers=workers)
    power = np.empty(grid.size)
    for gi, g in enumerate(grid):
        t1, t2, eta = alternative_parameters(cfg.family, float(g))
        lam, is_zero, _ = simulate_lambdas(
            cfg.family, t1, t2, eta, cfg.n, cfg.reps, cfg.seed, (ALTERNATIVE_PURPOSE, gi),
            cfg.optimizer, workers,
        )
        power[gi] = float(np.mean(rejects(lam, is_zero, crit)))
    return PowerCurve(grid=grid, power=power, alpha=alpha, critical_value=crit, n=cfg.n, reps=cfg.reps)


def write_raw_csv(summary: NullSimSummary, path: str | os.PathLike) -> None:
    """Per-replication statistics as CSV with columns ``rep,lambda``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "lambda"])
        for i, lam in enumerate(summary.by_rep):
            writer.writerow([i, repr(float(lam))])


def binomial_se(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)
