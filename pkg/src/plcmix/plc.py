"""The projected likelihood contrast (PLC) statistic.

The nuisance parameter is estimated once under homogeneity and then held
fixed while the equal-weight mixture likelihood is maximized over the two
component parameters:

    Lambda_N = 2 * (max_{theta1, theta2} L_N(theta1, theta2, eta_hat)
                    - L_N(theta_hat, theta_hat, eta_hat))

The inner maximum uses fixed-weight EM from several starts, each polished by
a Nelder-Mead search (see :mod:`plcmix._engine`).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import ArrayLike

from . import _engine
from .exceptions import ComponentCollapse, SampleError
from .models import (
    MixtureFamily,
    NullFit,
    as_sample,
    check_domain,
    fit_null,
    log_density,
)


@dataclass(frozen=True)
class OptimizerOptions:
    """Tuning of the inner maximization.

    ``zero_threshold`` is the numerical zero: statistics below it are reported
    with ``is_zero=True`` and count as exact zeros in null summaries.
    ``seed`` only drives the random starting point(s).
    """

    em_max_iter: int = 500
    em_tol: float = 1e-10
    polish_tol: float = 1e-10
    n_starts: int = 5
    zero_threshold: float = 1e-8
    polish_max_iter: int = 400
    seed: int = 0

    def __post_init__(self):
        for name in ("em_tol", "polish_tol", "zero_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")
        if self.em_max_iter < 0 or self.polish_max_iter < 0:
            raise ValueError("iteration caps must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AltFit:
    """Maximizer of the plugged-nuisance mixture likelihood (theta1 <= theta2)."""

    theta1_hat: float
    theta2_hat: float
    loglik: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class PlcOutcome:
    lambda_: float
    is_zero: bool
    alt: AltFit
    null: NullFit


def em_step(
    sample: ArrayLike,
    family: MixtureFamily | str,
    theta1: float,
    theta2: float,
    eta_hat: float,
) -> tuple[float, float]:
    """One EM update of ``(theta1, theta2)`` with weights fixed at 0.5.

    Raises :class:`ComponentCollapse` when a component's total responsibility
    falls below 1e-12.
    """
    family = MixtureFamily.parse(family)
    z = as_sample(sample)
    check_domain(family, np.array([theta1, theta2]), eta_hat)
    lf1 = log_density(family, z, theta1, eta_hat)
    lf2 = log_density(family, z, theta2, eta_hat)
    norm = np.logaddexp(lf1, lf2)
    w1 = np.exp(lf1 - norm)
    w2 = np.exp(lf2 - norm)
    s1, s2 = float(w1.sum()), float(w2.sum())
    if s1 < 1e-12 or s2 < 1e-12:
        raise ComponentCollapse("a mixture component lost all its weight")
    if family is MixtureFamily.MEAN:
        return float(w1 @ z) / s1, float(w2 @ z) / s2
    sq = (z - eta_hat) ** 2
    return float(w1 @ sq) / s1, float(w2 @ sq) / s2


def _standardize_with(z: np.ndarray, family: MixtureFamily, null: NullFit) -> np.ndarray:
    if family is MixtureFamily.MEAN:
        return (z - null.theta_hat) / null.eta_hat
    return (z - null.eta_hat) / math.sqrt(null.theta_hat)


def _to_theta(family: MixtureFamily, null: NullFit, p: np.ndarray) -> np.ndarray:
    if family is MixtureFamily.MEAN:
        return null.theta_hat + null.eta_hat * p
    return null.theta_hat * np.exp(p)


def _engine_kwargs(opts: OptimizerOptions) -> dict:
    return dict(
        n_starts=opts.n_starts,
        em_max_iter=opts.em_max_iter,
        em_tol=opts.em_tol,
        polish_tol=opts.polish_tol,
        polish_max_iter=opts.polish_max_iter,
        seed=opts.seed,
    )


def _fit_alternative(z, family, null, opts):
    check_domain(family, null.theta_hat, null.eta_hat)
    x = _standardize_with(z, family, null)[None, :]
    res = _engine.maximize_gain(family, x, **_engine_kwargs(opts))
    theta = _to_theta(family, null, res["p"][0])
    gain = float(res["gain"][0])
    alt = AltFit(
        theta1_hat=float(theta[0]),
        theta2_hat=float(theta[1]),
        loglik=null.loglik + gain,
        iterations=int(res["iterations"][0]),
        converged=bool(res["converged"][0]),
    )
    return alt, gain


def fit_alternative(
    sample: ArrayLike,
    family: MixtureFamily | str,
    null: NullFit,
    opts: OptimizerOptions | None = None,
) -> AltFit:
    """Maximize ``L_N(theta1, theta2, null.eta_hat)`` over the component parameters.

    If every start collapses the null point is returned with
    ``converged=False``.
    """
    family = MixtureFamily.parse(family)
    return _fit_alternative(as_sample(sample), family, null, opts or OptimizerOptions())[0]


def plc_statistic(
    sample: ArrayLike, family: MixtureFamily | str, opts: OptimizerOptions | None = None
) -> PlcOutcome:
    """Compute the PLC statistic for one sample."""
    family = MixtureFamily.parse(family)
    opts = opts or OptimizerOptions()
    z = as_sample(sample)
    null = fit_null(z, family)
    # the gain is used directly so that tiny statistics carry no cancellation
    alt, gain = _fit_alternative(z, family, null, opts)
    lam = max(0.0, 2.0 * gain)
    return PlcOutcome(lambda_=lam, is_zero=lam < opts.zero_threshold, alt=alt, null=null)


def plc_batch(
    samples: ArrayLike, family: MixtureFamily | str, opts: OptimizerOptions | None = None
) -> dict[str, np.ndarray]:
    """PLC statistics for every row of a ``(reps, n)`` matrix of samples.

    Rows with zero variance get ``lambda = nan`` and ``degenerate = True``
    instead of raising.  For a valid row the statistic is bit-identical to
    :func:`plc_statistic` on that row alone.
    """
    family = MixtureFamily.parse(family)
    opts = opts or OptimizerOptions()
    z = np.asarray(samples, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise SampleError("samples must be a (reps, n) array with n >= 2")
    if not np.all(np.isfinite(z)):
        raise SampleError("samples contain non-finite values")
    mean = z.mean(axis=1)
    resid = z - mean[:, None]
    var = np.mean(resid * resid, axis=1)
    degenerate = ~(var > 0.0)
    sd = np.sqrt(np.where(degenerate, 1.0, var))
    x = resid / sd[:, None]
    lam = np.full(z.shape[0], np.nan)
    p = np.full((z.shape[0], 2), np.nan)
    conv = np.zeros(z.shape[0], dtype=bool)
    ok = np.flatnonzero(~degenerate)
    if ok.size:
        res = _engine.maximize_gain(family, x[ok], **_engine_kwargs(opts))
        lam[ok] = np.maximum(0.0, 2.0 * res["gain"])
        p[ok] = res["p"]
        conv[ok] = res["converged"]
    if family is MixtureFamily.MEAN:
        theta = mean[:, None] + sd[:, None] * p
        eta = sd
    else:
        theta = var[:, None] * np.exp(p)
        eta = mean
    return {
        "lambda": lam,
        "is_zero": lam < opts.zero_threshold,
        "theta1": theta[:, 0],
        "theta2": theta[:, 1],
        "eta": eta,
        "converged": conv,
        "degenerate": degenerate,
    }

