"""Two-component Gaussian mixture families with a common nuisance parameter.

Two families are supported, both equal-weight mixtures

    g(z | theta1, theta2, eta) = 0.5 f(z | theta1, eta) + 0.5 f(z | theta2, eta)

* ``MixtureFamily.MEAN``: ``theta`` is a component mean, ``eta > 0`` the common
  standard deviation, ``f(z | theta, eta) = phi((z - theta) / eta) / eta``.
* ``MixtureFamily.VARIANCE``: ``theta > 0`` is a component *variance* and
  ``eta`` the common mean, ``f(z | theta, eta) = phi((z - eta) / sqrt(theta)) / sqrt(theta)``.

The variance family is parametrized by the variance rather than the standard
deviation because that is the coordinate system in which the first two score
ratios are uncorrelated under the null.  The set of densities (and therefore
every likelihood and the test statistic) is the same in both coordinates; the
standard-deviation scores are available through ``parametrization="sd"`` for
diagnostics only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import (
    DegenerateSampleError,
    NumericOverflowError,
    ParameterDomainError,
    SampleError,
)

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


class MixtureFamily(str, enum.Enum):
    """Which Gaussian family is in play and how ``(theta, eta)`` are read."""

    MEAN = "mean"
    VARIANCE = "variance"

    @classmethod
    def parse(cls, value: "MixtureFamily | str") -> "MixtureFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown family {value!r}; expected one of "
                f"{', '.join(m.value for m in cls)}"
            ) from None


@dataclass(frozen=True)
class NullFit:
    """Maximum likelihood fit under homogeneity (``theta1 == theta2``)."""

    theta_hat: float
    eta_hat: float
    loglik: float


# Score-ratio polynomials in the standardized residual u, lowest degree first.
# Mean family: probabilists' Hermite polynomials He_r(u), divided by eta**r.
_MEAN_SCORE_COEFS = {
    1: (0.0, 1.0),
    2: (-1.0, 0.0, 1.0),
    3: (0.0, -3.0, 0.0, 1.0),
    4: (3.0, 0.0, -6.0, 0.0, 1.0),
}
# Variance family: He_{2r}(u) / 2**r, divided by theta**r.
_VARIANCE_SCORE_COEFS = {
    1: (-0.5, 0.0, 0.5),
    2: (0.75, 0.0, -1.5, 0.0, 0.25),
    3: (-15 / 8, 0.0, 45 / 8, 0.0, -15 / 8, 0.0, 1 / 8),
    4: (105 / 16, 0.0, -420 / 16, 0.0, 210 / 16, 0.0, -28 / 16, 0.0, 1 / 16),
}
# Variance family with theta read as the standard deviation (diagnostics).
_SD_SCORE_COEFS = {
    1: (-1.0, 0.0, 1.0),
    2: (2.0, 0.0, -5.0, 0.0, 1.0),
    3: (-6.0, 0.0, 27.0, 0.0, -12.0, 0.0, 1.0),
    4: (24.0, 0.0, -168.0, 0.0, 123.0, 0.0, -22.0, 0.0, 1.0),
}


def as_sample(values: ArrayLike) -> NDArray[np.float64]:
    """Validate and convert ``values`` to a 1-D float array of length >= 2."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size < 2:
        raise SampleError(f"a sample needs at least 2 observations, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise SampleError("sample contains non-finite values")
    return arr


def check_domain(family: MixtureFamily, theta: ArrayLike, eta: ArrayLike) -> None:
    family = MixtureFamily.parse(family)
    scale = eta if family is MixtureFamily.MEAN else theta
    name = "eta" if family is MixtureFamily.MEAN else "theta"
    scale = np.asarray(scale, dtype=float)
    if not np.all(np.isfinite(scale)) or np.any(scale <= 0):
        raise ParameterDomainError(
            f"{name} must be positive and finite for the {family.value} family"
        )
    loc = np.asarray(eta if family is MixtureFamily.VARIANCE else theta, dtype=float)
    if not np.all(np.isfinite(loc)):
        raise ParameterDomainError("location parameter must be finite")


def _loc_scale(family: MixtureFamily, theta, eta):
    if family is MixtureFamily.MEAN:
        return theta, eta
    return eta, np.sqrt(theta)


def log_density(family: MixtureFamily | str, z: ArrayLike, theta, eta) -> NDArray:
    """Log of ``f(z | theta, eta)``; broadcasts over ``z``."""
    family = MixtureFamily.parse(family)
    check_domain(family, theta, eta)
    loc, scale = _loc_scale(family, theta, eta)
    u = (np.asarray(z, dtype=float) - loc) / scale
    return -0.5 * LOG_2PI - np.log(scale) - 0.5 * u * u


def density(family: MixtureFamily | str, z: ArrayLike, theta, eta):
    """Component density ``f(z | theta, eta)``.

    >>> round(float(density("variance", 1.0, 4.0, 1.0)), 8)
    0.19947114
    """
    out = np.exp(log_density(family, z, theta, eta))
    return float(out) if np.ndim(out) == 0 else out


def mixture_log_likelihood(
    sample: ArrayLike, family: MixtureFamily | str, theta1: float, theta2: float, eta: float
) -> float:
    """Full equal-weight mixture log-likelihood, summed over the sample."""
    family = MixtureFamily.parse(family)
    z = as_sample(sample)
    lf1 = log_density(family, z, theta1, eta)
    lf2 = log_density(family, z, theta2, eta)
    # logaddexp applies the max-shift internally
    total = float(np.sum(np.logaddexp(lf1, lf2))) - z.size * LOG_2
    if not math.isfinite(total):
        raise NumericOverflowError("mixture log-likelihood is not finite")
    return total


def null_log_likelihood(
    sample: ArrayLike, family: MixtureFamily | str, theta: float, eta: float
) -> float:
    """Single-component log-likelihood, i.e. the mixture with ``theta1 == theta2``."""
    family = MixtureFamily.parse(family)
    z = as_sample(sample)
    total = float(np.sum(log_density(family, z, theta, eta)))
    if not math.isfinite(total):
        raise NumericOverflowError("null log-likelihood is not finite")
    return total


def fit_null(sample: ArrayLike, family: MixtureFamily | str) -> NullFit:
    """Closed-form MLE of ``(theta, eta)`` under homogeneity."""
    family = MixtureFamily.parse(family)
    z = as_sample(sample)
    mean = float(np.mean(z))
    var = float(np.mean((z - mean) ** 2))
    if not var > 0.0:
        raise DegenerateSampleError("sample variance is zero; the null MLE does not exist")
    n = z.size
    # maximized log-likelihood of a Gaussian at its MLE
    loglik = -0.5 * n * (LOG_2PI + math.log(var) + 1.0)
    if family is MixtureFamily.MEAN:
        return NullFit(theta_hat=mean, eta_hat=math.sqrt(var), loglik=loglik)
    return NullFit(theta_hat=var, eta_hat=mean, loglik=loglik)


def _coefs(family: MixtureFamily, parametrization: str) -> dict:
    if family is MixtureFamily.MEAN:
        return _MEAN_SCORE_COEFS
    if parametrization == "variance":
        return _VARIANCE_SCORE_COEFS
    if parametrization == "sd":
        return _SD_SCORE_COEFS
    raise ValueError(f"unknown parametrization {parametrization!r}")


def score_ratio(
    family: MixtureFamily | str,
    z: ArrayLike,
    r: int,
    theta,
    eta,
    *,
    parametrization: str = "variance",
):
    """Closed-form ``D_theta^r f(z | theta, eta) / f(z | theta, eta)`` for r in 1..4.

    ``parametrization="sd"`` reads ``theta`` of the variance family as a
    standard deviation and differentiates in it; it is ignored for the mean
    family.
    """
    family = MixtureFamily.parse(family)
    if r not in (1, 2, 3, 4):
        raise ValueError(f"score order r must be in 1..4, got {r}")
    sd_mode = family is MixtureFamily.VARIANCE and parametrization == "sd"
    if sd_mode:
        check_domain(family, np.square(theta), eta)
        loc, scale, unit = eta, np.asarray(theta, dtype=float), np.asarray(theta, dtype=float)
    else:
        check_domain(family, theta, eta)
        loc, scale = _loc_scale(family, theta, eta)
        unit = np.asarray(eta if family is MixtureFamily.MEAN else theta, dtype=float)
    u = (np.asarray(z, dtype=float) - loc) / scale
    poly = np.polynomial.polynomial.polyval(u, _coefs(family, parametrization)[r])
    out = poly / unit**r
    return float(out) if np.ndim(out) == 0 else out


def scores(
    sample: ArrayLike, family: MixtureFamily | str, null: NullFit, max_order: int = 4
) -> NDArray[np.float64]:
    """Estimated score ratios at the null fit, shape ``(max_order, N)``; row r-1 is xi_r."""
    z = as_sample(sample)
    return np.stack(
        [score_ratio(family, z, r, null.theta_hat, null.eta_hat) for r in range(1, max_order + 1)]
    )
