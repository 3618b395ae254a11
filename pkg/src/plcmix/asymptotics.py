"""Large-sample diagnostics of the PLC statistic and its limit law.

The sample quantities are averages of score-ratio polynomials at the null
fit; their population counterparts are Gaussian expectations evaluated by
Gauss-Hermite quadrature at a canonical null point (mean family:
``theta=0, eta=1``; variance family: ``theta=1, eta=0``).

When ``E[xi_1 xi_2] = 0`` and ``C_04 < 0`` the statistic converges either to
zero (when the sample second score average vanishes identically) or to
``c^2 max(0, Z)^2`` with ``c^2 = -3 sigma^2 / C_04``, where ``sigma^2`` is the
limiting variance of ``sqrt(N) * C02bar``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite_e
from numpy.typing import ArrayLike
from scipy import special

from .exceptions import AssumptionViolation, PlcError
from .models import MixtureFamily, NullFit, as_sample, check_domain, fit_null, scores, score_ratio

DEFAULT_ORDER = 64
ORTHOGONALITY_TOL = 1e-8

CANONICAL_POINT = {
    MixtureFamily.MEAN: (0.0, 1.0),
    MixtureFamily.VARIANCE: (1.0, 0.0),
}


@dataclass(frozen=True)
class CBarSet:
    """Sample averages of the lower-order mixed derivatives, divided by N."""

    c20: float
    c02: float
    c12: float
    c04: float


class LimitKind(str, enum.Enum):
    DEGENERATE_AT_ZERO = "degenerate-at-zero"
    SCALED_HALF_CHI_SQUARE = "scaled-half-chi-square"


@dataclass(frozen=True)
class LimitLaw:
    """Either a point mass at 0 or ``c_squared * max(0, Z)**2``."""

    kind: LimitKind
    c_squared: float | None = None

    def __post_init__(self):
        if self.kind is LimitKind.SCALED_HALF_CHI_SQUARE:
            if self.c_squared is None or not self.c_squared > 0:
                raise ValueError("a scaled half chi-square law needs c_squared > 0")

    @property
    def mean(self) -> float:
        if self.kind is LimitKind.DEGENERATE_AT_ZERO:
            return 0.0
        return 0.5 * self.c_squared

    @property
    def zero_mass(self) -> float:
        return 1.0 if self.kind is LimitKind.DEGENERATE_AT_ZERO else 0.5


@dataclass(frozen=True)
class MomentReport:
    xi1_xi2_expectation: float
    fisher_info_theta: float
    sigma_squared: float
    c04_limit: float


# --------------------------------------------------------------------------- #
# Sample quantities
# --------------------------------------------------------------------------- #


def psi_kernel(xi: np.ndarray) -> np.ndarray:
    """The fourth-order kernel averaged by ``c04``; ``xi`` holds rows xi_1..xi_4."""
    x1, x2, x3, x4 = xi[0], xi[1], xi[2], xi[3]
    return x4 + 0.5 * x1 * x3 - 3.0 * x2 * x2 + 3.0 * x1 * x2


def c_bar_set(sample: ArrayLike, family: MixtureFamily | str, null: NullFit | None = None) -> CBarSet:
    """``C_ij / N`` at the null fit for (i, j) in {(2,0), (0,2), (1,2), (0,4)}."""
    family = MixtureFamily.parse(family)
    z = as_sample(sample)
    null = null or fit_null(z, family)
    xi = scores(z, family, null)
    return CBarSet(
        c20=float(np.mean(xi[1] - xi[0] ** 2)),
        c02=float(np.mean(xi[1])),
        c12=float(np.mean(xi[2] - xi[0] * xi[1])),
        c04=float(np.mean(psi_kernel(xi))),
    )


# --------------------------------------------------------------------------- #
# Population quantities by quadrature
# --------------------------------------------------------------------------- #


@lru_cache(maxsize=None)
def _nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = hermite_e.hermegauss(order)
    return x, w / math.sqrt(2.0 * math.pi)


def gaussian_expectation(func, order: int = DEFAULT_ORDER) -> float:
    """``E[func(U)]`` for ``U ~ N(0, 1)``; ``func`` must accept an array."""
    x, w = _nodes(order)
    vals = np.asarray(func(x), dtype=float)
    out = float(vals @ w)
    if not math.isfinite(out):
        raise PlcError("quadrature produced a non-finite value")
    return out


def _point(family, theta, eta):
    if theta is None or eta is None:
        t0, e0 = CANONICAL_POINT[family]
        theta = t0 if theta is None else theta
        eta = e0 if eta is None else eta
    return float(theta), float(eta)


def _observation(family, u, theta, eta):
    # z with standardized residual u under f(. | theta, eta)
    if family is MixtureFamily.MEAN:
        return theta + eta * u
    return eta + math.sqrt(theta) * u


def _score_vector(family, z, theta, eta):
    """Joint (theta, eta) score of log f."""
    s_theta = score_ratio(family, z, 1, theta, eta)
    if family is MixtureFamily.MEAN:
        u = (z - theta) / eta
        s_eta = (u * u - 1.0) / eta
    else:
        s_eta = (z - eta) / theta
    return np.stack([s_theta, s_eta])


def fisher_information(
    family: MixtureFamily | str,
    theta: float | None = None,
    eta: float | None = None,
    order: int = DEFAULT_ORDER,
) -> np.ndarray:
    """Joint Fisher information of ``(theta, eta)`` under ``f(. | theta, eta)``."""
    family = MixtureFamily.parse(family)
    theta, eta = _point(family, theta, eta)
    check_domain(family, theta, eta)
    x, w = _nodes(order)
    s = _score_vector(family, _observation(family, x, theta, eta), theta, eta)
    info = (s * w) @ s.T
    if not np.all(np.isfinite(info)):
        raise PlcError("quadrature produced a non-finite information matrix")
    return 0.5 * (info + info.T)


def check_score_orthogonality(
    family: MixtureFamily | str,
    theta: float | None = None,
    eta: float | None = None,
    *,
    parametrization: str = "variance",
    order: int = DEFAULT_ORDER,
) -> float:
    """``E[xi_1 xi_2]`` under the null density.

    ``parametrization="sd"`` evaluates the variance family with ``theta`` read
    as a standard deviation (canonical ``theta=1`` is the same density).
    """
    family = MixtureFamily.parse(family)
    theta, eta = _point(family, theta, eta)
    sd_mode = family is MixtureFamily.VARIANCE and parametrization == "sd"
    obs_theta = theta * theta if sd_mode else theta

    def integrand(u):
        z = _observation(family, u, obs_theta, eta)
        x1 = score_ratio(family, z, 1, theta, eta, parametrization=parametrization)
        x2 = score_ratio(family, z, 2, theta, eta, parametrization=parametrization)
        return x1 * x2

    return gaussian_expectation(integrand, order)


def adjusted_variance(
    family: MixtureFamily | str,
    kernel: str = "xi2",
    theta: float | None = None,
    eta: float | None = None,
    order: int = DEFAULT_ORDER,
) -> float:
    """``E[psi^2] - C' I^{-1} C`` for the mean-zero kernel ``psi = xi_2``.

    ``C`` is the covariance of the kernel with the joint score, so the result
    is the asymptotic variance of the kernel's average once the parameters
    are replaced by their MLE.
    """
    family = MixtureFamily.parse(family)
    if kernel != "xi2":
        raise ValueError(f"unsupported kernel {kernel!r}; only 'xi2' is available")
    theta, eta = _point(family, theta, eta)
    x, w = _nodes(order)
    z = _observation(family, x, theta, eta)
    psi = score_ratio(family, z, 2, theta, eta)
    s = _score_vector(family, z, theta, eta)
    info = (s * w) @ s.T
    cov = (s * w) @ psi
    v2 = float((psi * psi) @ w - cov @ np.linalg.solve(info, cov))
    # exact cancellation can leave a tiny negative residue
    return max(v2, 0.0)


def c04_limit(
    family: MixtureFamily | str,
    theta: float | None = None,
    eta: float | None = None,
    order: int = DEFAULT_ORDER,
) -> float:
    """Population value of ``c04``: the Gaussian expectation of the psi kernel."""
    family = MixtureFamily.parse(family)
    theta, eta = _point(family, theta, eta)

    def integrand(u):
        z = _observation(family, u, theta, eta)
        xi = np.stack([score_ratio(family, z, r, theta, eta) for r in range(1, 5)])
        return psi_kernel(xi)

    return gaussian_expectation(integrand, order)


def moment_report(family: MixtureFamily | str, order: int = DEFAULT_ORDER) -> MomentReport:
    family = MixtureFamily.parse(family)
    return MomentReport(
        xi1_xi2_expectation=check_score_orthogonality(family, order=order),
        fisher_info_theta=float(fisher_information(family, order=order)[0, 0]),
        sigma_squared=adjusted_variance(family, order=order),
        c04_limit=c04_limit(family, order=order),
    )


# --------------------------------------------------------------------------- #
# Limit law
# --------------------------------------------------------------------------- #


def limit_law(family: MixtureFamily | str, order: int = DEFAULT_ORDER) -> LimitLaw:
    """Null limit of the PLC statistic for ``family``.

    Raises :class:`AssumptionViolation` if ``E[xi_1 xi_2] != 0`` or
    ``C_04 >= 0`` at the canonical point.
    """
    family = MixtureFamily.parse(family)
    report = moment_report(family, order)
    if abs(report.xi1_xi2_expectation) > ORTHOGONALITY_TOL:
        raise AssumptionViolation(
            f"E[xi1 xi2] = {report.xi1_xi2_expectation:.3g} is not zero"
        )
    if not report.c04_limit < 0:
        raise AssumptionViolation(f"C04 = {report.c04_limit:.3g} is not negative")
    if report.sigma_squared <= ORTHOGONALITY_TOL:
        return LimitLaw(LimitKind.DEGENERATE_AT_ZERO)
    return LimitLaw(LimitKind.SCALED_HALF_CHI_SQUARE, -3.0 * report.sigma_squared / report.c04_limit)


def limit_cdf(law: LimitLaw, t: float) -> float:
    if t < 0:
        return 0.0
    if law.kind is LimitKind.DEGENERATE_AT_ZERO:
        return 1.0
    return float(special.ndtr(math.sqrt(t / law.c_squared)))


def limit_quantile(law: LimitLaw, p: float) -> float:
    """Smallest ``t`` with ``limit_cdf(law, t) >= p``."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if law.kind is LimitKind.DEGENERATE_AT_ZERO or p <= 0.5:
        return 0.0
    return law.c_squared * float(special.ndtri(p)) ** 2
