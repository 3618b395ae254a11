"""Independent reference implementations used by the tests.

Nothing here imports plcmix: likelihoods come from scipy.stats and the
maximization is a dense grid over the region that must contain every
stationary point, refined by a Nelder-Mead polish from the best cell.
"""

import numpy as np
from scipy import stats
from scipy.optimize import minimize


def mixture_loglik(z, family, t1, t2, eta):
    z = np.asarray(z, dtype=float)
    if family == "mean":
        l1 = stats.norm.logpdf(z, loc=t1, scale=eta)
        l2 = stats.norm.logpdf(z, loc=t2, scale=eta)
    else:
        l1 = stats.norm.logpdf(z, loc=eta, scale=np.sqrt(t1))
        l2 = stats.norm.logpdf(z, loc=eta, scale=np.sqrt(t2))
    return float(np.sum(np.logaddexp(l1, l2) - np.log(2.0)))


def grid_lambda(z, family, points=201):
    """2 * (max over the grid-plus-polish of the plugged likelihood - null)."""
    z = np.asarray(z, dtype=float)
    mu, var = z.mean(), z.var()
    if family == "mean":
        eta = np.sqrt(var)
        null = float(np.sum(stats.norm.logpdf(z, mu, eta)))
        g = np.linspace(z.min(), z.max(), points)

        def to_theta(p):
            return p
    else:
        eta = mu
        null = float(np.sum(stats.norm.logpdf(z, mu, np.sqrt(var))))
        r2 = (z - mu) ** 2
        g = np.linspace(np.log(max(r2.min(), 1e-300)), np.log(r2.max()), points)
        to_theta = np.exp
    a, b = np.meshgrid(g, g, indexing="ij")
    a, b = a.ravel(), b.ravel()
    keep = a <= b
    a, b = a[keep], b[keep]
    ta, tb = to_theta(a)[:, None], to_theta(b)[:, None]
    if family == "mean":
        l1 = stats.norm.logpdf(z[None, :], ta, eta)
        l2 = stats.norm.logpdf(z[None, :], tb, eta)
    else:
        l1 = stats.norm.logpdf(z[None, :], eta, np.sqrt(ta))
        l2 = stats.norm.logpdf(z[None, :], eta, np.sqrt(tb))
    vals = np.sum(np.logaddexp(l1, l2) - np.log(2.0), axis=1)
    def neg(p):
        return -mixture_loglik(z, family, to_theta(p[0]), to_theta(p[1]), eta)

    # polish the best few cells plus a small split around the null, since
    # shallow maxima near the null sit between grid points
    centre = mu if family == "mean" else np.log(var)
    width = 0.5 * np.sqrt(var) if family == "mean" else 0.5
    starts = [(a[k], b[k]) for k in np.argsort(-vals)[:5]] + [(centre - width, centre + width)]
    best = max(float(vals.max()), null)
    for s in starts:
        res = minimize(neg, s, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-13, maxiter=4000))
        best = max(best, -res.fun)
    return 2.0 * (best - null)


def density_derivative_ratio(family, z, r, theta, eta, parametrization="variance"):
    """``D_theta^r f / f`` by 30-digit numerical differentiation."""
    import mpmath

    with mpmath.workdps(30):
        z, eta = mpmath.mpf(z), mpmath.mpf(eta)

        def f(t):
            if family == "mean":
                loc, sd = t, eta
            elif parametrization == "sd":
                loc, sd = eta, t
            else:
                loc, sd = eta, mpmath.sqrt(t)
            return mpmath.npdf(z, loc, sd)

        t0 = mpmath.mpf(theta)
        return float(mpmath.diff(f, t0, r) / f(t0))


def gaussian_moment_expectation(coefs):
    """Exact ``E[p(U)]`` for ``U ~ N(0, 1)`` and ``p`` given by rational
    coefficients (lowest degree first), using ``E[U^k] = (k - 1)!!``."""
    from fractions import Fraction

    total = Fraction(0)
    for k, c in enumerate(coefs):
        if k % 2:
            continue
        moment = 1
        for j in range(k - 1, 0, -2):
            moment *= j
        total += Fraction(c) * moment
    return total


def poly_mul(a, b):
    from fractions import Fraction

    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += Fraction(x) * Fraction(y)
    return out


def poly_add(*terms):
    """Sum of ``(weight, coefs)`` pairs."""
    from fractions import Fraction

    size = max(len(c) for _, c in terms)
    out = [Fraction(0)] * size
    for w, c in terms:
        for i, x in enumerate(c):
            out[i] += Fraction(w) * Fraction(x)
    return out
