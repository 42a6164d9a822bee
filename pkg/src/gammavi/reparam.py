"""Inverse-CDF reparameterization of gamma variables.

A gamma variate with shape ``a`` and rate ``b`` is written as a deterministic
function of a uniform draw, ``x = F^{-1}_{a,1}(z) / b``, so gradients of an
expectation with respect to ``(a, b)`` can be taken through the sample. The
shape derivative has no closed form, so three numeric regimes are used:

* ``SMALL_A``: the small-x asymptote ``P(a, x) ~ x^a / Gamma(a + 1)`` inverted
  in closed form, differentiated analytically.
* ``MODERATE``: the exact quantile from the iterative solver, with a forward
  finite difference in ``a``.
* ``LARGE_A``: a moment-matched Gaussian, ``x = (a + sqrt(a) z') / b``.

The rate derivative is ``-x / b`` in every regime.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from gammavi.errors import DomainError
from gammavi.special import inv_reg_inc_gamma

U_MIN = 1e-12
U_MAX = 1.0 - 1e-12
LARGE_A = 1000.0
X_FLOOR = 1e-300


class Regime(enum.IntEnum):
    SMALL_A = 0
    MODERATE = 1
    LARGE_A = 2


@dataclass
class ReparamResult:
    """Sample and pathwise derivatives; array fields share one shape.

    ``clamped`` flags entries whose value hit ``X_FLOOR`` (underflow in the
    small-shape closed form or a negative Gaussian-limit sample).
    ``log_x`` is exact even where ``x`` itself underflowed.
    """

    x: np.ndarray
    dx_da: np.ndarray
    dx_db: np.ndarray
    regime: np.ndarray
    log_x: np.ndarray
    clamped: np.ndarray


def _positive(name, v):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise DomainError(f"{name} must be finite and > 0")
    return v


def clamp_uniform(z):
    return np.clip(np.asarray(z, dtype=float), U_MIN, U_MAX)


def select_regime(a, z):
    """Regime code(s) for shape ``a`` and uniform draw ``z``.

    The small-shape test ``a < 1 and (1 - 0.94 z) ln(a) < -0.42`` takes
    precedence over the large-shape test ``a > 1000``.
    """
    a = _positive("a", a)
    z = np.asarray(z, dtype=float)
    if not np.all((z > 0) & (z < 1)):
        raise DomainError("z must lie strictly inside (0, 1)")
    small = (a < 1.0) & ((1.0 - 0.94 * z) * np.log(a) < -0.42)
    out = np.where(small, Regime.SMALL_A, np.where(a > LARGE_A, Regime.LARGE_A, Regime.MODERATE))
    if out.ndim == 0:
        return Regime(int(out))
    return out.astype(np.int8)


def default_eps(a):
    """Relative finite-difference step ``1e-5 * max(a, 1e-2)``."""
    return 1e-5 * np.maximum(a, 1e-2)


def _unit_quantile(z, a, regime):
    """Unit-rate quantile per regime: ``(x1, log_x1, expo)``.

    ``expo`` holds the small-shape exponent (NaN elsewhere) for reuse in the
    analytic derivative. ``x1`` may be 0 or negative before flooring.
    """
    x1 = np.empty(a.shape)
    log_x1 = np.empty(a.shape)
    expo = np.full(a.shape, np.nan)

    m = regime == Regime.SMALL_A
    if np.any(m):
        # (z a Gamma(a))^(1/a) in log space
        e = (np.log(z[m]) + sc.gammaln(a[m] + 1.0)) / a[m]
        expo[m] = e
        log_x1[m] = e
        x1[m] = np.exp(e)
    m = regime == Regime.MODERATE
    if np.any(m):
        q = np.atleast_1d(inv_reg_inc_gamma(a[m], z[m]))
        x1[m] = q
        log_x1[m] = np.log(q)
    m = regime == Regime.LARGE_A
    if np.any(m):
        val = a[m] + np.sqrt(a[m]) * sc.ndtri(z[m])
        x1[m] = val
        with np.errstate(invalid="ignore", divide="ignore"):
            log_x1[m] = np.where(val > 0, np.log(np.maximum(val, X_FLOOR)), np.log(X_FLOOR))
    return x1, log_x1, expo


def _prepare(z, a, b):
    a = _positive("a", a)
    b = _positive("b", b)
    z = clamp_uniform(z)
    z, a, b = np.broadcast_arrays(z, a, b)
    regime = np.asarray(select_regime(a, z), dtype=np.int8).reshape(a.shape)
    return z, a, b, regime


def sample_and_grad(z, a, b, eps_fd=None):
    """Gamma sample ``x(z; a, b)`` with its derivatives in ``a`` and ``b``.

    Parameters
    ----------
    z : array_like
        Uniform draws; clamped to ``[1e-12, 1 - 1e-12]``.
    a, b : array_like
        Shape and rate, broadcast against ``z``.
    eps_fd : float or array_like, optional
        Finite-difference step for the moderate regime. Defaults to
        :func:`default_eps`.

    Returns
    -------
    ReparamResult
    """
    z, a, b, regime = _prepare(z, a, b)
    if eps_fd is None:
        eps = default_eps(a)
    else:
        eps = np.broadcast_to(_positive("eps_fd", eps_fd), a.shape)

    x1, log_x1, expo = _unit_quantile(z, a, regime)
    dx1_da = np.empty(a.shape)

    m = regime == Regime.SMALL_A
    if np.any(m):
        # x1 * d/da[(ln z + ln Gamma(a + 1)) / a]
        dx1_da[m] = x1[m] * (sc.digamma(a[m] + 1.0) - expo[m]) / a[m]
    m = regime == Regime.MODERATE
    if np.any(m):
        am, em = a[m], eps[m]
        x2 = np.atleast_1d(inv_reg_inc_gamma(am + em, z[m], x0=x1[m]))
        dx1_da[m] = (x2 - x1[m]) / em
    m = regime == Regime.LARGE_A
    if np.any(m):
        dx1_da[m] = 1.0 + sc.ndtri(z[m]) / (2.0 * np.sqrt(a[m]))

    x = x1 / b
    clamped = ~(x >= X_FLOOR)
    x = np.where(clamped, X_FLOOR, x)
    return ReparamResult(x=x, dx_da=dx1_da / b, dx_db=-x / b, regime=regime,
                         log_x=log_x1 - np.log(b), clamped=clamped)


def gamma_quantile(z, a, b):
    """Values-only counterpart of :func:`sample_and_grad` (no finite difference)."""
    z, a, b, regime = _prepare(z, a, b)
    x = np.maximum(_unit_quantile(z, a, regime)[0] / b, X_FLOOR)
    return float(x) if x.ndim == 0 else x


def log_pdf(x, a, b):
    """Log density of G(a, b) in the shape/rate parameterization."""
    x = _positive("x", x)
    a = _positive("a", a)
    b = _positive("b", b)
    out = a * np.log(b) - sc.gammaln(a) + (a - 1.0) * np.log(x) - b * x
    return float(out) if np.ndim(out) == 0 else out


def grad_log_pdf_x(x, a, b):
    """Derivative of :func:`log_pdf` with respect to ``x``."""
    x = _positive("x", x)
    out = (np.asarray(a, dtype=float) - 1.0) / x - np.asarray(b, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def kl_gamma(a_q, b_q, a_p, b_p):
    """KL(G(a_q, b_q) || G(a_p, b_p)) in closed form."""
    a_q, b_q, a_p, b_p = (_positive(n, v) for n, v in
                          (("a_q", a_q), ("b_q", b_q), ("a_p", a_p), ("b_p", b_p)))
    out = ((a_q - a_p) * sc.digamma(a_q) - sc.gammaln(a_q) + sc.gammaln(a_p)
           + a_p * (np.log(b_q) - np.log(b_p)) + a_q * (b_p - b_q) / b_q)
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out
