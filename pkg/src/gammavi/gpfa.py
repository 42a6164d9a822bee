"""Gamma process factor analysis with the factors integrated out.

Observations ``y_n ~ N(0, C)`` with ``C = W W^T + (1/tau) I`` and nonnegative
loadings ``W`` (D x K). Only the scatter ``S = sum_n y_n y_n^T`` enters the
likelihood, so the per-evaluation cost is O(D^3 + D^2 K) regardless of N::

    L = -(N/2) log|C| - (1/2) tr(S C^{-1}) - (N D / 2) log(2 pi)

Priors::

    w_dk ~ G(gamma_w r_k, gamma_w),  gamma_w ~ G(1, 1)
    r_k  ~ G(gamma0 / K, c0),        gamma0 ~ G(1, 1),  c0 ~ G(1, 1)
    tau  ~ G(0.1, 0.1)

Flattened latent order: ``[W (row-major), tau, gamma_w, r, gamma0, c0]``;
``tau`` is omitted when the noise precision is fixed.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy import special as sc

from gammavi.engine import ModelInterface
from gammavi.errors import DomainError

TAU_PRIOR = (0.1, 0.1)
GAMMA_W_PRIOR = (1.0, 1.0)
GAMMA0_PRIOR = (1.0, 1.0)
C0_PRIOR = (1.0, 1.0)
LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GpfaData:
    scatter: np.ndarray
    n_samples: int

    def __post_init__(self):
        S = np.asarray(self.scatter, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DomainError("scatter must be a square matrix")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise DomainError("scatter must be symmetric")
        if np.linalg.eigvalsh(S).min() < -1e-10 * max(np.trace(S), 1.0):
            raise DomainError("scatter must be positive semidefinite")
        self.scatter = 0.5 * (S + S.T)
        self.n_samples = int(self.n_samples)

    @classmethod
    def from_samples(cls, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return cls(Y.T @ Y, Y.shape[0])

    @property
    def dim(self):
        return self.scatter.shape[0]


@dataclass
class GpfaLatent:
    W: np.ndarray
    tau: float
    gamma_w: float
    r: np.ndarray
    gamma0: float
    c0: float


def _factor(W, tau):
    if tau <= 0:
        raise DomainError("tau must be > 0")
    D = W.shape[0]
    C = W @ W.T + np.eye(D) / tau
    try:
        return linalg.cho_factor(C, lower=True)
    except linalg.LinAlgError as exc:
        raise DomainError("implied covariance is not positive definite") from exc


def collapsed_log_lik(W, tau, data):
    """Gaussian log likelihood of the data with the factors integrated out."""
    cf = _factor(W, tau)
    N, D = data.n_samples, data.dim
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    tr = np.trace(linalg.cho_solve(cf, data.scatter))
    return float(-0.5 * N * logdet - 0.5 * tr - 0.5 * N * D * LOG_2PI)


def _lik_and_grad(W, tau, data):
    cf = _factor(W, tau)
    N, D = data.n_samples, data.dim
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    B = linalg.cho_solve(cf, data.scatter)      # C^{-1} S
    A = linalg.cho_solve(cf, W)                 # C^{-1} W
    Cinv = linalg.cho_solve(cf, np.eye(D))
    L = -0.5 * N * logdet - 0.5 * np.trace(B) - 0.5 * N * D * LOG_2PI
    gW = -N * A + B @ A
    gtau = (0.5 * N * np.trace(Cinv) - 0.5 * np.sum(B * Cinv)) / tau ** 2
    return float(L), gW, float(gtau)


def grad_collapsed_log_lik(W, tau, data):
    """``(dL/dW, dL/dtau)`` sharing one Cholesky factorization of ``C``."""
    _, gW, gtau = _lik_and_grad(W, tau, data)
    return gW, gtau


def _gamma_logpdf(x, a, b):
    return a * np.log(b) - sc.gammaln(a) + (a - 1.0) * np.log(x) - b * x


def log_prior_and_grad(lat, include_tau=True):
    """Log prior and its gradient (returned as a :class:`GpfaLatent`)."""
    W, tau, g, r, g0, c0 = lat.W, lat.tau, lat.gamma_w, lat.r, lat.gamma0, lat.c0
    if np.any(W <= 0) or np.any(r <= 0) or min(g, g0, c0) <= 0 or (include_tau and tau <= 0):
        raise DomainError("GPFA latents must be > 0")
    K = W.shape[1]
    shape_w = g * r                          # (K,)
    shape_r = g0 / K
    logW = np.log(W)

    lp = (np.sum(_gamma_logpdf(W, shape_w[None, :], g))
          + _gamma_logpdf(g, *GAMMA_W_PRIOR)
          + np.sum(_gamma_logpdf(r, shape_r, c0))
          + _gamma_logpdf(g0, *GAMMA0_PRIOR)
          + _gamma_logpdf(c0, *C0_PRIOR))
    if include_tau:
        lp += _gamma_logpdf(tau, *TAU_PRIOR)

    gW = (shape_w[None, :] - 1.0) / W - g
    # d/dg of sum_dk [g r_k log g - lnGamma(g r_k) + (g r_k - 1) log w - g w]
    gg = (np.sum(r[None, :] * (np.log(g) + 1.0 - sc.digamma(shape_w)[None, :] + logW) - W)
          + (GAMMA_W_PRIOR[0] - 1.0) / g - GAMMA_W_PRIOR[1])
    gr = (g * np.sum(np.log(g) - sc.digamma(shape_w)[None, :] + logW, axis=0)
          + (shape_r - 1.0) / r - c0)
    gg0 = (np.sum(np.log(c0) - sc.digamma(shape_r) + np.log(r)) / K
           + (GAMMA0_PRIOR[0] - 1.0) / g0 - GAMMA0_PRIOR[1])
    gc0 = K * shape_r / c0 - r.sum() + (C0_PRIOR[0] - 1.0) / c0 - C0_PRIOR[1]
    gtau = (TAU_PRIOR[0] - 1.0) / tau - TAU_PRIOR[1] if include_tau else 0.0
    return float(lp), GpfaLatent(gW, float(gtau), float(gg), gr, float(gg0), float(gc0))


class GpfaModel(ModelInterface):
    """Collapsed GPFA log joint over the flattened latent vector.

    Pass ``tau_fixed`` to hold the noise precision constant; it is then
    dropped from the latent vector and its prior.
    """

    def __init__(self, data, K, tau_fixed=None):
        self.data = data
        self.K = int(K)
        if self.K < 1:
            raise ValueError("K must be >= 1")
        self.tau_fixed = None if tau_fixed is None else float(tau_fixed)

    @property
    def layout(self):
        tau = "free" if self.tau_fixed is None else "fixed"
        return f"gpfa/D={self.data.dim}/K={self.K}/tau={tau}"

    @property
    def latent_dim(self):
        return self.data.dim * self.K + self.K + 3 + (self.tau_fixed is None)

    def unflatten(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.latent_dim,):
            raise ValueError(f"expected {self.latent_dim} latents, got shape {x.shape}")
        D, K = self.data.dim, self.K
        o = D * K
        W = x[:o].reshape(D, K)
        if self.tau_fixed is None:
            tau = float(x[o])
            o += 1
        else:
            tau = self.tau_fixed
        return GpfaLatent(W, tau, float(x[o]), x[o + 1:o + 1 + K], float(x[-2]), float(x[-1]))

    def flatten(self, lat):
        tau = [lat.tau] if self.tau_fixed is None else []
        return np.concatenate([np.ravel(lat.W), tau, [lat.gamma_w], lat.r, [lat.gamma0, lat.c0]])

    def log_joint(self, x):
        lat = self.unflatten(x)
        free = self.tau_fixed is None
        return collapsed_log_lik(lat.W, lat.tau, self.data) + log_prior_and_grad(lat, free)[0]

    def grad_log_joint(self, x):
        return self.log_joint_and_grad(x)[1]

    def log_joint_and_grad(self, x):
        lat = self.unflatten(x)
        free = self.tau_fixed is None
        L, gW, gtau = _lik_and_grad(lat.W, lat.tau, self.data)
        lp, g = log_prior_and_grad(lat, free)
        g.W = g.W + gW
        g.tau = g.tau + gtau
        return L + lp, self.flatten(g)

    def split_samples(self, xs):
        """Stack ``(W, tau)`` from rows of latent samples."""
        lats = [self.unflatten(x) for x in np.atleast_2d(xs)]
        return np.stack([l.W for l in lats]), np.array([l.tau for l in lats])


def expected_covariance(W_samples, tau_samples):
    """``mean_s [W_s W_s^T + (1/tau_s) I]`` over posterior samples."""
    W_samples = np.asarray(W_samples, dtype=float)
    if W_samples.ndim == 2:
        W_samples = W_samples[None]
    tau = np.broadcast_to(np.asarray(tau_samples, dtype=float), (W_samples.shape[0],))
    D = W_samples.shape[1]
    outer = np.einsum("sdk,sek->de", W_samples, W_samples) / W_samples.shape[0]
    return outer + np.mean(1.0 / tau) * np.eye(D)
