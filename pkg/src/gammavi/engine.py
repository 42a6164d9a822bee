"""Gamma stochastic gradient variational Bayes and its two baselines.

The variational posterior is a product of independent gammas whose shapes
and rates are ``softplus(alpha)`` and ``softplus(beta)``. Each iteration draws
one uniform per latent, pushes it through the gamma inverse CDF, and chains
``d/dx [log f(x) - log q(x)]`` into ``(alpha, beta)`` through the pathwise
derivatives of the sample. The score-function term ``E[d/dtheta log q]`` is
zero in expectation and is omitted.

Models are anything implementing :class:`ModelInterface`.
"""

import abc
import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sc

from gammavi.errors import DomainError, NonFiniteGradientError, SolverError
from gammavi.optim import OptimizerConfig
from gammavi.reparam import gamma_quantile, sample_and_grad

HALF_LOG_2PI_E = 0.5 * np.log(2.0 * np.pi * np.e)


def softplus(theta):
    """``log(1 + e^theta)``; returns ``theta`` itself above 30."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(over="ignore"):
        out = np.where(theta > 30.0, theta, np.log1p(np.exp(np.minimum(theta, 30.0))))
    return float(out) if out.ndim == 0 else out


def softplus_inv(y):
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("softplus_inv requires y > 0")
    out = np.where(y > 30.0, y, y + np.log(-np.expm1(-np.minimum(y, 30.0))))
    return float(out) if out.ndim == 0 else out


def softplus_deriv(theta):
    out = sc.expit(np.asarray(theta, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


class ModelInterface(abc.ABC):
    """Unnormalized log joint over a vector of positive latents."""

    #: identifies the flattened latent layout in saved parameter files
    layout = "generic"

    @property
    @abc.abstractmethod
    def latent_dim(self):
        ...

    @abc.abstractmethod
    def log_joint(self, x):
        ...

    @abc.abstractmethod
    def grad_log_joint(self, x):
        ...

    def log_joint_and_grad(self, x):
        # Override when the two share work (factorizations, contractions).
        return self.log_joint(x), self.grad_log_joint(x)


@dataclass
class VariationalState:
    """Unconstrained parameters of a factorized gamma posterior."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.array(self.alpha, dtype=float)
        self.beta = np.array(self.beta, dtype=float)
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-d arrays of equal length")

    @classmethod
    def from_gamma(cls, shape, rate):
        return cls(softplus_inv(np.atleast_1d(shape)), softplus_inv(np.atleast_1d(rate)))

    @classmethod
    def default(cls, dim):
        """Every latent starts at G(1, 1)."""
        return cls.from_gamma(np.ones(dim), np.ones(dim))

    @property
    def dim(self):
        return self.alpha.shape[0]

    @property
    def shape(self):
        return np.atleast_1d(softplus(self.alpha))

    @property
    def rate(self):
        return np.atleast_1d(softplus(self.beta))

    @property
    def mean(self):
        return self.shape / self.rate

    def sample(self, rng, size=None):
        """Draws from q via the same inverse-CDF transform used for fitting."""
        n = () if size is None else (size,)
        z = rng.random(n + (self.dim,))
        return gamma_quantile(z, self.shape, self.rate)

    def copy(self):
        return VariationalState(self.alpha.copy(), self.beta.copy())


@dataclass
class NormalState:
    """Factorized normal over ``u``, with latents ``x = softplus(u)``."""

    mean: np.ndarray
    log_sd: np.ndarray

    def __post_init__(self):
        self.mean = np.array(self.mean, dtype=float)
        self.log_sd = np.array(self.log_sd, dtype=float)

    @classmethod
    def default(cls, dim):
        return cls(np.full(dim, softplus_inv(1.0)), np.zeros(dim))

    @property
    def dim(self):
        return self.mean.shape[0]

    def sample(self, rng, size=None):
        n = () if size is None else (size,)
        u = self.mean + np.exp(self.log_sd) * rng.standard_normal(n + (self.dim,))
        return softplus(u)

    def copy(self):
        return NormalState(self.mean.copy(), self.log_sd.copy())


@dataclass
class FitTrace:
    elbo: np.ndarray
    wall_ms: np.ndarray
    final_state: object
    stopped_early: bool = False
    info: dict = field(default_factory=dict)

    @property
    def iteration_count(self):
        return len(self.elbo)

    @property
    def wall_time(self):
        return float(self.wall_ms[-1]) / 1000.0 if len(self.wall_ms) else 0.0

    def smoothed_elbo(self, window=100):
        """Mean of the last ``window`` single-sample ELBO values."""
        if not len(self.elbo):
            return float("nan")
        return float(np.mean(self.elbo[-window:]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "elbo", "wall_ms"])
            for i, (e, t) in enumerate(zip(self.elbo, self.wall_ms)):
                w.writerow([i, repr(float(e)), f"{t:.3f}"])


def _gamma_logpdf(x, a, b):
    return a * np.log(b) - sc.gammaln(a) + (a - 1.0) * np.log(x) - b * x


def _check_finite(grad, it, names):
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        k = int(bad[0])
        dim = grad.size // len(names)
        raise NonFiniteGradientError(
            f"non-finite gradient at iteration {it}, {names[k // dim]}[{k % dim}]",
            coordinate=k % dim, iteration=it)


def _plateaued(elbo, window, tol):
    if tol is None or len(elbo) < 2 * window or len(elbo) % window:
        return False
    last = np.mean(elbo[-window:])
    prev = np.mean(elbo[-2 * window:-window])
    return abs(last - prev) < tol


def elbo_estimate(model, state, rng, S=1):
    """Monte Carlo ELBO ``E_q[log f(x) - log q(x)]`` from ``S`` draws."""
    if S < 1:
        raise ValueError("S must be >= 1")
    a, b = state.shape, state.rate
    total = 0.0
    for _ in range(S):
        x = gamma_quantile(rng.random(state.dim), a, b)
        total += model.log_joint(x) - np.sum(_gamma_logpdf(x, a, b))
    return total / S


def gamma_sgvb_gradient(model, state, z):
    """Single-sample ELBO and its gradient for given uniform draws ``z``.

    Returns ``(elbo, grad, x)`` where ``grad`` is the concatenation of the
    ``alpha`` and ``beta`` gradients.
    """
    a, b = softplus(state.alpha), softplus(state.beta)
    r = sample_and_grad(z, a, b)
    x = r.x
    lj, gj = model.log_joint_and_grad(x)
    g = gj - ((a - 1.0) / x - b)
    grad = np.concatenate([g * r.dx_da * sc.expit(state.alpha),
                           g * r.dx_db * sc.expit(state.beta)])
    return lj - np.sum(_gamma_logpdf(x, a, b)), grad, x


def normal_sgvb_gradient(model, state, eps, learn_scale=True):
    """Single-sample objective and gradient of the softplus-normal baseline.

    ``eps`` are standard normal draws; returns ``(elbo, grad)`` with the
    ``mean`` and ``log_sd`` gradients concatenated.
    """
    sd = np.exp(state.log_sd)
    u = state.mean + sd * eps
    x = softplus(u)
    lj, gj = model.log_joint_and_grad(x)
    # d/du of log f(softplus u) + log softplus'(u); the entropy is constant in u
    du = gj * sc.expit(u) + sc.expit(-u)
    g_logsd = du * sd * eps + 1.0 if learn_scale else np.zeros_like(du)
    elbo = lj + np.sum(sc.log_expit(u)) + np.sum(HALF_LOG_2PI_E + state.log_sd)
    return elbo, np.concatenate([du, g_logsd])


def fit_gamma_sgvb(model, init=None, optimizer=None, iterations=1000, seed=0,
                   tol=None, window=100):
    """Fit a factorized gamma posterior by stochastic gradient ascent on the ELBO.

    Parameters
    ----------
    model : ModelInterface
    init : VariationalState, optional
        Defaults to G(1, 1) for every latent.
    optimizer : OptimizerConfig, optional
        Defaults to AdaDelta(rho=0.9, eps=1e-4) with momentum 0.9.
    iterations : int
        Iteration budget.
    seed : int or numpy.random.Generator
    tol : float, optional
        Enables the plateau detector: stop once the mean ELBO over
        consecutive ``window``-iteration blocks changes by less than ``tol``.

    Returns
    -------
    FitTrace
        Single-sample ELBO per iteration and the final state.
    """
    state = (init or VariationalState.default(model.latent_dim)).copy()
    if state.dim != model.latent_dim:
        raise ValueError(f"state has {state.dim} latents, model expects {model.latent_dim}")
    opt = optimizer or OptimizerConfig()
    ostate = opt.init_state(2 * state.dim)
    rng = np.random.default_rng(seed)
    D = state.dim

    elbo = np.empty(iterations)
    wall = np.empty(iterations)
    t0 = time.perf_counter()
    stopped = False
    n = 0
    for it in range(iterations):
        z = rng.random(D)
        try:
            elbo[it], grad, _ = gamma_sgvb_gradient(model, state, z)
        except SolverError as exc:
            raise SolverError(f"iteration {it}: {exc}") from exc
        _check_finite(grad, it, ("alpha", "beta"))
        delta = opt.step(grad, ostate)
        state.alpha += delta[:D]
        state.beta += delta[D:]
        wall[it] = 1000.0 * (time.perf_counter() - t0)
        n = it + 1
        if _plateaued(elbo[:n], window, tol):
            stopped = True
            break
    return FitTrace(elbo[:n], wall[:n], state, stopped_early=stopped)


def fit_map(model, x0, optimizer=None, iterations=1000, seed=None, return_path=False):
    """Point estimate maximizing ``log f(softplus(theta))`` over ``theta``.

    No Jacobian term is added, so the optimum is the mode of ``f`` in x-space.
    ``seed`` is accepted for a uniform call signature; nothing is random here.
    """
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 <= 0):
        raise DomainError("x0 must be > 0 elementwise")
    opt = optimizer or OptimizerConfig()
    theta = softplus_inv(np.atleast_1d(x0)).astype(float)
    ostate = opt.init_state(theta.size)
    path = [] if return_path else None
    for it in range(iterations):
        x = softplus(theta)
        grad = model.grad_log_joint(x) * sc.expit(theta)
        _check_finite(grad, it, ("theta",))
        theta = theta + opt.step(grad, ostate)
        if path is not None:
            path.append(softplus(theta))
    x = np.atleast_1d(softplus(theta))
    if return_path:
        return x, np.array(path)
    return x


def fit_normal_sgvb(model, init=None, optimizer=None, iterations=1000, seed=0,
                    learn_scale=True):
    """Factorized-normal SGVB on ``u`` with ``x = softplus(u)``.

    The single-sample objective is
    ``log f(x) + sum log softplus'(u) + sum (0.5 log(2 pi e) + log_sd)``,
    i.e. the change-of-variables Jacobian plus the closed-form normal entropy.
    With ``learn_scale=False`` the standard deviations stay at their initial
    values.
    """
    state = (init or NormalState.default(model.latent_dim)).copy()
    if state.dim != model.latent_dim:
        raise ValueError(f"state has {state.dim} latents, model expects {model.latent_dim}")
    opt = optimizer or OptimizerConfig()
    ostate = opt.init_state(2 * state.dim)
    rng = np.random.default_rng(seed)
    D = state.dim

    elbo = np.empty(iterations)
    wall = np.empty(iterations)
    t0 = time.perf_counter()
    for it in range(iterations):
        elbo[it], grad = normal_sgvb_gradient(model, state, rng.standard_normal(D), learn_scale)
        _check_finite(grad, it, ("mean", "log_sd"))
        delta = opt.step(grad, ostate)
        state.mean += delta[:D]
        if learn_scale:
            state.log_sd += delta[D:]
        wall[it] = 1000.0 * (time.perf_counter() - t0)
    return FitTrace(elbo, wall, state)
