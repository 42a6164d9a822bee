"""Step-size rules for stochastic gradient ascent.

Every rule maps a gradient vector to an additive update ``delta`` (the caller
does ``theta += delta``). Constants follow the gamma-SGVB recipe:

* AdaGrad: ``0.1 / (1e-6 + sqrt(sum_t g_t^2))``
* RMSprop: ``m <- 0.1 g^2 + 0.9 m``, step ``0.01 / (1e-6 + sqrt(m))``
* AdaDelta: ``m_g <- rho g^2 + (1 - rho) m_g``, step
  ``sqrt(m_theta + eps) / sqrt(m_g + eps)``, then
  ``m_theta <- rho delta^2 + (1 - rho) m_theta``

Note that ``rho`` weights the *new* sample, and momentum is
``v <- lam g + (1 - lam) v`` so ``lam = 1`` disables it.
"""

from dataclasses import dataclass

import numpy as np

OPTIMIZERS = ("sgd", "adagrad", "rmsprop", "adadelta")


@dataclass
class OptimizerState:
    velocity: np.ndarray
    accum_sq_grad: np.ndarray
    rms_grad: np.ndarray
    rms_update: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(*(np.zeros(n) for _ in range(4)))

    @property
    def dim(self):
        return self.velocity.shape[0]


def _check(g, state):
    g = np.asarray(g, dtype=float)
    if g.shape != (state.dim,):
        raise ValueError(f"gradient has shape {g.shape}, optimizer state has dimension {state.dim}")
    return g


def momentum_filter(g, state, lam):
    """Exponentially smooth the gradient in place of ``g``; returns ``v``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("momentum lambda must lie in [0, 1]")
    g = _check(g, state)
    state.velocity = lam * g + (1.0 - lam) * state.velocity
    return state.velocity


def sgd_step(g, state, lr):
    g = _check(g, state)
    state.step_count += 1
    return lr * g


def adagrad_step(g, state):
    g = _check(g, state)
    state.accum_sq_grad = state.accum_sq_grad + g * g
    state.step_count += 1
    return 0.1 / (1e-6 + np.sqrt(state.accum_sq_grad)) * g


def rmsprop_step(g, state):
    g = _check(g, state)
    state.rms_grad = 0.1 * g * g + 0.9 * state.rms_grad
    state.step_count += 1
    return 0.01 / (1e-6 + np.sqrt(state.rms_grad)) * g


def adadelta_step(g, state, rho=0.9, epsilon=1e-4):
    """One AdaDelta update.

    The squared-gradient average is refreshed before the step size is formed,
    so the very first step never divides by an empty accumulator; the
    squared-update average is refreshed afterwards.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    g = _check(g, state)
    state.rms_grad = rho * g * g + (1.0 - rho) * state.rms_grad
    step = np.sqrt(state.rms_update + epsilon) / np.sqrt(state.rms_grad + epsilon)
    delta = step * g
    state.rms_update = rho * delta * delta + (1.0 - rho) * state.rms_update
    state.step_count += 1
    return delta


@dataclass
class OptimizerConfig:
    """Choice of step rule plus its hyperparameters.

    ``momentum`` is the smoothing weight ``lam`` on the newest gradient;
    ``1.0`` means no momentum.
    """

    name: str = "adadelta"
    momentum: float = 0.9
    rho: float = 0.9
    eps: float = 1e-4
    lr: float = 0.01

    def __post_init__(self):
        if self.name not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.name!r}; expected one of {OPTIMIZERS}")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")

    def init_state(self, n):
        return OptimizerState.zeros(n)

    def step(self, g, state):
        """Momentum (if enabled) followed by the step rule; returns the update."""
        if self.momentum < 1.0:
            g = momentum_filter(g, state, self.momentum)
        if self.name == "sgd":
            return sgd_step(g, state, self.lr)
        if self.name == "adagrad":
            return adagrad_step(g, state)
        if self.name == "rmsprop":
            return rmsprop_step(g, state)
        return adadelta_step(g, state, self.rho, self.eps)

    def as_dict(self):
        return {"name": self.name, "momentum": self.momentum, "rho": self.rho,
                "eps": self.eps, "lr": self.lr}
