"""Small models with closed-form posteriors, for checking the engine."""

import numpy as np
from scipy import special as sc

from gammavi.engine import ModelInterface


class GammaDensityModel(ModelInterface):
    """``f(x) = prod_d G(x_d | shape, rate)``, a normalized density.

    The ELBO of any q against this model is ``-KL(q || f)``.
    """

    layout = "gamma_density"

    def __init__(self, shape, rate, dim=1):
        self.a0 = float(shape)
        self.b0 = float(rate)
        self.dim = int(dim)

    @property
    def latent_dim(self):
        return self.dim

    def log_joint(self, x):
        a, b = self.a0, self.b0
        return float(np.sum(a * np.log(b) - sc.gammaln(a) + (a - 1.0) * np.log(x) - b * x))

    def grad_log_joint(self, x):
        return (self.a0 - 1.0) / x - self.b0


class GammaPoissonModel(ModelInterface):
    """Poisson counts with a shared rate ``lam ~ G(shape, rate)``.

    The posterior is ``G(shape + sum(y), rate + n)`` and the evidence is a
    negative-binomial-type marginal, both available via :meth:`posterior`
    and :meth:`log_evidence`.
    """

    layout = "gamma_poisson"

    def __init__(self, counts, shape=1.0, rate=1.0):
        self.y = np.asarray(counts, dtype=float)
        self.a0 = float(shape)
        self.b0 = float(rate)

    @property
    def latent_dim(self):
        return 1

    def log_joint(self, x):
        lam = x[0]
        a, b, y = self.a0, self.b0, self.y
        prior = a * np.log(b) - sc.gammaln(a) + (a - 1.0) * np.log(lam) - b * lam
        lik = np.sum(y * np.log(lam) - lam - sc.gammaln(y + 1.0))
        return float(prior + lik)

    def grad_log_joint(self, x):
        lam = x[0]
        return np.array([(self.a0 - 1.0 + self.y.sum()) / lam - self.b0 - self.y.size])

    def posterior(self):
        return self.a0 + self.y.sum(), self.b0 + self.y.size

    def log_evidence(self):
        a, b = self.a0, self.b0
        an, bn = self.posterior()
        return float(a * np.log(b) - sc.gammaln(a) + sc.gammaln(an) - an * np.log(bn)
                     - np.sum(sc.gammaln(self.y + 1.0)))
