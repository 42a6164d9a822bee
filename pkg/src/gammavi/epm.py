"""Infinite edge partition model for undirected networks.

Link probability between nodes ``i`` and ``j`` is
``1 - exp(-p_ij)`` with ``p_ij = sum_k r_k w_ik w_jk``. With a mask ``M`` of
observed pairs the log likelihood splits into

    sum_{present} [log(1 - e^{-p}) + p] + sum_{missing} p - sum_{all i>j} p

where the last sum costs O(NK) via column sums, so one evaluation is linear in
the number of present and missing pairs rather than quadratic in ``N``.

Priors (finite-K gamma process)::

    w_ik ~ G(a_i, c_i),      a_i ~ G(0.01, 0.01),  c_i ~ G(1, 1)
    r_k  ~ G(gamma0 / K, c0), gamma0 ~ G(1, 1),    c0 ~ G(1, 1)

The flattened latent vector is ``[W (row-major), r, a_node, c_node, gamma0, c0]``
of length ``N*K + K + 2N + 2``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from gammavi.engine import ModelInterface
from gammavi.errors import DomainError

P_FLOOR = 1e-12

# (shape, rate) of the hyperpriors
A_NODE_PRIOR = (0.01, 0.01)
C_NODE_PRIOR = (1.0, 1.0)
GAMMA0_PRIOR = (1.0, 1.0)
C0_PRIOR = (1.0, 1.0)


def _canonical_pairs(pairs, name):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise DomainError(f"{name} contains a self-pair")
    return np.sort(pairs, axis=1)[:, ::-1].copy()


@dataclass
class EpmData:
    """Undirected graph with an optional set of held-out (missing) pairs.

    Pairs are stored with ``i > j``. Pairs in neither list are observed
    non-edges.
    """

    n_nodes: int
    present_edges: np.ndarray
    missing_pairs: np.ndarray = None
    self_loops_rejected: int = 0

    def __post_init__(self):
        self.n_nodes = int(self.n_nodes)
        self.present_edges = _canonical_pairs(self.present_edges, "present_edges")
        if self.missing_pairs is None:
            self.missing_pairs = np.zeros((0, 2), dtype=np.int64)
        self.missing_pairs = _canonical_pairs(self.missing_pairs, "missing_pairs")
        for name, p in (("present_edges", self.present_edges), ("missing_pairs", self.missing_pairs)):
            if p.size and (p.min() < 0 or p.max() >= self.n_nodes):
                raise DomainError(f"{name} has a node index outside [0, {self.n_nodes})")
            if len(np.unique(self.pair_ids(p))) != len(p):
                raise DomainError(f"{name} contains duplicate pairs")
        if np.intersect1d(self.pair_ids(self.present_edges), self.pair_ids(self.missing_pairs)).size:
            raise DomainError("present_edges and missing_pairs overlap")

    def pair_ids(self, pairs):
        return pairs[:, 0] * self.n_nodes + pairs[:, 1]

    @property
    def n_pairs(self):
        return self.n_nodes * (self.n_nodes - 1) // 2

    def adjacency(self):
        Y = np.zeros((self.n_nodes, self.n_nodes), dtype=np.int8)
        i, j = self.present_edges.T
        Y[i, j] = Y[j, i] = 1
        return Y

    def mask(self):
        M = np.ones((self.n_nodes, self.n_nodes), dtype=np.int8)
        i, j = self.missing_pairs.T
        M[i, j] = M[j, i] = 0
        np.fill_diagonal(M, 0)
        return M


@dataclass
class EpmLatent:
    W: np.ndarray
    r: np.ndarray
    a_node: np.ndarray
    c_node: np.ndarray
    gamma0: float
    c0: float

    @property
    def K(self):
        return self.W.shape[1]


def latent_dim(n_nodes, K):
    return n_nodes * K + K + 2 * n_nodes + 2


def flatten(lat):
    return np.concatenate([lat.W.ravel(), lat.r, lat.a_node, lat.c_node, [lat.gamma0, lat.c0]])


def unflatten(x, n_nodes, K):
    x = np.asarray(x, dtype=float)
    if x.shape != (latent_dim(n_nodes, K),):
        raise ValueError(f"expected {latent_dim(n_nodes, K)} latents, got shape {x.shape}")
    N = n_nodes
    o = N * K
    return EpmLatent(
        W=x[:o].reshape(N, K),
        r=x[o:o + K],
        a_node=x[o + K:o + K + N],
        c_node=x[o + K + N:o + K + 2 * N],
        gamma0=float(x[-2]),
        c0=float(x[-1]),
    )


def edge_rate(W, r, i, j):
    """``p_ij = sum_k r_k w_ik w_jk`` for ``i != j``."""
    if i == j:
        raise DomainError("edge_rate is undefined for i == j")
    return float(np.sum(r * W[i] * W[j]))


def _pair_rates(W, r, pairs):
    return np.einsum("pk,pk,k->p", W[pairs[:, 0]], W[pairs[:, 1]], r)


def total_rate(W, r):
    """``sum_{i>j} p_ij`` in O(NK) from column sums."""
    col = W.sum(axis=0)
    return 0.5 * float(np.sum(r * (col * col - np.sum(W * W, axis=0))))


def _log1mexp(p):
    # log(1 - e^{-p}) without cancellation at small p
    return np.log(-np.expm1(-p))


def log_likelihood(lat, data):
    """Masked Bernoulli log likelihood of the graph under the EPM link."""
    W, r = lat.W, lat.r
    p_pres = np.maximum(_pair_rates(W, r, data.present_edges), P_FLOOR)
    p_miss = _pair_rates(W, r, data.missing_pairs)
    return float(np.sum(_log1mexp(p_pres) + p_pres) + np.sum(p_miss) - total_rate(W, r))


def grad_log_likelihood(lat, data):
    """Gradients of :func:`log_likelihood` with respect to ``W`` and ``r``."""
    W, r = lat.W, lat.r
    E, Mi = data.present_edges, data.missing_pairs
    p_pres = np.maximum(_pair_rates(W, r, E), P_FLOOR)
    # d/dp [log(1 - e^{-p}) + p] = 1 / (1 - e^{-p})
    coef = np.concatenate([1.0 / -np.expm1(-p_pres), np.ones(len(Mi))])
    pairs = np.concatenate([E, Mi])
    Wi, Wj = W[pairs[:, 0]], W[pairs[:, 1]]

    gW = np.zeros_like(W)
    np.add.at(gW, pairs[:, 0], coef[:, None] * Wj)
    np.add.at(gW, pairs[:, 1], coef[:, None] * Wi)
    col = W.sum(axis=0)
    gW -= col - W
    gr = np.einsum("p,pk,pk->k", coef, Wi, Wj) - 0.5 * (col * col - np.sum(W * W, axis=0))
    return gW * r, gr


def _gamma_logpdf(x, a, b):
    return a * np.log(b) - sc.gammaln(a) + (a - 1.0) * np.log(x) - b * x


def log_prior_and_grad(lat):
    """Hierarchical gamma log prior and its gradient as an :class:`EpmLatent`."""
    W, r, a, c, g0, c0 = lat.W, lat.r, lat.a_node, lat.c_node, lat.gamma0, lat.c0
    if np.any(W <= 0) or np.any(r <= 0) or np.any(a <= 0) or np.any(c <= 0) or g0 <= 0 or c0 <= 0:
        raise DomainError("EPM latents must be > 0")
    K = W.shape[1]
    shape_r = g0 / K
    logW = np.log(W)
    logr = np.log(r)

    lp = (np.sum(_gamma_logpdf(W, a[:, None], c[:, None]))
          + np.sum(_gamma_logpdf(r, shape_r, c0))
          + np.sum(_gamma_logpdf(a, *A_NODE_PRIOR))
          + np.sum(_gamma_logpdf(c, *C_NODE_PRIOR))
          + _gamma_logpdf(g0, *GAMMA0_PRIOR)
          + _gamma_logpdf(c0, *C0_PRIOR))

    gW = (a[:, None] - 1.0) / W - c[:, None]
    gr = (shape_r - 1.0) / r - c0
    ga = (np.sum(np.log(c)[:, None] - sc.digamma(a)[:, None] + logW, axis=1)
          + (A_NODE_PRIOR[0] - 1.0) / a - A_NODE_PRIOR[1])
    gc = K * a / c - W.sum(axis=1) + (C_NODE_PRIOR[0] - 1.0) / c - C_NODE_PRIOR[1]
    gg0 = (np.sum(np.log(c0) - sc.digamma(shape_r) + logr) / K
           + (GAMMA0_PRIOR[0] - 1.0) / g0 - GAMMA0_PRIOR[1])
    gc0 = K * shape_r / c0 - r.sum() + (C0_PRIOR[0] - 1.0) / c0 - C0_PRIOR[1]
    return float(lp), EpmLatent(gW, gr, ga, gc, float(gg0), float(gc0))


class EpmModel(ModelInterface):
    """Log joint of the EPM over the flattened latent vector."""

    def __init__(self, data, K):
        self.data = data
        self.K = int(K)
        if self.K < 1:
            raise ValueError("K must be >= 1")

    @property
    def layout(self):
        return f"epm/N={self.data.n_nodes}/K={self.K}"

    @property
    def latent_dim(self):
        return latent_dim(self.data.n_nodes, self.K)

    def unflatten(self, x):
        return unflatten(x, self.data.n_nodes, self.K)

    def log_joint(self, x):
        lat = self.unflatten(x)
        return log_likelihood(lat, self.data) + log_prior_and_grad(lat)[0]

    def grad_log_joint(self, x):
        return self.log_joint_and_grad(x)[1]

    def log_joint_and_grad(self, x):
        lat = self.unflatten(x)
        ll = log_likelihood(lat, self.data)
        gW, gr = grad_log_likelihood(lat, self.data)
        lp, g = log_prior_and_grad(lat)
        g.W = g.W + gW
        g.r = g.r + gr
        return ll + lp, flatten(g)


def predict_link_prob(W_samples, r_samples, pairs):
    """Posterior-predictive link probability averaged over samples from q.

    Parameters
    ----------
    W_samples : ndarray, shape (S, N, K)
    r_samples : ndarray, shape (S, K)
    pairs : ndarray, shape (P, 2)

    Returns
    -------
    ndarray, shape (P,)
    """
    W_samples = np.asarray(W_samples, dtype=float)
    r_samples = np.asarray(r_samples, dtype=float)
    if W_samples.ndim == 2:
        W_samples, r_samples = W_samples[None], r_samples[None]
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    p = np.einsum("spk,spk,sk->sp", W_samples[:, pairs[:, 0]], W_samples[:, pairs[:, 1]], r_samples)
    return np.mean(-np.expm1(-p), axis=0)


def sample_link_params(sampler, n_nodes, K, rng, S):
    """Draw ``S`` (W, r) pairs from a fitted state exposing ``sample``."""
    xs = np.atleast_2d(sampler.sample(rng, size=S))
    lats = [unflatten(x, n_nodes, K) for x in xs]
    return np.stack([l.W for l in lats]), np.stack([l.r for l in lats])
