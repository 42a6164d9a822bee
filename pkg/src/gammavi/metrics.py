"""Evaluation metrics and covariance baselines."""

import numpy as np
from scipy import linalg
from scipy.stats import rankdata

from gammavi.errors import DomainError


def roc_auc(scores, labels):
    """Probability that a random positive outscores a random negative.

    Ties count one half. Uses the rank-sum (Mann-Whitney) identity.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def amari_error(W_true, W_est):
    """Permutation- and scale-invariant distance between loading matrices.

    With ``A = pinv(W_est) @ W_true`` (K x K)::

        d(A) = 1/(2K) sum_i (sum_j |A_ij| / max_j |A_ij| - 1)
             + 1/(2K) sum_j (sum_i |A_ij| / max_i |A_ij| - 1)

    which is 0 exactly when ``A`` is a scaled permutation.
    """
    W_true = np.asarray(W_true, dtype=float)
    W_est = np.asarray(W_est, dtype=float)
    if W_true.shape != W_est.shape:
        raise ValueError("W_true and W_est must have the same shape")
    K = W_true.shape[1]
    if np.linalg.matrix_rank(W_est) < K:
        raise np.linalg.LinAlgError("W_est does not have full column rank")
    A = np.abs(np.linalg.pinv(W_est) @ W_true)
    row_max = A.max(axis=1)
    col_max = A.max(axis=0)
    if np.any(row_max == 0) or np.any(col_max == 0):
        raise np.linalg.LinAlgError("cross-mapping has an all-zero row or column")
    rows = np.sum(A.sum(axis=1) / row_max - 1.0)
    cols = np.sum(A.sum(axis=0) / col_max - 1.0)
    return float((rows + cols) / (2.0 * K))


def gaussian_perplexity(Y_test, cov):
    """Average negative log density of the rows of ``Y_test`` under N(0, cov)."""
    Y = np.atleast_2d(np.asarray(Y_test, dtype=float))
    cov = np.asarray(cov, dtype=float)
    try:
        L = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise DomainError("covariance is not positive definite") from exc
    D = cov.shape[0]
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    sol = linalg.solve_triangular(L, Y.T, lower=True)
    quad = np.sum(sol * sol, axis=0)
    return float(0.5 * (D * np.log(2.0 * np.pi) + logdet) + 0.5 * np.mean(quad))


def empirical_cov(Y, center=False):
    """``Y^T Y / N``; the models are zero-mean so no centering by default."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if center:
        Y = Y - Y.mean(axis=0)
    return Y.T @ Y / Y.shape[0]


def ledoit_wolf_shrinkage(Y, center=False):
    """Optimal shrinkage intensity toward ``mu I`` (Ledoit & Wolf, 2004)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    N, D = Y.shape
    if N < 2 or not np.all(np.isfinite(Y)):
        raise DomainError("Ledoit-Wolf needs at least two finite samples")
    if center:
        Y = Y - Y.mean(axis=0)
    S = Y.T @ Y / N
    mu = np.trace(S) / D
    d2 = np.sum((S - mu * np.eye(D)) ** 2)
    if d2 == 0:
        return 0.0, S, mu
    # (1/N^2) sum_n ||y_n y_n^T - S||_F^2, expanded to avoid N x D x D arrays
    sq = np.sum(Y * Y, axis=1)
    b2_bar = (np.sum(sq * sq) / N - np.sum(S * S)) / N
    delta = min(b2_bar, d2) / d2
    return float(np.clip(delta, 0.0, 1.0)), S, mu


def ledoit_wolf_cov(Y, center=False):
    """Shrink the empirical covariance toward a scaled identity."""
    delta, S, mu = ledoit_wolf_shrinkage(Y, center=center)
    if mu <= 0:
        raise DomainError("degenerate input: zero total variance")
    return (1.0 - delta) * S + delta * mu * np.eye(S.shape[0])
