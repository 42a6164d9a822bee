import math
import time

import numpy as np
import pytest

from gammavi.errors import DomainError
from gammavi.gpfa import (GpfaData, GpfaLatent, GpfaModel, collapsed_log_lik,
                          expected_covariance, grad_collapsed_log_lik, log_prior_and_grad)
from oracles import central_diff, mvn_logpdf_rows, rel_close

LOG_2PI = math.log(2 * math.pi)


def random_case(seed, D=4, K=2, N=7):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(N, D))
    return GpfaData.from_samples(Y), Y, rng.uniform(0.1, 1.5, (D, K)), float(rng.uniform(0.5, 3))


def random_latent(rng, D, K):
    return GpfaLatent(rng.uniform(0.2, 1.5, (D, K)), float(rng.uniform(0.5, 3)),
                      float(rng.uniform(0.5, 2)), rng.uniform(0.3, 2, K),
                      float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2)))


# ---- data

def test_data_validation():
    with pytest.raises(DomainError):
        GpfaData(np.array([[1.0, 2.0], [0.0, 1.0]]), 3)
    with pytest.raises(DomainError):
        GpfaData(np.diag([1.0, -1.0]), 3)
    with pytest.raises(DomainError):
        GpfaData(np.ones(3), 1)
    d = GpfaData.from_samples(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert d.n_samples == 2 and d.dim == 2
    assert np.array_equal(d.scatter, [[10.0, 14.0], [14.0, 20.0]])


# ---- likelihood

def test_loglik_zero_loadings_is_standard_normal():
    data, Y, _, _ = random_case(0)
    W = np.zeros((4, 2))
    ref = -0.5 * np.trace(data.scatter) - 0.5 * data.n_samples * 4 * LOG_2PI
    assert collapsed_log_lik(W, 1.0, data) == pytest.approx(ref, abs=1e-10)


def test_loglik_univariate_case():
    data = GpfaData(np.array([[4.0]]), 1)
    L = collapsed_log_lik(np.array([[1.0]]), 1.0, data)
    assert L == pytest.approx(-0.5 * math.log(2) - 1 - 0.5 * LOG_2PI, abs=1e-14)
    assert L == pytest.approx(-2.2655121, abs=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_loglik_matches_density_oracle(seed):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(5, 3))
    W, tau = rng.uniform(0.1, 1.5, (3, 2)), float(rng.uniform(0.5, 3))
    ref = mvn_logpdf_rows(Y, W @ W.T + np.eye(3) / tau).sum()
    assert collapsed_log_lik(W, tau, GpfaData.from_samples(Y)) == pytest.approx(ref, abs=1e-10)


def test_loglik_column_permutation_invariance():
    data, _, W, tau = random_case(1, K=4)
    perm = [2, 0, 3, 1]
    assert collapsed_log_lik(W[:, perm], tau, data) == pytest.approx(
        collapsed_log_lik(W, tau, data), abs=1e-12)


def test_loglik_rejects_bad_precision():
    data, _, W, _ = random_case(2)
    with pytest.raises(DomainError):
        collapsed_log_lik(W, 0.0, data)


# ---- likelihood gradient

def test_grad_zero_loadings():
    data, _, _, _ = random_case(3)
    gW, _ = grad_collapsed_log_lik(np.zeros((4, 2)), 1.3, data)
    assert np.array_equal(gW, np.zeros((4, 2)))


def test_grad_univariate_case():
    gW, _ = grad_collapsed_log_lik(np.array([[1.0]]), 1.0, GpfaData(np.array([[4.0]]), 1))
    assert gW[0, 0] == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("seed", range(8))
def test_grad_matches_finite_difference(seed):
    data, _, W, tau = random_case(seed)
    gW, gtau = grad_collapsed_log_lik(W, tau, data)
    fdW = central_diff(lambda v: collapsed_log_lik(v.reshape(W.shape), tau, data), W.ravel(), h=1e-6)
    fdt = central_diff(lambda t: collapsed_log_lik(W, t[0], data), [tau], h=1e-6)
    assert rel_close(gW.ravel(), fdW, rel=1e-5)
    assert rel_close([gtau], fdt, rel=1e-5)


def test_cost_independent_of_sample_count():
    rng = np.random.default_rng(0)
    D, K = 30, 5
    W, tau = rng.uniform(0.1, 1, (D, K)), 2.0

    def timed(N):
        model = GpfaModel(GpfaData.from_samples(rng.normal(size=(N, D))), K)
        x = np.concatenate([W.ravel(), [tau, 1.0], np.ones(K), [1.0, 1.0]])
        model.log_joint_and_grad(x)
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            for _ in range(200):
                model.log_joint_and_grad(x)
            best = min(best, time.perf_counter() - t0)
        return best

    t_small, t_large = timed(100), timed(10_000)
    assert abs(t_large - t_small) / t_small < 0.2


# ---- prior

def _logg(x, a, b):
    return a * math.log(b) - math.lgamma(a) + (a - 1) * math.log(x) - b * x


def test_prior_unit_values():
    lat = GpfaLatent(np.ones((1, 1)), 1.0, 1.0, np.ones(1), 1.0, 1.0)
    lp, g = log_prior_and_grad(lat)
    hand = 5 * _logg(1, 1, 1) + _logg(1, 0.1, 0.1)
    assert _logg(1, 1, 1) == -1.0
    assert lp == pytest.approx(hand, abs=1e-12)
    assert g.tau == pytest.approx(-1.0, abs=1e-14)
    lp_fixed, g_fixed = log_prior_and_grad(lat, include_tau=False)
    assert lp_fixed == pytest.approx(5 * -1.0, abs=1e-12) and g_fixed.tau == 0.0


def test_prior_gradient_finite_difference():
    rng = np.random.default_rng(4)
    D, K = 3, 2
    model = GpfaModel(GpfaData(np.eye(D), 1), K)
    for _ in range(5):
        x = model.flatten(random_latent(rng, D, K))
        fd = central_diff(lambda v: log_prior_and_grad(model.unflatten(v))[0], x, h=1e-6)
        assert rel_close(model.flatten(log_prior_and_grad(model.unflatten(x))[1]), fd, rel=1e-5)


def test_prior_rejects_nonpositive():
    lat = GpfaLatent(np.ones((2, 1)), 1.0, 0.0, np.ones(1), 1.0, 1.0)
    with pytest.raises(DomainError):
        log_prior_and_grad(lat)


# ---- model interface

@pytest.mark.parametrize("tau_fixed", [None, 2.5])
@pytest.mark.parametrize("seed", range(3))
def test_model_gradient_contract(seed, tau_fixed):
    rng = np.random.default_rng(seed)
    data = GpfaData.from_samples(rng.normal(size=(9, 4)))
    model = GpfaModel(data, 2, tau_fixed=tau_fixed)
    x = model.flatten(random_latent(rng, 4, 2))
    val, g = model.log_joint_and_grad(x)
    assert val == pytest.approx(model.log_joint(x), abs=1e-10)
    assert rel_close(g, central_diff(model.log_joint, x, h=1e-6), rel=1e-5)


def test_model_layout_and_flattening():
    model = GpfaModel(GpfaData(np.eye(3), 5), 2)
    assert model.latent_dim == 3 * 2 + 1 + 1 + 2 + 2
    assert model.layout == "gpfa/D=3/K=2/tau=free"
    x = np.arange(1.0, model.latent_dim + 1)
    lat = model.unflatten(x)
    assert lat.W.tolist() == [[1, 2], [3, 4], [5, 6]]
    assert (lat.tau, lat.gamma_w, lat.r.tolist(), lat.gamma0, lat.c0) == (7, 8, [9, 10], 11, 12)
    assert np.array_equal(model.flatten(lat), x)
    fixed = GpfaModel(GpfaData(np.eye(3), 5), 2, tau_fixed=4.0)
    assert fixed.latent_dim == model.latent_dim - 1
    assert fixed.layout.endswith("tau=fixed")
    assert fixed.unflatten(np.ones(fixed.latent_dim)).tau == 4.0
    Ws, taus = model.split_samples(np.stack([x, x]))
    assert Ws.shape == (2, 3, 2) and taus.tolist() == [7, 7]


# ---- expected covariance

def test_expected_covariance_single_sample():
    W = np.array([[1.0, 2.0], [0.5, 0.0], [3.0, 1.0]])
    assert np.allclose(expected_covariance(W, 1.0), W @ W.T + np.eye(3), atol=0, rtol=1e-15)


def test_expected_covariance_zero_loadings():
    tau = np.array([1.0, 4.0])
    C = expected_covariance(np.zeros((2, 3, 2)), tau)
    assert np.allclose(C, np.mean(1 / tau) * np.eye(3))


def test_expected_covariance_symmetric_positive_definite():
    rng = np.random.default_rng(0)
    C = expected_covariance(rng.gamma(1.0, 1.0, (100, 6, 3)), rng.gamma(2.0, 1.0, 100))
    assert np.array_equal(C, C.T)
    assert np.linalg.eigvalsh(C).min() > 0
