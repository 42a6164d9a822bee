"""Gamma process factor analysis on synthetic data.

Loadings are sparse (80% zeros, otherwise U[0, 1]) with D=50 and K=10. For
growing N we report the Amari error of the posterior-mean loadings, then
compare held-out perplexity of the GPFA expected covariance with the
empirical and Ledoit-Wolf covariances at D=40.

    python demos/gpfa_recovery.py
"""

import numpy as np

from gammavi import fit_gamma_sgvb
from gammavi.data_io import synth_gpfa
from gammavi.errors import DomainError
from gammavi.gpfa import GpfaData, GpfaModel, expected_covariance
from gammavi.metrics import amari_error, empirical_cov, gaussian_perplexity, ledoit_wolf_cov
from gammavi.optim import OptimizerConfig

opt = OptimizerConfig("adadelta", momentum=0.9, rho=0.9, eps=1e-3)

print("Amari error of posterior-mean loadings (D=50, K=10, 1000 iterations)")
for N in (10, 100, 1000, 10_000):
    Y, W_true = synth_gpfa(50, 10, N, seed=0)
    model = GpfaModel(GpfaData.from_samples(Y), 10)
    tr = fit_gamma_sgvb(model, optimizer=opt, iterations=1000, seed=0)
    W = model.unflatten(tr.final_state.mean).W
    print(f"  N={N:6d}: {amari_error(W_true, W):.3f}   ({tr.wall_time:.1f}s)")

print("\nheld-out perplexity (D=40, 2000 test rows)")
Y, W_true = synth_gpfa(40, 10, 4000, seed=0)
Y_test = Y[2000:]
print(f"  generating covariance: {gaussian_perplexity(Y_test, W_true @ W_true.T + 0.1 * np.eye(40)):.2f}")
for N in (20, 40, 200, 2000):
    model = GpfaModel(GpfaData.from_samples(Y[:N]), 10)
    q = fit_gamma_sgvb(model, optimizer=opt, iterations=1000, seed=0).final_state
    cov = expected_covariance(*model.split_samples(q.sample(np.random.default_rng(0), size=100)))
    try:
        emp = f"{gaussian_perplexity(Y_test, empirical_cov(Y[:N])):.2f}"
    except DomainError:
        emp = "singular"
    print(f"  N={N:5d}: gpfa {gaussian_perplexity(Y_test, cov):8.2f}   empirical {emp:>9}   "
          f"ledoit-wolf {gaussian_perplexity(Y_test, ledoit_wolf_cov(Y[:N])):.2f}")
