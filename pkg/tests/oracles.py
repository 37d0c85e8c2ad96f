"""Shared builders for tests: seeded trials on the linear plant and FD Jacobians."""
import numpy as np

from gpilc import plants as pl
from gpilc import gp
from gpilc.gp import ARD, SHARED, FitConfig, GPDataset, KernelParams
from gpilc.models import fit_io_model, fit_is_model
from gpilc.signals import lowpass_noise


def linear_plant(N=50, **overrides):
    return pl.get_plant(pl.LINEAR, horizon=N, **overrides)


def random_input(seed, N, variance=1.0, cutoff=5.0, fs=50.0):
    return lowpass_noise(np.random.default_rng(seed), N, variance, cutoff, fs)


def linear_trials(seed, n_trials=2, N=50, noise_on=True, variance=1.0, cutoff=5.0):
    plant = linear_plant(N)
    out = []
    for j in range(n_trials):
        u = random_input(seed * 100 + j, N, variance, cutoff, plant.fs)
        out.append(pl.run_trial(plant, u, seed=seed * 100 + j, noise_on=noise_on, index=j + 1).record)
    return plant, out


def io_model(seed, N=50, n_trials=2, cutoff=5.0):
    plant, trials = linear_trials(seed, n_trials, N, cutoff=cutoff)
    return plant, trials, fit_io_model(trials, FitConfig(seed=seed))


def is_model(seed, N=50, n_trials=2):
    plant, trials = linear_trials(seed, n_trials, N)
    return plant, trials, fit_is_model(trials, plant.output_row, FitConfig(seed=seed))


def fd_jacobian(predict, u, step=None):
    """Central differences of ``predict`` column by column."""
    u = np.asarray(u, dtype=float)
    h = 1e-4 * max(1.0, float(np.max(np.abs(u)))) if step is None else step
    cols = []
    for m in range(u.size):
        e = np.zeros(u.size)
        e[m] = h
        cols.append((predict(u + e) - predict(u - e)) / (2 * h))
    return np.array(cols).T


def jacobian_mismatch(P, P_fd):
    """Max entry error scaled by ``1 + ||P||_inf``."""
    return float(np.max(np.abs(P - P_fd)) / (1.0 + np.linalg.norm(P, np.inf)))


# -- GP oracles --------------------------------------------------------------

def random_dataset(seed, K=10, D=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(D, K))
    y = np.sin(X.sum(axis=0)) + 0.1 * rng.normal(size=K)
    return GPDataset.standardized(X, y)


def dense_posterior(V, z, Q, params, kind, jitter=0.0):
    """Direct evaluation with an explicit matrix inverse and elementwise kernels.

    ``jitter`` is the diagonal regularizer the model actually factored.
    """
    ls = params.length_scales

    def k(a, b):
        return gp.sek_shared(a, b, ls[0]) if kind == SHARED else gp.sek_ard(a, b, ls)

    Kvv = np.array([[k(V[:, i], V[:, j]) for j in range(V.shape[1])] for i in range(V.shape[1])])
    Kqv = np.array([[k(Q[:, i], V[:, j]) for j in range(V.shape[1])] for i in range(Q.shape[1])])
    Kqq = np.array([[k(Q[:, i], Q[:, j]) for j in range(Q.shape[1])] for i in range(Q.shape[1])])
    inv = np.linalg.inv(Kvv + (params.noise_variance + jitter) * np.eye(V.shape[1]))
    return Kqv @ inv @ z, Kqq - Kqv @ inv @ Kqv.T


def fd_lml_gradient(data, theta, kind, step=1e-5):
    out = np.empty(theta.size)
    for i in range(theta.size):
        e = np.zeros(theta.size)
        e[i] = step
        vp, _ = gp.log_marginal_likelihood(data, KernelParams.from_theta(theta + e), kind)
        vm, _ = gp.log_marginal_likelihood(data, KernelParams.from_theta(theta - e), kind)
        out[i] = (vp - vm) / (2 * step)
    return out
