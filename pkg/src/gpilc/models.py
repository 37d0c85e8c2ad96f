"""Trial-data plant models: a lifted input/output GP and a one-step state GP.

Both produce a predicted output trajectory for a candidate input and the
lifted Jacobian ``P`` of that prediction, which drives the learning gain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import HAS_NUMBA, njit
from .errors import InvalidArgumentError, RolloutError
from .gp import (ARD, SHARED, FitConfig, GPDataset, GPModel, gp_fit, gp_mean_gradient,
                 gp_predict_mean)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    u: np.ndarray
    y: np.ndarray
    state: np.ndarray | None = None
    initial_state: np.ndarray | None = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if u.size != y.size:
            raise InvalidArgumentError(f"input has {u.size} samples, output {y.size}")
        if self.index < 0:
            raise InvalidArgumentError("trial index must be nonnegative")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)
        if self.state is not None:
            X = np.atleast_2d(np.asarray(self.state, dtype=float))
            if X.shape[1] != u.size:
                raise InvalidArgumentError("state matrix must have one column per sample")
            object.__setattr__(self, "state", X)
            x1 = X[:, 0].copy() if self.initial_state is None else np.asarray(
                self.initial_state, dtype=float).ravel()
            if x1.shape != X[:, 0].shape or not np.array_equal(x1, X[:, 0]):
                raise InvalidArgumentError("initial state must equal the first state column")
            object.__setattr__(self, "initial_state", x1)

    @property
    def n(self) -> int:
        return self.u.size


def truncate_history(trials, H: int) -> list:
    """The most recent ``min(H, len(trials))`` trials, in their original order."""
    if H < 1:
        raise InvalidArgumentError("history length must be at least 1")
    trials = sorted(trials, key=lambda t: t.index)
    return trials[-H:]


# -- input/output model -----------------------------------------------------

def io_regressors(u, include_current: bool = False) -> np.ndarray:
    """``N x N`` design whose column ``n`` holds the inputs that precede sample ``n``.

    Column ``n`` (1-based) is ``[u(n-1), ..., u(1), 0, ..., 0]``; with
    ``include_current`` it is ``[u(n), ..., u(1), 0, ...]``.
    """
    u = np.asarray(u, dtype=float).ravel()
    N = u.size
    V = np.zeros((N, N))
    shift = 0 if include_current else 1
    for n in range(N):
        k = n + 1 - shift
        if k > 0:
            V[:k, n] = u[:k][::-1]
    return V


def build_io_dataset(trials, include_current: bool = False, standardize: bool = True) -> GPDataset:
    trials = list(trials)
    if not trials:
        raise InvalidArgumentError("need at least one trial")
    N = trials[0].n
    if any(t.n != N for t in trials):
        raise InvalidArgumentError("all trials must share the same length")
    V = np.hstack([io_regressors(t.u, include_current) for t in trials])
    z = np.concatenate([t.y for t in trials])
    return GPDataset.standardized(V, z) if standardize else GPDataset(V, z)


@dataclass(frozen=True)
class IOModel:
    gp: GPModel
    horizon: int
    input_scale: float = 1.0
    include_current: bool = False


def fit_io_model(trials, config: FitConfig | None = None,
                 include_current: bool = False) -> IOModel:
    trials = list(trials)
    raw = build_io_dataset(trials, include_current)
    s = float(np.std(np.concatenate([t.u for t in trials])))
    s = s if s > 0 else 1.0
    ds = GPDataset(raw.design / s, raw.targets, raw.target_shift, raw.target_scale)
    gp = gp_fit(ds, SHARED, config)
    return IOModel(gp, trials[0].n, s, include_current)


def _check_len(u, N):
    u = np.asarray(u, dtype=float).ravel()
    if u.size != N:
        raise InvalidArgumentError(f"input has {u.size} samples, model horizon is {N}")
    return u


def io_predict(model: IOModel, u) -> np.ndarray:
    u = _check_len(u, model.horizon)
    V = io_regressors(u, model.include_current) / model.input_scale
    return gp_predict_mean(model.gp, V)


def linearize_io(model: IOModel, u) -> np.ndarray:
    """Analytic Jacobian ``d io_predict / d u`` at ``u``."""
    u = _check_len(u, model.horizon)
    V = io_regressors(u, model.include_current) / model.input_scale
    grad = gp_mean_gradient(model.gp, V) / model.input_scale  # (N, N) over regressor slots
    N = model.horizon
    P = np.zeros((N, N))
    off = 0 if model.include_current else 1
    for n in range(N):
        k = n + 1 - off
        if k > 0:
            P[n, :k] = grad[n, :k][::-1]
    return P


# -- input/state model ------------------------------------------------------

def build_is_dataset(trials, standardize: bool = True) -> list:
    """One dataset per state dimension; regressors ``[x(n); u(n)]``, targets ``x(n+1)``."""
    trials = list(trials)
    if not trials:
        raise InvalidArgumentError("need at least one trial")
    if any(t.state is None for t in trials):
        raise InvalidArgumentError("input/state datasets need recorded state trajectories")
    M = trials[0].state.shape[0]
    N = trials[0].n
    if any(t.state.shape != (M, N) for t in trials):
        raise InvalidArgumentError("all trials must share state dimension and length")
    if N < 2:
        raise InvalidArgumentError("need at least two samples per trial")
    V = np.hstack([np.vstack([t.state[:, :-1], t.u[None, :-1]]) for t in trials])
    Z = np.hstack([t.state[:, 1:] for t in trials])
    make = GPDataset.standardized if standardize else GPDataset
    return [make(V, Z[m]) for m in range(M)]


@dataclass(frozen=True)
class ISModel:
    gps: tuple
    output_row: np.ndarray
    horizon: int

    @property
    def state_dim(self) -> int:
        return len(self.gps)

    def step(self, x, u):
        """Predicted next state and its Jacobians ``(A, B)``."""
        q = np.append(x, u)[:, None]
        M = self.state_dim
        x_next = np.empty(M)
        J = np.empty((M, M + 1))
        for m, gp in enumerate(self.gps):
            x_next[m] = gp_predict_mean(gp, q)[0]
            J[m] = gp_mean_gradient(gp, q)[0]
        return x_next, J[:, :M], J[:, M]


@dataclass(frozen=True)
class LinearStepModel:
    """Exact one-step linear model, a drop-in oracle for ``ISModel``."""
    Ad: np.ndarray
    Bd: np.ndarray
    output_row: np.ndarray
    horizon: int

    @property
    def state_dim(self) -> int:
        return self.Ad.shape[0]

    def step(self, x, u):
        return self.Ad @ x + self.Bd * u, self.Ad, self.Bd


def fit_is_model(trials, output_row, configs=None) -> ISModel:
    """Fit one ARD GP per state dimension; ``configs`` may hold one FitConfig each."""
    datasets = build_is_dataset(trials)
    if configs is None or isinstance(configs, FitConfig):
        configs = [configs] * len(datasets)
    gps = tuple(gp_fit(ds, ARD, cfg) for ds, cfg in zip(datasets, configs))
    C = np.asarray(output_row, dtype=float).ravel()
    if C.size != len(gps):
        raise InvalidArgumentError("output row length must equal the state dimension")
    return ISModel(gps, C, list(trials)[0].n)


def _stack_is(model: ISModel):
    V = np.ascontiguousarray(model.gps[0].dataset.design.T)  # (K, D), shared by all GPs
    inv_ls = np.array([1.0 / gp.params.length_scales for gp in model.gps])
    alphas = np.array([gp.alpha for gp in model.gps])
    shift = np.array([gp.dataset.target_shift for gp in model.gps])
    scale = np.array([gp.dataset.target_scale for gp in model.gps])
    return V, inv_ls, alphas, shift, scale


@njit
def _is_rollout_loop(V, inv_ls, alphas, shift, scale, u, x1, want_jac):
    K, D = V.shape
    M = D - 1
    N = u.size
    X = np.zeros((M, N))
    A = np.zeros((N, M, M))
    B = np.zeros((N, M))
    x = x1.copy()
    q = np.empty(D)
    diff = np.empty(D)
    for n in range(N):
        X[:, n] = x
        if n == N - 1:
            break
        for d in range(M):
            q[d] = x[d]
        q[M] = u[n]
        xn = np.empty(M)
        for m in range(M):
            mu = 0.0
            g = np.zeros(D)
            for k in range(K):
                s = 0.0
                for d in range(D):
                    t = (q[d] - V[k, d]) * inv_ls[m, d]
                    diff[d] = t
                    s += t * t
                w = alphas[m, k] * np.exp(-0.5 * s)
                mu += w
                if want_jac:
                    for d in range(D):
                        g[d] -= w * diff[d] * inv_ls[m, d]
            xn[m] = shift[m] + scale[m] * mu
            if want_jac:
                for d in range(M):
                    A[n, m, d] = scale[m] * g[d]
                B[n, m] = scale[m] * g[M]
        for m in range(M):
            if not np.isfinite(xn[m]):
                return X, A, B, n + 2
        x = xn
    return X, A, B, -1


def _is_rollout_numpy(V, inv_ls, alphas, shift, scale, u, x1, want_jac):
    K, D = V.shape
    M = D - 1
    N = u.size
    X = np.zeros((M, N))
    A = np.zeros((N, M, M))
    B = np.zeros((N, M))
    x = x1.copy()
    for n in range(N):
        X[:, n] = x
        if n == N - 1:
            break
        q = np.append(x, u[n])
        diff = (q[None, None, :] - V[None, :, :]) * inv_ls[:, None, :]  # (M, K, D)
        w = alphas * np.exp(-0.5 * np.einsum("mkd,mkd->mk", diff, diff))
        xn = shift + scale * w.sum(axis=1)
        if want_jac:
            g = -np.einsum("mk,mkd->md", w, diff) * inv_ls * scale[:, None]
            A[n] = g[:, :M]
            B[n] = g[:, M]
        if not np.all(np.isfinite(xn)):
            return X, A, B, n + 2
        x = xn
    return X, A, B, -1


def _rollout_generic(model, u, x1, want_jac):
    M = model.state_dim
    N = u.size
    X = np.zeros((M, N))
    A = np.zeros((N, M, M))
    B = np.zeros((N, M))
    x = x1.copy()
    for n in range(N):
        X[:, n] = x
        if n == N - 1:
            break
        xn, A[n], B[n] = model.step(x, u[n])
        if not np.all(np.isfinite(xn)):
            return X, A, B, n + 2
        x = np.asarray(xn, dtype=float)
    return X, A, B, -1


def _rollout(model, u, x1, want_jac):
    u = _check_len(u, model.horizon)
    x1 = np.asarray(x1, dtype=float).ravel()
    if x1.size != model.state_dim:
        raise InvalidArgumentError(f"initial state must have length {model.state_dim}")
    if isinstance(model, ISModel):
        kernel = _is_rollout_loop if HAS_NUMBA else _is_rollout_numpy
        X, A, B, fail = kernel(*_stack_is(model), np.ascontiguousarray(u), x1, want_jac)
    else:
        X, A, B, fail = _rollout_generic(model, u, x1, want_jac)
    if fail >= 0:
        raise RolloutError(f"rollout produced a non-finite state at sample {fail}", sample=int(fail))
    return X, A, B


def is_rollout(model, u, x1):
    """Roll the one-step model out from ``x1``; returns ``(y_hat, X_hat)``."""
    X, _, _ = _rollout(model, u, x1, False)
    return np.asarray(model.output_row) @ X, X


def linearize_is(model, u, x1) -> np.ndarray:
    """Lifted Jacobian of the rollout output by forward sensitivity propagation."""
    _, A, B = _rollout(model, u, x1, True)
    N = model.horizon
    M = model.state_dim
    C = np.asarray(model.output_row)
    S = np.zeros((M, N))
    P = np.zeros((N, N))
    for n in range(N - 1):
        S = A[n] @ S
        S[:, n] += B[n]
        P[n + 1] = C @ S
    return P
