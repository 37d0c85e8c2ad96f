"""Gaussian-process regression with unit-amplitude squared-exponential kernels.

Design matrices follow the column convention: a ``D x K`` array holds ``K``
regression vectors of dimension ``D``. Targets are standardized to zero
mean and unit variance before fitting because the kernel carries no signal
variance hyperparameter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.linalg.lapack
import scipy.optimize
from scipy.spatial.distance import cdist, pdist

from ._accel import HAS_NUMBA, njit
from .errors import InvalidArgumentError, NumericalError

SHARED = "shared"
ARD = "ard"
KERNEL_KINDS = (SHARED, ARD)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
NOISE_FLOOR = 1e-8
NOISE_CEIL = 10.0
TARGET_SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class KernelParams:
    length_scales: np.ndarray
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if ls.ndim != 1 or ls.size == 0 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise InvalidArgumentError(f"length scales must be positive: {ls}")
        nv = float(self.noise_variance)
        if not np.isfinite(nv) or nv <= 0:
            raise InvalidArgumentError(f"noise variance must be positive: {nv}")
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "noise_variance", nv)

    @property
    def theta(self) -> np.ndarray:
        """Log-hyperparameters ``[log l_1..l_M, log noise_variance]``."""
        return np.append(np.log(self.length_scales), np.log(self.noise_variance))

    @classmethod
    def from_theta(cls, theta) -> KernelParams:
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[:-1]), float(np.exp(theta[-1])))

    def to_dict(self) -> dict:
        return {"length_scales": self.length_scales.tolist(), "noise_variance": self.noise_variance}


@dataclass(frozen=True)
class GPDataset:
    design: np.ndarray
    targets: np.ndarray
    target_shift: float = 0.0
    target_scale: float = 1.0

    def __post_init__(self):
        V = np.asarray(self.design, dtype=float)
        z = np.asarray(self.targets, dtype=float).ravel()
        if V.ndim == 1:
            V = V[:, None]
        if V.ndim != 2 or V.shape[1] != z.size:
            raise InvalidArgumentError(
                f"design has {V.shape[-1]} columns but {z.size} targets were given")
        if z.size < 1:
            raise InvalidArgumentError("dataset needs at least one observation")
        if not (np.all(np.isfinite(V)) and np.all(np.isfinite(z))):
            raise InvalidArgumentError("dataset contains non-finite values")
        if not self.target_scale > 0:
            raise InvalidArgumentError("target_scale must be positive")
        object.__setattr__(self, "design", V)
        object.__setattr__(self, "targets", z)

    @classmethod
    def standardized(cls, design, targets) -> GPDataset:
        z = np.asarray(targets, dtype=float).ravel()
        shift = float(np.mean(z)) if z.size else 0.0
        scale = max(float(np.std(z)), TARGET_SCALE_FLOOR) if z.size else 1.0
        return cls(design, z, shift, scale)

    @property
    def dim(self) -> int:
        return self.design.shape[0]

    @property
    def n_obs(self) -> int:
        return self.design.shape[1]

    @property
    def z(self) -> np.ndarray:
        """Targets in standardized units."""
        return (self.targets - self.target_shift) / self.target_scale


@dataclass(frozen=True)
class GPModel:
    dataset: GPDataset
    params: KernelParams
    kernel_kind: str
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = JITTER_START
    log_likelihood: float = float("nan")


@dataclass
class FitConfig:
    n_starts: int = 5
    max_iter: int = 200
    gtol: float = 1e-6
    seed: int = 0
    warm_start: KernelParams | None = None
    # optimizer box, as multiples of the median pairwise distance
    length_bounds: tuple = (1e-3, 1e3)
    noise_bounds: tuple = (NOISE_FLOOR, NOISE_CEIL)


def _check_kind(kind):
    if kind not in KERNEL_KINDS:
        raise InvalidArgumentError(f"unknown kernel kind {kind!r}")


def sek_shared(v, v_hat, l) -> float:
    v = np.asarray(v, dtype=float).ravel()
    v_hat = np.asarray(v_hat, dtype=float).ravel()
    if v.shape != v_hat.shape:
        raise InvalidArgumentError(f"dimension mismatch {v.shape} vs {v_hat.shape}")
    if not l > 0:
        raise InvalidArgumentError("length scale must be positive")
    d = v - v_hat
    return float(np.exp(-(d @ d) / (2.0 * l * l)))


def sek_ard(v, v_hat, scales) -> float:
    v = np.asarray(v, dtype=float).ravel()
    v_hat = np.asarray(v_hat, dtype=float).ravel()
    scales = np.asarray(scales, dtype=float).ravel()
    if v.shape != v_hat.shape or v.shape != scales.shape:
        raise InvalidArgumentError("dimension mismatch between vectors and scales")
    if np.any(scales <= 0):
        raise InvalidArgumentError("length scales must be positive")
    d = (v - v_hat) / scales
    return float(np.exp(-0.5 * (d @ d)))


@njit
def _sqdist_loop(A, B):
    K, D = A.shape
    F = B.shape[0]
    out = np.empty((K, F))
    for i in range(K):
        for j in range(F):
            s = 0.0
            for d in range(D):
                t = A[i, d] - B[j, d]
                s += t * t
            out[i, j] = s
    return out


def _sqdist(A, B):
    """Pairwise squared distances between the rows of ``A`` and ``B``."""
    if HAS_NUMBA:
        return _sqdist_loop(np.ascontiguousarray(A), np.ascontiguousarray(B))
    return cdist(A, B, "sqeuclidean")


def _scale_rows(V, params, kind, dim):
    ls = params.length_scales
    if kind == SHARED:
        if ls.size != 1:
            raise InvalidArgumentError("shared-scale kernel takes exactly one length scale")
        return V.T / ls[0]
    if ls.size != dim:
        raise InvalidArgumentError(f"ARD kernel needs {dim} length scales, got {ls.size}")
    return V.T / ls


def kernel_matrix(A, B, params: KernelParams, kernel_kind: str = SHARED) -> np.ndarray:
    """Kernel matrix between the columns of ``A`` (D x K) and ``B`` (D x F)."""
    _check_kind(kernel_kind)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] != B.shape[0]:
        raise InvalidArgumentError(f"row dimension mismatch {A.shape[0]} vs {B.shape[0]}")
    a = _scale_rows(A, params, kernel_kind, A.shape[0])
    b = a if B is A else _scale_rows(B, params, kernel_kind, B.shape[0])
    return np.exp(-0.5 * _sqdist(a, b))


def _cholesky(Kmat, noise):
    n = Kmat.shape[0]
    diag = np.arange(n)
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        A = Kmat.copy()
        A[diag, diag] += noise + jitter
        try:
            return scipy.linalg.cholesky(A, lower=True, overwrite_a=True, check_finite=False), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(f"Cholesky failed with jitter up to {JITTER_MAX:g}")


def condition(dataset: GPDataset, params: KernelParams, kernel_kind: str = SHARED) -> GPModel:
    """Build a model at fixed hyperparameters (no optimization)."""
    _check_kind(kernel_kind)
    Kmat = kernel_matrix(dataset.design, dataset.design, params, kernel_kind)
    L, jitter = _cholesky(Kmat, params.noise_variance)
    z = dataset.z
    alpha = scipy.linalg.cho_solve((L, True), z, check_finite=False)
    n = z.size
    lml = -0.5 * z @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)
    return GPModel(dataset, params, kernel_kind, L, alpha, jitter, float(lml))


@njit
def _gram_fused(X, inv_l2):
    """Unit-amplitude ARD Gram matrix of the rows of ``X`` (lower half computed once)."""
    K, D = X.shape
    out = np.empty((K, K))
    for i in range(K):
        out[i, i] = 1.0
        for j in range(i):
            s = 0.0
            for d in range(D):
                t = X[i, d] - X[j, d]
                s += inv_l2[d] * t * t
            v = np.exp(-0.5 * s)
            out[i, j] = v
            out[j, i] = v
    return out


@njit
def _length_grad_fused(X, Kmat, alpha, Kinv_low, inv_l2):
    """Length-scale part of the evidence gradient, per input dimension.

    Uses symmetry: the contraction over all index pairs equals twice the
    strictly-lower sum since squared distances vanish on the diagonal.
    """
    K, D = X.shape
    g = np.zeros(D)
    for i in range(K):
        ai = alpha[i]
        for j in range(i):
            w = (ai * alpha[j] - Kinv_low[i, j]) * Kmat[i, j]
            for d in range(D):
                t = X[i, d] - X[j, d]
                g[d] += w * t * t
    for d in range(D):
        g[d] *= inv_l2[d]
    return g


class _Evidence:
    """Log marginal likelihood and gradient with cached pairwise geometry."""

    def __init__(self, dataset: GPDataset, kind: str):
        self.kind = kind
        self.z = dataset.z
        self.n = self.z.size
        self.X = np.ascontiguousarray(dataset.design.T)  # K x D
        if not HAS_NUMBA:
            X = self.X
            if kind == SHARED:
                self.sq = _sqdist(X, X)[None]
            else:
                self.sq = (X.T[:, :, None] - X.T[:, None, :]) ** 2  # (D, K, K)

    def _per_dim(self, inv_l2):
        if self.kind == SHARED:
            return np.full(self.X.shape[1], inv_l2[0])
        return inv_l2

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        inv_l2 = np.exp(-2.0 * theta[:-1])
        noise = np.exp(theta[-1])
        if HAS_NUMBA:
            Kmat = _gram_fused(self.X, self._per_dim(inv_l2))
        else:
            Kmat = np.exp(-0.5 * (inv_l2 @ self.sq.reshape(inv_l2.size, -1))).reshape(self.n, self.n)
        L, _ = _cholesky(Kmat, noise)
        alpha = scipy.linalg.cho_solve((L, True), self.z, check_finite=False)
        value = (-0.5 * self.z @ alpha - np.log(np.diag(L)).sum()
                 - 0.5 * self.n * np.log(2 * np.pi))
        Kinv, info = scipy.linalg.lapack.dpotri(L, lower=1)
        if info != 0:
            raise NumericalError(f"potri failed with info={info}")
        # potri fills only the lower triangle (L's upper half is zero)
        grad = np.empty(theta.size)
        if HAS_NUMBA:
            g = _length_grad_fused(self.X, Kmat, alpha, Kinv, self._per_dim(inv_l2))
            grad[:-1] = g.sum() if self.kind == SHARED else g
        else:
            WK = np.outer(alpha, alpha)
            WK -= 2.0 * np.tril(Kinv)
            WK *= Kmat
            grad[:-1] = 0.5 * inv_l2 * (self.sq.reshape(self.sq.shape[0], -1) @ WK.ravel())
        grad[-1] = 0.5 * noise * (alpha @ alpha - np.trace(Kinv))
        return float(value), grad


def log_marginal_likelihood(dataset: GPDataset, params: KernelParams, kernel_kind: str = SHARED):
    """Log evidence of the standardized targets and its gradient.

    The gradient is taken with respect to ``params.theta``, i.e. the log
    length scales followed by the log noise variance.
    """
    _check_kind(kernel_kind)
    expected = 1 if kernel_kind == SHARED else dataset.dim
    if params.length_scales.size != expected:
        raise InvalidArgumentError(f"expected {expected} length scales")
    return _Evidence(dataset, kernel_kind)(params.theta)


def _median_spread(dataset: GPDataset, kind: str) -> np.ndarray:
    X = dataset.design.T
    if X.shape[0] < 2:
        return np.ones(1 if kind == SHARED else X.shape[1])
    if kind == SHARED:
        m = np.median(pdist(X))
        return np.array([m if m > 0 else 1.0])
    out = np.empty(X.shape[1])
    for d in range(X.shape[1]):
        m = np.median(pdist(X[:, d:d + 1]))
        out[d] = m if m > 0 else 1.0
    return out


def initial_thetas(dataset: GPDataset, kind: str, config: FitConfig) -> list:
    spread = _median_spread(dataset, kind)
    rng = np.random.default_rng(config.seed)
    starts = []
    for _ in range(config.n_starts):
        log_l = np.log(spread) + rng.uniform(np.log(0.1), np.log(10.0), size=spread.size)
        log_n = rng.uniform(np.log(1e-4), np.log(1e-1))
        starts.append(np.append(log_l, log_n))
    if config.warm_start is not None and config.warm_start.length_scales.size == spread.size:
        starts.append(config.warm_start.theta.copy())
    return starts, spread


def gp_fit(dataset: GPDataset, kernel_kind: str = SHARED, config: FitConfig | None = None) -> GPModel:
    """Fit hyperparameters by multi-start L-BFGS-B evidence maximization."""
    _check_kind(kernel_kind)
    config = config or FitConfig()
    objective = _Evidence(dataset, kernel_kind)
    starts, spread = initial_thetas(dataset, kernel_kind, config)
    lo_l, hi_l = config.length_bounds
    bounds = [(np.log(lo_l * s), np.log(hi_l * s)) for s in spread]
    bounds.append((np.log(config.noise_bounds[0]), np.log(config.noise_bounds[1])))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def neg(theta):
        try:
            v, g = objective(theta)
        except NumericalError:
            return 1e300, np.zeros_like(theta)
        return -v, -g

    best_theta, best_val = None, -np.inf
    for theta0 in starts:
        theta0 = np.clip(theta0, lo, hi)
        f0, _ = neg(theta0)
        if -f0 > best_val:
            best_theta, best_val = theta0, -f0
        res = scipy.optimize.minimize(
            neg, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": config.max_iter, "gtol": config.gtol})
        if np.all(np.isfinite(res.x)) and -res.fun > best_val:
            best_theta, best_val = res.x, -float(res.fun)
    if best_theta is None or not np.isfinite(best_val):
        raise NumericalError("evidence maximization failed at every start")
    return condition(dataset, KernelParams.from_theta(best_theta), kernel_kind)


def _check_query(model: GPModel, Q):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    if Q.shape[0] != model.dataset.dim:
        raise InvalidArgumentError(
            f"query dimension {Q.shape[0]} does not match model dimension {model.dataset.dim}")
    return Q


def gp_predict_mean(model: GPModel, Q, standardized: bool = False) -> np.ndarray:
    Q = _check_query(model, Q)
    Kq = kernel_matrix(Q, model.dataset.design, model.params, model.kernel_kind)
    mu = Kq @ model.alpha
    if standardized:
        return mu
    return model.dataset.target_shift + model.dataset.target_scale * mu


def gp_predict_cov(model: GPModel, Q, standardized: bool = False) -> np.ndarray:
    Q = _check_query(model, Q)
    Kq = kernel_matrix(Q, model.dataset.design, model.params, model.kernel_kind)
    Kqq = kernel_matrix(Q, Q, model.params, model.kernel_kind)
    Vt = scipy.linalg.solve_triangular(model.chol, Kq.T, lower=True, check_finite=False)
    cov = Kqq - Vt.T @ Vt
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov).copy()
    np.fill_diagonal(cov, np.where(diag < 0, 0.0, diag))
    if standardized:
        return cov
    return cov * model.dataset.target_scale ** 2


def gp_mean_gradient(model: GPModel, Q) -> np.ndarray:
    """Gradient of the posterior mean w.r.t. each query column, shape (F, D)."""
    Q = _check_query(model, Q)
    V = model.dataset.design
    Kq = kernel_matrix(Q, V, model.params, model.kernel_kind)
    G = Kq * model.alpha  # (F, K)
    inv_l2 = 1.0 / model.params.length_scales ** 2
    # sum_k G[f,k] (v_k - q_f) / l^2
    grad = (G @ V.T - G.sum(axis=1)[:, None] * Q.T) * inv_l2
    return model.dataset.target_scale * grad
