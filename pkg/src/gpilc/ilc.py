"""Norm-optimal learning gain, self-tuned weights, and initial-input selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import (ActuationIneffectiveError, DegenerateModelError, InvalidArgumentError,
                     NumericalError)
from .signals import lowpass_noise, significant_frequency

IO, IS = "io", "is"
UPDATE_WEIGHT = {IO: 1.0, IS: 0.1}


@dataclass(frozen=True)
class WeightPair:
    W: np.ndarray
    S: np.ndarray


@dataclass
class InitConfig:
    input_variance: float = 1e-4
    power_threshold: float = 0.99
    excitation_factor: float = 3.0
    max_doublings: int = 12
    seed: int = 0

    def __post_init__(self):
        if not self.input_variance > 0:
            raise InvalidArgumentError("input variance must be positive")
        if not 0 < self.power_threshold < 1:
            raise InvalidArgumentError("power_threshold must lie in (0, 1)")


def degenerate_threshold(N: int) -> float:
    return 1e-12 * N


def compute_weights(P, variant: str = IO) -> WeightPair:
    """``W = I`` and ``S = c ||P||_2^2 I`` with ``c`` = 1 (IO) or 0.1 (IS)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if variant not in UPDATE_WEIGHT:
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    if not np.all(np.isfinite(P)):
        raise InvalidArgumentError("Jacobian has non-finite entries")
    N = P.shape[0]
    norm = float(np.linalg.norm(P, 2))
    if norm <= degenerate_threshold(N):
        raise DegenerateModelError(f"||P||_2 = {norm:.3g}: the model carries no input sensitivity")
    eye = np.eye(N)
    return WeightPair(eye.copy(), UPDATE_WEIGHT[variant] * norm ** 2 * eye)


def learning_gain(P, weights: WeightPair) -> np.ndarray:
    """``L = (P^T W P + S)^{-1} W P^T`` via a Cholesky solve."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    W, S = weights.W, weights.S
    H = P.T @ W @ P + S
    H = 0.5 * (H + H.T)
    try:
        c = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("learning-gain Hessian is not positive definite") from exc
    return scipy.linalg.cho_solve(c, W @ P.T, check_finite=False)


def update_input(u, e, L, bounds=None) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if u.shape != e.shape or L.shape != (u.size, e.size):
        raise InvalidArgumentError("input, error and gain dimensions disagree")
    out = u + L @ e
    if bounds is not None:
        out = np.clip(out, bounds[0], bounds[1])
    return out


def next_trial_cost(P, weights: WeightPair, e, du) -> float:
    """Model-predicted cost of applying ``du`` under the linearization ``P``."""
    e_next = e - P @ du
    return float(e_next @ weights.W @ e_next + du @ weights.S @ du)


def initial_input(r, cfg: InitConfig, fs: float, variance: float | None = None) -> np.ndarray:
    """Random input band-limited to the reference's significant bandwidth."""
    r = np.asarray(r, dtype=float).ravel()
    if not fs > 0:
        raise InvalidArgumentError("sample rate must be positive")
    if not np.any(r):
        raise InvalidArgumentError("zero reference has no frequency content to match")
    f0 = significant_frequency(r, fs, cfg.power_threshold)
    var = cfg.input_variance if variance is None else variance
    rng = np.random.default_rng(cfg.seed)
    return lowpass_noise(rng, r.size, var, f0, fs)


def auto_input_variance(probe: Callable[[float], np.ndarray], noise_floor: float,
                        cfg: InitConfig) -> float:
    """Double the input variance until the probed output rises above the noise.

    ``probe(variance)`` runs one trial with an initial input drawn at that
    variance and returns the measured output.
    """
    if noise_floor < 0:
        raise InvalidArgumentError("noise floor must be nonnegative")
    var = cfg.input_variance
    for _ in range(cfg.max_doublings + 1):
        y = np.asarray(probe(var), dtype=float)
        if np.std(y) >= cfg.excitation_factor * noise_floor and np.std(y) > 0:
            return var
        var *= 2.0
    raise ActuationIneffectiveError(
        f"no excitation above {cfg.excitation_factor} x noise after {cfg.max_doublings} doublings")
