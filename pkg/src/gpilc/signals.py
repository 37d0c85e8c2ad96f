"""Spectral helpers, tracking-error metrics and realizable reference generation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, GenerationFailedError, InvalidArgumentError


@dataclass(frozen=True)
class Reference:
    r: np.ndarray
    fs: float
    provenance: dict = field(default_factory=dict)
    realizing_input: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).ravel()
        if r.size < 2:
            raise InvalidArgumentError("reference needs at least two samples")
        if not self.fs > 0:
            raise InvalidArgumentError("sample rate must be positive")
        object.__setattr__(self, "r", r)
        if self.realizing_input is not None:
            u = np.asarray(self.realizing_input, dtype=float).ravel()
            if u.size != r.size:
                raise InvalidArgumentError("realizing input length differs from reference")
            object.__setattr__(self, "realizing_input", u)
        elif self.provenance.get("kind") == "generated":
            raise InvalidArgumentError("generated references must carry their realizing input")

    @property
    def n(self) -> int:
        return self.r.size


@dataclass(frozen=True)
class ErrorMetrics:
    error_norm: float
    relative_raw: float
    relative: float
    repetitive_floor: float


def error_trajectory(r, y) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    if r.shape != y.shape:
        raise InvalidArgumentError(f"length mismatch {r.shape} vs {y.shape}")
    return r - y


def _one_sided_power(x):
    X = np.fft.rfft(x)
    p = np.abs(X) ** 2
    p[1:] *= 2.0
    if x.size % 2 == 0:
        p[-1] /= 2.0
    return p


def significant_frequency(r, fs: float, power_threshold: float = 0.99) -> float:
    """Smallest frequency below which ``power_threshold`` of the signal power lies.

    The mean is removed first; the periodogram is the plain one-sided FFT
    power with no windowing.
    """
    r = np.asarray(r, dtype=float).ravel()
    if not 0 < power_threshold < 1:
        raise InvalidArgumentError("power_threshold must lie in (0, 1)")
    x = r - r.mean()
    if np.ptp(r) == 0 or not np.any(x):
        raise InvalidArgumentError("constant signal has no frequency content")
    p = _one_sided_power(x)
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, power_threshold * cum[-1] * (1 - 1e-12)))
    freqs = np.fft.rfftfreq(x.size, 1.0 / fs)
    return float(freqs[min(idx, freqs.size - 1)])


def zero_phase_lowpass(x, cutoff: float, fs: float) -> np.ndarray:
    """Brickwall low-pass: zero every FFT bin strictly above ``cutoff``."""
    x = np.asarray(x, dtype=float).ravel()
    if not 0 < cutoff < fs / 2:
        raise InvalidArgumentError(f"cutoff {cutoff} Hz outside (0, {fs / 2}) Hz")
    X = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, 1.0 / fs)
    X[freqs > cutoff] = 0.0
    return np.fft.irfft(X, n=x.size)


def relative_error(e, r, e_R: float = 0.0) -> ErrorMetrics:
    e = np.asarray(e, dtype=float)
    r_norm = float(np.linalg.norm(r))
    if r_norm == 0:
        raise InvalidArgumentError("reference has zero norm")
    if e_R < 0:
        raise InvalidArgumentError("repetitive floor must be nonnegative")
    err = float(np.linalg.norm(e))
    raw = err / r_norm
    return ErrorMetrics(err, raw, clamp_relative(raw, e_R), float(e_R))


def clamp_relative(relative_raw: float, e_R: float) -> float:
    d = relative_raw - e_R
    return d if d > 0 else 0.0


def max_repetitive_error(outputs, r) -> float:
    """Largest relative deviation of repeated outputs from the reference."""
    r = np.asarray(r, dtype=float)
    r_norm = float(np.linalg.norm(r))
    if r_norm == 0:
        raise InvalidArgumentError("reference has zero norm")
    outputs = [np.asarray(y, dtype=float) for y in outputs]
    if not outputs:
        raise InvalidArgumentError("need at least one output")
    return max(float(np.linalg.norm(r - y)) / r_norm for y in outputs)


def lowpass_noise(rng: np.random.Generator, n: int, variance: float, cutoff: float, fs: float):
    """Gaussian sequence with the given per-sample variance, brickwall filtered."""
    w = rng.normal(0.0, np.sqrt(variance), size=n)
    if cutoff >= fs / 2:
        return w
    return zero_phase_lowpass(w, cutoff, fs)


def generate_reference(plant, seed: int, cutoff: float, input_variance: float,
                       fs: float | None = None, n: int | None = None) -> Reference:
    """Realizable reference: filtered random input pushed through a noise-free trial."""
    from .plants import run_trial

    fs = plant.fs if fs is None else fs
    n = plant.horizon if n is None else n
    if fs != plant.fs:
        raise InvalidArgumentError(f"plant {plant.id} runs at {plant.fs} Hz, not {fs}")
    if not 0 < cutoff < fs / 2:
        raise InvalidArgumentError(f"cutoff {cutoff} Hz outside (0, {fs / 2}) Hz")
    rng = np.random.default_rng(seed)
    u = lowpass_noise(rng, n, input_variance, cutoff, fs)
    try:
        res = run_trial(plant, u, seed=0, noise_on=False)
    except DivergenceError as exc:
        raise GenerationFailedError(
            f"reference trial diverged ({exc}); try a smaller variance or cutoff") from exc
    provenance = {"kind": "generated", "seed": int(seed), "cutoff": float(cutoff),
                  "variance": float(input_variance), "plant": plant.id}
    return Reference(res.record.y.copy(), float(fs), provenance, u)
