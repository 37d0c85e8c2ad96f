"""Fixed-step simulations of the reaction-wheel cube, the two-wheeled inverted
pendulum robot, the double pendulum, and an exactly discretized linear plant.

Physical constants live in ``data/plants.json``. The continuous plants are
integrated with classical RK4 at ``substeps`` inner steps per sample and a
zero-order-hold input. Each trial starts from rest.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg

from ._accel import njit
from .errors import ConfigError, DivergenceError, InvalidArgumentError
from .models import TrialRecord

CUBE, TWIPR, PENDU, LINEAR = "CUBE", "TWIPR", "PENDU", "LINEAR"
PLANT_IDS = (CUBE, TWIPR, PENDU, LINEAR)
TESTBEDS = (CUBE, TWIPR, PENDU)

# order of the physical constants handed to the compiled derivative
PARAM_ORDER = {
    CUBE: ("J_p", "J_w", "m", "l", "g", "d_p", "d_w"),
    TWIPR: ("m_b", "m_w", "J_b", "J_w", "r", "l", "g", "d"),
    PENDU: ("m1", "m2", "l1", "lc1", "lc2", "I1", "I2", "g", "d1", "d2"),
    LINEAR: ("omega", "zeta", "gain"),
}
STATE_DIM = {CUBE: 3, TWIPR: 4, PENDU: 4, LINEAR: 2}
OUTPUT_ROW = {CUBE: (1.0, 0.0, 0.0), TWIPR: (1.0, 0.0, 0.0, 0.0),
              PENDU: (1.0, 0.0, 1.0, 0.0), LINEAR: (1.0, 0.0)}
_CODE = {CUBE: 0, TWIPR: 1, PENDU: 2}


@dataclass(frozen=True)
class PlantSpec:
    id: str
    physical: dict
    fs: float = 50.0
    horizon: int = 100
    input_bounds: tuple | None = None
    output_noise_std: float = 0.0
    state_noise_std: tuple = ()
    feedback_gain: tuple | None = None
    feedback_on: bool = True
    substeps: int = 10
    divergence_bound: float = 1e3
    tasks: tuple = field(default=())

    def __post_init__(self):
        if self.id not in PLANT_IDS:
            raise ConfigError(f"unknown plant id {self.id!r}")
        missing = [k for k in PARAM_ORDER[self.id] if k not in self.physical]
        if missing:
            raise ConfigError(f"plant {self.id} missing parameters {missing}")
        sn = tuple(float(s) for s in self.state_noise_std) or (0.0,) * self.state_dim
        if len(sn) != self.state_dim:
            raise ConfigError(f"plant {self.id} needs {self.state_dim} state noise entries")
        object.__setattr__(self, "state_noise_std", sn)
        if self.feedback_gain is not None:
            k = tuple(float(v) for v in self.feedback_gain)
            if len(k) != self.state_dim:
                raise ConfigError("feedback gain length must equal the state dimension")
            object.__setattr__(self, "feedback_gain", k)
        if self.input_bounds is not None:
            lo, hi = (float(b) for b in self.input_bounds)
            if not lo < hi:
                raise ConfigError("input bounds must satisfy u_min < u_max")
            object.__setattr__(self, "input_bounds", (lo, hi))
        if self.fs <= 0 or self.horizon < 1 or self.substeps < 1:
            raise ConfigError("fs, horizon and substeps must be positive")

    @property
    def state_dim(self) -> int:
        return STATE_DIM[self.id]

    @property
    def output_row(self) -> np.ndarray:
        return np.array(OUTPUT_ROW[self.id])

    @property
    def param_vector(self) -> np.ndarray:
        return np.array([float(self.physical[k]) for k in PARAM_ORDER[self.id]])

    def replace(self, **changes) -> PlantSpec:
        data = {f: copy.deepcopy(getattr(self, f)) for f in self.__dataclass_fields__}
        data.update(changes)
        return PlantSpec(**data)

    def to_dict(self) -> dict:
        return {
            "physical": dict(self.physical),
            "fs": self.fs,
            "horizon": self.horizon,
            "input_bounds": list(self.input_bounds) if self.input_bounds else None,
            "output_noise_std": self.output_noise_std,
            "state_noise_std": list(self.state_noise_std),
            "feedback_gain": list(self.feedback_gain) if self.feedback_gain else None,
            "substeps": self.substeps,
            "divergence_bound": self.divergence_bound,
            "tasks": [dict(t) for t in self.tasks],
        }

    @classmethod
    def from_dict(cls, plant_id: str, d: dict) -> PlantSpec:
        known = {"physical", "fs", "horizon", "input_bounds", "output_noise_std",
                 "state_noise_std", "feedback_gain", "feedback_on", "substeps",
                 "divergence_bound", "tasks"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"plant {plant_id}: unknown keys {sorted(unknown)}")
        kw = dict(d)
        if kw.get("input_bounds") is not None:
            kw["input_bounds"] = tuple(kw["input_bounds"])
        if kw.get("feedback_gain") is not None:
            kw["feedback_gain"] = tuple(kw["feedback_gain"])
        kw["state_noise_std"] = tuple(kw.get("state_noise_std") or ())
        kw["tasks"] = tuple(dict(t) for t in kw.get("tasks") or ())
        return cls(id=plant_id, **kw)


@dataclass(frozen=True)
class SimTrialResult:
    record: TrialRecord
    applied_input: np.ndarray
    clean_output: np.ndarray


# -- parameter file ---------------------------------------------------------

def default_param_path():
    return resources.files("gpilc").joinpath("data", "plants.json")


def load_plant_file(path=None) -> dict:
    """Read the plant parameter file into ``{id: PlantSpec}``."""
    if path is None:
        text = default_param_path().read_text()
        path = "plants.json"
    else:
        text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return {pid: PlantSpec.from_dict(pid, body) for pid, body in raw.items()}


def save_plant_file(specs: dict, path) -> None:
    out = {pid: spec.to_dict() for pid, spec in specs.items()}
    Path(path).write_text(json.dumps(out, indent=2) + "\n")


def get_plant(plant_id: str, path=None, **overrides) -> PlantSpec:
    specs = load_plant_file(path)
    pid = plant_id.upper()
    if pid not in specs:
        raise ConfigError(f"plant {plant_id!r} not in parameter file")
    spec = specs[pid]
    if overrides:
        phys = overrides.pop("physical", None)
        if phys:
            overrides["physical"] = {**spec.physical, **phys}
        try:
            spec = spec.replace(**overrides)
        except TypeError as exc:
            raise ConfigError(f"bad plant override: {exc}") from exc
    return spec


# -- dynamics ---------------------------------------------------------------

@njit
def _deriv(code, p, x, u):
    dx = np.empty_like(x)
    if code == 0:
        # reaction-wheel pendulum, angle measured from the hanging rest position
        J_p, J_w, m, l, g, d_p, d_w = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
        dx[0] = x[1]
        dx[1] = (-m * g * l * np.sin(x[0]) - d_p * x[1] - u) / (J_p + J_w)
        dx[2] = (u - d_w * x[2]) / J_w
    elif code == 1:
        m_b, m_w, J_b, J_w, r, l, g, d = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
        th, dth, ds = x[0], x[1], x[3]
        c = np.cos(th)
        s = np.sin(th)
        m11 = m_b + m_w + J_w / (r * r)
        m12 = m_b * l * c
        m22 = J_b + m_b * l * l
        tau = u - d * (ds / r - dth)
        f1 = m_b * l * s * dth * dth + tau / r
        f2 = m_b * g * l * s - tau
        det = m11 * m22 - m12 * m12
        dds = (m22 * f1 - m12 * f2) / det
        ddth = (m11 * f2 - m12 * f1) / det
        dx[0] = dth
        dx[1] = ddth
        dx[2] = ds
        dx[3] = dds
    else:
        m1, m2, l1, lc1, lc2, I1, I2, g, d1, d2 = (
            p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9])
        a, da, b, db = x[0], x[1], x[2], x[3]
        cb = np.cos(b)
        h = m2 * l1 * lc2 * np.sin(b)
        m11 = I1 + I2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * cb)
        m12 = I2 + m2 * (lc2 * lc2 + l1 * lc2 * cb)
        m22 = I2 + m2 * lc2 * lc2
        g1 = (m1 * lc1 + m2 * l1) * g * np.sin(a) + m2 * g * lc2 * np.sin(a + b)
        g2 = m2 * g * lc2 * np.sin(a + b)
        f1 = u + h * (2.0 * da * db + db * db) - g1 - d1 * da
        f2 = -h * da * da - g2 - d2 * db
        det = m11 * m22 - m12 * m12
        dx[0] = da
        dx[1] = (m22 * f1 - m12 * f2) / det
        dx[2] = db
        dx[3] = (m11 * f2 - m12 * f1) / det
    return dx


@njit
def _rk4(code, p, x, u, h):
    k1 = _deriv(code, p, x, u)
    k2 = _deriv(code, p, x + 0.5 * h * k1, u)
    k3 = _deriv(code, p, x + 0.5 * h * k2, u)
    k4 = _deriv(code, p, x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit
def _simulate(code, p, u, x0, dt, substeps, k_fb, lo, hi, bound):
    n_samples = u.size
    M = x0.size
    X = np.zeros((M, n_samples))
    applied = np.zeros(n_samples)
    x = x0.copy()
    h = dt / substeps
    for n in range(n_samples):
        X[:, n] = x
        ut = u[n]
        for i in range(M):
            ut -= k_fb[i] * x[i]
        if ut < lo:
            ut = lo
        elif ut > hi:
            ut = hi
        applied[n] = ut
        if n == n_samples - 1:
            break
        for _ in range(substeps):
            x = _rk4(code, p, x, ut, h)
        for i in range(M):
            if not np.isfinite(x[i]) or abs(x[i]) > bound:
                return X, applied, n + 2
    return X, applied, -1


def plant_dynamics(spec: PlantSpec, x, u) -> np.ndarray:
    """Continuous-time state derivative (feedforward torque only, no feedback)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.state_dim,):
        raise InvalidArgumentError(f"{spec.id} state must have length {spec.state_dim}")
    if spec.id == LINEAR:
        A, B = linear_continuous(spec)
        return A @ x + B * float(u)
    return _deriv(_CODE[spec.id], spec.param_vector, x, float(u))


def rk4_step(derivative, x, u, dt) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = derivative(x, u)`` with ``u`` held."""
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(derivative(x, u), dtype=float)
    k2 = np.asarray(derivative(x + 0.5 * dt * k1, u), dtype=float)
    k3 = np.asarray(derivative(x + 0.5 * dt * k2, u), dtype=float)
    k4 = np.asarray(derivative(x + dt * k3, u), dtype=float)
    out = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("RK4 step produced a non-finite state")
    return out


def pendulum_energy(spec: PlantSpec, x) -> float:
    """Mechanical energy of the double pendulum (zero at the hanging rest)."""
    p = spec.physical
    m1, m2, l1, lc1, lc2 = p["m1"], p["m2"], p["l1"], p["lc1"], p["lc2"]
    I1, I2, g = p["I1"], p["I2"], p["g"]
    a, da, b, db = x
    cb = np.cos(b)
    m11 = I1 + I2 + m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * cb)
    m12 = I2 + m2 * (lc2 ** 2 + l1 * lc2 * cb)
    m22 = I2 + m2 * lc2 ** 2
    kin = 0.5 * (m11 * da ** 2 + 2 * m12 * da * db + m22 * db ** 2)
    pot = (-(m1 * lc1 + m2 * l1) * g * np.cos(a) - m2 * g * lc2 * np.cos(a + b)
           + (m1 * lc1 + m2 * l1) * g + m2 * g * lc2)
    return float(kin + pot)


# -- linear plant -----------------------------------------------------------

def linear_continuous(spec: PlantSpec):
    p = spec.physical
    w, z, k = p["omega"], p["zeta"], p["gain"]
    A = np.array([[0.0, 1.0], [-w * w, -2.0 * z * w]])
    B = np.array([0.0, k * w * w])
    return A, B


def zoh_discretize(A, B, dt):
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    M = A.shape[0]
    aug = np.zeros((M + 1, M + 1))
    aug[:M, :M] = A
    aug[:M, M] = B
    E = scipy.linalg.expm(aug * dt)
    return E[:M, :M], E[:M, M]


def linear_discrete(spec: PlantSpec):
    if spec.id != LINEAR:
        raise InvalidArgumentError("only the LINEAR plant has a closed-form discretization")
    return zoh_discretize(*linear_continuous(spec), 1.0 / spec.fs)


def lifted_matrix_from(Ad, Bd, C, n: int) -> np.ndarray:
    """``P[n, m] = C Ad^(n-1-m) Bd`` for ``m < n`` (1-based), zero elsewhere."""
    Ad = np.atleast_2d(Ad)
    Bd = np.asarray(Bd, dtype=float).reshape(-1)
    C = np.asarray(C, dtype=float).reshape(-1)
    markov = np.empty(max(n - 1, 0))
    v = Bd.copy()
    for k in range(n - 1):
        markov[k] = C @ v
        v = Ad @ v
    P = np.zeros((n, n))
    for i in range(1, n):
        P[i, :i] = markov[:i][::-1]
    return P


def lifted_matrix_linear(spec: PlantSpec, n: int | None = None) -> np.ndarray:
    n = spec.horizon if n is None else n
    Ad, Bd = linear_discrete(spec)
    return lifted_matrix_from(Ad, Bd, spec.output_row, n)


# -- feedback ---------------------------------------------------------------

def linearize_continuous(spec: PlantSpec, eps: float = 1e-6):
    """Central-difference Jacobians of the open-loop dynamics at the origin."""
    M = spec.state_dim
    x0 = np.zeros(M)
    A = np.zeros((M, M))
    for i in range(M):
        d = np.zeros(M)
        d[i] = eps
        A[:, i] = (plant_dynamics(spec, x0 + d, 0.0) - plant_dynamics(spec, x0 - d, 0.0)) / (2 * eps)
    B = (plant_dynamics(spec, x0, eps) - plant_dynamics(spec, x0, -eps)) / (2 * eps)
    return A, B


def lqr_gain(spec: PlantSpec, Q=None, R: float = 1.0) -> np.ndarray:
    """Discrete LQR gain ``k`` (control law ``u = -k x``) at the sample rate."""
    A, B = linearize_continuous(spec)
    Ad, Bd = zoh_discretize(A, B, 1.0 / spec.fs)
    Q = np.eye(spec.state_dim) if Q is None else np.asarray(Q)
    Bd = Bd[:, None]
    P = scipy.linalg.solve_discrete_are(Ad, Bd, Q, np.array([[R]]))
    k = np.linalg.solve(R + Bd.T @ P @ Bd, Bd.T @ P @ Ad)
    return k.ravel()


# -- trials -----------------------------------------------------------------

def simulate(spec: PlantSpec, u, x0=None):
    """Noise-free trajectory ``(X, applied, fail_index)`` of one trial."""
    u = np.ascontiguousarray(u, dtype=float)
    M = spec.state_dim
    x0 = np.zeros(M) if x0 is None else np.asarray(x0, dtype=float).copy()
    lo, hi = spec.input_bounds if spec.input_bounds else (-np.inf, np.inf)
    if spec.feedback_gain is not None and spec.feedback_on:
        k = np.array(spec.feedback_gain)
    else:
        k = np.zeros(M)
    if spec.id == LINEAR:
        Ad, Bd = linear_discrete(spec)
        X = np.zeros((M, u.size))
        applied = np.empty(u.size)
        x = x0
        for n in range(u.size):
            X[:, n] = x
            applied[n] = min(max(u[n] - k @ x, lo), hi)
            x = Ad @ x + Bd * applied[n]
            if n < u.size - 1 and (not np.all(np.isfinite(x)) or np.max(np.abs(x)) > spec.divergence_bound):
                return X, applied, n + 2
        return X, applied, -1
    return _simulate(_CODE[spec.id], spec.param_vector, u, x0, 1.0 / spec.fs,
                     spec.substeps, k, lo, hi, spec.divergence_bound)


def run_trial(spec: PlantSpec, u, seed: int = 0, noise_on: bool = True,
              index: int = 0, x0=None) -> SimTrialResult:
    """Execute one trial of length ``len(u)`` from rest (or ``x0``)."""
    u = np.asarray(u, dtype=float).ravel()
    if u.size < 1:
        raise InvalidArgumentError("input trajectory is empty")
    if not np.all(np.isfinite(u)):
        raise InvalidArgumentError("input trajectory contains non-finite values")
    X, applied, fail = simulate(spec, u, x0)
    if fail >= 0:
        raise DivergenceError(
            f"{spec.id} state left |x| <= {spec.divergence_bound:g} at sample {fail}",
            sample=int(fail), trial=index)
    C = spec.output_row
    y_clean = C @ X
    y = y_clean.copy()
    X_meas = X.copy()
    if noise_on:
        rng = np.random.default_rng(seed)
        y = y + rng.normal(0.0, 1.0, size=y.size) * spec.output_noise_std
        X_meas = X_meas + rng.normal(0.0, 1.0, size=X.shape) * np.array(spec.state_noise_std)[:, None]
    rec = TrialRecord(index, u.copy(), y, X_meas, X_meas[:, 0].copy())
    return SimTrialResult(rec, np.asarray(applied), y_clean)
