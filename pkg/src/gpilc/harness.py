"""Learning campaigns: the trial loop, repeatability floors and variant comparison."""
from __future__ import annotations

import dataclasses
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plants as pl
from .errors import ConfigError, DegenerateModelError, GPILCError, InvalidArgumentError
from .gp import FitConfig, KernelParams
from .ilc import IO, IS, InitConfig, auto_input_variance, compute_weights, initial_input
from .ilc import learning_gain, update_input
from .models import fit_io_model, fit_is_model, linearize_io, linearize_is, truncate_history
from .signals import (Reference, clamp_relative, error_trajectory, generate_reference,
                      max_repetitive_error, relative_error)

log = logging.getLogger(__name__)

# independent random streams derived from the master seed
STREAM_INIT = 1
STREAM_PLANT = 2
STREAM_GP = 3
STREAM_REPEAT = 4
STREAM_PROBE = 5
STREAM_FALLBACK = 6

VARIANTS = (IO, IS)


def derive_seed(master: int, stream: int, counter: int = 0) -> int:
    """Counter-based child seed; streams never shift one another."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, stream, counter])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class CampaignConfig:
    plant: str = "LINEAR"
    variant: str = IO
    trials: int = 15
    history: int = 3
    seed: int = 0
    input_variance: float | None = None
    reference: dict = field(default_factory=lambda: {"task": 0})
    repeat_runs: int = 10
    e_R: float | None = None
    noise: bool = True
    early_stop: bool = False
    stop_at_reduction: float | None = None
    record_timing: bool = False
    include_current: bool = False
    n_starts: int = 5
    plant_overrides: dict = field(default_factory=dict)
    plant_file: str | None = None

    def __post_init__(self):
        self.variant = str(self.variant).lower()
        self.plant = str(self.plant).upper()
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.plant not in pl.PLANT_IDS:
            raise ConfigError(f"unknown plant {self.plant!r}")
        if int(self.trials) < 1:
            raise ConfigError("trials must be at least 1")
        if int(self.history) < 1:
            raise ConfigError("history must be at least 1")
        if self.input_variance is not None and not self.input_variance > 0:
            raise ConfigError("input_variance must be positive")
        if not isinstance(self.reference, dict):
            raise ConfigError("reference must be a mapping")
        if self.repeat_runs < 1:
            raise ConfigError("repeat_runs must be at least 1")
        if self.stop_at_reduction is not None and not 0 < self.stop_at_reduction < 1:
            raise ConfigError("stop_at_reduction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> CampaignConfig:
        if not isinstance(d, dict):
            raise ConfigError("campaign config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


@dataclass
class TrialEntry:
    j: int
    err_norm: float
    rel_raw: float
    eps: float
    wall_s: float | None
    P_norm: float
    hyper: dict = field(default_factory=dict)
    fallback: bool = False


@dataclass
class CampaignLog:
    config: dict
    e_R: float
    r_norm: float
    entries: list = field(default_factory=list)
    final_input: np.ndarray | None = None
    status: str = "running"
    message: str = ""
    reference: Reference | None = None
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    @property
    def eps(self) -> list:
        return [t.eps for t in self.entries]


def plant_for(cfg: CampaignConfig) -> pl.PlantSpec:
    return pl.get_plant(cfg.plant, cfg.plant_file, **dict(cfg.plant_overrides))


def resolve_reference(cfg: CampaignConfig, plant: pl.PlantSpec) -> Reference:
    spec = dict(cfg.reference)
    if "path" in spec:
        from .persist import load_reference
        ref = load_reference(spec["path"])
        if ref.fs != plant.fs:
            raise ConfigError(f"reference sampled at {ref.fs} Hz, plant runs at {plant.fs} Hz")
        return ref
    if "task" in spec:
        idx = int(spec["task"])
        if not plant.tasks:
            raise ConfigError(f"plant {plant.id} defines no reference tasks")
        if not 0 <= idx < len(plant.tasks):
            raise ConfigError(f"plant {plant.id} has {len(plant.tasks)} tasks, not {idx + 1}")
        spec = {**plant.tasks[idx], **{k: v for k, v in spec.items() if k != "task"}}
    try:
        cutoff = float(spec["cutoff"])
        variance = float(spec["variance"])
    except KeyError as exc:
        raise ConfigError(f"reference needs {exc.args[0]!r}") from exc
    horizon = int(spec.get("horizon", plant.horizon))
    return generate_reference(plant, int(spec.get("seed", 0)), cutoff, variance, plant.fs, horizon)


def run_repeatability(plant: pl.PlantSpec, reference: Reference, runs: int = 10,
                      seed: int = 0, noise_on: bool = True, outputs: list | None = None) -> float:
    """Maximum relative deviation over ``runs`` noisy replays of the realizing input."""
    if reference.realizing_input is None:
        raise InvalidArgumentError("reference carries no realizing input to replay")
    if runs < 1:
        raise InvalidArgumentError("need at least one run")
    ys = []
    for i in range(runs):
        res = pl.run_trial(plant, reference.realizing_input, derive_seed(seed, STREAM_REPEAT, i),
                           noise_on=noise_on, index=i)
        ys.append(res.record.y)
    if outputs is not None:
        outputs.extend(ys)
    return max_repetitive_error(ys, reference.r)


def _fit_config(cfg, master, j, warm):
    return FitConfig(n_starts=cfg.n_starts, seed=derive_seed(master, STREAM_GP, j), warm_start=warm)


def _fit_and_linearize(cfg, window, plant, u, warm):
    """Model from the trial window; returns ``(P, hyper snapshot, warm starts)``."""
    j = window[-1].index
    if cfg.variant == IO:
        model = fit_io_model(window, _fit_config(cfg, cfg.seed, j, warm[0] if warm else None),
                             include_current=cfg.include_current)
        P = linearize_io(model, u)
        hyper = {**model.gp.params.to_dict(), "input_scale": model.input_scale}
        return P, hyper, [model.gp.params]
    configs = [_fit_config(cfg, cfg.seed, j * 64 + m, warm[m] if warm else None)
               for m in range(plant.state_dim)]
    model = fit_is_model(window, plant.output_row, configs)
    P = linearize_is(model, u, window[-1].initial_state)
    hyper = {"state_gps": [gp.params.to_dict() for gp in model.gps]}
    return P, hyper, [gp.params for gp in model.gps]


def choose_input_variance(cfg: CampaignConfig, plant: pl.PlantSpec, ref: Reference,
                          init: InitConfig) -> float:
    if cfg.input_variance is not None:
        return float(cfg.input_variance)
    zero = pl.run_trial(plant, np.zeros(ref.n), derive_seed(cfg.seed, STREAM_PROBE, 0), cfg.noise)
    noise_floor = float(np.std(zero.record.y))
    counter = iter(range(1, 1000))

    def probe(var):
        u = initial_input(ref.r, init, plant.fs, variance=var)
        k = next(counter)
        return pl.run_trial(plant, u, derive_seed(cfg.seed, STREAM_PROBE, k), cfg.noise).record.y

    return auto_input_variance(probe, noise_floor, init)


def run_learning(cfg: CampaignConfig, out_dir=None, reference: Reference | None = None,
                 e_R: float | None = None) -> CampaignLog:
    """Run one campaign; persists after every trial when ``out_dir`` is given."""
    from .persist import save_campaign

    plant = plant_for(cfg)
    ref = reference if reference is not None else resolve_reference(cfg, plant)
    if e_R is None:
        e_R = cfg.e_R
    if e_R is None:
        e_R = run_repeatability(plant, ref, cfg.repeat_runs, cfg.seed, cfg.noise) \
            if ref.realizing_input is not None else 0.0
    r = ref.r
    clog = CampaignLog(cfg.to_dict(), float(e_R), float(np.linalg.norm(r)), reference=ref)
    if clog.r_norm == 0:
        raise ConfigError("reference is identically zero")

    init = InitConfig(seed=derive_seed(cfg.seed, STREAM_INIT))
    try:
        variance = choose_input_variance(cfg, plant, ref, init)
        u = initial_input(r, init, plant.fs, variance=variance)
        trials, warm, zero_streak = [], None, 0
        for j in range(1, cfg.trials + 1):
            t0 = time.perf_counter()
            res = pl.run_trial(plant, u, derive_seed(cfg.seed, STREAM_PLANT, j), cfg.noise, index=j)
            rec = res.record
            e = error_trajectory(r, rec.y)
            m = relative_error(e, r, e_R)
            trials = truncate_history(trials + [rec], cfg.history)
            P, hyper, warm = _fit_and_linearize(cfg, trials, plant, u, warm)
            P_norm = float(np.linalg.norm(P, 2))
            fallback = False
            try:
                L = learning_gain(P, compute_weights(P, cfg.variant))
                u_next = update_input(u, e, L, plant.input_bounds)
            except DegenerateModelError:
                fallback = True
                fresh = dataclasses.replace(init, seed=derive_seed(cfg.seed, STREAM_FALLBACK, j))
                u_next = initial_input(r, fresh, plant.fs, variance=variance)
            wall = time.perf_counter() - t0 if cfg.record_timing else None
            clog.entries.append(TrialEntry(j, m.error_norm, m.relative_raw, m.relative, wall,
                                           P_norm, hyper, fallback))
            clog.inputs.append(u.copy())
            clog.outputs.append(rec.y.copy())
            clog.final_input = u.copy()
            log.info("%s/%s trial %d: rel %.4f eps %.4f", cfg.plant, cfg.variant, j,
                     m.relative_raw, m.relative)
            if out_dir is not None:
                save_campaign(clog, out_dir)
            zero_streak = zero_streak + 1 if m.relative == 0 else 0
            if cfg.early_stop and zero_streak >= 2:
                clog.status = "early-stop"
                break
            if (cfg.stop_at_reduction is not None
                    and m.relative <= (1.0 - cfg.stop_at_reduction) * clog.entries[0].eps):
                # trials-to-X for any X <= stop_at_reduction is settled from here on
                clog.status = "target-reached"
                break
            u = u_next
        else:
            clog.status = "complete"
    except GPILCError as exc:
        clog.status = "aborted"
        clog.message = f"{type(exc).__name__}: {exc}"
        if getattr(exc, "trial", None) is None and hasattr(exc, "trial"):
            exc.trial = len(clog.entries) + 1
        if out_dir is not None:
            save_campaign(clog, out_dir)
        raise
    if out_dir is not None:
        save_campaign(clog, out_dir)
    return clog


# -- comparison -------------------------------------------------------------

def trials_to_reduction(eps, fraction: float):
    """Trials after the first until ``eps`` falls to ``(1 - fraction) * eps[0]``.

    Returns ``None`` when the reduction is never reached.
    """
    eps = list(eps)
    if not eps:
        return None
    target = (1.0 - fraction) * eps[0]
    for j, v in enumerate(eps):
        if v <= target:
            return j
    return None


def reduction_summary(eps) -> dict:
    return {"t50": trials_to_reduction(eps, 0.5), "t80": trials_to_reduction(eps, 0.8)}


def _penalized(values, penalty):
    return [penalty if v is None else v for v in values]


def aggregate(values, penalty):
    """Mean and median with unreached campaigns counted as ``penalty`` trials."""
    vals = _penalized(values, penalty)
    return {"mean": float(np.mean(vals)), "median": float(statistics.median(vals)),
            "not_reached": sum(v is None for v in values)}


def compare_variants(cfg_io: CampaignConfig, cfg_is: CampaignConfig) -> dict:
    """Run both variants on the same plant, reference and seed."""
    for a in ("plant", "seed", "reference", "trials"):
        if getattr(cfg_io, a) != getattr(cfg_is, a):
            raise ConfigError(f"variant configs differ in {a!r}")
    plant = plant_for(cfg_io)
    ref = resolve_reference(cfg_io, plant)
    e_R = cfg_io.e_R if cfg_io.e_R is not None else run_repeatability(
        plant, ref, cfg_io.repeat_runs, cfg_io.seed, cfg_io.noise)
    out = {}
    for cfg in (cfg_io, cfg_is):
        clog = run_learning(cfg, reference=ref, e_R=e_R)
        out[cfg.variant] = {**reduction_summary(clog.eps), "eps": clog.eps}
    return {"plant": cfg_io.plant, "seed": cfg_io.seed, "e_R": e_R, "variants": out}


def suite_tasks(plant_file=None):
    """All ``(plant id, task index)`` pairs of the testbed task matrix."""
    specs = pl.load_plant_file(plant_file)
    return [(pid, i) for pid in pl.TESTBEDS for i in range(len(specs[pid].tasks))]


def run_suite(variants=VARIANTS, seeds=(0, 1, 2, 3, 4), trials: int = 15,
              plant_file=None, out_dir=None, progress=None,
              stop_at_reduction: float | None = 0.8) -> dict:
    """Every testbed task under every master seed, for each requested variant.

    By default each campaign ends once its error is down 80%: the trial
    counts to 50% and 80% reduction cannot change afterwards, so the summary
    is the same as for full-length campaigns at a fraction of the cost.
    Pass ``stop_at_reduction=None`` to run every campaign to ``trials``.
    """
    rows = []
    for pid, task in suite_tasks(plant_file):
        base = CampaignConfig(plant=pid, reference={"task": task}, trials=trials,
                              plant_file=plant_file, stop_at_reduction=stop_at_reduction)
        plant = plant_for(base)
        ref = resolve_reference(base, plant)
        for seed in seeds:
            e_R = run_repeatability(plant, ref, base.repeat_runs, seed)
            for variant in variants:
                cfg = dataclasses.replace(base, variant=variant, seed=seed)
                sub = None if out_dir is None else Path(out_dir) / f"{pid}_t{task}_{variant}_s{seed}"
                clog = run_learning(cfg, sub, reference=ref, e_R=e_R)
                row = {"plant": pid, "task": task, "variant": variant, "seed": seed,
                       "e_R": e_R, **reduction_summary(clog.eps), "eps": clog.eps}
                rows.append(row)
                if progress:
                    progress(row)
    return summarize_suite(rows, trials)


def summarize_suite(rows, trials: int = 15) -> dict:
    """Per-task medians over seeds, then mean and median across tasks."""
    summary = {"rows": rows, "tasks": {}, "variants": {}}
    keys = sorted({(r["plant"], r["task"], r["variant"]) for r in rows})
    for pid, task, variant in keys:
        sel = [r for r in rows if (r["plant"], r["task"], r["variant"]) == (pid, task, variant)]
        summary["tasks"][f"{pid}/{task}/{variant}"] = {
            "t50": aggregate([r["t50"] for r in sel], trials),
            "t80": aggregate([r["t80"] for r in sel], trials),
        }
    for variant in sorted({r["variant"] for r in rows}):
        per_task = [v for k, v in summary["tasks"].items() if k.endswith("/" + variant)]
        summary["variants"][variant] = {
            metric: {
                "mean": float(np.mean([t[metric]["median"] for t in per_task])),
                "median": float(statistics.median([t[metric]["median"] for t in per_task])),
            }
            for metric in ("t50", "t80")
        }
    return summary


def recompute_eps(clog: CampaignLog) -> list:
    return [clamp_relative(t.err_norm / clog.r_norm, clog.e_R) for t in clog.entries]
