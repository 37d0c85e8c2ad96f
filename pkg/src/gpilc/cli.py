"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 plant divergence,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import harness as hs
from . import plants as pl
from .errors import (ActuationIneffectiveError, ConfigError, DivergenceError,
                     GenerationFailedError, GPILCError, InvalidArgumentError, NotFoundError,
                     NumericalError, ParseError)
from .persist import load_reference, plotdata, save_reference
from .signals import generate_reference

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_NUMERICAL = 0, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (DivergenceError, GenerationFailedError)):
        return EXIT_DIVERGED
    if isinstance(exc, (NumericalError, ActuationIneffectiveError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ConfigError, InvalidArgumentError, ParseError, NotFoundError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def _load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _campaign_config(args, **forced) -> hs.CampaignConfig:
    data = _load_config_file(args.config) if args.config else {}
    flags = {
        "plant": args.plant, "variant": args.variant, "trials": args.trials,
        "seed": args.seed, "input_variance": args.input_variance,
        "plant_file": args.plant_file,
    }
    data.update({k: v for k, v in flags.items() if v is not None})
    if args.reference:
        data["reference"] = {"path": args.reference}
    elif args.task is not None:
        data["reference"] = {"task": args.task}
    if getattr(args, "timing", False):
        data["record_timing"] = True
    data.update(forced)
    return hs.CampaignConfig.from_dict(data)


def cmd_refgen(args):
    plant = pl.get_plant(args.plant, args.plant_file)
    ref = generate_reference(plant, args.seed, args.cutoff, args.variance,
                             plant.fs, args.horizon or plant.horizon)
    path = save_reference(ref, args.out)
    print(path)


def cmd_repeat(args):
    ref = load_reference(args.reference)
    plant_id = args.plant or ref.provenance.get("plant")
    if not plant_id:
        raise ConfigError("reference names no plant; pass --plant")
    plant = pl.get_plant(plant_id, args.plant_file)
    outputs = []
    e_R = hs.run_repeatability(plant, ref, args.runs, args.seed, outputs=outputs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["run,n,y"] + [f"{i + 1},{n + 1},{float(y[n])!r}"
                               for i, y in enumerate(outputs) for n in range(y.size)]
        (out / "repeat_runs.csv").write_text("\n".join(lines) + "\n")
        (out / "repeat.json").write_text(json.dumps({"e_R": e_R, "runs": args.runs}, indent=2) + "\n")
    print(f"{e_R!r}")


def cmd_learn(args):
    cfg = _campaign_config(args)
    clog = hs.run_learning(cfg, out_dir=args.out)
    last = clog.entries[-1]
    print(f"{cfg.plant}/{cfg.variant}: {len(clog.entries)} trials, "
          f"rel {clog.entries[0].rel_raw:.4f} -> {last.rel_raw:.4f}, e_R {clog.e_R:.4f}")


def cmd_compare(args):
    cfg_io = _campaign_config(args, variant="io")
    cfg_is = dataclasses.replace(cfg_io, variant="is")
    summary = hs.compare_variants(cfg_io, cfg_is)
    text = json.dumps(summary, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "compare.json").write_text(text + "\n")
    print(text)


def cmd_suite(args):
    variants = hs.VARIANTS if args.variant in (None, "both") else (args.variant,)
    seeds = tuple(int(s) for s in args.seeds.split(","))

    def progress(row):
        print(f"{row['plant']} task {row['task']} {row['variant']} seed {row['seed']}: "
              f"t50={row['t50']} t80={row['t80']}", flush=True)

    summary = hs.run_suite(variants, seeds, args.trials or 15, args.plant_file, args.out, progress,
                           stop_at_reduction=None if args.full else 0.8)
    text = json.dumps({k: v for k, v in summary.items() if k != "rows"}, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "suite.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(text)


def cmd_plotdata(args):
    dirs = []
    for d in args.campaign:
        p = Path(d)
        if (p / "trials.csv").is_file():
            dirs.append(p)
        elif p.is_dir():
            dirs.extend(sorted(q.parent for q in p.glob("*/trials.csv")))
        else:
            raise NotFoundError(f"{p} does not exist")
    if not dirs:
        raise NotFoundError("no campaign directories found")
    text = plotdata(dirs, args.out)
    if not args.out:
        sys.stdout.write(text)


def _common(p, learn=False):
    p.add_argument("--plant", type=str.upper, choices=pl.PLANT_IDS)
    p.add_argument("--seed", type=int)
    p.add_argument("--plant-file", dest="plant_file")
    if learn:
        p.add_argument("--variant", choices=("io", "is"))
        p.add_argument("--trials", type=int)
        p.add_argument("--config")
        p.add_argument("--reference", help="reference file (CSV + JSON sidecar)")
        p.add_argument("--task", type=int, help="index into the plant's reference tasks")
        p.add_argument("--input-variance", dest="input_variance", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpilc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refgen", help="generate a realizable reference")
    _common(p)
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--variance", type=float, required=True)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refgen, seed=0)

    p = sub.add_parser("repeat", help="repetitive error floor of a reference")
    _common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_repeat, seed=0)

    p = sub.add_parser("learn", help="run one learning campaign")
    _common(p, learn=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true", help="record wall time per trial")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("compare", help="run IO and IS on the same task")
    _common(p, learn=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("suite", help="all testbed tasks under several seeds")
    p.add_argument("--variant", choices=("io", "is", "both"))
    p.add_argument("--trials", type=int)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--full", action="store_true",
                   help="run every campaign to --trials instead of stopping at 80%% reduction")
    p.add_argument("--plant-file", dest="plant_file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("plotdata", help="tidy per-trial error series from campaign directories")
    p.add_argument("campaign", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except GPILCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
