"""CSV/JSON persistence for references and campaign logs.

Floats are written with ``repr`` so every value round-trips exactly.
"""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .errors import NotFoundError, ParseError
from .signals import Reference

TRIALS_HEADER = ["j", "err_norm", "rel_raw", "eps", "wall_s", "P_norm"]
REFERENCE_HEADER = ["n", "r", "u_realizing"]
TRAJ_HEADER = ["j", "n", "u", "y"]


def fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_csv(path: Path, header: list) -> list:
    if not path.is_file():
        raise NotFoundError(f"{path} does not exist")
    text = path.read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError("empty file", path=path, line=1)
    if rows[0] != header:
        raise ParseError(f"expected header {','.join(header)}", path=path, line=1)
    if not text.endswith("\n"):
        raise ParseError("file is truncated (no final newline)", path=path, line=len(rows))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", path=path, line=i)
    return rows[1:]


def _parse_float(text, path, line, field, optional=False):
    if text == "" and optional:
        return None
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", path=path, line=line, field=field) from None


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise NotFoundError(f"{path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from exc


# -- references -------------------------------------------------------------

def _reference_paths(path):
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    return base.with_suffix(".csv"), base.with_suffix(".json")


def save_reference(ref: Reference, path) -> Path:
    csv_path, json_path = _reference_paths(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    u = ref.realizing_input
    rows = [[n + 1, fmt(ref.r[n]), fmt(u[n]) if u is not None else ""] for n in range(ref.n)]
    _write_atomic(csv_path, _csv_text(REFERENCE_HEADER, rows))
    meta = {"fs": ref.fs, **ref.provenance}
    _write_atomic(json_path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path


def load_reference(path) -> Reference:
    csv_path, json_path = _reference_paths(path)
    rows = _read_csv(csv_path, REFERENCE_HEADER)
    meta = _read_json(json_path)
    r, u = [], []
    for i, row in enumerate(rows, start=2):
        r.append(_parse_float(row[1], csv_path, i, "r"))
        u.append(_parse_float(row[2], csv_path, i, "u_realizing", optional=True))
    if "fs" not in meta:
        raise ParseError("missing 'fs'", path=json_path)
    fs = float(meta.pop("fs"))
    if all(v is None for v in u):
        realizing = None
    elif any(v is None for v in u):
        raise ParseError("u_realizing is partially empty", path=csv_path)
    else:
        realizing = np.array(u)
    return Reference(np.array(r), fs, meta, realizing)


# -- campaigns --------------------------------------------------------------

def save_campaign(clog, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [[t.j, fmt(t.err_norm), fmt(t.rel_raw), fmt(t.eps), fmt(t.wall_s), fmt(t.P_norm)]
            for t in clog.entries]
    _write_atomic(out / "trials.csv", _csv_text(TRIALS_HEADER, rows))
    traj = [[t.j, n + 1, fmt(u[n]), fmt(y[n])]
            for t, u, y in zip(clog.entries, clog.inputs, clog.outputs) for n in range(u.size)]
    _write_atomic(out / "trajectories.csv", _csv_text(TRAJ_HEADER, traj))
    meta = {
        "config": clog.config,
        "e_R": clog.e_R,
        "r_norm": clog.r_norm,
        "status": clog.status,
        "message": clog.message,
        "hyper": [t.hyper for t in clog.entries],
        "fallback": [t.fallback for t in clog.entries],
        "final_input": None if clog.final_input is None else [float(v) for v in clog.final_input],
    }
    _write_atomic(out / "campaign.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if clog.reference is not None:
        save_reference(clog.reference, out / "reference")
    return out


def load_campaign(out_dir):
    from .harness import CampaignLog, TrialEntry

    out = Path(out_dir)
    if not out.is_dir():
        raise NotFoundError(f"campaign directory {out} does not exist")
    if not (out / "trials.csv").is_file() or not (out / "campaign.json").is_file():
        raise NotFoundError(f"{out} holds no campaign (trials.csv / campaign.json missing)")
    meta = _read_json(out / "campaign.json")
    rows = _read_csv(out / "trials.csv", TRIALS_HEADER)
    for key in ("config", "e_R", "r_norm", "status", "hyper", "fallback"):
        if key not in meta:
            raise ParseError(f"missing key {key!r}", path=out / "campaign.json")
    if len(meta["hyper"]) != len(rows) or len(meta["fallback"]) != len(rows):
        raise ParseError("per-trial metadata length differs from trials.csv", path=out / "campaign.json")
    entries = []
    path = out / "trials.csv"
    for i, row in enumerate(rows, start=2):
        try:
            j = int(row[0])
        except ValueError:
            raise ParseError(f"bad trial index {row[0]!r}", path=path, line=i, field="j") from None
        vals = [_parse_float(row[k], path, i, TRIALS_HEADER[k], optional=(k == 4)) for k in range(1, 6)]
        entries.append(TrialEntry(j, vals[0], vals[1], vals[2], vals[3], vals[4],
                                  meta["hyper"][i - 2], bool(meta["fallback"][i - 2])))
    inputs, outputs = _load_trajectories(out / "trajectories.csv", len(entries))
    ref = None
    if (out / "reference.csv").is_file():
        ref = load_reference(out / "reference")
    fi = meta.get("final_input")
    return CampaignLog(meta["config"], float(meta["e_R"]), float(meta["r_norm"]), entries,
                       None if fi is None else np.array(fi, dtype=float), meta["status"],
                       meta.get("message", ""), ref, inputs, outputs)


def _load_trajectories(path: Path, n_trials: int):
    if not path.is_file():
        return [], []
    rows = _read_csv(path, TRAJ_HEADER)
    by_trial = {}
    for i, row in enumerate(rows, start=2):
        j = int(row[0])
        by_trial.setdefault(j, ([], []))
        by_trial[j][0].append(_parse_float(row[2], path, i, "u"))
        by_trial[j][1].append(_parse_float(row[3], path, i, "y"))
    js = sorted(by_trial)
    if len(js) != n_trials:
        raise ParseError(f"trajectories for {len(js)} trials, expected {n_trials}", path=path)
    return ([np.array(by_trial[j][0]) for j in js], [np.array(by_trial[j][1]) for j in js])


def campaigns_equal(a, b) -> bool:
    """Field-by-field equality of two campaign logs (exact floats)."""
    def arr_eq(x, y):
        if x is None or y is None:
            return x is y
        return np.array_equal(np.asarray(x), np.asarray(y))

    return (a.config == b.config and a.e_R == b.e_R and a.r_norm == b.r_norm
            and a.status == b.status and a.message == b.message
            and a.entries == b.entries and arr_eq(a.final_input, b.final_input)
            and len(a.inputs) == len(b.inputs)
            and all(arr_eq(x, y) for x, y in zip(a.inputs, b.inputs))
            and all(arr_eq(x, y) for x, y in zip(a.outputs, b.outputs)))


def plotdata(campaign_dirs, out_path=None) -> str:
    """Tidy CSV of per-trial relative errors across campaigns.

    Columns: ``campaign,plant,task,variant,seed,j,rel_raw,eps,e_R``.
    """
    header = ["campaign", "plant", "task", "variant", "seed", "j", "rel_raw", "eps", "e_R"]
    rows = []
    for d in campaign_dirs:
        clog = load_campaign(d)
        cfg = clog.config
        task = cfg.get("reference", {}).get("task", "")
        for t in clog.entries:
            rows.append([Path(d).name, cfg["plant"], task, cfg["variant"], cfg["seed"], t.j,
                         fmt(t.rel_raw), fmt(t.eps), fmt(clog.e_R)])
    text = _csv_text(header, rows)
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        _write_atomic(Path(out_path), text)
    return text
