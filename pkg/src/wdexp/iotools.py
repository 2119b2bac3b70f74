"""File emission with reproducibility metadata.

Every emitted file carries the sha256 hash of the canonicalized config
that produced it: as ``# key: value`` comment lines before the CSV
header, or as a ``config_hash`` field in JSON documents.  CSV floats
are written with 17 significant digits so 64-bit values survive a
round trip.
"""

import hashlib
import json
import math
from pathlib import Path

import numpy as np


def canonical_config(config):
    """Canonical JSON text of a config dict (sorted keys, no spaces)."""
    return json.dumps(config, sort_keys=True, separators=(",", ":"),
                      default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_hash(config):
    return hashlib.sha256(canonical_config(config).encode()).hexdigest()


def fmt(x):
    """CSV cell formatting: floats at 17 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "nan"
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, columns, rows, config, extra_meta=None):
    """Write rows (iterable of sequences) with a metadata comment block."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_hash: {config_hash(config)}"]
    for key, value in (extra_meta or {}).items():
        lines.append(f"# {key}: {value}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path, payload, config):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config_hash": config_hash(config), **payload}
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def read_csv(path):
    """Inverse of write_csv: (meta, columns, rows-as-strings)."""
    meta = {}
    columns = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        elif columns is None:
            columns = line.split(",")
        elif line:
            rows.append(line.split(","))
    return meta, columns, rows


def translated_csv(path, translated, config):
    """Per-iteration translated schedule table."""
    rows = []
    for t in range(translated.num_iters):
        rows.append((t,
                     translated.eta_tilde[t],
                     translated.log_eta_tilde[t],
                     translated.alpha_seq[t],
                     translated.logP_seq[t],
                     translated.correction_at(t) is not None))
    return write_csv(
        path,
        ("t", "eta_tilde", "log_eta_tilde", "alpha_t", "logP_t",
         "correction_flag"),
        rows, config,
        extra_meta={"kind": translated.kind, "gamma": translated.gamma})


def trajectory_csv(path, traj, config):
    """Per-iteration run record; the final row carries only the state
    columns (log_norm, dir_cos_ref) since no step leaves it."""
    dir_cos = traj.dir_cos_ref()
    n = traj.num_iters
    rows = []
    for t in range(n):
        rows.append((t, traj.log_norm[t], dir_cos[t], traj.loss[t],
                     traj.grad_norm[t], traj.update_norm[t],
                     traj.lr_log[t]))
    rows.append((n, traj.log_norm[n], dir_cos[n], None, None, None, None))
    return write_csv(
        path,
        ("t", "log_norm", "dir_cos_ref", "loss", "grad_norm",
         "update_norm", "lr_effective_log"),
        rows, config, extra_meta={"kind": traj.kind})


def angle_csv(path, toy_traj, config):
    """Toy-model angle series; the final row has no step column."""
    n = toy_traj.num_iters
    rows = []
    for t in range(n):
        rows.append((t, toy_traj.angle[t], toy_traj.norm[t],
                     toy_traj.train_error[t], toy_traj.step_angle[t],
                     toy_traj.loss[t]))
    rows.append((n, toy_traj.angle[n], toy_traj.norm[n],
                 toy_traj.train_error[n], None, None))
    return write_csv(
        path,
        ("t", "angle", "norm", "train_error", "step_angle", "loss"),
        rows, config, extra_meta={"regime": toy_traj.regime})


def residual_csv(path, residual, config):
    rows = [(t, r) for t, r in enumerate(residual)]
    return write_csv(path, ("t", "residual"), rows, config)
