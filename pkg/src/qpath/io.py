"""File formats: readout records, trajectory sets, paths, histograms and
JSON bundles. Everything is written deterministically (no timestamps)."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .detector import ReadoutRecord
from .dynamics import BlochState, PhysicalParams
from .errors import RecordFormatError
from .simulator import FORMAT_VERSION, TrajectorySet

RECORD_HEADERS = {"t_seconds,r": "r", "t_seconds,v_volts": "v_volts"}
PATH_COLUMNS = ("t", "x", "z", "p_x", "p_z", "r", "energy")
DT_PPM = 1e-6


def _fmt(v) -> str:
    # repr round-trips doubles exactly
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# --- readout records ---------------------------------------------------------


def read_record(path, delta_v: float = 1.0) -> ReadoutRecord:
    """Load a readout CSV.

    The header is ``t_seconds,r`` (dimensionless) or ``t_seconds,v_volts``
    (converted with ``r = 2 V / delta_v``). The sampling interval is taken
    from the time column and must be uniform to 1 ppm. Errors name the
    offending line (1-based, header is line 1).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RecordFormatError("empty file", 1)
    header = ",".join(c.strip() for c in rows[0])
    if header not in RECORD_HEADERS:
        raise RecordFormatError(
            f"unrecognized header {header!r}; expected one of {sorted(RECORD_HEADERS)}", 1
        )
    kind = RECORD_HEADERS[header]
    t, vals, lines = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise RecordFormatError(f"expected 2 fields, got {len(row)}", lineno)
        try:
            a, b = float(row[0]), float(row[1])
        except ValueError:
            raise RecordFormatError(f"non-numeric value in {row!r}", lineno) from None
        if not (math.isfinite(a) and math.isfinite(b)):
            raise RecordFormatError("non-finite value", lineno)
        t.append(a)
        vals.append(b)
        lines.append(lineno)
    if len(t) < 2:
        raise RecordFormatError("need at least two samples to infer dt", len(rows))
    t = np.asarray(t)
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if not dt > 0:
        raise RecordFormatError("time column must increase", lines[-1])
    bad = np.flatnonzero(np.abs(steps - dt) > DT_PPM * dt)
    if bad.size:
        k = int(bad[0])
        raise RecordFormatError(
            f"non-uniform sampling: step {steps[k]:.12g} s differs from dt = {dt:.12g} s",
            lines[k + 1],
        )
    vals = np.asarray(vals)
    if kind == "v_volts":
        vals = 2.0 * vals / delta_v
    return ReadoutRecord(float(dt), vals)


def write_record(path, record: ReadoutRecord, delta_v: float | None = None) -> Path:
    """Write ``t_seconds,r`` (or ``t_seconds,v_volts`` when ``delta_v`` given)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if delta_v is None:
            w.writerow(["t_seconds", "r"])
            vals = record.values
        else:
            w.writerow(["t_seconds", "v_volts"])
            vals = 0.5 * delta_v * record.values
        for t, v in zip(record.times, vals):
            w.writerow([_fmt(t), _fmt(v)])
    return path


def write_states(path, times, x, z) -> Path:
    return write_columns(path, ("t", "x", "z"), (times, x, z))


def write_columns(path, names, columns) -> Path:
    path = Path(path)
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_columns(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


# --- trajectory sets ---------------------------------------------------------


def save_trajectory_set(tset: TrajectorySet, directory, stem: str = "trajectories") -> list:
    """Write ``<stem>.json`` (manifest) and ``<stem>.npy`` (readout matrix).

    Field names follow ``schemas/trajectory_set.schema.json``.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    npy = d / f"{stem}.npy"
    np.save(npy, np.ascontiguousarray(tset.readouts, dtype="<f8"), allow_pickle=False)
    manifest = tset.manifest()
    manifest["readouts_file"] = npy.name
    manifest["readouts_sha256"] = sha256(npy)
    js = write_json(d / f"{stem}.json", manifest)
    return [js, npy]


def load_trajectory_set(manifest_path) -> TrajectorySet:
    manifest_path = Path(manifest_path)
    m = read_json(manifest_path)
    if m.get("format_version") != FORMAT_VERSION:
        raise RecordFormatError(f"unsupported format_version {m.get('format_version')!r}")
    npy = manifest_path.parent / m["readouts_file"]
    if "readouts_sha256" in m and sha256(npy) != m["readouts_sha256"]:
        raise RecordFormatError(f"{npy.name} does not match the manifest checksum")
    readouts = np.load(npy, allow_pickle=False)
    if readouts.shape != (m["n_traj"], m["n_steps"]):
        raise RecordFormatError(f"readout matrix has shape {readouts.shape}, manifest says "
                                f"({m['n_traj']}, {m['n_steps']})")
    params = PhysicalParams(**m["params"])
    initial = BlochState(m["initial"]["x"], m["initial"]["z"])
    return TrajectorySet(params, initial, readouts, m.get("master_seed"))


# --- paths, histograms, series ----------------------------------------------


def write_path(path, opt) -> Path:
    """OptimalPath as CSV ``t,x,z,p_x,p_z,r,energy``."""
    return write_columns(path, PATH_COLUMNS, opt.as_table().T)


def read_path(path) -> dict:
    cols = read_columns(path)
    if tuple(cols) != PATH_COLUMNS:
        raise RecordFormatError(f"expected columns {','.join(PATH_COLUMNS)}", 1)
    return cols


def write_histogram(path, hist) -> Path:
    """Histogram2D as CSV.

    Line 1 is ``value_edges,...``, line 2 ``time_edges,...``; then one row
    per time bin, ``t_lo,t_hi,count_0,...,count_{B-1}``.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value_edges"] + [_fmt(v) for v in hist.value_edges])
        w.writerow(["time_edges"] + [_fmt(v) for v in hist.time_edges])
        for k, row in enumerate(hist.counts):
            w.writerow([_fmt(hist.time_edges[k]), _fmt(hist.time_edges[k + 1])]
                       + [_fmt(v) for v in row])
    return path


def read_histogram(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    value_edges = np.array(rows[0][1:], dtype=float)
    time_edges = np.array(rows[1][1:], dtype=float)
    counts = np.array([r[2:] for r in rows[2:]], dtype=float)
    return time_edges, value_edges, counts


def write_series(path, times, value, stderr, n) -> Path:
    """CSV ``t,value,stderr,n`` (weak functions, empirical paths)."""
    times = np.asarray(times)
    return write_columns(path, ("t", "value", "stderr", "n"),
                         (times, value, stderr, np.full(times.shape, n)))
