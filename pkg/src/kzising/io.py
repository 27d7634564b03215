"""Self-describing CSV and JSON files.

Every CSV starts with ``#`` comment lines (units and provenance) followed by
a header row. Writes are atomic: data goes to a temporary file in the target
directory which is then renamed into place.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .scaling import CollapseData, ScanResult
from .statevector import SampleSet

__all__ = [
    "atomic_write_text",
    "write_json",
    "read_json",
    "write_csv",
    "read_csv",
    "write_samples",
    "read_samples",
    "write_observables",
    "read_observables",
    "observables_to_collapse",
    "write_surface",
    "read_surface",
    "write_ratios",
    "read_ratios",
    "write_trajectories",
]

OBSERVABLE_UNITS = "T and t in units of 1/J with hbar = 1; x in lattice sites; value and stderr dimensionless"


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(path, header, rows, comments=()) -> Path:
    buf = _io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path):
    """Return ``(comments, header, rows)`` with rows as lists of strings."""
    comments = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("#"):
            comments.append(ln[1:].strip())
        elif ln.strip():
            body.append(ln)
    if not body:
        raise ValueError(f"{path}: no header row")
    reader = csv.reader(body)
    header = next(reader)
    return comments, header, list(reader)


def _expect(header, names, path):
    if header != list(names):
        raise ValueError(f"{path}: expected columns {','.join(names)}, got {','.join(header)}")


# samples -------------------------------------------------------------------


def write_samples(path, samples: SampleSet, comments=()) -> Path:
    counts = samples.counts()
    meta = [f"num_qubits={samples.num_qubits}", f"shots={samples.N}", "bitstrings list qubit 0 first"]
    if samples.seed is not None:
        meta.append(f"seed={samples.seed}")
    return write_csv(path, ["bitstring", "count"], sorted(counts.items()), meta + list(comments))


def read_samples(path) -> SampleSet:
    _, header, rows = read_csv(path)
    _expect(header, ["bitstring", "count"], path)
    return SampleSet.from_counts({b: int(c) for b, c in rows})


# observables ---------------------------------------------------------------

_OBS_COLS = ["T", "t", "x", "value", "stderr"]


def write_observables(path, rows, comments=()) -> Path:
    """``rows`` of ``(T, t, x, value, stderr)``."""
    return write_csv(
        path, _OBS_COLS, [(float(T), float(t), int(x), float(v), float(e)) for T, t, x, v, e in rows],
        [f"units: {OBSERVABLE_UNITS}"] + list(comments),
    )


def read_observables(path) -> np.ndarray:
    """Structured array with fields T, t, x, value, stderr."""
    _, header, rows = read_csv(path)
    _expect(header, _OBS_COLS, path)
    dt = np.dtype([("T", float), ("t", float), ("x", int), ("value", float), ("stderr", float)])
    return np.array([(float(a), float(b), int(c), float(d), float(e)) for a, b, c, d, e in rows], dtype=dt)


def observables_to_collapse(obs: np.ndarray, exact_weights: bool = False) -> CollapseData:
    """Collapse input; zero or ``exact_weights`` stderr becomes 1 (equal weights)."""
    err = obs["stderr"].astype(float)
    if exact_weights or not np.all(err > 0):
        err = np.ones_like(err)
    return CollapseData(obs["T"], obs["x"], obs["value"], err)


# analysis outputs ----------------------------------------------------------


def write_surface(path, scan: ScanResult, comments=()) -> Path:
    return write_csv(
        path, ["nu", "eta", "chi2_per_dof"], scan.cells(),
        ["chi2 per degree of freedom of the best scaling-function fit; empty marks a failed cell"]
        + list(comments),
    )


def read_surface(path) -> ScanResult:
    _, header, rows = read_csv(path)
    _expect(header, ["nu", "eta", "chi2_per_dof"], path)
    a = np.array([[float(v) for v in r] for r in rows])
    nu = np.unique(a[:, 0])
    eta = np.unique(a[:, 1])
    surf = np.full((nu.size, eta.size), np.nan)
    surf[np.searchsorted(nu, a[:, 0]), np.searchsorted(eta, a[:, 1])] = a[:, 2]
    return ScanResult(nu, eta, surf, np.isnan(surf))


def write_ratios(path, kind: str, rows, comments=()) -> Path:
    """``rows`` of ``(g, x, ratio, stderr)`` with ``g`` a noise strength or depth."""
    return write_csv(
        path, [kind, "x", "ratio", "stderr"], rows,
        [f"ratio = C(x, {kind}) / C(x, noiseless); x in lattice sites"] + list(comments),
    )


def read_ratios(path):
    _, header, rows = read_csv(path)
    if header[1:] != ["x", "ratio", "stderr"]:
        raise ValueError(f"{path}: not a ratio table")
    a = np.array([[float(v) for v in r] for r in rows]) if rows else np.zeros((0, 4))
    return header[0], a


def write_trajectories(path, result, comments=()) -> Path:
    """Per-trajectory values of an ensemble, one row per trajectory id."""
    if not result.trajectories:
        raise ValueError("ensemble was run without keep_trajectories")
    names = []
    first = result.trajectories[0].values
    for k, v in first.items():
        v = np.atleast_1d(v)
        names += [k] if v.size == 1 else [f"{k}[{i}]" for i in range(v.size)]
    rows = []
    for tr in result.trajectories:
        vals = np.concatenate([np.atleast_1d(tr.values[k]).ravel() for k in first])
        rows.append([tr.id, tr.n_errors] + vals.tolist())
    meta = [f"{k}={v}" for k, v in result.manifest().items()]
    return write_csv(path, ["id", "n_errors"] + names, rows, meta + list(comments))
