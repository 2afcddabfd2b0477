"""On-disk formats: norm curves (CSV), trajectory dumps (binary), reports (JSON).

The binary dump is ``MAGIC`` followed by three little-endian int64 values
``(K, n, m)`` and the float64 arrays ``grid (K)``, ``states (K, n)``,
``controls (K, m)``, ``adjoints (K, n)`` in row-major order.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ArgumentError
from .ocp_core import Trajectory

MAGIC = b"TPKTRAJ1"
NORM_COLUMNS = ("t", "x_h1", "u_l2b", "lam_l2", "lam_h1")


def write_norms_csv(path, grid, x_h1, u_l2b, lam_l2, lam_h1):
    cols = [np.asarray(c, dtype=float) for c in (grid, x_h1, u_l2b, lam_l2, lam_h1)]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(NORM_COLUMNS)
        for row in zip(*cols):
            wr.writerow([repr(float(v)) for v in row])


def read_norms_csv(path):
    """Columns of a norms file as a dict of arrays."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [[float(v) for v in r] for r in rd if r]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {h: data[:, i] for i, h in enumerate(header)}


def write_trajectory_bin(path, traj):
    K = len(traj.grid)
    n, m = traj.states.shape[1], traj.controls.shape[1]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array([K, n, m], dtype="<i8").tobytes())
        for arr in (traj.grid, traj.states, traj.controls, traj.adjoints):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_trajectory_bin(path):
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ArgumentError(f"{path} is not a trajectory dump")
    off = len(MAGIC)
    K, n, m = (int(v) for v in np.frombuffer(raw, dtype="<i8", count=3, offset=off))
    off += 24
    expected = off + 8 * K * (1 + 2 * n + m)
    if len(raw) != expected:
        raise ArgumentError(f"{path}: size {len(raw)} does not match header ({expected})")
    out = []
    for shape in ((K,), (K, n), (K, m), (K, n)):
        cnt = int(np.prod(shape))
        out.append(np.frombuffer(raw, dtype="<f8", count=cnt, offset=off).reshape(shape).copy())
        off += 8 * cnt
    return Trajectory(out[0], out[1], out[2], out[3], {})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable and round-trippable
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def as_float(v):
    """Inverse of the inf/nan string encoding used by :func:`write_json`."""
    if isinstance(v, str):
        return float(v)
    return float(v) if v is not None else float("nan")
