"""Readers for the documented qfd artifact formats.

plotkit never imports the simulation package: the on-disk formats are the
whole contract. Binary fields carry a 64-byte little-endian header
(magic "QFDF", version, ndim, payload kind, boundaries, shape, spacing,
origin) followed by row-major float64 data, complex interleaved re/im.
"""

import csv
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

_HEADER = struct.Struct("<4sIIHBBQQdddd")


@dataclass(frozen=True)
class FieldData:
    values: np.ndarray       # real or complex, 1D or 2D
    x: np.ndarray            # axis-0 coordinates
    y: np.ndarray            # axis-1 coordinates (None for 1D)
    kind: int                # 0 real, 1 complex, 2 density matrix
    time: float              # density-matrix variant only, else 0.0


def read_field(path):
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, ndim, kind, _bx, _by, nx, ny, dx, dy, x_min, y_min = \
            _HEADER.unpack(raw)
        if magic != b"QFDF" or version != 1:
            raise ValueError(f"{path}: not a qfd field file")
        dtype = "<f8" if kind == 0 else "<c16"
        data = np.frombuffer(fh.read(), dtype=dtype)
    x = x_min + dx * np.arange(nx)
    t = 0.0
    if kind == 2:
        # density-matrix variant: square, shared axis, y_min slot is time
        data = data.reshape(nx, nx)
        return FieldData(values=data, x=x, y=x.copy(), kind=kind, time=y_min)
    if ndim == 1:
        return FieldData(values=data.reshape(nx), x=x, y=None, kind=kind, time=t)
    y = y_min + dy * np.arange(ny)
    return FieldData(values=data.reshape(nx, ny), x=x, y=y, kind=kind, time=t)


def read_manifest(artifact_dir):
    path = os.path.join(artifact_dir, "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing artifact manifest: {path}")
    with open(path) as fh:
        return json.load(fh)


def read_csv_columns(path):
    """CSV as {column: float array}; non-numeric cells become NaN."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing artifact file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = {h: [] for h in header}
    for row in rows[1:]:
        if not row:
            continue
        for h, v in zip(header, row):
            try:
                cols[h].append(float(v))
            except ValueError:
                cols[h].append(np.nan)
    return {h: np.asarray(v) for h, v in cols.items()}


def read_trajectories(path):
    """(times, positions[k, i, dim]) from a trajectory CSV."""
    cols = read_csv_columns(path)
    ids = cols["traj_id"].astype(int)
    t = cols["t"]
    ndim = 2 if "y" in cols else 1
    n_traj = int(ids.max()) + 1
    n_times = int(np.sum(ids == ids[0]))
    times = t[:n_times]
    positions = np.zeros((n_times, n_traj, ndim))
    for i in range(n_traj):
        sel = ids == i
        positions[:, i, 0] = cols["x"][sel]
        if ndim == 2:
            positions[:, i, 1] = cols["y"][sel]
    return times, positions


def snapshot_rho_series(artifact_dir, times):
    """Stack hydro_XXXX_rho profiles into (n_times, n_x) plus the x axis."""
    profiles = []
    x = None
    for k in range(len(times)):
        f = read_field(os.path.join(artifact_dir, f"hydro_{k:04d}_rho.qfdf"))
        profiles.append(np.real(f.values))
        x = f.x
    return x, np.asarray(profiles)
