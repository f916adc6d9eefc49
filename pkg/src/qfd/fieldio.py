"""Bit-exact field serialization.

Binary layout (little-endian), 64-byte header followed by row-major
float64 data (complex values interleaved re, im):

    bytes  0-3   magic b"QFDF"
    bytes  4-7   uint32 format version (1)
    bytes  8-11  uint32 ndim (1 or 2)
    bytes 12-13  uint16 payload kind: 0 real, 1 complex, 2 density matrix
    byte  14     uint8 boundary axis 0 (0 periodic, 1 dirichlet)
    byte  15     uint8 boundary axis 1
    bytes 16-23  uint64 nx
    bytes 24-31  uint64 ny (0 for 1D fields; nx for density matrices)
    bytes 32-39  float64 dx
    bytes 40-47  float64 dy (0.0 for 1D)
    bytes 48-55  float64 x_min
    bytes 56-63  float64 y_min (density-matrix variant: time stamp, since
                 both matrix arguments share the single spatial grid)

CSV fields carry full repr precision so text round-trips are bit-exact.
"""

import struct

import numpy as np

from .grids import DIRICHLET, PERIODIC, Grid1D, Grid2D
from .fields import ComplexField, RealField

MAGIC = b"QFDF"
VERSION = 1
KIND_REAL = 0
KIND_COMPLEX = 1
KIND_RDM = 2

_HEADER = struct.Struct("<4sIIHBBQQdddd")
assert _HEADER.size == 64

_B_CODE = {PERIODIC: 0, DIRICHLET: 1}
_B_NAME = {0: PERIODIC, 1: DIRICHLET}


def _pack_header(kind, ndim, bx, by, nx, ny, dx, dy, x_min, y_min):
    return _HEADER.pack(MAGIC, VERSION, ndim, kind, bx, by, nx, ny, dx, dy, x_min, y_min)


def _grid_header(grid, kind):
    if grid.ndim == 1:
        return _pack_header(kind, 1, _B_CODE[grid.boundary], 0,
                            grid.n_points, 0, grid.dx, 0.0, grid.x_min, 0.0)
    return _pack_header(kind, 2, _B_CODE[grid.gx.boundary], _B_CODE[grid.gy.boundary],
                        grid.gx.n_points, grid.gy.n_points,
                        grid.gx.dx, grid.gy.dx, grid.gx.x_min, grid.gy.x_min)


def save_field(field, path):
    kind = KIND_COMPLEX if isinstance(field, ComplexField) else KIND_REAL
    dtype = "<c16" if kind == KIND_COMPLEX else "<f8"
    with open(path, "wb") as fh:
        fh.write(_grid_header(field.grid, kind))
        fh.write(np.ascontiguousarray(field.values).astype(dtype).tobytes())


def _read_header(fh, path):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, ndim, kind, bx, by, nx, ny, dx, dy, x_min, y_min = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return ndim, kind, bx, by, nx, ny, dx, dy, x_min, y_min


def load_field(path):
    with open(path, "rb") as fh:
        ndim, kind, bx, by, nx, ny, dx, dy, x_min, y_min = _read_header(fh, path)
        if kind == KIND_RDM:
            raise ValueError(f"{path}: density-matrix file, use load_rdm")
        if ndim == 1:
            grid = Grid1D(nx, x_min, dx, _B_NAME[bx])
        else:
            grid = Grid2D(Grid1D(nx, x_min, dx, _B_NAME[bx]),
                          Grid1D(ny, y_min, dy, _B_NAME[by]))
        dtype = "<c16" if kind == KIND_COMPLEX else "<f8"
        data = np.frombuffer(fh.read(), dtype=dtype).astype(
            np.complex128 if kind == KIND_COMPLEX else np.float64).reshape(grid.shape)
    cls = ComplexField if kind == KIND_COMPLEX else RealField
    return cls(grid, data)


def save_rdm_matrix(grid, values, t, path):
    """Density-matrix variant: square complex matrix on grid x grid."""
    n = grid.n_points
    if values.shape != (n, n):
        raise ValueError(f"density matrix shape {values.shape} != ({n}, {n})")
    header = _pack_header(KIND_RDM, 2, _B_CODE[grid.boundary], _B_CODE[grid.boundary],
                          n, n, grid.dx, grid.dx, grid.x_min, float(t))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values).astype("<c16").tobytes())


def load_rdm_matrix(path):
    """Returns (Grid1D, values, t)."""
    with open(path, "rb") as fh:
        ndim, kind, bx, by, nx, ny, dx, dy, x_min, t = _read_header(fh, path)
        if kind != KIND_RDM:
            raise ValueError(f"{path}: not a density-matrix file")
        grid = Grid1D(nx, x_min, dx, _B_NAME[bx])
        data = np.frombuffer(fh.read(), dtype="<c16").astype(np.complex128).reshape(nx, nx)
    return grid, data, t


def _fmt(v):
    return repr(float(v))


def save_field_csv(field, path):
    is_complex = isinstance(field, ComplexField)
    grid = field.grid
    with open(path, "w", newline="") as fh:
        if grid.ndim == 1:
            fh.write("index,x,re,im\n" if is_complex else "index,x,value\n")
            x = grid.x
            for i, v in enumerate(field.values):
                if is_complex:
                    fh.write(f"{i},{_fmt(x[i])},{_fmt(v.real)},{_fmt(v.imag)}\n")
                else:
                    fh.write(f"{i},{_fmt(x[i])},{_fmt(v)}\n")
        else:
            fh.write("i,j,x,y,re,im\n" if is_complex else "i,j,x,y,value\n")
            xs, ys = grid.gx.x, grid.gy.x
            for i in range(grid.shape[0]):
                for j in range(grid.shape[1]):
                    v = field.values[i, j]
                    if is_complex:
                        fh.write(f"{i},{j},{_fmt(xs[i])},{_fmt(ys[j])},{_fmt(v.real)},{_fmt(v.imag)}\n")
                    else:
                        fh.write(f"{i},{j},{_fmt(xs[i])},{_fmt(ys[j])},{_fmt(v)}\n")


def load_field_csv(path, grid):
    """Read values written by save_field_csv back onto a known grid."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    is_complex = header[-2:] == ["re", "im"]
    if grid.ndim == 1:
        vals = np.zeros(grid.shape, dtype=np.complex128 if is_complex else np.float64)
        for row in rows:
            i = int(row[0])
            vals[i] = complex(float(row[2]), float(row[3])) if is_complex else float(row[2])
    else:
        vals = np.zeros(grid.shape, dtype=np.complex128 if is_complex else np.float64)
        for row in rows:
            i, j = int(row[0]), int(row[1])
            vals[i, j] = complex(float(row[4]), float(row[5])) if is_complex else float(row[4])
    return (ComplexField if is_complex else RealField)(grid, vals)
