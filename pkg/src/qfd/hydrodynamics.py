"""Polar (amplitude/phase) decomposition of a wavefunction into fluid
fields: density, velocity, current, quantum potential, effective potential.

The velocity is computed gauge-safely as (hbar/m) Im(grad psi / psi), never
by differentiating an unwrapped phase: unwrapping is ill-defined around
nodes. Nodes (rho < eps_node * max rho) are masked explicitly; the quantum
potential and velocity carry NaN there rather than clamped values.
"""

import csv
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import fieldio
from .fields import HBAR, ComplexField, RealField, gradient, integrate, laplacian
from .grids import Grid2D
from .potentials import PotentialSpec

EPS_NODE_DEFAULT = 1e-12


@dataclass(frozen=True)
class HydroFields:
    """Derived fluid fields on the wavefunction's grid.

    velocity and current hold one field per axis. node_mask is True where
    the density is below eps_node * max(rho); q_potential, v_eff and
    velocity are NaN exactly there.
    """

    rho: RealField
    velocity: Tuple[RealField, ...]
    current: Tuple[RealField, ...]
    q_potential: RealField
    v_eff: RealField
    node_mask: np.ndarray
    eps_node: float
    t: float
    mass: float

    @property
    def grid(self):
        return self.rho.grid


def node_mask_of(rho_values, eps_node=EPS_NODE_DEFAULT):
    return rho_values < eps_node * np.max(rho_values)


def q_potential_from_density(rho: RealField, mass=1.0, eps_node=EPS_NODE_DEFAULT):
    """Q = -(hbar^2/2m) lap(sqrt(rho)) / sqrt(rho), NaN on masked nodes.

    Scale-invariant: multiplying rho by a positive constant leaves Q
    unchanged.
    """
    mask = node_mask_of(rho.values, eps_node)
    amp = np.sqrt(np.abs(rho.values))
    lap = laplacian(RealField(rho.grid, amp)).values
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -HBAR * HBAR / (2.0 * mass) * lap / amp
    q[mask] = np.nan
    return RealField(rho.grid, q)


def q_potential_density_form(rho: RealField, mass=1.0, eps_node=EPS_NODE_DEFAULT):
    """Equivalent curvature form -(hbar^2/4m)[lap(rho)/rho - (grad rho)^2/(2 rho^2)],
    kept as an independent cross-check of q_potential_from_density."""
    mask = node_mask_of(rho.values, eps_node)
    lap = laplacian(rho).values
    gsq = np.zeros_like(rho.values)
    for ax in range(rho.grid.ndim):
        g = gradient(rho, axis=ax).values
        gsq = gsq + g * g
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -HBAR * HBAR / (4.0 * mass) * (lap / rho.values - 0.5 * gsq / rho.values ** 2)
    q[mask] = np.nan
    return RealField(rho.grid, q)


def decompose(psi: ComplexField, potential: Optional[PotentialSpec] = None, t=0.0,
              mass=1.0, eps_node=EPS_NODE_DEFAULT) -> HydroFields:
    """Full fluid decomposition of a normalized wavefunction."""
    grid = psi.grid
    rho_vals = np.abs(psi.values) ** 2
    mask = node_mask_of(rho_vals, eps_node)
    rho = RealField(grid, rho_vals)

    velocity = []
    current = []
    for ax in range(grid.ndim):
        dpsi = gradient(psi, axis=ax).values
        j = HBAR / mass * np.imag(np.conj(psi.values) * dpsi)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = HBAR / mass * np.imag(dpsi / psi.values)
        v[mask] = np.nan
        velocity.append(RealField(grid, v))
        current.append(RealField(grid, j))

    q = q_potential_from_density(rho, mass=mass, eps_node=eps_node)
    if potential is not None:
        v_eff = RealField(grid, potential.evaluate(grid, t) + q.values)
    else:
        v_eff = q
    return HydroFields(rho=rho, velocity=tuple(velocity), current=tuple(current),
                       q_potential=q, v_eff=v_eff, node_mask=mask, eps_node=eps_node,
                       t=t, mass=mass)


@dataclass(frozen=True)
class ContinuityReport:
    max_abs: float
    max_abs_unmasked: float
    l2: float
    integral: float


def continuity_residual(h_before: HydroFields, h_mid: HydroFields, h_after: HydroFields, dt):
    """d rho/dt (central difference across the two outer snapshots) plus
    div j at the middle snapshot. Returns (residual field, report)."""
    grid = h_mid.grid
    for other in (h_before, h_after):
        if other.grid != grid:
            raise ValueError("continuity snapshots must share one grid")
    drho_dt = (h_after.rho.values - h_before.rho.values) / (2.0 * dt)
    div_j = np.zeros_like(drho_dt)
    for ax in range(grid.ndim):
        div_j = div_j + gradient(h_mid.current[ax], axis=ax).values
    res = RealField(grid, drho_dt + div_j)
    unmasked = ~h_mid.node_mask
    w = np.sqrt(grid.cell_volume)
    report = ContinuityReport(
        max_abs=float(np.max(np.abs(res.values))),
        max_abs_unmasked=float(np.max(np.abs(res.values[unmasked]))),
        l2=float(np.linalg.norm(res.values) * w),
        integral=integrate(res),
    )
    return res, report


def rectangle_loop(i0, i1, j0, j1):
    """Counter-clockwise closed loop of grid indices around the rectangle
    [i0, i1] x [j0, j1] (inclusive corners)."""
    pts = []
    pts += [(i, j0) for i in range(i0, i1)]
    pts += [(i1, j) for j in range(j0, j1)]
    pts += [(i, j1) for i in range(i1, i0, -1)]
    pts += [(i0, j) for j in range(j1, j0, -1)]
    pts.append((i0, j0))
    return np.array(pts, dtype=np.intp)


class LoopTouchesNodeError(ValueError):
    def __init__(self, point):
        self.point = point
        super().__init__(f"circulation loop touches masked node region at {point}")


def _bilinear(values, grid2d, xq, yq):
    gx, gy = grid2d.gx, grid2d.gy
    fx = (xq - gx.x_min) / gx.dx
    fy = (yq - gy.x_min) / gy.dx
    ix = np.clip(np.floor(fx).astype(int), 0, gx.n_points - 2)
    iy = np.clip(np.floor(fy).astype(int), 0, gy.n_points - 2)
    ux, uy = fx - ix, fy - iy
    v00 = values[ix, iy]
    v10 = values[ix + 1, iy]
    v01 = values[ix, iy + 1]
    v11 = values[ix + 1, iy + 1]
    return (v00 * (1 - ux) * (1 - uy) + v10 * ux * (1 - uy)
            + v01 * (1 - ux) * uy + v11 * ux * uy)


def circulation(hf: HydroFields, loop):
    """Discrete line integral of the velocity around a closed loop on a 2D
    grid. Integer index loops must step between axis-adjacent grid points
    (exact trapezoid integral); float coordinate loops are treated as
    polygons sampled with bilinear velocity interpolation.

    Single-valuedness of the wavefunction quantizes the result to
    n * 2 pi hbar / m for enclosed vortex charge n.
    """
    grid = hf.grid
    if grid.ndim != 2:
        raise ValueError("circulation requires a 2D grid")
    loop = np.asarray(loop)
    if loop.shape[0] < 3:
        raise ValueError("loop needs at least 3 points")
    if not np.array_equal(loop[0], loop[-1]):
        loop = np.vstack([loop, loop[:1]])
    vx, vy = hf.velocity[0].values, hf.velocity[1].values

    if np.issubdtype(loop.dtype, np.integer):
        for (i, j) in loop:
            if hf.node_mask[i, j]:
                raise LoopTouchesNodeError((int(i), int(j)))
        total = 0.0
        for (i0, j0), (i1, j1) in zip(loop[:-1], loop[1:]):
            di, dj = i1 - i0, j1 - j0
            if abs(di) + abs(dj) != 1:
                raise ValueError(f"loop step ({i0},{j0})->({i1},{j1}) is not grid-adjacent")
            if di != 0:
                total += 0.5 * (vx[i0, j0] + vx[i1, j1]) * di * grid.gx.dx
            else:
                total += 0.5 * (vy[i0, j0] + vy[i1, j1]) * dj * grid.gy.dx
        return float(total)

    # polygon with float vertices: subsample each edge at ~half a cell
    h = 0.5 * min(grid.gx.dx, grid.gy.dx)
    total = 0.0
    for p0, p1 in zip(loop[:-1], loop[1:]):
        seg = np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float)
        seg_len = float(np.hypot(*seg))
        n_sub = max(2, int(np.ceil(seg_len / h)) + 1)
        s = np.linspace(0.0, 1.0, n_sub)
        xs = p0[0] + s * seg[0]
        ys = p0[1] + s * seg[1]
        mask_hit = _bilinear(hf.node_mask.astype(float), grid, xs, ys)
        if np.any(mask_hit > 0):
            k = int(np.argmax(mask_hit > 0))
            raise LoopTouchesNodeError((float(xs[k]), float(ys[k])))
        vpar = _bilinear(vx, grid, xs, ys) * seg[0] + _bilinear(vy, grid, xs, ys) * seg[1]
        total += float(np.trapezoid(vpar, s))
    return float(total)


def free_motion_criterion(hf: HydroFields, threshold):
    """True where |grad V_eff| <= threshold: the local free-motion test.
    Masked points (and their stencil neighbors) are False."""
    gsq = np.zeros_like(hf.v_eff.values)
    for ax in range(hf.grid.ndim):
        g = gradient(hf.v_eff, axis=ax).values
        gsq = gsq + g * g
    with np.errstate(invalid="ignore"):
        ok = np.sqrt(gsq) <= threshold
    return ok & np.isfinite(gsq)


_BUNDLE_FIELDS = ("rho", "q_potential", "v_eff")


def save_bundle(hf: HydroFields, directory, prefix="hydro"):
    """Write each field as a binary file plus a manifest CSV."""
    os.makedirs(directory, exist_ok=True)
    rows = []

    def put(name, field):
        fname = f"{prefix}_{name}.qfdf"
        fieldio.save_field(field, os.path.join(directory, fname))
        rows.append((name, fname))

    put("rho", hf.rho)
    for ax, (v, j) in enumerate(zip(hf.velocity, hf.current)):
        put(f"velocity_{ax}", v)
        put(f"current_{ax}", j)
    put("q_potential", hf.q_potential)
    put("v_eff", hf.v_eff)

    manifest = os.path.join(directory, f"{prefix}_manifest.csv")
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["field", "file"])
        w.writerows(rows)
        w.writerow(["_eps_node", repr(hf.eps_node)])
        w.writerow(["_mask_count", int(np.sum(hf.node_mask))])
        w.writerow(["_t", repr(hf.t)])
        w.writerow(["_mass", repr(hf.mass)])
    return manifest


def load_bundle(directory, prefix="hydro"):
    manifest = os.path.join(directory, f"{prefix}_manifest.csv")
    files = {}
    meta = {}
    with open(manifest) as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "field":
                continue
            if row[0].startswith("_"):
                meta[row[0]] = row[1]
            else:
                files[row[0]] = row[1]
    fields = {name: fieldio.load_field(os.path.join(directory, fname))
              for name, fname in files.items()}
    rho = fields["rho"]
    eps = float(meta["_eps_node"])
    ndim = rho.grid.ndim
    return HydroFields(
        rho=rho,
        velocity=tuple(fields[f"velocity_{ax}"] for ax in range(ndim)),
        current=tuple(fields[f"current_{ax}"] for ax in range(ndim)),
        q_potential=fields["q_potential"],
        v_eff=fields["v_eff"],
        node_mask=node_mask_of(rho.values, eps),
        eps_node=eps,
        t=float(meta["_t"]),
        mass=float(meta["_mass"]),
    )
