"""Trajectory ensembles guided by the wavefunction's velocity field.

Initial positions are drawn from the initial density (inverse-CDF sampling,
deterministic given the seed); positions then follow the velocity field by
classic RK4 with cubic (Catmull-Rom) spatial interpolation and linear
interpolation in time between stored velocity snapshots. Integrating from
snapshots decouples trajectory runs from propagation, so ensembles can be
recomputed post hoc from stored fields.

Trajectories that leave a Dirichlet grid are frozen and flagged; steps that
touch a masked node region are retried with up to 8 halvings of the step,
then frozen and flagged (a node flag indicates numerical breakdown, not
physics: trajectories cannot cross nodes).
"""

import csv
import os
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .fields import RealField, integrate, integration_weights
from .grids import DIRICHLET, PERIODIC
from .hydrodynamics import HydroFields, decompose

INVERSE_CDF = "inverse_cdf"
UNIFORM_GRID = "uniform_grid"
EXPLICIT_LIST = "explicit_list"

FLAG_OK = ""
FLAG_LEFT_GRID = "left_grid"
FLAG_NODE_REGION = "node_region"

_MAX_HALVINGS = 8


@dataclass
class TrajectorySet:
    """Ensemble time series: positions[k, i] is trajectory i at times[k]."""

    times: np.ndarray                 # (n_times,)
    positions: np.ndarray             # (n_times, n_traj, ndim)
    seed: Optional[int]
    sampling: str
    flags: list

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3:
            raise ValueError("positions must have shape (n_times, n_traj, ndim)")
        if self.positions.shape[0] != self.times.shape[0]:
            raise ValueError("positions and times disagree on the number of stored times")

    @property
    def n_traj(self):
        return self.positions.shape[1]

    @property
    def ndim(self):
        return self.positions.shape[2]

    def at_time(self, t, tol=1e-9):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol:
            raise ValueError(f"no stored time near t={t}; nearest is {self.times[k]}")
        return self.positions[k]


def sample_initial(rho0: RealField, n, seed, sampling=INVERSE_CDF):
    """n initial positions distributed according to rho0 (shape (n, ndim)).

    inverse_cdf: 1D by CDF inversion; 2D by the marginal in the first
    coordinate followed by the conditional in the second.
    uniform_grid: deterministic evenly spaced fan across the grid extent
    (no distribution claim).
    """
    total = integrate(rho0)
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"rho0 integrates to {total}, expected 1 within 1e-6")
    grid = rho0.grid
    if sampling == UNIFORM_GRID:
        if grid.ndim == 1:
            xs = grid.x_min + (np.arange(n) + 0.5) * (grid.length / n)
            return xs[:, None]
        side = int(np.ceil(np.sqrt(n)))
        xs = grid.gx.x_min + (np.arange(side) + 0.5) * (grid.gx.length / side)
        ys = grid.gy.x_min + (np.arange(side) + 0.5) * (grid.gy.length / side)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel()[:n], Y.ravel()[:n]])
    if sampling != INVERSE_CDF:
        raise ValueError(f"unknown sampling {sampling!r}")

    rng = np.random.Generator(np.random.Philox(seed))
    if grid.ndim == 1:
        u = rng.random(n)
        return _inverse_cdf_1d(grid.x, rho0.values, u)[:, None]

    # 2D: marginal along axis 0, then the conditional row at the sampled x
    gx, gy = grid.gx, grid.gy
    wy = integration_weights(gy)
    marginal = rho0.values @ wy
    u1 = rng.random(n)
    u2 = rng.random(n)
    xs = _inverse_cdf_1d(gx.x, marginal / np.trapezoid(marginal, gx.x), u1)
    fx = np.clip((xs - gx.x_min) / gx.dx, 0.0, gx.n_points - 1 - 1e-12)
    ix = np.floor(fx).astype(int)
    frac = (fx - ix)[:, None]
    rows = (1.0 - frac) * rho0.values[ix] + frac * rho0.values[np.minimum(ix + 1, gx.n_points - 1)]
    ys = np.empty(n)
    for i in range(n):
        ys[i] = _inverse_cdf_1d(gy.x, rows[i], u2[i:i + 1])[0]
    return np.column_stack([xs, ys])


def _inverse_cdf_1d(x, density, u):
    cdf = cumulative_trapezoid(np.maximum(density, 0.0), x, initial=0.0)
    if cdf[-1] <= 0:
        raise ValueError("density is identically zero")
    cdf = cdf / cdf[-1]
    return np.interp(u, cdf, x)


class SnapshotVelocityField:
    """Velocity snapshots with linear interpolation in time and Catmull-Rom
    interpolation in space. Shareable read-only between workers."""

    def __init__(self, grid, times, velocities):
        """velocities: sequence over time of per-axis value arrays
        (tuple of ndim arrays, NaN inside node masks)."""
        self.grid = grid
        self.times = np.asarray(times, dtype=np.float64)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        self.velocities = [tuple(np.asarray(v, dtype=np.float64) for v in vs)
                           for vs in velocities]

    @classmethod
    def from_hydro(cls, hydro_list: Sequence[HydroFields]):
        grid = hydro_list[0].grid
        times = [h.t for h in hydro_list]
        vels = [tuple(v.values for v in h.velocity) for h in hydro_list]
        return cls(grid, times, vels)

    @classmethod
    def from_wavefunctions(cls, times, psis, mass=1.0, eps_node=1e-12):
        hydro = [decompose(p, t=t, mass=mass, eps_node=eps_node)
                 for t, p in zip(times, psis)]
        return cls.from_hydro(hydro)

    def _axis(self, ax):
        g = self.grid if self.grid.ndim == 1 else self.grid.axis_grid(ax)
        return g.x_min, g.dx, g.n_points, g.boundary

    def in_domain(self, pos):
        """False where a position is outside a Dirichlet axis extent."""
        ok = np.ones(pos.shape[0], dtype=bool)
        for ax in range(pos.shape[1]):
            x0, dx, n, boundary = self._axis(ax)
            if boundary == DIRICHLET:
                ok &= (pos[:, ax] >= x0) & (pos[:, ax] <= x0 + (n - 1) * dx)
        return ok

    def _stencil(self, ax, q):
        """4-point Catmull-Rom stencil indices (m, 4) and weights (m, 4).
        Non-finite query points produce NaN weights (and NaN output)."""
        x0, dx, n, boundary = self._axis(ax)
        s = (q - x0) / dx
        finite = np.isfinite(s)
        s = np.where(finite, s, 0.0)
        if boundary == PERIODIC:
            s = np.mod(s, n)
        i = np.floor(s).astype(int)
        u = s - i
        idx = i[:, None] + np.arange(-1, 3)[None, :]
        if boundary == PERIODIC:
            idx = np.mod(idx, n)
        else:
            idx = np.clip(idx, 0, n - 1)
        u = np.where(finite, u, np.nan)
        u2 = u * u
        u3 = u2 * u
        w = 0.5 * np.stack([
            -u + 2.0 * u2 - u3,
            2.0 - 5.0 * u2 + 3.0 * u3,
            u + 4.0 * u2 - 3.0 * u3,
            -u2 + u3,
        ], axis=1)
        return idx, w

    def _interp_space(self, values, pos):
        if pos.shape[1] == 1:
            idx, w = self._stencil(0, pos[:, 0])
            return np.sum(values[idx] * w, axis=1)
        ix, wx = self._stencil(0, pos[:, 0])
        iy, wy = self._stencil(1, pos[:, 1])
        patch = values[ix[:, :, None], iy[:, None, :]]      # (m, 4, 4)
        along_y = np.einsum("mij,mj->mi", patch, wy)
        return np.einsum("mi,mi->m", along_y, wx)

    def __call__(self, pos, t):
        """Velocity at positions (m, ndim) and time t, linear in time."""
        times = self.times
        t = float(t)
        if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
            raise ValueError(f"t={t} outside snapshot range [{times[0]}, {times[-1]}]")
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(max(k, 0), len(times) - 2) if len(times) > 1 else 0
        out = np.empty_like(pos)
        if len(times) == 1:
            for ax in range(pos.shape[1]):
                out[:, ax] = self._interp_space(self.velocities[0][ax], pos)
            return out
        theta = (t - times[k]) / (times[k + 1] - times[k])
        for ax in range(pos.shape[1]):
            v0 = self._interp_space(self.velocities[k][ax], pos)
            v1 = self._interp_space(self.velocities[k + 1][ax], pos)
            out[:, ax] = (1.0 - theta) * v0 + theta * v1
        return out


def sample_trajectory_set(rho0, n, seed, t0=0.0, sampling=INVERSE_CDF):
    pos0 = sample_initial(rho0, n, seed, sampling)
    return TrajectorySet(times=np.array([t0]), positions=pos0[None, :, :],
                         seed=seed, sampling=sampling, flags=[FLAG_OK] * n)


def explicit_trajectory_set(positions, t0=0.0):
    """A flat array is an ensemble of 1D starting points; 2D ensembles pass
    an explicit (n, 2) array."""
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim == 1:
        pos = pos[:, None]
    if pos.ndim != 2 or pos.shape[1] not in (1, 2):
        raise ValueError(f"positions must be (n,), (n, 1) or (n, 2); got {pos.shape}")
    return TrajectorySet(times=np.array([t0]), positions=pos[None, :, :],
                         seed=None, sampling=EXPLICIT_LIST,
                         flags=[FLAG_OK] * pos.shape[0])


def _rk4(vp, pos, t, dt):
    k1 = vp(pos, t)
    k2 = vp(pos + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = vp(pos + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = vp(pos + dt * k3, t + dt)
    return pos + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_trajectories(ts: TrajectorySet, velocity_provider, t0, t1, dt,
                           store_stride=1):
    """Advance all trajectories from t0 to t1, appending stored rows every
    `store_stride` steps. Returns a new TrajectorySet."""
    if abs(ts.times[-1] - t0) > 1e-9:
        raise ValueError(f"trajectory set ends at t={ts.times[-1]}, cannot start at {t0}")
    n_steps = int(round((t1 - t0) / dt))
    if n_steps <= 0 or abs(n_steps * dt - (t1 - t0)) > 1e-9 * max(abs(t1 - t0), dt):
        raise ValueError(f"(t1 - t0)={t1 - t0} is not a positive integer multiple of dt={dt}")

    pos = ts.positions[-1].copy()
    flags = list(ts.flags)
    active = np.array([f == FLAG_OK for f in flags])
    new_times = list(ts.times)
    new_rows = []

    for step in range(n_steps):
        t = t0 + step * dt
        if np.any(active):
            idx_active = np.flatnonzero(active)
            moved = _rk4(velocity_provider, pos[active], t, dt)
            bad = ~np.isfinite(moved).all(axis=1)
            for local in np.flatnonzero(bad):
                gi = idx_active[local]
                ok, p = _retry_halved(velocity_provider, pos[gi], t, dt)
                if ok:
                    moved[local] = p
                    bad[local] = False
                else:
                    flags[gi] = FLAG_NODE_REGION
                    active[gi] = False
                    moved[local] = pos[gi]
            inside = velocity_provider.in_domain(moved)
            for local in np.flatnonzero(~inside & ~bad):
                gi = idx_active[local]
                flags[gi] = FLAG_LEFT_GRID
                active[gi] = False
                moved[local] = pos[gi]
            pos[idx_active] = moved
        if (step + 1) % store_stride == 0 or (step + 1) == n_steps:
            new_times.append(t0 + (step + 1) * dt)
            new_rows.append(pos.copy())

    positions = np.concatenate([ts.positions, np.asarray(new_rows)], axis=0) \
        if new_rows else ts.positions
    return TrajectorySet(times=np.asarray(new_times), positions=positions,
                         seed=ts.seed, sampling=ts.sampling, flags=flags)


def _retry_halved(vp, p, t, dt):
    """Re-integrate one step with successively halved substeps."""
    for halvings in range(1, _MAX_HALVINGS + 1):
        sub = dt / (2 ** halvings)
        q = p[None, :].copy()
        ok = True
        for j in range(2 ** halvings):
            q_new = _rk4(vp, q, t + j * sub, sub)
            if not np.all(np.isfinite(q_new)):
                ok = False
                break
            q = q_new
        if ok:
            return True, q[0]
    return False, p


@dataclass(frozen=True)
class EquivarianceReport:
    n_traj: int
    ks_stat: float
    ks_bound_99: float
    chi2: float
    dof: int

    @property
    def ks_passed(self):
        return self.ks_stat <= self.ks_bound_99


def equivariance_check(ts: TrajectorySet, rho_t: RealField, t, n_bins=20):
    """Compare the ensemble's empirical distribution at time t against a
    density on the same axis (1D). Kolmogorov-Smirnov statistic with the
    99% bound 1.63/sqrt(n), plus a chi^2 over equal-probability bins."""
    if ts.ndim != 1:
        raise ValueError("equivariance_check handles 1D ensembles")
    n = ts.n_traj
    if n < 1000:
        raise ValueError(f"need at least 1000 trajectories, got {n}")
    xs = np.sort(ts.at_time(t)[:, 0])
    grid = rho_t.grid
    cdf = cumulative_trapezoid(np.maximum(rho_t.values, 0.0), grid.x, initial=0.0)
    cdf = cdf / cdf[-1]
    f = np.interp(xs, grid.x, cdf)
    i = np.arange(1, n + 1)
    ks = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))

    edges = np.interp(np.linspace(0.0, 1.0, n_bins + 1), cdf, grid.x)
    observed, _ = np.histogram(xs, bins=edges)
    expected = n / n_bins
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    return EquivarianceReport(n_traj=n, ks_stat=ks, ks_bound_99=1.63 / np.sqrt(n),
                              chi2=chi2, dof=n_bins - 1)


def non_crossing_check(ts: TrajectorySet):
    """1D ensembles: initial ordering must persist at every stored time.
    Returns (ok, None) or (False, (time_index, left_traj, right_traj))."""
    if ts.ndim != 1:
        raise ValueError("non_crossing_check handles 1D ensembles")
    order = np.argsort(ts.positions[0, :, 0], kind="stable")
    for k in range(ts.positions.shape[0]):
        row = ts.positions[k, order, 0]
        bad = np.flatnonzero(np.diff(row) < -1e-12)
        if bad.size:
            j = int(bad[0])
            return False, (k, int(order[j]), int(order[j + 1]))
    return True, None


def save_trajectories_csv(ts: TrajectorySet, path, manifest_path=None):
    with open(path, "w", newline="") as fh:
        fh.write("traj_id,t,x" + (",y" if ts.ndim == 2 else "") + "\n")
        for i in range(ts.n_traj):
            for k, t in enumerate(ts.times):
                coords = ",".join(repr(float(c)) for c in ts.positions[k, i])
                fh.write(f"{i},{float(t)!r},{coords}\n")
    if manifest_path:
        with open(manifest_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["key", "value"])
            w.writerow(["n_traj", ts.n_traj])
            w.writerow(["seed", "" if ts.seed is None else ts.seed])
            w.writerow(["sampling", ts.sampling])
            w.writerow(["n_times", len(ts.times)])
            for i, flag in enumerate(ts.flags):
                if flag != FLAG_OK:
                    w.writerow([f"flag_{i}", flag])


def load_trajectories_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        ndim = len(header) - 2
        data = {}
        for line in fh:
            parts = line.strip().split(",")
            if not parts[0]:
                continue
            i = int(parts[0])
            data.setdefault(i, []).append([float(p) for p in parts[1:]])
    n_traj = len(data)
    rows = data[0]
    times = np.array([r[0] for r in rows])
    positions = np.zeros((len(times), n_traj, ndim))
    for i, rows_i in data.items():
        for k, r in enumerate(rows_i):
            positions[k, i] = r[1:]
    return TrajectorySet(times=times, positions=positions, seed=None,
                         sampling=EXPLICIT_LIST, flags=[FLAG_OK] * n_traj)
