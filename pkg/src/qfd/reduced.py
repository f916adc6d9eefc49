"""Reduced dynamics of particle 1: partial trace over the partner
coordinate, the reduced current, and trajectories integrated in the
reduced velocity field.

The diagonal derivative is always taken on the full matrix (second-order
stencil along the first argument) and then restricted to the diagonal;
differentiating the diagonal itself mixes both arguments and is wrong.
"""

from dataclasses import dataclass

import numpy as np

from .fields import HBAR, ComplexField, RealField, integration_weights
from .fieldio import load_rdm_matrix, save_rdm_matrix
from .grids import Grid1D
from .trajectories import (SnapshotVelocityField, explicit_trajectory_set,
                           integrate_trajectories, sample_trajectory_set)

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-8
PSD_TOL = 1e-8


@dataclass(frozen=True)
class ReducedDensityMatrix:
    """rho(x, x') on grid x grid for the kept coordinate, at one time."""

    grid: Grid1D
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = self.grid.n_points
        if self.values.shape != (n, n):
            raise ValueError(f"matrix shape {self.values.shape} != ({n}, {n})")

    def hermiticity_defect(self):
        return float(np.max(np.abs(self.values - self.values.conj().T)))

    def trace(self):
        return float(np.real(np.trace(self.values)) * self.grid.dx)

    def min_eigenvalue(self):
        """Smallest operator eigenvalue (matrix * dx has trace one)."""
        return float(np.linalg.eigvalsh(0.5 * (self.values + self.values.conj().T))[0]
                     * self.grid.dx)

    def validate(self):
        h = self.hermiticity_defect()
        if h > HERMITICITY_TOL:
            raise ValueError(f"hermiticity defect {h:.3e} > {HERMITICITY_TOL}")
        tr = self.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr} deviates from 1 beyond {TRACE_TOL}")
        lo = self.min_eigenvalue()
        if lo < -PSD_TOL:
            raise ValueError(f"smallest eigenvalue {lo:.3e} < -{PSD_TOL}")
        return self

    def diagonal_density(self):
        return RealField(self.grid, np.real(np.diag(self.values)).copy())

    def save(self, path):
        save_rdm_matrix(self.grid, self.values, self.t, path)

    @classmethod
    def load(cls, path):
        grid, values, t = load_rdm_matrix(path)
        return cls(grid, values, t)


@dataclass(frozen=True)
class PurityReport:
    purity: float
    t: float


def reduce_to_particle(psi: ComplexField, keep=0, t=0.0, validate=True):
    """Trace the two-particle density matrix over the partner coordinate:
    rho(x, x') = integral psi(x, y) conj(psi(x', y)) dy (keep=0), or the
    same with the roles of the axes swapped (keep=1)."""
    grid = psi.grid
    if grid.ndim != 2:
        raise ValueError("reduce_to_particle needs a two-particle wavefunction")
    if keep == 0:
        w = integration_weights(grid.gy)
        mat = (psi.values * w[None, :]) @ psi.values.conj().T
        kept = grid.gx
    elif keep == 1:
        w = integration_weights(grid.gx)
        mat = (psi.values.T * w[None, :]) @ psi.values.conj()
        kept = grid.gy
    else:
        raise ValueError("keep must be 0 or 1")
    rdm = ReducedDensityMatrix(kept, mat, t)
    return rdm.validate() if validate else rdm


def purity(rdm: ReducedDensityMatrix):
    """Tr[(rho dx)^2] in operator normalization: 1 for factorized states,
    1/k for a balanced rank-k entangled state."""
    p = float(np.sum(np.abs(rdm.values) ** 2) * rdm.grid.dx * rdm.grid.dx)
    return PurityReport(purity=p, t=rdm.t)


def _ddx_first_argument(rdm: ReducedDensityMatrix):
    """Second-order derivative of rho(x, x') along x (axis 0)."""
    m = rdm.values
    dx = rdm.grid.dx
    out = (np.roll(m, -1, axis=0) - np.roll(m, 1, axis=0)) / (2.0 * dx)
    if rdm.grid.boundary == "dirichlet":
        out[0] = (-3.0 * m[0] + 4.0 * m[1] - m[2]) / (2.0 * dx)
        out[-1] = (3.0 * m[-1] - 4.0 * m[-2] + m[-3]) / (2.0 * dx)
    return out


def reduced_current(rdm: ReducedDensityMatrix, mass=1.0):
    """j(x) = (hbar/m) Im[d/dx rho(x, x')] restricted to x' = x."""
    d = _ddx_first_argument(rdm)
    return RealField(rdm.grid, HBAR / mass * np.imag(np.diag(d)).copy())


def reduced_velocity(rdm: ReducedDensityMatrix, mass=1.0, eps_node=1e-12):
    """Trajectory velocity Im[d/dx rho]|diag / Re[rho]|diag; NaN where the
    diagonal falls below eps_node of its maximum."""
    d = np.imag(np.diag(_ddx_first_argument(rdm)))
    re = np.real(np.diag(rdm.values))
    mask = re < eps_node * np.max(re)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = HBAR / mass * d / re
    v = np.array(v)
    v[mask] = np.nan
    return RealField(rdm.grid, v)


def continuity_residual_rdm(rdm_before, rdm_mid, rdm_after, dt, mass=1.0):
    """d/dt of the diagonal density plus the divergence of the reduced
    current, central in time."""
    rho_b = rdm_before.diagonal_density().values
    rho_a = rdm_after.diagonal_density().values
    drho = (rho_a - rho_b) / (2.0 * dt)
    j = reduced_current(rdm_mid, mass).values
    dx = rdm_mid.grid.dx
    div = (np.roll(j, -1) - np.roll(j, 1)) / (2.0 * dx)
    if rdm_mid.grid.boundary == "dirichlet":
        div[0] = (-3.0 * j[0] + 4.0 * j[1] - j[2]) / (2.0 * dx)
        div[-1] = (3.0 * j[-1] - 4.0 * j[-2] + j[-3]) / (2.0 * dx)
    res = drho + div
    return RealField(rdm_mid.grid, res), float(np.max(np.abs(res)))


def reduced_trajectories(rdm_series, n=None, seed=None, traj_dt=None, store_stride=1,
                         mass=1.0, eps_node=1e-12, initial_positions=None):
    """Integrate trajectories in the reduced velocity field of a uniformly
    spaced series of reduced density matrices, sampling initial points from
    the diagonal density at the first time."""
    if len(rdm_series) < 2:
        raise ValueError("need at least two density-matrix snapshots")
    times = np.array([r.t for r in rdm_series])
    strides = np.diff(times)
    if np.max(np.abs(strides - strides[0])) > 1e-9:
        raise ValueError("density-matrix series must be uniformly spaced in time")
    grid = rdm_series[0].grid
    vels = [(reduced_velocity(r, mass, eps_node).values,) for r in rdm_series]
    vp = SnapshotVelocityField(grid, times, vels)
    t0, t1 = float(times[0]), float(times[-1])
    if traj_dt is None:
        traj_dt = float(strides[0])
    if initial_positions is not None:
        ts = explicit_trajectory_set(np.asarray(initial_positions), t0)
    else:
        rho0 = rdm_series[0].diagonal_density()
        ts = sample_trajectory_set(rho0, n, seed, t0)
    return integrate_trajectories(ts, vp, t0, t1, traj_dt, store_stride)
