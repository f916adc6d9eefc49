"""Two interacting particles in 1D: full entangled dynamics on the 2D
configuration grid versus the Hartree (mean-field product) factorization,
with per-particle trajectory extraction for both routes.

Axis 0 of the configuration grid is particle 1, axis 1 is particle 2.
The full-route quantum potential couples both coordinates and is
nonseparable unless the state factorizes; the comparison machinery here
measures exactly that gap.
"""

import csv
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence, Tuple

import numpy as np

from .fields import HBAR, ComplexField, RealField, integration_weights
from .grids import Grid1D, Grid2D
from .hydrodynamics import decompose, q_potential_from_density
from .potentials import PotentialSpec
from .propagator import Propagator, PropagatorConfig
from .trajectories import (EXPLICIT_LIST, SnapshotVelocityField, TrajectorySet,
                           explicit_trajectory_set, integrate_trajectories,
                           sample_trajectory_set)

SYM_NONE = "none"
SYM_SYMMETRIC = "symmetric"
SYM_ANTISYMMETRIC = "antisymmetric"


@dataclass(frozen=True)
class SoftCoulomb:
    """Regularized pair repulsion lam / sqrt(r^2 + a^2); the standard kernel
    for 1D model atoms (bare 1/r is singular on a grid)."""

    lam: float = 1.0
    a: float = 1.0

    def pair_values(self, x1, x2):
        d = np.subtract.outer(np.asarray(x1), np.asarray(x2)) if np.ndim(x1) == 1 else x1 - x2
        return self.lam / np.sqrt(d * d + self.a * self.a)


def symmetry_defect(psi: ComplexField, sign):
    return float(np.max(np.abs(psi.values - sign * psi.values.T)))


def symmetrize(psi: ComplexField, symmetry):
    """Project onto the (anti)symmetric subspace and renormalize."""
    sign = 1.0 if symmetry == SYM_SYMMETRIC else -1.0
    vals = 0.5 * (psi.values + sign * psi.values.T)
    return ComplexField(psi.grid, vals).normalize()


@dataclass
class TwoBodyState:
    """Wavefunction on the (r1, r2) configuration grid with its pair
    interaction and per-particle external potentials."""

    psi: ComplexField
    interaction: Optional[SoftCoulomb]
    external: Tuple[PotentialSpec, PotentialSpec]
    symmetry: str = SYM_NONE
    mass: float = 1.0

    def __post_init__(self):
        if self.psi.grid.ndim != 2:
            raise ValueError("TwoBodyState needs a 2D configuration grid")
        if abs(self.psi.norm_sq() - 1.0) > 1e-10:
            raise ValueError("two-body wavefunction must be normalized")
        if self.symmetry != SYM_NONE:
            sign = 1.0 if self.symmetry == SYM_SYMMETRIC else -1.0
            defect = symmetry_defect(self.psi, sign)
            if defect > 1e-10:
                raise ValueError(f"symmetry tag {self.symmetry!r} violated: defect {defect:.3e}")

    @property
    def grid(self):
        return self.psi.grid


@dataclass
class HartreeState:
    """Product-factorized pair of orbitals sharing the external potentials
    and interaction of the full problem."""

    orbital1: ComplexField
    orbital2: ComplexField
    interaction: Optional[SoftCoulomb]
    external: Tuple[PotentialSpec, PotentialSpec]
    mass: float = 1.0

    def __post_init__(self):
        for k, orb in ((1, self.orbital1), (2, self.orbital2)):
            if abs(orb.norm_sq() - 1.0) > 1e-10:
                raise ValueError(f"orbital {k} must be normalized")


def configuration_potential(grid2d: Grid2D, external, interaction, t=0.0):
    """V(r1, r2) = V1(r1) + V2(r2) + V_int(r1, r2) evaluated on the grid."""
    v1 = external[0].evaluate(grid2d.gx, t)
    v2 = external[1].evaluate(grid2d.gy, t)
    v = v1[:, None] + v2[None, :]
    if interaction is not None:
        v = v + interaction.pair_values(grid2d.gx.x, grid2d.gy.x)
    return v


@dataclass
class TwoBodyRun:
    times: np.ndarray
    psis: list                      # ComplexField snapshots on the 2D grid
    state: TwoBodyState


@dataclass
class HartreeRun:
    times: np.ndarray
    orbitals1: list
    orbitals2: list
    state: HartreeState


def propagate_full(state: TwoBodyState, cfg: PropagatorConfig, snapshot_stride=1):
    """Propagate the entangled wavefunction on the configuration grid."""
    for ext in state.external:
        if not ext.is_static:
            raise ValueError("two-body externals must be static (compose envelopes upstream)")
    table = RealField(state.grid, configuration_potential(state.grid, state.external,
                                                          state.interaction))
    potential = PotentialSpec.custom_table(table)
    prop = Propagator(state.grid, potential, cfg)
    n_steps = int(round(cfg.t_final / cfg.dt))
    times = [0.0]
    psis = [state.psi]
    psi = state.psi.values
    for i in range(n_steps):
        psi = prop.step_values(psi, i * cfg.dt)
        if (i + 1) % snapshot_stride == 0 or (i + 1) == n_steps:
            times.append((i + 1) * cfg.dt)
            psis.append(ComplexField(state.grid, psi.copy()))
    return TwoBodyRun(times=np.asarray(times), psis=psis, state=state)


def q_full(state: TwoBodyState, eps_node=1e-12):
    """Configuration-space quantum potential
    -(hbar^2/2m) [lap_1 + lap_2] sqrt(rho) / sqrt(rho), masked at nodes."""
    return q_potential_from_density(state.psi.density(), mass=state.mass, eps_node=eps_node)


def mean_field(kernel, grid_other: Grid1D, rho_other, grid_self: Grid1D):
    """V_mf(r) = integral |psi_other(r')|^2 k(r - r') dr'."""
    K = kernel.pair_values(grid_self.x, grid_other.x)
    return K @ (integration_weights(grid_other) * rho_other)


def propagate_hartree(state: HartreeState, cfg: PropagatorConfig, snapshot_stride=1,
                      predictor_corrector=False):
    """Evolve each orbital in its external potential plus the partner's
    mean field, recomputed every step from the partner density at the start
    of the step (optionally refined by one predictor-corrector pass)."""
    g1, g2 = state.orbital1.grid, state.orbital2.grid
    prop1 = Propagator(g1, PotentialSpec.free(), cfg)
    prop2 = Propagator(g2, PotentialSpec.free(), cfg)
    n_steps = int(round(cfg.t_final / cfg.dt))
    p1, p2 = state.orbital1.values, state.orbital2.values
    times = [0.0]
    orbs1 = [state.orbital1]
    orbs2 = [state.orbital2]

    def potentials(a1, a2, t_mid):
        v1 = state.external[0].evaluate(g1, t_mid)
        v2 = state.external[1].evaluate(g2, t_mid)
        if state.interaction is not None:
            v1 = v1 + mean_field(state.interaction, g2, np.abs(a2) ** 2, g1)
            v2 = v2 + mean_field(state.interaction, g1, np.abs(a1) ** 2, g2)
        return v1, v2

    for i in range(n_steps):
        t_mid = (i + 0.5) * cfg.dt
        v1, v2 = potentials(p1, p2, t_mid)
        q1 = prop1.step_values_with(p1, v1)
        q2 = prop2.step_values_with(p2, v2)
        if predictor_corrector and state.interaction is not None:
            h1 = 0.5 * (np.abs(p1) ** 2 + np.abs(q1) ** 2)
            h2 = 0.5 * (np.abs(p2) ** 2 + np.abs(q2) ** 2)
            v1 = state.external[0].evaluate(g1, t_mid) + mean_field(state.interaction, g2, h2, g1)
            v2 = state.external[1].evaluate(g2, t_mid) + mean_field(state.interaction, g1, h1, g2)
            q1 = prop1.step_values_with(p1, v1)
            q2 = prop2.step_values_with(p2, v2)
        p1, p2 = q1, q2
        if (i + 1) % snapshot_stride == 0 or (i + 1) == n_steps:
            times.append((i + 1) * cfg.dt)
            orbs1.append(ComplexField(g1, p1.copy()))
            orbs2.append(ComplexField(g2, p2.copy()))
    return HartreeRun(times=np.asarray(times), orbitals1=orbs1, orbitals2=orbs2, state=state)


def _full_velocity_provider(run: TwoBodyRun, eps_node=1e-12):
    return SnapshotVelocityField.from_wavefunctions(run.times, run.psis,
                                                    mass=run.state.mass, eps_node=eps_node)


def per_particle_trajectories(run, n=None, seed=None, traj_dt=None, store_stride=1,
                              initial_positions=None, eps_node=1e-12):
    """Bohmian trajectories per particle.

    Full run: joint (r1, r2) trajectories integrated in the configuration
    velocity field, then projected per particle. Hartree run: independent
    1D integrations per orbital. Returns (TrajectorySet, TrajectorySet).
    Initial points come from the t=0 density unless given explicitly.
    """
    t0, t1 = float(run.times[0]), float(run.times[-1])
    if traj_dt is None:
        traj_dt = (run.times[1] - run.times[0]) if len(run.times) > 1 else (t1 - t0)

    if isinstance(run, TwoBodyRun):
        vp = _full_velocity_provider(run, eps_node)
        if initial_positions is not None:
            ts = explicit_trajectory_set(np.asarray(initial_positions), t0)
        else:
            ts = sample_trajectory_set(run.psis[0].density(), n, seed, t0)
        joint = integrate_trajectories(ts, vp, t0, t1, traj_dt, store_stride)
        ts1 = TrajectorySet(joint.times, joint.positions[:, :, 0:1], joint.seed,
                            joint.sampling, list(joint.flags))
        ts2 = TrajectorySet(joint.times, joint.positions[:, :, 1:2], joint.seed,
                            joint.sampling, list(joint.flags))
        return ts1, ts2

    if isinstance(run, HartreeRun):
        out = []
        for which, orbs in ((0, run.orbitals1), (1, run.orbitals2)):
            vp = SnapshotVelocityField.from_wavefunctions(
                run.times, orbs, mass=run.state.mass, eps_node=eps_node)
            if initial_positions is not None:
                ts = explicit_trajectory_set(np.asarray(initial_positions)[:, which], t0)
            else:
                child_seed = np.random.SeedSequence(seed).spawn(2)[which]
                ts = sample_trajectory_set(orbs[0].density(), n,
                                           child_seed.generate_state(1)[0].item(), t0)
            out.append(integrate_trajectories(ts, vp, t0, t1, traj_dt, store_stride))
        return tuple(out)
    raise TypeError(f"unsupported run type {type(run).__name__}")


def marginal_densities(psi: ComplexField):
    """(rho1(r1), rho2(r2)) by integrating the joint density over the
    partner coordinate."""
    grid = psi.grid
    rho = np.abs(psi.values) ** 2
    w1 = integration_weights(grid.gx)
    w2 = integration_weights(grid.gy)
    return (RealField(grid.gx, rho @ w2), RealField(grid.gy, w1 @ rho))


def correlation_witness(psi: ComplexField, mass=1.0, eps_node=1e-12):
    """Max |Q_full - (Q1 + Q2)| over points unmasked in both computations:
    zero (to discretization noise) iff the quantum potential separates."""
    q2d = q_potential_from_density(psi.density(), mass=mass, eps_node=eps_node)
    rho1, rho2 = marginal_densities(psi)
    q1 = q_potential_from_density(rho1, mass=mass, eps_node=eps_node)
    q2 = q_potential_from_density(rho2, mass=mass, eps_node=eps_node)
    split = q1.values[:, None] + q2.values[None, :]
    diff = np.abs(q2d.values - split)
    valid = np.isfinite(diff)
    return float(np.nanmax(np.where(valid, diff, 0.0)))


def compare_runs_csv(full_run: TwoBodyRun, hartree_run: HartreeRun, path):
    """Per-snapshot comparison: (t, full_vs_hartree_density_L2,
    correlation_witness_max, symmetry_defect)."""
    if len(full_run.times) != len(hartree_run.times) or \
            np.max(np.abs(full_run.times - hartree_run.times)) > 1e-9:
        raise ValueError("full and Hartree runs must share snapshot times")
    grid = full_run.state.grid
    sign = {SYM_SYMMETRIC: 1.0, SYM_ANTISYMMETRIC: -1.0}.get(full_run.state.symmetry)
    cell = np.sqrt(grid.cell_volume)
    with open(path, "w", newline="") as fh:
        fh.write("t,full_vs_hartree_density_L2,correlation_witness_max,symmetry_defect\n")
        for t, psi, o1, o2 in zip(full_run.times, full_run.psis,
                                  hartree_run.orbitals1, hartree_run.orbitals2):
            rho_full = np.abs(psi.values) ** 2
            rho_h = np.outer(np.abs(o1.values) ** 2, np.abs(o2.values) ** 2)
            l2 = float(np.linalg.norm(rho_full - rho_h) * cell)
            witness = correlation_witness(psi, mass=full_run.state.mass)
            defect = symmetry_defect(psi, sign) if sign is not None else 0.0
            fh.write(f"{float(t)!r},{l2!r},{witness!r},{float(defect)!r}\n")
    return path
