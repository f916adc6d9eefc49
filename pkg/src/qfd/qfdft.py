"""Orbital-based density dynamics: N single-particle orbitals advanced
under a composed effective potential (external + Hartree + pluggable
exchange-correlation term), with density/current assembly, a two-form
kinetic functional, per-orbital diagnostics, and the self-consistent
stationary limit.

The stationary limit diagonalizes the same discrete Hamiltonian the
Crank-Nicolson propagator applies (3-point kinetic stencil, ghost-zero
Dirichlet walls), so converged orbitals are exact dynamical fixed points
of the propagation code path.
"""

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from .fields import HBAR, ComplexField, RealField, integration_weights
from .grids import DIRICHLET, PERIODIC, Grid1D
from .hydrodynamics import q_potential_from_density
from .manybody import SoftCoulomb
from .potentials import PotentialSpec
from .propagator import Propagator, PropagatorConfig


def _xc_none(rho, t):
    return np.zeros_like(rho)


def _xc_lda_exchange_1d(rho, t):
    # 1D LDA-style exchange model: v_x = -(3 rho / pi)^(1/3)
    return -np.cbrt(3.0 * np.maximum(rho, 0.0) / np.pi)


XC_REGISTRY = {
    "none": _xc_none,
    "lda_x_1d": _xc_lda_exchange_1d,
}


@dataclass(frozen=True)
class FunctionalConfig:
    """Effective-potential composition: the external term is always
    present; Hartree and xc terms are optional."""

    external: PotentialSpec
    hartree: Optional[SoftCoulomb] = None
    xc: str = "none"

    def __post_init__(self):
        if self.xc not in XC_REGISTRY:
            raise ValueError(f"unknown xc plug-in {self.xc!r}; "
                             f"known: {sorted(XC_REGISTRY)}")


@lru_cache(maxsize=8)
def _hartree_matrix(grid: Grid1D, lam, a):
    x = grid.x
    return SoftCoulomb(lam, a).pair_values(x, x) * integration_weights(grid)[None, :]


def effective_potential(rho: RealField, fc: FunctionalConfig, t=0.0):
    """Sum of the enabled terms evaluated on rho's grid at time t."""
    grid = rho.grid
    v = fc.external.evaluate(grid, t)
    if fc.hartree is not None:
        v = v + _hartree_matrix(grid, fc.hartree.lam, fc.hartree.a) @ rho.values
    v = v + XC_REGISTRY[fc.xc](rho.values, t)
    return RealField(grid, v)


@dataclass
class OrbitalSet:
    """N orbitals on one grid, occupation 1 each (spinless model)."""

    orbitals: list
    mass: float = 1.0

    def __post_init__(self):
        if not self.orbitals:
            raise ValueError("need at least one orbital")
        grid = self.orbitals[0].grid
        for k, orb in enumerate(self.orbitals):
            if orb.grid != grid:
                raise ValueError("all orbitals must share one grid")
            if abs(orb.norm_sq() - 1.0) > 1e-8:
                raise ValueError(f"orbital {k} is not normalized")

    @property
    def grid(self):
        return self.orbitals[0].grid

    @property
    def n(self):
        return len(self.orbitals)


def density(os: OrbitalSet):
    rho = np.zeros(os.grid.shape)
    for orb in os.orbitals:
        rho += np.abs(orb.values) ** 2
    return RealField(os.grid, rho)


def current(os: OrbitalSet):
    """j = sum_k (hbar/m) Im(phi_k* d phi_k/dx), central stencil."""
    grid = os.grid
    dx = grid.dx
    j = np.zeros(grid.shape)
    for orb in os.orbitals:
        vals = orb.values
        d = (np.roll(vals, -1) - np.roll(vals, 1)) / (2.0 * dx)
        if grid.boundary == DIRICHLET:
            d[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * dx)
            d[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * dx)
        j += HBAR / os.mass * np.imag(np.conj(vals) * d)
    return RealField(grid, j)


def orthonormality_drift(os: OrbitalSet):
    """Max |<phi_k|phi_l> - delta_kl| over the set."""
    dx = os.grid.dx
    worst = 0.0
    for k in range(os.n):
        for l in range(k, os.n):
            ip = np.sum(np.conj(os.orbitals[k].values) * os.orbitals[l].values) * dx
            target = 1.0 if k == l else 0.0
            worst = max(worst, abs(ip - target))
    return float(worst)


@dataclass
class KSRun:
    times: np.ndarray
    orbital_snapshots: list        # list over time of list of ComplexField
    diagnostics_rows: list         # (t, integral_rho, T_kin, ortho_drift)

    def orbital_set(self, k, mass=1.0):
        return OrbitalSet(self.orbital_snapshots[k], mass=mass)


def propagate_ks(os: OrbitalSet, fc: FunctionalConfig, cfg: PropagatorConfig,
                 snapshot_stride=1):
    """Advance all orbitals in lockstep; the effective potential is rebuilt
    every step from the instantaneous density (explicit coupling)."""
    grid = os.grid
    prop = Propagator(grid, PotentialSpec.free(), cfg)
    n_steps = int(round(cfg.t_final / cfg.dt))
    vals = [orb.values for orb in os.orbitals]
    times = []
    snaps = []
    rows = []

    def record(t, arrs):
        oset = OrbitalSet([ComplexField(grid, a.copy()) for a in arrs], mass=os.mass)
        times.append(t)
        snaps.append(oset.orbitals)
        rho_int = float(np.sum(integration_weights(grid) * density(oset).values))
        rows.append((t, rho_int, kinetic_two_forms_single(oset)[0],
                     orthonormality_drift(oset)))

    record(0.0, vals)
    for i in range(n_steps):
        t_mid = (i + 0.5) * cfg.dt
        rho = np.zeros(grid.shape)
        for a in vals:
            rho += np.abs(a) ** 2
        v = effective_potential(RealField(grid, rho), fc, t_mid).values
        vals = [prop.step_values_with(a, v) for a in vals]
        if (i + 1) % snapshot_stride == 0 or (i + 1) == n_steps:
            record((i + 1) * cfg.dt, vals)
    return KSRun(times=np.asarray(times), orbital_snapshots=snaps, diagnostics_rows=rows)


def _neighbor_links(vals, boundary):
    """(a, b) arrays of adjacent samples, including the wrap link on
    periodic grids or the two ghost-zero wall links on Dirichlet grids."""
    if boundary == PERIODIC:
        return vals, np.roll(vals, -1)
    zero = np.zeros(1, dtype=vals.dtype)
    a = np.concatenate([zero, vals])
    b = np.concatenate([vals, zero])
    return a, b


def kinetic_two_forms_single(os: OrbitalSet):
    """(gradient form, curvature/polar form) of the orbital kinetic energy
    at one time.

    gradient form: (hbar^2/2m) sum_links |phi_b - phi_a|^2 / dx
    curvature form: -(hbar^2/2m) sum_i R_i (lap R)_i dx plus the gauge-safe
    phase-difference term 2(R_a R_b - Re(conj(phi_a) phi_b))/dx per link.
    The two are related by summation by parts and agree identically on the
    grid; each is a second-order discretization of its continuum form.
    """
    grid = os.grid
    dx = grid.dx
    c = HBAR * HBAR / (2.0 * os.mass)
    t_grad = 0.0
    t_curv = 0.0
    for orb in os.orbitals:
        vals = orb.values
        a, b = _neighbor_links(vals, grid.boundary)
        t_grad += c * float(np.sum(np.abs(b - a) ** 2)) / dx
        amp = np.abs(vals)
        aa, ab = _neighbor_links(amp, grid.boundary)
        amp_part = float(np.sum((ab - aa) ** 2)) / dx
        phase_part = 2.0 * float(np.sum(np.abs(a) * np.abs(b) - np.real(np.conj(a) * b))) / dx
        t_curv += c * (amp_part + phase_part)
    return t_grad, t_curv


@dataclass(frozen=True)
class KineticReport:
    gradient_form: float
    curvature_form: float
    times: np.ndarray
    series_gradient: np.ndarray
    series_curvature: np.ndarray

    @property
    def form_disagreement(self):
        return abs(self.gradient_form - self.curvature_form)


def kinetic_functional(run: KSRun, mass=1.0):
    """Time-window average of both kinetic forms over a run's snapshots
    (trapezoid in time)."""
    if len(run.times) < 2:
        raise ValueError("kinetic functional needs a window of at least 2 snapshots")
    grads, curvs = [], []
    for snap in run.orbital_snapshots:
        g, c = kinetic_two_forms_single(OrbitalSet(snap, mass=mass))
        grads.append(g)
        curvs.append(c)
    t = run.times
    span = t[-1] - t[0]
    g_avg = float(np.trapezoid(grads, t) / span)
    c_avg = float(np.trapezoid(curvs, t) / span)
    return KineticReport(gradient_form=g_avg, curvature_form=c_avg, times=t,
                         series_gradient=np.asarray(grads), series_curvature=np.asarray(curvs))


@dataclass(frozen=True)
class OrbitalDiagnostic:
    """The pointwise multiplier field eps_k = Q_k + v_eff and its spread.
    A vanishing spread signals a stationary orbital."""

    eps_field: RealField
    eps_mean: float
    eps_std: float
    mask_count: int


def orbital_diagnostics(os: OrbitalSet, fc: FunctionalConfig, t=0.0, eps_node=1e-12):
    v_eff = effective_potential(density(os), fc, t).values
    out = []
    for orb in os.orbitals:
        q = q_potential_from_density(orb.density(), mass=os.mass, eps_node=eps_node)
        eps = RealField(os.grid, q.values + v_eff)
        good = np.isfinite(eps.values)
        vals = eps.values[good]
        out.append(OrbitalDiagnostic(
            eps_field=eps,
            eps_mean=float(np.mean(vals)),
            eps_std=float(np.std(vals)),
            mask_count=int(np.sum(~good)),
        ))
    return out


def lowest_eigenstates(grid: Grid1D, v_values, mass, k):
    """Lowest k eigenpairs of the discrete Hamiltonian
    H = -(hbar^2/2m) lap_3pt + diag(v), with the same stencil and boundary
    convention as the Crank-Nicolson propagator. Orbitals are normalized to
    sum |phi|^2 dx = 1 with a deterministic sign convention."""
    n = grid.n_points
    off = -HBAR * HBAR / (2.0 * mass * grid.dx ** 2)
    diag = HBAR * HBAR / (mass * grid.dx ** 2) + v_values
    if grid.boundary == DIRICHLET:
        w, vecs = eigh_tridiagonal(diag, np.full(n - 1, off),
                                   select="i", select_range=(0, k - 1))
    else:
        h = np.diag(diag) + np.diag(np.full(n - 1, off), 1) + np.diag(np.full(n - 1, off), -1)
        h[0, -1] += off
        h[-1, 0] += off
        w, vecs = eigh(h, subset_by_index=(0, k - 1))
    orbitals = []
    for i in range(k):
        u = vecs[:, i] / np.sqrt(np.sum(vecs[:, i] ** 2) * grid.dx)
        peak = int(np.argmax(np.abs(u)))
        if u[peak] < 0:
            u = -u
        orbitals.append(ComplexField(grid, u.astype(np.complex128)))
    return np.asarray(w[:k], dtype=float), orbitals


class SCFConvergenceError(RuntimeError):
    def __init__(self, history):
        self.history = history
        super().__init__(f"self-consistent loop did not converge; last residual "
                         f"{history[-1]:.3e} after {len(history)} iterations")


@dataclass
class StationaryResult:
    orbitals: OrbitalSet
    eigenvalues: np.ndarray
    residual: float
    history: list


def stationary_limit(os: OrbitalSet, fc: FunctionalConfig, mixing=0.3,
                     tol=1e-8, max_iter=500):
    """Self-consistent ground configuration: diagonalize H[v_eff(rho)],
    occupy the lowest N, mix densities, repeat until the density is a fixed
    point. The converged orbitals have identically vanishing phase gradients
    and are stationary under propagate_ks."""
    grid = os.grid
    n_orb = os.n
    rho = density(os).values
    history = []
    for _ in range(max_iter):
        v = effective_potential(RealField(grid, rho), fc, 0.0).values
        w, orbitals = lowest_eigenstates(grid, v, os.mass, n_orb)
        rho_out = density(OrbitalSet(orbitals, mass=os.mass)).values
        residual = float(np.max(np.abs(rho_out - rho)))
        history.append(residual)
        if residual <= tol:
            return StationaryResult(OrbitalSet(orbitals, mass=os.mass), w, residual, history)
        rho = (1.0 - mixing) * rho + mixing * rho_out
    raise SCFConvergenceError(history)


def write_density_current_csv(run: KSRun, path, mass=1.0):
    """Per-snapshot grid profiles: t, index, x, rho, j."""
    with open(path, "w", newline="") as fh:
        fh.write("t,index,x,rho,j\n")
        for k, t in enumerate(run.times):
            oset = run.orbital_set(k, mass=mass)
            rho = density(oset).values
            j = current(oset).values
            x = oset.grid.x
            for i in range(oset.grid.n_points):
                fh.write(f"{float(t)!r},{i},{float(x[i])!r},{float(rho[i])!r},{float(j[i])!r}\n")


def write_diagnostics_csv(run: KSRun, fc: FunctionalConfig, path, mass=1.0,
                          eps_node=1e-12):
    """Run diagnostics: t, integral of rho, kinetic energy, per-orbital
    std(eps_k), orthonormality drift."""
    n_orb = len(run.orbital_snapshots[0])
    with open(path, "w", newline="") as fh:
        cols = ",".join(f"eps_std_{k}" for k in range(n_orb))
        fh.write(f"t,integral_rho,t_kinetic,{cols},ortho_drift\n")
        for k, t in enumerate(run.times):
            oset = run.orbital_set(k, mass=mass)
            rho_int = float(np.sum(integration_weights(oset.grid) * density(oset).values))
            t_kin = kinetic_two_forms_single(oset)[0]
            diags = orbital_diagnostics(oset, fc, t, eps_node)
            stds = ",".join(repr(d.eps_std) for d in diags)
            fh.write(f"{float(t)!r},{rho_int!r},{t_kin!r},{stds},{orthonormality_drift(oset)!r}\n")
