"""Time evolution of a ComplexField under the time-dependent Schrodinger
equation, in 1D and 2D.

Two schemes:

* split_operator -- Strang splitting exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2)
  with the kinetic factor applied in the Fourier basis. Periodic grids only.
* crank_nicolson -- Cayley form (1 + i dt H/2) psi' = (1 - i dt H/2) psi,
  tridiagonal in 1D; in 2D a palindromic ADI composition of exact Cayley
  factors (half step in y, full step in x, half step in y), which keeps the
  step exactly unitary and exactly time-reversible. Both boundaries.

Time-dependent potentials are evaluated at the step midpoint t + dt/2.
An optional complex absorbing potential (quartic ramp over the outer
fraction of the box) supports scattering runs; it breaks unitarity by
design and the lost norm is reported as absorbed flux.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .fields import HBAR, ComplexField
from .grids import PERIODIC
from .potentials import PotentialSpec

SPLIT_OPERATOR = "split_operator"
CRANK_NICOLSON = "crank_nicolson"


class PropagationError(RuntimeError):
    """Raised when propagation produces non-finite values (dt too large or
    singular potential)."""


def default_dt(grid, mass=1.0):
    """Conservative stability/accuracy default: 0.01 * m * dx^2 / hbar."""
    dx = grid.dx if grid.ndim == 1 else min(grid.gx.dx, grid.gy.dx)
    return 0.01 * mass * dx * dx / HBAR


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    scheme: str = SPLIT_OPERATOR
    mass: float = 1.0
    t_final: float = 0.0
    absorbing: bool = False
    cap_strength: float = 1.0
    cap_fraction: float = 0.1

    def __post_init__(self):
        # negative dt is allowed so time-reversal runs can undo a step
        if not (np.isfinite(self.dt) and self.dt != 0):
            raise ValueError(f"dt must be nonzero and finite, got {self.dt}")
        if self.scheme not in (SPLIT_OPERATOR, CRANK_NICOLSON):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.mass > 0:
            raise ValueError(f"mass must be > 0, got {self.mass}")


def _axis_k_sq(g):
    k = 2.0 * np.pi * np.fft.fftfreq(g.n_points, g.dx)
    return k * k


def _cap_profile(g, fraction, strength):
    """Quartic absorbing ramp over the outer `fraction` of the box, each side."""
    x = g.x
    lo, hi = x[0], x[-1]
    w = fraction * (hi - lo)
    ramp = np.zeros(g.n_points)
    left = x < lo + w
    right = x > hi - w
    ramp[left] = ((lo + w - x[left]) / w) ** 4
    ramp[right] = ((x[right] - (hi - w)) / w) ** 4
    return strength * ramp


def _thomas(dl, d, du, b):
    """Tridiagonal solve along axis 0; all arrays broadcast to b's shape.

    dl[0] and du[-1] are ignored. No pivoting: intended for the well
    conditioned Cayley matrices I + i*a*H.
    """
    n = b.shape[0]
    cp = np.empty_like(b)
    xp = np.empty_like(b)
    denom = d[0]
    cp[0] = du[0] / denom
    xp[0] = b[0] / denom
    for i in range(1, n):
        denom = d[i] - dl[i] * cp[i - 1]
        cp[i] = (du[i] / denom) if i < n - 1 else 0.0
        xp[i] = (b[i] - dl[i] * xp[i - 1]) / denom
    x = np.empty_like(b)
    x[n - 1] = xp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = xp[i] - cp[i] * x[i + 1]
    return x


def _thomas_cyclic(dl, d, du, corner_top, corner_bot, b):
    """Cyclic tridiagonal solve (A[0,-1]=corner_top, A[-1,0]=corner_bot)
    via Sherman-Morrison on top of _thomas."""
    n = b.shape[0]
    gamma = -d[0]
    d_mod = d.copy()
    d_mod[0] = d[0] - gamma
    d_mod[n - 1] = d[n - 1] - corner_top * corner_bot / gamma
    y = _thomas(dl, d_mod, du, b)
    u = np.zeros_like(b)
    u[0] = gamma
    u[n - 1] = corner_bot
    z = _thomas(dl, d_mod, du, u)
    # v = (1, 0, ..., 0, corner_top/gamma)
    vy = y[0] + (corner_top / gamma) * y[n - 1]
    vz = z[0] + (corner_top / gamma) * z[n - 1]
    return y - z * (vy / (1.0 + vz))


class _Cayley1DAxis:
    """One Cayley factor (1 + i tau H/2)^-1 (1 - i tau H/2) where H is the
    3-point kinetic operator along one axis plus a diagonal potential."""

    def __init__(self, n, dx, boundary, mass, tau):
        self.n = n
        self.boundary = boundary
        self.off = -HBAR * HBAR / (2.0 * mass * dx * dx)
        self.kin_diag = HBAR * HBAR / (mass * dx * dx)
        self.a = 0.5j * tau / HBAR

    def apply(self, psi, vdiag):
        """psi: array with the solve axis first, shape (n, ...);
        vdiag: potential on the same layout (may be complex for CAP)."""
        a, off = self.a, self.off
        hdiag = self.kin_diag + vdiag
        # rhs = (1 - a H) psi
        up = np.zeros_like(psi)
        dn = np.zeros_like(psi)
        up[:-1] = psi[1:]
        dn[1:] = psi[:-1]
        if self.boundary == PERIODIC:
            up[-1] = psi[0]
            dn[0] = psi[-1]
        rhs = psi - a * (hdiag * psi + off * (up + dn))
        d = 1.0 + a * hdiag
        if psi.ndim == 1:
            return self._solve_banded_1d(d, a * off, rhs)
        dl = np.full_like(psi, a * off)
        du = np.full_like(psi, a * off)
        if self.boundary == PERIODIC:
            return _thomas_cyclic(dl, d, du, a * off, a * off, rhs)
        return _thomas(dl, d, du, rhs)

    def _solve_banded_1d(self, d, off, rhs):
        """LAPACK banded solve for single-system (1D grid) Cayley steps;
        periodic boundaries via Sherman-Morrison."""
        n = self.n
        ab = np.zeros((3, n), dtype=np.complex128)
        ab[0, 1:] = off
        ab[2, :-1] = off

        def solve(diag, b):
            ab[1] = diag
            return solve_banded((1, 1), ab, b)

        if self.boundary != PERIODIC:
            return solve(d, rhs)
        gamma = -d[0]
        d_mod = d.copy()
        d_mod[0] = d[0] - gamma
        d_mod[-1] = d[-1] - off * off / gamma
        y = solve(d_mod, rhs)
        u = np.zeros(n, dtype=np.complex128)
        u[0] = gamma
        u[-1] = off
        z = solve(d_mod, u)
        vy = y[0] + (off / gamma) * y[-1]
        vz = z[0] + (off / gamma) * z[-1]
        return y - z * (vy / (1.0 + vz))


class Propagator:
    """Caches per-(grid, config, potential) workspace for repeated steps."""

    def __init__(self, grid, potential: PotentialSpec, cfg: PropagatorConfig):
        self.grid = grid
        self.potential = potential
        self.cfg = cfg
        if cfg.scheme == SPLIT_OPERATOR:
            self._check_periodic(grid)
            self._kin_phase = self._build_kinetic_phase()
        else:
            self._cayley = self._build_cayley_factors()
        self._v_base = potential.evaluate(grid, 0.0) if potential.is_static else None
        self._cap = self._build_cap() if cfg.absorbing else None

    @staticmethod
    def _check_periodic(grid):
        bs = [grid.boundary] if grid.ndim == 1 else [grid.gx.boundary, grid.gy.boundary]
        if any(b != PERIODIC for b in bs):
            raise ValueError("split_operator requires periodic boundaries")

    def _build_kinetic_phase(self):
        m, dt = self.cfg.mass, self.cfg.dt
        if self.grid.ndim == 1:
            ksq = _axis_k_sq(self.grid)
        else:
            ksq = _axis_k_sq(self.grid.gx)[:, None] + _axis_k_sq(self.grid.gy)[None, :]
        return np.exp(-0.5j * HBAR * ksq * dt / m)

    def _build_cayley_factors(self):
        m, dt = self.cfg.mass, self.cfg.dt
        if self.grid.ndim == 1:
            g = self.grid
            return (_Cayley1DAxis(g.n_points, g.dx, g.boundary, m, dt),)
        gx, gy = self.grid.gx, self.grid.gy
        return (_Cayley1DAxis(gy.n_points, gy.dx, gy.boundary, m, 0.5 * dt),
                _Cayley1DAxis(gx.n_points, gx.dx, gx.boundary, m, dt))

    def _build_cap(self):
        cfg = self.cfg
        if self.grid.ndim == 1:
            return _cap_profile(self.grid, cfg.cap_fraction, cfg.cap_strength)
        wx = _cap_profile(self.grid.gx, cfg.cap_fraction, cfg.cap_strength)
        wy = _cap_profile(self.grid.gy, cfg.cap_fraction, cfg.cap_strength)
        return wx[:, None] + wy[None, :]

    def _v_at(self, t):
        v = self._v_base if self._v_base is not None else self.potential.evaluate(self.grid, t)
        if self._cap is not None:
            return v - 1j * self._cap
        return v

    def step_values(self, values, t):
        return self.step_values_with(values, self._v_at(t + 0.5 * self.cfg.dt), t)

    def step_values_with(self, values, v, t=0.0):
        """Advance raw values under an explicitly supplied potential array
        (used by self-consistent loops that rebuild v every step)."""
        dt = self.cfg.dt
        if self.cfg.scheme == SPLIT_OPERATOR:
            half = np.exp(-0.5j * v * dt / HBAR)
            out = half * values
            out = np.fft.ifftn(self._kin_phase * np.fft.fftn(out))
            out = half * out
        else:
            if self.grid.ndim == 1:
                out = self._cayley[0].apply(values, v)
            else:
                cy, cx = self._cayley
                vt = np.ascontiguousarray((0.5 * v).T)
                out = cy.apply(values.T, vt).T          # half step along axis 1
                out = cx.apply(out, 0.5 * v)            # full step along axis 0
                out = cy.apply(out.T, vt).T             # half step along axis 1
        if not np.all(np.isfinite(out)):
            raise PropagationError(
                f"non-finite wavefunction after step at t={t:.6g} "
                f"(dt={dt:.3g}, scheme={self.cfg.scheme}); reduce dt or check the potential")
        return out

    def step(self, psi: ComplexField, t) -> ComplexField:
        return ComplexField(psi.grid, self.step_values(psi.values, t))


def step(psi: ComplexField, potential: PotentialSpec, cfg: PropagatorConfig, t=0.0):
    """Single time step psi(t) -> psi(t + dt)."""
    return Propagator(psi.grid, potential, cfg).step(psi, t)


def kinetic_energy(psi: ComplexField, cfg: PropagatorConfig):
    """<T> with the scheme-consistent kinetic operator (spectral for the
    split-operator scheme, 3-point stencil for Crank-Nicolson)."""
    grid, m = psi.grid, cfg.mass
    if cfg.scheme == SPLIT_OPERATOR:
        if grid.ndim == 1:
            ksq = _axis_k_sq(grid)
        else:
            ksq = _axis_k_sq(grid.gx)[:, None] + _axis_k_sq(grid.gy)[None, :]
        psi_hat = np.fft.fftn(psi.values)
        w = grid.cell_volume / np.prod(grid.shape)
        return float(np.sum(ksq * np.abs(psi_hat) ** 2) * 0.5 * HBAR * HBAR / m * w)
    vals = psi.values
    acc = np.zeros_like(vals)
    axes = [(grid.dx, grid.boundary, 0)] if grid.ndim == 1 else [
        (grid.gx.dx, grid.gx.boundary, 0), (grid.gy.dx, grid.gy.boundary, 1)]
    for dx, boundary, ax in axes:
        up = np.zeros_like(vals)
        dn = np.zeros_like(vals)
        sl_up = [slice(None)] * vals.ndim
        sl_dn = [slice(None)] * vals.ndim
        sl_up[ax] = slice(None, -1)
        sl_dn[ax] = slice(1, None)
        src_up = [slice(None)] * vals.ndim
        src_dn = [slice(None)] * vals.ndim
        src_up[ax] = slice(1, None)
        src_dn[ax] = slice(None, -1)
        up[tuple(sl_up)] = vals[tuple(src_up)]
        dn[tuple(sl_dn)] = vals[tuple(src_dn)]
        if boundary == PERIODIC:
            first = [slice(None)] * vals.ndim
            last = [slice(None)] * vals.ndim
            first[ax] = 0
            last[ax] = -1
            up[tuple(last)] = vals[tuple(first)]
            dn[tuple(first)] = vals[tuple(last)]
        acc = acc + (up - 2.0 * vals + dn) / (dx * dx)
    t_op = -0.5 * HBAR * HBAR / m * acc
    return float(np.real(np.sum(np.conj(vals) * t_op)) * grid.cell_volume)


def energy(psi: ComplexField, potential: PotentialSpec, cfg: PropagatorConfig, t=0.0):
    """<H> = <T> + <Re V>; the CAP (if any) is excluded from the energy."""
    v = potential.evaluate(psi.grid, t)
    pot = float(np.sum(v * np.abs(psi.values) ** 2) * psi.grid.cell_volume)
    return kinetic_energy(psi, cfg) + pot


@dataclass
class RunRecord:
    psi_final: ComplexField
    t_final: float
    n_steps: int
    observer_calls: int


class NormMonitor:
    """Records (t, |psi|^2 norm) at each observer call."""

    def __init__(self):
        self.times = []
        self.norms = []

    def __call__(self, step_idx, t, psi):
        self.times.append(t)
        self.norms.append(psi.norm_sq())

    def max_deviation(self):
        return max(abs(n - 1.0) for n in self.norms)


class EnergyMonitor:
    def __init__(self, potential, cfg):
        self.potential = potential
        self.cfg = cfg
        self.times = []
        self.energies = []

    def __call__(self, step_idx, t, psi):
        self.times.append(t)
        self.energies.append(energy(psi, self.potential, self.cfg, t))

    def max_relative_drift(self):
        e0 = self.energies[0]
        scale = max(abs(e0), 1e-300)
        return max(abs(e - e0) for e in self.energies) / scale


class SnapshotRecorder:
    """Keeps (t, ComplexField) pairs in memory."""

    def __init__(self):
        self.times = []
        self.snapshots = []

    def __call__(self, step_idx, t, psi):
        self.times.append(t)
        self.snapshots.append(psi)


class RunLogWriter:
    """Streams a CSV run record: t, norm, energy, absorbed_flux."""

    def __init__(self, path, potential, cfg):
        self.path = path
        self.potential = potential
        self.cfg = cfg
        self.rows = []

    def __call__(self, step_idx, t, psi):
        n2 = psi.norm_sq()
        e = energy(psi, self.potential, self.cfg, t)
        self.rows.append((t, n2, e, 1.0 - n2))

    def flush(self):
        with open(self.path, "w", newline="") as fh:
            fh.write("t,norm,energy,absorbed_flux\n")
            for t, n2, e, absorbed in self.rows:
                fh.write(f"{t!r},{n2!r},{e!r},{absorbed!r}\n")


def propagate(psi0: ComplexField, potential: PotentialSpec, cfg: PropagatorConfig,
              observers=(), observer_stride=1):
    """Iterate steps from t=0 to cfg.t_final, invoking observers (which must
    not mutate psi) every `observer_stride` steps, always including t=0 and
    the final step."""
    n_steps = int(round(cfg.t_final / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_final) > 1e-9 * max(cfg.t_final, cfg.dt):
        raise ValueError(f"t_final={cfg.t_final} is not an integer multiple of dt={cfg.dt}")
    prop = Propagator(psi0.grid, potential, cfg)
    psi = psi0
    calls = 0

    def notify(i, t):
        nonlocal calls
        for obs in observers:
            obs(i, t, psi)
        calls += 1

    try:
        notify(0, 0.0)
        for i in range(n_steps):
            psi = prop.step(psi, i * cfg.dt)
            if (i + 1) % observer_stride == 0 or (i + 1) == n_steps:
                notify(i + 1, (i + 1) * cfg.dt)
    finally:
        for obs in observers:
            flush = getattr(obs, "flush", None)
            if flush is not None:
                flush()
    return RunRecord(psi_final=psi, t_final=n_steps * cfg.dt, n_steps=n_steps,
                     observer_calls=calls)
