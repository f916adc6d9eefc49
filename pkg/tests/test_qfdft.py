"""Orbital dynamics: effective potential composition, conservation,
kinetic functional, multiplier-field diagnostics, stationary limit."""

import numpy as np
import pytest
from scipy.integrate import quad

from qfd.fields import ComplexField, RealField, integrate, integration_weights
from qfd.grids import Grid1D
from qfd.manybody import SoftCoulomb
from qfd.potentials import PotentialSpec
from qfd.propagator import CRANK_NICOLSON, PropagatorConfig, propagate
from qfd.qfdft import (FunctionalConfig, KSRun, OrbitalSet, SCFConvergenceError,
                       XC_REGISTRY, current, density, effective_potential,
                       kinetic_functional, kinetic_two_forms_single,
                       lowest_eigenstates, orbital_diagnostics,
                       orthonormality_drift, propagate_ks, stationary_limit)
from qfd.states import gaussian_packet, harmonic_eigenstate, plane_wave


def harmonic_fc(omega=1.0):
    return FunctionalConfig(external=PotentialSpec.harmonic(omega))


class TestEffectivePotential:
    def test_external_only(self):
        g = Grid1D.from_extent(256, -8, 8)
        rho = gaussian_packet(g, 1.0).density()
        v = effective_potential(rho, harmonic_fc()).values
        assert np.max(np.abs(v - 0.5 * g.x ** 2)) < 1e-12

    def test_hartree_against_quadrature_oracle(self):
        # independent oracle: adaptive quadrature of the convolution at x=0
        g = Grid1D.from_extent(1024, -12.0, 12.0)
        sigma = 1.0
        rho_fn = lambda u: np.exp(-u * u / (2 * sigma ** 2)) / np.sqrt(2 * np.pi * sigma ** 2)
        rho = RealField(g, rho_fn(g.x))
        lam, a = 1.0, 1.0
        fc = FunctionalConfig(external=PotentialSpec.free(), hartree=SoftCoulomb(lam, a))
        v = effective_potential(rho, fc).values
        oracle, err = quad(lambda u: rho_fn(u) * lam / np.sqrt(u * u + a * a),
                           -np.inf, np.inf, epsabs=1e-12)
        i0 = int(np.argmin(np.abs(g.x)))
        assert err < 1e-8   # oracle itself is converged
        assert abs(v[i0] - oracle) < 1e-6

    def test_terms_additive(self):
        g = Grid1D.from_extent(256, -8, 8)
        rho = gaussian_packet(g, 1.0).density()
        ext = PotentialSpec.harmonic(1.0)
        v_full = effective_potential(rho, FunctionalConfig(ext, SoftCoulomb(1.0, 1.0),
                                                           xc="none")).values
        v_ext = effective_potential(rho, FunctionalConfig(ext)).values
        v_har = effective_potential(rho, FunctionalConfig(PotentialSpec.free(),
                                                          SoftCoulomb(1.0, 1.0))).values
        assert np.max(np.abs(v_full - (v_ext + v_har))) < 1e-14

    def test_unknown_xc_rejected(self):
        with pytest.raises(ValueError, match="xc"):
            FunctionalConfig(external=PotentialSpec.free(), xc="gga_magic")

    def test_lda_exchange_plugin(self):
        rho = np.array([0.0, np.pi / 3.0 * 8.0])   # (3 rho/pi) = 8 -> v = -2
        v = XC_REGISTRY["lda_x_1d"](rho, 0.0)
        assert v[0] == 0.0
        assert abs(v[1] + 2.0) < 1e-12


class TestDensityCurrent:
    def test_single_orbital_density(self):
        g = Grid1D.from_extent(256, -8, 8)
        phi = gaussian_packet(g, 1.0)
        os1 = OrbitalSet([phi])
        assert np.array_equal(density(os1).values, np.abs(phi.values) ** 2)

    def test_two_orbitals_integrate_to_two(self):
        g = Grid1D.from_extent(512, -10, 10)
        os2 = OrbitalSet([harmonic_eigenstate(g, 0), harmonic_eigenstate(g, 1)])
        assert abs(integrate(density(os2)) - 2.0) < 1e-10

    def test_density_phase_invariant(self):
        g = Grid1D.from_extent(256, -8, 8)
        phi = gaussian_packet(g, 1.0)
        rotated = ComplexField(g, phi.values * np.exp(0.77j))
        d1 = density(OrbitalSet([phi])).values
        d2 = density(OrbitalSet([rotated])).values
        assert np.max(np.abs(d1 - d2)) < 1e-15

    def test_real_orbitals_zero_current(self):
        g = Grid1D.from_extent(256, -8, 8)
        os2 = OrbitalSet([harmonic_eigenstate(g, 0), harmonic_eigenstate(g, 2)])
        assert np.max(np.abs(current(os2).values)) < 1e-14

    def test_plane_wave_current(self):
        g = Grid1D.from_extent(1024, 0.0, 2 * np.pi * 1024 / 16)
        phi, k = plane_wave(g, 1)
        j = current(OrbitalSet([phi])).values
        rho = density(OrbitalSet([phi])).values
        v_disc = np.sin(k * g.dx) / g.dx    # central-stencil phase velocity
        assert np.max(np.abs(j - rho * v_disc)) < 1e-12
        assert abs(v_disc / k - 1.0) < (k * g.dx) ** 2 / 6 * 1.05

    def test_ks_continuity_refinement(self):
        # discrete d rho/dt + d j/dx residual shrinks >= 3.5x when both
        # dt and dx are halved
        def residual(n, dt):
            g = Grid1D.from_extent(n, -12.8, 12.8)
            os0 = OrbitalSet([gaussian_packet(g, 1.0, center=0.5),
                              gaussian_packet(g, 0.8, center=-0.5, momentum=0.3)])
            fc = FunctionalConfig(PotentialSpec.harmonic(1.0), SoftCoulomb(0.5, 1.0))
            cfg = PropagatorConfig(dt=dt, t_final=8 * dt)
            run = propagate_ks(os0, fc, cfg, snapshot_stride=4)
            rhos = [density(run.orbital_set(k)).values for k in range(3)]
            js = [current(run.orbital_set(k)).values for k in range(3)]
            dt_s = run.times[1] - run.times[0]
            drho = (rhos[2] - rhos[0]) / (2 * dt_s)
            dx = g.dx
            divj = (np.roll(js[1], -1) - np.roll(js[1], 1)) / (2 * dx)
            return np.max(np.abs(drho + divj))
        r1 = residual(256, 4e-3)
        r2 = residual(512, 2e-3)
        assert r1 / r2 >= 3.5


class TestPropagateKS:
    def test_single_orbital_reduces_to_propagator(self):
        g = Grid1D.from_extent(256, -10, 10)
        phi = gaussian_packet(g, 1.0, center=0.7)
        cfg = PropagatorConfig(dt=1e-3, t_final=0.2)
        run = propagate_ks(OrbitalSet([phi]), harmonic_fc(), cfg, snapshot_stride=200)
        direct = propagate(phi, PotentialSpec.harmonic(1.0), cfg).psi_final
        assert np.max(np.abs(run.orbital_snapshots[-1][0].values - direct.values)) < 1e-12

    def test_two_orbital_norms_conserved_with_hartree(self):
        g = Grid1D.from_extent(256, -10, 10)
        os0 = OrbitalSet([harmonic_eigenstate(g, 0), harmonic_eigenstate(g, 1)])
        fc = FunctionalConfig(PotentialSpec.harmonic(1.0), SoftCoulomb(1.0, 1.0))
        cfg = PropagatorConfig(dt=1e-3, t_final=1.0)
        run = propagate_ks(os0, fc, cfg, snapshot_stride=100)
        for phi in run.orbital_snapshots[-1]:
            assert abs(phi.norm_sq() - 1.0) < 1e-8
        # density breathes under the repulsion: not stationary
        rho0 = density(run.orbital_set(0)).values
        rhoT = density(run.orbital_set(-1)).values
        assert np.max(np.abs(rhoT - rho0)) > 1e-3

    def test_particle_number_conserved(self):
        g = Grid1D.from_extent(256, -10, 10)
        os0 = OrbitalSet([harmonic_eigenstate(g, 0), harmonic_eigenstate(g, 1)])
        fc = FunctionalConfig(PotentialSpec.harmonic(1.0), SoftCoulomb(1.0, 1.0))
        run = propagate_ks(os0, fc, PropagatorConfig(dt=1e-3, t_final=0.5),
                           snapshot_stride=50)
        for row in run.diagnostics_rows:
            assert abs(row[1] - 2.0) < 1e-8


class TestKineticFunctional:
    def test_two_forms_identical_discretely(self):
        g = Grid1D.from_extent(512, -10, 10)
        os1 = OrbitalSet([gaussian_packet(g, 1.0, momentum=2.0)])
        t_grad, t_curv = kinetic_two_forms_single(os1)
        assert abs(t_grad - t_curv) < 1e-12

    def test_harmonic_ground_state_virial(self):
        # oracle: closed-form Gaussian integrals give T = omega/4
        g = Grid1D.from_extent(4096, -5.2, 5.2)
        os1 = OrbitalSet([harmonic_eigenstate(g, 0)])
        t_grad, t_curv = kinetic_two_forms_single(os1)
        assert abs(t_grad - 0.25) < 1e-6
        assert abs(t_curv - 0.25) < 1e-6

    def test_plane_wave_kinetic(self):
        # forward-difference dispersion error (k dx)^2/12 pinned below 1e-8
        n = 32768
        g = Grid1D.from_extent(n, 0.0, 2 * np.pi * n / 16.0)
        phi, k = plane_wave(g, 1)
        os1 = OrbitalSet([phi])
        t_grad, _ = kinetic_two_forms_single(os1)
        assert (k * g.dx) ** 2 / 12.0 * (k * k / 2.0) < 1e-8
        assert abs(t_grad - k * k / 2.0) < 1e-8

    def test_window_average_stationary(self):
        g = Grid1D.from_extent(512, -10, 10, "dirichlet")
        v = PotentialSpec.harmonic(1.0)
        _, orbs = lowest_eigenstates(g, v.evaluate(g), 1.0, 1)
        cfg = PropagatorConfig(dt=1e-3, scheme=CRANK_NICOLSON, t_final=0.2)
        run = propagate_ks(OrbitalSet(orbs), harmonic_fc(), cfg, snapshot_stride=20)
        rep_full = kinetic_functional(run)
        sub = KSRun(times=run.times[:5], orbital_snapshots=run.orbital_snapshots[:5],
                    diagnostics_rows=run.diagnostics_rows[:5])
        rep_sub = kinetic_functional(sub)
        assert abs(rep_full.gradient_form - rep_sub.gradient_form) < 1e-10
        assert rep_full.form_disagreement < 1e-10

    def test_window_too_short(self):
        g = Grid1D.from_extent(256, -8, 8)
        run = KSRun(times=np.array([0.0]),
                    orbital_snapshots=[[gaussian_packet(g, 1.0)]],
                    diagnostics_rows=[])
        with pytest.raises(ValueError, match="window"):
            kinetic_functional(run)


class TestOrbitalDiagnostics:
    def test_ground_state_multiplier_field(self):
        # eps = Q + v_eff is pointwise constant for the discrete eigenstate
        # and the discrete eigenvalue is within 1e-6 of omega/2 at this
        # resolution (error ~ dx^2/32)
        g = Grid1D.from_extent(2560, -5.6, 5.6, "dirichlet")
        v = PotentialSpec.harmonic(1.0)
        eigs, orbs = lowest_eigenstates(g, v.evaluate(g), 1.0, 1)
        diags = orbital_diagnostics(OrbitalSet(orbs), harmonic_fc())
        d = diags[0]
        assert d.eps_std < 1e-9
        assert abs(d.eps_mean - eigs[0]) < 1e-9
        assert abs(d.eps_mean - 0.5) < 1e-6

    def test_first_excited_multiplier_field(self):
        # node sits exactly on the center grid point (odd count, symmetric
        # box) and is masked; the field is constant at 3 omega/2 elsewhere
        g = Grid1D(1025, -6.4, 12.8 / 1024, "dirichlet")
        v = PotentialSpec.harmonic(1.0)
        eigs, orbs = lowest_eigenstates(g, v.evaluate(g), 1.0, 2)
        diags = orbital_diagnostics(OrbitalSet(orbs), harmonic_fc())
        d1 = diags[1]
        assert d1.mask_count >= 1
        assert d1.eps_std < 1e-8
        assert abs(d1.eps_mean - 1.5) < 1e-4

    def test_driven_orbital_reports_spread(self):
        g = Grid1D.from_extent(512, -10, 10)
        phi = gaussian_packet(g, 1.0, center=1.0)   # displaced: not stationary
        diags = orbital_diagnostics(OrbitalSet([phi]), harmonic_fc())
        assert diags[0].eps_std > 1e-3   # report-only contract: spread is real


class TestStationaryLimit:
    def test_harmonic_closed_form(self):
        g = Grid1D.from_extent(1024, -5.5, 5.5, "dirichlet")
        res = stationary_limit(OrbitalSet([harmonic_eigenstate(g, 0)]), harmonic_fc())
        exact = harmonic_eigenstate(g, 0).values.real
        err = np.sqrt(np.sum((res.orbitals.orbitals[0].values.real - exact) ** 2) * g.dx)
        assert err < 1e-4
        assert abs(res.eigenvalues[0] - 0.5) < 1e-4

    def test_hartree_fixed_point(self):
        g = Grid1D.from_extent(512, -10, 10, "dirichlet")
        fc = FunctionalConfig(PotentialSpec.harmonic(1.0), SoftCoulomb(1.0, 1.0))
        res = stationary_limit(OrbitalSet([harmonic_eigenstate(g, 0)]), fc)
        assert res.residual <= 1e-8
        # one more full iteration moves the density below tolerance
        v = effective_potential(density(res.orbitals), fc).values
        _, orbs = lowest_eigenstates(g, v, 1.0, 1)
        rho_next = density(OrbitalSet(orbs)).values
        assert np.max(np.abs(rho_next - density(res.orbitals).values)) <= 1e-8

    def test_mixing_invariance_of_fixed_point(self):
        g = Grid1D.from_extent(512, -10, 10, "dirichlet")
        fc = FunctionalConfig(PotentialSpec.harmonic(1.0), SoftCoulomb(1.0, 1.0))
        res = stationary_limit(OrbitalSet([harmonic_eigenstate(g, 0)]), fc, mixing=0.3)
        for alpha in (0.05, 0.15, 0.3):
            res2 = stationary_limit(res.orbitals, fc, mixing=alpha)
            assert len(res2.history) <= 2
            d = np.max(np.abs(density(res2.orbitals).values
                              - density(res.orbitals).values))
            assert d <= 1e-8

    def test_converged_orbitals_are_dynamical_fixed_points(self):
        g = Grid1D.from_extent(512, -10, 10, "dirichlet")
        fc = FunctionalConfig(PotentialSpec.harmonic(1.0), SoftCoulomb(1.0, 1.0))
        res = stationary_limit(OrbitalSet([harmonic_eigenstate(g, 0),
                                           harmonic_eigenstate(g, 1)]), fc)
        cfg = PropagatorConfig(dt=1e-3, scheme=CRANK_NICOLSON, t_final=1.0)
        run = propagate_ks(res.orbitals, fc, cfg, snapshot_stride=1000)
        rho0 = density(run.orbital_set(0)).values
        rhoT = density(run.orbital_set(-1)).values
        assert np.max(np.abs(rhoT - rho0)) <= 1e-6
        # phase gradients vanish: the stationary current is zero
        assert np.max(np.abs(current(res.orbitals).values)) < 1e-12

    def test_nonconvergence_reports_history(self):
        g = Grid1D.from_extent(256, -10, 10, "dirichlet")
        fc = FunctionalConfig(PotentialSpec.harmonic(1.0), SoftCoulomb(1.0, 1.0))
        with pytest.raises(SCFConvergenceError) as exc:
            stationary_limit(OrbitalSet([harmonic_eigenstate(g, 0)]), fc,
                             max_iter=3)
        assert len(exc.value.history) == 3

    def test_orthonormality_drift_small_for_eigenstates(self):
        g = Grid1D.from_extent(512, -10, 10, "dirichlet")
        v = PotentialSpec.harmonic(1.0)
        _, orbs = lowest_eigenstates(g, v.evaluate(g), 1.0, 3)
        assert orthonormality_drift(OrbitalSet(orbs)) < 1e-10
