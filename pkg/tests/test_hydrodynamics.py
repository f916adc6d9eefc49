"""Fluid decomposition contracts: closed-form quantum potentials,
stationary-state identities, circulation quantization, continuity."""

import numpy as np
import pytest

from qfd.fields import ComplexField, RealField, integrate
from qfd.grids import Grid1D, Grid2D
from qfd.hydrodynamics import (LoopTouchesNodeError, circulation,
                               continuity_residual, decompose,
                               free_motion_criterion, load_bundle,
                               q_potential_density_form,
                               q_potential_from_density, rectangle_loop,
                               save_bundle)
from qfd.potentials import PotentialSpec
from qfd.propagator import PropagatorConfig, SnapshotRecorder, propagate
from qfd.qfdft import lowest_eigenstates
from qfd.states import (gaussian_packet, harmonic_eigenstate, plane_wave,
                        product_state, single_vortex)


def gaussian_q_closed_form(x, sigma, mass=1.0):
    """Oracle: for rho ~ exp(-x^2/2 sigma^2),
    Q(x) = 1/(4 m sigma^2) - x^2/(8 m sigma^4)."""
    return 1.0 / (4.0 * mass * sigma ** 2) - x ** 2 / (8.0 * mass * sigma ** 4)


def q_by_fine_differences(rho_fn, x, h=1e-3, mass=1.0):
    """Independent oracle: Q from 5-point finite differences applied to the
    analytic density function, not to grid samples."""
    r = lambda u: np.sqrt(rho_fn(u))
    d2 = (-r(x + 2 * h) + 16 * r(x + h) - 30 * r(x) + 16 * r(x - h) - r(x - 2 * h)) / (12 * h * h)
    return -d2 / (2.0 * mass * r(x))


class TestDecompose:
    def test_plane_wave(self):
        g = Grid1D.from_extent(1024, 0.0, 2.0 * np.pi * 1024 / 64)
        psi, k = plane_wave(g, 1)
        hf = decompose(psi, PotentialSpec.free(), 0.0)
        # constant amplitude: Q is exactly zero, velocity exactly the
        # discrete phase velocity sin(k dx)/dx (within (k dx)^2/6 of k)
        assert np.nanmax(np.abs(hf.q_potential.values)) < 1e-12
        v = hf.velocity[0].values
        assert np.max(np.abs(v - v[0])) < 1e-12
        assert abs(v[0] / k - 1.0) < (k * g.dx) ** 2 / 6.0 * 1.05
        assert not hf.node_mask.any()

    def test_gaussian_q_closed_form(self):
        sigma = 1.3
        g = Grid1D.from_extent(2048, -16.0, 16.0)
        psi = gaussian_packet(g, sigma)
        hf = decompose(psi)
        inner = np.abs(g.x) < 4.0 * sigma
        q_exact = gaussian_q_closed_form(g.x[inner], sigma)
        err = np.max(np.abs(hf.q_potential.values[inner] - q_exact))
        assert err < 1e-4
        assert abs(hf.q_potential.values[g.n_points // 2]
                   - 1.0 / (4.0 * sigma ** 2)) < 1e-5
        # cross-check the oracle itself by fine differences on the analytic rho
        rho_fn = lambda u: np.exp(-u * u / (2.0 * sigma * sigma))
        q_fd = q_by_fine_differences(rho_fn, g.x[inner])
        assert np.max(np.abs(q_fd - q_exact)) < 1e-8

    def test_harmonic_ground_state_identity(self):
        # discrete eigenvector: Q + V = eigenvalue pointwise wherever the
        # stencils match (everywhere unmasked, walls masked by box choice)
        g = Grid1D.from_extent(1024, -5.5, 5.5, "dirichlet")
        v = PotentialSpec.harmonic(1.0)
        eigs, orbs = lowest_eigenstates(g, v.evaluate(g), 1.0, 1)
        hf = decompose(orbs[0], v, 0.0)
        assert np.nanmax(np.abs(hf.velocity[0].values)) == 0.0
        unmasked = ~hf.node_mask
        dev = np.abs(hf.v_eff.values[unmasked] - eigs[0])
        assert np.max(dev) < 1e-9
        assert abs(eigs[0] - 0.5) < 1e-4   # continuum eigenvalue at O(dx^2)

    def test_current_identity(self):
        # j == (hbar/m) Im(psi* grad psi) == rho * v on unmasked points
        g = Grid1D.from_extent(512, -12, 12)
        psi = gaussian_packet(g, 1.0, momentum=1.7)
        hf = decompose(psi)
        unmasked = ~hf.node_mask
        rv = hf.rho.values[unmasked] * hf.velocity[0].values[unmasked]
        assert np.max(np.abs(rv - hf.current[0].values[unmasked])) < 1e-10

    def test_scale_invariance_exact_power_of_two(self):
        g = Grid1D.from_extent(512, -10, 10)
        rho = gaussian_packet(g, 1.0).density()
        q1 = q_potential_from_density(rho)
        for c in (2.0, 4.0, 0.5):
            q2 = q_potential_from_density(RealField(g, c * rho.values))
            both = np.isfinite(q1.values) & np.isfinite(q2.values)
            assert np.max(np.abs(q1.values[both] - q2.values[both])) < 1e-12

    def test_scale_invariance_generic_constant(self):
        g = Grid1D.from_extent(512, -10, 10)
        rho = gaussian_packet(g, 1.0).density()
        q1 = q_potential_from_density(rho)
        q2 = q_potential_from_density(RealField(g, 3.0 * rho.values))
        core = rho.values > 1e-6 * np.max(rho.values)
        assert np.max(np.abs(q1.values[core] - q2.values[core])) < 1e-9

    def test_gauge_invariance(self):
        g = Grid1D.from_extent(512, -12, 12)
        psi = gaussian_packet(g, 1.0, momentum=0.8)
        h1 = decompose(psi)
        h2 = decompose(ComplexField(g, psi.values * np.exp(1j * 1.234)))
        core = h1.rho.values > 1e-8 * np.max(h1.rho.values)
        assert np.max(np.abs(h1.rho.values - h2.rho.values)) < 1e-15
        assert np.max(np.abs(h1.velocity[0].values[core] - h2.velocity[0].values[core])) < 1e-10
        assert np.max(np.abs(h1.q_potential.values[core] - h2.q_potential.values[core])) < 1e-8

    def test_two_q_forms_agree(self):
        # plane wave: both forms identically zero
        g = Grid1D.from_extent(256, 0.0, 32.0)
        psi, _ = plane_wave(g, 2)
        rho = psi.density()
        qa = q_potential_from_density(rho).values
        qb = q_potential_density_form(rho).values
        assert np.nanmax(np.abs(qa - qb)) < 1e-12
        # smooth bounded-below periodic density: pointwise (all unmasked)
        gf = Grid1D.from_extent(16384, 0.0, 10.0)
        rho2 = RealField(gf, (1.0 + 0.1 * np.sin(2.0 * np.pi * gf.x / 10.0)) / 10.0)
        qa2 = q_potential_from_density(rho2).values
        qb2 = q_potential_density_form(rho2).values
        assert np.max(np.abs(qa2 - qb2)) < 1e-8

    def test_node_masking_excited_state(self):
        g = Grid1D(1025, -6.4, 12.8 / 1024, "dirichlet")
        psi = harmonic_eigenstate(g, 1)
        hf = decompose(psi, PotentialSpec.harmonic(1.0))
        center = g.n_points // 2
        assert hf.node_mask[center]          # exact node masked
        assert np.isnan(hf.q_potential.values[center])
        assert np.isnan(hf.velocity[0].values[center])


class TestContinuity:
    @staticmethod
    def run_snapshots(n, dt, t_final, stride):
        g = Grid1D.from_extent(n, -25.6, 25.6)
        psi = gaussian_packet(g, 1.0)
        cfg = PropagatorConfig(dt=dt, t_final=t_final)
        rec = SnapshotRecorder()
        propagate(psi, PotentialSpec.free(), cfg, observers=[rec], observer_stride=stride)
        return [decompose(p, t=t) for t, p in zip(rec.times, rec.snapshots)]

    def test_stationary_state_residual(self):
        g = Grid1D.from_extent(512, -12.8, 12.8)
        psi = harmonic_eigenstate(g, 0)
        cfg = PropagatorConfig(dt=1e-3, t_final=0.02)
        rec = SnapshotRecorder()
        propagate(psi, PotentialSpec.harmonic(1.0), cfg, observers=[rec], observer_stride=10)
        hs = [decompose(p, t=t) for t, p in zip(rec.times, rec.snapshots)]
        _, rep = continuity_residual(hs[0], hs[1], hs[2], rec.times[1] - rec.times[0])
        assert rep.max_abs_unmasked < 1e-8

    def test_residual_shrinks_under_refinement(self):
        hs1 = self.run_snapshots(512, 5e-3, 0.4, 20)
        hs2 = self.run_snapshots(1024, 2.5e-3, 0.2, 20)
        _, r1 = continuity_residual(hs1[0], hs1[1], hs1[2], hs1[1].t - hs1[0].t)
        _, r2 = continuity_residual(hs2[0], hs2[1], hs2[2], hs2[1].t - hs2[0].t)
        assert r1.max_abs < 1e-3
        assert r1.max_abs / r2.max_abs > 3.5

    def test_residual_integral_vanishes_periodic(self):
        hs = self.run_snapshots(512, 5e-3, 0.4, 20)
        _, rep = continuity_residual(hs[0], hs[1], hs[2], hs[1].t - hs[0].t)
        assert abs(rep.integral) < 1e-10

    def test_grid_mismatch_rejected(self):
        hs = self.run_snapshots(512, 5e-3, 0.2, 20)
        other = decompose(gaussian_packet(Grid1D.from_extent(256, -25.6, 25.6), 1.0))
        with pytest.raises(ValueError):
            continuity_residual(hs[0], other, hs[2], 0.1)


class TestCirculation:
    @staticmethod
    def vortex_fields(n=256, sigma=1.5):
        g1 = Grid1D.from_extent(n, -8.0, 8.0)
        g2 = Grid2D(g1, g1)
        return g1, decompose(single_vortex(g2, sigma=sigma))

    def test_unit_vortex_quantized(self):
        g1, hf = self.vortex_fields()
        i0 = int(np.argmin(np.abs(g1.x + 1.5)))
        i1 = int(np.argmin(np.abs(g1.x - 1.5)))
        loop = rectangle_loop(i0, i1, i0, i1)
        c = circulation(hf, loop)
        assert abs(c / (2.0 * np.pi) - 1.0) < 0.01

    def test_reversed_loop_negates(self):
        g1, hf = self.vortex_fields()
        i0 = int(np.argmin(np.abs(g1.x + 1.5)))
        i1 = int(np.argmin(np.abs(g1.x - 1.5)))
        loop = rectangle_loop(i0, i1, i0, i1)
        assert circulation(hf, loop[::-1]) == pytest.approx(-circulation(hf, loop))

    def test_vortex_free_region(self):
        g1 = Grid1D.from_extent(256, -8.0, 8.0)
        g2 = Grid2D(g1, g1)
        psi = product_state(g2, gaussian_packet(g1, 1.0, momentum=1.0),
                            gaussian_packet(g1, 1.0))
        hf = decompose(psi)
        i0 = int(np.argmin(np.abs(g1.x + 1.5)))
        i1 = int(np.argmin(np.abs(g1.x - 1.5)))
        c = circulation(hf, rectangle_loop(i0, i1, i0, i1))
        assert abs(c) < 1e-6 * 2.0 * np.pi

    def test_polygon_circle(self):
        _, hf = self.vortex_fields()
        th = np.linspace(0.0, 2.0 * np.pi, 240)
        poly = np.column_stack([1.5 * np.cos(th), 1.5 * np.sin(th)])
        assert abs(circulation(hf, poly) / (2.0 * np.pi) - 1.0) < 0.01

    def test_loop_through_node_rejected(self):
        g1, hf = self.vortex_fields()
        ic = int(np.argmin(np.abs(g1.x)))   # vortex core is a node
        loop = rectangle_loop(ic - 2, ic + 2, ic - 2, ic + 2)
        loop_through_core = np.vstack([loop[:1], [[ic, ic]], loop[1:]])
        with pytest.raises(LoopTouchesNodeError):
            # build a degenerate path that visits the core
            circulation(hf, np.array([[ic, ic], [ic + 1, ic], [ic + 1, ic + 1],
                                      [ic, ic + 1], [ic, ic]]))

    def test_non_adjacent_steps_rejected(self):
        g1, hf = self.vortex_fields()
        i = int(np.argmin(np.abs(g1.x - 1.0)))
        with pytest.raises(ValueError, match="adjacent"):
            circulation(hf, np.array([[i, i], [i + 2, i], [i + 2, i + 2],
                                      [i, i + 2], [i, i]]))


class TestFreeMotion:
    def test_plane_wave_free_everywhere(self):
        g = Grid1D.from_extent(256, 0.0, 32.0)
        psi, _ = plane_wave(g, 2)
        hf = decompose(psi, PotentialSpec.free(), 0.0)
        assert bool(np.all(free_motion_criterion(hf, 1e-6)))

    def test_harmonic_ground_state_free_everywhere_unmasked(self):
        # V_eff is constant for the discrete eigenstate, so the criterion
        # holds wherever the field is finite
        g = Grid1D.from_extent(1024, -5.5, 5.5, "dirichlet")
        v = PotentialSpec.harmonic(1.0)
        _, orbs = lowest_eigenstates(g, v.evaluate(g), 1.0, 1)
        hf = decompose(orbs[0], v, 0.0)
        crit = free_motion_criterion(hf, 1e-6)
        # erode by one cell: the gradient stencil of a point next to the
        # mask touches NaN and is conservatively reported False
        m = hf.node_mask
        interior = ~m & ~np.roll(m, 1) & ~np.roll(m, -1)
        assert bool(np.all(crit[interior]))

    def test_two_lobe_superposition_quantum_force(self):
        # oracle: analytic two-Gaussian density, Q gradient by fine
        # differences; between the lobes |grad Q| is large although V = 0
        g = Grid1D.from_extent(1024, -12.0, 12.0)
        a, sigma = 2.5, 0.7
        two = (np.exp(-((g.x - a) ** 2) / (4 * sigma ** 2))
               + np.exp(-((g.x + a) ** 2) / (4 * sigma ** 2)))
        psi = ComplexField(g, two.astype(complex)).normalize()
        hf = decompose(psi, PotentialSpec.free(), 0.0)
        crit = free_motion_criterion(hf, threshold=0.05)
        near_lobe = np.abs(np.abs(g.x) - a) < 0.3
        # exclude x = 0: the symmetric midpoint is an isolated equilibrium
        between = (np.abs(g.x) > 0.25) & (np.abs(g.x) < 1.2)
        assert np.any(crit[near_lobe])       # force vanishes at the lobes
        assert not np.any(crit[between])     # strong quantum force at V = 0
        rho_fn = lambda u: (np.exp(-((u - a) ** 2) / (4 * sigma ** 2))
                            + np.exp(-((u + a) ** 2) / (4 * sigma ** 2))) ** 2
        x_b = a / 2.0
        h = 1e-3
        dq = (q_by_fine_differences(rho_fn, np.array([x_b + h]))[0]
              - q_by_fine_differences(rho_fn, np.array([x_b - h]))[0]) / (2 * h)
        assert abs(dq) > 1.0        # the oracle confirms the force is real


class TestBundleIO:
    def test_round_trip(self, tmp_path):
        g = Grid1D.from_extent(256, -10, 10)
        hf = decompose(gaussian_packet(g, 1.0, momentum=0.5),
                       PotentialSpec.harmonic(1.0), t=0.25)
        save_bundle(hf, tmp_path, prefix="snap")
        hf2 = load_bundle(tmp_path, prefix="snap")
        assert np.array_equal(hf2.rho.values, hf.rho.values)
        assert np.array_equal(np.isnan(hf2.velocity[0].values),
                              np.isnan(hf.velocity[0].values))
        both = np.isfinite(hf.q_potential.values)
        assert np.array_equal(hf2.q_potential.values[both], hf.q_potential.values[both])
        assert hf2.eps_node == hf.eps_node
        assert hf2.t == hf.t
        assert np.array_equal(hf2.node_mask, hf.node_mask)
