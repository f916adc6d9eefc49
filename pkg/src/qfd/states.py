"""Analytic initial-state families and their closed-form reference laws."""

import numpy as np
from scipy.special import eval_hermite, factorial

from .fields import HBAR, ComplexField
from .grids import Grid1D, Grid2D


def gaussian_packet(grid, sigma, center=0.0, momentum=0.0):
    """Gaussian wavepacket with position spread sigma: |psi|^2 has standard
    deviation sigma at t=0. Normalized on the grid."""
    x = grid.x
    psi = np.exp(-((x - center) ** 2) / (4.0 * sigma * sigma)
                 + 1j * momentum * (x - center) / HBAR)
    return ComplexField(grid, psi).normalize()


def free_gaussian_sigma(sigma0, t, mass=1.0):
    """Spreading law sigma(t) = sigma0 sqrt(1 + (hbar t / 2 m sigma0^2)^2)."""
    tau = HBAR * t / (2.0 * mass * sigma0 * sigma0)
    return sigma0 * np.sqrt(1.0 + tau * tau)


def free_gaussian_bohm_position(x0, t, sigma0, mass=1.0):
    """Trajectory of a particle of the zero-momentum free Gaussian starting
    at x0: x(t) = x0 * sigma(t)/sigma0."""
    return x0 * free_gaussian_sigma(sigma0, t, mass) / sigma0


def harmonic_eigenstate(grid, n, omega=1.0, mass=1.0, center=0.0):
    """n-th stationary state of the harmonic well, sampled and renormalized
    on the grid."""
    a = mass * omega / HBAR
    x = grid.x - center
    norm = (a / np.pi) ** 0.25 / np.sqrt(2.0 ** n * factorial(n))
    psi = norm * eval_hermite(n, np.sqrt(a) * x) * np.exp(-0.5 * a * x * x)
    return ComplexField(grid, psi.astype(np.complex128)).normalize()


def harmonic_energy(n, omega=1.0):
    return HBAR * omega * (n + 0.5)


def coherent_state(grid, displacement, omega=1.0, mass=1.0):
    """Ground-state Gaussian displaced by `displacement`, zero momentum."""
    sigma = np.sqrt(HBAR / (2.0 * mass * omega))
    return gaussian_packet(grid, sigma, center=displacement)


def plane_wave(grid, mode):
    """exp(i k x)/sqrt(L) with k = 2 pi mode / L, exactly normalized and
    exactly periodic on the grid."""
    k = 2.0 * np.pi * mode / grid.length
    psi = np.exp(1j * k * grid.x) / np.sqrt(grid.length)
    return ComplexField(grid, psi), k


def single_vortex(grid2d, sigma=1.0, center=(0.0, 0.0)):
    """(x + i y) * gaussian envelope: one positive unit-charge phase winding
    at `center`. Normalized on the grid."""
    X, Y = grid2d.meshgrid()
    dx_, dy_ = X - center[0], Y - center[1]
    psi = (dx_ + 1j * dy_) * np.exp(-(dx_ ** 2 + dy_ ** 2) / (2.0 * sigma * sigma))
    return ComplexField(grid2d, psi).normalize()


def product_state(grid2d, psi1, psi2):
    """psi1(x) * psi2(y) on the 2D configuration grid."""
    return ComplexField(grid2d, np.outer(psi1.values, psi2.values)).normalize()


def symmetrized_product(grid2d, phi_a, phi_b, sign=+1):
    """(phi_a(x) phi_b(y) +/- phi_b(x) phi_a(y)) / norm."""
    vals = (np.outer(phi_a.values, phi_b.values)
            + sign * np.outer(phi_b.values, phi_a.values))
    return ComplexField(grid2d, vals).normalize()
