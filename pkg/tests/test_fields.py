"""Grid containers and finite-difference operator contracts."""

import numpy as np
import pytest

from qfd.fields import (ComplexField, RealField, gradient, integrate,
                        integration_weights, laplacian)
from qfd.grids import Grid1D, Grid2D


def make_grid(n=256, x_min=-8.0, x_max=8.0, boundary="periodic"):
    return Grid1D.from_extent(n, x_min, x_max, boundary)


class TestGridValidation:
    def test_too_few_points(self):
        with pytest.raises(ValueError):
            Grid1D(4, 0.0, 0.1)

    def test_nonpositive_dx(self):
        with pytest.raises(ValueError):
            Grid1D(16, 0.0, -0.1)

    def test_bad_boundary(self):
        with pytest.raises(ValueError):
            Grid1D(16, 0.0, 0.1, "reflecting")

    def test_coordinates(self):
        g = Grid1D(16, -1.0, 0.25)
        assert g.x[0] == -1.0
        assert np.allclose(np.diff(g.x), 0.25)

    def test_field_shape_mismatch(self):
        g = make_grid(64)
        with pytest.raises(ValueError):
            RealField(g, np.zeros(63))


class TestGradient:
    def test_linear_function_dirichlet_interior(self):
        # f(x) = x has exact central derivative 1 at interior points
        g = make_grid(128, boundary="dirichlet")
        f = RealField(g, g.x.copy())
        df = gradient(f).values
        assert np.allclose(df, 1.0, atol=1e-12)

    def test_sine_closed_form(self):
        # oracle: d/dx sin(kx) = k cos(kx), second-order error bound
        g = make_grid(256, 0.0, 2.0 * np.pi)
        k = 3.0
        f = RealField(g, np.sin(k * g.x))
        df = gradient(f).values
        err = np.max(np.abs(df - k * np.cos(k * g.x)))
        bound = (k * g.dx) ** 2 / 6.0 * k   # |f'''| h^2/6
        assert err <= 1.05 * bound

    def test_constant_is_zero(self):
        for boundary in ("periodic", "dirichlet"):
            g = make_grid(64, boundary=boundary)
            df = gradient(RealField(g, np.full(64, 2.5))).values
            assert np.max(np.abs(df)) < 1e-13

    def test_axis_out_of_range(self):
        g = make_grid(64)
        with pytest.raises(ValueError):
            gradient(RealField(g, np.zeros(64)), axis=1)


class TestLaplacian:
    def test_quadratic_exact(self):
        # x^2 is exact under the 3-point stencil, including one-sided edges
        g = make_grid(128, boundary="dirichlet")
        lap = laplacian(RealField(g, g.x ** 2)).values
        assert np.allclose(lap, 2.0, atol=1e-10)

    def test_sine_closed_form(self):
        g = make_grid(256, 0.0, 2.0 * np.pi)
        k = 2.0
        f = RealField(g, np.sin(k * g.x))
        lap = laplacian(f).values
        err = np.max(np.abs(lap + k * k * np.sin(k * g.x)))
        bound = k ** 4 * g.dx ** 2 / 12.0
        assert err <= 1.05 * bound

    def test_constant_is_zero(self):
        g = make_grid(64, boundary="dirichlet")
        assert np.max(np.abs(laplacian(RealField(g, np.ones(64))).values)) < 1e-12

    def test_2d_additivity(self):
        # grid-periodic test function: sin over one box, cos over two
        gx = make_grid(64, 0.0, 2.0 * np.pi)
        gy = make_grid(96, 0.0, 4.0 * np.pi)
        g2 = Grid2D(gx, gy)
        X, Y = g2.meshgrid()
        f = RealField(g2, np.sin(X) * np.cos(Y))
        lap = laplacian(f).values
        exact = -2.0 * np.sin(X) * np.cos(Y)
        bound = gx.dx ** 2 / 12.0 + gy.dx ** 2 / 12.0   # h^2 f''''/12 per axis
        assert np.max(np.abs(lap - exact)) < 1.05 * bound


class TestOperatorProperties:
    def test_linearity(self):
        g = make_grid(128)
        rng = np.random.default_rng(11)
        f = RealField(g, rng.normal(size=128))
        h = RealField(g, rng.normal(size=128))
        a, b = 2.5, -1.25
        for op in (gradient, laplacian):
            lhs = op(RealField(g, a * f.values + b * h.values)).values
            rhs = a * op(f).values + b * op(h).values
            assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(rhs)))

    def test_periodic_gradient_integrates_to_zero(self):
        g = make_grid(200)
        rng = np.random.default_rng(5)
        f = RealField(g, rng.normal(size=200))
        assert abs(integrate(gradient(f))) < 1e-12

    def test_second_order_convergence(self):
        # halving dx shrinks the max error by a factor in [3.5, 4.5]
        def max_err(n):
            g = make_grid(n, 0.0, 2.0 * np.pi)
            f = RealField(g, np.sin(2.0 * g.x))
            e_g = np.max(np.abs(gradient(f).values - 2.0 * np.cos(2.0 * g.x)))
            e_l = np.max(np.abs(laplacian(f).values + 4.0 * np.sin(2.0 * g.x)))
            return e_g, e_l
        eg1, el1 = max_err(128)
        eg2, el2 = max_err(256)
        assert 3.5 <= eg1 / eg2 <= 4.5
        assert 3.5 <= el1 / el2 <= 4.5

    def test_second_order_convergence_dirichlet_edges(self):
        def max_err(n):
            g = make_grid(n, 0.2, 2.0, boundary="dirichlet")
            f = RealField(g, np.exp(g.x))
            return np.max(np.abs(laplacian(f).values - np.exp(g.x)))
        assert 3.5 <= max_err(200) / max_err(400) <= 4.5


class TestIntegrate:
    def test_normalized_density(self):
        g = make_grid(256)
        psi = ComplexField(g, np.exp(-g.x ** 2 + 0.3j * g.x)).normalize()
        assert abs(integrate(psi.density()) - 1.0) < 1e-12

    def test_gaussian_closed_form(self):
        # oracle: integral of exp(-x^2/2)/sqrt(2 pi) over [-10, 10] is 1
        g = Grid1D(2000, -10.0, 0.01, "dirichlet")
        f = RealField(g, np.exp(-g.x ** 2 / 2.0) / np.sqrt(2.0 * np.pi))
        assert abs(integrate(f) - 1.0) < 1e-8

    def test_zero_field(self):
        g = make_grid(64)
        assert integrate(RealField(g, np.zeros(64))) == 0.0

    def test_2d_weights(self):
        # trapezoid halving: dirichlet axis weights sum to (n-1) dx
        g2 = Grid2D(make_grid(32, 0, 1, "dirichlet"), make_grid(32, 0, 1, "dirichlet"))
        w = integration_weights(g2)
        per_axis = 31.0 / 32.0
        assert abs(np.sum(w) - per_axis ** 2) < 1e-12


class TestNormalize:
    def test_norm_invariant(self):
        g = make_grid(512, -10, 10)
        psi = ComplexField(g, np.exp(-g.x ** 2 / 3.0) * (1 + 2j)).normalize()
        total = np.sum(np.abs(psi.values) ** 2) * g.cell_volume
        assert abs(total - 1.0) < 1e-12

    def test_zero_field_rejected(self):
        g = make_grid(64)
        with pytest.raises(ValueError):
            ComplexField(g, np.zeros(64, dtype=complex)).normalize()
