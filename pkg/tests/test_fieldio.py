"""Serialization round-trips must be bit-exact."""

import numpy as np
import pytest

from qfd import fieldio
from qfd.fields import ComplexField, RealField
from qfd.grids import Grid1D, Grid2D


def random_complex(grid, seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    return ComplexField(grid, vals)


class TestBinaryRoundTrip:
    def test_complex_1d(self, tmp_path):
        g = Grid1D(64, -3.0, 0.125, "periodic")
        f = random_complex(g, 1)
        p = tmp_path / "f.qfdf"
        fieldio.save_field(f, p)
        f2 = fieldio.load_field(p)
        assert f2.grid == g
        assert np.array_equal(f2.values, f.values)

    def test_real_2d(self, tmp_path):
        g = Grid2D(Grid1D(16, 0.0, 0.5, "dirichlet"), Grid1D(24, -1.0, 0.25, "periodic"))
        rng = np.random.default_rng(2)
        f = RealField(g, rng.normal(size=g.shape))
        p = tmp_path / "f.qfdf"
        fieldio.save_field(f, p)
        f2 = fieldio.load_field(p)
        assert f2.grid == g
        assert np.array_equal(f2.values, f.values)

    def test_header_size(self):
        assert fieldio._HEADER.size == 64

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.qfdf"
        p.write_bytes(b"NOPE" + bytes(80))
        with pytest.raises(ValueError, match="magic"):
            fieldio.load_field(p)

    def test_rdm_variant(self, tmp_path):
        g = Grid1D(32, -2.0, 0.125, "dirichlet")
        rng = np.random.default_rng(3)
        m = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
        p = tmp_path / "rdm.qfdf"
        fieldio.save_rdm_matrix(g, m, 1.375, p)
        g2, m2, t = fieldio.load_rdm_matrix(p)
        assert g2 == g
        assert t == 1.375
        assert np.array_equal(m2, m)

    def test_rdm_loader_rejects_plain_field(self, tmp_path):
        g = Grid1D(16, 0.0, 0.1)
        p = tmp_path / "f.qfdf"
        fieldio.save_field(RealField(g, np.zeros(16)), p)
        with pytest.raises(ValueError):
            fieldio.load_rdm_matrix(p)
        fieldio.save_rdm_matrix(g, np.zeros((16, 16), dtype=complex), 0.0, p)
        with pytest.raises(ValueError):
            fieldio.load_field(p)


class TestCsvRoundTrip:
    def test_complex_1d(self, tmp_path):
        g = Grid1D(48, -1.5, 0.0625)
        f = random_complex(g, 4)
        p = tmp_path / "f.csv"
        fieldio.save_field_csv(f, p)
        f2 = fieldio.load_field_csv(p, g)
        assert np.array_equal(f2.values, f.values)

    def test_real_2d(self, tmp_path):
        g = Grid2D(Grid1D(12, 0.0, 0.5), Grid1D(10, 0.0, 0.5))
        rng = np.random.default_rng(5)
        f = RealField(g, rng.normal(size=g.shape))
        p = tmp_path / "f.csv"
        fieldio.save_field_csv(f, p)
        f2 = fieldio.load_field_csv(p, g)
        assert np.array_equal(f2.values, f.values)
