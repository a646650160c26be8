"""Grid container: geometry, densities, calculus, serialization round-trips."""

import numpy as np
import pytest

from pdeopt.grid import (
    GridFunction,
    gaussian_density,
    gradient,
    interior_max_second_difference,
    second_difference,
)


class TestGeometry:
    def test_spacing_and_axes(self):
        g = GridFunction.geometry([-1.0], [1.0], [5])
        assert g.spacing[0] == pytest.approx(0.5)
        np.testing.assert_allclose(g.axes()[0], [-1, -0.5, 0, 0.5, 1])

    def test_2d_points_row_major(self):
        g = GridFunction.geometry([0.0, 0.0], [1.0, 2.0], [3, 5])
        pts = g.points()
        assert pts.shape == (15, 2)
        # row-major: the second coordinate varies fastest
        np.testing.assert_allclose(pts[0], [0.0, 0.0])
        np.testing.assert_allclose(pts[1], [0.0, 0.5])
        np.testing.assert_allclose(pts[5], [0.5, 0.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            GridFunction.geometry([0.0], [1.0], [2])       # < 3 points
        with pytest.raises(ValueError):
            GridFunction.geometry([1.0], [0.0], [5])       # inverted box
        with pytest.raises(ValueError):
            GridFunction([0.0], [1.0], (5,), np.zeros(4))  # wrong length
        with pytest.raises(ValueError):
            GridFunction.geometry([0.0] * 3, [1.0] * 3, [4] * 3)  # 3D unsupported

    def test_from_callable(self):
        g = GridFunction.from_callable(lambda P: P[:, 0] ** 2, [-2.0], [2.0], [9])
        np.testing.assert_allclose(g.values, g.axes()[0] ** 2)


class TestDensity:
    def test_gaussian_density_normalized(self):
        g = GridFunction.geometry([-6.0], [6.0], [301])
        rho = gaussian_density(g, [0.5], 0.3)
        assert rho.is_density()
        assert abs(rho.integral() - 1.0) < 1e-10

    def test_normalized_rejects_zero_mass(self):
        g = GridFunction.geometry([-1.0], [1.0], [11])
        with pytest.raises(ValueError):
            g.with_values(np.zeros(11)).normalized()

    def test_2d_integral(self):
        g = GridFunction.geometry([0.0, 0.0], [1.0, 1.0], [51, 51])
        one = g.with_values(np.ones(51 * 51))
        assert one.integral() == pytest.approx(1.0)


class TestInterp:
    def test_1d_linear(self):
        g = GridFunction.from_callable(lambda P: 3.0 * P[:, 0] + 1.0, [0.0], [1.0], [11])
        assert g.interp([0.37]) == pytest.approx(3 * 0.37 + 1, abs=1e-12)

    def test_2d_bilinear(self):
        g = GridFunction.from_callable(lambda P: 2 * P[:, 0] - P[:, 1], [0.0, 0.0], [1.0, 1.0], [6, 6])
        assert g.interp([0.3, 0.7]) == pytest.approx(2 * 0.3 - 0.7, abs=1e-12)


class TestCalculus:
    def test_gradient_of_quadratic(self):
        g = GridFunction.from_callable(lambda P: P[:, 0] ** 2 / 2, [-1.0], [1.0], [101])
        dg = gradient(g)
        np.testing.assert_allclose(dg.values, g.axes()[0], atol=1e-10)

    def test_second_difference_constant_curvature(self):
        g = GridFunction.from_callable(lambda P: 3.0 * P[:, 0] ** 2, [-1.0], [1.0], [41])
        d2 = second_difference(g)
        np.testing.assert_allclose(d2.array[1:-1], 6.0, atol=1e-8)
        assert interior_max_second_difference(g) == pytest.approx(6.0)


class TestSerialization:
    def test_csv_roundtrip_1d(self, tmp_path):
        g = GridFunction.from_callable(lambda P: np.sin(P[:, 0]), [-2.0], [2.0], [33])
        path = tmp_path / "g.csv"
        g.to_csv(path)
        back = GridFunction.from_csv(path)
        np.testing.assert_allclose(back.values, g.values)
        np.testing.assert_allclose(back.lower, g.lower)
        assert back.n_points == g.n_points
        assert path.read_text().splitlines()[0] == "x,value"

    def test_csv_roundtrip_2d(self, tmp_path):
        g = GridFunction.from_callable(lambda P: P[:, 0] * P[:, 1], [0.0, -1.0], [1.0, 1.0], [5, 7])
        path = tmp_path / "g2.csv"
        g.to_csv(path)
        back = GridFunction.from_csv(path)
        np.testing.assert_allclose(back.values, g.values)
        assert back.n_points == (5, 7)
        assert path.read_text().splitlines()[0] == "x,y,value"

    def test_binary_roundtrip(self, tmp_path):
        g = GridFunction.from_callable(lambda P: np.cos(P[:, 0]) + P[:, 1], [0.0, 0.0], [3.0, 2.0], [9, 5])
        path = tmp_path / "g.bin"
        g.to_binary(path)
        back = GridFunction.from_binary(path)
        np.testing.assert_array_equal(back.values, g.values)
        np.testing.assert_array_equal(back.lower, g.lower)
        np.testing.assert_array_equal(back.upper, g.upper)
        assert back.n_points == g.n_points

    def test_binary_is_little_endian_float64(self, tmp_path):
        g = GridFunction.geometry([0.0], [1.0], [3])
        g.values = np.array([1.0, 2.0, 3.0])
        path = tmp_path / "payload.bin"
        g.to_binary(path)
        raw = path.read_bytes()
        # header: uint32 dim + 2 float64 bounds + uint32 count
        assert len(raw) == 4 + 8 + 8 + 4 + 3 * 8
        np.testing.assert_array_equal(np.frombuffer(raw[-24:], dtype="<f8"), [1.0, 2.0, 3.0])
