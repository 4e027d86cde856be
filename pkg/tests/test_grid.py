import numpy as np
import pytest

from mpfel.grid import (
    Grid,
    SphereAverager,
    averaging_radius_cells,
    gradient,
    gradient_and_laplacian,
    laplacian,
    sphere_average,
)


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid((3, 8), 1.0)
        with pytest.raises(ValueError):
            Grid((8, 8), 0.0)
        with pytest.raises(ValueError):
            Grid((8,), 1.0)
        g = Grid((8, 4, 16), 2.0)
        assert g.ncells == 8 * 4 * 16
        assert g.dim == 3


class TestStencils:
    def test_constant_field(self):
        g = Grid((8, 8, 8), 0.5)
        f = np.full(g.dims, 3.2)
        assert np.allclose(gradient(f, g), 0.0)
        assert np.allclose(laplacian(f, g), 0.0, atol=1e-12)

    def test_sinusoid_gradient_within_1pct_at_64(self):
        n, dx = 64, 0.01
        g = Grid((n, 8, 8), dx)
        L = n * dx
        x = (np.arange(n) * dx)[:, None, None] * np.ones((1, 8, 8))
        f = np.sin(2 * np.pi * x / L)
        df = gradient(f, g)
        exact = (2 * np.pi / L) * np.cos(2 * np.pi * x / L)
        assert np.max(np.abs(df[0] - exact)) <= 0.01 * np.max(np.abs(exact))
        assert np.allclose(df[1], 0.0, atol=1e-12)
        assert np.allclose(df[2], 0.0, atol=1e-12)

    def test_axis_only_dependence(self):
        g = Grid((8, 16, 8), 1.0)
        y = np.arange(16)[None, :, None] * np.ones((8, 1, 8))
        f = np.sin(2 * np.pi * y / 16)
        df = gradient(f, g)
        assert np.allclose(df[0], 0.0, atol=1e-14)
        assert np.allclose(df[2], 0.0, atol=1e-14)

    def test_sinusoid_laplacian(self):
        n, dx = 64, 0.25
        g = Grid((n, 4, 4), dx)
        L = n * dx
        x = (np.arange(n) * dx)[:, None, None] * np.ones((1, 4, 4))
        f = np.sin(2 * np.pi * x / L)
        lap = laplacian(f, g)
        exact = -((2 * np.pi / L) ** 2) * f
        assert np.max(np.abs(lap - exact)) <= 0.01 * np.max(np.abs(exact))

    def test_equilibrium_profile_identity(self):
        # f = (1 + cos(pi x / eta)) / 2 satisfies lap f = -(pi/eta)^2 (f - 1/2)
        n, dx = 128, 1e-4
        eta = 10 * dx
        g = Grid((n, 4, 4), dx)
        x = (np.arange(n) * dx)[:, None, None] * np.ones((1, 4, 4))
        x0 = 32 * dx
        f = np.where(np.abs(x - x0) <= eta, 0.5 * (1 + np.cos(np.pi * (x - x0) / eta)), 0.0)
        lap = laplacian(f, g)
        resid = lap + (np.pi / eta) ** 2 * (f - 0.5)
        # check on the interior of the profile, away from the clamp points
        mask = np.abs(x - x0) <= 0.8 * eta
        scale = (np.pi / eta) ** 2 * 0.5
        assert np.max(np.abs(resid[mask])) <= 0.01 * scale

    def test_linearity(self):
        g = Grid((8, 8), 1.0)
        rng = np.random.default_rng(0)
        f1, f2 = rng.random(g.dims), rng.random(g.dims)
        assert np.allclose(
            gradient(2 * f1 + 3 * f2, g), 2 * gradient(f1, g) + 3 * gradient(f2, g), atol=1e-13
        )
        assert np.allclose(
            laplacian(2 * f1 + 3 * f2, g), 2 * laplacian(f1, g) + 3 * laplacian(f2, g), atol=1e-12
        )

    def test_quadratic_reproduced_in_interior(self):
        # centered quadratic: exact derivative away from the periodic wrap
        n, dx = 32, 0.5
        g = Grid((n, 4), dx)
        x = (np.arange(n) * dx)[:, None] * np.ones((1, 4))
        f = (x - 8.0) ** 2
        df = gradient(f, g)
        lap = laplacian(f, g)
        interior = slice(1, n - 1)
        assert np.allclose(df[0][interior], 2 * (x[interior] - 8.0), rtol=1e-12)
        assert np.allclose(lap[interior], 2.0, rtol=1e-12)

    def test_combined_matches_separate(self):
        g = Grid((8, 8, 8), 0.3)
        rng = np.random.default_rng(1)
        f = rng.random(g.dims)
        grad, lap = gradient_and_laplacian(f, g)
        assert np.allclose(grad, gradient(f, g), atol=1e-15)
        assert np.allclose(lap, laplacian(f, g), atol=1e-15)


class TestSphereAverage:
    def test_radius_formula(self):
        assert averaging_radius_cells(5) == pytest.approx(4.0)
        assert averaging_radius_cells(10) == pytest.approx(6.5)

    def test_constant_unchanged(self):
        g = Grid((8, 8, 8), 1.0)
        f = np.full(g.dims, 1.7)
        assert np.allclose(sphere_average(f, g, 2.0), f, atol=1e-12)

    def test_radius_zero_identity(self):
        g = Grid((8, 8), 1.0)
        rng = np.random.default_rng(2)
        f = rng.random(g.dims)
        assert np.array_equal(sphere_average(f, g, 0.0), f)

    def test_unit_spike_radius_one_3d(self):
        g = Grid((8, 8, 8), 1.0)
        f = np.zeros(g.dims)
        f[4, 4, 4] = 1.0
        avg = sphere_average(f, g, 1.0)
        assert avg[4, 4, 4] == pytest.approx(1 / 7, abs=1e-12)
        for off in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            assert avg[4 + off[0], 4 + off[1], 4 + off[2]] == pytest.approx(1 / 7, abs=1e-12)
        assert avg[5, 5, 4] == pytest.approx(0.0, abs=1e-12)
        assert np.sum(avg) == pytest.approx(1.0, rel=1e-12)

    def test_mean_preserved(self):
        g = Grid((16, 12, 8), 1.0)
        rng = np.random.default_rng(3)
        f = rng.random(g.dims)
        avg = sphere_average(f, g, 3.0)
        assert np.mean(avg) == pytest.approx(np.mean(f), rel=1e-12)

    def test_matches_direct_enumeration_2d(self):
        g = Grid((8, 8), 1.0)
        rng = np.random.default_rng(4)
        f = rng.random(g.dims)
        r = 2.0
        avg = sphere_average(f, g, r)
        offs = [
            (i, j)
            for i in range(-2, 3)
            for j in range(-2, 3)
            if i * i + j * j <= r * r + 1e-12
        ]
        ref = sum(np.roll(f, (-i, -j), axis=(0, 1)) for i, j in offs) / len(offs)
        assert np.allclose(avg, ref, atol=1e-12)

    def test_negative_radius_rejected(self):
        g = Grid((8, 8), 1.0)
        with pytest.raises(ValueError):
            SphereAverager(g, -1.0)
