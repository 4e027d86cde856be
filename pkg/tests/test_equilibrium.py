import numpy as np
import pytest

from mpfel import mechanics as mech
from mpfel import tensor as tn
from mpfel.equilibrium import SolverConfig, SolverError, SpectralSolver, choose_reference
from mpfel.grid import Grid
from mpfel.phasefield import interface_profile


def linear_material(c_field_ops, eigen_c):
    """sigma(x) = C(x) : (eps(x) - eps*(x)) as a per-cell closure."""

    def fn(eps):
        out = np.empty_like(eps)
        for op, cells in c_field_ops:
            out[cells] = (eps[cells] - eigen_c[cells]) @ op.T
        return out

    return fn


class TestChooseReference:
    def test_single_phase(self):
        c = tn.Stiffness.isotropic(120e9, 80e9, dim=3)
        spec = mech.PhaseSpec("x", c, np.zeros((3, 3)))
        assert np.allclose(choose_reference([spec]).c, c.c)

    def test_two_equal(self):
        c = tn.Stiffness.isotropic(100e9, 60e9, dim=2)
        specs = [mech.PhaseSpec(n, c, np.zeros((2, 2))) for n in "ab"]
        assert np.allclose(choose_reference(specs).c, c.c)

    def test_componentwise_mean_of_isotropic(self):
        c1 = tn.Stiffness.isotropic(120e9, 80e9, dim=3)
        c2 = tn.Stiffness.isotropic(109e9, 71e9, dim=3)
        specs = [
            mech.PhaseSpec("a", c1, np.zeros((3, 3))),
            mech.PhaseSpec("b", c2, np.zeros((3, 3))),
        ]
        ref = choose_reference(specs)
        assert ref.c[0, 1, 0, 1] == pytest.approx(75.5e9, rel=1e-13)  # mu
        assert ref.c[0, 0, 1, 1] == pytest.approx(114.5e9, rel=1e-13)  # lambda

    def test_isotropic_projection_of_isotropic_is_identity(self):
        c = tn.Stiffness.isotropic(37e9, 29e9, dim=3)
        spec = mech.PhaseSpec("x", c, np.zeros((3, 3)))
        ref = choose_reference([spec], isotropic_projection=True)
        assert np.allclose(ref.c, c.c, rtol=1e-12)


class TestUniformProblems:
    def test_single_phase_one_iteration(self):
        grid = Grid((8, 8, 8), 1e-4)
        c = tn.Stiffness.isotropic(120e9, 80e9, dim=3)
        solver = SpectralSolver(grid, c)
        eps_bar = np.diag([0.01, -0.002, 0.004])

        def sigma_fn(eps):
            return eps @ c.op.T

        res = solver.solve(sigma_fn, eps_bar, tolerance=1e-10)
        assert res.iterations == 1
        assert np.allclose(res.eps, tn.compress(eps_bar)[None, :], atol=1e-15)

    def test_mean_strain_exact(self):
        grid = Grid((16, 8), 2e-5)
        c = tn.Stiffness.isotropic(100e9, 60e9, dim=2)
        solver = SpectralSolver(grid, c)
        rng = np.random.default_rng(0)
        eigen = 0.01 * rng.standard_normal((grid.ncells, 3))

        def sigma_fn(eps):
            return (eps - eigen) @ c.op.T

        eps_bar = np.array([[0.002, 0.001], [0.001, -0.003]])
        out = solver.solve(sigma_fn, eps_bar, tolerance=1e-9)
        assert np.allclose(out.eps.mean(axis=0), tn.compress(eps_bar), atol=1e-12)


class TestLaminate:
    def _setup(self, n=64, eta_cells=8.0):
        grid = Grid((n, 4, 4), 1e-4)
        c = tn.Stiffness.isotropic(120e9, 80e9, dim=3)
        bain_a = np.diag([-0.01, -0.01, 0.02])
        bain_b = np.diag([0.02, -0.01, -0.01])
        x = np.arange(n, dtype=float)
        prof = np.clip(
            interface_profile((x - n / 4) * grid.spacing, eta_cells * grid.spacing)
            + interface_profile((3 * n / 4 - x) * grid.spacing, eta_cells * grid.spacing)
            - 1.0,
            0,
            1,
        )
        phi_b = np.broadcast_to(prof[:, None, None], grid.dims).reshape(-1)
        eigen = (1 - phi_b)[:, None] * tn.compress(bain_a) + phi_b[:, None] * tn.compress(bain_b)
        return grid, c, bain_a, bain_b, eigen, phi_b

    def test_bulk_values_match_sharp_laminate(self):
        grid, c, bain_a, bain_b, eigen, phi_b = self._setup()
        solver = SpectralSolver(grid, c)
        eps_bar = np.diag([0.004, 0.001, -0.002])

        def sigma_fn(eps):
            return (eps - eigen) @ c.op.T

        out = solver.solve(sigma_fn, eps_bar, tolerance=1e-10)
        # sharp laminate with normal e1 and equal fractions
        spec_a = mech.PhaseSpec("a", c, bain_a)
        spec_b = mech.PhaseSpec("b", c, bain_b)
        n_vec = np.array([1.0, 0.0, 0.0])
        a = mech.jump_vector(eps_bar, 0.5, 0.5, spec_a, spec_b, n_vec)
        e_a = mech.pairwise_strain(eps_bar, 0.5, 0.5, a, n_vec)
        e_b = mech.pairwise_strain(eps_bar, 0.5, 0.5, -a, n_vec)
        eps_field = out.eps.reshape(grid.dims + (6,))
        mid_a = eps_field[0, 0, 0]  # deep in phase a
        mid_b = eps_field[32, 0, 0]  # deep in phase b
        assert np.allclose(tn.expand(mid_a), e_a, atol=1e-3 * np.abs(e_a).max())
        assert np.allclose(tn.expand(mid_b), e_b, atol=1e-3 * np.abs(e_b).max())
        # traction continuity: normal stress is uniform along the axis
        sig_field = out.sigma.reshape(grid.dims + (6,))
        sigma_xx = sig_field[:, 0, 0, 0]
        assert np.ptp(sigma_xx) <= 1e-6 * np.abs(sigma_xx).mean()

    def test_residual_history_monotone_after_settling(self):
        grid, c, bain_a, bain_b, eigen, phi_b = self._setup()
        c_soft = tn.Stiffness.isotropic(100e9, 65e9, dim=3)  # mismatched reference
        solver = SpectralSolver(grid, c_soft)

        def sigma_fn(eps):
            return (eps - eigen) @ c.op.T

        out = solver.solve(sigma_fn, np.zeros((3, 3)), tolerance=1e-10)
        r = out.residuals
        assert len(r) > 3
        assert all(r[k + 1] <= r[k] * (1 + 1e-9) for k in range(3, len(r) - 1))

    def test_translation_invariance(self):
        grid, c, bain_a, bain_b, eigen, phi_b = self._setup(n=32)
        solver = SpectralSolver(grid, c)
        eps_bar = np.diag([0.002, 0.0, 0.001])

        def make_fn(eig):
            return lambda eps: (eps - eig) @ c.op.T

        out1 = solver.solve(make_fn(eigen), eps_bar, tolerance=1e-11)
        shift = 7
        eig_field = eigen.reshape(grid.dims + (6,))
        eig_shift = np.roll(eig_field, shift, axis=0).reshape(-1, 6)
        out2 = solver.solve(make_fn(eig_shift), eps_bar, tolerance=1e-11)
        e1 = out1.eps.reshape(grid.dims + (6,))
        e2 = np.roll(out2.eps.reshape(grid.dims + (6,)), -shift, axis=0)
        assert np.allclose(e1, e2, atol=1e-9 * np.abs(e1).max())


class TestHeterogeneousStiffness:
    def test_two_phase_contrast_converges(self):
        grid = Grid((32, 32), 1e-6)
        c1 = tn.Stiffness.isotropic(107e9, 64e9, dim=2)
        c2 = tn.Stiffness.isotropic(109e9, 71e9, dim=2)
        x = np.arange(32)
        mask = ((x[:, None] - 16) ** 2 + (x[None, :] - 16) ** 2 < 64).reshape(-1)
        cells1 = np.flatnonzero(~mask)
        cells2 = np.flatnonzero(mask)
        eigen = np.zeros((grid.ncells, 3))
        eigen[cells2] = tn.compress(np.diag([0.02, -0.01]))
        sigma_fn = linear_material([(c1.op, cells1), (c2.op, cells2)], eigen)
        specs = [
            mech.PhaseSpec("m", c1, np.zeros((2, 2))),
            mech.PhaseSpec("i", c2, np.zeros((2, 2))),
        ]
        solver = SpectralSolver(grid, choose_reference(specs))
        out = solver.solve(sigma_fn, np.zeros((2, 2)), tolerance=1e-8)
        assert out.residuals[-1] <= 1e-8
        assert out.iterations < 100
        assert np.allclose(out.eps.mean(axis=0), 0.0, atol=1e-12)

    def test_nonconvergence_raises_with_history(self):
        grid = Grid((8, 8), 1e-6)
        c = tn.Stiffness.isotropic(107e9, 64e9, dim=2)
        rng = np.random.default_rng(1)
        eigen = 0.01 * rng.standard_normal((grid.ncells, 3))

        def sigma_fn(eps):
            return (eps - eigen) @ c.op.T

        # hopeless reference: far too stiff for one iteration to converge
        solver = SpectralSolver(grid, tn.Stiffness.isotropic(1070e9, 640e9, dim=2))
        with pytest.raises(SolverError) as err:
            solver.solve(sigma_fn, np.zeros((2, 2)), tolerance=1e-14, max_iterations=2)
        assert len(err.value.residual_history) == 2


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(eps_bar=np.zeros(6), tolerance=0.0)
        with pytest.raises(ValueError):
            SolverConfig(eps_bar=np.zeros(6), max_iterations=0)
