import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpfel.grid import Grid
from mpfel.phasefield import (
    PHI_CUT,
    InstabilityError,
    KineticParams,
    PhaseState,
    interface_profile,
    interfacial_driving_force,
    mpf_update,
)

DX = 1e-4
ETA_CELLS = 10
K = KineticParams(eta=ETA_CELLS * DX, gamma=0.5, mobility=3e-7, dt=8e-3)


def dual_profile_state(n=128, lo=40.0, hi=None, grid=None):
    """Periodic two-phase slab with equilibrium profiles at cells lo and hi."""
    grid = grid or Grid((n, 4), DX)
    hi = hi if hi is not None else grid.dims[0] - lo
    x = np.arange(grid.dims[0], dtype=float)[:, None] * np.ones((1,) + grid.dims[1:])
    phi_b = np.clip(
        interface_profile((x - lo) * DX, K.eta) + interface_profile((hi - x) * DX, K.eta) - 1.0,
        0.0,
        1.0,
    )
    state = PhaseState(grid, 2)
    state.set_fractions(np.stack([1.0 - phi_b, phi_b]))
    return state, x


def interfacial_dg(state, k):
    """Pairwise interfacial driving forces on the cached Laplacians."""
    dg = {}
    for i in range(state.n_phases):
        for j in range(i + 1, state.n_phases):
            dg[(i, j)] = interfacial_driving_force(
                state.phi[i], state.phi[j], state.lap[i], state.lap[j], k
            )
    return dg


def evolve(state, k, steps, extra=None):
    """Interfacial-only evolution, optionally with a constant extra force."""
    reports = []
    for _ in range(steps):
        state.refresh_derivatives()
        state.activate_neighbors()
        dg = interfacial_dg(state, k)
        if extra is not None:
            for pair, val in extra.items():
                dg[pair] = dg[pair] + val
        reports.append(mpf_update(state, dg, k))
    return reports


def midpoint_position(phi):
    """Subcell 0.5-crossing of the slab's right (descending) interface."""
    line = phi[:, 0] if phi.ndim == 2 else phi[:, 0, 0]
    above = line >= 0.5
    idx = np.flatnonzero(above[:-1] & ~above[1:])[0]
    y0, y1 = line[idx], line[idx + 1]
    return idx + (0.5 - y0) / (y1 - y0)


class TestKineticParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            KineticParams(eta=0.0, gamma=0.5, mobility=1e-7, dt=1e-6)
        with pytest.raises(ValueError):
            KineticParams(eta=1e-3, gamma=-1.0, mobility=1e-7, dt=1e-6)

    def test_stability_number(self):
        assert K.stability_number(DX) == pytest.approx(8e-3 * 3e-7 * 0.5 / DX**2)
        assert K.stability_number(DX) < 0.25


class TestInterfacialDrivingForce:
    def test_bulk_cell_formula_value(self):
        # lone phase against an absent partner: the raw formula gives 4*gamma/eta
        val = interfacial_driving_force(1.0, 0.0, 0.0, 0.0, K)
        assert val == pytest.approx(4 * K.gamma / K.eta, rel=1e-13)

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        pa, pb = rng.random(2)
        la, lb = rng.standard_normal(2) * 1e6
        assert interfacial_driving_force(pa, pb, la, lb, K) == pytest.approx(
            -interfacial_driving_force(pb, pa, lb, la, K), rel=1e-13
        )

    def test_symmetric_state_zero(self):
        assert interfacial_driving_force(0.4, 0.4, 2e5, 2e5, K) == 0.0

    def test_equilibrium_profile_near_zero(self):
        state, _ = dual_profile_state()
        state.refresh_derivatives()
        dg = interfacial_driving_force(
            state.phi[0], state.phi[1], state.lap[0], state.lap[1], K
        )
        band = (state.phi[0] > 0.05) & (state.phi[0] < 0.95)
        scale = 4 * K.gamma / K.eta
        assert np.max(np.abs(dg[band])) < 0.01 * scale


class TestPhaseState:
    def test_set_fractions_normalizes(self):
        g = Grid((8, 8), 1.0)
        s = PhaseState(g, 2)
        s.set_fractions(np.stack([np.full(g.dims, 2.0), np.full(g.dims, 6.0)]))
        assert np.allclose(s.phi.sum(axis=0), 1.0)
        assert np.allclose(s.phi[0], 0.25)

    def test_rejects_negative(self):
        g = Grid((8, 8), 1.0)
        s = PhaseState(g, 2)
        with pytest.raises(ValueError):
            s.set_fractions(np.stack([np.full(g.dims, -0.1), np.full(g.dims, 1.1)]))

    def test_cell_view_is_sparse(self):
        state, _ = dual_profile_state()
        assert state.cell((2, 0)) == [(0, 1.0)]
        entries = dict(state.cell((40, 0)))
        assert set(entries) == {0, 1}
        assert state.cell((64, 0)) == [(1, 1.0)]

    def test_tiny_fractions_pruned(self):
        g = Grid((8, 8), 1.0)
        s = PhaseState(g, 2)
        phi0 = np.full(g.dims, 1.0 - PHI_CUT / 10)
        s.set_fractions(np.stack([phi0, 1.0 - phi0]))
        assert np.all(s.phi[1] == 0.0)
        assert np.all(s.phi[0] == 1.0)


class TestActivateNeighbors:
    def test_bulk_unchanged(self):
        state, _ = dual_profile_state()
        before = state.active.copy()
        state.activate_neighbors()
        assert np.array_equal(state.active[:, 2, :], before[:, 2, :])

    def test_interface_cell_gains_approaching_phase(self):
        g = Grid((8, 4), 1.0)
        s = PhaseState(g, 2)
        phi1 = np.zeros(g.dims)
        phi1[:4] = 1.0
        s.set_fractions(np.stack([1.0 - phi1, phi1]))
        assert not s.active[1, 4, 0]
        s.activate_neighbors()
        assert s.active[1, 4, 0]
        assert s.phi[1, 4, 0] == 0.0  # fraction untouched
        assert not s.active[1, 6, 0]  # two cells away stays closed

    def test_fully_mixed_junction_unchanged(self):
        g = Grid((8, 8), 1.0)
        s = PhaseState(g, 3)
        s.set_fractions(np.full((3,) + g.dims, 1 / 3))
        before = s.active.copy()
        s.activate_neighbors()
        assert np.array_equal(s.active, before)

    def test_sum_unchanged(self):
        state, _ = dual_profile_state()
        total = state.phi.sum()
        state.activate_neighbors()
        assert state.phi.sum() == total


class TestMpfUpdate:
    def test_zero_forces_fixed_point(self):
        state, _ = dual_profile_state()
        before = state.phi.copy()
        state.refresh_derivatives()
        rep = mpf_update(state, {(0, 1): np.zeros(state.grid.dims)}, K)
        assert np.allclose(state.phi, before, atol=1e-15)
        assert rep.ok

    def test_equilibrium_profile_stationary(self):
        state, _ = dual_profile_state()
        evolve(state, K, 50)  # settle onto the discrete equilibrium
        before = state.phi.copy()
        evolve(state, K, 1)
        assert np.max(np.abs(state.phi - before)) <= 1e-4

    def test_conservation(self):
        state, _ = dual_profile_state()
        total0 = state.phi.sum()
        rng = np.random.default_rng(1)
        for _ in range(20):
            state.refresh_derivatives()
            state.activate_neighbors()
            dg = interfacial_dg(state, K)
            dg[(0, 1)] = dg[(0, 1)] + 1e3 * rng.standard_normal(state.grid.dims)
            mpf_update(state, dg, K)
        assert state.phi.sum() == pytest.approx(total0, rel=1e-10)
        assert np.allclose(state.phi.sum(axis=0), 1.0, atol=1e-12)

    def test_traveling_wave_speed(self):
        dg0 = 4e3
        state, _ = dual_profile_state(n=256, lo=60.0, hi=130.0, grid=Grid((256, 4), DX))
        evolve(state, K, 100, extra={(0, 1): -dg0})  # transients
        x0 = midpoint_position(state.phi[1])
        steps = 200
        evolve(state, K, steps, extra={(0, 1): -dg0})
        x1 = midpoint_position(state.phi[1])
        v_measured = (x1 - x0) * DX / (steps * K.dt)
        v_expected = K.mobility * dg0  # phase 1 grows when dg_(0,1) < 0
        assert v_measured == pytest.approx(v_expected, rel=0.05)

    def test_instability_reported(self):
        state, _ = dual_profile_state()
        state.refresh_derivatives()
        rep = mpf_update(state, {(0, 1): np.full(state.grid.dims, 1e9)}, K)
        assert not rep.ok
        assert rep.max_phi > 1.1
        with pytest.raises(InstabilityError):
            raise InstabilityError(rep)

    def test_width_preserved_over_500_steps(self):
        state, x = dual_profile_state(n=128, lo=40.0)
        evolve(state, K, 500)
        line = state.phi[1][:, 0]
        lo = np.interp(0.05, line[20:60], x[20:60, 0])
        hi = np.interp(0.95, line[20:60], x[20:60, 0])
        # level-set distance maps back to the profile width parameter
        fitted_eta = (hi - lo) * DX / (2 * np.arcsin(0.9) / np.pi)
        assert fitted_eta == pytest.approx(K.eta, rel=0.10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=10, deadline=None)
    def test_projection_keeps_simplex(self, seed):
        rng = np.random.default_rng(seed)
        g = Grid((8, 8), 1.0)
        s = PhaseState(g, 3)
        raw = rng.random((3,) + g.dims) + 1e-3
        s.set_fractions(raw)
        s.refresh_derivatives()
        dg = {
            (i, j): 5e4 * rng.standard_normal(g.dims)
            for i in range(3)
            for j in range(i + 1, 3)
        }
        mpf_update(s, dg, KineticParams(eta=5.0, gamma=0.5, mobility=1e-4, dt=1.0))
        assert np.allclose(s.phi.sum(axis=0), 1.0, atol=1e-12)
        assert np.all(s.phi >= 0.0)
        assert np.all(s.phi <= 1.0)
        assert np.all((s.phi == 0.0) | (s.phi >= PHI_CUT / 2))


class TestInterfaceProfile:
    def test_limits_and_midpoint(self):
        eta = 1.0
        assert interface_profile(-1.0, eta) == 0.0
        assert interface_profile(1.0, eta) == 1.0
        assert interface_profile(0.0, eta) == pytest.approx(0.5)

    def test_monotone(self):
        s = np.linspace(-1, 1, 201)
        p = interface_profile(s, 1.0)
        assert np.all(np.diff(p) >= 0)
