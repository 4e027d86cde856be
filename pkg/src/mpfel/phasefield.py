"""Multi-phase-field state and constrained evolution.

The state holds one fraction field per phase, constrained to sum to one at
every cell, with an explicit activity mask: a phase is locally active when
its stored fraction exceeds ``PHI_CUT`` or when neighbor activation has
added it with a zero fraction so it can receive flux.  Updates are explicit
Euler steps on the pairwise driving forces followed by a clamp/prune/
renormalize projection back onto the unit simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, gradient_and_laplacian
from .mechanics import PHI_CUT

SEED_FRACTION = 0.1  # nucleus fraction; also the neighbor-activation threshold


@dataclass(frozen=True)
class KineticParams:
    """Interface width (m), interfacial energy (J/m^2), mobility (m^4/(J s)), dt (s)."""

    eta: float
    gamma: float
    mobility: float
    dt: float

    def __post_init__(self):
        for name in ("eta", "gamma", "mobility", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"kinetic parameter {name} must be positive")

    def stability_number(self, spacing: float) -> float:
        """Explicit-Euler stability indicator; above ~0.25 expect trouble."""
        return self.dt * self.mobility * self.gamma / spacing**2


def interfacial_driving_force(phi_a, phi_b, lap_a, lap_b, k: KineticParams):
    """Curvature-type pairwise force for a uniform interfacial energy.

    ``(4 gamma / eta) [phi_a - phi_b + (eta^2/pi^2)(lap phi_a - lap phi_b)]``;
    antisymmetric in the pair, zero on the equilibrium profile.
    """
    fac = 4.0 * k.gamma / k.eta
    return fac * ((phi_a - phi_b) + (k.eta / np.pi) ** 2 * (lap_a - lap_b))


def interface_profile(s, eta):
    """Equilibrium fraction profile across an interface at signed distance s.

    Compact support of width ``eta``: exactly 0 / 1 beyond the interface,
    ``(1 + sin(pi s / eta)) / 2`` inside.
    """
    s = np.asarray(s, dtype=float)
    inside = 0.5 * (1.0 + np.sin(np.pi * np.clip(s, -eta / 2, eta / 2) / eta))
    return np.where(s <= -eta / 2, 0.0, np.where(s >= eta / 2, 1.0, inside))


@dataclass
class StabilityReport:
    """Pre-projection excursion of the fractions during one update."""

    min_phi: float
    max_phi: float
    n_unstable: int

    @property
    def ok(self) -> bool:
        return self.n_unstable == 0


class InstabilityError(RuntimeError):
    def __init__(self, report: StabilityReport):
        super().__init__(
            f"phase-field update left [-0.1, 1.1] at {report.n_unstable} cells "
            f"(range [{report.min_phi:.3g}, {report.max_phi:.3g}]); time step too large"
        )
        self.report = report


class PhaseState:
    """Fractions, activity masks, and cached derivatives for all phases."""

    def __init__(self, grid: Grid, n_phases: int):
        self.grid = grid
        self.n_phases = n_phases
        shape = (n_phases,) + grid.dims
        self.phi = np.zeros(shape)
        self.active = np.zeros(shape, dtype=bool)
        self.grad = None
        self.lap = None

    # -- views ----------------------------------------------------------------

    @property
    def phi_flat(self):
        return self.phi.reshape(self.n_phases, -1)

    @property
    def active_flat(self):
        return self.active.reshape(self.n_phases, -1)

    @property
    def grad_flat(self):
        return None if self.grad is None else self.grad.reshape(self.n_phases, self.grid.dim, -1)

    def n_active(self):
        return self.active.sum(axis=0)

    def fractions(self):
        """Mean fraction of each phase over the grid."""
        return self.phi.reshape(self.n_phases, -1).mean(axis=1)

    def cell(self, index):
        """Sparse view of one cell: list of (phase id, fraction) pairs."""
        idx = tuple(index)
        return [(p, float(self.phi[p][idx])) for p in range(self.n_phases) if self.active[p][idx]]

    def copy(self):
        out = PhaseState(self.grid, self.n_phases)
        out.phi = self.phi.copy()
        out.active = self.active.copy()
        return out

    # -- construction ---------------------------------------------------------

    def set_fractions(self, phi):
        """Install fraction fields, renormalize, and derive activity."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape != self.phi.shape:
            raise ValueError(f"expected shape {self.phi.shape}, got {phi.shape}")
        if np.any(phi < 0):
            raise ValueError("fractions must be non-negative")
        total = phi.sum(axis=0)
        if np.any(total <= 0):
            raise ValueError("every cell needs at least one phase")
        self.phi = phi / total
        self.phi[self.phi < PHI_CUT] = 0.0
        self.phi /= self.phi.sum(axis=0)
        self.active = self.phi > 0.0
        self.grad = None
        self.lap = None

    # -- per-step passes --------------------------------------------------------

    def refresh_derivatives(self):
        """Cache the gradient and Laplacian of every fraction field."""
        shape = (self.n_phases, self.grid.dim) + self.grid.dims
        if self.grad is None or self.grad.shape != shape:
            self.grad = np.empty(shape)
            self.lap = np.empty((self.n_phases,) + self.grid.dims)
        for p in range(self.n_phases):
            self.grad[p], self.lap[p] = gradient_and_laplacian(self.phi[p], self.grid)

    def activate_neighbors(self, threshold: float = SEED_FRACTION):
        """Open cells to phases that are about to arrive from a face neighbor.

        A phase whose fraction exceeds ``threshold`` in any face neighbor is
        added to the local set with a zero fraction; fractions are untouched.
        """
        for p in range(self.n_phases):
            field = self.phi[p]
            near = np.zeros(self.grid.dims, dtype=bool)
            for ax in range(self.grid.dim):
                near |= np.roll(field, 1, axis=ax) > threshold
                near |= np.roll(field, -1, axis=ax) > threshold
            self.active[p] |= near


def mpf_update(state: PhaseState, dg_pairs: dict, k: KineticParams) -> StabilityReport:
    """Explicit Euler step on pairwise driving forces, then simplex projection.

    ``dg_pairs`` maps phase-index pairs ``(i, j)`` (i < j) to per-cell total
    driving forces (J/m^3), antisymmetric by construction: the force adds to
    phase i and subtracts from phase j.  The local prefactor divides by the
    number of locally active phases, so the per-cell sum of fractions is
    conserved exactly up to the projection.
    """
    nact = state.n_active()
    pref = np.where(nact > 0, np.pi**2 * k.mobility * k.dt / (4.0 * k.eta * np.maximum(nact, 1)), 0.0)
    rate = np.zeros_like(state.phi)
    for (i, j), dg in dg_pairs.items():
        dg = np.asarray(dg).reshape(state.grid.dims)
        both = state.active[i] & state.active[j]
        contrib = np.where(both, pref * dg, 0.0)
        rate[i] += contrib
        rate[j] -= contrib
    phi_new = state.phi + rate
    mn = float(phi_new.min())
    mx = float(phi_new.max())
    unstable = int(np.count_nonzero(((phi_new < -0.1) | (phi_new > 1.1)).any(axis=0)))

    np.clip(phi_new, 0.0, 1.0, out=phi_new)
    phi_new[phi_new < PHI_CUT] = 0.0
    total = phi_new.sum(axis=0)
    dead = total <= 0
    if np.any(dead):
        # pathological cell: keep the previously dominant phase
        dom = np.argmax(state.phi, axis=0)
        for p in range(state.n_phases):
            sel = dead & (dom == p)
            phi_new[p][sel] = 1.0
        total = phi_new.sum(axis=0)
    state.phi = phi_new / total
    state.active = state.phi > 0.0
    return StabilityReport(mn, mx, unstable)
