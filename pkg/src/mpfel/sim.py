"""Time-loop orchestration: kinetics + mechanics coupling and run artifacts.

One step is a fixed pipeline: refresh derivative caches, open neighbor
cells to arriving phases, re-solve mechanical equilibrium (warm-started),
assemble pairwise total driving forces, optionally average them over a
sphere, and advance the fractions with the constrained explicit update.
Outputs (energy ledger, field dumps, probes) are emitted from the same
constitutive evaluation that drove the update, so bookkeeping and dumped
fields agree exactly.
"""

from __future__ import annotations

import json
import time as _time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import vtkio
from .equilibrium import SpectralSolver, choose_reference, set_fft_workers
from .grid import Grid, SphereAverager, averaging_radius_cells
from .mechanics import FieldKernel, PhaseSpec
from .phasefield import (
    InstabilityError,
    KineticParams,
    PhaseState,
    interface_profile,
    interfacial_driving_force,
)
from .scenario import DEFAULT_SEED_FRACTION, Scenario, save_scenario, validate
from .tensor import NCOMP, Rotation, Stiffness, compress


# ---------------------------------------------------------------------------
# scenario -> runtime objects
# ---------------------------------------------------------------------------


def build_phase_specs(scenario: Scenario):
    d = scenario.dim
    specs = []
    for p in scenario.phases:
        c = Stiffness.isotropic(p.lame_lambda, p.lame_mu, dim=d)
        bain = np.asarray(p.bain if p.bain else np.zeros(d), dtype=float)
        if bain.ndim == 1:
            bain = np.diag(bain)
        theta = np.deg2rad(p.orientation_degrees)
        if d == 2:
            rot = Rotation.from_angle(theta)
        elif p.orientation_axis is not None:
            rot = Rotation.from_axis_angle(p.orientation_axis, theta)
        elif theta != 0.0:
            rot = Rotation.from_axis_angle([0.0, 0.0, 1.0], theta)
        else:
            rot = Rotation.identity(3)
        specs.append(PhaseSpec(p.name, c, bain, rot, p.chem_offset))
    return specs


def _periodic_band(x, lo, hi, eta, extent):
    """Smoothed indicator of the periodic band [lo, hi) along a coordinate.

    Band and complement must both be wider than the profile; the profile is
    a function of the periodic distance from the band midline.
    """
    mid = 0.5 * (lo + hi)
    half_w = 0.5 * (hi - lo)
    s = (x - mid + extent / 2.0) % extent - extent / 2.0
    return interface_profile(half_w - np.abs(s), eta)


def build_initial_state(scenario: Scenario, grid: Grid, eta_cells: float) -> PhaseState:
    """Phase fractions from the declared initial condition, profile-smoothed."""
    init = scenario.init
    nph = len(scenario.phases)
    state = PhaseState(grid, nph)
    phi = np.zeros((nph,) + grid.dims)
    kind = init["kind"]
    if kind == "uniform":
        phi[scenario.phase_index(init["phase"])] = 1.0
    elif kind == "slabs":
        axis = int(init.get("axis", 0))
        n_ax = grid.dims[axis]
        coord = np.arange(n_ax, dtype=float)
        band = _periodic_band(coord, init["boundaries"][0], init["boundaries"][1], eta_cells, n_ax)
        shape = [1] * grid.dim
        shape[axis] = n_ax
        band = band.reshape(shape) * np.ones(grid.dims)
        phi[scenario.phase_index(init["inside"])] = band
        phi[scenario.phase_index(init["outside"])] = 1.0 - band
    elif kind == "tjunction":
        nx, ny = grid.dims
        x = np.arange(nx, dtype=float)[:, None] * np.ones((1, ny))
        y = np.arange(ny, dtype=float)[None, :] * np.ones((nx, 1))
        top = _periodic_band(y, init["y_split"], ny, eta_cells, ny)
        left = _periodic_band(x, 0.0, init["x_split"], eta_cells, nx)
        phi[scenario.phase_index(init["top"])] = top
        phi[scenario.phase_index(init["left"])] = (1.0 - top) * left
        phi[scenario.phase_index(init["right"])] = (1.0 - top) * (1.0 - left)
    elif kind == "grain_bands":
        axis = int(init.get("axis", 0))
        n_ax = grid.dims[axis]
        coord = np.arange(n_ax, dtype=float)
        bands = init["bands"]
        cyc = [0.0] + [float(b) for b in init["boundaries"]]
        shape = [1] * grid.dim
        shape[axis] = n_ax
        for k, name in enumerate(bands):
            lo = cyc[k]
            hi = cyc[k + 1] if k + 1 < len(cyc) else float(n_ax)
            band = _periodic_band(coord, lo, hi, eta_cells, n_ax)
            phi[scenario.phase_index(name)] += band.reshape(shape) * np.ones(grid.dims)
    else:  # pragma: no cover - validation rejects other kinds
        raise ValueError(f"unhandled init kind {kind!r}")
    state.set_fractions(phi)
    return state


def nucleate(state: PhaseState, scenario: Scenario):
    """Plant each nucleus: seed fraction to its phase, host reduced in place."""
    for nuc in scenario.nuclei:
        cell = tuple(int(c) for c in nuc["cell"])
        pidx = scenario.phase_index(nuc["phase"])
        frac = float(nuc.get("fraction", DEFAULT_SEED_FRACTION))
        column = state.phi[(slice(None),) + cell]
        host = int(np.argmax(column))
        if column[host] < frac:
            raise ValueError(f"nucleus at {cell}: host fraction {column[host]} below seed {frac}")
        state.phi[(host,) + cell] -= frac
        state.phi[(pidx,) + cell] += frac
    state.set_fractions(state.phi)
    return state


# ---------------------------------------------------------------------------
# bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class LedgerRow:
    step: int
    time: float
    psi_elastic: float
    psi_interfacial: float
    fractions: tuple


class EnergyLedger:
    """Time series of mean energies (J/m^3) and phase volume fractions."""

    def __init__(self, phase_names):
        self.phase_names = list(phase_names)
        self.rows = []

    def add(self, step, time, psi_elastic, psi_interfacial, fractions):
        self.rows.append(
            LedgerRow(step, time, float(psi_elastic), float(psi_interfacial), tuple(fractions))
        )

    def header(self):
        return ["step", "time_s", "psi_elastic_J_per_m3", "psi_interfacial_J_per_m3"] + [
            f"frac_{n}" for n in self.phase_names
        ]

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.header()) + "\n")
            for r in self.rows:
                cols = [str(r.step), f"{r.time:.17g}", f"{r.psi_elastic:.17g}", f"{r.psi_interfacial:.17g}"]
                cols += [f"{f:.17g}" for f in r.fractions]
                fh.write(",".join(cols) + "\n")

    def series(self, column: str):
        if column == "psi_elastic":
            return np.array([r.psi_elastic for r in self.rows])
        if column == "psi_interfacial":
            return np.array([r.psi_interfacial for r in self.rows])
        if column == "time":
            return np.array([r.time for r in self.rows])
        if column == "step":
            return np.array([r.step for r in self.rows])
        idx = self.phase_names.index(column)
        return np.array([r.fractions[idx] for r in self.rows])


@dataclass
class StepInfo:
    step: int
    time: float
    solver_iterations: int
    residual: float
    unstable_cells: int
    degenerate_pairs: int


# ---------------------------------------------------------------------------
# simulation driver
# ---------------------------------------------------------------------------


class Simulation:
    def __init__(self, scenario: Scenario, output_dir=None, threads: int = 1, log=None):
        self.scenario = scenario
        self.warnings = validate(scenario)
        self.log = log or (lambda msg: None)
        for w in self.warnings:
            self.log(f"warning: {w}")
        set_fft_workers(threads)
        self.grid = Grid(tuple(int(n) for n in scenario.grid.dims), float(scenario.grid.spacing))
        kin = scenario.kinetics
        self.kinetics = KineticParams(
            eta=kin.interface_width_cells * self.grid.spacing,
            gamma=kin.interfacial_energy,
            mobility=kin.mobility,
            dt=kin.dt,
        )
        self.specs = build_phase_specs(scenario)
        self.state = build_initial_state(scenario, self.grid, kin.interface_width_cells)
        nucleate(self.state, scenario)
        self.kernel = FieldKernel(
            self.specs, scenario.model, g_tol=1e-8 / self.grid.spacing
        )
        c0 = choose_reference(self.specs, scenario.solver.isotropic_reference)
        self.solver = SpectralSolver(self.grid, c0)
        radius = scenario.averaging_radius_cells
        if radius is None:
            radius = averaging_radius_cells(kin.interface_width_cells)
        self.averager = SphereAverager(self.grid, radius) if scenario.averaging else None
        self.output_dir = Path(output_dir) if output_dir else None
        self.ledger = EnergyLedger([p.name for p in scenario.phases])
        self.step_count = 0
        self.time = 0.0
        self._warm = None
        self._instability_events = 0
        self._degenerate_total = 0
        self._solver_iterations = 0
        self._chem = np.array([s.chem_offset for s in self.specs])

    # -- loads ------------------------------------------------------------------

    def eps_bar(self):
        """Applied mean strain active at the current step (zero by default)."""
        d = self.grid.dim
        current = np.zeros((d, d))
        for load in self.scenario.loads:
            if int(load["step"]) <= self.step_count:
                current = np.asarray(load["strain"], dtype=float)
        return current

    # -- core passes --------------------------------------------------------------

    def _mechanics(self):
        """Bind the kernel to the current state and re-solve equilibrium."""
        state = self.state
        bound = self.kernel.bind(state.phi_flat, state.active_flat, state.grad_flat)
        sol = self.solver.solve(
            bound.sigma,
            compress(self.eps_bar()),
            eps0=self._warm,
            tolerance=self.scenario.solver.tolerance,
            max_iterations=self.scenario.solver.max_iterations,
        )
        self._warm = sol.eps
        self._solver_iterations += sol.iterations
        return bound, sol

    def _total_driving_forces(self, response):
        """Interfacial + elastic + chemical per pair, masked to active pairs."""
        state = self.state
        k = self.kinetics
        dg_total = {}
        for (i, j), dg_el in response.dg.items():
            dg_int = interfacial_driving_force(
                state.phi_flat[i], state.phi_flat[j], state.lap[i].reshape(-1),
                state.lap[j].reshape(-1), k,
            )
            chem = self._chem[j] - self._chem[i]
            both = state.active_flat[i] & state.active_flat[j]
            total = np.where(both, dg_int + dg_el + chem, 0.0)
            if self.averager is not None:
                total = self.averager.apply(total.reshape(self.grid.dims)).reshape(-1)
            dg_total[(i, j)] = total
        return dg_total

    def psi_interfacial_field(self):
        """Interfacial energy density from the cached gradients (J/m^3)."""
        state = self.state
        k = self.kinetics
        phi2 = np.sum(state.phi**2, axis=0)
        grad2 = np.sum(state.grad**2, axis=(0, 1))
        return (4.0 * k.gamma / k.eta) * (
            0.5 * (1.0 - phi2) + (k.eta**2 / (2.0 * np.pi**2)) * grad2
        )

    # -- stepping -----------------------------------------------------------------

    def step(self, emit=None) -> StepInfo:
        """Advance one time step; optionally emit outputs for the pre-update state."""
        from .phasefield import mpf_update

        state = self.state
        state.refresh_derivatives()
        state.activate_neighbors()
        bound, sol = self._mechanics()
        response = bound.evaluate(sol.eps)
        self._degenerate_total += response.degenerate_pairs
        if emit is not None:
            emit(self, response, sol)
        dg_total = self._total_driving_forces(response)
        report = mpf_update(state, dg_total, self.kinetics)
        if not report.ok:
            self._instability_events += 1
            self.log(
                f"step {self.step_count}: instability report "
                f"({report.n_unstable} cells outside [-0.1, 1.1])"
            )
            if self.scenario.stability == "strict":
                raise InstabilityError(report)
        self.step_count += 1
        self.time += self.kinetics.dt
        return StepInfo(
            self.step_count,
            self.time,
            sol.iterations,
            sol.residuals[-1],
            report.n_unstable,
            response.degenerate_pairs,
        )

    def evaluate(self):
        """Constitutive evaluation of the current state without updating it."""
        self.state.refresh_derivatives()
        bound, sol = self._mechanics()
        response = bound.evaluate(sol.eps)
        return response, sol

    # -- outputs ------------------------------------------------------------------

    def field_data(self, response, sol, which=None):
        """Named per-cell arrays for dumps and probes."""
        names = [p.name for p in self.scenario.phases]
        which = which or self.scenario.outputs.fields
        out = {}
        for f in which:
            if f == "phi":
                for k, name in enumerate(names):
                    out[f"phi_{name}"] = self.state.phi_flat[k].copy()
            elif f == "active_count":
                out["active_count"] = self.state.n_active().reshape(-1).astype(float)
            elif f == "psi_elastic":
                out["psi_elastic"] = response.psi.copy()
            elif f == "psi_interfacial":
                out["psi_interfacial"] = self.psi_interfacial_field().reshape(-1)
            elif f == "strain":
                out["strain"] = sol.eps.copy()
            elif f == "stress":
                out["stress"] = response.sigma.copy()
            elif f == "dg":
                for (i, j), arr in sorted(response.dg.items()):
                    out[f"dg_{names[i]}_{names[j]}"] = arr.copy()
        return out

    def _ledger_row(self, response):
        psi_el = float(response.psi.mean())
        psi_int = float(self.psi_interfacial_field().mean())
        self.ledger.add(self.step_count, self.time, psi_el, psi_int, self.state.fractions())

    def run(self) -> "RunResult":
        """Execute the whole schedule and write artifacts to the output dir."""
        scen = self.scenario
        outdir = self.output_dir
        started = _time.perf_counter()
        if outdir is not None:
            outdir.mkdir(parents=True, exist_ok=True)
            save_scenario(scen, outdir / "scenario.yaml")

        interval = scen.outputs.interval
        ledger_every = scen.outputs.ledger_interval

        def want_dump(step):
            return outdir is not None and (interval > 0 and step % interval == 0)

        def emit(sim, response, sol, final=False):
            step = sim.step_count
            if step % ledger_every == 0 or final:
                self._ledger_row(response)
            if want_dump(step) or (final and outdir is not None) or (step == 0 and outdir is not None):
                data = sim.field_data(response, sol)
                vtkio.write_vtk(outdir / f"fields_{step:06d}.vtk", sim.grid, data)
                self._write_probes(step, response, sol)
            if final and outdir is not None:
                all_fields = sim.field_data(response, sol, which=list(vtkio.UNITS))
                vtkio.write_state_npz(
                    outdir / "state_final.npz",
                    sim.grid,
                    [p.name for p in scen.phases],
                    all_fields,
                )

        for _ in range(scen.steps):
            self.step(emit=emit)
        response, sol = self.evaluate()
        emit(self, response, sol, final=True)
        runtime = _time.perf_counter() - started

        summary = {
            "name": scen.name,
            "model": scen.model,
            "steps": self.step_count,
            "time_s": self.time,
            "runtime_s": runtime,
            "solver_iterations": self._solver_iterations,
            "instability_events": self._instability_events,
            "degenerate_pair_cells": self._degenerate_total,
            "final_fractions": {
                p.name: float(f) for p, f in zip(scen.phases, self.state.fractions())
            },
            "final_psi_elastic": self.ledger.rows[-1].psi_elastic,
            "peak_psi_elastic": max(r.psi_elastic for r in self.ledger.rows),
            "warnings": self.warnings,
        }
        if outdir is not None:
            self.ledger.write(outdir / "ledger.csv")
            with open(outdir / "summary.json", "w") as fh:
                json.dump(summary, fh, indent=2)
        return RunResult(outdir, self.ledger, summary)

    def _write_probes(self, step, response, sol):
        if self.output_dir is None:
            return
        for probe in self.scenario.outputs.probes:
            fields = probe.get("fields", ["phi"])
            data = self.field_data(response, sol, which=fields)
            cells = vtkio.sample_polyline(self.grid, probe["start"], probe["end"])
            path = self.output_dir / f"probe_{probe['name']}_{step:06d}.csv"
            vtkio.write_probe_csv(path, self.grid, cells, data)


@dataclass
class RunResult:
    output_dir: Path | None
    ledger: EnergyLedger
    summary: dict
