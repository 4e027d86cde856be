"""Declarative simulation descriptions: schema, validation, YAML round-trip.

A scenario file is a key-value document with sections for the grid,
kinetics, solver, phases, initial condition, nuclei, loads, model choice,
averaging, outputs, and seed.  Unknown keys are rejected; defaults exist
only where a named default is part of the contract.  All quantities are SI:
meters, seconds, Pa, J/m^2 for interfacial energy, J/m^3 for driving
forces, m^4/(J s) for mobility.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .mechanics import MODELS

INIT_KINDS = ("uniform", "slabs", "tjunction", "grain_bands")
FIELD_NAMES = ("phi", "active_count", "psi_elastic", "psi_interfacial", "strain", "stress", "dg")
STABILITY_POLICIES = ("warn", "strict")
DEFAULT_SEED_FRACTION = 0.1


class ScenarioError(ValueError):
    """Raised when a scenario fails validation."""


def _take(d: dict, allowed, context: str) -> dict:
    if not isinstance(d, dict):
        raise ScenarioError(f"{context}: expected a mapping, got {type(d).__name__}")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ScenarioError(f"{context}: unknown keys {sorted(unknown)}")
    return d


def _require(d: dict, key: str, context: str):
    if key not in d:
        raise ScenarioError(f"{context}: missing required key {key!r}")
    return d[key]


@dataclass
class GridSpec:
    dims: list
    spacing: float


@dataclass
class KineticsSpec:
    interface_width_cells: float
    interfacial_energy: float
    mobility: float
    dt: float
    pair_interfacial_energies: dict | None = None


@dataclass
class SolverSpec:
    tolerance: float = 1e-6
    max_iterations: int = 500
    isotropic_reference: bool = False


@dataclass
class PhaseDef:
    name: str
    lame_lambda: float
    lame_mu: float
    bain: list = field(default_factory=list)
    orientation_degrees: float = 0.0
    orientation_axis: list | None = None
    chem_offset: float = 0.0


@dataclass
class OutputSpec:
    interval: int = 0  # 0: only the initial and final states
    ledger_interval: int = 1
    fields: list = field(default_factory=lambda: ["phi", "psi_elastic"])
    probes: list = field(default_factory=list)


@dataclass
class Scenario:
    name: str
    grid: GridSpec
    kinetics: KineticsSpec
    phases: list
    init: dict
    model: str
    steps: int
    solver: SolverSpec = field(default_factory=SolverSpec)
    nuclei: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    averaging: bool = True
    averaging_radius_cells: float | None = None
    outputs: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0
    stability: str = "warn"

    @property
    def dim(self) -> int:
        return len(self.grid.dims)

    def phase_index(self, name: str) -> int:
        for k, p in enumerate(self.phases):
            if p.name == name:
                return k
        raise ScenarioError(f"unknown phase {name!r}")


# ---------------------------------------------------------------------------
# dict <-> dataclass
# ---------------------------------------------------------------------------


def scenario_to_dict(s: Scenario) -> dict:
    return asdict(s)


def scenario_from_dict(data: dict) -> Scenario:
    data = _take(
        data,
        (
            "name",
            "grid",
            "kinetics",
            "solver",
            "phases",
            "init",
            "nuclei",
            "loads",
            "model",
            "steps",
            "averaging",
            "averaging_radius_cells",
            "outputs",
            "seed",
            "stability",
        ),
        "scenario",
    )
    grid = _take(_require(data, "grid", "scenario"), ("dims", "spacing"), "grid")
    kin = _take(
        _require(data, "kinetics", "scenario"),
        (
            "interface_width_cells",
            "interfacial_energy",
            "mobility",
            "dt",
            "pair_interfacial_energies",
        ),
        "kinetics",
    )
    solver = _take(
        data.get("solver", {}),
        ("tolerance", "max_iterations", "isotropic_reference"),
        "solver",
    )
    phases = []
    for k, p in enumerate(_require(data, "phases", "scenario")):
        p = _take(
            p,
            (
                "name",
                "lame_lambda",
                "lame_mu",
                "bain",
                "orientation_degrees",
                "orientation_axis",
                "chem_offset",
            ),
            f"phases[{k}]",
        )
        phases.append(PhaseDef(**p))
    outputs = _take(
        data.get("outputs", {}),
        ("interval", "ledger_interval", "fields", "probes"),
        "outputs",
    )
    return Scenario(
        name=_require(data, "name", "scenario"),
        grid=GridSpec(**grid),
        kinetics=KineticsSpec(**kin),
        solver=SolverSpec(**solver),
        phases=phases,
        init=_require(data, "init", "scenario"),
        nuclei=list(data.get("nuclei", [])),
        loads=list(data.get("loads", [])),
        model=_require(data, "model", "scenario"),
        steps=int(_require(data, "steps", "scenario")),
        averaging=bool(data.get("averaging", True)),
        averaging_radius_cells=data.get("averaging_radius_cells"),
        outputs=OutputSpec(**outputs),
        seed=int(data.get("seed", 0)),
        stability=data.get("stability", "warn"),
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    scenario = scenario_from_dict(data)
    validate(scenario)
    return scenario


def save_scenario(s: Scenario, path):
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(s), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(s: Scenario) -> list:
    """Full validation; returns advisory warnings (empty when silent)."""
    warnings = []
    dims = s.grid.dims
    if len(dims) not in (2, 3):
        raise ScenarioError("grid must be 2D or 3D")
    if any(int(n) < 4 for n in dims):
        raise ScenarioError("all grid extents must be >= 4")
    if not s.grid.spacing > 0:
        raise ScenarioError("grid spacing must be positive")
    d = len(dims)

    kin = s.kinetics
    for key in ("interface_width_cells", "interfacial_energy", "mobility", "dt"):
        if not getattr(kin, key) > 0:
            raise ScenarioError(f"kinetics.{key} must be positive")
    if kin.interface_width_cells < 4:
        raise ScenarioError("interface width must span at least 4 cells")
    if kin.pair_interfacial_energies:
        raise ScenarioError(
            "per-pair interfacial energies are not supported; only a uniform "
            "interfacial energy is implemented"
        )
    stability_number = kin.dt * kin.mobility * kin.interfacial_energy / s.grid.spacing**2
    if stability_number > 0.25:
        warnings.append(
            f"explicit update may be unstable: dt*mobility*gamma/dx^2 = "
            f"{stability_number:.3g} > 0.25"
        )

    if not s.solver.tolerance > 0:
        raise ScenarioError("solver.tolerance must be positive")
    if s.solver.max_iterations < 1:
        raise ScenarioError("solver.max_iterations must be >= 1")

    if s.model not in MODELS:
        raise ScenarioError(f"unknown model {s.model!r}; expected one of {MODELS}")
    if s.stability not in STABILITY_POLICIES:
        raise ScenarioError(f"stability policy must be one of {STABILITY_POLICIES}")
    if s.steps < 0:
        raise ScenarioError("steps must be >= 0")
    if s.averaging_radius_cells is not None and s.averaging_radius_cells < 0:
        raise ScenarioError("averaging radius must be >= 0")

    if not s.phases:
        raise ScenarioError("at least one phase is required")
    names = [p.name for p in s.phases]
    if len(set(names)) != len(names):
        raise ScenarioError("phase names must be unique")
    for p in s.phases:
        if not (p.lame_mu > 0 and p.lame_lambda + 2 * p.lame_mu / d > 0):
            raise ScenarioError(f"phase {p.name!r}: elastic constants not positive definite")
        bain = np.asarray(p.bain if p.bain else np.zeros(d), dtype=float)
        if bain.shape not in ((d,), (d, d)):
            raise ScenarioError(f"phase {p.name!r}: bain must be a diagonal or full {d}x{d}")
        if p.orientation_axis is not None and d == 2:
            raise ScenarioError("orientation_axis only applies to 3D scenarios")

    _validate_init(s, d, names)

    for k, nuc in enumerate(s.nuclei):
        nuc = _take(nuc, ("cell", "phase", "fraction"), f"nuclei[{k}]")
        cell = _require(nuc, "cell", f"nuclei[{k}]")
        if len(cell) != d:
            raise ScenarioError(f"nuclei[{k}]: cell must have {d} coordinates")
        if any(not (0 <= int(c) < n) for c, n in zip(cell, dims)):
            raise ScenarioError(f"nuclei[{k}]: cell {cell} outside the grid")
        if _require(nuc, "phase", f"nuclei[{k}]") not in names:
            raise ScenarioError(f"nuclei[{k}]: unknown phase {nuc['phase']!r}")
        frac = nuc.get("fraction", DEFAULT_SEED_FRACTION)
        if not (0 < frac <= 1):
            raise ScenarioError(f"nuclei[{k}]: fraction must be in (0, 1]")

    last_step = -1
    for k, load in enumerate(s.loads):
        load = _take(load, ("step", "strain"), f"loads[{k}]")
        step = int(_require(load, "step", f"loads[{k}]"))
        if step <= last_step:
            raise ScenarioError("loads must be sorted by strictly increasing step")
        last_step = step
        strain = np.asarray(_require(load, "strain", f"loads[{k}]"), dtype=float)
        if strain.shape != (d, d):
            raise ScenarioError(f"loads[{k}]: strain must be {d}x{d}")
        if not np.allclose(strain, strain.T, atol=1e-12):
            raise ScenarioError(f"loads[{k}]: strain must be symmetric")

    out = s.outputs
    if out.interval < 0 or out.ledger_interval < 1:
        raise ScenarioError("output intervals must be non-negative (ledger >= 1)")
    for f in out.fields:
        if f not in FIELD_NAMES:
            raise ScenarioError(f"unknown output field {f!r}; expected subset of {FIELD_NAMES}")
    for k, probe in enumerate(out.probes):
        probe = _take(probe, ("name", "start", "end", "fields"), f"probes[{k}]")
        for key in ("start", "end"):
            pt = _require(probe, key, f"probes[{k}]")
            if len(pt) != d:
                raise ScenarioError(f"probes[{k}].{key}: needs {d} coordinates")
        for f in probe.get("fields", []):
            if f not in FIELD_NAMES:
                raise ScenarioError(f"probes[{k}]: unknown field {f!r}")
    return warnings


def _validate_init(s: Scenario, d: int, names):
    kind = s.init.get("kind")
    if kind not in INIT_KINDS:
        raise ScenarioError(f"init.kind must be one of {INIT_KINDS}")
    if kind == "uniform":
        init = _take(s.init, ("kind", "phase"), "init")
        if _require(init, "phase", "init") not in names:
            raise ScenarioError(f"init: unknown phase {init['phase']!r}")
    elif kind == "slabs":
        init = _take(s.init, ("kind", "axis", "boundaries", "outside", "inside"), "init")
        axis = int(init.get("axis", 0))
        if not (0 <= axis < d):
            raise ScenarioError("init.axis out of range")
        bounds = _require(init, "boundaries", "init")
        if len(bounds) != 2 or not (0 < bounds[0] < bounds[1] < s.grid.dims[axis]):
            raise ScenarioError("init.boundaries must be two increasing in-range positions")
        for key in ("outside", "inside"):
            if _require(init, key, "init") not in names:
                raise ScenarioError(f"init.{key}: unknown phase")
    elif kind == "tjunction":
        if d != 2:
            raise ScenarioError("tjunction initial condition requires a 2D grid")
        init = _take(s.init, ("kind", "top", "left", "right", "x_split", "y_split"), "init")
        for key in ("top", "left", "right"):
            if _require(init, key, "init") not in names:
                raise ScenarioError(f"init.{key}: unknown phase")
        for key, ax in (("x_split", 0), ("y_split", 1)):
            v = _require(init, key, "init")
            if not (0 < v < s.grid.dims[ax]):
                raise ScenarioError(f"init.{key} outside the grid")
    elif kind == "grain_bands":
        init = _take(s.init, ("kind", "axis", "boundaries", "bands"), "init")
        axis = int(init.get("axis", 0))
        if not (0 <= axis < d):
            raise ScenarioError("init.axis out of range")
        bands = _require(init, "bands", "init")
        bounds = _require(init, "boundaries", "init")
        if len(bounds) != len(bands) - 1:
            raise ScenarioError("init.boundaries must have one entry less than bands")
        if sorted(bounds) != list(bounds) or any(
            not (0 < b < s.grid.dims[axis]) for b in bounds
        ):
            raise ScenarioError("init.boundaries must be increasing in-range positions")
        for b in bands:
            if b not in names:
                raise ScenarioError(f"init.bands: unknown phase {b!r}")
