"""Built-in scenario factories for the four reference experiments.

Each factory returns a fully validated `Scenario`; keyword arguments allow
reduced-size variants for desk-scale runs while the defaults reproduce the
published setups.
"""

from __future__ import annotations

import numpy as np

from .scenario import (
    GridSpec,
    KineticsSpec,
    OutputSpec,
    PhaseDef,
    Scenario,
    SolverSpec,
    validate,
)

LAME_EQUAL = dict(lame_lambda=120e9, lame_mu=80e9)
LAME_AUSTENITE = dict(lame_lambda=107e9, lame_mu=64e9)
LAME_MARTENSITE = dict(lame_lambda=109e9, lame_mu=71e9)
CHEM_MARTENSITE = 7.76e7  # J/m^3 below the austenite reference


def laminate_validation(size=100, cross=None, model="model_a", averaging=False):
    """Two stress-free variants as periodic plates under a fixed mean strain.

    Plates are stacked along the last axis (the 1D direction); ``cross``
    shrinks the transverse extents for desk-scale runs.
    """
    cross = cross or size
    dims = [cross, cross, size]
    probes = [
        {
            "name": "centerline",
            "start": [cross // 2, cross // 2, 0],
            "end": [cross // 2, cross // 2, size - 1],
            "fields": ["phi", "psi_elastic", "dg", "strain", "stress"],
        }
    ]
    scen = Scenario(
        name="laminate_validation",
        grid=GridSpec(dims=dims, spacing=1e-4),
        kinetics=KineticsSpec(
            interface_width_cells=10, interfacial_energy=0.5, mobility=3e-7, dt=1e-6
        ),
        phases=[
            PhaseDef(name="alpha", bain=[0.02, -0.01, -0.01], **LAME_EQUAL),
            PhaseDef(name="beta", bain=[-0.01, -0.01, 0.02], **LAME_EQUAL),
        ],
        init={"kind": "slabs", "axis": 2, "boundaries": [size // 4, 3 * size // 4],
              "outside": "alpha", "inside": "beta"},
        loads=[{"step": 0, "strain": [[0.01, 0, 0], [0, 0.0075, 0], [0, 0, 0.005]]}],
        model=model,
        steps=0,
        averaging=averaging,
        outputs=OutputSpec(fields=["phi", "psi_elastic", "strain", "stress", "dg"],
                           probes=probes),
    )
    validate(scen)
    return scen


def triple_junction(size=400, model="model_a"):
    """Three phases meeting at a junction; two opposed variants plus a
    stress-free phase, no applied load."""
    half = size // 2
    span = max(size // 8, 12)
    probes = [
        {
            "name": "line_I",
            "start": [half - span, size // 4],
            "end": [half + span, size // 4],
            "fields": ["phi", "psi_elastic", "dg"],
        },
        {
            "name": "line_II",
            "start": [half - span, half],
            "end": [half + span, half],
            "fields": ["phi", "psi_elastic", "dg"],
        },
        {
            "name": "line_III",
            "start": [half - span, half - span],
            "end": [half + span, half + span],
            "fields": ["phi", "psi_elastic", "dg"],
        },
    ]
    scen = Scenario(
        name="triple_junction",
        grid=GridSpec(dims=[size, size], spacing=1e-4),
        kinetics=KineticsSpec(
            interface_width_cells=10, interfacial_energy=0.5, mobility=3e-7, dt=1e-6
        ),
        phases=[
            PhaseDef(name="alpha", bain=[0.01, -0.01], **LAME_EQUAL),
            PhaseDef(name="beta", bain=[-0.01, 0.01], **LAME_EQUAL),
            PhaseDef(name="gamma", bain=[0.0, 0.0], **LAME_EQUAL),
        ],
        init={"kind": "tjunction", "top": "gamma", "left": "alpha", "right": "beta",
              "x_split": half, "y_split": half},
        model=model,
        steps=0,
        averaging=False,
        outputs=OutputSpec(fields=["phi", "psi_elastic", "dg"], probes=probes),
    )
    validate(scen)
    return scen


def single_grain_3d(size=64, steps=1200, model="model_a", averaging=True, seed=0):
    """Cubic-to-tetragonal transformation in one austenite grain (3D).

    Three variant nuclei near the box center grow under a constant chemical
    driving force; equal stiffness everywhere; periodic box, no load.
    """
    c = size // 2
    off = max(size // 10, 4)
    nuclei = [
        {"cell": [c, c, c], "phase": "m1", "fraction": 0.1},
        {"cell": [c + off, c, c], "phase": "m2", "fraction": 0.1},
        {"cell": [c, c + off, c], "phase": "m3", "fraction": 0.1},
    ]
    scen = Scenario(
        name="single_grain_3d",
        grid=GridSpec(dims=[size, size, size], spacing=1e-6),
        kinetics=KineticsSpec(
            interface_width_cells=5, interfacial_energy=0.5, mobility=3e-7, dt=1e-6
        ),
        phases=[
            PhaseDef(name="austenite", bain=[0.0, 0.0, 0.0], **LAME_EQUAL),
            PhaseDef(name="m1", bain=[0.02, -0.01, -0.01],
                     chem_offset=-CHEM_MARTENSITE, **LAME_EQUAL),
            PhaseDef(name="m2", bain=[-0.01, -0.01, 0.02],
                     chem_offset=-CHEM_MARTENSITE, **LAME_EQUAL),
            PhaseDef(name="m3", bain=[-0.01, 0.02, -0.01],
                     chem_offset=-CHEM_MARTENSITE, **LAME_EQUAL),
        ],
        init={"kind": "uniform", "phase": "austenite"},
        nuclei=nuclei,
        model=model,
        steps=steps,
        averaging=averaging,
        outputs=OutputSpec(interval=0, ledger_interval=5, fields=["phi", "psi_elastic"]),
        seed=seed,
    )
    validate(scen)
    return scen


def polycrystal_2d(
    size=500,
    steps=10000,
    model="model_a",
    nuclei_spacing=None,
    seed=0,
    angles=(0.0, 30.0, 60.0),
):
    """Three austenite grains as vertical bands, each with two rotated
    variants; martensite nuclei on a regular lattice with seeded random
    variant selection."""
    spacing = nuclei_spacing or max(size // 10, 8)
    nbands = len(angles)
    boundaries = [round(k * size / nbands) for k in range(1, nbands)]
    phases = []
    bands = []
    for g, ang in enumerate(angles):
        aname = f"aust{g}"
        bands.append(aname)
        phases.append(PhaseDef(name=aname, bain=[0.0, 0.0],
                               orientation_degrees=float(ang), **LAME_AUSTENITE))
        for v, bain in (("a", [0.02, -0.01]), ("b", [-0.01, 0.02])):
            phases.append(
                PhaseDef(
                    name=f"mart{g}{v}",
                    bain=bain,
                    orientation_degrees=float(ang),
                    chem_offset=-CHEM_MARTENSITE,
                    **LAME_MARTENSITE,
                )
            )
    rng = np.random.default_rng(seed)
    nuclei = []
    count = size // spacing
    cyc = [0] + boundaries + [size]
    for i in range(count):
        for j in range(count):
            x = i * spacing + spacing // 2
            y = j * spacing + spacing // 2
            band = next(k for k in range(nbands) if cyc[k] <= x < cyc[k + 1])
            variant = "a" if rng.random() < 0.5 else "b"
            nuclei.append({"cell": [x, y], "phase": f"mart{band}{variant}", "fraction": 0.1})
    scen = Scenario(
        name="polycrystal_2d",
        grid=GridSpec(dims=[size, size], spacing=1e-6),
        kinetics=KineticsSpec(
            interface_width_cells=5, interfacial_energy=0.5, mobility=3e-7, dt=1e-6
        ),
        phases=phases,
        init={"kind": "grain_bands", "axis": 0, "boundaries": boundaries, "bands": bands},
        nuclei=nuclei,
        model=model,
        steps=steps,
        averaging=True,
        outputs=OutputSpec(interval=0, ledger_interval=10, fields=["phi", "psi_elastic"]),
        seed=seed,
    )
    validate(scen)
    return scen


BUILTINS = {
    "laminate_validation": laminate_validation,
    "triple_junction": triple_junction,
    "single_grain_3d": single_grain_3d,
    "polycrystal_2d": polycrystal_2d,
}


def get_builtin(name: str, **kwargs) -> Scenario:
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin scenario {name!r}; available: {sorted(BUILTINS)}")
    return BUILTINS[name](**kwargs)
