"""Pointwise homogenization kernels for multi-phase cells.

Given the cell strain, the local set of active phase fractions, and their
gradients, this module computes interface normals, rank-one strain-jump
vectors, pairwise phase strains/stresses/energies, the effective response,
and the pairwise elastic driving forces for five constitutive treatments:

``model_a``
    Phase energies interpolated from pairwise relaxed energies; the jump
    vector of every active pair satisfies kinematic compatibility (rank-one
    jump) and static equilibrium (traction continuity) on its own normal.
``model_b``
    Same pairwise jumps, but each phase carries a single strain averaged
    from its pairwise strains; the energy is the fraction-weighted sum of
    phase energies at those averaged strains.
``voigt``
    Equal strain in all phases (upper energy bound).
``reuss``
    Equal stress in all phases (lower energy bound).
``model_a_dual_only``
    ``model_a`` where exactly two phases are active, ``voigt`` in higher
    junctions.

Per-cell ``*_point`` functions are thin wrappers over the vectorized batch
kernels used by the field engine, so tests exercise the production path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .tensor import Rotation, Stiffness

PHI_CUT = 1e-6
COND_LIMIT = 1e12
MODELS = ("voigt", "reuss", "model_a", "model_b", "model_a_dual_only")


@dataclass
class PhaseSpec:
    """Per-phase material record; rotated quantities are precomputed once."""

    name: str
    stiffness: Stiffness
    bain: np.ndarray
    orientation: Rotation | None = None
    chem_offset: float = 0.0

    def __post_init__(self):
        d = self.stiffness.dim
        bain = np.asarray(self.bain, dtype=float)
        if bain.shape == (d,):
            bain = np.diag(bain)
        if bain.shape != (d, d):
            raise ValueError(f"bain strain must be ({d},{d}) or diagonal length {d}")
        self.bain = 0.5 * (bain + bain.T)
        rot = self.orientation or Rotation.identity(d)
        if rot.dim != d:
            raise ValueError("orientation dimension mismatch")
        self.orientation = rot
        # effective (grain-rotated) quantities used by all kernels
        self.c_eff = self.stiffness.rotate(rot)
        self.bain_eff = tn.rotate(self.bain, rot)
        self.bain_c = tn.compress(self.bain_eff)
        self.op = self.c_eff.op
        self.compliance_op = self.c_eff.inverse_op()
        if np.any(np.linalg.eigvalsh(0.5 * (self.op + self.op.T)) <= 0):
            raise ValueError(f"phase {self.name!r}: stiffness is not positive definite")

    @property
    def dim(self) -> int:
        return self.stiffness.dim


class DegenerateNormal(Exception):
    """Raised by the point API when the pair normal is undefined."""


# ---------------------------------------------------------------------------
# batched primitives
# ---------------------------------------------------------------------------


def interface_normals(grad_a: np.ndarray, grad_b: np.ndarray, g_tol: float = 1e-12):
    """Normalized gradient differences for batches ``(m, d)``.

    Returns ``(n, degenerate)``; degenerate rows hold a zero vector.
    """
    diff = np.asarray(grad_b, dtype=float) - np.asarray(grad_a, dtype=float)
    norm = np.linalg.norm(diff, axis=-1)
    degenerate = norm < g_tol
    safe = np.where(degenerate, 1.0, norm)
    n = diff / safe[..., None]
    n[degenerate] = 0.0
    return n, degenerate


def solve_acoustic_batch(k: np.ndarray, rhs: np.ndarray, cond_limit: float = COND_LIMIT):
    """Solve symmetric ``(m,d,d)`` systems, flagging ill-conditioned rows.

    Flagged rows get a zero solution; callers treat them as degenerate.
    """
    eig = np.linalg.eigvalsh(k)
    emin = eig[:, 0]
    emax = eig[:, -1]
    bad = ~np.isfinite(emin) | (emin <= 0) | (emax > cond_limit * np.maximum(emin, 1e-300))
    if np.any(bad):
        k = k.copy()
        k[bad] = np.eye(k.shape[-1])
    x = np.linalg.solve(k, rhs[..., None])[..., 0]
    if np.any(bad):
        x[bad] = 0.0
    return x, bad


def jump_vectors(
    eps_c: np.ndarray,
    phi_a: np.ndarray,
    phi_b: np.ndarray,
    spec_a: PhaseSpec,
    spec_b: PhaseSpec,
    n: np.ndarray,
    degenerate: np.ndarray | None = None,
    cond_limit: float = COND_LIMIT,
):
    """Closed-form strain-jump vectors for a batch of cells.

    The jump minimizes the pair interface energy over the rank-one
    connection; all other phases are taken at the bulk strain, so the
    right-hand side only involves the two participating phases.
    Returns ``(a, degenerate)`` with ``a = 0`` on degenerate rows.
    """
    m = n.shape[0]
    if degenerate is None:
        degenerate = np.zeros(m, dtype=bool)
    ka = spec_a.c_eff.acoustic_batch(n)
    kb = spec_b.c_eff.acoustic_batch(n)
    k = phi_b[:, None, None] * ka + phi_a[:, None, None] * kb
    s_a = (eps_c - spec_a.bain_c) @ spec_a.op.T
    s_b = (eps_c - spec_b.bain_c) @ spec_b.op.T
    rhs = (phi_a + phi_b)[:, None] * (s_b - s_a)
    rhs_n = tn.sym_dot(rhs, n)
    k[degenerate] = np.eye(n.shape[-1])
    a, bad = solve_acoustic_batch(k, -rhs_n, cond_limit)
    bad |= degenerate
    a[bad] = 0.0
    return a, bad


def equal_stiffness_jump(spec_a: PhaseSpec, spec_b: PhaseSpec, n: np.ndarray):
    """Jump vectors when both phases share a stiffness: independent of strain."""
    k = spec_a.c_eff.acoustic_batch(n)
    dbain_stress = (spec_a.bain_c - spec_b.bain_c) @ spec_a.op.T
    rhs = tn.sym_dot(np.broadcast_to(dbain_stress, (n.shape[0], dbain_stress.size)), n)
    a, bad = solve_acoustic_batch(k, -rhs)
    a[bad] = 0.0
    return a, bad


def pairwise_strains_c(eps_c, phi_i, phi_j, s_c, phi_floor=PHI_CUT):
    """Pairwise strains of both orders from the compressed jump tensor ``s_c``."""
    tot = np.maximum(phi_i + phi_j, phi_floor)
    w_j = (phi_j / tot)[..., None]
    w_i = (phi_i / tot)[..., None]
    return eps_c - w_j * s_c, eps_c + w_i * s_c


# ---------------------------------------------------------------------------
# point API
# ---------------------------------------------------------------------------


def interface_normal(grad_a, grad_b, g_tol: float = 1e-12):
    """Unit normal from one phase into the other, or ``None`` when degenerate."""
    n, deg = interface_normals(
        np.asarray(grad_a, dtype=float)[None], np.asarray(grad_b, dtype=float)[None], g_tol
    )
    return None if deg[0] else n[0]


def jump_vector(eps, phi_a, phi_b, spec_a: PhaseSpec, spec_b: PhaseSpec, n):
    """Closed-form strain-jump amplitude for one cell (zero when degenerate)."""
    eps_c = tn.compress(np.asarray(eps, dtype=float))[None]
    a, bad = jump_vectors(
        eps_c,
        np.array([phi_a], dtype=float),
        np.array([phi_b], dtype=float),
        spec_a,
        spec_b,
        np.asarray(n, dtype=float)[None],
    )
    return a[0]


def pairwise_strain(eps, phi_i, phi_j, a, n):
    """Strain of phase i against phase j: bulk strain minus its jump share."""
    if phi_i + phi_j <= 0:
        raise ValueError("pairwise strain requires phi_i + phi_j > 0")
    s = tn.sym_dyad(a, n)
    return np.asarray(eps, dtype=float) - (phi_j / (phi_i + phi_j)) * s


def phase_energy(eps_phase, spec: PhaseSpec) -> float:
    """Elastic energy density 0.5 (e - eB) : C : (e - eB) in J/m^3."""
    d = tn.compress(np.asarray(eps_phase, dtype=float) - spec.bain_eff)
    return 0.5 * float(tn.wdot(d, d @ spec.op.T))

def phase_stress(eps_phase, spec: PhaseSpec) -> np.ndarray:
    """Phase stress C : (e - eB) as a full matrix (Pa)."""
    d = tn.compress(np.asarray(eps_phase, dtype=float) - spec.bain_eff)
    return tn.expand(d @ spec.op.T)


def pair_interface_energy(eps, phi_a, phi_b, spec_a, spec_b, n, a):
    """Mixture-rule energy of the (a, b) interface at jump amplitude ``a``.

    This is the scalar that the closed-form jump vector minimizes; kept as
    an explicit function of ``a`` so independent optimizers can probe it.
    """
    s = tn.sym_dyad(a, n)
    tot = phi_a + phi_b
    e_ab = np.asarray(eps, dtype=float) - (phi_b / tot) * s
    e_ba = np.asarray(eps, dtype=float) + (phi_a / tot) * s
    return (phi_a * phase_energy(e_ab, spec_a) + phi_b * phase_energy(e_ba, spec_b)) / tot


@dataclass
class PointResponse:
    psi: float
    sigma: np.ndarray
    dg: dict
    degenerate_pairs: int = 0

    def dg_pair(self, i: int, j: int) -> float:
        if (i, j) in self.dg:
            return self.dg[(i, j)]
        if (j, i) in self.dg:
            return -self.dg[(j, i)]
        return 0.0


def _normalize_entries(entries, dim):
    phis, specs, grads = [], [], []
    for entry in entries:
        if len(entry) == 2:
            phi, spec = entry
            grad = np.zeros(dim)
        else:
            phi, spec, grad = entry
        phis.append(float(phi))
        specs.append(spec)
        grads.append(np.asarray(grad, dtype=float))
    total = sum(phis)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"phase fractions must sum to one, got {total}")
    return np.array(phis), specs, np.array(grads)


def _point_eval(model, eps, entries, g_tol):
    eps = np.asarray(eps, dtype=float)
    dim = eps.shape[0]
    phis, specs, grads = _normalize_entries(entries, dim)
    p = len(specs)
    if p == 1:
        return PointResponse(phase_energy(eps, specs[0]), phase_stress(eps, specs[0]), {})
    kern = FieldKernel(specs, model, g_tol=g_tol)
    bound = kern.bind(phis[:, None], np.ones((p, 1), dtype=bool), grads[:, :, None])
    out = bound.evaluate(tn.compress(eps)[None])
    dg = {pair: float(vals[0]) for pair, vals in out.dg.items()}
    dg.update({(j, i): -v for (i, j), v in list(dg.items())})
    return PointResponse(
        float(out.psi[0]), tn.expand(out.sigma[0]), dg, int(out.degenerate_pairs)
    )


def model_a_point(eps, entries, g_tol: float = 1e-12) -> PointResponse:
    """Pairwise-relaxed energy interpolation at one cell."""
    return _point_eval("model_a", eps, entries, g_tol)


def model_b_point(eps, entries, g_tol: float = 1e-12) -> PointResponse:
    """Pairwise-jump strain averaging at one cell."""
    return _point_eval("model_b", eps, entries, g_tol)


def voigt_point(eps, entries, g_tol: float = 1e-12) -> PointResponse:
    """Equal-strain response at one cell."""
    return _point_eval("voigt", eps, entries, g_tol)


def reuss_point(eps, entries, g_tol: float = 1e-12) -> PointResponse:
    """Equal-stress response at one cell."""
    return _point_eval("reuss", eps, entries, g_tol)


def dual_driving_force(eps, phi_a, phi_b, spec_a, spec_b, n):
    """Closed dual-phase form: energy jump minus relaxation work.

    Equals ``[[psi]] - sigma : sym(a x n)`` with the fraction-weighted
    pairwise stress; the general pairwise formulas reduce to this when only
    two phases are active.
    """
    a = jump_vector(eps, phi_a, phi_b, spec_a, spec_b, n)
    s = tn.sym_dyad(a, n)
    e_ab = np.asarray(eps, dtype=float) - phi_b * s
    e_ba = np.asarray(eps, dtype=float) + phi_a * s
    psi_jump = phase_energy(e_ba, spec_b) - phase_energy(e_ab, spec_a)
    sig = phi_a * phase_stress(e_ab, spec_a) + phi_b * phase_stress(e_ba, spec_b)
    return psi_jump - float(np.sum(sig * s))


def steinbach_driving_force(sigma, spec_a: PhaseSpec, spec_b: PhaseSpec) -> float:
    """Equal-stress driving force written directly in the common stress."""
    s_c = tn.compress(np.asarray(sigma, dtype=float))
    dcomp = spec_b.compliance_op - spec_a.compliance_op
    term1 = -0.5 * float(tn.wdot(s_c, s_c @ dcomp.T))
    term2 = -float(tn.wdot(s_c, spec_b.bain_c - spec_a.bain_c))
    return term1 + term2


def assemble_driving_forces(eps, entries, laps, kinetics, model: str = "model_a"):
    """Total pairwise driving forces at one cell: interfacial+elastic+chemical.

    ``laps`` holds the per-entry phase-field Laplacians (1/m^2); entries are
    ``(phi, spec, grad)`` triples in the same order.
    """
    from .phasefield import interfacial_driving_force

    resp = _point_eval(model, eps, entries, g_tol=1e-12)
    phis, specs, _ = _normalize_entries(entries, np.asarray(eps).shape[0])
    total = {}
    for i in range(len(specs)):
        for j in range(i + 1, len(specs)):
            dg_int = interfacial_driving_force(phis[i], phis[j], laps[i], laps[j], kinetics)
            dg_chem = specs[j].chem_offset - specs[i].chem_offset
            total[(i, j)] = dg_int + resp.dg_pair(i, j) + dg_chem
    return total


# ---------------------------------------------------------------------------
# field kernels
# ---------------------------------------------------------------------------


@dataclass
class PairGeometry:
    i: int
    j: int
    q: np.ndarray          # positions into the multi-cell batch
    cells: np.ndarray      # flat cell indices
    n: np.ndarray          # (m, d)
    degenerate: np.ndarray
    same_c: bool
    a_fixed: np.ndarray | None = None  # strain-independent jumps (equal stiffness)


@dataclass
class FieldResponse:
    psi: np.ndarray
    sigma: np.ndarray
    dg: dict
    degenerate_pairs: int = 0


class FieldKernel:
    """Vectorized constitutive evaluation over a phase-field state.

    ``bind`` captures the per-step geometry (active pairs, normals, jumps
    that do not depend on strain); the returned ``BoundKernel`` maps strain
    fields to stress fields (for the equilibrium solver) and to full
    responses with driving forces (for the phase-field update).
    """

    def __init__(self, specs, model: str, phi_cut: float = PHI_CUT, g_tol: float = 1e-12):
        if model not in MODELS:
            raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
        self.specs = list(specs)
        self.model = model
        self.phi_cut = phi_cut
        self.g_tol = g_tol
        self.dim = self.specs[0].dim
        if any(s.dim != self.dim for s in self.specs):
            raise ValueError("all phase specs must share one dimension")
        self.nc = tn.NCOMP[self.dim]

    def bind(self, phi: np.ndarray, active: np.ndarray, grads: np.ndarray | None):
        """Capture state geometry. ``phi``/``active``: (P, N); ``grads``: (P, d, N)."""
        return BoundKernel(self, phi, active, grads)


class BoundKernel:
    def __init__(self, kernel: FieldKernel, phi, active, grads):
        self.k = kernel
        p, n_cells = phi.shape
        self.p = p
        self.n_cells = n_cells
        self.phi = phi
        self.active = active
        self.nact = active.sum(axis=0)
        self.dom = np.argmax(np.where(active, phi, -1.0), axis=0)
        self.mcells = np.flatnonzero(self.nact >= 2)
        m = self.mcells.size
        self.phi_m = phi[:, self.mcells]
        self.act_m = active[:, self.mcells]
        self.nact_m = self.nact[self.mcells]
        f = kernel.phi_cut
        phi_t = np.where(self.act_m, np.clip(self.phi_m, f, 1.0 - f), 0.0)
        self.phi_t = phi_t
        self.comp = phi_t.sum(axis=0, keepdims=True) - phi_t  # complement sums
        comp_raw = np.where(self.act_m, self.phi_m, 0.0)
        self.comp_raw = comp_raw.sum(axis=0, keepdims=True) - comp_raw
        self.pairs = []
        needs_geometry = kernel.model not in ("voigt", "reuss")
        if m == 0 or not needs_geometry or grads is None:
            return
        for i in range(p):
            for j in range(i + 1, p):
                both = self.act_m[i] & self.act_m[j]
                if not np.any(both):
                    continue
                q = np.flatnonzero(both)
                cells = self.mcells[q]
                ga = grads[i][:, cells].T
                gb = grads[j][:, cells].T
                nrm, deg = interface_normals(ga, gb, kernel.g_tol)
                same_c = np.array_equal(kernel.specs[i].op, kernel.specs[j].op)
                geom = PairGeometry(i, j, q, cells, nrm, deg, same_c)
                if same_c:
                    a, bad = equal_stiffness_jump(kernel.specs[i], kernel.specs[j], nrm)
                    bad |= deg
                    a[bad] = 0.0
                    geom.a_fixed = a
                    geom.degenerate = bad
                self.pairs.append(geom)

    # -- shared pieces ------------------------------------------------------

    def _phase_fields(self, eps_m):
        """Per-phase equal-strain stress and energy on the multi-cell batch."""
        specs = self.k.specs
        sig = np.empty((self.p,) + eps_m.shape)
        psi = np.empty((self.p, eps_m.shape[0]))
        for idx, spec in enumerate(specs):
            d = eps_m - spec.bain_c
            sig[idx] = d @ spec.op.T
            psi[idx] = 0.5 * tn.wdot(d, sig[idx])
        return sig, psi

    def _base_sigma(self, eps_c):
        """Dominant-phase stress on every cell (single-phase baseline)."""
        out = np.empty_like(eps_c)
        for idx, spec in enumerate(self.k.specs):
            cells = np.flatnonzero(self.dom == idx)
            if cells.size:
                out[cells] = (eps_c[cells] - spec.bain_c) @ spec.op.T
        return out

    def _base_psi(self, eps_c):
        out = np.empty(self.n_cells)
        for idx, spec in enumerate(self.k.specs):
            cells = np.flatnonzero(self.dom == idx)
            if cells.size:
                d = eps_c[cells] - spec.bain_c
                out[cells] = 0.5 * tn.wdot(d, d @ spec.op.T)
        return out

    def _pair_jump(self, geom: PairGeometry, eps_m):
        """Jump tensor sym(a x n) (compressed) for one pair at its cells."""
        if geom.a_fixed is not None:
            a = geom.a_fixed
        else:
            a, bad = jump_vectors(
                eps_m[geom.q],
                self.phi_m[geom.i, geom.q],
                self.phi_m[geom.j, geom.q],
                self.k.specs[geom.i],
                self.k.specs[geom.j],
                geom.n,
                geom.degenerate,
            )
            geom.degenerate = bad
        return tn.sym_outer(a, geom.n)

    # -- stress-only evaluation (solver inner loop) --------------------------

    def sigma(self, eps_c: np.ndarray) -> np.ndarray:
        model = self.k.model
        out = self._base_sigma(eps_c)
        if self.mcells.size == 0:
            return out
        eps_m = eps_c[self.mcells]
        if model == "voigt":
            out[self.mcells] = self._voigt_sigma(eps_m)
        elif model == "reuss":
            out[self.mcells] = self._reuss_sigma(eps_m)
        elif model == "model_a":
            out[self.mcells] = self._model_a_sigma(eps_m)
        elif model == "model_b":
            out[self.mcells] = self._model_b_sigma(eps_m)
        else:  # model_a_dual_only
            sig = self._voigt_sigma(eps_m)
            dual = self.nact_m == 2
            sig_a = self._model_a_sigma(eps_m)
            sig[dual] = sig_a[dual]
            out[self.mcells] = sig
        return out

    def _voigt_sigma(self, eps_m):
        sig, _ = self._phase_fields(eps_m)
        w = np.where(self.act_m, self.phi_m, 0.0)
        return np.einsum("pm,pmc->mc", w, sig)

    def _reuss_sigma(self, eps_m):
        sigma, _, _ = self._reuss_solve(eps_m)
        return sigma

    def _reuss_solve(self, eps_m):
        """Common stress, per-phase strains, and compliance solve for Reuss."""
        specs = self.k.specs
        m = eps_m.shape[0]
        nc = self.k.nc
        w = np.where(self.act_m, self.phi_m, 0.0)
        sbar = np.zeros((m, nc, nc))
        rhs = eps_m.copy()
        for idx, spec in enumerate(specs):
            wi = w[idx]
            if not np.any(wi):
                continue
            sbar += wi[:, None, None] * spec.compliance_op
            rhs -= wi[:, None] * spec.bain_c
        try:
            sigma = np.linalg.solve(sbar, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise ValueError("interpolated compliance is singular") from exc
        eps_ph = np.empty((self.p, m, nc))
        for idx, spec in enumerate(specs):
            eps_ph[idx] = sigma @ spec.compliance_op.T + spec.bain_c
        return sigma, eps_ph, w

    def _model_a_sigma(self, eps_m):
        return self._model_a_pass(eps_m, need_tables=False)[0]

    def _model_b_sigma(self, eps_m):
        return self._model_b_pass(eps_m, need_tables=False)[0]

    # -- model A core ---------------------------------------------------------

    def _model_a_pass(self, eps_m, need_tables: bool):
        """Accumulate the pairwise-interpolated stress/energy; optional tables.

        Tables ``e_tab``/``t_tab`` hold the ordered pairwise energies and
        relaxation works used by the driving-force assembly.
        """
        specs = self.k.specs
        m = eps_m.shape[0]
        nc = self.k.nc
        sigma = np.zeros((m, nc))
        psi = np.zeros(m)
        e_tab = np.zeros((self.p, self.p, m)) if need_tables else None
        t_tab = np.zeros((self.p, self.p, m)) if need_tables else None
        phi_raw = np.where(self.act_m, self.phi_m, 0.0)
        crawl = self.comp_raw
        for geom in self.pairs:
            q = geom.q
            s_c = self._pair_jump(geom, eps_m)
            e_q = eps_m[q]
            pi = phi_raw[geom.i, q]
            pj = phi_raw[geom.j, q]
            e_ij, e_ji = pairwise_strains_c(e_q, pi, pj, s_c, self.k.phi_cut)
            for (a, b, e_ab, s_sign) in (
                (geom.i, geom.j, e_ij, 1.0),
                (geom.j, geom.i, e_ji, -1.0),
            ):
                spec = specs[a]
                d = e_ab - spec.bain_c
                sig_ab = d @ spec.op.T
                psi_ab = 0.5 * tn.wdot(d, sig_ab)
                pa = phi_raw[a, q]
                pb = phi_raw[b, q]
                comp_a = crawl[a, q]
                # partners below the cutoff: the bulk fallback takes over
                coeff = np.where(comp_a >= self.k.phi_cut, pa * pb / np.maximum(comp_a, 1e-300), 0.0)
                sigma[q] += coeff[:, None] * sig_ab
                psi[q] += coeff * psi_ab
                if need_tables:
                    e_tab[a, b, q] = psi_ab
                    t_tab[a, b, q] = s_sign * tn.wdot(sig_ab, s_c)
        self._add_isolated_phase_response(eps_m, sigma, psi, phi_raw, crawl)
        return sigma, psi, e_tab, t_tab

    def _add_isolated_phase_response(self, eps_m, sigma, psi, phi_raw, crawl):
        """Active phases whose partners have all vanished keep the bulk response."""
        for idx, spec in enumerate(self.k.specs):
            lone = (crawl[idx] < self.k.phi_cut) & (phi_raw[idx] > 0)
            if not np.any(lone):
                continue
            rows = np.flatnonzero(lone)
            d = eps_m[rows] - spec.bain_c
            sig = d @ spec.op.T
            w = phi_raw[idx, rows]
            sigma[rows] += w[:, None] * sig
            psi[rows] += w * 0.5 * tn.wdot(d, sig)

    def _model_a_dg(self, eps_m):
        """Pairwise elastic driving forces from the interpolated energy.

        The derivative of the pairwise-interpolated energy with respect to a
        fraction transfer between the two phases, holding every jump tensor
        fixed; seven coefficient groups per pair.
        """
        sigma, psi, e_tab, t_tab = self._model_a_pass(eps_m, need_tables=True)
        pt = self.phi_t
        comp = np.maximum(self.comp, self.k.phi_cut)
        dg = {}
        for geom in self.pairs:
            al, be, q = geom.i, geom.j, geom.q
            pa = pt[al, q]
            pb = pt[be, q]
            ca = comp[al, q]
            cb = comp[be, q]
            e_ab = e_tab[al, be, q]
            e_ba = e_tab[be, al, q]
            t_ab = t_tab[al, be, q]
            t_ba = t_tab[be, al, q]
            g = (pa * ca - pb) / ca**2 * e_ab
            g += (pa - cb * pb) / cb**2 * e_ba
            g -= pa * pb / (pa + pb) * (t_ab / ca - t_ba / cb)
            for i in range(self.p):
                if i == al or i == be:
                    continue
                pi = pt[i, q]
                live = pi > 0
                if not np.any(live):
                    continue
                ci = comp[i, q]
                g += pi * (e_tab[be, i, q] / cb**2 - e_tab[al, i, q] / ca**2)
                g += pi / ci * (e_tab[i, be, q] - e_tab[i, al, q])
                g += (
                    pi**2
                    * pb
                    / (pi + pb) ** 2
                    * (t_tab[be, i, q] / cb - t_tab[i, be, q] / ci)
                )
                g -= (
                    pi**2
                    * pa
                    / (pi + pa) ** 2
                    * (t_tab[al, i, q] / ca - t_tab[i, al, q] / ci)
                )
            dg[(al, be)] = (q, g)
        return sigma, psi, dg

    # -- model B core ---------------------------------------------------------

    def _model_b_pass(self, eps_m, need_tables: bool):
        """Per-phase averaged strains from the pairwise jumps, then responses."""
        specs = self.k.specs
        m = eps_m.shape[0]
        nc = self.k.nc
        phi_raw = np.where(self.act_m, self.phi_m, 0.0)
        crawl = self.comp_raw
        # averaged strain accumulator: eps_avg[p] = eps + acc[p] / comp[p]
        acc = np.zeros((self.p, m, nc))
        s_store = []
        for geom in self.pairs:
            q = geom.q
            s_c = self._pair_jump(geom, eps_m)
            s_store.append((geom, s_c))
            pi = phi_raw[geom.i, q]
            pj = phi_raw[geom.j, q]
            tot = np.maximum(pi + pj, self.k.phi_cut)
            acc[geom.i][q] -= (pj * pj / tot)[:, None] * s_c
            acc[geom.j][q] += (pi * pi / tot)[:, None] * s_c
        sigma = np.zeros((m, nc))
        psi = np.zeros(m)
        psi_ph = np.zeros((self.p, m)) if need_tables else None
        sig_ph = np.empty((self.p, m, nc)) if need_tables else None
        for idx, spec in enumerate(specs):
            wact = phi_raw[idx]
            has_partner = crawl[idx] >= self.k.phi_cut
            comp_i = np.where(has_partner, crawl[idx], 1.0)
            eps_avg = eps_m + np.where(has_partner, 1.0, 0.0)[:, None] * acc[idx] / comp_i[:, None]
            d = eps_avg - spec.bain_c
            sig_i = d @ spec.op.T
            psi_i = 0.5 * tn.wdot(d, sig_i)
            sigma += wact[:, None] * sig_i
            psi += wact * psi_i
            if need_tables:
                psi_ph[idx] = psi_i
                sig_ph[idx] = sig_i
        return sigma, psi, psi_ph, sig_ph, s_store

    def _model_b_dg(self, eps_m):
        """Driving forces of the averaged-strain treatment (six term groups)."""
        sigma, psi, psi_ph, sig_ph, s_store = self._model_b_pass(eps_m, need_tables=True)
        pt = self.phi_t
        comp = np.maximum(self.comp, self.k.phi_cut)
        # U[g, d] = sigma_g : sym(a x n)_{gd} (ordered, antisymmetric in swap)
        u_tab = np.zeros((self.p, self.p, eps_m.shape[0]))
        for geom, s_c in s_store:
            i, j, q = geom.i, geom.j, geom.q
            u_tab[i, j, q] = tn.wdot(sig_ph[i][q], s_c)
            u_tab[j, i, q] = -tn.wdot(sig_ph[j][q], s_c)
        v_tab = tn.wdot(sig_ph, eps_m[None])
        dg = {}
        for geom in self.pairs:
            al, be, q = geom.i, geom.j, geom.q
            pa = pt[al, q]
            pb = pt[be, q]
            ca = comp[al, q]
            cb = comp[be, q]
            u_ab = u_tab[al, be, q]
            u_ba = u_tab[be, al, q]
            g = psi_ph[be][q] - psi_ph[al][q]
            g -= pa * pb / (pa + pb) * (u_ab / ca - u_ba / cb)
            rest = ca - pb  # total fraction of the other phases
            g += rest * (
                pa / ca**2 * (v_tab[al][q] - pb / (pa + pb) * u_ab)
                - pb / cb**2 * (v_tab[be][q] - pa / (pa + pb) * u_ba)
            )
            for i in range(self.p):
                if i == al or i == be:
                    continue
                pi = pt[i, q]
                live = pi > 0
                if not np.any(live):
                    continue
                ci = comp[i, q]
                u_bi = u_tab[be, i, q]
                u_ib = u_tab[i, be, q]
                u_ai = u_tab[al, i, q]
                u_ia = u_tab[i, al, q]
                g += pb * (
                    pi / cb**2 * (v_tab[be][q] - pi / (pb + pi) * u_bi)
                    + pi**2 / (cb * (pb + pi) ** 2) * u_bi
                )
                g -= pa * (
                    pi / ca**2 * (v_tab[al][q] - pi / (pa + pi) * u_ai)
                    + pi**2 / (ca * (pa + pi) ** 2) * u_ai
                )
                g += pi * (
                    (-pb / (pi + pb) * u_ib + pa / (pi + pa) * u_ia) / ci
                    + pi / ci * (-pb / (pb + pi) ** 2 * u_ib + pa / (pa + pi) ** 2 * u_ia)
                )
            dg[(al, be)] = (q, g)
        return sigma, psi, dg

    # -- bounds ---------------------------------------------------------------

    def _voigt_eval(self, eps_m):
        sig_ph, psi_ph = self._phase_fields(eps_m)
        w = np.where(self.act_m, self.phi_m, 0.0)
        sigma = np.einsum("pm,pmc->mc", w, sig_ph)
        psi = np.einsum("pm,pm->m", w, psi_ph)
        dg = {}
        for i in range(self.p):
            for j in range(i + 1, self.p):
                both = self.act_m[i] & self.act_m[j]
                if not np.any(both):
                    continue
                q = np.flatnonzero(both)
                dg[(i, j)] = (q, psi_ph[j, q] - psi_ph[i, q])
        return sigma, psi, dg

    def _reuss_eval(self, eps_m):
        sigma, eps_ph, w = self._reuss_solve(eps_m)
        psi = np.zeros(eps_m.shape[0])
        psi_ph = np.empty((self.p, eps_m.shape[0]))
        for idx, spec in enumerate(self.k.specs):
            d = eps_ph[idx] - spec.bain_c
            psi_ph[idx] = 0.5 * tn.wdot(d, d @ spec.op.T)
            psi += w[idx] * psi_ph[idx]
        dg = {}
        for i in range(self.p):
            for j in range(i + 1, self.p):
                both = self.act_m[i] & self.act_m[j]
                if not np.any(both):
                    continue
                q = np.flatnonzero(both)
                jump = tn.wdot(sigma[q], eps_ph[j, q] - eps_ph[i, q])
                dg[(i, j)] = (q, psi_ph[j, q] - psi_ph[i, q] - jump)
        return sigma, psi, dg

    # -- public evaluation ----------------------------------------------------

    def evaluate(self, eps_c: np.ndarray) -> FieldResponse:
        """Full response: effective energy/stress fields plus pairwise forces.

        ``dg`` maps unordered pair indices ``(i, j)`` (i < j) to dense per-cell
        arrays of the elastic driving force, zero where the pair is inactive.
        """
        model = self.k.model
        psi_field = self._base_psi(eps_c)
        sigma_field = self._base_sigma(eps_c)
        dg_dense = {}
        if self.mcells.size:
            eps_m = eps_c[self.mcells]
            if model == "voigt":
                sigma, psi, dg = self._voigt_eval(eps_m)
            elif model == "reuss":
                sigma, psi, dg = self._reuss_eval(eps_m)
            elif model == "model_a":
                sigma, psi, dg = self._model_a_dg(eps_m)
            elif model == "model_b":
                sigma, psi, dg = self._model_b_dg(eps_m)
            else:
                sigma, psi, dg = self._dual_only_eval(eps_m)
            sigma_field[self.mcells] = sigma
            psi_field[self.mcells] = psi
            for (i, j), (q, vals) in dg.items():
                dense = np.zeros(self.n_cells)
                dense[self.mcells[q]] = vals
                dg_dense[(i, j)] = dense
        degenerate = sum(int(g.degenerate.sum()) for g in self.pairs)
        return FieldResponse(psi_field, sigma_field, dg_dense, degenerate)

    def _dual_only_eval(self, eps_m):
        sig_a, psi_a, dg_a = self._model_a_dg(eps_m)
        sig_v, psi_v, dg_v = self._voigt_eval(eps_m)
        dual = self.nact_m == 2
        sigma = np.where(dual[:, None], sig_a, sig_v)
        psi = np.where(dual, psi_a, psi_v)
        dg = {}
        pairs = set(dg_a) | set(dg_v)
        for pair in sorted(pairs):
            dense = np.zeros(eps_m.shape[0])
            if pair in dg_v:
                q, vals = dg_v[pair]
                dense[q] = vals
            if pair in dg_a:
                q, vals = dg_a[pair]
                sel = dual[q]
                dense[q[sel]] = vals[sel]
            q_all = np.flatnonzero(self.act_m[pair[0]] & self.act_m[pair[1]])
            dg[pair] = (q_all, dense[q_all])
        return sigma, psi, dg
