"""Independent oracle and property checks for the homogenization kernels.

Every check pits a kernel against an implementation-independent route:
numerical minimization of the scalar pair energy, central finite differences
of the assembled effective energy with frozen jumps, the equal-stress
identity written directly in the common stress, or plain orderings that hold
for arbitrary inputs.  The CLI ``verify`` subcommand runs these suites and
reports worst-case residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import mechanics as mech
from . import tensor as tn


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: worst residual {self.worst:.3e} (tol {self.tolerance:.1e}) {self.detail}"


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------


def random_stiffness(rng, dim, scale=1e9):
    """Random positive-definite stiffness with full minor/major symmetries."""
    nc = tn.NCOMP[dim]
    a = rng.standard_normal((nc, nc))
    mat = (a @ a.T + 5.0 * nc * np.eye(nc)) * scale
    comps = tn.COMPONENTS[dim]
    c = np.zeros((dim, dim, dim, dim))
    for p, (i, j) in enumerate(comps):
        for q, (k, l) in enumerate(comps):
            for ii, jj in ((i, j), (j, i)):
                for kk, ll in ((k, l), (l, k)):
                    c[ii, jj, kk, ll] = mat[p, q]
    return tn.Stiffness(c)


def random_spec(rng, dim, name, stiffness=None):
    c = stiffness if stiffness is not None else random_stiffness(rng, dim)
    bain = 0.02 * rng.standard_normal((dim, dim))
    return mech.PhaseSpec(name, c, 0.5 * (bain + bain.T))


def random_fractions(rng, nphase, floor=0.05):
    phi = floor + rng.random(nphase)
    return phi / phi.sum()


def random_cell(rng, dim, nphase, equal_stiffness=False):
    """Random multi-phase cell: specs, fractions, strain, gradients."""
    shared = random_stiffness(rng, dim) if equal_stiffness else None
    specs = [random_spec(rng, dim, f"p{k}", shared) for k in range(nphase)]
    phis = random_fractions(rng, nphase)
    eps = 0.02 * rng.standard_normal((dim, dim))
    eps = 0.5 * (eps + eps.T)
    grads = rng.standard_normal((nphase, dim))
    return specs, phis, eps, grads


# ---------------------------------------------------------------------------
# jump-vector oracle: numerical minimization of the pair energy
# ---------------------------------------------------------------------------


def minimize_pair_energy(eps, phi_a, phi_b, spec_a, spec_b, n, h=1e-4):
    """Minimize the pair interface energy over the jump amplitude.

    Newton's method on finite-difference derivatives of the scalar energy;
    exact for the quadratic energy up to roundoff, and entirely independent
    of the closed-form solve.
    """
    d = len(n)

    def f(a):
        return mech.pair_interface_energy(eps, phi_a, phi_b, spec_a, spec_b, n, a)

    a = np.zeros(d)
    for _ in range(2):
        grad = np.zeros(d)
        hess = np.zeros((d, d))
        f0 = f(a)
        for k in range(d):
            ek = np.zeros(d)
            ek[k] = h
            fp, fm = f(a + ek), f(a - ek)
            grad[k] = (fp - fm) / (2 * h)
            hess[k, k] = (fp - 2 * f0 + fm) / h**2
        for k in range(d):
            for l in range(k + 1, d):
                ek, el = np.zeros(d), np.zeros(d)
                ek[k] = h
                el[l] = h
                fpp = f(a + ek + el)
                fpm = f(a + ek - el)
                fmp = f(a - ek + el)
                fmm = f(a - ek - el)
                hess[k, l] = hess[l, k] = (fpp - fpm - fmp + fmm) / (4 * h**2)
        a = a - np.linalg.solve(hess, grad)
    return a


def minimize_pair_energy_free(eps, phi_a, phi_b, spec_a, spec_b, n):
    """Derivative-free cross-check with a generic optimizer (looser accuracy)."""

    def f(a):
        return mech.pair_interface_energy(eps, phi_a, phi_b, spec_a, spec_b, n, a)

    res = scipy.optimize.minimize(f, np.zeros(len(n)), method="Powell", tol=1e-14)
    return res.x


def check_jump_oracle(rng, instances=50, tol=1e-8):
    worst = 0.0
    for k in range(instances):
        dim = 3 if k % 2 == 0 else 2
        equal = k % 5 == 0
        specs, phis, eps, grads = random_cell(rng, dim, 2, equal_stiffness=equal)
        n = mech.interface_normal(grads[0], grads[1])
        a_cf = mech.jump_vector(eps, phis[0], phis[1], specs[0], specs[1], n)
        a_or = minimize_pair_energy(eps, phis[0], phis[1], specs[0], specs[1], n)
        rel = np.linalg.norm(a_cf - a_or) / max(np.linalg.norm(a_cf), 1e-30)
        worst = max(worst, rel)
    return CheckResult("jump vector vs numerical minimization", worst <= tol, worst, tol)


def check_static_jump(rng, instances=50, tol=1e-9):
    """Traction continuity at the closed-form jump."""
    worst = 0.0
    for k in range(instances):
        dim = 3 if k % 2 == 0 else 2
        specs, phis, eps, grads = random_cell(rng, dim, 2, equal_stiffness=(k % 4 == 0))
        n = mech.interface_normal(grads[0], grads[1])
        a = mech.jump_vector(eps, phis[0], phis[1], specs[0], specs[1], n)
        e_ab = mech.pairwise_strain(eps, phis[0], phis[1], a, n)
        e_ba = mech.pairwise_strain(eps, phis[1], phis[0], -a, n)
        s_ab = mech.phase_stress(e_ab, specs[0])
        s_ba = mech.phase_stress(e_ba, specs[1])
        resid = np.linalg.norm((s_ab - s_ba) @ n)
        scale = max(np.linalg.norm(s_ab), np.linalg.norm(s_ba), 1e-30)
        worst = max(worst, resid / scale)
    return CheckResult("static jump condition residual", worst <= tol, worst, tol)


def check_relaxation_inequality(rng, instances=50):
    """Relaxed pair energy never exceeds the unrelaxed (zero-jump) energy."""
    worst = -np.inf
    for k in range(instances):
        dim = 3 if k % 2 == 0 else 2
        specs, phis, eps, grads = random_cell(rng, dim, 2)
        n = mech.interface_normal(grads[0], grads[1])
        a = mech.jump_vector(eps, phis[0], phis[1], specs[0], specs[1], n)
        e_rel = mech.pair_interface_energy(eps, phis[0], phis[1], specs[0], specs[1], n, a)
        e_zero = mech.pair_interface_energy(
            eps, phis[0], phis[1], specs[0], specs[1], n, np.zeros(dim)
        )
        worst = max(worst, (e_rel - e_zero) / max(abs(e_zero), 1e-30))
    return CheckResult("relaxation lowers the pair energy", worst <= 1e-12, worst, 1e-12)


# ---------------------------------------------------------------------------
# equal-stress identity
# ---------------------------------------------------------------------------


def check_reuss_steinbach(rng, instances=1000, tol=1e-12):
    """Two writings of the equal-stress driving force for a random stress."""
    worst = 0.0
    for k in range(instances):
        dim = 3 if k % 2 == 0 else 2
        spec_a = random_spec(rng, dim, "a")
        spec_b = random_spec(rng, dim, "b")
        sig = 1e9 * rng.standard_normal((dim, dim))
        sig = 0.5 * (sig + sig.T)
        sig_c = tn.compress(sig)
        eps_a = sig_c @ spec_a.compliance_op.T + spec_a.bain_c
        eps_b = sig_c @ spec_b.compliance_op.T + spec_b.bain_c
        psi_a = 0.5 * tn.wdot(sig_c, sig_c @ spec_a.compliance_op.T)
        psi_b = 0.5 * tn.wdot(sig_c, sig_c @ spec_b.compliance_op.T)
        dg_reuss = psi_b - psi_a - tn.wdot(sig_c, eps_b - eps_a)
        dg_stein = mech.steinbach_driving_force(sig, spec_a, spec_b)
        scale = max(abs(dg_reuss), abs(dg_stein), 1e-30)
        worst = max(worst, abs(dg_reuss - dg_stein) / scale)
    return CheckResult("equal-stress vs Steinbach driving force", worst <= tol, worst, tol)


# ---------------------------------------------------------------------------
# duality and bounds
# ---------------------------------------------------------------------------


def check_dual_reduction(rng, instances=50, tol=1e-12):
    """Both pairwise models and the closed dual form agree on two-phase cells."""
    worst = 0.0
    for k in range(instances):
        dim = 3 if k % 2 == 0 else 2
        specs, phis, eps, grads = random_cell(rng, dim, 2, equal_stiffness=(k % 3 == 0))
        entries = [(phis[0], specs[0], grads[0]), (phis[1], specs[1], grads[1])]
        ra = mech.model_a_point(eps, entries)
        rb = mech.model_b_point(eps, entries)
        n = mech.interface_normal(grads[0], grads[1])
        closed = mech.dual_driving_force(eps, phis[0], phis[1], specs[0], specs[1], n)
        vals = [ra.dg_pair(0, 1), rb.dg_pair(0, 1), closed]
        scale = max(max(abs(v) for v in vals), 1e-30)
        worst = max(worst, (max(vals) - min(vals)) / scale)
        worst = max(worst, abs(ra.psi - rb.psi) / max(abs(ra.psi), 1e-30))
    return CheckResult("dual-phase reduction identity", worst <= tol, worst, tol)


def check_bounds_chain(rng, instances=50, tol=1e-10):
    """Equal stress <= relaxed (= averaged) <= equal strain on dual cells."""
    worst = -np.inf
    for k in range(instances):
        dim = 3 if k % 2 == 0 else 2
        specs, phis, eps, grads = random_cell(rng, dim, 2, equal_stiffness=(k % 3 == 0))
        entries = [(phis[0], specs[0], grads[0]), (phis[1], specs[1], grads[1])]
        pr = mech.reuss_point(eps, entries).psi
        pa = mech.model_a_point(eps, entries).psi
        pb = mech.model_b_point(eps, entries).psi
        pv = mech.voigt_point(eps, entries).psi
        scale = max(abs(pv), 1e-30)
        worst = max(worst, (pr - pa) / scale, (pa - pv) / scale, abs(pa - pb) / scale)
    return CheckResult("dual-phase energy bound chain", worst <= tol, worst, tol)


def check_permutation(rng, instances=25, tol=1e-12):
    """Driving forces are equivariant under relabeling of the phases."""
    worst = 0.0
    for k in range(instances):
        dim = 3 if k % 2 == 0 else 2
        nph = 3 + k % 2
        specs, phis, eps, grads = random_cell(rng, dim, nph)
        entries = [(phis[i], specs[i], grads[i]) for i in range(nph)]
        perm = rng.permutation(nph)
        entries_p = [entries[i] for i in perm]
        for model_fn in (mech.model_a_point, mech.model_b_point):
            r0 = model_fn(eps, entries)
            r1 = model_fn(eps, entries_p)
            worst = max(worst, abs(r0.psi - r1.psi) / max(abs(r0.psi), 1e-30))
            inv = np.argsort(perm)
            for i in range(nph):
                for j in range(i + 1, nph):
                    v0 = r0.dg_pair(i, j)
                    v1 = r1.dg_pair(int(inv[i]), int(inv[j]))
                    worst = max(worst, abs(v0 - v1) / max(abs(v0), 1e-30))
    return CheckResult("permutation equivariance", worst <= tol, worst, tol)


# ---------------------------------------------------------------------------
# frozen-jump finite-difference checks
# ---------------------------------------------------------------------------


def _pair_s(eps, phis, specs, grads):
    """Jump tensors sym(a x n) of every pair at the given state."""
    s = {}
    nph = len(specs)
    for i in range(nph):
        for j in range(i + 1, nph):
            n = mech.interface_normal(grads[i], grads[j])
            if n is None:
                s[(i, j)] = np.zeros((specs[i].dim,) * 2)
                continue
            a = mech.jump_vector(eps, phis[i], phis[j], specs[i], specs[j], n)
            s[(i, j)] = tn.sym_dyad(a, n)
    return s


def _s_of(s, i, j):
    return s[(i, j)] if i < j else -s[(j, i)]


def frozen_energy_pair_interpolation(eps, phis, specs, s):
    """Effective energy of the energy-interpolating model at frozen jumps."""
    nph = len(specs)
    total = sum(phis)
    out = 0.0
    for g in range(nph):
        comp = total - phis[g]
        if comp <= 0:
            continue
        acc = 0.0
        for d in range(nph):
            if d == g:
                continue
            w = phis[d] / (phis[g] + phis[d])
            e_gd = eps - w * _s_of(s, g, d)
            acc += phis[d] * mech.phase_energy(e_gd, specs[g])
        out += phis[g] / comp * acc
    return out


def frozen_energy_strain_averaging(eps, phis, specs, s):
    """Effective energy of the strain-averaging model at frozen jumps."""
    nph = len(specs)
    total = sum(phis)
    out = 0.0
    for g in range(nph):
        comp = total - phis[g]
        if comp <= 0:
            continue
        e_avg = np.zeros_like(eps)
        for d in range(nph):
            if d == g:
                continue
            w = phis[d] / (phis[g] + phis[d])
            e_avg = e_avg + phis[d] * (eps - w * _s_of(s, g, d))
        e_avg = e_avg / comp
        out += phis[g] * mech.phase_energy(e_avg, specs[g])
    return out


def fd_transfer_derivative(energy_fn, phis, alpha, beta, h=1e-6):
    """Central difference of the energy along a beta->alpha fraction transfer.

    The transfer direction keeps the fractions on the unit simplex, matching
    the pairwise difference of partial derivatives that defines the elastic
    driving force.
    """
    phis = np.asarray(phis, dtype=float)
    up = phis.copy()
    up[beta] += h
    up[alpha] -= h
    dn = phis.copy()
    dn[beta] -= h
    dn[alpha] += h
    return (energy_fn(up) - energy_fn(dn)) / (2 * h)


def _check_fd(rng, model, instances, tol):
    point_fn = mech.model_a_point if model == "model_a" else mech.model_b_point
    energy = (
        frozen_energy_pair_interpolation
        if model == "model_a"
        else frozen_energy_strain_averaging
    )
    worst = 0.0
    for k in range(instances):
        dim = 3 if k % 2 == 0 else 2
        nph = 3 if k % 2 == 0 else 4
        specs, phis, eps, grads = random_cell(rng, dim, nph, equal_stiffness=(k % 4 == 0))
        s = _pair_s(eps, phis, specs, grads)
        entries = [(phis[i], specs[i], grads[i]) for i in range(nph)]
        resp = point_fn(eps, entries)
        scale = max(abs(resp.psi), 1e-30)
        for i in range(nph):
            for j in range(i + 1, nph):
                fd = fd_transfer_derivative(lambda p: energy(eps, p, specs, s), phis, i, j)
                an = resp.dg_pair(i, j)
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8 * scale))
    label = "pair-interpolated" if model == "model_a" else "strain-averaged"
    return CheckResult(f"frozen-jump finite differences ({label})", worst <= tol, worst, tol)


def check_fd_model_a(rng, instances=50, tol=1e-5):
    return _check_fd(rng, "model_a", instances, tol)


def check_fd_model_b(rng, instances=50, tol=1e-5):
    return _check_fd(rng, "model_b", instances, tol)


# ---------------------------------------------------------------------------
# suite runner
# ---------------------------------------------------------------------------

KERNEL_CHECKS = (
    check_jump_oracle,
    check_static_jump,
    check_relaxation_inequality,
    check_reuss_steinbach,
    check_dual_reduction,
    check_bounds_chain,
    check_permutation,
    check_fd_model_a,
    check_fd_model_b,
)

SUITES = {"kernels": KERNEL_CHECKS}


def run_suite(name: str, instances: int = 50, seed: int = 0):
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; available: {sorted(SUITES)}")
    results = []
    for check in SUITES[name]:
        rng = np.random.default_rng(seed)
        if check is check_reuss_steinbach:
            results.append(check(rng, instances=max(instances, 1000)))
        else:
            results.append(check(rng, instances=instances))
    return results
