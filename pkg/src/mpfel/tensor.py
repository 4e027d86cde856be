"""Small-strain tensor algebra in 2D/3D with compressed symmetric storage.

Symmetric second-order tensors (strain, stress, eigenstrain) are stored by
their independent components in the order

    3D: xx, yy, zz, yz, xz, xy          2D: xx, yy, xy

without any engineering shear doubling.  The factor of two for shear
components appears only inside the contraction kernels (`wdot`, the
stiffness operator matrices), never in stored data.

Fourth-order stiffness tensors keep a full ``(d, d, d, d)`` representation
for rotations and acoustic tensors, plus a precomputed ``(nc, nc)`` operator
matrix so that ``sigma_vec = eps_vec @ C.op.T`` works on whole fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Component index pairs for the compressed representation, per dimension.
COMPONENTS = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}
NCOMP = {2: 3, 3: 6}
# Contraction weights: off-diagonal components count twice in a:b.
WEIGHTS = {d: np.array([1.0 if i == j else 2.0 for i, j in COMPONENTS[d]]) for d in (2, 3)}


def dim_of(vec: np.ndarray) -> int:
    """Spatial dimension implied by the last axis of a compressed array."""
    nc = vec.shape[-1]
    for d, n in NCOMP.items():
        if n == nc:
            return d
    raise ValueError(f"not a compressed symmetric tensor: last axis {nc}")


def compress(t: np.ndarray) -> np.ndarray:
    """Full ``(..., d, d)`` symmetric tensor -> compressed ``(..., nc)``."""
    d = t.shape[-1]
    comps = COMPONENTS[d]
    return np.stack([t[..., i, j] for i, j in comps], axis=-1)


def expand(vec: np.ndarray) -> np.ndarray:
    """Compressed ``(..., nc)`` -> full ``(..., d, d)`` symmetric tensor."""
    d = dim_of(vec)
    out = np.zeros(vec.shape[:-1] + (d, d), dtype=vec.dtype)
    for k, (i, j) in enumerate(COMPONENTS[d]):
        out[..., i, j] = vec[..., k]
        out[..., j, i] = vec[..., k]
    return out


def identity(d: int) -> np.ndarray:
    """Compressed second-order identity tensor."""
    return compress(np.eye(d))


def sym_dyad(a: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Symmetrized dyad ``sym(a (x) n)`` as a full matrix (point version)."""
    a = np.asarray(a, dtype=float)
    n = np.asarray(n, dtype=float)
    return 0.5 * (np.outer(a, n) + np.outer(n, a))


def sym_outer(a: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Compressed ``sym(a (x) n)`` for batched vectors ``(..., d)``."""
    d = a.shape[-1]
    comps = COMPONENTS[d]
    parts = []
    for i, j in comps:
        if i == j:
            parts.append(a[..., i] * n[..., i])
        else:
            parts.append(0.5 * (a[..., i] * n[..., j] + a[..., j] * n[..., i]))
    return np.stack(parts, axis=-1)


def sym_dot(vec: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``S . n`` from compressed symmetric storage.

    Works for real or complex batched inputs ``(..., nc)``/``(..., d)``.
    """
    d = n.shape[-1]
    if d == 2:
        sxx, syy, sxy = (vec[..., k] for k in range(3))
        return np.stack(
            [sxx * n[..., 0] + sxy * n[..., 1], sxy * n[..., 0] + syy * n[..., 1]], axis=-1
        )
    sxx, syy, szz, syz, sxz, sxy = (vec[..., k] for k in range(6))
    return np.stack(
        [
            sxx * n[..., 0] + sxy * n[..., 1] + sxz * n[..., 2],
            sxy * n[..., 0] + syy * n[..., 1] + syz * n[..., 2],
            sxz * n[..., 0] + syz * n[..., 1] + szz * n[..., 2],
        ],
        axis=-1,
    )


def wdot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Double contraction ``u : v`` of two compressed symmetric tensors."""
    w = WEIGHTS[dim_of(u)]
    return np.sum(u * v * w, axis=-1)


def trace(vec: np.ndarray) -> np.ndarray:
    d = dim_of(vec)
    return np.sum(vec[..., :d], axis=-1)


@dataclass(frozen=True)
class Rotation:
    """Proper orthogonal transform; 2D rotations parameterized by one angle."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.shape not in ((2, 2), (3, 3)):
            raise ValueError("rotation matrix must be 2x2 or 3x3")
        if not np.allclose(m @ m.T, np.eye(m.shape[0]), atol=1e-10):
            raise ValueError("matrix is not orthogonal")
        if np.linalg.det(m) < 0:
            raise ValueError("improper rotation (det < 0)")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, d: int) -> "Rotation":
        return cls(np.eye(d))

    @classmethod
    def from_angle(cls, theta: float) -> "Rotation":
        """2D rotation by angle ``theta`` (radians)."""
        c, s = math.cos(theta), math.sin(theta)
        return cls(np.array([[c, s], [-s, c]]))

    @classmethod
    def from_axis_angle(cls, axis, theta: float) -> "Rotation":
        """3D rotation about ``axis`` by ``theta`` (radians), Rodrigues form."""
        k = np.asarray(axis, dtype=float)
        k = k / np.linalg.norm(k)
        kh = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        m = np.eye(3) + math.sin(theta) * kh + (1 - math.cos(theta)) * (kh @ kh)
        return cls(m)


class Stiffness:
    """Fourth-order elasticity tensor with minor and major symmetries.

    Attributes
    ----------
    c : ndarray, shape (d, d, d, d)
        Full tensor components (Pa).
    mat : ndarray, shape (nc, nc)
        Compressed matrix ``mat[a, b] = c[ij(a), kl(b)]`` (tensor components).
    op : ndarray, shape (nc, nc)
        Contraction operator: ``(C : e)_a = sum_b op[a, b] e_b`` with shear
        doubling folded in, so plain matrix products act on compressed data.
    """

    def __init__(self, c: np.ndarray):
        c = np.asarray(c, dtype=float)
        if c.ndim != 4 or len(set(c.shape)) != 1 or c.shape[0] not in (2, 3):
            raise ValueError("stiffness must have shape (d, d, d, d), d in (2, 3)")
        self.c = c
        self.dim = c.shape[0]
        comps = COMPONENTS[self.dim]
        nc = len(comps)
        mat = np.empty((nc, nc))
        for a, (i, j) in enumerate(comps):
            for b, (k, l) in enumerate(comps):
                mat[a, b] = c[i, j, k, l]
        self.mat = mat
        self.op = mat * WEIGHTS[self.dim][None, :]

    @classmethod
    def isotropic(cls, lam: float, mu: float, dim: int = 3) -> "Stiffness":
        """Isotropic stiffness from Lame constants (Pa)."""
        eye = np.eye(dim)
        c = (
            lam * np.einsum("ij,kl->ijkl", eye, eye)
            + mu * np.einsum("ik,jl->ijkl", eye, eye)
            + mu * np.einsum("il,jk->ijkl", eye, eye)
        )
        return cls(c)

    def contract(self, e: np.ndarray) -> np.ndarray:
        """``C : e`` for a full symmetric matrix ``e``; returns a full matrix."""
        return np.einsum("ijkl,kl->ij", self.c, np.asarray(e, dtype=float))

    def contract_c(self, e_c: np.ndarray) -> np.ndarray:
        """``C : e`` on compressed batched data ``(..., nc)``."""
        return e_c @ self.op.T

    def acoustic(self, n: np.ndarray) -> np.ndarray:
        """Acoustic tensor ``A_ik = n_j C_ijkl n_l`` for a unit vector ``n``."""
        n = np.asarray(n, dtype=float)
        return np.einsum("j,ijkl,l->ik", n, self.c, n)

    def acoustic_batch(self, n: np.ndarray) -> np.ndarray:
        """Acoustic tensors for a batch of direction vectors ``(m, d)``."""
        d = self.dim
        # A_ik = NN_jl C_ijkl with NN = n (x) n, done as one (m, d*d) matmul
        c2 = self.c.transpose(0, 2, 1, 3).reshape(d * d, d * d)
        nn = (n[:, None, :] * n[:, :, None]).reshape(n.shape[0], d * d)
        return (nn @ c2.T).reshape(n.shape[0], d, d)

    def rotate(self, r: Rotation) -> "Stiffness":
        m = r.matrix
        c = np.einsum("ip,jq,kr,ls,pqrs->ijkl", m, m, m, m, self.c, optimize=True)
        # re-symmetrize so minor/major symmetries hold exactly after roundoff
        c = 0.5 * (c + c.transpose(1, 0, 2, 3))
        c = 0.5 * (c + c.transpose(0, 1, 3, 2))
        c = 0.5 * (c + c.transpose(2, 3, 0, 1))
        return Stiffness(c)

    def inverse_op(self) -> np.ndarray:
        """Compliance operator: ``e_vec = sigma_vec @ inverse_op().T``."""
        return np.linalg.inv(self.op)

    def energy(self, e: np.ndarray) -> float:
        """``0.5 e : C : e`` for a full symmetric matrix ``e``."""
        return 0.5 * float(np.einsum("ij,ijkl,kl->", e, self.c, e))

    def __eq__(self, other):
        return isinstance(other, Stiffness) and np.array_equal(self.c, other.c)

    def __hash__(self):
        return hash(self.c.tobytes())


def contract(c: Stiffness, e: np.ndarray) -> np.ndarray:
    """``C : e`` with dimension checking; ``e`` is a full symmetric matrix."""
    e = np.asarray(e, dtype=float)
    if e.shape != (c.dim, c.dim):
        raise ValueError(f"dimension mismatch: C is {c.dim}D, e has shape {e.shape}")
    return c.contract(e)


def acoustic_tensor(c: Stiffness, n: np.ndarray) -> np.ndarray:
    """``A_ik = n_j C_ijkl n_l``; ``n`` must be a unit vector."""
    n = np.asarray(n, dtype=float)
    if n.shape != (c.dim,):
        raise ValueError(f"dimension mismatch: C is {c.dim}D, n has shape {n.shape}")
    return c.acoustic(n)


def rotate(x, r: Rotation):
    """Rotate a symmetric tensor (full matrix) or a `Stiffness`."""
    if isinstance(x, Stiffness):
        return x.rotate(r)
    m = r.matrix
    return m @ np.asarray(x, dtype=float) @ m.T
