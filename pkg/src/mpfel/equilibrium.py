"""Mechanical equilibrium on the periodic grid.

Fixed-point spectral iteration with a homogeneous reference medium: the
polarization (stress minus reference response) is mapped through the
periodic Green operator of the reference stiffness in Fourier space, which
returns a compatible strain field with the prescribed mean.  The scheme
iterates constitutive evaluation and Green projection until the spectral
norm of the stress divergence drops below tolerance; nonlinearity from
strain-dependent jump vectors is absorbed by re-evaluating the constitutive
closure each iteration.

The Green operator uses the classical continuous-frequency form; Nyquist
frequencies are zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import tensor as tn
from .grid import Grid
from .tensor import Stiffness

FFT_WORKERS = 1


def set_fft_workers(n: int):
    global FFT_WORKERS
    FFT_WORKERS = max(1, int(n))


@dataclass
class SolverConfig:
    """Reference stiffness, applied mean strain, and iteration controls."""

    eps_bar: np.ndarray
    c0: Stiffness | None = None
    tolerance: float = 1e-6
    max_iterations: int = 500

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


class SolverError(RuntimeError):
    def __init__(self, message, residuals):
        super().__init__(message)
        self.residual_history = list(residuals)


def choose_reference(specs, isotropic_projection: bool = False) -> Stiffness:
    """Componentwise mean of the (rotated) phase stiffnesses."""
    mean = np.mean([s.c_eff.c for s in specs], axis=0)
    c = Stiffness(mean)
    return isotropic_part(c) if isotropic_projection else c


def isotropic_part(c: Stiffness) -> Stiffness:
    """Closest isotropic tensor (orthogonal projection)."""
    d = c.dim
    b1 = np.einsum("iijj->", c.c)
    b2 = np.einsum("ijij->", c.c)
    gram = np.array([[d**2, d], [d, d * (d + 1) / 2]])
    lam, two_mu = np.linalg.solve(gram, [b1, b2])
    return Stiffness.isotropic(lam, two_mu / 2.0, dim=d)


@dataclass
class SolveResult:
    eps: np.ndarray
    sigma: np.ndarray
    residuals: list
    iterations: int


class SpectralSolver:
    """Reusable Green-operator solver for one grid and reference medium."""

    def __init__(self, grid: Grid, c0: Stiffness):
        if c0.dim != grid.dim:
            raise ValueError("reference stiffness dimension must match the grid")
        self.grid = grid
        self.c0 = c0
        self.nc = tn.NCOMP[grid.dim]
        dims = grid.dims
        freqs = [2 * np.pi * np.fft.fftfreq(n, d=grid.spacing) for n in dims[:-1]]
        freqs.append(2 * np.pi * np.fft.rfftfreq(dims[-1], d=grid.spacing))
        mesh = np.meshgrid(*freqs, indexing="ij")
        self.kshape = mesh[0].shape
        xi = np.stack([m.ravel() for m in mesh], axis=-1)  # (K, d), rad/m
        nyq = np.zeros(xi.shape[0], dtype=bool)
        for ax, n in enumerate(dims):
            if n % 2 == 0:
                nyq |= np.isclose(np.abs(xi[:, ax]), np.pi / grid.spacing)
        zero = np.all(xi == 0.0, axis=1)
        self.qmask = ~(nyq | zero)  # frequencies the Green operator acts on
        self.xi = xi
        self.xi_cell = xi * grid.spacing  # dimensionless, for residuals
        acoustic = c0.acoustic_batch(xi[self.qmask])
        self.kinv = np.linalg.inv(acoustic)
        # rfft double-count weights for Parseval sums
        rho = np.full(xi.shape[0], 2.0)
        last = np.abs(xi[:, -1])
        rho[np.isclose(last, 0.0)] = 1.0
        if dims[-1] % 2 == 0:
            rho[np.isclose(last, np.pi / grid.spacing)] = 1.0
        self.rho = rho

    # -- transforms -----------------------------------------------------------

    def _rfft(self, f):
        dims = self.grid.dims
        ax = tuple(range(len(dims)))
        return sfft.rfftn(f.reshape(dims + (self.nc,)), axes=ax, workers=FFT_WORKERS).reshape(
            -1, self.nc
        )

    def _irfft(self, fhat):
        dims = self.grid.dims
        ax = tuple(range(len(dims)))
        out = sfft.irfftn(
            fhat.reshape(self.kshape + (self.nc,)), s=dims, axes=ax, workers=FFT_WORKERS
        )
        return out.reshape(-1, self.nc)

    # -- residual ---------------------------------------------------------------

    def _residual(self, sig_hat):
        """Spectral rms of div(sigma) in cell units, relative to the stress scale."""
        n_tot = self.grid.ncells
        div = tn.sym_dot(sig_hat, self.xi_cell)
        div[~self.qmask] = 0.0
        num = np.sqrt(np.sum(self.rho * np.sum(np.abs(div) ** 2, axis=-1))) / n_tot
        sig_mean = np.real(sig_hat[0]) / n_tot
        denom = np.sqrt(tn.wdot(sig_mean, sig_mean))
        rms = np.sqrt(np.sum(self.rho * np.sum(np.abs(sig_hat) ** 2, axis=-1))) / n_tot
        denom = max(denom, 1e-3 * rms)
        if denom == 0.0:
            return 0.0
        return float(num / denom)

    def _green_strain(self, tau_hat):
        """Compatible periodic strain from a polarization field (zero mean)."""
        out = np.zeros_like(tau_hat)
        q = self.qmask
        txi = tn.sym_dot(tau_hat[q], self.xi[q])
        w = np.einsum("kij,kj->ki", self.kinv, txi)
        out[q] = -tn.sym_outer(self.xi[q], w)
        return out

    # -- driver -----------------------------------------------------------------

    def solve(
        self,
        sigma_fn,
        eps_bar,
        eps0: np.ndarray | None = None,
        tolerance: float = 1e-6,
        max_iterations: int = 500,
        log=None,
    ) -> SolveResult:
        """Iterate to mechanical equilibrium under a prescribed mean strain.

        ``sigma_fn`` maps a strain field ``(ncells, nc)`` to the stress field;
        ``eps_bar`` is the applied mean strain (full matrix or compressed).
        """
        eps_bar_c = np.asarray(eps_bar, dtype=float)
        if eps_bar_c.ndim == 2:
            eps_bar_c = tn.compress(eps_bar_c)
        n_tot = self.grid.ncells
        if eps0 is None:
            eps = np.tile(eps_bar_c, (n_tot, 1))
        else:
            eps = eps0.reshape(n_tot, self.nc).copy()
            eps += eps_bar_c - eps.mean(axis=0)  # re-pin the mean
        op0 = self.c0.op
        residuals = []
        eps_hat = None
        for it in range(1, max_iterations + 1):
            sigma = sigma_fn(eps)
            sig_hat = self._rfft(sigma)
            res = self._residual(sig_hat)
            residuals.append(res)
            if log is not None:
                log(it, res)
            if res <= tolerance:
                return SolveResult(eps, sigma, residuals, it)
            if res > 10.0 * min(residuals) and it > 3:
                raise SolverError(
                    f"spectral iteration diverging (residual {res:.3e} after {it} iterations)",
                    residuals,
                )
            if eps_hat is None:
                eps_hat = self._rfft(eps)
            tau_hat = sig_hat - eps_hat @ op0.T
            eps_hat = self._green_strain(tau_hat)
            eps_hat[0] = eps_bar_c * n_tot  # prescribe the mean exactly
            eps = self._irfft(eps_hat)
        raise SolverError(
            f"no convergence after {max_iterations} iterations "
            f"(residual {residuals[-1]:.3e}, tolerance {tolerance:.1e})",
            residuals,
        )
