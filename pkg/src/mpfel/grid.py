"""Periodic Cartesian grids and finite-difference stencils.

Fields are plain numpy arrays shaped ``grid.dims`` (scalars) or with extra
leading/trailing axes for components.  All stencils use second-order central
differences with periodic wrap; sources are never written in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class Grid:
    """Regular periodic grid: integer extents per axis and uniform spacing (m)."""

    dims: tuple
    spacing: float

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) not in (2, 3):
            raise ValueError("grid must be 2D or 3D")
        if any(n < 4 for n in dims):
            raise ValueError("all grid extents must be >= 4")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.dims))


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Central-difference gradient, shape ``(d, *dims)``, units 1/m."""
    inv2dx = 1.0 / (2.0 * grid.spacing)
    return np.stack(
        [(np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) * inv2dx for ax in range(grid.dim)]
    )


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Standard (2d+1)-point Laplacian, units 1/m^2."""
    invdx2 = 1.0 / grid.spacing**2
    out = -2.0 * grid.dim * f * invdx2
    for ax in range(grid.dim):
        out += (np.roll(f, -1, axis=ax) + np.roll(f, 1, axis=ax)) * invdx2
    return out


def gradient_and_laplacian(f: np.ndarray, grid: Grid):
    """Both stencils from one set of rolls (cheaper than separate calls)."""
    inv2dx = 1.0 / (2.0 * grid.spacing)
    invdx2 = 1.0 / grid.spacing**2
    grad = np.empty((grid.dim,) + f.shape)
    lap = -2.0 * grid.dim * f * invdx2
    for ax in range(grid.dim):
        fp = np.roll(f, -1, axis=ax)
        fm = np.roll(f, 1, axis=ax)
        grad[ax] = (fp - fm) * inv2dx
        lap += (fp + fm) * invdx2
    return grad, lap


def averaging_radius_cells(eta_cells: float) -> float:
    """Driving-force averaging radius for interface width ``eta`` (in cells)."""
    return (eta_cells + 1.0) / 2.0 + 1.0


@lru_cache(maxsize=16)
def _ball_offsets(dim: int, radius: float) -> tuple:
    r = int(np.floor(radius + 1e-12))
    rng = range(-r, r + 1)
    if dim == 2:
        offs = [(i, j) for i in rng for j in rng if i * i + j * j <= radius * radius + 1e-12]
    else:
        offs = [
            (i, j, k)
            for i in rng
            for j in rng
            for k in rng
            if i * i + j * j + k * k <= radius * radius + 1e-12
        ]
    return tuple(offs)


class SphereAverager:
    """Unweighted mean over a ball of cells, applied by FFT convolution.

    The kernel offsets are enumerated once per (dims, radius); offsets that
    wrap onto the same cell on small grids accumulate multiplicity.
    """

    def __init__(self, grid: Grid, radius_cells: float):
        if radius_cells < 0:
            raise ValueError("averaging radius must be >= 0")
        self.grid = grid
        self.radius_cells = float(radius_cells)
        offs = _ball_offsets(grid.dim, self.radius_cells)
        kernel = np.zeros(grid.dims)
        for off in offs:
            idx = tuple(o % n for o, n in zip(off, grid.dims))
            kernel[idx] += 1.0
        kernel /= len(offs)
        self.n_offsets = len(offs)
        self._kernel_hat = sfft.rfftn(kernel)

    def apply(self, f: np.ndarray) -> np.ndarray:
        if self.radius_cells == 0.0 or self.n_offsets == 1:
            return f.copy()
        fhat = sfft.rfftn(f)
        # offsets (-o) gathered at each cell == correlation with the kernel
        return sfft.irfftn(fhat * self._kernel_hat, s=self.grid.dims)


def sphere_average(f: np.ndarray, grid: Grid, radius_cells: float) -> np.ndarray:
    """Per-cell mean of ``f`` over cells within ``radius_cells``, periodic."""
    return SphereAverager(grid, radius_cells).apply(f)
