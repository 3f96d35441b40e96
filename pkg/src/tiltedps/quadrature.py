"""Rotated-quadrature densities and the high-amplitude limit statistics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .fock import Grid1D, Grid2D, check_density, hermite_functions
from .optics import split_mixture

NEGATIVE_TOL = 1e-12
COVERAGE_TOL = 1e-6


@dataclass
class DensityGrid:
    """Probability density sampled on a uniform 1D or 2D grid.

    ``flags`` optionally marks 2D cells whose value is not trusted (see
    :func:`tiltedps.observable.phase_space_density`).
    """

    grid: Union[Grid1D, Grid2D]
    values: np.ndarray
    flags: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ndim(self):
        return 1 if isinstance(self.grid, Grid1D) else 2

    def integral(self) -> float:
        """Trapezoid-rule integral over the grid."""
        if self.ndim == 1:
            return float(np.trapezoid(self.values, dx=self.grid.spacing))
        inner = np.trapezoid(self.values, dx=self.grid.y.spacing, axis=1)
        return float(np.trapezoid(inner, dx=self.grid.x.spacing))

    def marginal(self, axis) -> "DensityGrid":
        """Integrate out ``axis`` (0 integrates over x, 1 over y)."""
        if self.ndim != 2:
            raise ValueError("marginal needs a 2D density")
        other = self.grid.y if axis == 0 else self.grid.x
        dx = self.grid.x.spacing if axis == 0 else self.grid.y.spacing
        return DensityGrid(other, np.trapezoid(self.values, dx=dx, axis=axis))


def clip_density(values, name="density"):
    """Apply the roundoff policy: error below ``-1e-12``, clip tiny negatives."""
    values = np.asarray(values, dtype=float)
    low = values.min()
    if low < -NEGATIVE_TOL:
        raise ValueError(f"{name} has a negative value {low:.3g}")
    return np.clip(values, 0.0, None)


def _coverage(dens: DensityGrid, name):
    mass = dens.integral()
    if mass < 1.0 - COVERAGE_TOL:
        warnings.warn(f"{name}: grid captures only {mass:.8f} of the probability", stacklevel=3)


def quadrature_density(rho, theta, grid: Grid1D, warn=True) -> DensityGrid:
    """Density of the spectral measure of ``Q_theta`` in state ``rho``.

    ``p(x) = sum_{mn} rho_mn e^{i(n-m)theta} h_m(x) h_n(x)``, i.e. the
    vacuum-phase eigenvector of ``Q_theta`` is ``R(theta)|x>``.
    """
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    v = hermite_functions(grid.points, d - 1) * np.exp(1j * theta * np.arange(d))[:, None]
    vals = np.einsum("mx,mn,nx->x", v.conj(), rho, v).real
    out = DensityGrid(grid, clip_density(vals, "quadrature density"))
    if warn:
        _coverage(out, "quadrature_density")
    return out


def limit_rhs_density(rho, sigma, theta, grid: Grid2D, warn=True) -> DensityGrid:
    """Joint density of ``Q(X/sqrt2) (x) Q_theta(Y/sqrt2)`` after ``U_12``.

    Evaluates ``(1/2) f(x/sqrt2, y/sqrt2)`` where ``f`` is the
    ``Q (x) Q_theta`` density of ``U_12 (rho (x) sigma) U_12^*``.  The
    splitter is applied exactly on a doubled cutoff.
    """
    rho = check_density(rho, name="rho")
    sigma = check_density(sigma, name="sigma")
    D = rho.shape[0] + sigma.shape[0] - 1
    hu = hermite_functions(grid.x.points / math.sqrt(2), D - 1)
    hv = hermite_functions(grid.y.points / math.sqrt(2), D - 1)
    hv = hv * np.exp(-1j * theta * np.arange(D))[:, None]
    vals = np.zeros(grid.shape)
    for w, Phi in split_mixture(rho, sigma):
        amp = hu.T @ Phi @ hv
        vals += w * np.abs(amp) ** 2
    out = DensityGrid(grid, 0.5 * vals)
    if warn:
        _coverage(out, "limit_rhs_density")
    return out


def convolve_density(kernel: DensityGrid, base: DensityGrid, axis=None) -> DensityGrid:
    """Grid convolution ``(kernel * base)(x) = int kernel(x - u) base(u) du``.

    Both grids must share the spacing.  The result is returned on the full
    support grid (``count = n_k + n_b - 1``, ``min = min_k + min_b``).  For a
    2D ``base`` pass ``axis`` (0 for x, 1 for y); the other axis is kept.
    """
    if kernel.ndim != 1:
        raise ValueError("kernel must be one-dimensional")
    kg = kernel.grid
    if base.ndim == 1:
        bg = base.grid
    else:
        if axis not in (0, 1):
            raise ValueError("axis must be 0 or 1 for a 2D base")
        bg = base.grid.x if axis == 0 else base.grid.y
    h = kg.spacing
    if not math.isclose(h, bg.spacing, rel_tol=1e-9, abs_tol=0.0):
        raise ValueError(f"spacing mismatch: kernel {h} vs base {bg.spacing}")
    out_grid = Grid1D(kg.min + bg.min, kg.max + bg.max, kg.count + bg.count - 1)
    if base.ndim == 1:
        vals = np.convolve(kernel.values, base.values) * h
        return DensityGrid(out_grid, vals)
    vals = np.apply_along_axis(lambda col: np.convolve(kernel.values, col) * h, axis,
                               base.values)
    grid = Grid2D(out_grid, base.grid.y) if axis == 0 else Grid2D(base.grid.x, out_grid)
    return DensityGrid(grid, vals)


def restrict(dens: DensityGrid, grid: Union[Grid1D, Grid2D]) -> DensityGrid:
    """Pick the values of ``dens`` on a sub-grid lying on the same lattice."""
    def index(src: Grid1D, dst: Grid1D):
        k = (dst.points - src.min) / src.spacing
        ki = np.rint(k).astype(int)
        if np.abs(k - ki).max() > 1e-6 or ki.min() < 0 or ki.max() >= src.count:
            raise ValueError(f"grid {dst} is not a sub-lattice of {src}")
        return ki
    if isinstance(grid, Grid1D):
        return DensityGrid(grid, dens.values[index(dens.grid, grid)])
    ix = index(dens.grid.x, grid.x)
    iy = index(dens.grid.y, grid.y)
    return DensityGrid(grid, dens.values[np.ix_(ix, iy)])


def gaussian_density(variance, grid: Grid1D, mean=0.0) -> DensityGrid:
    """Normal density on a grid; ``variance == 0`` gives a one-cell delta."""
    x = grid.points
    if variance == 0:
        vals = np.zeros_like(x)
        i = int(np.argmin(np.abs(x - mean)))
        vals[i] = 1.0 / grid.spacing
        return DensityGrid(grid, vals)
    vals = np.exp(-0.5 * (x - mean) ** 2 / variance) / math.sqrt(2 * math.pi * variance)
    return DensityGrid(grid, vals)
