"""Truncated Fock-space primitives for a single bosonic mode and pairs of modes.

States and operators are plain numpy arrays.  A cutoff ``d`` means the Fock
levels ``0..d-1`` are kept.  Two-mode objects use the ordering
``mode1 (x) mode2`` with mode 1 as the slow index, so a two-mode vector with
coefficients ``c[m, n]`` flattens row-major.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammainc

TAIL_TOL = 1e-10
HERMITIAN_TOL = 1e-12
EIGEN_TOL = 1e-10


class TruncationError(RuntimeError):
    """Raised when a Fock cutoff is too small for the requested accuracy."""

    def __init__(self, message, parameter="cutoff", suggested_cutoff=None):
        super().__init__(message)
        self.parameter = parameter
        self.suggested_cutoff = suggested_cutoff


class InvalidStateError(ValueError):
    pass


def recommended_cutoff(alpha) -> int:
    """Cutoff keeping the Poisson tail of ``|alpha>`` below ~1e-10."""
    r = abs(alpha)
    return int(math.ceil(r * r + 6 * r + 10))


def poisson_tail(mean, d) -> float:
    """P(N >= d) for N ~ Poisson(mean)."""
    if mean == 0:
        return 0.0
    return float(gammainc(d, mean))


def _check_cutoff(d):
    if int(d) != d or d < 2:
        raise ValueError(f"cutoff must be an integer >= 2, got {d!r}")
    return int(d)


def basis_state(n, d) -> np.ndarray:
    d = _check_cutoff(d)
    if not 0 <= n < d:
        raise TruncationError(f"level {n} outside cutoff {d}", suggested_cutoff=n + 1)
    v = np.zeros(d, dtype=complex)
    v[n] = 1.0
    return v


def coherent_state(z, d, tail_tol=TAIL_TOL, strict=True) -> np.ndarray:
    """Fock amplitudes ``exp(-|z|^2/2) z^n / sqrt(n!)`` for ``n < d``.

    If the Poisson weight beyond the cutoff exceeds ``tail_tol`` a
    :class:`TruncationError` is raised (or a warning issued when
    ``strict=False``).
    """
    d = _check_cutoff(d)
    z = complex(z)
    tail = poisson_tail(abs(z) ** 2, d)
    if tail > tail_tol:
        msg = (f"coherent amplitude {z} loses {tail:.3g} of its norm at cutoff {d}; "
               f"use cutoff >= {recommended_cutoff(z)}")
        if strict:
            raise TruncationError(msg, suggested_cutoff=recommended_cutoff(z))
        warnings.warn(msg, stacklevel=2)
    c = np.empty(d, dtype=complex)
    c[0] = math.exp(-0.5 * abs(z) ** 2)
    for n in range(1, d):
        c[n] = c[n - 1] * z / math.sqrt(n)
    return c


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def vacuum(d) -> np.ndarray:
    return pure_density(basis_state(0, d))


def number_state(n, d) -> np.ndarray:
    return pure_density(basis_state(n, d))


def coherent_density(z, d, **kw) -> np.ndarray:
    return pure_density(coherent_state(z, d, **kw))


def thermal_state(nbar, d, tail_tol=TAIL_TOL) -> np.ndarray:
    """Truncated thermal state with mean photon number ``nbar``."""
    d = _check_cutoff(d)
    if nbar < 0:
        raise InvalidStateError("thermal mean photon number must be >= 0")
    if nbar == 0:
        return vacuum(d)
    ratio = nbar / (1.0 + nbar)
    tail = ratio ** d
    if tail > tail_tol:
        need = int(math.ceil(math.log(tail_tol) / math.log(ratio)))
        raise TruncationError(
            f"thermal state nbar={nbar} loses {tail:.3g} at cutoff {d}", suggested_cutoff=need)
    p = (1.0 - ratio) * ratio ** np.arange(d)
    return np.diag(p).astype(complex)


def random_density(d, rank=None, seed=0) -> np.ndarray:
    """Random rank-``rank`` density matrix from a Ginibre draw (fixed seed)."""
    rank = d if rank is None else rank
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def check_density(rho, tail_tol=TAIL_TOL, name="rho") -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"{name}: expected a square matrix, got shape {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > HERMITIAN_TOL:
        raise InvalidStateError(f"{name}: not Hermitian")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -EIGEN_TOL:
        raise InvalidStateError(f"{name}: negative eigenvalue {evals.min():.3g}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tail_tol:
        raise InvalidStateError(f"{name}: trace {tr!r} differs from 1 by more than {tail_tol:g}")
    return rho


def pure_components(rho, tol=1e-15):
    """Eigen-decomposition ``rho = sum_i w_i |v_i><v_i|`` keeping ``w_i > tol``."""
    w, v = np.linalg.eigh(np.asarray(rho, dtype=complex))
    keep = w > tol
    return w[keep], v[:, keep].T


class ModeOperators(NamedTuple):
    a: np.ndarray
    adag: np.ndarray
    N: np.ndarray
    Q_theta: np.ndarray
    P: np.ndarray


def annihilation(d) -> np.ndarray:
    d = _check_cutoff(d)
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


def quadrature(theta, d) -> np.ndarray:
    """``Q_theta = (e^{i theta} a^* + e^{-i theta} a) / sqrt(2)``, truncated."""
    a = annihilation(d)
    return (np.exp(1j * theta) * a.conj().T + np.exp(-1j * theta) * a) / math.sqrt(2)


def mode_operators(theta, d) -> ModeOperators:
    a = annihilation(d)
    return ModeOperators(
        a=a,
        adag=a.conj().T.copy(),
        N=np.diag(np.arange(d)).astype(complex),
        Q_theta=quadrature(theta, d),
        P=quadrature(math.pi / 2, d),
    )


def hermite_functions(x, nmax) -> np.ndarray:
    """Normalized Hermite functions ``h_n(x)``, ``n = 0..nmax``.

    Uses the three-term recurrence on the normalized functions, which stays
    stable for large ``n``.  Returns an array of shape ``(nmax + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    h = np.empty((nmax + 1,) + x.shape)
    h[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if nmax >= 1:
        h[1] = math.sqrt(2.0) * x * h[0]
    for n in range(1, nmax):
        h[n + 1] = math.sqrt(2.0 / (n + 1)) * x * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


@dataclass(frozen=True)
class Grid1D:
    min: float
    max: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("grid count must be >= 2")
        if not self.max > self.min:
            raise ValueError("grid max must exceed min")

    @property
    def spacing(self) -> float:
        return (self.max - self.min) / (self.count - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)

    @classmethod
    def parse(cls, text: str) -> "Grid1D":
        lo, hi, n = text.split(":")
        return cls(float(lo), float(hi), int(n))

    def __str__(self):
        return f"{self.min:g}:{self.max:g}:{self.count}"

    @classmethod
    def centered(cls, spacing, half_count) -> "Grid1D":
        """Symmetric grid ``k * spacing`` for ``|k| <= half_count``."""
        return cls(-half_count * spacing, half_count * spacing, 2 * half_count + 1)


@dataclass(frozen=True)
class Grid2D:
    x: Grid1D
    y: Grid1D

    @classmethod
    def square(cls, lo, hi, count) -> "Grid2D":
        g = Grid1D(lo, hi, count)
        return cls(g, g)

    @classmethod
    def parse(cls, text: str) -> "Grid2D":
        parts = text.split(",")
        gx = Grid1D.parse(parts[0])
        gy = Grid1D.parse(parts[1]) if len(parts) > 1 else gx
        return cls(gx, gy)

    @property
    def shape(self):
        return (self.x.count, self.y.count)

    @property
    def cell_area(self) -> float:
        return self.x.spacing * self.y.spacing

    def mesh(self):
        """``(Q, P)`` arrays of shape ``(x.count, y.count)`` (``indexing='ij'``)."""
        return np.meshgrid(self.x.points, self.y.points, indexing="ij")


def hermite_basis(grid: Grid1D, nmax, margin=4.0) -> np.ndarray:
    """Hermite functions on a quadrature grid, warning if the grid is too narrow."""
    need = math.sqrt(2 * nmax) + margin
    if grid.min > -need or grid.max < need:
        warnings.warn(
            f"grid {grid} does not cover +-{need:.2f}; Hermite quadrature will be inaccurate",
            stacklevel=2)
    return hermite_functions(grid.points, nmax)


def trapezoid_weights(grid: Grid1D) -> np.ndarray:
    w = np.full(grid.count, grid.spacing)
    w[0] = w[-1] = 0.5 * grid.spacing
    return w


def compose_two_mode(A, B) -> np.ndarray:
    """Kronecker product ``A (x) B`` with mode 1 as the slow index."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"cutoff mismatch: {A.shape} vs {B.shape}")
    return np.kron(A, B)


def reduce(tau, mode, dims=None) -> np.ndarray:
    """Partial trace of a two-mode operator, keeping ``mode`` (1 or 2)."""
    tau = np.asarray(tau)
    if dims is None:
        d = math.isqrt(tau.shape[0])
        if d * d != tau.shape[0]:
            raise ValueError("two-mode operator dimension is not a perfect square")
        dims = (d, d)
    d1, d2 = dims
    t = tau.reshape(d1, d2, d1, d2)
    if mode == 1:
        return np.einsum("ajbj->ab", t)
    if mode == 2:
        return np.einsum("iaib->ab", t)
    raise ValueError("mode must be 1 or 2")
