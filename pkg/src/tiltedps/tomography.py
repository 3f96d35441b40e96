"""Linear state reconstruction from sampled phase space densities."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import sqrtm

from .fock import Grid2D
from .observable import GeneratingOperator, _tilted_kernels
from .optics import tilted_alpha

RANK_RTOL = 1e-8


def hermitian_basis(d) -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) basis of ``d x d`` Hermitian matrices.

    Order: diagonal units, then ``(E_jk + E_kj)/sqrt2`` and
    ``i(E_jk - E_kj)/sqrt2`` for ``j < k``.
    """
    basis = []
    for j in range(d):
        E = np.zeros((d, d), dtype=complex)
        E[j, j] = 1.0
        basis.append(E)
    s = 1.0 / math.sqrt(2.0)
    for j in range(d):
        for k in range(j + 1, d):
            E = np.zeros((d, d), dtype=complex)
            E[j, k] = E[k, j] = s
            basis.append(E)
            F = np.zeros((d, d), dtype=complex)
            F[j, k] = 1j * s
            F[k, j] = -1j * s
            basis.append(F)
    return np.array(basis)


def to_params(rho, basis=None) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if basis is None:
        basis = hermitian_basis(rho.shape[0])
    return np.einsum("bij,ji->b", basis, rho).real


def from_params(x, basis) -> np.ndarray:
    return np.tensordot(x, basis, axes=1)


@dataclass
class ForwardMap:
    """Linear map from Hermitian parameters to density samples.

    Row ``r`` gives ``g(q_r, p_r) = sum_b A[r, b] x_b`` for
    ``rho = sum_b x_b B_b``.
    """

    matrix: np.ndarray
    points: np.ndarray
    theta: float
    basis: np.ndarray
    grid: Optional[Grid2D] = None

    @property
    def cutoff(self):
        return self.basis.shape[1]

    def apply(self, rho) -> np.ndarray:
        return self.matrix @ to_params(rho, self.basis)

    def rank(self, rtol=RANK_RTOL) -> int:
        s = np.linalg.svd(self.matrix, compute_uv=False)
        return int((s > rtol * s[0]).sum())


def build_forward_map(G: GeneratingOperator, grid, d) -> ForwardMap:
    """Forward map of ``rho -> tr[rho W_theta S W_theta^*] / (2 pi |sin|)``.

    ``grid`` is a :class:`Grid2D` or an ``(M, 2)`` array of ``(q, p)``
    sample points (for instance a tilted image of a grid).
    """
    if isinstance(grid, Grid2D):
        Q, P = grid.mesh()
        pts = np.column_stack([Q.ravel(), P.ravel()])
        g2 = grid
    else:
        pts = np.asarray(grid, dtype=float).reshape(-1, 2)
        g2 = None
    if pts.shape[0] < d * d:
        warnings.warn(f"{pts.shape[0]} samples underdetermine {d * d} parameters", stacklevel=2)
    basis = hermitian_basis(d)
    t = G.theta
    K = _tilted_kernels(G, d, tilted_alpha(t, pts[:, 0], pts[:, 1]))
    A = np.einsum("bij,rji->rb", basis, K).real / (2 * math.pi * abs(t.sin))
    return ForwardMap(A, pts, t.theta, basis, g2)


@dataclass
class Reconstruction:
    rho: np.ndarray
    raw: np.ndarray
    residual: float
    rank: int


def reconstruct(samples, F: ForwardMap, ridge=0.0, rtol=RANK_RTOL) -> Reconstruction:
    """Unit-trace least squares followed by eigenvalue clipping.

    Minimizes ``|A x - g|^2 + ridge |x|^2`` subject to ``tr rho = 1``, then
    clips negative eigenvalues and renormalizes the trace.
    """
    g = np.asarray(getattr(samples, "values", samples), dtype=float).ravel()
    A = F.matrix
    if g.size != A.shape[0]:
        raise ValueError(f"{g.size} samples for a map with {A.shape[0]} rows")
    nb = A.shape[1]
    d = F.cutoff
    rank = F.rank(rtol)
    if rank < nb:
        warnings.warn(f"forward map rank {rank} < {nb} parameters", stacklevel=2)
    c = np.zeros(nb)
    c[:d] = 1.0  # trace functional in the Hermitian basis
    # KKT system for the equality-constrained least squares
    H = A.T @ A + ridge * np.eye(nb)
    kkt = np.zeros((nb + 1, nb + 1))
    kkt[:nb, :nb] = H
    kkt[:nb, nb] = c
    kkt[nb, :nb] = c
    rhs = np.concatenate([A.T @ g, [1.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    x = sol[:nb]
    raw = from_params(x, F.basis)
    raw = 0.5 * (raw + raw.conj().T)
    residual = float(np.linalg.norm(A @ x - g))
    w, v = np.linalg.eigh(raw)
    w = np.clip(w, 0.0, None)
    rho = (v * w) @ v.conj().T
    rho /= np.trace(rho).real
    rho = 0.5 * (rho + rho.conj().T)
    return Reconstruction(rho, raw, residual, rank)


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    r = sqrtm(np.asarray(rho, dtype=complex))
    return float(np.trace(sqrtm(r @ sigma @ r)).real ** 2)


def trace_distance(rho, sigma) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma))).sum())
