"""Unitaries of the eight-port network and of the tilted Weyl representation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import roots_hermite

from .fock import (annihilation, hermite_functions, pure_components, quadrature,
                   recommended_cutoff)


@dataclass(frozen=True)
class TiltAngle:
    """Phase shift ``theta`` in ``(-pi, 0) U (0, pi)``."""

    theta: float

    def __post_init__(self):
        t = float(self.theta)
        if not (-math.pi < t < math.pi) or t == 0.0:
            raise ValueError(f"tilt angle must lie in (-pi, 0) U (0, pi), got {t!r}")
        object.__setattr__(self, "theta", t)

    @property
    def sin(self) -> float:
        return math.sin(self.theta)

    @property
    def cos(self) -> float:
        return math.cos(self.theta)

    @property
    def lam(self) -> float:
        """Dilation factor ``sqrt((1 - cos) / (1 + cos)) = |sin| / (1 + cos)``."""
        return abs(self.sin) / (1.0 + self.cos)

    def forward(self, q, p):
        return q, q * self.cos + p * self.sin

    def inverse(self, q, p):
        return q, (p - q * self.cos) / self.sin


def as_tilt(theta) -> TiltAngle:
    return theta if isinstance(theta, TiltAngle) else TiltAngle(theta)


# -- beam splitter -----------------------------------------------------------

def _splitter_generator(N, jmin=0, jmax=None):
    """``a2^* a1 - a1^* a2`` on the states ``|j, N-j>``, ``jmin <= j <= jmax``."""
    if jmax is None:
        jmax = N
    j = np.arange(jmin + 1, jmax + 1)
    off = np.sqrt(j * (N - j + 1.0))
    G = np.zeros((jmax - jmin + 1,) * 2)
    idx = j - jmin
    G[idx - 1, idx] = off
    G[idx, idx - 1] = -off
    return G


@lru_cache(maxsize=512)
def _block(N):
    B = expm(0.25 * math.pi * _splitter_generator(N))
    B.setflags(write=False)
    return B


def beam_splitter_block(N) -> np.ndarray:
    """Exact 50:50 splitter on the total-photon-number-``N`` subspace.

    Entry ``[j, i]`` is ``<j, N-j| U |i, N-i>`` (index = primary-mode
    occupation).  The block is a real orthogonal matrix, fixed by
    ``U |z> (x) |w> = |(z-w)/sqrt2> (x) |(z+w)/sqrt2>``.
    """
    return _block(int(N))


def beam_splitter(d) -> np.ndarray:
    """``U_12`` as a ``d^2 x d^2`` matrix in the ``(mode1, mode2)`` ordering.

    Blocks with total number ``N < d`` are exact.  For ``N >= d`` the block is
    cut by the per-mode cutoff; there the truncated generator is exponentiated
    so every block stays exactly unitary, but only states with ``N < d`` are
    mapped faithfully.  Use :func:`apply_beam_splitter` for exact propagation.
    """
    U = np.zeros((d * d, d * d))
    for N in range(2 * d - 1):
        jmin, jmax = max(0, N - d + 1), min(N, d - 1)
        if N < d:
            B = beam_splitter_block(N)
        else:
            B = expm(0.25 * math.pi * _splitter_generator(N, jmin, jmax))
        j = np.arange(jmin, jmax + 1)
        flat = j * d + (N - j)
        U[np.ix_(flat, flat)] = B
    return U


def apply_beam_splitter(C) -> np.ndarray:
    """Exact ``U_12`` on a two-mode vector given as a coefficient matrix.

    ``C[m, n]`` is the amplitude of ``|m, n>``.  The output lives on per-mode
    cutoff ``d1 + d2 - 1`` so that no amplitude is lost.
    """
    C = np.asarray(C, dtype=complex)
    d1, d2 = C.shape
    D = d1 + d2 - 1
    out = np.zeros((D, D), dtype=complex)
    for N in range(D):
        j = np.arange(max(0, N - d2 + 1), min(N, d1 - 1) + 1)
        B = beam_splitter_block(N)
        res = B[:, j] @ C[j, N - j]
        jj = np.arange(N + 1)
        out[jj, N - jj] = res
    return out


def split_mixture(rho, sigma, tol=1e-15):
    """Pure decomposition of ``U_12 (rho (x) sigma) U_12^*``.

    Yields ``(weight, Phi)`` with ``Phi`` the output coefficient matrix on
    per-mode cutoff ``d_rho + d_sigma - 1``.
    """
    wr, vr = pure_components(rho, tol)
    ws, vs = pure_components(sigma, tol)
    for a, psi in zip(wr, vr):
        for b, phi in zip(ws, vs):
            yield a * b, apply_beam_splitter(np.outer(psi, phi))


def phase_shifter(phi, d) -> np.ndarray:
    """``R(phi) = exp(i phi N)``."""
    return np.diag(np.exp(1j * phi * np.arange(d)))


# -- Weyl operators ------------------------------------------------------------

def weyl(q, p, d, warn=True) -> np.ndarray:
    """``W(q, p) = exp(i(pQ - qP))`` from the truncated generator (exactly unitary).

    Agrees with the infinite-dimensional operator only on the low part of the
    spectrum; roughly levels below ``d/2`` for moderate displacements.
    """
    alpha = (q + 1j * p) / math.sqrt(2)
    if warn and recommended_cutoff(alpha) > d:
        warnings.warn(f"displacement ({q}, {p}) is large for cutoff {d}", stacklevel=2)
    a = annihilation(d)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def tilted_weyl(theta, q, p, d, warn=True) -> np.ndarray:
    """``W_theta(q, p) = W(f_theta^{-1}(q, p))``."""
    t = as_tilt(theta)
    q0, p0 = t.inverse(q, p)
    return weyl(q0, p0, d, warn=warn)


def displacement(alpha, d, d_in=None) -> np.ndarray:
    """Exact matrix elements ``<m|D(alpha)|n>`` for ``m < d``, ``n < d_in``.

    ``alpha`` may be an array; the result then has shape
    ``alpha.shape + (d, d_in)``.  Unlike :func:`weyl` these are the entries of
    the infinite-dimensional operator, so compressions ``P D P`` are exact
    (but not unitary).

    Along the diagonal ``m = n + k`` the element is ``c_k G_n(k)`` where
    ``c_k = e^{-|alpha|^2/2} alpha^k / sqrt(k!)`` and ``G_n(k)`` is the
    normalized associated Laguerre polynomial
    ``sqrt(k! n! / (n+k)!) L_n^{(k)}(|alpha|^2)``, run by its three-term
    recurrence in ``n``.  Above the diagonal ``alpha`` becomes ``-conj(alpha)``.
    """
    if d_in is None:
        d_in = d
    n_all = max(d, d_in)
    alpha = np.asarray(alpha, dtype=complex)
    x = (np.abs(alpha) ** 2)[..., None]
    k = np.arange(n_all, dtype=float)

    def prefactors(a):
        c = np.empty(alpha.shape + (n_all,), dtype=complex)
        c[..., 0] = np.exp(-0.5 * np.abs(alpha) ** 2)
        for j in range(1, n_all):
            c[..., j] = c[..., j - 1] * a / math.sqrt(j)
        return c

    lower = prefactors(alpha)
    upper = prefactors(-np.conj(alpha))
    D = np.zeros(alpha.shape + (n_all, n_all), dtype=complex)
    g_prev = np.zeros(alpha.shape + (n_all,))
    g = np.ones(alpha.shape + (n_all,))
    for n in range(n_all):
        kk = np.arange(n_all - n)
        D[..., n + kk, n] = lower[..., : n_all - n] * g[..., : n_all - n]
        D[..., n, n + kk[1:]] = upper[..., 1: n_all - n] * g[..., 1: n_all - n]
        g_next = ((2 * n + k + 1 - x) * g - math.sqrt(n) * np.sqrt(n + k) * g_prev)
        g_next /= np.sqrt((n + 1) * (n + k + 1))
        g_prev, g = g, g_next
    return D[..., :d, :d_in]


def weyl_alpha(q, p):
    """Coherent amplitude ``(q + ip)/sqrt2`` with ``W(q, p) = D(alpha)``."""
    return (np.asarray(q) + 1j * np.asarray(p)) / math.sqrt(2)


def tilted_alpha(theta, q, p):
    t = as_tilt(theta)
    return weyl_alpha(*t.inverse(np.asarray(q, float), np.asarray(p, float)))


def tilted_commutator(theta, d) -> np.ndarray:
    """``[Q/sin, Q_theta/sin]``; equals ``(i/sin) I`` away from the cutoff."""
    t = as_tilt(theta)
    A = quadrature(0.0, d) / t.sin
    B = quadrature(t.theta, d) / t.sin
    return A @ B - B @ A


# -- A_theta, V_theta, parity, conjugation -------------------------------------

def dilation(theta, d, nodes=None) -> np.ndarray:
    """``A_theta``: ``(A psi)(x) = sqrt(lam) psi(lam x)`` in the Fock basis.

    ``<m|A|n> = sqrt(lam) int h_m(x) h_n(lam x) dx``.  The integrand is a
    polynomial of degree ``m + n`` times ``exp(-(1 + lam^2) x^2 / 2)``, so
    Gauss-Hermite quadrature with ``nodes >= d`` points is exact.
    """
    t = as_tilt(theta)
    lam = t.lam
    K = nodes or d + 8
    x0, w0 = roots_hermite(K)
    c = math.sqrt(2.0 / (1.0 + lam * lam))
    x = c * x0
    w = c * math.sqrt(lam) * np.exp(np.log(w0) + x0 * x0)
    A = (hermite_functions(x, d - 1) * w) @ hermite_functions(lam * x, d - 1).T
    m = np.arange(d)
    A[(m[:, None] + m[None, :]) % 2 == 1] = 0.0
    return A.astype(complex)


def tilt_conjugator(theta, d) -> np.ndarray:
    """``V_theta = R((theta -+ pi)/2) A_theta R(theta/2)``."""
    t = as_tilt(theta)
    outer = (t.theta - math.pi) / 2 if t.theta > 0 else (t.theta + math.pi) / 2
    return phase_shifter(outer, d) @ dilation(t, d) @ phase_shifter(t.theta / 2, d)


def parity(d) -> np.ndarray:
    return np.diag((-1.0) ** np.arange(d)).astype(complex)


def conjugate(sigma) -> np.ndarray:
    """``C sigma C^{-1}``; Hermite functions are real, so C fixes each ``|n>``."""
    return np.conj(np.asarray(sigma, dtype=complex))
