"""Finite-amplitude eight-port homodyne detection in truncated Fock space.

Layout: signal ``rho`` in mode 1, parameter field ``sigma`` in mode 2, vacuum
in mode 3 and the local oscillator in mode 4.  ``U_12`` mixes 1 and 2, ``U_34``
splits the oscillator, the phase shifter ``R(theta)`` acts on the oscillator
arm feeding detectors 2 and 4, and two more splitters mix each signal output
with its oscillator share.  Counts are reported as the differences
``k1 = n3 - n1`` and ``k2 = n4 - n2``.

The oscillator entering each arm carries amplitude ``sqrt2 * (-z)`` and
``sqrt2 * e^{i theta} z`` respectively, i.e. mode 4 holds ``|2z>``.  With
that normalization the scaled differences ``k / (sqrt2 |z|)`` converge to the
limit statistics ``Q(X/sqrt2) (x) Q_theta(Y/sqrt2)`` of ``U_12 (rho (x)
sigma) U_12^*``; an oscillator of ``|sqrt2 z>`` would yield half the limit
variance (see ``lo_amplitude_scale``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.stats import binom

from .fock import Grid1D, Grid2D, TruncationError, check_density, coherent_state
from .observable import EfficiencyQuad
from .optics import TiltAngle, as_tilt, beam_splitter_block, split_mixture
from .quadrature import DensityGrid

COMPLETENESS_TOL = 1e-8
MASS_TOL = 1e-4

# Ratio between the per-arm oscillator amplitude used here and the one
# obtained from |sqrt2 z> through U_34.  Required for the scaled differences
# to reproduce the limit statistics.
lo_amplitude_scale = math.sqrt(2.0)


def lo_cutoff(z) -> int:
    """Cutoff for an oscillator arm of amplitude ``sqrt2 |z|``."""
    r = abs(z)
    return int(math.ceil(2 * r * r + 8 * r + 12))


def lo_split(z) -> Tuple[complex, complex]:
    """``U_34 |0> (x) |sqrt2 z> = |-z> (x) |z>``; returns ``(-z, z)``."""
    z = complex(z)
    w = math.sqrt(2.0) * z
    return (0 - w) / math.sqrt(2.0), (0 + w) / math.sqrt(2.0)


def binomial_number_povm(eps, d):
    """Approximate number observable of a detector with efficiency ``eps``.

    Element ``n`` is ``sum_m C(m, n) eps^n (1-eps)^{m-n} |m><m|``, returned as
    a ``(d, d)`` array of diagonals: ``out[n, m]``.
    """
    m = np.arange(d)
    return binom.pmf(m[:, None], m[None, :], eps)


def _count_difference_weights(N, lo_primary, eps):
    """Weights ``w[j, k]`` that output ``|j, N-j>`` registers difference ``k``.

    ``j`` is the primary-mode occupation; ``k = n_lo - n_signal`` is indexed
    from ``-N``.
    """
    j = np.arange(N + 1)
    n_lo = j if lo_primary else N - j
    n_sig = N - n_lo
    w = np.zeros((N + 1, 2 * N + 1))
    if eps == 1.0:
        w[j, n_lo - n_sig + N] = 1.0
        return w
    seen = np.arange(N + 1)
    for jj in j:
        plo = binom.pmf(seen[: n_lo[jj] + 1], n_lo[jj], eps)
        psig = binom.pmf(seen[: n_sig[jj] + 1], n_sig[jj], eps)
        # difference distribution of b' - a'
        diff = np.convolve(plo, psig[::-1])
        start = -n_sig[jj] + N
        w[jj, start:start + diff.size] = diff
    return w


@dataclass
class ArmPOVM:
    """Signal-mode POVM of one homodyne arm, indexed by count difference."""

    k: np.ndarray
    elements: np.ndarray

    def as_dict(self) -> Dict[int, np.ndarray]:
        return {int(k): e for k, e in zip(self.k, self.elements)}

    def completeness(self) -> np.ndarray:
        return self.elements.sum(axis=0)


def arm_povm(lo, d, lo_cut=None, eps=1.0, lo_primary=False, tol=COMPLETENESS_TOL) -> ArmPOVM:
    """POVM on a ``d``-level signal mode for one balanced homodyne arm.

    ``Pi(k) = tr_LO[(I (x) |lo><lo|) U^* P_k U]`` where ``P_k`` projects onto
    ``n_lo - n_signal = k`` at the outputs; with ``eps < 1`` both detectors
    are replaced by the binomial approximate number observable.
    ``lo_primary`` puts the oscillator in the splitter's primary port.
    """
    lo_cut = lo_cut or lo_cutoff(abs(lo) / lo_amplitude_scale)
    beta = coherent_state(lo, lo_cut, strict=False)
    Nmax = d + lo_cut - 2
    K = 2 * Nmax + 1
    elems = np.zeros((K, d, d), dtype=complex)
    for N in range(Nmax + 1):
        m = np.arange(max(0, N - lo_cut + 1), min(N, d - 1) + 1)
        B = beam_splitter_block(N)
        col = (N - m) if lo_primary else m
        # amp[j, i] = <j, N-j| U |signal m_i, lo N-m_i> * beta_{N-m_i}
        amp = B[:, col] * beta[N - m]
        w = _count_difference_weights(N, lo_primary, eps)
        # sum_j w[j,k] conj(amp[j,i]) amp[j,i']
        blk = np.einsum("jk,ji,jl->kil", w, amp.conj(), amp)
        elems[Nmax - N: Nmax + N + 1][:, m[:, None], m[None, :]] += blk
    keep = np.abs(elems).reshape(K, -1).max(axis=1) > 0
    ks = np.arange(-Nmax, Nmax + 1)[keep]
    povm = ArmPOVM(ks, elems[keep])
    err = np.abs(povm.completeness() - np.eye(d)).max()
    if err > tol:
        raise TruncationError(
            f"arm POVM completeness error {err:.3g} exceeds {tol:g}; raise the LO cutoff",
            parameter="lo_cutoff", suggested_cutoff=2 * lo_cut)
    return povm


@dataclass
class NetworkConfig:
    """Eight-port parameters.  ``z`` sets the oscillator scale ``|z|``."""

    theta: TiltAngle
    z: complex
    cutoff: Optional[int] = None
    lo_cutoff: Optional[int] = None
    efficiencies: EfficiencyQuad = field(default_factory=EfficiencyQuad)

    def __post_init__(self):
        self.theta = as_tilt(self.theta)
        self.z = complex(self.z)
        if self.z == 0:
            raise ValueError("oscillator amplitude z must be nonzero")
        need = lo_cutoff(self.z)
        if self.lo_cutoff is None:
            self.lo_cutoff = need
        elif self.lo_cutoff < need:
            raise TruncationError(
                f"lo_cutoff {self.lo_cutoff} below heuristic {need} for |z|={abs(self.z)}",
                parameter="lo_cutoff", suggested_cutoff=need)
        e = self.efficiencies
        if e.e1 != e.e3 or e.e2 != e.e4:
            raise ValueError("finite-amplitude simulation supports equal efficiencies per arm "
                             "(e1 == e3, e2 == e4)")

    def arm_amplitudes(self):
        amp_a, amp_b = lo_split(self.z)
        s = lo_amplitude_scale
        return s * amp_a, s * np.exp(1j * self.theta.theta) * amp_b


@dataclass
class OutcomeHistogram:
    """Probabilities of ``(k1, k2)``; outcome values are ``k * spacing``."""

    k1: np.ndarray
    k2: np.ndarray
    probabilities: np.ndarray
    spacing: Tuple[float, float]

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    def values(self):
        return self.k1 * self.spacing[0], self.k2 * self.spacing[1]

    def marginal(self, axis):
        return self.probabilities.sum(axis=1 - axis)


def joint_statistics(rho, sigma, cfg: NetworkConfig, mass_tol=MASS_TOL) -> OutcomeHistogram:
    """Exact joint distribution of the two count differences.

    ``P(k1, k2) = tr[tau (Pi_A(k1) (x) Pi_B(k2))]`` with
    ``tau = U_12 (rho (x) sigma) U_12^*`` propagated exactly.
    """
    rho = check_density(rho, name="rho")
    sigma = check_density(sigma, name="sigma")
    D = rho.shape[0] + sigma.shape[0] - 1
    beta_a, beta_b = cfg.arm_amplitudes()
    e = cfg.efficiencies
    povm_a = arm_povm(beta_a, D, cfg.lo_cutoff, eps=e.e1, lo_primary=True)
    povm_b = arm_povm(beta_b, D, cfg.lo_cutoff, eps=e.e2, lo_primary=False)
    P = np.zeros((povm_a.k.size, povm_b.k.size))
    for w, Phi in split_mixture(rho, sigma):
        X = np.einsum("mn,amp->anp", Phi.conj(), povm_a.elements)
        Y = np.einsum("anp,pq->anq", X, Phi)
        P += w * np.einsum("anq,bnq->ab", Y, povm_b.elements).real
    P = np.clip(P, 0.0, None)
    scale = math.sqrt(2.0) * abs(cfg.z)
    hist = OutcomeHistogram(povm_a.k, povm_b.k, P, (1.0 / (scale * e.e1), 1.0 / (scale * e.e2)))
    if hist.total < 1.0 - mass_tol:
        raise TruncationError(f"histogram mass {hist.total:.6f} below 1 - {mass_tol:g}",
                              parameter="cutoff")
    return hist


def lattice_grid(hist: OutcomeHistogram) -> Grid2D:
    """Grid whose points are the histogram's outcome values."""
    hx, hy = hist.spacing
    return Grid2D(Grid1D(hist.k1[0] * hx, hist.k1[-1] * hx, hist.k1.size),
                  Grid1D(hist.k2[0] * hy, hist.k2[-1] * hy, hist.k2.size))


def compare_to_limit(hist: OutcomeHistogram, g: DensityGrid) -> float:
    """Total-variation distance between the histogram and a limit density.

    Each lattice point is the centre of a cell of the lattice spacing; the
    density is integrated over it by the midpoint rule.  ``g`` must be
    sampled on lattice points (any sub-range); cells without a sample count
    as zero density.
    """
    hx, hy = hist.spacing
    gx, gy = g.grid.x, g.grid.y
    if not (math.isclose(gx.spacing, hx, rel_tol=1e-9) and math.isclose(gy.spacing, hy, rel_tol=1e-9)):
        raise ValueError("grid/lattice coverage mismatch: spacings differ")
    ix = (gx.points / hx)
    iy = (gy.points / hy)
    if np.abs(ix - np.rint(ix)).max() > 1e-6 or np.abs(iy - np.rint(iy)).max() > 1e-6:
        raise ValueError("grid/lattice coverage mismatch: grid points are off the lattice")
    ix = np.rint(ix).astype(int)
    iy = np.rint(iy).astype(int)
    kx = np.union1d(hist.k1, ix)
    ky = np.union1d(hist.k2, iy)
    P = np.zeros((kx.size, ky.size))
    P[np.ix_(np.searchsorted(kx, hist.k1), np.searchsorted(ky, hist.k2))] = hist.probabilities
    Gm = np.zeros_like(P)
    Gm[np.ix_(np.searchsorted(kx, ix), np.searchsorted(ky, iy))] = g.values * hx * hy
    return 0.5 * float(np.abs(P - Gm).sum())
