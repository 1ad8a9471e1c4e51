"""Exact number-basis evolution of the effective pair-production Hamiltonian.

The pair Hamiltonian conserves the number of converted (ab, b) pairs k, so on
initial counts (N_a0, N_b20) it is tridiagonal over k = 0..k_max.  Dense
diagonalization of that small matrix gives numerically exact dynamics, used as
the ground truth for the closed-form moment formulas and for calibrating the
stochastic seeding of the mean-field stage.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .quantum import UNDEFINED, MomentSet

__all__ = [
    "Statistics",
    "PairBasis",
    "PairState",
    "PairHamiltonian",
    "ResourceError",
    "build_pair_hamiltonian",
    "evolve_pair",
    "pair_moments",
]

_DIMENSION_GUARD = 10**6


class ResourceError(RuntimeError):
    """Requested basis is too large for dense diagonalization."""


class Statistics(enum.Enum):
    BOSE = "bose"
    FERMI = "fermi"


@dataclass(frozen=True)
class PairBasis:
    """Truncated pair-number basis |k> built on initial counts (N_a0, N_b20)."""

    N_a0: int
    N_b20: int
    statistics: Statistics = Statistics.BOSE

    def __post_init__(self):
        if self.N_a0 < 1 or self.N_b20 < 1:
            raise ValueError("need at least one particle in each source mode")

    @property
    def k_max(self) -> int:
        k = min(self.N_a0, self.N_b20)
        if self.statistics is Statistics.FERMI:
            return min(k, 1)  # Pauli blocking: a single pair per mode
        return k

    @property
    def dimension(self) -> int:
        return self.k_max + 1


@dataclass(frozen=True)
class PairHamiltonian:
    """Real-symmetric tridiagonal matrix in the pair-number basis."""

    diag: np.ndarray
    offdiag: np.ndarray

    def dense(self) -> np.ndarray:
        h = np.diag(self.diag)
        n = len(self.diag)
        for k in range(n - 1):
            h[k, k + 1] = h[k + 1, k] = self.offdiag[k]
        return h


@dataclass(frozen=True)
class PairState:
    """Amplitudes over the number of converted pairs."""

    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        norm = float(np.sum(np.abs(amp) ** 2))
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"pair state norm deviates from 1 by {abs(norm - 1.0):.3e}")
        amp = amp.copy()
        amp.flags.writeable = False
        object.__setattr__(self, "amplitudes", amp)

    @classmethod
    def vacuum(cls, basis: PairBasis) -> "PairState":
        amp = np.zeros(basis.dimension, dtype=complex)
        amp[0] = 1.0
        return cls(amp)


def build_pair_hamiltonian(
    basis: PairBasis, G: float, omega1: float = 0.0, omega2: float = 0.0
) -> PairHamiltonian:
    """Tridiagonal pair Hamiltonian.

    diag[k]    = omega1 (N_a0 - k)(N_b20 - k) + omega2 k^2
    offdiag[k] = -G (k+1) sqrt((N_a0 - k)(N_b20 - k))        (Bose)
               = -G sqrt(N_a0 N_b20)                          (Fermi, 2x2)
    """
    if basis.dimension > _DIMENSION_GUARD:
        raise ResourceError(f"pair basis dimension {basis.dimension} exceeds {_DIMENSION_GUARD}")
    k = np.arange(basis.dimension, dtype=float)
    diag = omega1 * (basis.N_a0 - k) * (basis.N_b20 - k) + omega2 * k**2
    if basis.statistics is Statistics.FERMI:
        offdiag = np.array([-G * math.sqrt(basis.N_a0 * basis.N_b20)])
    else:
        kk = k[:-1]
        offdiag = -G * (kk + 1.0) * np.sqrt((basis.N_a0 - kk) * (basis.N_b20 - kk))
    return PairHamiltonian(diag, offdiag)


def evolve_pair(h: PairHamiltonian, psi0: PairState, t: float) -> PairState:
    """psi(t) = exp(-i H t) psi(0) by full diagonalization."""
    dim = len(h.diag)
    if dim > _DIMENSION_GUARD:
        raise ResourceError(f"dimension {dim} exceeds {_DIMENSION_GUARD}")
    if len(psi0.amplitudes) != dim:
        raise ValueError("state dimension does not match the Hamiltonian")
    evals, evecs = np.linalg.eigh(h.dense())
    phases = np.exp(-1j * evals * t)
    amp = evecs @ (phases * (evecs.conj().T @ psi0.amplitudes))
    return PairState(amp, time=psi0.time + t)


def pair_moments(state: PairState) -> MomentSet:
    """Exact occupation statistics of the (equal) product modes.

    Pairing makes N_ab = N_b = k in every basis state, so the cross moment
    <N_ab N_b> equals <N^2>.  Normalized quantities are NaN on vacuum.
    """
    p = np.abs(state.amplitudes) ** 2
    k = np.arange(len(p), dtype=float)
    n = float(p @ k)
    n2 = float(p @ k**2)
    kk1 = float(p @ (k * (k - 1.0)))
    if n == 0.0:
        return MomentSet(N=0.0, N2=0.0, Q=UNDEFINED, g2_single=UNDEFINED,
                         g2_cross=UNDEFINED, C=UNDEFINED, csi_gap=UNDEFINED)
    q = (n2 - n * n) / n
    g2_single = kk1 / n**2
    g2_cross = n2 / n**2
    c = (n2 - n * n) / n  # / sqrt(N_ab N_b) with N_ab = N_b = n
    return MomentSet(
        N=n,
        N2=n2,
        Q=q,
        g2_single=g2_single,
        g2_cross=g2_cross,
        C=c,
        csi_gap=g2_cross**2 - g2_single**2,
    )
