"""Reaction variants, parameter sets, pulse shapes and normalized initial states.

Everything is expressed in scaled units: the Feshbach coupling lambda sets the
rate unit (lambda = 1 internally) and populations are fractions of the total
atom number.  Conversion to SI is a presentation-layer multiplication by the
optional ``lambda_si`` value.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ReactionVariant",
    "PulseShape",
    "PulseSchedule",
    "ModeAmplitudes",
    "SystemParams",
    "mode_labels",
    "atom_weights",
    "initial_state",
    "pulse_omega",
]


class ReactionVariant(enum.Enum):
    """Which set of coupled mode equations is being solved."""

    BOSONIC = "bosonic"
    BOSE_FERMI = "bose-fermi"
    TRIMER = "trimer"


# Mode ordering conventions.  Abstraction variants: atom a, atom b, dimer b2,
# dimer ab, intermediate trimer m.  Trimer-formation variant: atom a, dimer a2,
# trimer a3, intermediate tetramer t.
_ABSTRACTION_MODES = ("a", "b", "b2", "ab", "m")
_TRIMER_MODES = ("a", "a2", "a3", "t")

_ABSTRACTION_WEIGHTS = np.array([1.0, 1.0, 2.0, 2.0, 3.0])
_TRIMER_WEIGHTS = np.array([1.0, 2.0, 3.0, 4.0])


def mode_labels(variant: ReactionVariant) -> tuple[str, ...]:
    if variant is ReactionVariant.TRIMER:
        return _TRIMER_MODES
    return _ABSTRACTION_MODES


def atom_weights(variant: ReactionVariant) -> np.ndarray:
    """Number of atoms bound in one particle of each mode."""
    if variant is ReactionVariant.TRIMER:
        return _TRIMER_WEIGHTS.copy()
    return _ABSTRACTION_WEIGHTS.copy()


class PulseShape(enum.Enum):
    SECH = "sech"
    CONSTANT = "constant"


@dataclass(frozen=True)
class PulseSchedule:
    """Dissociating-laser Rabi coupling versus time, in units of lambda."""

    shape: PulseShape = PulseShape.SECH
    omega0: float = 20.0
    tau: float = 20.0

    def __post_init__(self):
        if self.omega0 < 0:
            raise ValueError(f"omega0 must be >= 0, got {self.omega0}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


def pulse_omega(t, schedule: PulseSchedule):
    """Rabi coupling Omega(t).  Accepts scalar or array ``t``."""
    if schedule.shape is PulseShape.CONSTANT:
        return schedule.omega0 * np.ones_like(np.asarray(t, dtype=float))
    # sech via 1/cosh; cosh overflow maps cleanly to Omega -> 0
    with np.errstate(over="ignore"):
        return schedule.omega0 / np.cosh(np.asarray(t, dtype=float) / schedule.tau)


@dataclass(frozen=True)
class ModeAmplitudes:
    """Complex amplitudes of the matter-wave modes.

    ``psi[i]`` belongs to ``mode_labels(variant)[i]``; |psi_i|^2 is the
    population as a fraction of the total atom number.
    """

    variant: ReactionVariant
    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        n = len(mode_labels(self.variant))
        if psi.shape != (n,):
            raise ValueError(
                f"{self.variant.value} variant needs {n} mode amplitudes, got shape {psi.shape}"
            )
        if not np.all(np.isfinite(psi.view(float))):
            raise ValueError("mode amplitudes must be finite")
        psi = psi.copy()
        psi.flags.writeable = False
        object.__setattr__(self, "psi", psi)

    def populations(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def atom_weighted_norm(self) -> float:
        """Total atom fraction sum_i w_i |psi_i|^2 (1 for a closed system)."""
        return float(atom_weights(self.variant) @ self.populations())

    def mode_index(self, label: str) -> int:
        return mode_labels(self.variant).index(label)


@dataclass(frozen=True)
class SystemParams:
    """Couplings and detunings of one reaction variant, in units of lambda.

    ``chi`` is the symmetric s-wave collision matrix indexed like
    ``mode_labels(variant)``.  ``A_b``/``A_ab`` are the fermionic kinetic
    coefficients (zero for the purely bosonic variant).  ``Delta`` is the
    dissociating-laser detuning actually used by the dynamics; resolving it
    from a CPT resonance condition is the caller's job.
    """

    variant: ReactionVariant = ReactionVariant.BOSONIC
    lam: float = 1.0
    omega0: float = 20.0
    tau: float = 20.0
    delta: float = 3.0
    Delta: float = -3.0
    gamma: float = 1.0
    chi: np.ndarray = field(default=None)  # type: ignore[assignment]
    A_b: float = 0.0
    A_ab: float = 0.0
    pulse_shape: PulseShape = PulseShape.SECH
    lambda_si: float | None = None

    def __post_init__(self):
        n = len(mode_labels(self.variant))
        chi = self.chi
        if chi is None:
            chi = np.zeros((n, n))
        chi = np.asarray(chi, dtype=float)
        if chi.shape != (n, n):
            raise ValueError(f"chi must be {n}x{n} for {self.variant.value}, got {chi.shape}")
        if not np.allclose(chi, chi.T, rtol=0, atol=1e-14):
            raise ValueError("chi must be symmetric")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.omega0 < 0:
            raise ValueError(f"omega0 must be >= 0, got {self.omega0}")
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.lambda_si is not None and self.lambda_si <= 0:
            raise ValueError(f"lambda_si must be > 0, got {self.lambda_si}")
        if self.variant is ReactionVariant.BOSONIC and (self.A_b != 0 or self.A_ab != 0):
            raise ValueError("fermionic kinetic coefficients must be zero for the bosonic variant")
        if self.variant is ReactionVariant.BOSE_FERMI:
            labels = mode_labels(self.variant)
            for f in ("b", "ab"):
                i = labels.index(f)
                if chi[i, i] != 0:
                    raise ValueError(
                        f"chi.{f}.{f} must be zero: no s-wave collisions between "
                        "identical fermions"
                    )
        chi = chi.copy()
        chi.flags.writeable = False
        object.__setattr__(self, "chi", chi)

    @property
    def schedule(self) -> PulseSchedule:
        return PulseSchedule(self.pulse_shape, self.omega0, self.tau)

    def omega(self, t):
        return pulse_omega(t, self.schedule)

    @property
    def modes(self) -> tuple[str, ...]:
        return mode_labels(self.variant)

    def chi_pair(self, i: str, j: str) -> float:
        labels = mode_labels(self.variant)
        return float(self.chi[labels.index(i), labels.index(j)])


def initial_state(R: float, variant: ReactionVariant) -> ModeAmplitudes:
    """Normalized reactant-only state for an imbalance ratio R = N_a(0)/2N_b2(0).

    The trimer-formation variant ignores R and starts with all atoms bound in
    the a2 dimers.  Product and intermediate modes start exactly empty, which
    is the mean-field fixed point that stochastic seeding later perturbs.
    """
    if variant is ReactionVariant.TRIMER:
        psi = np.zeros(4, dtype=complex)
        psi[1] = math.sqrt(0.5)  # 2*N_a2 = 1
        return ModeAmplitudes(variant, psi)
    if not R > 0:
        raise ValueError(f"imbalance ratio R must be > 0, got {R}")
    n_a = R / (1.0 + R)
    n_b2 = 1.0 / (2.0 * (1.0 + R))
    psi = np.zeros(5, dtype=complex)
    psi[0] = math.sqrt(n_a)
    psi[2] = math.sqrt(n_b2)
    return ModeAmplitudes(variant, psi)
