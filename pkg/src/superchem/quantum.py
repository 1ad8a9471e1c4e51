"""Closed-form quantum statistics of the linearized pair-production stage.

While the reaction products are still microscopically occupied, the dimer-atom
pair modes evolve under an effective quadratic Hamiltonian obtained by
adiabatically eliminating the intermediate trimer.  Bosonic pairs then build
up two-mode-squeezed-vacuum statistics, fermionic pairs Rabi-oscillate.  All
quantities are functions of the dimensionless gain x = calG * t.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .model import SystemParams

__all__ = [
    "EffectiveCouplings",
    "MomentSet",
    "effective_couplings",
    "bosonic_moments",
    "fermionic_moments",
    "validity_time",
]

UNDEFINED = float("nan")


@dataclass(frozen=True)
class EffectiveCouplings:
    """Pair-conversion rate and collisional phase rates, units of lambda."""

    G: float
    omega1: float
    omega2: float
    calG: float  # amplified rate G * sqrt(N_a * N_b2)


@dataclass(frozen=True)
class MomentSet:
    """Occupation statistics of one product pair mode.

    Quantities that are singular at zero occupation (g2_cross, csi_gap, and
    g2_single for exact vacuum) are reported as NaN rather than infinities.
    """

    N: float
    N2: float
    Q: float
    g2_single: float
    g2_cross: float
    C: float
    csi_gap: float


def effective_couplings(params: SystemParams, N_a: float, N_b2: float) -> EffectiveCouplings:
    """Adiabatic-elimination couplings for uniform mode functions.

    With a homogeneous condensate all overlap integrals are unity, giving
    G = lambda*Omega0/delta, omega1 = lambda^2/delta, omega2 = Omega0^2/delta.
    """
    if params.delta == 0:
        raise ValueError(
            "delta = 0: the intermediate mode cannot be adiabatically eliminated; "
            "integrate the full mode equations instead"
        )
    if N_a < 0 or N_b2 < 0:
        raise ValueError("populations must be non-negative")
    lam, om, delta = params.lam, params.omega0, params.delta
    if abs(delta) < 3.0 * max(lam, om):
        warnings.warn(
            f"|delta| = {abs(delta)} < 3*max(lambda, Omega0) = {3 * max(lam, om)}: "
            "adiabatic elimination of the intermediate mode is marginal",
            RuntimeWarning,
            stacklevel=2,
        )
    g = lam * om / delta
    return EffectiveCouplings(
        G=g,
        omega1=lam**2 / delta,
        omega2=om**2 / delta,
        calG=abs(g) * math.sqrt(N_a * N_b2),
    )


def bosonic_moments(x: float) -> MomentSet:
    """Two-mode-squeezed-vacuum statistics at gain x = calG * t.

    N = sinh^2 x grows from vacuum; each single mode is chaotic (g2 = 2,
    Q = cosh^2 x super-Poissonian) while the cross correlations violate the
    classical Cauchy-Schwarz bound for every x > 0.
    """
    if x < 0:
        raise ValueError(f"gain must be >= 0, got {x}")
    sh2 = math.sinh(x) ** 2
    ch2 = math.cosh(x) ** 2
    n2 = sh2 * (2.0 * sh2 + 1.0)  # = sinh^2 * cosh(2x); consistent with Q = cosh^2
    if x == 0:
        return MomentSet(N=0.0, N2=0.0, Q=1.0, g2_single=2.0,
                         g2_cross=UNDEFINED, C=1.0, csi_gap=UNDEFINED)
    return MomentSet(
        N=sh2,
        N2=n2,
        Q=ch2,
        g2_single=2.0,
        g2_cross=1.0 + ch2 / sh2,
        C=1.0 + sh2,
        csi_gap=1.0 / sh2**2 + 4.0 / sh2,
    )


def fermionic_moments(x: float, flavor: str = "oracle") -> MomentSet:
    """Fermionic pair statistics at gain x: Rabi conversion N = sin^2 x.

    Pauli blocking caps N at one, makes the single modes antibunched
    (g2 = 0, Q = cos^2 x sub-Poissonian) and gives C = 1 - N < 1.  The cross
    moment <N_ab N_b> carries two published forms: ``oracle`` uses the exact
    two-level value sin^2 x, ``paper`` the Bogoliubov expression
    -sin^2 x cos 2x (negative at small x).  Both leave the Cauchy-Schwarz gap
    non-negative wherever defined.
    """
    if x < 0:
        raise ValueError(f"gain must be >= 0, got {x}")
    if flavor not in ("oracle", "paper"):
        raise ValueError(f"flavor must be 'oracle' or 'paper', got {flavor!r}")
    s2 = math.sin(x) ** 2
    c2 = math.cos(x) ** 2
    if s2 == 0.0:
        g2_cross = UNDEFINED
        csi_gap = UNDEFINED
    elif flavor == "oracle":
        g2_cross = 1.0 / s2
        csi_gap = g2_cross**2
    else:
        g2_cross = 1.0 - c2 / s2
        csi_gap = g2_cross**2
    return MomentSet(
        N=s2,
        N2=s2,
        Q=c2,
        g2_single=0.0,
        g2_cross=g2_cross,
        C=1.0 - s2,
        csi_gap=csi_gap,
    )


def validity_time(calG: float, lambda_si: float | None = None) -> float:
    """Upper time limit of the linearized stage, |calG * t| < 1.

    Returned in units of 1/lambda, or in seconds when ``lambda_si`` is given.
    """
    if calG <= 0:
        raise ValueError(f"calG must be > 0, got {calG}")
    t_max = 1.0 / calG
    if lambda_si is not None:
        return t_max / lambda_si
    return t_max
