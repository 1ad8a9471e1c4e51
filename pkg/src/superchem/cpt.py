"""Dark-state (CPT) steady-state analysis and STIRAP diagnostics.

The coupled-mode equations admit a steady state with empty intermediate mode
whenever lambda psi_a psi_b2 = Omega psi_b psi_ab and the laser detuning
compensates the mean-field phase shifts.  Together with atom-number
conservation this fixes all steady populations in closed form, giving the
ideal conversion targets that the pulsed dynamics is expected to track.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import phase_matched_delta, resonance_delta
from .ensemble import SeedSpec, run_ensemble
from .model import (
    ModeAmplitudes,
    PulseShape,
    PulseSchedule,
    ReactionVariant,
    SystemParams,
    mode_labels,
    pulse_omega,
)

__all__ = [
    "CptSolution",
    "StationarityReport",
    "SweepResult",
    "cpt_population",
    "cpt_solution",
    "cpt_quadratic_residual",
    "cpt_optimum",
    "trimer_cpt",
    "adiabaticity",
    "stationarity_residual",
    "sweep_imbalance",
    "auto_delta",
]


def cpt_population(R: float, ratio: float) -> float:
    """Steady dimer fraction N_ab,s for imbalance R and coupling ratio Omega/lambda.

    Closed form 2R / ((1+R) [1 + 2R + sqrt((1-2R)^2 + 8 R ratio^2)]); at
    ratio -> 0 the balanced case R = 1/2 reaches the full-conversion value 1/3.
    """
    if not R > 0:
        raise ValueError(f"imbalance ratio must be > 0, got {R}")
    if ratio < 0:
        raise ValueError(f"coupling ratio must be >= 0, got {ratio}")
    s = math.sqrt((1.0 - 2.0 * R) ** 2 + 8.0 * R * ratio**2)
    return 2.0 * R / ((1.0 + R) * (1.0 + 2.0 * R + s))


def cpt_quadratic_residual(R: float, ratio: float, N: float | None = None) -> float:
    """Residual of the conservation quadratic at the closed-form root.

    (ratio^2 - 1) N^2 + (2R+1)/(2R+2) N - R/(2 (R+1)^2), the form the closed
    form satisfies identically (the coefficient uses the squared ratio and the
    constant term carries (R+1)^2).
    """
    if N is None:
        N = cpt_population(R, ratio)
    return (ratio**2 - 1.0) * N**2 + (2 * R + 1) / (2 * R + 2) * N - R / (2 * (R + 1) ** 2)


@dataclass(frozen=True)
class CptSolution:
    """All four steady populations plus the resonance detuning."""

    R: float
    ratio: float
    N_ab_s: float
    N_b_s: float
    N_b2_s: float
    N_a_s: float
    Delta: float
    omega_eff: float
    theta_a: float = 0.0
    theta_b: float = 0.0

    def state(self) -> ModeAmplitudes:
        """Steady state as mode amplitudes (intermediate mode empty)."""
        phase_a = np.exp(1j * self.theta_a)
        phase_b = np.exp(1j * self.theta_b)
        psi = np.array(
            [
                math.sqrt(self.N_a_s) * phase_a,
                math.sqrt(self.N_b_s) * phase_b,
                math.sqrt(self.N_b2_s) * phase_b**2,
                math.sqrt(self.N_ab_s) * phase_a * phase_b,
                0.0,
            ],
            dtype=complex,
        )
        variant = ReactionVariant.BOSONIC
        return ModeAmplitudes(variant, psi)

    def populations(self) -> np.ndarray:
        return np.array([self.N_a_s, self.N_b_s, self.N_b2_s, self.N_ab_s, 0.0])


def cpt_solution(R: float, ratio: float, params: SystemParams) -> CptSolution:
    """Fill every steady population from the closed form plus conservation."""
    n_ab = cpt_population(R, ratio)
    n_b2 = 1.0 / (2.0 * (1.0 + R)) - n_ab
    n_a = R / (1.0 + R) - n_ab
    if n_b2 < -1e-15 or n_a < -1e-15:
        raise RuntimeError(f"inconsistent CPT populations at R={R}, ratio={ratio}")
    n_b2 = max(n_b2, 0.0)
    n_a = max(n_a, 0.0)
    delta_res = resonance_delta(params, n_b2, n_ab)
    return CptSolution(
        R=R,
        ratio=ratio,
        N_ab_s=n_ab,
        N_b_s=n_ab,
        N_b2_s=n_b2,
        N_a_s=n_a,
        Delta=delta_res,
        omega_eff=math.sqrt(1.0 + 8.0 * ratio**2),
    )


def cpt_optimum(ratio: float, r_low: float = 1e-6, r_high: float = 10.0) -> tuple[float, float]:
    """Imbalance maximizing the steady dimer fraction, by golden-section search.

    Converges to 1e-8 in R; at ratio = 0 the optimum is the balanced case
    (R, N) = (1/2, 1/3).
    """
    if ratio < 0:
        raise ValueError(f"coupling ratio must be >= 0, got {ratio}")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = r_low, r_high
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = cpt_population(c, ratio)
    fd = cpt_population(d, ratio)
    while b - a > 1e-8:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = cpt_population(c, ratio)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = cpt_population(d, ratio)
    r_star = 0.5 * (a + b)
    return r_star, cpt_population(r_star, ratio)


def trimer_cpt(ratio: float) -> float:
    """Steady trimer fraction of the 2A2 -> A3 + A reaction: 1/(2 (2 + ratio))."""
    if ratio < 0:
        raise ValueError(f"coupling ratio must be >= 0, got {ratio}")
    return 1.0 / (2.0 * (2.0 + ratio))


def adiabaticity(t, params: SystemParams):
    """Nonlinear adiabatic-following parameter gamma_nl(t).

    gamma_nl = |d eta/dt| / ((1 + eta) 4 lambda) with eta = lambda/Omega(t);
    for the sech pulse d eta/dt = (lambda/(Omega0 tau)) sinh(t/tau).  The
    STIRAP transfer stays adiabatic while this is far below one.  Infinite
    where the pulse vanishes.
    """
    t = np.asarray(t, dtype=float)
    lam = params.lam
    if params.pulse_shape is PulseShape.CONSTANT:
        out = np.zeros_like(t)
        if params.omega0 == 0:
            out = np.full_like(t, np.inf)
        return out if out.ndim else float(out)
    if params.omega0 == 0:
        out = np.full_like(t, np.inf)
        return out if out.ndim else float(out)
    eta = (lam / params.omega0) * np.cosh(t / params.tau)
    eta_dot = (lam / (params.omega0 * params.tau)) * np.sinh(t / params.tau)
    out = np.abs(eta_dot) / ((1.0 + eta) * 4.0 * lam)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class StationarityReport:
    """How stationary a candidate steady state actually is."""

    residual: float  # || RHS - i mu psi || after fitting (mu_a, mu_b)
    dark_state_residual: float  # |lambda psi_a psi_b2 - Omega psi_b psi_ab|
    mu_a: float
    mu_b: float


# chemical-potential pattern of the steady-state ansatz: each mode rotates at
# an integer combination of the two atomic potentials (mu_a, mu_b)
_MU_PATTERN = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 2.0], [1.0, 1.0], [1.0, 2.0]])


def stationarity_residual(sol: CptSolution, params: SystemParams) -> StationarityReport:
    """Evaluate the full RHS on the CPT state minus its best rigid rotation.

    The chemical potentials (mu_a, mu_b) are extracted by least squares over
    the mode pattern (mu_a, mu_b, 2 mu_b, mu_a + mu_b, mu_a + 2 mu_b); the
    returned norm measures everything that rotation cannot absorb.  Uses a
    constant pulse at the solution's coupling ratio.
    """
    from .dynamics import rhs_bosefermi, rhs_bosonic

    if params.variant is ReactionVariant.TRIMER:
        raise ValueError("stationarity check applies to the abstraction variants")
    run_params = SystemParams(
        variant=params.variant,
        lam=params.lam,
        omega0=sol.ratio * params.lam,
        tau=params.tau,
        delta=params.delta,
        Delta=sol.Delta,
        gamma=params.gamma,
        chi=params.chi,
        A_b=params.A_b,
        A_ab=params.A_ab,
        pulse_shape=PulseShape.CONSTANT,
    )
    state = ModeAmplitudes(params.variant, sol.state().psi)
    rhs = rhs_bosefermi if params.variant is ReactionVariant.BOSE_FERMI else rhs_bosonic
    dpsi = rhs(state, run_params, 0.0).dpsi

    psi = state.psi
    # least squares: dpsi_i ~ i (P @ mu)_i psi_i over the real 2-vector mu
    design = 1j * _MU_PATTERN * psi[:, None]  # (5, 2)
    a = np.concatenate([design.real, design.imag])
    b = np.concatenate([dpsi.real, dpsi.imag])
    mu, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(dpsi - 1j * (_MU_PATTERN @ mu) * psi))

    omega = run_params.omega0
    dark = abs(params.lam * psi[0] * psi[2] - omega * psi[1] * psi[3])
    return StationarityReport(residual, float(dark), float(mu[0]), float(mu[1]))


@dataclass(frozen=True)
class SweepResult:
    """Final conversion versus initial imbalance."""

    variant: ReactionVariant
    r_grid: np.ndarray
    final_conversion: np.ndarray
    failures: tuple[int, ...]
    params_hash: str


def sweep_imbalance(
    params: SystemParams,
    R_grid: np.ndarray,
    spec: SeedSpec,
    M: int = 16,
    t_grid: np.ndarray | None = None,
    delta_mode: str = "auto",
    tol_rel: float = 1e-8,
    tol_abs: float = 1e-11,
) -> SweepResult:
    """Ensemble-mean final dimer population over an imbalance grid.

    Each R runs its own small seeded ensemble to t_end = +5 tau; with
    ``delta_mode='auto'`` the laser detuning is re-resolved from the CPT
    resonance at that R.  Per-R ensemble errors are recorded, not fatal.
    """
    from dataclasses import replace

    from .config import params_fingerprint

    r_grid = np.asarray(R_grid, dtype=float)
    if np.any(r_grid <= 0) or np.any(r_grid > 3.0):
        raise ValueError("imbalance grid must lie in (0, 3]")
    if t_grid is None:
        t_grid = np.linspace(-3.0 * params.tau, 5.0 * params.tau, 401)
    labels = mode_labels(params.variant)
    product = labels.index("a3") if params.variant is ReactionVariant.TRIMER else labels.index("ab")

    conversions = np.full(r_grid.size, np.nan)
    failures = []
    for i, r in enumerate(r_grid):
        run_params = params
        if delta_mode == "auto":
            run_params = replace(params, Delta=auto_delta(params, float(r)))
        try:
            result = run_ensemble(
                run_params, spec, M, t_grid, R=float(r), tol_rel=tol_rel, tol_abs=tol_abs
            )
        except Exception:
            failures.append(i)
            continue
        conversions[i] = result.mean_n[-1, product]
    return SweepResult(
        variant=params.variant,
        r_grid=r_grid,
        final_conversion=conversions,
        failures=tuple(failures),
        params_hash=params_fingerprint(params),
    )


def auto_delta(params: SystemParams, R: float) -> float:
    """Resolve the laser detuning from the CPT targets at (R, Omega0/lambda).

    Uses the exact phase-locking condition evaluated on the steady
    populations, which keeps the dark state stationary under the full
    mean-field shifts (see ``dynamics.phase_matched_delta``).
    """
    ratio = params.omega0 / params.lam
    if params.variant is ReactionVariant.TRIMER:
        n = trimer_cpt(ratio)
        pops = np.array([n, 0.5 - 2.0 * n, n, 0.0])
        return phase_matched_delta(params, pops)
    n_ab = cpt_population(R, ratio)
    pops = np.array([R / (1 + R) - n_ab, n_ab, 1.0 / (2 * (1 + R)) - n_ab, n_ab, 0.0])
    return phase_matched_delta(params, pops)
