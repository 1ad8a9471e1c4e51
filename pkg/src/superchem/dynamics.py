"""Mean-field equations of motion and a controlled-accuracy time integrator.

The right-hand sides implement the coupled-mode equations of the three
reaction variants.  Collision terms enter as purely imaginary multipliers
2i sum_j chi_ij |psi_j|^2, so they shift phases without moving populations;
particle exchange happens only through the bilinear lambda/Omega couplings via
the intermediate (trimer/tetramer) mode.

The integrator is an embedded Dormand-Prince 5(4) pair with PI step control
and quartic dense output.  It advances a whole batch of trajectories at once,
but every trajectory carries its own step size and error control and no
arithmetic mixes neighbouring columns, so identical inputs reproduce results
bit for bit.  (Exact bit-equality across *different* batch widths is not
guaranteed: numpy's vectorized transcendentals may differ from their scalar
tails in the last ulp.)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    ModeAmplitudes,
    ReactionVariant,
    SystemParams,
    atom_weights,
    mode_labels,
    pulse_omega,
)

__all__ = [
    "Derivative",
    "Trajectory",
    "ConservedCharges",
    "IntegrationError",
    "rhs_bosonic",
    "rhs_bosefermi",
    "rhs_trimer",
    "integrate",
    "integrate_batch",
    "conserved_charges",
    "resonance_delta",
    "phase_matched_delta",
    "write_trajectory_csv",
]


class IntegrationError(RuntimeError):
    """Step-size underflow or blow-up; carries the last good time."""

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


@dataclass(frozen=True)
class Derivative:
    """Time derivative of the mode amplitudes, units of lambda."""

    variant: ReactionVariant
    dpsi: np.ndarray


# ---------------------------------------------------------------------------
# right-hand sides (batched kernels operate on psi with shape (n_modes, M))

_FERMI_FLOOR = 1e-30  # |psi|^2 floor inside the 2/3 power only


def _collision_shift(chi: np.ndarray, n: np.ndarray) -> np.ndarray:
    # einsum keeps a fixed per-element accumulation order -> batch-size
    # independent bits (no BLAS dispatch)
    return np.einsum("ij,jm->im", chi, n, optimize=False)


def _rhs_abstraction(t, psi, p: SystemParams, fermionic: bool) -> np.ndarray:
    n = psi.real**2 + psi.imag**2
    out = 2j * _collision_shift(p.chi, n) * psi
    om = pulse_omega(t, p.schedule)
    a, b, b2, ab, m = psi
    lam = p.lam
    out[0] += 1j * lam * np.conj(b2) * m
    out[1] += -1j * om * np.conj(ab) * m
    out[2] += 1j * lam * np.conj(a) * m
    out[3] += -1j * om * np.conj(b) * m + 1j * (p.Delta + p.delta) * ab
    out[4] += (1j * p.delta - p.gamma) * m + 1j * lam * a * b2 - 1j * om * b * ab
    if fermionic:
        out[1] += 1j * p.A_b * np.maximum(n[1], _FERMI_FLOOR) ** (2.0 / 3.0) * b
        out[3] += 1j * p.A_ab * np.maximum(n[3], _FERMI_FLOOR) ** (2.0 / 3.0) * ab
    return out


def _rhs_trimer(t, psi, p: SystemParams) -> np.ndarray:
    n = psi.real**2 + psi.imag**2
    out = 2j * _collision_shift(p.chi, n) * psi
    om = pulse_omega(t, p.schedule)
    a, a2, a3, tt = psi
    lam = p.lam
    out[0] += -1j * om * np.conj(a3) * tt
    out[1] += 2j * lam * np.conj(a2) * tt
    out[2] += 1j * (p.Delta + p.delta) * a3 - 1j * om * np.conj(a) * tt
    out[3] += (1j * p.delta - p.gamma) * tt + 1j * lam * a2 * a2 - 1j * om * a3 * a
    return out


def _rhs_kernel(params: SystemParams):
    if params.variant is ReactionVariant.BOSONIC:
        return lambda t, y: _rhs_abstraction(t, y, params, fermionic=False)
    if params.variant is ReactionVariant.BOSE_FERMI:
        return lambda t, y: _rhs_abstraction(t, y, params, fermionic=True)
    return lambda t, y: _rhs_trimer(t, y, params)


def _single(state: ModeAmplitudes, params: SystemParams, t: float, kernel) -> Derivative:
    if state.variant is not params.variant:
        raise ValueError(f"state is {state.variant.value} but params are {params.variant.value}")
    dpsi = kernel(float(t), state.psi[:, None])[:, 0]
    return Derivative(state.variant, dpsi)


def rhs_bosonic(state: ModeAmplitudes, params: SystemParams, t: float) -> Derivative:
    """Coupled-mode derivative for the bosonic abstraction reaction."""
    return _single(state, params, t, lambda tt, y: _rhs_abstraction(tt, y, params, False))


def rhs_bosefermi(state: ModeAmplitudes, params: SystemParams, t: float) -> Derivative:
    """Bose-Fermi variant: fermionic modes b, ab get i*A_f |psi|^{4/3} psi
    self-terms in place of same-species collision shifts."""
    return _single(state, params, t, lambda tt, y: _rhs_abstraction(tt, y, params, True))


def rhs_trimer(state: ModeAmplitudes, params: SystemParams, t: float) -> Derivative:
    """Trimer-formation variant 2A2 -> A3 + A via an intermediate tetramer."""
    return _single(state, params, t, lambda tt, y: _rhs_trimer(tt, y, params))


# ---------------------------------------------------------------------------
# conserved atom counts

@dataclass(frozen=True)
class ConservedCharges:
    """Per-species atom counts; exactly conserved when gamma = 0.

    Abstraction variants: ``i_a`` counts A atoms (N_a + N_ab + N_m) and
    ``i_b`` counts B atoms (N_b + 2 N_b2 + N_ab + 2 N_m).  The single charge
    of the trimer variant (N_a + 2 N_a2 + 3 N_a3 + 4 N_t) is stored in
    ``i_a`` with ``i_b`` identically zero, so ``total`` is the atom-weighted
    norm in every variant.
    """

    i_a: float
    i_b: float

    @property
    def total(self) -> float:
        return self.i_a + self.i_b


def _charges_from_populations(n: np.ndarray, variant: ReactionVariant):
    if variant is ReactionVariant.TRIMER:
        i = n[..., 0] + 2 * n[..., 1] + 3 * n[..., 2] + 4 * n[..., 3]
        return i, np.zeros_like(i)
    i_a = n[..., 0] + n[..., 3] + n[..., 4]
    i_b = n[..., 1] + 2 * n[..., 2] + n[..., 3] + 2 * n[..., 4]
    return i_a, i_b


def conserved_charges(state: ModeAmplitudes, variant: ReactionVariant | None = None) -> ConservedCharges:
    variant = state.variant if variant is None else variant
    i_a, i_b = _charges_from_populations(state.populations(), variant)
    return ConservedCharges(float(i_a), float(i_b))


# ---------------------------------------------------------------------------
# two-photon resonance conditions

def resonance_delta(params: SystemParams, N_b2_s: float, N_ab_s: float) -> float:
    """Laser detuning from the generalized two-photon resonance condition.

    Uses the published closed-form shift for each variant.  For the trimer
    variant the arguments are reused as ``N_b2_s`` -> steady a2 population and
    ``N_ab_s`` -> steady a3 (= a) population.
    """
    if N_b2_s < 0 or N_ab_s < 0:
        raise ValueError("steady-state populations must be non-negative")
    c = params.chi_pair
    if params.variant is ReactionVariant.BOSONIC:
        shift_b2 = 2 * c("a", "a") + 6 * c("a", "b") + 5 * c("b", "b2") + 2 * c("b", "b")
        shift_ab = 2 * c("a", "b") + c("b", "b2")
        return -params.delta + shift_b2 * N_b2_s + shift_ab * N_ab_s
    if params.variant is ReactionVariant.BOSE_FERMI:
        shift_b2 = 2 * (c("a", "b") + c("a", "a") + c("a", "b2"))
        shift_ab = 4 * c("a", "b")
        fermi = (params.A_b - params.A_ab) * N_ab_s ** (2.0 / 3.0)
        return -params.delta + shift_b2 * N_b2_s + shift_ab * N_ab_s + fermi
    # trimer variant: coefficients (3 chi_a2,x - 2 chi_t,x) over x = a, a2, a3
    n_a3 = N_ab_s
    n_a2 = N_b2_s
    n_a = N_ab_s  # products appear in (a3, a) pairs
    total = 0.0
    for x, pop in (("a", n_a), ("a2", n_a2), ("a3", n_a3)):
        total += (3 * c("a2", x) - 2 * c("t", x)) * pop
    return -params.delta + total


def phase_matched_delta(params: SystemParams, populations: np.ndarray) -> float:
    """Detuning that exactly locks the dark-state phase combination.

    Requires the mean-field phase rates nu_i of the occupied modes to satisfy
    nu_a + nu_b2 = nu_b + nu_ab (abstraction) or 2 nu_a2 = nu_a + nu_a3
    (trimer variant), which keeps the intermediate-mode source terms cancelled
    as every amplitude rotates at its own rate.
    """
    n = np.asarray(populations, dtype=float)
    chi = params.chi
    labels = mode_labels(params.variant)
    if params.variant is ReactionVariant.TRIMER:
        ia, ia2, ia3 = labels.index("a"), labels.index("a2"), labels.index("a3")
        coef = 2 * chi[ia2] - chi[ia3] - chi[ia]
        return -params.delta + 2 * float(coef @ n)
    ia, ib, ib2, iab = (labels.index(x) for x in ("a", "b", "b2", "ab"))
    coef = chi[ia] + chi[ib2] - chi[ib] - chi[iab]
    delta = -params.delta + 2 * float(coef @ n)
    if params.variant is ReactionVariant.BOSE_FERMI:
        delta -= params.A_b * n[ib] ** (2.0 / 3.0) + params.A_ab * n[iab] ** (2.0 / 3.0)
    return delta


# ---------------------------------------------------------------------------
# embedded Dormand-Prince 5(4) integrator with per-trajectory step control

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# 5th-minus-4th order error weights (includes the FSAL stage)
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# quartic dense-output polynomial: w_s(theta) = sum_j P[s, j] theta^(j+1)
_DP_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXPONENT = -0.17  # 1/5 - 0.75*beta with PI beta = 0.04
_PI_BETA = 0.04


def _err_norm(e: np.ndarray, scale: np.ndarray) -> np.ndarray:
    # RMS over modes of |error|/scale, per trajectory column
    r = (np.abs(e) / scale) ** 2
    return np.sqrt(r.mean(axis=0))


@dataclass
class _BatchResult:
    samples: np.ndarray  # (n_times, n_modes, M)
    accepted: np.ndarray  # (M,)
    rejected: np.ndarray  # (M,)
    failed: np.ndarray  # (M,) bool
    fail_time: np.ndarray  # (M,)


def _integrate_grid(kernel, y0: np.ndarray, t_grid: np.ndarray, rtol: float, atol: float) -> _BatchResult:
    n, m = y0.shape
    nt = t_grid.size
    t0, t_end = float(t_grid[0]), float(t_grid[-1])
    span = t_end - t0
    eps_t = 1e-12 * max(1.0, abs(t0), abs(t_end))

    out = np.empty((nt, n, m), dtype=complex)
    out[0] = y0
    ptr = np.ones(m, dtype=int)

    t = np.full(m, t0)
    y = y0.astype(complex).copy()
    f0 = kernel(t, y)
    k = np.empty((7, n, m), dtype=complex)

    scale0 = atol + rtol * np.abs(y)
    d0 = _err_norm(y, scale0)
    d1 = _err_norm(f0, scale0)
    h = np.where(d1 > 1e-12, 0.01 * d0 / np.maximum(d1, 1e-300), 1e-6 * span)
    h = np.clip(h, 1e-12 * span, span)

    err_prev = np.full(m, 1e-4)
    last_rejected = np.zeros(m, dtype=bool)
    active = np.ones(m, dtype=bool)
    failed = np.zeros(m, dtype=bool)
    fail_time = np.full(m, np.nan)
    accepted = np.zeros(m, dtype=int)
    rejected = np.zeros(m, dtype=int)
    k_fsal = f0

    while active.any():
        h_eff = np.where(active, np.minimum(h, t_end - t), 0.0)
        k[0] = k_fsal
        for s in range(1, 7):
            ys = y + h_eff * sum(_DP_A[s][j] * k[j] for j in range(s))
            if s == 6:
                y5 = ys  # the 5th-order solution (FSAL row equals b-weights)
            k[s] = kernel(t + _DP_C[s] * h_eff, ys)
        err_vec = h_eff * np.einsum("s,snm->nm", _DP_E, k, optimize=False)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = _err_norm(err_vec, scale)
        err = np.where(np.isfinite(err), err, np.inf)

        step_taken = active & (h_eff > 0)
        accept = step_taken & (err <= 1.0)
        reject = step_taken & ~accept

        if accept.any():
            t_new = t + h_eff
            cross = accept.copy()
            cross[accept] = t_grid[np.minimum(ptr[accept], nt - 1)] <= t_new[accept] + eps_t
            for col in np.flatnonzero(cross):
                p = ptr[col]
                while p < nt and t_grid[p] <= t_new[col] + eps_t:
                    theta = min(max((t_grid[p] - t[col]) / h_eff[col], 0.0), 1.0)
                    w = _DP_P @ np.array([theta, theta**2, theta**3, theta**4])
                    out[p, :, col] = y[:, col] + h_eff[col] * (k[:, :, col].T @ w)
                    p += 1
                ptr[col] = p
            t = np.where(accept, t_new, t)
            y = np.where(accept, y5, y)
            k_fsal = np.where(accept, k[6], k_fsal)
            accepted += accept
            done = accept & (ptr >= nt)
            active &= ~done

        rejected += reject

        errsafe = np.maximum(err, 1e-16)
        fac_acc = _SAFETY * errsafe**_ERR_EXPONENT * err_prev**_PI_BETA
        fac_acc = np.clip(fac_acc, _MIN_FACTOR, _MAX_FACTOR)
        fac_acc = np.where(last_rejected, np.minimum(fac_acc, 1.0), fac_acc)
        fac_rej = np.clip(_SAFETY * errsafe**-0.2, _MIN_FACTOR, 1.0)
        h = np.where(accept, h_eff * fac_acc, np.where(reject, h_eff * fac_rej, h))
        err_prev = np.where(accept, np.maximum(err, 1e-4), err_prev)
        last_rejected = np.where(step_taken, reject, last_rejected)

        dead = active & (h < 1e-13 * np.maximum(1.0, np.abs(t)))
        if dead.any():
            failed |= dead
            fail_time = np.where(dead, t, fail_time)
            active &= ~dead

    return _BatchResult(out, accepted, rejected, failed, fail_time)


@dataclass(frozen=True)
class Trajectory:
    """Dense-output samples of one integration run."""

    variant: ReactionVariant
    times: np.ndarray
    psis: np.ndarray  # (n_times, n_modes) complex
    accepted_steps: int
    rejected_steps: int
    final_norm_drift: float

    def populations(self) -> np.ndarray:
        return np.abs(self.psis) ** 2

    def charges(self) -> tuple[np.ndarray, np.ndarray]:
        return _charges_from_populations(self.populations(), self.variant)

    def state_at(self, index: int) -> ModeAmplitudes:
        return ModeAmplitudes(self.variant, self.psis[index])


def _check_tolerances(tol_rel: float, tol_abs: float) -> None:
    for name, tol in (("tol_rel", tol_rel), ("tol_abs", tol_abs)):
        if not (1e-15 < tol < 1e-2):
            raise ValueError(f"{name} must lie in (1e-15, 1e-2), got {tol}")


def integrate(
    state0: ModeAmplitudes,
    params: SystemParams,
    t_span: tuple[float, float],
    tol_rel: float = 1e-9,
    tol_abs: float = 1e-12,
    t_eval: np.ndarray | None = None,
) -> Trajectory:
    """Integrate the mean-field equations over ``t_span``.

    Local error per step is kept below max(tol_abs, tol_rel * |state|); output
    is interpolated onto ``t_eval`` (default: 401 uniform samples).
    """
    _check_tolerances(tol_rel, tol_abs)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t0 < t1:
        raise ValueError(f"need t_span[0] < t_span[1], got {t_span}")
    if state0.variant is not params.variant:
        raise ValueError("state and params describe different variants")
    w0 = state0.atom_weighted_norm()
    if w0 > 1.0 + 1e-9:
        raise ValueError(f"initial atom-weighted norm {w0} exceeds 1")
    if t_eval is None:
        t_eval = np.linspace(t0, t1, 401)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size < 2 or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be a strictly increasing 1-D grid")
    if abs(t_eval[0] - t0) > 0 or abs(t_eval[-1] - t1) > 0:
        raise ValueError("t_eval must start at t_span[0] and end at t_span[1]")

    res = _integrate_grid(_rhs_kernel(params), state0.psi[:, None], t_eval, tol_rel, tol_abs)
    if res.failed[0]:
        raise IntegrationError(
            f"step size underflow at t = {res.fail_time[0]:.6g}", float(res.fail_time[0])
        )
    psis = res.samples[:, :, 0]
    weights = atom_weights(params.variant)
    w = (np.abs(psis) ** 2) @ weights
    return Trajectory(
        variant=params.variant,
        times=t_eval,
        psis=psis,
        accepted_steps=int(res.accepted[0]),
        rejected_steps=int(res.rejected[0]),
        final_norm_drift=float(w[-1] - w[0]),
    )


def integrate_batch(
    psi0: np.ndarray,
    params: SystemParams,
    t_grid: np.ndarray,
    tol_rel: float = 1e-9,
    tol_abs: float = 1e-12,
) -> _BatchResult:
    """Integrate many trajectories at once; column j of ``psi0`` is trajectory j.

    Each column keeps its own adaptive step size and failure status; no
    reduction ever crosses columns.
    """
    _check_tolerances(tol_rel, tol_abs)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-D grid")
    return _integrate_grid(_rhs_kernel(params), np.asarray(psi0, dtype=complex), t_grid, tol_rel, tol_abs)


# ---------------------------------------------------------------------------
# trajectory export

def write_trajectory_csv(traj: Trajectory, fh) -> None:
    """CSV export with populations and conserved charges, 17 significant digits."""
    labels = mode_labels(traj.variant)
    pops = traj.populations()
    i_a, i_b = traj.charges()
    if traj.variant is ReactionVariant.TRIMER:
        header = "t," + ",".join(f"N_{x}" for x in labels) + ",I"
        cols = [traj.times] + [pops[:, i] for i in range(len(labels))] + [i_a]
    else:
        header = "t," + ",".join(f"N_{x}" for x in labels) + ",I_A,I_B"
        cols = [traj.times] + [pops[:, i] for i in range(len(labels))] + [i_a, i_b]
    fh.write(header + "\n")
    for row in zip(*cols):
        fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
