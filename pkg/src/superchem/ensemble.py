"""Stochastic vacuum seeding and trajectory ensembles.

The mean-field equations leave empty product modes empty forever, so the
quantum-noise-triggered onset is emulated by drawing small classical seed
amplitudes for the product modes and averaging many trajectories.  Seed
statistics match the linearized quantum stage; every trajectory's random
stream derives only from (master_seed, trajectory index), making ensembles
reproducible bit for bit under any execution layout.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import integrate_batch
from .model import ModeAmplitudes, ReactionVariant, SystemParams, atom_weights, mode_labels

__all__ = [
    "SeedRule",
    "SeedSpec",
    "EnsembleResult",
    "EnsembleError",
    "trajectory_rng",
    "draw_seed",
    "run_ensemble",
    "ensemble_stats",
    "correlation_extract",
]


class EnsembleError(RuntimeError):
    """Too many trajectory failures to form meaningful statistics."""


class SeedRule(enum.Enum):
    HALF_VACUUM = "half-vacuum"
    MATCHED_GROWTH = "matched-growth"


@dataclass(frozen=True)
class SeedSpec:
    """How product-mode seed amplitudes are drawn.

    ``HALF_VACUUM`` puts half a quantum per product mode (occupation
    1/(2 n_total) as a fraction); ``MATCHED_GROWTH`` matches the linearized
    growth sinh^2(calG t_seed)/n_total at a chosen seed time and needs
    ``cal_g`` supplied by the caller.
    """

    n_total: float = 1e5
    rule: SeedRule = SeedRule.HALF_VACUUM
    t_seed: float | None = None
    cal_g: float | None = None
    master_seed: int = 12345

    def __post_init__(self):
        if self.n_total < 100:
            raise ValueError(f"n_total must be >= 100, got {self.n_total}")
        if self.rule is SeedRule.MATCHED_GROWTH:
            if self.t_seed is None or self.cal_g is None:
                raise ValueError("matched-growth seeding needs t_seed and cal_g")

    def mean_occupation(self) -> float:
        if self.rule is SeedRule.HALF_VACUUM:
            return 1.0 / (2.0 * self.n_total)
        return math.sinh(self.cal_g * self.t_seed) ** 2 / self.n_total


def _product_and_source_indices(variant: ReactionVariant) -> tuple[list[int], list[int]]:
    labels = mode_labels(variant)
    if variant is ReactionVariant.TRIMER:
        products = [labels.index("a3"), labels.index("a")]
        sources = [labels.index("a2")]
    else:
        products = [labels.index("ab"), labels.index("b")]
        sources = [labels.index("a"), labels.index("b2")]
    return products, sources


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent, schedule-free random stream for one trajectory."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(index,)))


def draw_seed(rng: np.random.Generator, spec: SeedSpec, base: ModeAmplitudes) -> ModeAmplitudes:
    """Add circular complex Gaussian seeds to the product modes of ``base``.

    The source amplitudes are rescaled so the atom-weighted norm stays exactly
    one; in the limit of vanishing seed variance the mean-field fixed point is
    recovered.
    """
    products, sources = _product_and_source_indices(base.variant)
    psi = np.array(base.psi, dtype=complex)
    if np.any(np.abs(psi[products]) > 0):
        raise ValueError("base state must have exactly empty product modes")
    mean_occ = spec.mean_occupation()
    sigma = math.sqrt(mean_occ / 2.0)
    draws = rng.standard_normal((len(products), 2))
    for row, idx in enumerate(products):
        psi[idx] = sigma * (draws[row, 0] + 1j * draws[row, 1])

    weights = atom_weights(base.variant)
    pops = np.abs(psi) ** 2
    seeded_weight = float(weights[products] @ pops[products])
    source_weight = float(weights[sources] @ pops[sources])
    target = base.atom_weighted_norm()
    factor = math.sqrt(max(target - seeded_weight, 0.0) / source_weight)
    psi[sources] *= factor
    return ModeAmplitudes(base.variant, psi)


@dataclass(frozen=True)
class EnsembleResult:
    """Mean populations and spreads over the kept trajectories."""

    variant: ReactionVariant
    times: np.ndarray
    mean_n: np.ndarray  # (n_times, n_modes)
    spread_dn: np.ndarray  # (n_times, n_modes)
    populations: np.ndarray  # (n_times, n_modes, kept)
    trajectories_kept: int
    failures: int
    master_seed: int
    trajectory_indices: tuple[int, ...] = field(default=())

    def mode_index(self, label: str) -> int:
        return mode_labels(self.variant).index(label)


def ensemble_stats(populations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and root-mean-square spread over the trajectory axis (last axis).

    Spread uses the population convention Delta N = sqrt(mean((N - mean)^2)).
    """
    mean = populations.mean(axis=-1)
    spread = np.sqrt(((populations - mean[..., None]) ** 2).mean(axis=-1))
    return mean, spread


def run_ensemble(
    params: SystemParams,
    spec: SeedSpec,
    M: int,
    t_grid: np.ndarray,
    R: float = 0.5,
    tol_rel: float = 1e-9,
    tol_abs: float = 1e-12,
) -> EnsembleResult:
    """Integrate M independently seeded trajectories and reduce statistics.

    Trajectories whose integration fails are excluded (never retried); more
    than 10% failures aborts the ensemble.
    """
    from .model import initial_state

    if M < 2:
        raise ValueError(f"need at least 2 trajectories, got {M}")
    base = initial_state(R, params.variant)
    seeds = np.empty((len(base.psi), M), dtype=complex)
    for i in range(M):
        seeds[:, i] = draw_seed(trajectory_rng(spec.master_seed, i), spec, base).psi

    res = integrate_batch(seeds, params, t_grid, tol_rel=tol_rel, tol_abs=tol_abs)
    kept = np.flatnonzero(~res.failed)
    failures = int(res.failed.sum())
    if failures > 0.1 * M:
        raise EnsembleError(f"{failures}/{M} trajectories failed to integrate")
    pops = np.abs(res.samples[:, :, kept]) ** 2
    mean, spread = ensemble_stats(pops)
    return EnsembleResult(
        variant=params.variant,
        times=np.asarray(t_grid, dtype=float),
        mean_n=mean,
        spread_dn=spread,
        populations=pops,
        trajectories_kept=len(kept),
        failures=failures,
        master_seed=spec.master_seed,
        trajectory_indices=tuple(int(i) for i in kept),
    )


def correlation_extract(result: EnsembleResult, mode_i: str, mode_j: str, t: float) -> float:
    """Sample covariance of two mode populations at time t, normalized by
    sqrt of the mean occupations.  NaN when either mean occupation vanishes."""
    hits = np.flatnonzero(np.isclose(result.times, t, rtol=0, atol=1e-12 * max(1.0, abs(t))))
    if hits.size == 0:
        raise ValueError(f"t = {t} is not on the ensemble time grid")
    it = int(hits[0])
    ii = result.mode_index(mode_i)
    jj = result.mode_index(mode_j)
    ni = result.populations[it, ii]
    nj = result.populations[it, jj]
    mi, mj = ni.mean(), nj.mean()
    if mi <= 0 or mj <= 0:
        return float("nan")
    cov = ((ni - mi) * (nj - mj)).mean()
    return float(cov / math.sqrt(mi * mj))
