"""Coherent matter-wave abstraction-reaction simulator.

Covers the quantum-noise-dominated onset (closed forms plus an exact
number-basis oracle), the noise-seeded mean-field ensemble stage, and the
CPT/STIRAP steady-state analysis for bosonic, Bose-Fermi and trimer-formation
reaction variants.
"""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig, load_config, load_params
from .cpt import (
    CptSolution,
    SweepResult,
    adiabaticity,
    auto_delta,
    cpt_optimum,
    cpt_population,
    cpt_solution,
    stationarity_residual,
    sweep_imbalance,
    trimer_cpt,
)
from .dynamics import (
    ConservedCharges,
    IntegrationError,
    Trajectory,
    conserved_charges,
    integrate,
    phase_matched_delta,
    resonance_delta,
    rhs_bosefermi,
    rhs_bosonic,
    rhs_trimer,
    write_trajectory_csv,
)
from .ensemble import (
    EnsembleError,
    EnsembleResult,
    SeedRule,
    SeedSpec,
    correlation_extract,
    draw_seed,
    run_ensemble,
    trajectory_rng,
)
from .fock import (
    PairBasis,
    PairState,
    ResourceError,
    Statistics,
    build_pair_hamiltonian,
    evolve_pair,
    pair_moments,
)
from .model import (
    ModeAmplitudes,
    PulseSchedule,
    PulseShape,
    ReactionVariant,
    SystemParams,
    initial_state,
    pulse_omega,
)
from .quantum import (
    EffectiveCouplings,
    MomentSet,
    bosonic_moments,
    effective_couplings,
    fermionic_moments,
    validity_time,
)

__all__ = [name for name in dir() if not name.startswith("_")]
