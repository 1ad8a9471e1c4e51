"""Configuration ingestion: flat key=value documents resolved into run settings.

The accepted schema is a closed set of keys; anything unknown is an error so
that typos cannot silently fall back to defaults.  Collision entries use
dotted keys ``chi.<i>.<j>`` with mode labels of the selected variant; pairs
are stored symmetrically and conflicting duplicate assignments are rejected.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .model import ModeAmplitudes, PulseShape, ReactionVariant, SystemParams, mode_labels

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config_text",
    "load_config",
    "load_params",
    "default_chi",
    "params_fingerprint",
]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration document."""


_VARIANT_ALIASES = {
    "bosonic": ReactionVariant.BOSONIC,
    "bose-fermi": ReactionVariant.BOSE_FERMI,
    "bose_fermi": ReactionVariant.BOSE_FERMI,
    "fermionic": ReactionVariant.BOSE_FERMI,
    "trimer": ReactionVariant.TRIMER,
}

# Rb-87 + K-41 s-wave collision table, units of lambda/n; pairs the experiment
# has not pinned down share the single fill value 0.0938.
_CHI_FILL = 0.0938
_BOSONIC_CHI = {("a", "a"): 0.5303, ("b", "b"): 0.3214, ("a", "b"): 0.8731}
# Fermionic preset: same-species fermion entries vanish; the a<->ab entry uses
# the larger magnitude of the two published candidates (both overridable).
_FERMI_CHI = {
    ("a", "a"): 0.5303,
    ("b", "b"): 0.0,
    ("ab", "ab"): 0.0,
    ("a", "b"): -0.09,
    ("ab", "b"): -0.09,
    ("a", "ab"): -0.2637,
}
_TRIMER_CHI = {("a", "a"): 0.5303}

_SCHEMA_SIMPLE = {
    "variant": str,
    "R": float,
    "delta": float,
    "Delta_mode": str,
    "Delta": float,
    "gamma": float,
    "omega0": float,
    "tau": float,
    "t_start": float,
    "t_end": float,
    "A_b": float,
    "A_ab": float,
    "lambda_si": float,
    "seed": int,
    "n_total": float,
    "trajectories": int,
    "tol_rel": float,
    "tol_abs": float,
}


def default_chi(variant: ReactionVariant) -> np.ndarray:
    """Default symmetric collision matrix for a variant."""
    labels = mode_labels(variant)
    n = len(labels)
    preset = {
        ReactionVariant.BOSONIC: _BOSONIC_CHI,
        ReactionVariant.BOSE_FERMI: _FERMI_CHI,
        ReactionVariant.TRIMER: _TRIMER_CHI,
    }[variant]
    if variant is ReactionVariant.BOSE_FERMI:
        chi = np.zeros((n, n))  # unlisted fermionic-preset pairs are zero
    else:
        chi = np.full((n, n), _CHI_FILL)
    for (i, j), v in preset.items():
        chi[labels.index(i), labels.index(j)] = v
        chi[labels.index(j), labels.index(i)] = v
    return chi


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration (physics + execution settings)."""

    variant: ReactionVariant = ReactionVariant.BOSONIC
    R: float = 0.5
    delta: float = 3.0
    Delta_mode: str = "auto"
    Delta: float | None = None
    gamma: float = 1.0
    omega0: float = 20.0
    tau: float = 20.0
    t_start: float = 0.0
    t_end: float = 160.0
    chi_overrides: dict = field(default_factory=dict)
    A_b: float | None = None
    A_ab: float | None = None
    lambda_si: float | None = None
    seed: int = 12345
    n_total: float = 1e5
    trajectories: int = 300
    tol_rel: float = 1e-9
    tol_abs: float = 1e-12

    def chi_matrix(self) -> np.ndarray:
        labels = mode_labels(self.variant)
        chi = default_chi(self.variant)
        for (i, j), v in self.chi_overrides.items():
            chi[labels.index(i), labels.index(j)] = v
            chi[labels.index(j), labels.index(i)] = v
        return chi

    def system_params(self, Delta: float | None = None) -> SystemParams:
        """Build SystemParams; ``Delta`` must be supplied when mode is auto."""
        if Delta is None:
            if self.Delta_mode == "explicit":
                Delta = self.Delta
            else:
                raise ConfigError(
                    "Delta_mode=auto: resolve Delta from the CPT resonance first "
                    "(see cpt.auto_delta) or pass Delta explicitly"
                )
        a_b = self.A_b
        a_ab = self.A_ab
        if self.variant is ReactionVariant.BOSE_FERMI:
            a_b = 0.008 if a_b is None else a_b
            a_ab = 0.004 if a_ab is None else a_ab
        else:
            a_b = 0.0 if a_b is None else a_b
            a_ab = 0.0 if a_ab is None else a_ab
        try:
            return SystemParams(
                variant=self.variant,
                omega0=self.omega0,
                tau=self.tau,
                delta=self.delta,
                Delta=float(Delta),
                gamma=self.gamma,
                chi=self.chi_matrix(),
                A_b=a_b,
                A_ab=a_ab,
                lambda_si=self.lambda_si,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_dict(self, Delta: float | None = None) -> dict:
        """Canonical flat mapping of every key, suitable for hashing/replay.

        When a resolved ``Delta`` is supplied the emitted document pins it
        explicitly, so replaying the document reproduces the run exactly.
        """
        labels = mode_labels(self.variant)
        chi = self.chi_matrix()
        out: dict = {
            "variant": self.variant.value,
            "R": self.R,
            "delta": self.delta,
            "Delta_mode": self.Delta_mode if Delta is None else "explicit",
            "Delta": self.Delta if Delta is None else Delta,
            "gamma": self.gamma,
            "omega0": self.omega0,
            "tau": self.tau,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "A_b": self.A_b,
            "A_ab": self.A_ab,
            "lambda_si": self.lambda_si,
            "seed": self.seed,
            "n_total": self.n_total,
            "trajectories": self.trajectories,
            "tol_rel": self.tol_rel,
            "tol_abs": self.tol_abs,
        }
        params = self.system_params(0.0 if out["Delta"] is None else out["Delta"])
        out["A_b"], out["A_ab"] = params.A_b, params.A_ab
        for i, li in enumerate(labels):
            for j, lj in enumerate(labels):
                if j >= i:
                    out[f"chi.{li}.{lj}"] = float(chi[i, j])
        return {k: v for k, v in out.items() if v is not None}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {line!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _coerce(key: str, value, target):
    if isinstance(value, str):
        try:
            if target is float:
                return float(value)
            if target is int:
                return int(value)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: cannot parse {value!r} as {target.__name__}") from exc
        return value
    if target is float and isinstance(value, (int, float)):
        return float(value)
    if target is int and isinstance(value, int):
        return value
    if target is str and isinstance(value, str):
        return value
    raise ConfigError(f"key {key!r}: expected {target.__name__}, got {type(value).__name__}")


def load_config(source: str | Mapping, overrides: Mapping | None = None) -> RunConfig:
    """Build a validated RunConfig from a config document plus overrides.

    ``source`` is either the document text or an already-parsed mapping;
    ``overrides`` (e.g. from ``--set key=value``) win over the document.
    """
    raw = dict(parse_config_text(source)) if isinstance(source, str) else dict(source)
    if overrides:
        raw.update(overrides)

    variant = ReactionVariant.BOSONIC
    if "variant" in raw:
        name = str(raw["variant"]).strip().lower()
        if name not in _VARIANT_ALIASES:
            raise ConfigError(
                f"key 'variant': unknown variant {name!r}; expected one of "
                f"{sorted(set(_VARIANT_ALIASES))}"
            )
        variant = _VARIANT_ALIASES[name]
    labels = mode_labels(variant)

    chi_overrides: dict[tuple[str, str], float] = {}
    simple: dict = {}
    for key, value in raw.items():
        if key == "variant":
            continue
        if key.startswith("chi."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"key {key!r}: collision keys look like chi.<i>.<j>")
            i, j = parts[1], parts[2]
            for lab in (i, j):
                if lab not in labels:
                    raise ConfigError(
                        f"key {key!r}: mode {lab!r} not in {variant.value} modes {labels}"
                    )
            pair = (min(i, j), max(i, j))
            v = _coerce(key, value, float)
            if pair in chi_overrides and chi_overrides[pair] != v:
                raise ConfigError(
                    f"key {key!r}: conflicts with earlier chi.{pair[0]}.{pair[1]} assignment"
                )
            chi_overrides[pair] = v
            continue
        if key not in _SCHEMA_SIMPLE:
            raise ConfigError(f"unknown configuration key {key!r}")
        simple[key] = _coerce(key, value, _SCHEMA_SIMPLE[key])

    cfg = RunConfig(variant=variant, chi_overrides=chi_overrides)
    tau = simple.get("tau", cfg.tau)
    # default window: pulse peak (coupling large while products are still
    # empty) through effectively complete pulse decay
    cfg = replace(cfg, t_start=0.0, t_end=8.0 * tau)
    known_fields = set(RunConfig.__dataclass_fields__)
    cfg = replace(cfg, **{k: v for k, v in simple.items() if k in known_fields})

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.variant is not ReactionVariant.TRIMER and not cfg.R > 0:
        raise ConfigError(f"key 'R': imbalance ratio must be > 0, got {cfg.R}")
    if cfg.gamma < 0:
        raise ConfigError(f"key 'gamma': decay rate must be >= 0, got {cfg.gamma}")
    if cfg.tau <= 0:
        raise ConfigError(f"key 'tau': pulse width must be > 0, got {cfg.tau}")
    if cfg.omega0 < 0:
        raise ConfigError(f"key 'omega0': peak coupling must be >= 0, got {cfg.omega0}")
    if cfg.Delta_mode not in ("auto", "explicit"):
        raise ConfigError(f"key 'Delta_mode': expected auto|explicit, got {cfg.Delta_mode!r}")
    if cfg.Delta_mode == "explicit" and cfg.Delta is None:
        raise ConfigError("key 'Delta': required when Delta_mode = explicit")
    if cfg.Delta_mode == "auto" and cfg.Delta is not None:
        raise ConfigError("key 'Delta': only allowed when Delta_mode = explicit")
    if not cfg.t_start < cfg.t_end:
        raise ConfigError(f"key 't_end': need t_start < t_end, got [{cfg.t_start}, {cfg.t_end}]")
    if cfg.lambda_si is not None and cfg.lambda_si <= 0:
        raise ConfigError(f"key 'lambda_si': must be > 0, got {cfg.lambda_si}")
    if cfg.n_total < 100:
        raise ConfigError(f"key 'n_total': need at least 100 particles, got {cfg.n_total}")
    if cfg.trajectories < 2:
        raise ConfigError(f"key 'trajectories': need at least 2, got {cfg.trajectories}")
    for name in ("tol_rel", "tol_abs"):
        tol = getattr(cfg, name)
        if not (1e-15 < tol < 1e-2):
            raise ConfigError(f"key {name!r}: tolerance must lie in (1e-15, 1e-2), got {tol}")
    if cfg.variant is ReactionVariant.BOSONIC:
        if (cfg.A_b not in (None, 0.0)) or (cfg.A_ab not in (None, 0.0)):
            raise ConfigError("keys 'A_b'/'A_ab' must be zero for the bosonic variant")
    if cfg.variant is ReactionVariant.BOSE_FERMI:
        for f in ("b", "ab"):
            if cfg.chi_overrides.get((f, f), 0.0) != 0.0:
                raise ConfigError(
                    f"key 'chi.{f}.{f}': same-species fermionic collisions must be zero"
                )
    # construct once to surface any remaining SystemParams invariant violation
    cfg.system_params(Delta=0.0 if cfg.Delta is None else cfg.Delta)


def load_params(source: str | Mapping, overrides: Mapping | None = None) -> SystemParams:
    """One-shot: config document -> SystemParams with Delta resolved.

    Auto mode resolves Delta from the CPT resonance condition at the
    configured (R, omega0) operating point.
    """
    cfg = load_config(source, overrides)
    if cfg.Delta_mode == "explicit":
        return cfg.system_params()
    from .cpt import auto_delta  # deferred: cpt sits above this module

    params0 = cfg.system_params(Delta=0.0)
    return replace(params0, Delta=auto_delta(params0, cfg.R))


def params_fingerprint(obj) -> str:
    """Stable hex digest of a params/config mapping (canonical order, exact floats)."""
    if isinstance(obj, SystemParams):
        payload = {
            "variant": obj.variant.value,
            "lam": obj.lam,
            "omega0": obj.omega0,
            "tau": obj.tau,
            "delta": obj.delta,
            "Delta": obj.Delta,
            "gamma": obj.gamma,
            "A_b": obj.A_b,
            "A_ab": obj.A_ab,
            "lambda_si": obj.lambda_si,
            "pulse": obj.pulse_shape.value,
            "chi": [float(x) for x in np.asarray(obj.chi).ravel()],
        }
    else:
        payload = dict(obj)
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(text.encode()).hexdigest()


def seeded_base_state(cfg: RunConfig) -> ModeAmplitudes:
    """Reactant-only initial state for this configuration."""
    from .model import initial_state

    return initial_state(cfg.R, cfg.variant)
