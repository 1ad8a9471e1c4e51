"""Command-line surface: reproducible runs with manifests and CSV outputs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 resource guard.
"""
from __future__ import annotations

import argparse
import datetime
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, params_fingerprint
from .cpt import auto_delta, cpt_population, cpt_solution, sweep_imbalance
from .dynamics import IntegrationError, integrate, write_trajectory_csv
from .ensemble import EnsembleError, SeedSpec, draw_seed, run_ensemble, trajectory_rng
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
    ReactionVariant,
    SystemParams,
    initial_state,
    mode_labels,
    pulse_omega,
)
from .quantum import MomentSet, bosonic_moments, fermionic_moments

FIGURES = ("fig2", "fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5b")


def _fmt(x) -> str:
    """Shortest round-trip decimal."""
    return repr(float(x))


def _write_csv(path: Path, header: str, columns) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _resolve_delta(cfg: RunConfig) -> float:
    if cfg.Delta_mode == "explicit":
        return float(cfg.Delta)
    return auto_delta(cfg.system_params(Delta=0.0), cfg.R)


def _params(cfg: RunConfig) -> SystemParams:
    return cfg.system_params(Delta=_resolve_delta(cfg))


def _time_grid(cfg: RunConfig, n: int = 401) -> np.ndarray:
    return np.linspace(cfg.t_start, cfg.t_end, n)


def _write_manifest(out_dir: Path, subcommand: str, cfg: RunConfig, params: SystemParams,
                    outputs: list[str], failures: int = 0, pin_delta: bool = True) -> None:
    # multi-run subcommands (sweep, figures) re-derive their per-run detunings,
    # so their manifests keep Delta_mode = auto for faithful replay
    manifest = {
        "artifact_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "subcommand": subcommand,
        "config": cfg.resolved_dict(Delta=params.Delta if pin_delta else None),
        "master_seed": cfg.seed,
        "params_hash": params_fingerprint(params),
        "outputs": sorted(outputs),
        "failures": failures,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_ensemble_csvs(out_dir: Path, result, prefix: str = "ensemble") -> list[str]:
    labels = mode_labels(result.variant)
    names = [f"{prefix}_mean.csv", f"{prefix}_spread.csv"]
    header = "t," + ",".join(f"N_{x}" for x in labels)
    _write_csv(out_dir / names[0], header,
               [result.times] + [result.mean_n[:, i] for i in range(len(labels))])
    _write_csv(out_dir / names[1], header,
               [result.times] + [result.spread_dn[:, i] for i in range(len(labels))])
    return names


# ---------------------------------------------------------------------------
# subcommands

def _cmd_simulate(args, cfg: RunConfig, out_dir: Path) -> int:
    params = _params(cfg)
    base = initial_state(cfg.R, cfg.variant)
    if args.zero_seed:
        state0 = base
    else:
        spec = SeedSpec(n_total=cfg.n_total, master_seed=cfg.seed)
        state0 = draw_seed(trajectory_rng(cfg.seed, 0), spec, base)
    traj = integrate(state0, params, (cfg.t_start, cfg.t_end),
                     tol_rel=cfg.tol_rel, tol_abs=cfg.tol_abs, t_eval=_time_grid(cfg))
    with open(out_dir / "trajectory.csv", "w", newline="") as fh:
        write_trajectory_csv(traj, fh)
    _write_manifest(out_dir, "simulate", cfg, params, ["trajectory.csv"])
    print(f"trajectory.csv written ({traj.accepted_steps} steps, "
          f"norm drift {traj.final_norm_drift:.3e})")
    return 0


def _cmd_ensemble(args, cfg: RunConfig, out_dir: Path) -> int:
    if args.trajectories is not None:
        cfg = replace(cfg, trajectories=args.trajectories)
    if args.master_seed is not None:
        cfg = replace(cfg, seed=args.master_seed)
    params = _params(cfg)
    spec = SeedSpec(n_total=cfg.n_total, master_seed=cfg.seed)
    result = run_ensemble(params, spec, cfg.trajectories, _time_grid(cfg), R=cfg.R,
                          tol_rel=cfg.tol_rel, tol_abs=cfg.tol_abs)
    outputs = _write_ensemble_csvs(out_dir, result)
    _write_manifest(out_dir, "ensemble", cfg, params, outputs, failures=result.failures)
    print(f"{result.trajectories_kept} trajectories kept, {result.failures} failed")
    return 0


def _parse_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}: {exc}") from exc


def _cmd_cpt(args, cfg: RunConfig, out_dir: Path) -> int:
    params = cfg.system_params(Delta=0.0)
    rows = []
    header = f"{'R':>8} {'ratio':>8} {'N_ab=N_b':>14} {'N_b2':>14} {'N_a':>14} {'Delta_res':>12} {'omega_eff':>12}"
    print(header)
    for r in _parse_list(args.R):
        for ratio in _parse_list(args.ratio):
            sol = cpt_solution(r, ratio, params)
            print(f"{r:8.4g} {ratio:8.4g} {sol.N_ab_s:14.10g} {sol.N_b2_s:14.10g} "
                  f"{sol.N_a_s:14.10g} {sol.Delta:12.6g} {sol.omega_eff:12.6g}")
            rows.append(sol)
    if args.write:
        _write_csv(out_dir / "cpt.csv", "R,ratio,N_ab_s,N_b2_s,N_a_s,Delta,omega_eff",
                   [[s.R for s in rows], [s.ratio for s in rows], [s.N_ab_s for s in rows],
                    [s.N_b2_s for s in rows], [s.N_a_s for s in rows],
                    [s.Delta for s in rows], [s.omega_eff for s in rows]])
        _write_manifest(out_dir, "cpt", cfg, params, ["cpt.csv"])
    return 0


def _cmd_sweep(args, cfg: RunConfig, out_dir: Path) -> int:
    params = _params(cfg)
    grid = np.linspace(args.r_min, args.r_max, args.points)
    spec = SeedSpec(n_total=cfg.n_total, master_seed=cfg.seed)
    delta_mode = "auto" if cfg.Delta_mode == "auto" else "fixed"
    t_grid = np.linspace(cfg.t_start, cfg.t_start + 5.0 * cfg.tau, 301)
    result = sweep_imbalance(params, grid, spec, M=args.ensemble_size, t_grid=t_grid,
                             delta_mode=delta_mode)
    _write_csv(out_dir / "sweep.csv", "R,final_conversion",
               [result.r_grid, result.final_conversion])
    _write_manifest(out_dir, "sweep", cfg, params, ["sweep.csv"],
                    failures=len(result.failures),
                    pin_delta=cfg.Delta_mode == "explicit")
    print(f"sweep.csv written ({args.points} points, {len(result.failures)} failures)")
    return 0


_MOMENT_COLUMNS = "x,N,Q,g2_single,g2_cross,C,csi_gap"


def _moment_row(m: MomentSet) -> list[float]:
    return [m.N, m.Q, m.g2_single, m.g2_cross, m.C, m.csi_gap]


def _cmd_moments(args, cfg: RunConfig, out_dir: Path) -> int:
    xs = np.linspace(args.x_min, args.x_max, args.points)
    rows = []
    for x in xs:
        if args.statistics == "bose":
            rows.append(_moment_row(bosonic_moments(float(x))))
        else:
            rows.append(_moment_row(fermionic_moments(float(x), flavor=args.flavor)))
    table = np.array(rows).T
    _write_csv(out_dir / "moments.csv", _MOMENT_COLUMNS, [xs, *table])
    params = cfg.system_params(Delta=0.0)
    _write_manifest(out_dir, "moments", cfg, params, ["moments.csv"])
    print(f"moments.csv written ({args.points} points)")
    return 0


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must look like start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}: {exc}") from exc
    if count < 1:
        raise ConfigError(f"grid needs at least one point, got {count}")
    return np.linspace(start, stop, count)


def _cmd_oracle(args, cfg: RunConfig, out_dir: Path) -> int:
    statistics = Statistics.BOSE if args.statistics == "bose" else Statistics.FERMI
    basis = PairBasis(args.na0, args.nb20, statistics)
    ham = build_pair_hamiltonian(basis, G=1.0)
    cal_g = 1.0 * np.sqrt(args.na0 * args.nb20)
    xs = _parse_grid(args.gt_grid)
    rows, devs = [], []
    for x in xs:
        state = evolve_pair(ham, PairState.vacuum(basis), float(x) / cal_g)
        m = pair_moments(state)
        a = bosonic_moments(float(x)) if statistics is Statistics.BOSE \
            else fermionic_moments(float(x), flavor="oracle")
        rel = []
        for got, want in zip(_moment_row(m), _moment_row(a)):
            if np.isfinite(got) and np.isfinite(want) and want != 0:
                rel.append(abs(got - want) / abs(want))
        rows.append(_moment_row(m))
        devs.append(max(rel) if rel else float("nan"))
    table = np.array(rows).T
    _write_csv(out_dir / "oracle.csv", _MOMENT_COLUMNS + ",deviation_vs_analytic",
               [xs, *table, devs])
    params = cfg.system_params(Delta=0.0)
    _write_manifest(out_dir, "oracle", cfg, params, ["oracle.csv"])
    print(f"oracle.csv written ({len(xs)} points)")
    return 0


# ---------------------------------------------------------------------------
# figure presets

_GP_PREAMBLE = """\
set datafile separator ','
set key top left
set xlabel 'time (1/lambda)'
"""


def _figure_ensembles(cfg: RunConfig, out_dir: Path, name: str, variant: ReactionVariant,
                      deltas: tuple[float, float]) -> tuple[list[str], int]:
    outputs, failures = [], 0
    base_cfg = replace(cfg, variant=variant, chi_overrides={}, A_b=None, A_ab=None)
    curves = []
    for delta in deltas:
        run_cfg = replace(base_cfg, delta=delta)
        params = _params(run_cfg)
        spec = SeedSpec(n_total=run_cfg.n_total, master_seed=run_cfg.seed)
        result = run_ensemble(params, spec, run_cfg.trajectories, _time_grid(run_cfg),
                              R=run_cfg.R, tol_rel=run_cfg.tol_rel, tol_abs=run_cfg.tol_abs)
        failures += result.failures
        tag = f"{name}_delta{delta:+g}"
        outputs += _write_ensemble_csvs(out_dir, result, prefix=tag)
        curves.append(tag)
    # ideal dark-state conversion for the same pulse
    tgrid = _time_grid(base_cfg)
    ratio_t = pulse_omega(tgrid, base_cfg.system_params(Delta=0.0).schedule)
    cpt_curve = np.array([cpt_population(base_cfg.R, float(r)) for r in ratio_t])
    cpt_name = f"{name}_cpt.csv"
    _write_csv(out_dir / cpt_name, "t,N_cpt", [tgrid, cpt_curve])
    outputs.append(cpt_name)

    product_col = 5 if variant is not ReactionVariant.TRIMER else 4
    gp = [_GP_PREAMBLE, "set ylabel 'population fraction'"]
    plots = [f"'{c}_mean.csv' using 1:{product_col} with lines title '{c} N_ab'"
             for c in curves]
    plots.append(f"'{cpt_name}' using 1:2 with lines dashtype 2 title 'CPT'")
    gp.append("plot " + ", \\\n     ".join(plots))
    script = f"{name}.gp"
    (out_dir / script).write_text("\n".join(gp) + "\n")
    outputs.append(script)
    return outputs, failures


def _figure_spreads(cfg: RunConfig, out_dir: Path) -> tuple[list[str], int]:
    outputs, failures = [], 0
    tags = []
    for delta in (3.0, -3.0):
        run_cfg = replace(cfg, variant=ReactionVariant.BOSONIC, delta=delta,
                          chi_overrides={}, A_b=None, A_ab=None)
        params = _params(run_cfg)
        spec = SeedSpec(n_total=run_cfg.n_total, master_seed=run_cfg.seed)
        result = run_ensemble(params, spec, run_cfg.trajectories, _time_grid(run_cfg),
                              R=run_cfg.R, tol_rel=run_cfg.tol_rel, tol_abs=run_cfg.tol_abs)
        failures += result.failures
        tag = f"fig2_delta{delta:+g}"
        outputs += _write_ensemble_csvs(out_dir, result, prefix=tag)
        tags.append(tag)
    gp = [
        _GP_PREAMBLE,
        "set multiplot layout 2,1",
        "set ylabel 'standard deviation'",
        "plot " + ", \\\n     ".join(
            f"'{tag}_spread.csv' using 1:5 with lines title '{tag} dimer'" for tag in tags
        ),
        "set ylabel 'mean +/- spread'",
        f"plot '< paste -d, {tags[0]}_mean.csv {tags[0]}_spread.csv' "
        "using 1:($5-$11):($5+$11) with filledcurves fs transparent solid 0.3 "
        f"title 'N_ab band', '{tags[0]}_mean.csv' using 1:5 with lines title 'N_ab mean'",
        "unset multiplot",
    ]
    (out_dir / "fig2.gp").write_text("\n".join(gp) + "\n")
    outputs.append("fig2.gp")
    return outputs, failures


def _figure_sweep(args, cfg: RunConfig, out_dir: Path, name: str,
                  variant: ReactionVariant, deltas) -> tuple[list[str], int]:
    outputs, failures = [], 0
    grid = np.linspace(0.1, 2.0, args.points)
    tags = []
    for delta in deltas:
        run_cfg = replace(cfg, variant=variant, delta=delta, chi_overrides={},
                          A_b=None, A_ab=None)
        params = _params(run_cfg)
        spec = SeedSpec(n_total=run_cfg.n_total, master_seed=run_cfg.seed)
        t_grid = np.linspace(run_cfg.t_start, run_cfg.t_start + 5.0 * run_cfg.tau, 301)
        result = sweep_imbalance(params, grid, spec, M=args.ensemble_size, t_grid=t_grid,
                                 delta_mode="auto" if run_cfg.Delta_mode == "auto" else "fixed")
        failures += len(result.failures)
        tag = f"{name}_delta{delta:+g}"
        _write_csv(out_dir / f"{tag}.csv", "R,final_conversion",
                   [result.r_grid, result.final_conversion])
        outputs.append(f"{tag}.csv")
        tags.append(tag)
    gp = [_GP_PREAMBLE.replace("time (1/lambda)", "imbalance R"),
          "set ylabel 'final dimer population'",
          "plot " + ", \\\n     ".join(
              f"'{tag}.csv' using 1:2 with linespoints title '{tag}'" for tag in tags)]
    (out_dir / f"{name}.gp").write_text("\n".join(gp) + "\n")
    outputs.append(f"{name}.gp")
    return outputs, failures


def figure_data(figure: str, cfg: RunConfig, out_dir: Path, args) -> tuple[list[str], int]:
    """Emit plot-ready CSVs plus a gnuplot script for one preset figure."""
    if figure == "fig2":
        return _figure_spreads(cfg, out_dir)
    if figure == "fig3a":
        return _figure_ensembles(cfg, out_dir, "fig3a", ReactionVariant.BOSONIC, (3.0, -3.0))
    if figure == "fig3b":
        return _figure_ensembles(cfg, out_dir, "fig3b", ReactionVariant.BOSONIC, (1.0, -1.0))
    if figure == "fig4a":
        return _figure_ensembles(cfg, out_dir, "fig4a", ReactionVariant.BOSE_FERMI, (3.0, -3.0))
    if figure == "fig4b":
        return _figure_ensembles(cfg, out_dir, "fig4b", ReactionVariant.BOSE_FERMI, (1.0, -1.0))
    if figure == "fig5a":
        return _figure_sweep(args, cfg, out_dir, "fig5a", ReactionVariant.BOSONIC, (-3.0, 3.0))
    if figure == "fig5b":
        return _figure_sweep(args, cfg, out_dir, "fig5b", ReactionVariant.BOSE_FERMI,
                             (3.0, -3.0, 1.0, -1.0))
    raise ConfigError(f"unknown figure {figure!r}; expected one of {FIGURES}")


def _cmd_figure(args, cfg: RunConfig, out_dir: Path) -> int:
    outputs, failures = figure_data(args.name, cfg, out_dir, args)
    params = cfg.system_params(Delta=_resolve_delta(cfg))
    _write_manifest(out_dir, f"figure:{args.name}", cfg, params, outputs,
                    failures=failures, pin_delta=cfg.Delta_mode == "explicit")
    print(f"{args.name}: {len(outputs)} files written")
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superchem",
        description="Coherent matter-wave abstraction-reaction simulator",
    )
    parser.add_argument("--config", metavar="PATH", help="configuration file (key = value lines)")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override one configuration key (repeatable)")
    parser.add_argument("--out", metavar="DIR", default=".", help="output directory")
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("simulate", help="integrate one (optionally seeded) trajectory")
    p.add_argument("--zero-seed", action="store_true",
                   help="start from exactly empty product modes")

    p = sub.add_parser("ensemble", help="seeded trajectory ensemble with mean/spread statistics")
    p.add_argument("--trajectories", type=int, default=None)
    p.add_argument("--master-seed", type=int, default=None)

    p = sub.add_parser("cpt", help="closed-form dark-state populations")
    p.add_argument("--R", default="0.5", help="comma-separated imbalance ratios")
    p.add_argument("--ratio", default="20", help="comma-separated Omega/lambda values")
    p.add_argument("--write", action="store_true", help="also write cpt.csv + manifest")

    p = sub.add_parser("sweep", help="final conversion versus initial imbalance")
    p.add_argument("--r-min", type=float, default=0.1)
    p.add_argument("--r-max", type=float, default=2.0)
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--ensemble-size", type=int, default=12)

    p = sub.add_parser("oracle", help="exact pair-basis evolution vs analytic moments")
    p.add_argument("--na0", type=int, default=32)
    p.add_argument("--nb20", type=int, default=32)
    p.add_argument("--statistics", choices=("bose", "fermi"), default="bose")
    p.add_argument("--gt-grid", default="0.05:0.3:6", help="gain grid start:stop:count")

    p = sub.add_parser("moments", help="closed-form pair statistics on a gain grid")
    p.add_argument("--statistics", choices=("bose", "fermi"), default="bose")
    p.add_argument("--x-min", type=float, default=0.0)
    p.add_argument("--x-max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--flavor", choices=("oracle", "paper"), default="oracle",
                   help="fermionic cross-moment convention")

    p = sub.add_parser("figure", help="emit plot-ready data + gnuplot script for a preset figure")
    p.add_argument("--name", choices=FIGURES, required=True)
    p.add_argument("--points", type=int, default=25, help="sweep grid size (fig5 presets)")
    p.add_argument("--ensemble-size", type=int, default=12,
                   help="trajectories per sweep point (fig5 presets)")

    return parser


_DISPATCH = {
    "simulate": _cmd_simulate,
    "ensemble": _cmd_ensemble,
    "cpt": _cmd_cpt,
    "sweep": _cmd_sweep,
    "oracle": _cmd_oracle,
    "moments": _cmd_moments,
    "figure": _cmd_figure,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 2

    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        source = Path(args.config).read_text() if args.config else ""
        cfg = load_config(source, overrides)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _DISPATCH[args.subcommand](args, cfg, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 4
    except (IntegrationError, EnsembleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())
