"""Command-line front end: reproducible experiment runs emitting CSV
artifacts, a JSON run manifest, and optional figures next to the data.

Exit codes: 0 success, 2 configuration error, 3 numerical
non-convergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, Experiment, config_hash, derive_seed,
                     load_config, with_scenario)
from . import channel, figures, optimizer, rates, simulator


class NonConvergence(RuntimeError):
    pass


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header, rows):
    """Single-writer CSV with a fixed column order and repr floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(out: Path, subcommand: str, exp: Experiment, seed: int,
                    started: float, artifacts):
    manifest = {
        "subcommand": subcommand,
        "config_hash": config_hash(exp),
        "seed": seed,
        "tool_version": __version__,
        "wall_clock_s": round(time.time() - started, 3),
        "artifacts": [a.name for a in artifacts],
    }
    with open(out / f"{subcommand.replace('-', '_')}_manifest.json", "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_experiment(args) -> Experiment:
    exp = load_config(args.config) if args.config else Experiment()
    exp.validate()
    if getattr(args, "omega_grid", None):
        grid = tuple(float(x) for x in args.omega_grid.split(","))
        exp = with_scenario(exp, omega_grid=grid)
    return exp


def _parse_populations(spec: str):
    out = []
    for item in spec.split(","):
        p, b, c = (int(x) for x in item.strip().split("-"))
        out.append((p, b, c))
    return out


def _rate_curve_rows(curve: rates.RateCurve):
    for e in curve.entries:
        yield (e.omega, e.lambda_delta, e.lambda_sigma, e.lambda_theta,
               e.lambda_total, curve.provenance)


RATE_HEADER = ["omega", "lambda_delta", "lambda_sigma", "lambda_theta",
               "lambda_total", "provenance"]


def cmd_rates(args, exp: Experiment, out: Path):
    curve = rates.build_rate_curve(exp, seed=args.seed,
                                   n_realizations=args.n_realizations)
    path = out / "rates.csv"
    write_csv(path, RATE_HEADER, _rate_curve_rows(curve))
    arts = [path]
    if args.figures:
        fig = out / "rates.png"
        figures.rate_curve_figure([("analytic", curve)], fig)
        arts.append(fig)
    return arts


def _empirical_to_curve(runs, exp: Experiment, seed: int) -> rates.RateCurve:
    by_omega = {}
    for r in runs:
        by_omega.setdefault(r.omega, []).append(r)
    entries = []
    for omega in sorted(by_omega):
        group = by_omega[omega]
        mean = {c: float(np.mean([g.rates[c] for g in group]))
                for c in simulator.EVENT_CLASSES}
        entries.append(rates.RateEntry(omega, mean["position"], mean["speed"],
                                       mean["orientation"]))
    return rates.RateCurve(entries=tuple(entries), provenance="empirical",
                           seed=seed, n_realizations=len(runs),
                           scenario_hash=config_hash(exp))


def cmd_simulate(args, exp: Experiment, out: Path):
    runs = simulator.empirical_curve(exp, seed=args.seed,
                                     duration=args.duration,
                                     warmup=args.warmup,
                                     repetitions=args.repetitions,
                                     jobs=args.jobs)
    path = out / "simulate.csv"
    header = ["omega", "repetition", "duration", "warmup", "n_p",
              "count_position", "count_speed", "count_orientation",
              "count_timer", "rate_position", "rate_speed",
              "rate_orientation", "rate_timer", "rate_total"]
    rows = []
    reps = args.repetitions
    for idx, run in enumerate(runs):
        rep = idx % reps
        r = run.rates
        rows.append((run.omega, rep, run.duration, run.warmup, run.n_p,
                     run.counts["position"], run.counts["speed"],
                     run.counts["orientation"], run.counts["timer"],
                     r["position"], r["speed"], r["orientation"], r["timer"],
                     run.rate_total))
    write_csv(path, header, rows)
    arts = [path]
    if args.events:
        ev_path = out / "events.csv"
        ev_runs = [simulator.run_simulation(exp, omega, args.duration,
                                            args.warmup,
                                            derive_seed(args.seed, i, 0),
                                            collect_events=True)
                   for i, omega in enumerate(exp.scenario.omega_grid)]
        ev_rows = [(t, ped, cls, run.omega)
                   for run in ev_runs for (t, ped, cls) in run.events]
        write_csv(ev_path, ["time", "pedestrian", "class", "omega"], ev_rows)
        arts.append(ev_path)
    if args.figures:
        fig = out / "simulate.png"
        figures.rate_curve_figure(
            [("simulated", _empirical_to_curve(runs, exp, args.seed))], fig)
        arts.append(fig)
    return arts


def cmd_validate(args, exp: Experiment, out: Path):
    runs = simulator.empirical_curve(exp, seed=args.seed,
                                     duration=args.duration,
                                     warmup=args.warmup,
                                     repetitions=args.repetitions,
                                     jobs=args.jobs)
    curve = rates.build_rate_curve(exp, seed=args.seed,
                                   n_realizations=args.n_realizations)
    table = simulator.compare_rates(runs, curve)
    p_path = out / "validate_percentiles.csv"
    write_csv(p_path,
              ["trigger", "p25", "p50", "p75", "p100", "conservative_above_0p1hz"],
              [(cls,
                table.percentiles[cls][25], table.percentiles[cls][50],
                table.percentiles[cls][75], table.percentiles[cls][100],
                all(ok for (w, ok) in table.conservatism[cls] if w > 0.1))
               for cls in ("position", "speed", "orientation")])
    d_path = out / "validate_detail.csv"
    rows = []
    for cls in ("position", "speed", "orientation"):
        for i, w in enumerate(table.omegas):
            rows.append((cls, w, table.analytic[cls][i],
                         table.empirical_mean[cls][i],
                         table.empirical_se[cls][i],
                         table.conservatism[cls][i][1]))
    write_csv(d_path, ["trigger", "omega", "analytic", "empirical_mean",
                       "empirical_se", "conservative"], rows)
    arts = [p_path, d_path]
    if args.figures:
        fig = out / "validate.png"
        figures.validation_figure(table, fig)
        arts.append(fig)
    return arts


def cmd_pdr(args, exp: Experiment, out: Path):
    lams = [float(x) for x in args.sweep_lambda.split(",")] \
        if args.sweep_lambda else [exp.scenario.background_rate]
    ns = [int(x) for x in args.sweep_n.split(",")] \
        if args.sweep_n else [exp.scenario.total_stations]
    rows = []
    fig_rows = []
    all_converged = True
    for n in ns:
        for lam in lams:
            res = channel.fixed_point_tau(lam, n, exp.channel)
            all_converged &= res.converged
            mc_pdr = mc_ci = ""
            fig_row = {"big_lambda": lam, "n": n, "pdr": res.pdr}
            if args.mc:
                mc_pdr, mc_ci = channel.monte_carlo_pdr(
                    lam, n, exp.channel, sim_duration=args.mc_duration,
                    seed=derive_seed(args.seed, n, int(lam * 1e6)),
                    replications=args.replications)
                fig_row.update(mc_pdr=mc_pdr, mc_ci=mc_ci)
            rows.append((lam, n, res.tau, res.pdr, mc_pdr, mc_ci))
            fig_rows.append(fig_row)
    path = out / "pdr.csv"
    write_csv(path, ["lambda_total_channel", "n", "tau", "pdr", "mc_pdr",
                     "mc_ci"], rows)
    arts = [path]
    if args.figures:
        fig = out / "pdr.png"
        figures.pdr_figure(fig_rows, fig,
                           x_key="big_lambda" if len(lams) > 1 else "n")
        arts.append(fig)
    if not all_converged:
        raise NonConvergence("fixed point failed to converge on the sweep")
    return arts


def cmd_channel_mc(args, exp: Experiment, out: Path):
    lams = [float(x) for x in args.sweep_lambda.split(",")] \
        if args.sweep_lambda else [exp.scenario.background_rate]
    rows = []
    for i, lam in enumerate(lams):
        mc_pdr, mc_ci = channel.monte_carlo_pdr(
            lam, exp.scenario.total_stations, exp.channel,
            sim_duration=args.mc_duration, seed=derive_seed(args.seed, i),
            replications=args.replications)
        rows.append((lam, exp.scenario.total_stations, args.mc_duration,
                     args.replications, mc_pdr, mc_ci))
    path = out / "channel_mc.csv"
    write_csv(path, ["big_lambda", "n", "sim_duration", "replications",
                     "mc_pdr", "mc_ci"], rows)
    return [path]


def cmd_pipg(args, exp: Experiment, out: Path):
    lams = np.logspace(np.log10(args.lambda_lo), np.log10(args.lambda_hi),
                       args.points)
    curve = optimizer.pipg_curve(exp.scenario, exp.channel, lams,
                                 scenario_hash=config_hash(exp))
    path = out / "pipg.csv"
    write_csv(path, ["lambda_p", "expected_pipg", "pdr"],
              [(e.lambda_p, e.expected_pipg, e.pdr) for e in curve.entries])
    arts = [path]
    if args.figures:
        fig = out / "pipg.png"
        sc = exp.scenario
        figures.pipg_figure([(f"{sc.n_p}-{sc.n_b}-{sc.n_c}", curve)], fig)
        arts.append(fig)
    return arts


def cmd_optimize(args, exp: Experiment, out: Path):
    populations = _parse_populations(args.populations) if args.populations \
        else [(exp.scenario.n_p, exp.scenario.n_b, exp.scenario.n_c)]
    rows = []
    fig_rows = []
    for (n_p, n_b, n_c) in populations:
        sub = with_scenario(exp, n_p=n_p, n_b=n_b, n_c=n_c)
        curve = rates.build_rate_curve(sub, seed=args.seed,
                                       n_realizations=args.n_realizations)
        res = optimizer.optimal_sampling(sub.scenario, curve, sub.channel,
                                         lambda_lo=args.lambda_lo,
                                         lambda_hi=args.lambda_hi)
        minima = ";".join(f"{l:.6g}:{v:.6g}" for l, v in res.local_minima)
        rows.append((n_p, n_b, n_c, res.omega_star, res.lambda_min,
                     res.pipg_at_star, res.pipg_at_reference_10hz, minima,
                     res.bracket.lambda_left, res.bracket.lambda_peak,
                     res.bracket.lambda_right, res.bracket.unimodal))
        fig_rows.append({"n_p": n_p, "n_b": n_b, "n_c": n_c,
                         "omega_star": res.omega_star,
                         "pipg_at_star": res.pipg_at_star,
                         "pipg_at_10hz": res.pipg_at_reference_10hz})
    path = out / "optimize.csv"
    write_csv(path, ["n_p", "n_b", "n_c", "omega_star", "lambda_min",
                     "pipg_at_star", "pipg_at_10hz", "local_minima",
                     "bracket_left", "bracket_peak", "bracket_right",
                     "unimodal"], rows)
    arts = [path]
    if args.figures:
        fig = out / "optimize.png"
        figures.optimize_figure(fig_rows, fig)
        arts.append(fig)
    return arts


_COMMANDS = {
    "rates": cmd_rates,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "pdr": cmd_pdr,
    "channel-mc": cmd_channel_mc,
    "pipg": cmd_pipg,
    "optimize": cmd_optimize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vamopt",
        description="Pedestrian awareness-message rates, channel contention "
                    "and sampling-rate optimization.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None,
                       help="output directory (default $VAMOPT_OUTDIR or ./out)")
        p.add_argument("--omega-grid", default=None,
                       help="comma-separated sampling rates overriding the config")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--figures", action="store_true",
                       help="render PNG figures next to the CSV output")

    p = sub.add_parser("rates", help="analytic rate curve over the omega grid")
    common(p)
    p.add_argument("--n-realizations", type=int, default=10_000)

    p = sub.add_parser("simulate", help="empirical rates from the street simulator")
    common(p)
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--warmup", type=float, default=100.0)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--events", action="store_true",
                   help="also write the per-message event log")

    p = sub.add_parser("validate", help="simulate, then compare with the analytic curve")
    common(p)
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--warmup", type=float, default=100.0)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--n-realizations", type=int, default=10_000)

    p = sub.add_parser("pdr", help="delivery-ratio sweep of the node model")
    common(p)
    p.add_argument("--sweep-lambda", default=None,
                   help="comma-separated aggregate rates [msg/s]")
    p.add_argument("--sweep-n", default=None,
                   help="comma-separated station counts")
    p.add_argument("--mc", action="store_true",
                   help="also run the Monte Carlo oracle per point")
    p.add_argument("--mc-duration", type=float, default=60.0)
    p.add_argument("--replications", type=int, default=8)

    p = sub.add_parser("channel-mc", help="Monte Carlo channel oracle only")
    common(p)
    p.add_argument("--sweep-lambda", default=None)
    p.add_argument("--mc-duration", type=float, default=60.0)
    p.add_argument("--replications", type=int, default=8)

    p = sub.add_parser("pipg", help="expected inter-packet gap vs pedestrian rate")
    common(p)
    p.add_argument("--lambda-lo", type=float, default=1e-2)
    p.add_argument("--lambda-hi", type=float, default=1e2)
    p.add_argument("--points", type=int, default=400)

    p = sub.add_parser("optimize", help="per-scenario optimal sampling rate")
    common(p)
    p.add_argument("--populations", default=None,
                   help="comma-separated P-B-C triples, e.g. 48-24-24,48-48-48")
    p.add_argument("--lambda-lo", type=float, default=1e-3)
    p.add_argument("--lambda-hi", type=float, default=5.0)
    p.add_argument("--n-realizations", type=int, default=10_000)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the config-error code
        return int(exc.code or 0)
    started = time.time()
    try:
        exp = _load_experiment(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or os.environ.get("VAMOPT_OUTDIR", "out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        artifacts = _COMMANDS[args.subcommand](args, exp, out)
        _write_manifest(out, args.subcommand, exp, args.seed, started, artifacts)
    except NonConvergence as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
