"""Command-line entry point: ``beamsweep {grid,reconstruct,experiment,predict}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, harness, sweep
from .array_model import ArrayGeometry, SincPattern, true_scm
from .snapshots import RngStream, generate_snapshots, save_snapshots

FLAG_KEYS = ("antennas", "alpha", "theta2_deg", "snapshots", "runs", "truncate", "snr_db", "seed", "out", "mode", "workers")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file; flags override it")
    p.add_argument("--antennas", type=int, help="number of ULA elements M")
    p.add_argument("--alpha", help="pattern constant(s), comma separated")
    p.add_argument("--theta2-deg", dest="theta2_deg", help="second-source DOA(s) in degrees")
    p.add_argument("--snapshots", type=int, help="snapshots N per beam sweep")
    p.add_argument("--runs", type=int, help="Monte-Carlo runs per curve point")
    p.add_argument("--truncate", help="T values: comma list, lo:hi ranges, or 'all'")
    p.add_argument("--snr-db", dest="snr_db", type=float, help="per-source SNR in dB")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", help="output file (experiment, predict) or directory (reconstruct)")
    p.add_argument("--mode", choices=harness.MODES, help="sampled or noise-free beam powers")
    p.add_argument("--workers", type=int, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamsweep", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("grid", help="print the beam grid and the diagonal of B^H B")
    g.add_argument("--antennas", type=int, default=16)

    r = sub.add_parser("reconstruct", help="run one trial and dump the SCMs")
    _add_common(r)

    e = sub.add_parser("experiment", help="NSE-vs-T curves as CSV")
    e.add_argument("figure", choices=["theta", "alpha"])
    _add_common(e)

    pr = sub.add_parser("predict", help="closed-form truncation loss and asymptotic MSE")
    _add_common(pr)
    return parser


def _spec(args, preset: str) -> harness.ExperimentSpec:
    flags = {k: getattr(args, k, None) for k in FLAG_KEYS}
    return harness.parse_config(args.config, flags, preset=preset)


def cmd_grid(args, out) -> None:
    geometry = ArrayGeometry(args.antennas)
    grid = sweep.make_grid(geometry.num_antennas)
    delta = sweep.compute_delta(sweep.build_sweep_matrix(geometry, grid))
    printed = sweep.printed_delta(geometry.num_antennas)
    out.write("q,sin_value,angle_deg\n")
    for q, (s, th) in enumerate(zip(grid.sin_values, grid.angles)):
        out.write(f"{q},{s:.12g},{math.degrees(th):.6f}\n")
    out.write("\nlag,delta,delta_linear_form\n")
    for k, d, p in zip(sweep.lag_axis(geometry.num_antennas), delta.diag, printed):
        out.write(f"{k},{d:.12g},{p:.12g}\n")


def cmd_reconstruct(args, out) -> None:
    spec = _spec(args, "theta")
    T = spec.t_values[0] if spec.truncations is not None else 0
    scenario = harness.theta_scenarios(spec)[0]
    geometry = spec.geometry
    pattern = SincPattern(scenario.alpha)
    scene = spec.scene(scenario)
    recon = sweep.Reconstructor(geometry)
    seed = harness.derive_seed(spec.base_seed, scenario.label, T, 0)
    block = None
    if spec.mode == "statistical":
        result = sweep.statistical_powers(geometry, pattern, scene, recon.grid, T)
    else:
        block = generate_snapshots(geometry, pattern, scene, spec.num_snapshots, RngStream(seed))
        result = sweep.truncated_sweep(block, geometry, recon.grid, T, scene.noise_power)
    R = true_scm(geometry, pattern, scene)
    R_hat = recon(result)
    report = analysis.error_report(R_hat, R)
    if spec.out:
        d = Path(spec.out)
        d.mkdir(parents=True, exist_ok=True)
        sweep.export_matrix_csv(R, d / "true_scm.csv")
        sweep.export_matrix_csv(R_hat, d / "reconstructed_scm.csv")
        sweep.export_lags_csv(sweep.reconstruct_lags(result.powers, recon.B, recon.delta), d / "lags.csv")
        sweep.export_sweep_csv(result, recon.grid, d / "sweep.csv")
        if block is not None:
            save_snapshots(block, d / "snapshots.bin")
    out.write(f"scenario={scenario.label} alpha={scenario.alpha:g} T={T} seed={seed}\n")
    out.write(f"se={report.squared_error:.6e} nse={report.nse:.6e}\n")


def cmd_experiment(args, out) -> None:
    spec = _spec(args, args.figure)
    run = harness.experiment_fig_theta if args.figure == "theta" else harness.experiment_fig_alpha
    table = run(spec)
    if spec.out:
        harness.emit_csv(table, spec.out)
    else:
        harness.write_table(table, out)


def cmd_predict(args, out) -> None:
    spec = _spec(args, "theta")
    scenario = harness.theta_scenarios(spec)[0]
    geometry = spec.geometry
    pattern = SincPattern(scenario.alpha)
    scene = spec.scene(scenario)
    grid = sweep.make_grid(geometry.num_antennas)
    rows = analysis.prediction_rows(analysis.predict_mse(scene, pattern, grid, spec.num_snapshots))
    snap = analysis.snap_to_grid(scene, grid)
    for l, (q, dist) in enumerate(zip(snap.indices, snap.distances)):
        rows += [(f"source{l}_grid_index", q), (f"source{l}_snap_distance", dist)]
    ts = spec.t_values if spec.truncations is not None else range(spec.Q)
    for T in ts:
        plan = sweep.make_plan(grid, geometry.num_antennas, T, scene.noise_power)
        rows.append((f"truncation_se[T={T}]", analysis.predict_truncation_se(scene, pattern, grid, plan)))
        rows.append((f"truncation_se_oracle[T={T}]", analysis.truncation_se_oracle(geometry, scene, pattern, grid, plan)))
    rows.append(("reference_norm_sq", float(np.sum(np.abs(true_scm(geometry, pattern, scene)) ** 2))))
    if spec.out:
        analysis.export_predictions_csv(rows, spec.out)
    else:
        out.write("term,value\n")
        for term, value in rows:
            out.write(f"{term},{value:.17g}\n")


COMMANDS = {
    "grid": cmd_grid,
    "reconstruct": cmd_reconstruct,
    "experiment": cmd_experiment,
    "predict": cmd_predict,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except (harness.ConfigError, sweep.DiagonalityViolation, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
