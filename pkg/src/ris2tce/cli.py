"""Command-line entry point for the experiment harness.

Each subcommand runs one experiment, prints an aggregated summary to
stdout, and optionally writes the raw per-trial rows as CSV. With
--verify the invocation additionally self-checks its invariants
(schema, bit-identical reruns, trial-count consistency) and exits
nonzero on any violation.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import experiments
from .config import DEFAULT_TRIALS, PRESETS, SystemConfig, load_config, preset


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _ia_list(text: str):
    values = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        values.append("perfect" if tok == "perfect" else float(tok))
    return values


def _str_list(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file overriding the preset")
    parser.add_argument(
        "--preset", choices=sorted(PRESETS), default="desk",
        help="named system configuration (default: desk)",
    )
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--trials", type=int, help="Monte Carlo trial count")
    parser.add_argument("--out", help="write raw per-trial rows to this CSV path")
    parser.add_argument(
        "--verify", action="store_true",
        help="self-check invariants; nonzero exit on any failure",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ris2tce",
        description="Two-timescale RIS channel estimation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="eigenvalue-decay curves per channel model")
    _add_common(p)
    p.add_argument(
        "--models", type=_str_list, default=["nearfield", "sparse", "rayleigh"]
    )

    p = sub.add_parser("cond", help="Gram condition numbers vs subframe count")
    _add_common(p)
    p.add_argument(
        "--models", type=_str_list, default=["nearfield", "sparse", "rayleigh"]
    )
    p.add_argument("--b-values", type=_int_list, default=[1, 2, 4, 6])

    p = sub.add_parser("nmse-overhead", help="NMSE vs pilot overhead (subframes)")
    _add_common(p)
    p.add_argument("--methods", type=_str_list, default=["tsp"])
    p.add_argument(
        "--b-values", type=_int_list, default=None,
        help="subframe counts; default {1,2,3}x the nominal minimum",
    )
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--ia", default="perfect")

    p = sub.add_parser("nmse-snr", help="NMSE vs pilot SNR")
    _add_common(p)
    p.add_argument("--methods", type=_str_list, default=["tsp"])
    p.add_argument("--snr-values", type=_float_list, default=[0.0, 10.0, 20.0, 30.0])
    p.add_argument("--b-factor", type=int, default=2)
    p.add_argument("--ia", default="perfect")

    p = sub.add_parser("nmse-rf", help="NMSE vs RF chain count")
    _add_common(p)
    p.add_argument("--methods", type=_str_list, default=["tsp"])
    p.add_argument("--rf-values", type=_int_list, default=[4, 8, 16])
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--ia", default="perfect")
    p.add_argument(
        "--b-factor", type=int, default=4,
        help="subframes as a multiple of the base config's nominal minimum",
    )

    p = sub.add_parser("nmse-ia", help="NMSE vs initial-acquisition accuracy")
    _add_common(p)
    p.add_argument("--methods", type=_str_list, default=["tsp"])
    p.add_argument(
        "--ia-values", type=_ia_list, default=[-10.0, -20.0, -30.0, "perfect"]
    )
    p.add_argument("--snr", type=float, default=30.0)
    p.add_argument("--b-factor", type=int, default=4)

    p = sub.add_parser("overhead", help="pilot-slot accounting per method")
    _add_common(p)
    p.add_argument("--methods", type=_str_list, default=["tsp", "pwclra", "clra"])
    p.add_argument("--b", type=int, default=None, help="tsp subframe count")

    p = sub.add_parser("runtime", help="multi-LS solver timing grid")
    _add_common(p)
    p.add_argument("--m-values", type=_int_list, default=[128, 256, 512])
    p.add_argument("--q-values", type=_int_list, default=[1, 4, 16])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--n-rf", type=int, default=16)

    return parser


def _resolve_config(args) -> SystemConfig:
    if args.config:
        return load_config(args.config)
    return preset(args.preset)


def _trials(args, fallback: int) -> int:
    if args.trials is not None:
        if args.trials < 1:
            raise ValueError("--trials must be at least 1")
        return args.trials
    return fallback


def _run(args) -> experiments.ExperimentResult:
    config = _resolve_config(args)
    seed = args.seed
    if args.command == "eigen":
        return experiments.run_eigen_analysis(
            config, args.models, trials=_trials(args, 20), master_seed=seed
        )
    if args.command == "cond":
        return experiments.run_condition_sweep(
            config, args.models, b_values=args.b_values,
            trials=_trials(args, 50), master_seed=seed,
        )
    if args.command == "nmse-overhead":
        b0 = experiments._nominal_b_min(config)
        values = args.b_values if args.b_values else [b0, 2 * b0, 3 * b0]
        return experiments.run_nmse_sweep(
            config, "overhead", values, methods=args.methods,
            trials=_trials(args, DEFAULT_TRIALS[args.preset]), master_seed=seed,
            snr_db=args.snr, ia_db=_ia_list(str(args.ia))[0],
        )
    if args.command == "nmse-snr":
        return experiments.run_nmse_sweep(
            config, "snr", args.snr_values, methods=args.methods,
            trials=_trials(args, DEFAULT_TRIALS[args.preset]), master_seed=seed,
            b_factor=args.b_factor, ia_db=_ia_list(str(args.ia))[0],
        )
    if args.command == "nmse-rf":
        return experiments.run_nmse_sweep(
            config, "n_rf", args.rf_values, methods=args.methods,
            trials=_trials(args, DEFAULT_TRIALS[args.preset]), master_seed=seed,
            snr_db=args.snr, b_factor=args.b_factor,
            ia_db=_ia_list(str(args.ia))[0],
        )
    if args.command == "nmse-ia":
        return experiments.run_nmse_sweep(
            config, "ia", args.ia_values, methods=args.methods,
            trials=_trials(args, DEFAULT_TRIALS[args.preset]), master_seed=seed,
            snr_db=args.snr, b_factor=args.b_factor,
        )
    if args.command == "overhead":
        return experiments.overhead_result(
            config, methods=args.methods, b_subframes=args.b, master_seed=seed
        )
    if args.command == "runtime":
        return experiments.run_runtime_table(
            m_values=args.m_values, q_values=args.q_values, n_rf=args.n_rf,
            reps=args.reps, master_seed=seed,
        )
    raise ValueError(f"unknown command {args.command!r}")


def _summarize(result: experiments.ExperimentResult) -> None:
    print(f"# {result.experiment} (seed={result.master_seed}, "
          f"trials={result.trials}, {result.wall_time_s:.2f}s)")
    if result.experiment.startswith("nmse"):
        for entry in experiments.aggregate_nmse(result):
            print(
                f"  {entry['method']:>7}  {result.sweep_name}="
                f"{entry['sweep_value']!s:>8}  NMSE {entry['nmse_db']:8.2f} dB"
                f"  (linear {entry['nmse_linear']:.3e}"
                f" +/- {entry['stderr_linear']:.1e}, n={entry['trials']})"
            )
    elif result.experiment == "cond":
        for (model, b), kappa in sorted(experiments.aggregate_condition(result).items()):
            print(f"  {model:>10}  B={b:<3d}  mean condition {kappa:6.2f} decades")
    elif result.experiment == "eigen":
        for model, curve in experiments.aggregate_eigen(result).items():
            drop = next(
                (i + 1 for i, z in enumerate(curve) if z < -6.0), len(curve)
            )
            head = ", ".join(f"{z:.2f}" for z in curve[:8])
            print(f"  {model:>10}  first order below -6 decades: {drop}; "
                  f"head: [{head}, ...]")
    elif result.experiment == "runtime":
        for (m, q), seconds in sorted(experiments.runtime_grid(result).items()):
            print(f"  M={m:<4d} Q={q:<3d}  {seconds:.6f} s")
    elif result.experiment == "overhead":
        cols = result.columns
        for row in result.rows:
            b = row[cols.index("b_subframes")]
            extra = f" (B={b})" if b != -1 else ""
            print(
                f"  {row[cols.index('method')]:>7}{extra}: "
                f"initial {row[cols.index('initial_pilots')]}, "
                f"per block {row[cols.index('per_block_pilots')]}"
            )


def _verify(args, result: experiments.ExperimentResult) -> list[str]:
    failures = [f"schema: {p}" for p in experiments.check_schema(result)]
    if result.experiment == "runtime":
        grid = experiments.runtime_grid(result)
        ms = sorted({m for m, _ in grid})
        qs = sorted({q for _, q in grid})
        for q in qs:
            col = [grid[(m, q)] for m in ms if (m, q) in grid]
            if any(b < a for a, b in zip(col, col[1:])):
                failures.append(f"runtime not non-decreasing in M at Q={q}: {col}")
        for m in ms:
            row = [grid[(m, q)] for q in qs if (m, q) in grid]
            if any(b > a for a, b in zip(row, row[1:])):
                failures.append(f"runtime not non-increasing in Q at M={m}: {row}")
        return failures
    rerun = _run(args)
    if rerun.rows != result.rows:
        failures.append("rerun with identical arguments produced different rows")
    if result.experiment.startswith("nmse") and result.trials >= 4:
        trial_i = result.columns.index("trial")
        half = experiments.ExperimentResult(
            experiment=result.experiment,
            sweep_name=result.sweep_name,
            sweep_values=result.sweep_values,
            columns=result.columns,
            rows=[r for r in result.rows if r[trial_i] < result.trials // 2],
            trials=result.trials // 2,
            master_seed=result.master_seed,
        )
        full_stats = {
            (e["method"], str(e["sweep_value"])): e
            for e in experiments.aggregate_nmse(result)
        }
        for entry in experiments.aggregate_nmse(half):
            ref = full_stats[(entry["method"], str(entry["sweep_value"]))]
            # the half mean is one standard error wide on its own, so allow
            # twice the combined width before calling the estimate unstable
            budget = 2.0 * max(
                np.hypot(ref["stderr_linear"], entry["stderr_linear"]), 1e-30
            )
            if abs(ref["nmse_linear"] - entry["nmse_linear"]) > budget:
                failures.append(
                    f"nmse consistency: {entry['method']} at "
                    f"{entry['sweep_value']} moved more than the sampling "
                    "error allows when trials doubled"
                )
    return failures


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = _run(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        result.to_csv(args.out)
        print(f"wrote {len(result.rows)} rows to {args.out}")
    _summarize(result)
    if args.verify:
        failures = _verify(args, result)
        if failures:
            for failure in failures:
                print(f"verify FAILED: {failure}", file=sys.stderr)
            return 1
        print("verify OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
