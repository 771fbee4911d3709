"""Monte Carlo experiment harness: sweeps, CSV output, keyed seeding.

Every random draw comes from a generator keyed by (master seed, stream
tag, trial, ...), so results are order-independent and a rerun of the
same invocation reproduces the CSV bit for bit. Raw per-trial rows are
emitted unaggregated; summary statistics are a separate reducing pass so
the raw rows stay auditable.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from hashlib import sha256
from math import ceil
from pathlib import Path

import numpy as np

from . import beamtraining, channel, estimator, spectral, twoscale
from .config import SystemConfig

# Stream tags keying independent RNG substreams off the master seed.
_RB, _UR, _NOISE, _IA, _MODEL = 0, 1, 2, 3, 4

MODEL_IDS = {"nearfield": 0, "sparse": 1, "rayleigh": 2, "identity": 3}
METHOD_IDS = {"tsp": 0, "pwclra": 1, "clra": 2}

NMSE_COLUMNS = [
    "experiment", "sweep", "sweep_value", "method", "trial", "b_subframes",
    "snr_db", "ia_db", "nmse", "singular", "seed", "config_hash",
]
COND_COLUMNS = [
    "experiment", "model", "b_subframes", "trial", "kappa_decades",
    "singular", "seed", "config_hash",
]
EIGEN_COLUMNS = [
    "experiment", "model", "trial", "order", "zeta", "seed", "config_hash",
]
RUNTIME_COLUMNS = [
    "experiment", "m_ris", "q_pieces", "m_sub", "b_subframes",
    "median_seconds", "reps", "seed", "config_hash",
]
OVERHEAD_COLUMNS = [
    "experiment", "method", "b_subframes", "initial_pilots",
    "per_block_pilots", "seed", "config_hash",
]


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one (stream tag, indices...) slot."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    )


def _fmt(value) -> str:
    """Stable scalar formatting so reruns emit byte-identical CSV."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class ExperimentResult:
    """Raw rows of one experiment plus everything needed to rerun it."""

    experiment: str
    sweep_name: str
    sweep_values: list
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)
    trials: int = 0
    master_seed: int = 0
    config_snapshot: dict = field(default_factory=dict)
    config_hash: str = ""
    wall_time_s: float = 0.0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_fmt(v) for v in row])

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]


def check_schema(result: ExperimentResult) -> list[str]:
    """NaN is only tolerated in rows explicitly flagged singular."""
    problems = []
    singular_idx = (
        result.columns.index("singular") if "singular" in result.columns else None
    )
    for i, row in enumerate(result.rows):
        flagged = bool(singular_idx is not None and row[singular_idx])
        for col, value in zip(result.columns, row):
            if isinstance(value, float) and np.isnan(value) and not flagged:
                problems.append(f"row {i}: NaN in column {col} without singular flag")
    return problems


# ---------------------------------------------------------------------------
# Channel draws


def _draw_nearfield(
    config: SystemConfig, rng: np.random.Generator, rb=None
) -> channel.ChannelRealization:
    """Redraw until non-degenerate; the retry consumes the same stream, so
    the outcome is a deterministic function of the generator state."""
    realization = channel.assemble_channels(config, rng, rb=rb)
    while realization.degenerate:
        realization = channel.assemble_channels(config, rng, rb=rb)
    return realization


def _draw_model(
    model: str, config: SystemConfig, rng: np.random.Generator
) -> channel.ChannelRealization:
    if model == "nearfield":
        return _draw_nearfield(config, rng)
    realization = channel.sample_channel(config, model, rng)
    while realization.degenerate:
        realization = channel.sample_channel(config, model, rng)
    return realization


# ---------------------------------------------------------------------------
# Eigen-decay analysis


def run_eigen_analysis(
    config: SystemConfig,
    channel_models=("nearfield", "sparse", "rayleigh"),
    trials: int = 20,
    master_seed: int = 0,
) -> ExperimentResult:
    """Relative eigenvalue-decay curves of H_eff(0) per channel model."""
    unknown = set(channel_models) - set(MODEL_IDS)
    if unknown:
        raise ValueError(f"unknown channel models: {sorted(unknown)}")
    t0 = time.perf_counter()
    result = ExperimentResult(
        experiment="eigen",
        sweep_name="order",
        sweep_values=list(range(1, config.n_bs + 1)),
        columns=EIGEN_COLUMNS,
        trials=trials,
        master_seed=master_seed,
        config_snapshot=config.to_dict(),
        config_hash=config.config_hash(),
    )
    for model in channel_models:
        mid = MODEL_IDS[model]
        for trial in range(trials):
            rng = stream(master_seed, _MODEL, mid, trial)
            realization = _draw_model(model, config, rng)
            profile = spectral.eigen_decay_profile(realization.h_eff[0])
            for order, zeta in enumerate(profile, start=1):
                result.rows.append(
                    (
                        "eigen", model, trial, order, float(zeta),
                        master_seed, result.config_hash,
                    )
                )
    result.wall_time_s = time.perf_counter() - t0
    return result


def aggregate_eigen(result: ExperimentResult) -> dict[str, np.ndarray]:
    """Mean zeta curve per model, index = order - 1."""
    cols = result.columns
    model_i = cols.index("model")
    order_i = cols.index("order")
    zeta_i = cols.index("zeta")
    curves: dict[str, dict[int, list[float]]] = {}
    for row in result.rows:
        curves.setdefault(row[model_i], {}).setdefault(row[order_i], []).append(
            row[zeta_i]
        )
    return {
        model: np.array([np.mean(by_order[o]) for o in sorted(by_order)])
        for model, by_order in curves.items()
    }


# ---------------------------------------------------------------------------
# Condition-number sweep


def _condition_config(config: SystemConfig, model: str) -> SystemConfig:
    # The identity self-check channel needs square combiner-piece products,
    # i.e. m_sub == n_rf; repartition just for that model.
    if model == "identity":
        return replace(config, q_pieces=config.m_ris // config.n_rf)
    return config


def run_condition_sweep(
    config: SystemConfig,
    channel_models=("nearfield", "sparse", "rayleigh"),
    b_values=(1, 2, 4, 6),
    trials: int = 50,
    master_seed: int = 0,
) -> ExperimentResult:
    """Average Gram condition number (decades) per (model, subframe count).

    Condition numbers are measured per piece and averaged with singular
    pieces capped at spectral.CONDITION_CAP decades; a row's singular flag
    records whether any piece hit the cap.
    """
    unknown = set(channel_models) - set(MODEL_IDS)
    if unknown:
        raise ValueError(f"unknown channel models: {sorted(unknown)}")
    t0 = time.perf_counter()
    result = ExperimentResult(
        experiment="cond",
        sweep_name="b_subframes",
        sweep_values=list(b_values),
        columns=COND_COLUMNS,
        trials=trials,
        master_seed=master_seed,
        config_snapshot=config.to_dict(),
        config_hash=config.config_hash(),
    )
    for model in channel_models:
        cfg = _condition_config(config, model)
        mid = MODEL_IDS[model]
        for b in b_values:
            if not 1 <= b <= cfg.m_sub:
                continue
            schedule = beamtraining.build_schedule(cfg, b)
            for trial in range(trials):
                rng = stream(master_seed, _MODEL, mid, trial)
                realization = _draw_model(model, cfg, rng)
                pieces = [
                    realization.h_eff[0][:, sl]
                    for sl in twoscale.partition_columns(cfg.m_ris, cfg.q_pieces)
                ]
                stacks = estimator.sensing_blocks(schedule, pieces)
                kappas = []
                singular = False
                for q in range(cfg.q_pieces):
                    gram = estimator.gram_matrix(np.ascontiguousarray(stacks[:, q]))
                    decades = spectral.condition_decades(gram)
                    if not np.isfinite(decades):
                        singular = True
                    kappas.append(spectral.cap_condition(decades))
                result.rows.append(
                    (
                        "cond", model, b, trial, float(np.mean(kappas)),
                        int(singular), master_seed, result.config_hash,
                    )
                )
    result.wall_time_s = time.perf_counter() - t0
    return result


def aggregate_condition(result: ExperimentResult) -> dict[tuple[str, int], float]:
    """Mean capped condition decades per (model, b_subframes)."""
    cols = result.columns
    keys = [
        (row[cols.index("model")], row[cols.index("b_subframes")])
        for row in result.rows
    ]
    kappa_i = cols.index("kappa_decades")
    sums: dict[tuple[str, int], list[float]] = {}
    for key, row in zip(keys, result.rows):
        sums.setdefault(key, []).append(row[kappa_i])
    return {key: float(np.mean(vals)) for key, vals in sums.items()}


# ---------------------------------------------------------------------------
# NMSE sweeps


def _nominal_b_min(config: SystemConfig) -> int:
    """Subframe minimum assuming full-rank pieces (m_sub / n_rf, ceiled)."""
    return ceil(config.m_sub / min(config.n_rf, config.m_sub))


def _tsp_trial(
    config: SystemConfig,
    realization: channel.ChannelRealization,
    b_subframes: int,
    snr_db: float,
    ia_db,
    master_seed: int,
    trial: int,
) -> tuple[float, bool]:
    """One tsp trial: mean linear NMSE over the small-timescale blocks."""
    h0_hat = twoscale.perturb_initial(
        realization.h_eff[0], ia_db, stream(master_seed, _IA, trial)
    )
    decomp = twoscale.low_rank_decompose(h0_hat, config.q_pieces)
    schedule = beamtraining.build_schedule(config, b_subframes)
    sigma = beamtraining.calibrate_noise(realization, schedule, snr_db)
    errors = []
    singular = False
    for t in range(1, config.t_blocks):
        obs = beamtraining.simulate_and_despread(
            realization, schedule, t, sigma,
            stream(master_seed, _NOISE, METHOD_IDS["tsp"], trial, t),
        )
        d_hat, diags = estimator.estimate_small_timescale(
            schedule, decomp.pieces, obs
        )
        if any(not diag.unique for diag in diags):
            singular = True
        h_hat = twoscale.reconstruct_effective(decomp, d_hat)
        h_true = realization.h_eff[t]
        errors.append(
            np.linalg.norm(h_hat - h_true) ** 2 / np.linalg.norm(h_true) ** 2
        )
    return float(np.mean(errors)), singular


def _benchmark_trial(
    mode: str,
    config: SystemConfig,
    realization: channel.ChannelRealization,
    snr_db: float,
    ia_db,
    master_seed: int,
    trial: int,
) -> tuple[float, bool, int]:
    """One benchmark trial; returns (mean NMSE, singular flag, B used)."""
    h0_hat = twoscale.perturb_initial(
        realization.h_eff[0], ia_db, stream(master_seed, _IA, trial)
    )
    if mode == "pwclra":
        cfg = config
        decomp = twoscale.low_rank_decompose(h0_hat, cfg.q_pieces)
    else:
        cfg = replace(config, q_pieces=1)
        decomp = twoscale.low_rank_decompose(h0_hat, 1, rank=config.n_rf)
    subspaces = decomp.subspaces
    schedule = beamtraining.build_schedule(cfg, cfg.m_sub)
    bank = beamtraining.combiner_bank(cfg)
    sigma = beamtraining.calibrate_noise(
        realization, schedule, snr_db, combiners=bank
    )
    errors = []
    for t in range(1, cfg.t_blocks):
        _, z = beamtraining.full_sweep_observations(
            realization, cfg, t, sigma,
            stream(master_seed, _NOISE, METHOD_IDS[mode], trial, t),
        )
        est = estimator.benchmark_small_timescale(mode, subspaces, z, schedule, bank)
        h_true = realization.h_eff[t]
        errors.append(
            np.linalg.norm(est.reconstruction - h_true) ** 2
            / np.linalg.norm(h_true) ** 2
        )
    return float(np.mean(errors)), False, schedule.b_subframes


def run_nmse_sweep(
    config: SystemConfig,
    sweep_name: str,
    sweep_values,
    methods=("tsp",),
    trials: int = 200,
    master_seed: int = 0,
    snr_db: float = 20.0,
    b_factor: int = 2,
    ia_db="perfect",
) -> ExperimentResult:
    """NMSE Monte Carlo over one sweep axis.

    Axes: "overhead" (values are subframe counts B), "snr" (dB values),
    "n_rf" (RF chain counts; must divide n_bs), "ia" (initial-acquisition
    error levels, "perfect" or dB <= 0). The RIS-BS channel is drawn once
    and held fixed; the user-RIS sequence is redrawn each trial. Rows from
    underdetermined solves are flagged singular rather than dropped.
    """
    if sweep_name not in ("overhead", "snr", "n_rf", "ia"):
        raise ValueError(f"unknown sweep {sweep_name!r}")
    unknown = set(methods) - set(METHOD_IDS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    t0 = time.perf_counter()
    result = ExperimentResult(
        experiment=f"nmse-{sweep_name}",
        sweep_name=sweep_name,
        sweep_values=list(sweep_values),
        columns=NMSE_COLUMNS,
        trials=trials,
        master_seed=master_seed,
        config_snapshot=config.to_dict(),
        config_hash=config.config_hash(),
    )
    rb = channel.sample_rb_link(config, stream(master_seed, _RB))
    for value in sweep_values:
        cfg = config
        point_snr, point_ia = snr_db, ia_db
        if sweep_name == "n_rf":
            cfg = replace(config, n_rf=int(value))
        elif sweep_name == "snr":
            point_snr = float(value)
        elif sweep_name == "ia":
            point_ia = value if value == "perfect" else float(value)
        # For the RF-chain sweep B is pinned by the base config so points
        # differ only in combiner rows, not pilot budget.
        b_point = (
            int(value) if sweep_name == "overhead"
            else b_factor * _nominal_b_min(config)
        )
        for trial in range(trials):
            realization = _draw_nearfield(
                cfg, stream(master_seed, _UR, trial), rb=rb
            )
            for method in methods:
                if method == "tsp":
                    nmse, singular = _tsp_trial(
                        cfg, realization, b_point, point_snr, point_ia,
                        master_seed, trial,
                    )
                    b_used = b_point
                else:
                    nmse, singular, b_used = _benchmark_trial(
                        method, cfg, realization, point_snr, point_ia,
                        master_seed, trial,
                    )
                result.rows.append(
                    (
                        result.experiment, sweep_name, value, method, trial,
                        b_used, point_snr,
                        point_ia if isinstance(point_ia, str) else float(point_ia),
                        nmse, int(singular), master_seed, result.config_hash,
                    )
                )
    result.wall_time_s = time.perf_counter() - t0
    return result


def aggregate_nmse(result: ExperimentResult) -> list[dict]:
    """Reduce raw rows to per-(method, sweep value) statistics.

    Means are taken in the linear NMSE domain; the dB figure is
    10*log10(mean). Standard error is the linear-domain standard error of
    the mean.
    """
    cols = result.columns
    method_i, value_i, nmse_i = (
        cols.index("method"), cols.index("sweep_value"), cols.index("nmse"),
    )
    groups: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    for row in result.rows:
        key = (row[method_i], row[value_i])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row[nmse_i])
    summary = []
    for key in order:
        vals = np.array(groups[key])
        mean = float(np.mean(vals))
        stderr = (
            float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        )
        summary.append(
            {
                "method": key[0],
                "sweep_value": key[1],
                "trials": len(vals),
                "nmse_linear": mean,
                "stderr_linear": stderr,
                "nmse_db": 10.0 * np.log10(max(mean, 1e-30)),
            }
        )
    return summary


# ---------------------------------------------------------------------------
# Runtime table


def _runtime_hash(m: int, q: int, n_rf: int, reps: int) -> str:
    payload = json.dumps({"m": m, "q": q, "n_rf": n_rf, "reps": reps})
    return sha256(payload.encode()).hexdigest()[:12]


def run_runtime_table(
    m_values=(128, 256, 512),
    q_values=(1, 4, 16),
    n_rf: int = 16,
    n_bs: int = 128,
    reps: int = 3,
    master_seed: int = 0,
) -> ExperimentResult:
    """Median wall-clock seconds of a full multi-LS solve per (M, Q) cell.

    The timed region covers what the per-block estimator actually repeats:
    Gram assembly, right-hand-side accumulation, and the least-squares
    solve for all Q pieces. Inputs are synthetic full-rank problems at B = 2x
    the nominal minimum. Timing rows are inherently hardware-dependent and
    are the one output exempt from bit-identical reproduction.
    """
    t0 = time.perf_counter()
    result = ExperimentResult(
        experiment="runtime",
        sweep_name="m_ris",
        sweep_values=list(m_values),
        columns=RUNTIME_COLUMNS,
        trials=reps,
        master_seed=master_seed,
        config_snapshot={"n_rf": n_rf, "n_bs": n_bs},
        config_hash=_runtime_hash(0, 0, n_rf, reps),
    )
    for m in m_values:
        for q in q_values:
            if m % q:
                continue
            m_sub = m // q
            b = 2 * ceil(m_sub / min(n_rf, m_sub))
            rng = stream(master_seed, _MODEL, m, q)
            stacks = (
                rng.standard_normal((q, b, n_rf, m_sub))
                + 1j * rng.standard_normal((q, b, n_rf, m_sub))
            )
            zs = (
                rng.standard_normal((q, b, n_rf))
                + 1j * rng.standard_normal((q, b, n_rf))
            )
            times = []
            for _ in range(reps + 1):
                start = time.perf_counter()
                for piece in range(q):
                    stack = stacks[piece]
                    gram = estimator.gram_matrix(stack)
                    z_flat = zs[piece].reshape(-1)
                    rhs = stack.reshape(-1, m_sub).conj().T @ z_flat
                    problem = estimator.MultiLsProblem(
                        sensing=stack, gram=gram, rhs=rhs,
                        observations=z_flat, piece_index=piece,
                    )
                    estimator.solve_multi_ls(problem)
                times.append(time.perf_counter() - start)
            # first pass warms caches and BLAS threads; keep the rest
            median = float(np.median(times[1:]))
            result.rows.append(
                (
                    "runtime", m, q, m_sub, b, median, reps,
                    master_seed, _runtime_hash(m, q, n_rf, reps),
                )
            )
    result.wall_time_s = time.perf_counter() - t0
    return result


def runtime_grid(result: ExperimentResult) -> dict[tuple[int, int], float]:
    cols = result.columns
    m_i, q_i, s_i = (
        cols.index("m_ris"), cols.index("q_pieces"), cols.index("median_seconds"),
    )
    return {(row[m_i], row[q_i]): row[s_i] for row in result.rows}


# ---------------------------------------------------------------------------
# Overhead accounting


@dataclass(frozen=True)
class OverheadReport:
    method: str
    b_subframes: int | None
    initial_pilots: int
    per_block_pilots: int


def report_overhead(
    config: SystemConfig,
    method: str,
    b_subframes: int | None = None,
    rank: int | None = None,
) -> OverheadReport:
    """Pilot-slot accounting per coherence block.

    Initial acquisition always runs the orthogonal sweep Q*(N/N_RF) plus a
    full M-column sweep. Per small-timescale block: tsp spends Q*B slots
    (B subframes of Q symbols, M/N_RF at the nominal minimum), the
    piecewise benchmark a full M sweep, and the whole-channel benchmark
    ceil(rank/N_RF)*M with rank defaulting to N_RF.
    """
    if method not in METHOD_IDS:
        raise ValueError(f"unknown method {method!r}")
    initial = config.q_pieces * (config.n_bs // config.n_rf) + config.m_ris
    if method == "tsp":
        b = _nominal_b_min(config) if b_subframes is None else int(b_subframes)
        per_block = config.q_pieces * b
    elif method == "pwclra":
        b = None
        per_block = config.m_ris
    else:
        b = None
        r = config.n_rf if rank is None else int(rank)
        per_block = ceil(r / config.n_rf) * config.m_ris
    return OverheadReport(
        method=method,
        b_subframes=b,
        initial_pilots=initial,
        per_block_pilots=per_block,
    )


def overhead_result(
    config: SystemConfig,
    methods=("tsp", "pwclra", "clra"),
    b_subframes: int | None = None,
    master_seed: int = 0,
) -> ExperimentResult:
    result = ExperimentResult(
        experiment="overhead",
        sweep_name="method",
        sweep_values=list(methods),
        columns=OVERHEAD_COLUMNS,
        trials=0,
        master_seed=master_seed,
        config_snapshot=config.to_dict(),
        config_hash=config.config_hash(),
    )
    for method in methods:
        report = report_overhead(config, method, b_subframes=b_subframes)
        result.rows.append(
            (
                "overhead", method,
                report.b_subframes if report.b_subframes is not None else -1,
                report.initial_pilots, report.per_block_pilots,
                master_seed, result.config_hash,
            )
        )
    return result
