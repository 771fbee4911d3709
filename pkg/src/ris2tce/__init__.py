"""Two-timescale channel estimation for RIS-aided near-field MIMO.

The package splits along the physical pipeline: channel synthesis
(near-field LoS with visual-region blocking, plus far-field and Rayleigh
comparisons), spectral analysis of the effective channel, the
two-timescale decomposition, constant-modulus beam-training simulation,
the multi-LS small-timescale estimator with its benchmarks, and a
reproducible experiment harness behind the ``ris2tce`` CLI.
"""

from .channel import (
    ChannelRealization,
    RisBsLink,
    assemble_channels,
    bs_array,
    load_realization,
    los_matrix,
    los_vector,
    mimo_advanced_rayleigh_distance,
    mimo_rayleigh_distance,
    ris_array,
    sample_channel,
    sample_comparison_channel,
    sample_rb_link,
    sample_vr,
    save_realization,
)
from .config import (
    DEFAULT_TRIALS,
    PRESETS,
    SystemConfig,
    config_from_dict,
    load_config,
    preset,
    save_config,
)
from .beamtraining import (
    PilotObservations,
    ReflectionSchedule,
    build_schedule,
    calibrate_noise,
    combiner_bank,
    despread,
    full_sweep_observations,
    mean_combined_signal_power,
    measure_snr,
    piece_signals,
    schedule_to_csv,
    simulate_and_despread,
    simulate_subframes,
)
from .estimator import (
    BenchmarkEstimate,
    MultiLsProblem,
    SolveDiagnostics,
    b_min,
    beam_gram_factor,
    benchmark_small_timescale,
    build_problems,
    estimate_small_timescale,
    gram_matrix,
    sensing_matrix,
    sensing_blocks,
    solve_multi_ls,
    write_diagnostics_csv,
)
from .experiments import (
    ExperimentResult,
    OverheadReport,
    aggregate_condition,
    aggregate_eigen,
    aggregate_nmse,
    check_schema,
    overhead_result,
    report_overhead,
    run_condition_sweep,
    run_eigen_analysis,
    run_nmse_sweep,
    run_runtime_table,
    runtime_grid,
)
from .geometry import ArrayGeometry, distances_to_point, pairwise_distances, ula
from .spectral import (
    cap_condition,
    condition_decades,
    eigen_decay_profile,
    gram_eigenvalues,
    hermitian_spectrum,
    numerical_rank,
)
from .twoscale import (
    PiecewiseDecomposition,
    low_rank_decompose,
    partition_columns,
    perturb_initial,
    reconstruct_effective,
    small_timescale_truth,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
