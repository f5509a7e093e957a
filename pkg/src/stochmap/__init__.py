"""Stochastic mapping of trait substitution histories on phylogenies."""

__version__ = "0.1.0"

from .benchmark import (
    BenchmarkRow,
    fit_loglog_slope,
    interleaved_seconds_per_iteration,
    load_scenario_file,
    median_seconds_per_iteration,
    run_cell,
    run_scenarios,
    scenario_cells,
    timed_sampling_run,
    write_benchmark_csv,
)
from .ctmc import (
    RateMatrix,
    UniformizedKernel,
    build_equal_rates,
    build_gy94,
    build_tridiagonal,
    expected_transitions,
    full_pattern,
    infer_pattern,
    kernel_power_times_vector,
    load_rate_file,
    matrix_exponential,
    scale_to_expected_transitions,
    uniformize,
    write_rate_file,
)
from .diagnostics import (
    ComparisonRow,
    EssReport,
    compare_distributions,
    ess,
    ess_batch_means,
    ess_report,
    monitored_statistics,
    normalized_time,
    write_comparison_csv,
)
from .expsampler import (
    endpoint_probability_series,
    run_exp_sampler,
    sample_endpoint_conditioned_path,
    sample_history_exp,
)
from .history import (
    AugmentedHistory,
    HistorySummary,
    SubstitutionHistory,
    SummarySequence,
    as_augmented,
    drop_virtual_jumps,
    read_history_file,
    read_tip_data,
    summarize,
    write_history_file,
    write_summary_csv,
    write_tip_data,
)
from .mcmc import (
    ChainState,
    compute_partial_likelihoods,
    initialize_chain,
    resample_virtual_jumps,
    run_chain,
    sample_branch_segments,
    sample_internal_nodes,
    sample_root_state,
    sweep,
)
from .simulate import (
    initialize_history,
    simulate_history,
)
from .tree import (
    NewickError,
    Phylogeny,
    parse_newick,
    read_newick_file,
    serialize_newick,
    simulate_yule_tree,
    total_tree_length,
    write_newick_file,
)
