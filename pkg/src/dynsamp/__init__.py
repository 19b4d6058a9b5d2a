"""Sampling and recovery of diffusing graph signals.

A spectrally sparse, bandlimited initial state is observed at a few
randomly drawn (time, vertex) pairs while it diffuses, and recovered with
CoSaMP on a space-time dictionary. Sampling densities are chosen to
minimize the per-step coherence of that dictionary.
"""
__version__ = "0.1.0"

from .graph import (
    DisconnectedGraphWarning,
    Graph,
    GraphError,
    GraphFormatError,
    GraphGenerationError,
    build_laplacian,
    count_components,
    gen_community,
    gen_complete,
    gen_cycle,
    gen_path,
    graph_summary,
    is_connected,
    load_graph,
    parse_edge_list,
    save_graph,
)
from .spectral import (
    DiffusionModel,
    FilterDomainError,
    MultiplicityError,
    SpaceTimeDictionary,
    SparseSpectralCode,
    SpectralBasis,
    SpectralError,
    TimeGrid,
    build_dictionary,
    code_to_vertex,
    cycle_fourier_basis,
    diffusion_eigenvalues,
    eigendecompose,
    embed,
    evolve,
    f_norms,
    random_sparse_signal,
    synth_signal,
)
from .sampling import (
    CoherenceProfile,
    MeasurementOperator,
    SamplingDistribution,
    SamplingError,
    SamplingPlan,
    allocate_budget,
    appendix_bounds,
    apply_sampling,
    build_measurement,
    coherence,
    derive_seed,
    draw_samples,
    optimal_distribution,
    rip_sample_bound,
    uniform_distribution,
)
from .recovery import (
    MetricError,
    RecoveryConfig,
    RecoveryError,
    RecoveryResult,
    cosamp,
    error_ratio,
    hard_threshold,
    recover_signal,
    relative_error,
    sample_and_recover,
    support_least_squares,
)
