"""Eigenvector localization in graph Laplacians and the robustness of
second-order oscillator networks under rank-one dynamic perturbations."""

__version__ = "0.1.0"

from .errors import (
    AmbiguousMatchError,
    DegenerateSpectrumError,
    NumericError,
    ResolventSingularError,
    StaleDestabilizerError,
    UnstableSystemError,
    ValidationError,
)
from .graphs import (
    Graph,
    LaplacianMatrix,
    build_laplacian,
    gen_banded_path,
    graph_distance,
    is_connected,
    read_graph,
    write_graph,
)
from .spectral import (
    ClassifierParams,
    DecayFit,
    LocalizationReport,
    SecondOrderModes,
    Spectrum,
    classify_localization,
    decay_fit,
    eig_sym,
    inverse_participation_ratio,
    peak_set,
    second_order_eigs,
    spectral_coordinate,
)
from .perturbation import (
    Edge,
    GlobalNode,
    LocalNode,
    LocalReciprocal,
    PerturbationVectors,
    fd_sensitivity_oracle,
    first_order_sensitivity,
    parse_scenario,
    perturbed_laplacian,
    scenario_sensitivity,
    scenario_vectors,
    sensitivity_profile,
    worst_case_edge_sensitivity,
    worst_case_node_sensitivity,
)
from .frequency import (
    PspecGrid,
    StateSpace,
    assemble_first_order,
    assemble_second_order,
    eval_grid,
    eval_transfer,
    hinf_norm,
    pbh_zero_mode_check,
    precompute_factorization,
    rhp_clearance,
    robust_margin,
)
from .smallgain import (
    AllPass,
    Delay,
    Destabilizer,
    StaticComplex,
    allpass_destabilizer,
    delay_destabilizer,
    delta_response,
    static_destabilizer,
    verify_destabilization,
)
from .simulate import (
    AllPassSpec,
    DelaySpec,
    SimConfig,
    StaticReal,
    Trajectory,
    Verdict,
    oscillation_frequency,
    simulate,
    stability_verdict,
    sync_metric,
)
from .pipeline import ContrastSummary, ExperimentSpec, margin_contrast, run_experiment
