"""Bifurcating autoregressions with missing data: simulation, estimation,
deviation bounds, and Monte Carlo experiments on binary genealogies."""

from .bar import (
    DEAD,
    BarParams,
    InitialLaw,
    NoiseSpec,
    PopulationSample,
    read_sample_fixture,
    sample_pair_noise,
    simulate_population,
    state_bound,
    triangle,
    write_sample_fixture,
)
from .bounds import (
    BoundConstants,
    Regime,
    a_r_term,
    bound_centered,
    bound_conditional,
    bound_theta,
    bound_uncentered,
    calibrate_cprime,
    classify_regime,
    h_r,
    r0_threshold,
)
from .chain import (
    CoefficientLaw,
    GapCurve,
    MomentBars,
    RateFit,
    chain_step,
    draw_coefficients,
    empirical_Qk_gap,
    ergodicity_alpha,
    estimate_mu_f,
    fit_geometric_rate,
    simulate_chain,
    stationary_moments,
    truncated_second_moment,
)
from .config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    load_config,
    validate_config,
)
from .estimator import (
    COMPONENT_NAMES,
    ClassFit,
    DegenerateClass,
    EstimateUnavailableError,
    RegressionFunctionals,
    ThetaEstimate,
    b_n_target,
    estimation_error,
    lse,
    regression_functionals,
)
from .experiments import (
    DeviationEstimate,
    ExcludedPoint,
    ExperimentPlan,
    FitResult,
    NoMass,
    StatFunction,
    clopper_pearson,
    decay_fit,
    mc_conditional_deviation,
    mc_deviation,
    mc_gw_lln,
    mc_theta_deviation,
    resolve_mu,
)
from .offspring import (
    CellKind,
    OffspringLaw,
    expected_sizes,
    generating_function,
    mean_offspring,
)
from .reports import (
    json_bytes,
    read_report,
    sanitize,
    write_csv,
    write_json,
    write_manifest,
)
from .rng import derive_rng, replicate_rng
from .stats import (
    MASK_ALL,
    MASK_BOTH,
    MASK_NEW,
    MASK_OLD,
    CellFunction,
    SetKind,
    TriangleFunction,
    bar_avg,
    labels_of_set,
    m_sum,
    tilde_avg,
    w_proxy,
)
from .tree import (
    GwTree,
    classify_cells,
    generation_nodes,
    generations_of,
    read_tree_fixture,
    sample_generation_sizes,
    sample_tree,
    tree_nodes,
    write_tree_fixture,
)

__version__ = "0.1.0"
