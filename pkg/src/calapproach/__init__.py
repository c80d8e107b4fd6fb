"""Calibration, internal regret and approachability on finite repeated games."""

__version__ = "0.1.0"

from .adversaries import IID, AdaptiveGreedy, Constant, Periodic, parse_adversary
from .approach import (
    BestResponseTable,
    BlackwellPlayer,
    ExcludabilityWitness,
    VectorPayoffGame,
    blackwell_step,
    build_best_response_table,
    expected_payoff,
    halfspace_reduction,
    interval_halfspaces,
    run_blackwell,
    run_calibrated_approach,
    run_halfspace,
    solve_matrix_game,
)
from .calibration import Calibrator
from .errors import (
    AssumptionCheckFailed,
    ConfigError,
    EmptyHistory,
    EstimatorUndefined,
    GridBudgetExceeded,
    NotApproachable,
    NotNonnegative,
    OutcomeOutOfRange,
    PendingObservation,
    PreimageEmpty,
    ProjectionDidNotConverge,
    SeparationFailed,
)
from .harness import Config, run_experiment
from .partial import (
    BRGrid,
    Optimistic,
    PMState,
    SignalStructure,
    WorstCase,
    actual_payoff_regret_report,
    build_br_grid,
    doubling_wrapper,
    estimator,
    external_regret_report,
    flag_of,
    internal_regret_report,
    optimistic_O,
    perturb,
    pm_step,
    range_projection,
    run_partial_monitoring,
    worst_case_W,
)
from .regret import (
    RegretEngine,
    instant_regret,
    invariant_probability,
    run_internal_regret,
)
from .simplex import (
    FiniteGrid,
    Halfspaces,
    OracleTarget,
    project_convex,
    project_linear_image,
    project_orthant,
    simplex_grid,
)
from .trace import MetricTrace, export, load_csv, load_jsonl
