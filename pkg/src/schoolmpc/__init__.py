"""Reduced-order prediction and stimulus control for zonal fish schools."""

__version__ = "0.1.0"

from .errors import (
    AssumptionViolatedError,
    CoincidentFishError,
    ConfigError,
    DimensionMismatchError,
    InvariantViolationError,
    NotStronglyConnectedError,
    SchoolError,
    WeightError,
    ZeroArgumentError,
    ZeroOrientationDegreeError,
    ZeroVectorError,
)
from .model import (
    Forces,
    ModelParams,
    NeighborSets,
    NoiseModel,
    SchoolState,
    classify_neighbors,
    compute_forces,
    mass_center,
    mean_heading,
    polarization,
    step,
)
from .network import (
    OrientationGraph,
    build_graph,
    eigenvector_centrality,
    is_strongly_connected,
)
from .reduction import (
    DiagnosticReport,
    FrozenAggregates,
    ReducedState,
    aggregation_residual,
    centrality_weight_bound,
    diagnostics,
    freeze_aggregates,
    heading_residual_check,
    heading_residual_checks,
    init_reduced,
    orientation_deviation_check,
    orientation_deviation_checks,
    predict_step,
    static_weight_bound,
    uniform_weights,
)
from .mpc import (
    ControllerConfig,
    MpcResult,
    ReferenceSphere,
    StimulusSchedule,
    horizon_cost,
    optimize_schedule,
    run_mpc,
)
from .config import ScenarioConfig, builtin_scenario, default_scenario, load_scenario
from .vec import (
    EPS_ZERO,
    angle_between,
    normalization_residual,
    normalize,
    rotate_toward,
    weighted_sum,
)

__all__ = [name for name in dir() if not name.startswith("_")]
