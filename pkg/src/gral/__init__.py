"""Range-free localization of drifting sensors in tree-shaped pipe networks."""

__version__ = "0.1.0"

from .graph import (
    EnvironmentGraph,
    Gateway,
    GraphError,
    GraphPosition,
    Junction,
    Link,
    build_graph,
    load_graph,
)
from .packages import (
    Checkpoint,
    GatewayObservation,
    LocalizedMeasurement,
    NodeContact,
    Package,
    StreamFormatError,
    parse_package_stream,
    serialize_packages,
    strongest,
)
from .epochs import (
    Epoch,
    EpochKind,
    EpochSet,
    classify,
    integrate,
    integrate_stream,
    is_complete,
    merge_same_gateway,
    resolve_positions,
)
from .localize import (
    VARIANTS,
    BackendState,
    apply_checkpoints,
    baseline_localize,
    build_state,
    interpolate_epoch,
    issue_checkpoints,
    localize_node,
    rectify_paths,
    run_pipeline,
)
from .sim import (
    Insertion,
    InstanceResult,
    ScenarioError,
    ScenarioSpec,
    load_scenario,
    make_scenario,
    run_instance,
)
from .metrics import ErrorSample, VariantResult, mae, normalized_mae, rmse, run_experiment

__all__ = [
    "EnvironmentGraph",
    "Gateway",
    "GraphError",
    "GraphPosition",
    "Junction",
    "Link",
    "build_graph",
    "load_graph",
    "Checkpoint",
    "GatewayObservation",
    "LocalizedMeasurement",
    "NodeContact",
    "Package",
    "StreamFormatError",
    "parse_package_stream",
    "serialize_packages",
    "strongest",
    "Epoch",
    "EpochKind",
    "EpochSet",
    "classify",
    "integrate",
    "integrate_stream",
    "is_complete",
    "merge_same_gateway",
    "resolve_positions",
    "VARIANTS",
    "BackendState",
    "apply_checkpoints",
    "baseline_localize",
    "build_state",
    "interpolate_epoch",
    "issue_checkpoints",
    "localize_node",
    "rectify_paths",
    "run_pipeline",
    "Insertion",
    "InstanceResult",
    "ScenarioError",
    "ScenarioSpec",
    "load_scenario",
    "make_scenario",
    "run_instance",
    "ErrorSample",
    "VariantResult",
    "mae",
    "normalized_mae",
    "rmse",
    "run_experiment",
]
