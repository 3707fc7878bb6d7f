"""Laboratory for weight-structure formation in layered ReLU networks.

Five parts: netcore (training), pathform (path sums and update couplings),
dynamics (reduced ODE models), morpho (structure metrics), datagen
(synthetic clusters). The cli module ties them into file-based experiments.
"""

from __future__ import annotations

from .datagen import ClusterSpec, gen_clusters, load_csv, save_csv, split
from .dynamics import (
    AmplitudeState,
    AmplitudeTrajectory,
    CoupledTrajectory,
    IntralayerTrajectory,
    LayerStackState,
    LayerState,
    SimConfig,
    amplitude_rhs,
    coupled_rhs,
    derive_seed,
    ensemble_amplitude_finals,
    ensemble_intralayer_finals,
    growth_criterion,
    intralayer_rhs,
    linear_perturbation_rhs,
    rk_step,
    simulate_amplitude,
    simulate_coupled,
    simulate_intralayer,
    write_trajectory_csv,
)
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateLayerError,
    DivergenceError,
    DomainError,
    MorpholabError,
    ParseError,
    PreconditionError,
    ShapeError,
    UndefinedCorrelationError,
)
from .morpho import (
    ContingencyTable2x2,
    CorrelationEstimate,
    MorphologyReport,
    StructureThresholds,
    accessible_nodes,
    bimodality_coefficient,
    build_report,
    connectivities,
    embedding_dimension,
    entropy_profile,
    fisher_exact,
    fisher_z_interval,
    increment_autocorrelation,
    layer_entropy,
    pearson,
    pooled_increment_autocorrelation,
    report_to_dict,
    structure_classifier,
)
from .netcore import (
    Dataset,
    LayeredNetwork,
    NetworkArch,
    SnapshotSeries,
    TrainConfig,
    accuracy,
    backprop_gradient,
    forward,
    forward_batch,
    init_network,
    load_snapshots,
    loss_mse,
    save_snapshots,
    train,
)
from .pathform import (
    CouplingConstant,
    PathSet,
    UTerm,
    compute_U,
    coupling_adjacent,
    coupling_ratio,
    coupling_separated,
    enumerate_paths,
    path_activity_table,
    path_gradient,
    path_output,
)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeState",
    "AmplitudeTrajectory",
    "CapacityError",
    "ClusterSpec",
    "ConfigError",
    "ContingencyTable2x2",
    "CorrelationEstimate",
    "CoupledTrajectory",
    "CouplingConstant",
    "Dataset",
    "DegenerateLayerError",
    "DivergenceError",
    "DomainError",
    "IntralayerTrajectory",
    "LayerStackState",
    "LayerState",
    "LayeredNetwork",
    "MorphologyReport",
    "MorpholabError",
    "NetworkArch",
    "ParseError",
    "PathSet",
    "PreconditionError",
    "ShapeError",
    "SimConfig",
    "SnapshotSeries",
    "StructureThresholds",
    "TrainConfig",
    "UTerm",
    "UndefinedCorrelationError",
    "accessible_nodes",
    "accuracy",
    "amplitude_rhs",
    "backprop_gradient",
    "bimodality_coefficient",
    "build_report",
    "compute_U",
    "connectivities",
    "coupled_rhs",
    "coupling_adjacent",
    "coupling_ratio",
    "coupling_separated",
    "derive_seed",
    "embedding_dimension",
    "ensemble_amplitude_finals",
    "ensemble_intralayer_finals",
    "entropy_profile",
    "enumerate_paths",
    "fisher_exact",
    "fisher_z_interval",
    "forward",
    "forward_batch",
    "gen_clusters",
    "growth_criterion",
    "increment_autocorrelation",
    "init_network",
    "intralayer_rhs",
    "layer_entropy",
    "linear_perturbation_rhs",
    "load_csv",
    "load_snapshots",
    "loss_mse",
    "path_activity_table",
    "path_gradient",
    "path_output",
    "pearson",
    "pooled_increment_autocorrelation",
    "report_to_dict",
    "rk_step",
    "save_csv",
    "save_snapshots",
    "simulate_amplitude",
    "simulate_coupled",
    "simulate_intralayer",
    "split",
    "structure_classifier",
    "train",
    "write_trajectory_csv",
]
