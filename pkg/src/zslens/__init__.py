"""Attribute-space classifier diagnosis and steering engine.

Train a mapping from features to an attribute space shared across classes,
classify unseen classes by signature compatibility, decompose every
misprediction across attributes, aggregate the decompositions into
per-category over/under-prediction scores, project category signatures to
2D for overview, and steer the model by reweighting attributes and
retraining.
"""

from .data import (
    Dataset,
    SignatureMatrix,
    Split,
    generate_synthetic,
    load_dataset,
    load_split_config,
    make_split,
    save_dataset,
    standardize_signatures,
)
from .diagnostics import (
    AttributeOrdering,
    DiagnosticsSummary,
    MispredictionRecord,
    aggregate_scores,
    attribute_contributions,
    collect_mispredictions,
    export_diagnostics,
    sort_attributes,
    stacking_order,
)
from .errors import (
    CheckpointError,
    DataFormatError,
    ProjectionDiverged,
    TrainingDiverged,
    ZslensError,
)
from .model import (
    MappingModel,
    Metrics,
    TrainConfig,
    TrainReport,
    compatibility,
    evaluate,
    forward,
    forward_batch,
    load_checkpoint,
    loss_and_grad,
    predict,
    predict_batch,
    save_checkpoint,
    train,
    weighted_compatibility,
)
from .projection import (
    ProjectionResult,
    TsneConfig,
    compute_affinities,
    conditional_affinities,
    default_perplexity,
    project,
)
from .steering import (
    RetrainJob,
    SteeringState,
    adjust_weight,
    diag_class_counts,
    diagnose,
    replay,
    retrain,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "SignatureMatrix",
    "Split",
    "generate_synthetic",
    "load_dataset",
    "load_split_config",
    "make_split",
    "save_dataset",
    "standardize_signatures",
    "AttributeOrdering",
    "DiagnosticsSummary",
    "MispredictionRecord",
    "aggregate_scores",
    "attribute_contributions",
    "collect_mispredictions",
    "export_diagnostics",
    "sort_attributes",
    "stacking_order",
    "ZslensError",
    "DataFormatError",
    "CheckpointError",
    "TrainingDiverged",
    "ProjectionDiverged",
    "MappingModel",
    "Metrics",
    "TrainConfig",
    "TrainReport",
    "compatibility",
    "evaluate",
    "forward",
    "forward_batch",
    "load_checkpoint",
    "loss_and_grad",
    "predict",
    "predict_batch",
    "save_checkpoint",
    "train",
    "weighted_compatibility",
    "ProjectionResult",
    "TsneConfig",
    "compute_affinities",
    "conditional_affinities",
    "default_perplexity",
    "project",
    "RetrainJob",
    "SteeringState",
    "adjust_weight",
    "diag_class_counts",
    "diagnose",
    "replay",
    "retrain",
    "__version__",
]
