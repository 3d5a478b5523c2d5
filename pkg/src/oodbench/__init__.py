"""Out-of-distribution evaluation of embedding-based affinity scorers.

The package builds cluster-holdout splits of protein-ligand complex
collections, trains small MLP scorers on precomputed embeddings under
stratified k-fold cross-validation, applies limited-data strategies
(target-site validation and few-shot fine-tuning), and reports scoring,
docking, and screening metrics alongside 2-d embedding maps.
"""

__version__ = "0.1.0"

from .data import (
    AffinityLabel,
    ComplexRecord,
    Dataset,
    IngestReport,
    MeasurementKind,
    SimilarityRecord,
    as_embedding,
    ingest_dataset,
    pk_from_concentration,
    read_similarity_table,
)
from .errors import (
    ConfigError,
    IngestError,
    MissingEmbeddingError,
    ModelFileError,
    OodbenchError,
    PrerequisiteError,
    SplitError,
    TrainingError,
    UndefinedMetricError,
    ValidationError,
)
from .metrics import (
    DecoyEntry,
    DecoySet,
    EntryKind,
    MetricReport,
    TargetMetrics,
    build_report,
    docking_success_rate,
    enrichment_factor,
    pearson,
    read_decoy_table,
    rmse,
)
from .projection import Coloring, ProjectionResult, project_tsne, render_projection
from .scorers import (
    Activation,
    ScorerConfig,
    ScorerKind,
    TrainedScorer,
    build_features,
    fit,
    load_scorer,
    predict,
    save_scorer,
)
from .splits import (
    FilterRule,
    SplitManifest,
    apply_clean_filter,
    build_ood_split,
    holdout_limited,
    stratified_kfold,
    validate_manifest,
)
from .synthetic import (
    GeneratorSpec,
    GroundTruth,
    LabelModel,
    expected_behavior_check,
    generate,
    write_dataset_csv,
)
from .training import (
    FinetuneConfig,
    Regime,
    SourceSelection,
    TrainedEnsemble,
    cross_validate,
    ensemble_predict,
    finetune,
    track_curves,
    train_with_target_validation,
)

__all__ = [
    "__version__",
    # data
    "AffinityLabel",
    "ComplexRecord",
    "Dataset",
    "IngestReport",
    "MeasurementKind",
    "SimilarityRecord",
    "as_embedding",
    "ingest_dataset",
    "pk_from_concentration",
    "read_similarity_table",
    # errors
    "ConfigError",
    "IngestError",
    "MissingEmbeddingError",
    "ModelFileError",
    "OodbenchError",
    "PrerequisiteError",
    "SplitError",
    "TrainingError",
    "UndefinedMetricError",
    "ValidationError",
    # metrics
    "DecoyEntry",
    "DecoySet",
    "EntryKind",
    "MetricReport",
    "TargetMetrics",
    "build_report",
    "docking_success_rate",
    "enrichment_factor",
    "pearson",
    "read_decoy_table",
    "rmse",
    # projection
    "Coloring",
    "ProjectionResult",
    "project_tsne",
    "render_projection",
    # scorers
    "Activation",
    "ScorerConfig",
    "ScorerKind",
    "TrainedScorer",
    "build_features",
    "fit",
    "load_scorer",
    "predict",
    "save_scorer",
    # splits
    "FilterRule",
    "SplitManifest",
    "apply_clean_filter",
    "build_ood_split",
    "holdout_limited",
    "stratified_kfold",
    "validate_manifest",
    # synthetic
    "GeneratorSpec",
    "GroundTruth",
    "LabelModel",
    "expected_behavior_check",
    "generate",
    "write_dataset_csv",
    # training
    "FinetuneConfig",
    "Regime",
    "SourceSelection",
    "TrainedEnsemble",
    "cross_validate",
    "ensemble_predict",
    "finetune",
    "track_curves",
    "train_with_target_validation",
]
