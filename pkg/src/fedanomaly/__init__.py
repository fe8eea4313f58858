"""Federated, differentially-private anomaly detection for tabular
accounting records, scored by bottleneck-autoencoder reconstruction loss."""

from .config import ExperimentConfig, config_digest, load_config, parse_config
from .data import (
    DatasetSchema,
    Label,
    PartitionPlan,
    RawDataset,
    inject_anomalies,
    load_csv,
    partition,
)
from .detector import FederatedReconstructionDetector
from .dp import DpConfig, clip_flat, dp_gradient, gaussian_noise
from .encoding import (
    ColumnMap,
    EncodedDataset,
    TabularEncoder,
    encode_dataset,
    load_dataset,
    save_dataset,
)
from .errors import (
    AggregationError,
    ConfigError,
    DataError,
    EvalError,
    FedAnomalyError,
    FederationError,
    InjectionError,
    NumericError,
    PartitionError,
    SchemaError,
    ShapeError,
)
from .federation import (
    ClientState,
    FederationConfig,
    FederationResult,
    RoundRecord,
    client_round_stream,
    client_update,
    fed_avg,
    run_federation,
    write_history_csv,
)
from .loss import ReconstructionLoss, reconstruction_loss
from .metrics import EvalReport, average_precision, evaluate, pr_curve
from .model import (
    SplitMask,
    autoencoder_specs,
    build_autoencoder,
    latent_codes,
    load_checkpoint,
    merge_params,
    n_autoencoder_params,
    save_checkpoint,
    score_dataset,
    split_params,
)
from .synthetic import make_synthetic, write_csv

__version__ = "0.1.0"

__all__ = [
    "AggregationError",
    "ClientState",
    "ColumnMap",
    "ConfigError",
    "DataError",
    "DatasetSchema",
    "DpConfig",
    "EncodedDataset",
    "EvalError",
    "EvalReport",
    "ExperimentConfig",
    "FedAnomalyError",
    "FederatedReconstructionDetector",
    "FederationConfig",
    "FederationError",
    "FederationResult",
    "InjectionError",
    "Label",
    "NumericError",
    "PartitionError",
    "PartitionPlan",
    "RawDataset",
    "ReconstructionLoss",
    "RoundRecord",
    "SchemaError",
    "ShapeError",
    "SplitMask",
    "TabularEncoder",
    "autoencoder_specs",
    "average_precision",
    "build_autoencoder",
    "clip_flat",
    "client_round_stream",
    "client_update",
    "config_digest",
    "dp_gradient",
    "encode_dataset",
    "evaluate",
    "fed_avg",
    "gaussian_noise",
    "inject_anomalies",
    "latent_codes",
    "load_checkpoint",
    "load_config",
    "load_csv",
    "load_dataset",
    "make_synthetic",
    "merge_params",
    "n_autoencoder_params",
    "parse_config",
    "partition",
    "pr_curve",
    "reconstruction_loss",
    "run_federation",
    "save_checkpoint",
    "save_dataset",
    "score_dataset",
    "split_params",
    "write_csv",
    "write_history_csv",
]
