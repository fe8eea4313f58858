"""Estimator-style facade over the federated training loop.

`FederatedReconstructionDetector` follows the scikit-learn contract:
constructor stores hyperparameters verbatim (so get_params/set_params/clone
work), `fit` runs the federated simulation on an already-encoded matrix, and
`score_samples` returns negated reconstruction losses (higher = more
normal), matching the sign convention of sklearn's anomaly detectors.

The functional API in `federation`/`experiment` remains the primary path to
file artifacts; this class is the in-memory, pipeline-friendly veneer over
the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dp import DpConfig
from .errors import ConfigError, ShapeError
from .federation import FederationConfig, run_federation
from .loss import ReconstructionLoss
from .model import SplitMask, score_dataset
from .validation import as_matrix, check_finite


@dataclass
class _MatrixView:
    matrix: np.ndarray


class FederatedReconstructionDetector(BaseEstimator):
    """Bottleneck-autoencoder anomaly scorer trained by federated averaging.

    Parameters mirror FederationConfig/DpConfig/SplitMask/ReconstructionLoss
    one-to-one; validation happens at fit time, per sklearn convention.
    """

    def __init__(
        self,
        clients: int = 1,
        partitions: int = 1,
        rounds: int = 1,
        iterations: int = 1,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        adam_epsilon: float = 1e-8,
        optimizer: str = "adam",
        dp_enabled: bool = False,
        clip_norm: float = 1.0,
        noise_multiplier: float = 0.0,
        cut_encoder: int = 0,
        cut_decoder: int = 0,
        categorical_weight: float = 2.0 / 3.0,
        clamp_epsilon: float = 1e-6,
        early_stop_patience: int = 10,
        early_stop_rel_tol: float = 1e-4,
        seed: int = 0,
    ):
        self.clients = clients
        self.partitions = partitions
        self.rounds = rounds
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_epsilon = adam_epsilon
        self.optimizer = optimizer
        self.dp_enabled = dp_enabled
        self.clip_norm = clip_norm
        self.noise_multiplier = noise_multiplier
        self.cut_encoder = cut_encoder
        self.cut_decoder = cut_decoder
        self.categorical_weight = categorical_weight
        self.clamp_epsilon = clamp_epsilon
        self.early_stop_patience = early_stop_patience
        self.early_stop_rel_tol = early_stop_rel_tol
        self.seed = seed

    # -- configuration assembly -------------------------------------------

    def _federation_config(self) -> FederationConfig:
        return FederationConfig(
            clients=self.clients,
            partitions=self.partitions,
            rounds=self.rounds,
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_epsilon=self.adam_epsilon,
            optimizer=self.optimizer,
            dp=DpConfig(
                clip_norm=self.clip_norm,
                noise_multiplier=self.noise_multiplier,
                enabled=self.dp_enabled,
            ),
            split=SplitMask(
                cut_encoder=self.cut_encoder, cut_decoder=self.cut_decoder
            ),
            early_stop_patience=self.early_stop_patience,
            early_stop_rel_tol=self.early_stop_rel_tol,
            seed=self.seed,
        )

    # -- sklearn API -------------------------------------------------------

    def fit(self, X, y=None, *, column_map=None, partition=None, on_round=None):
        """Train on an encoded matrix.

        column_map describes categorical/numeric column spans for the mixed
        loss (None scores every column as numeric). partition assigns each
        row to a client in [0, partitions); None requires partitions=1.
        """
        X = as_matrix(X, "X")
        check_finite(X, "X")
        cfg = self._federation_config()
        if partition is None:
            if cfg.partitions != 1:
                raise ConfigError(
                    f"partitions={cfg.partitions} needs an explicit per-row "
                    "partition assignment"
                )
            assignments = np.zeros(X.shape[0], dtype=np.int64)
        else:
            assignments = np.asarray(partition, dtype=np.int64)
            if assignments.shape != (X.shape[0],):
                raise ShapeError(
                    f"partition must assign each of the {X.shape[0]} rows, "
                    f"got shape {assignments.shape}"
                )
            if assignments.size and not (
                0 <= assignments.min() and assignments.max() < cfg.partitions
            ):
                raise ConfigError(
                    f"partition values must lie in [0, {cfg.partitions})"
                )
        if column_map is not None and column_map.width != X.shape[1]:
            raise ShapeError(
                f"column_map width {column_map.width} vs matrix width {X.shape[1]}"
            )

        parts = [
            _MatrixView(X[assignments == p]) for p in range(cfg.partitions)
        ]
        loss = ReconstructionLoss(
            column_map=column_map,
            categorical_weight=self.categorical_weight,
            clamp_epsilon=self.clamp_epsilon,
        )
        result = run_federation(cfg, parts, loss, on_round=on_round)

        self.n_features_in_ = X.shape[1]
        self.column_map_ = column_map
        self.loss_ = loss
        self.central_public_ = result.central_public
        self.history_ = result.history
        self.stopped_early_ = result.stopped_early
        self.clients_ = result.clients
        self.merged_params_ = result.merged(client_id=0)
        return self

    def _check_fitted(self):
        if not hasattr(self, "merged_params_"):
            raise NotFittedError(
                "this FederatedReconstructionDetector is not fitted yet; "
                "call fit first"
            )

    def reconstruction_losses(self, X) -> np.ndarray:
        """Per-row combined reconstruction loss under the client-0 view of
        the trained model (central public + client-0 private parameters)."""
        self._check_fitted()
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"X has {X.shape[1]} columns, the model was fitted on "
                f"{self.n_features_in_}"
            )
        return score_dataset(X, self.merged_params_, self.loss_)

    def score_samples(self, X) -> np.ndarray:
        """Negated reconstruction losses: higher means more normal."""
        return -self.reconstruction_losses(X)
