"""sklearn-style front door for the inversion network.

ContourRegressor treats X as a list of (T_i, D) feature matrices and y as a
list of (T_i, 800) normalized contour targets, one entry per sequence. It
composes with FeatureScaler / ContourScaler the way sklearn estimators
compose with preprocessing transformers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from ..corpus import ContourScaler, ContourSequence, DEFAULT_FRAME_RATE_HZ
from ..errors import ContractError
from ..validation import check_sequence_list
from .model import ModelConfig, ModelParams, model_forward
from .train import TrainConfig, TrainHistory, evaluate_mse, train_model


class ContourRegressor(BaseEstimator, RegressorMixin):
    """Dense-Dense-BiLSTM-BiLSTM-Dense sequence regressor trained with Adam,
    early-stopped on a validation split, best epoch restored."""

    def __init__(
        self,
        dense_units: int = 300,
        lstm_units: int = 300,
        output_dim: int = 800,
        learning_rate: float = 1e-3,
        max_epochs: int = 300,
        batch_sequences: int = 10,
        patience: int = 10,
        seed: int = 0,
        loss: str = "mse",
    ):
        self.dense_units = dense_units
        self.lstm_units = lstm_units
        self.output_dim = output_dim
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.batch_sequences = batch_sequences
        self.patience = patience
        self.seed = seed
        self.loss = loss

    def _configs(self, input_dim: int) -> tuple[ModelConfig, TrainConfig]:
        mcfg = ModelConfig(
            input_dim=input_dim,
            dense_units=self.dense_units,
            lstm_units=self.lstm_units,
            output_dim=self.output_dim,
            seed=self.seed,
        )
        tcfg = TrainConfig(
            max_epochs=self.max_epochs,
            batch_sequences=self.batch_sequences,
            patience=self.patience,
            seed=self.seed,
            learning_rate=self.learning_rate,
            loss=self.loss,
        )
        return mcfg, tcfg

    def fit(self, X, y, validation_data=None, epoch_callback=None):
        """Fit on training sequences; validation_data=(X_val, y_val) drives
        early stopping and is required."""
        X = check_sequence_list(X, "X")
        y = check_sequence_list(y, "y")
        if validation_data is None:
            raise ContractError(
                "ContourRegressor.fit requires validation_data=(X_val, y_val)"
            )
        X_val = check_sequence_list(validation_data[0], "X_val")
        y_val = check_sequence_list(validation_data[1], "y_val")
        mcfg, tcfg = self._configs(X[0].shape[1])
        self.params_, self.history_ = train_model(
            X, y, X_val, y_val, mcfg, tcfg, epoch_callback=epoch_callback
        )
        self.model_config_ = mcfg
        self.n_features_in_ = X[0].shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("ContourRegressor is not fitted")

    def predict(self, X) -> list[np.ndarray]:
        self._check_fitted()
        X = check_sequence_list(X, "X")
        return [model_forward(self.params_, x) for x in X]

    def score(self, X, y) -> float:
        """Negative entry-weighted MSE (higher is better, sklearn-style)."""
        self._check_fitted()
        X = check_sequence_list(X, "X")
        y = check_sequence_list(y, "y")
        return -evaluate_mse(self.params_, X, y)


def predict_contours(
    params: ModelParams,
    features: np.ndarray,
    contour_scaler: ContourScaler,
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ,
) -> ContourSequence:
    """Forward pass followed by denormalization back to pixel space."""
    z = model_forward(params, features)
    return contour_scaler.inverse_transform(z, frame_rate_hz)
