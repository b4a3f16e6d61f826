"""Training loop: shuffled sequence batches, per-sequence gradient
accumulation, early stopping on validation MSE with best-epoch restore.

A batch of sequences contributes one optimizer step. The batch loss is the
mean squared error over every entry of the batch, so per-sequence gradients
are accumulated with frame-count weights; for equal-length sequences this
reduces to a plain average. Shuffling, initialization, and accumulation
order are all fixed by the seed, so a rerun reproduces bit-identical
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._rng import Xoshiro256pp, derive_seed
from ..errors import ContractError, FormatError
from .model import ModelConfig, ModelParams, init_params, model_backward_from_dy, model_forward
from .optim import adam_init, adam_step

_SHUFFLE_STREAM_TAG = 0x5F1E


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 300
    batch_sequences: int = 10
    patience: int = 10
    seed: int = 0
    learning_rate: float = 1e-3
    loss: str = "mse"

    def validate(self) -> None:
        if self.batch_sequences < 1:
            raise ContractError("batch_sequences must be at least 1")
        if not (0 < self.patience < self.max_epochs):
            raise ContractError("patience must lie in (0, max_epochs)")
        if self.loss != "mse":
            raise ContractError("only mse loss is supported")


HISTORY_CSV_HEADER = "epoch,train_mse,val_mse"


@dataclass
class TrainHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0      # 1-based
    stopped_epoch: int = 0   # 1-based, last epoch that ran

    @property
    def best_val_mse(self) -> float:
        return self.val_mse[self.best_epoch - 1]

    def to_csv(self) -> str:
        lines = [HISTORY_CSV_HEADER]
        for e, (tr, va) in enumerate(zip(self.train_mse, self.val_mse), start=1):
            lines.append(f"{e},{'%.17g' % tr},{'%.17g' % va}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TrainHistory":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != HISTORY_CSV_HEADER:
            raise FormatError(f"history CSV must start with '{HISTORY_CSV_HEADER}'")
        train, val = [], []
        for line_no, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"line {line_no}: expected 3 fields")
            train.append(float(parts[1]))
            val.append(float(parts[2]))
        hist = cls(train_mse=train, val_mse=val)
        hist.stopped_epoch = len(val)
        hist.best_epoch = int(np.argmin(val)) + 1 if val else 0
        return hist


def _sum_squared_error(params: ModelParams, xs, ys) -> tuple[float, int]:
    total_sq = 0.0
    total_entries = 0
    for x, y in zip(xs, ys):
        pred = model_forward(params, x)
        diff = pred - y
        total_sq += float(np.sum(diff * diff))
        total_entries += diff.size
    return total_sq, total_entries


def evaluate_mse(params: ModelParams, xs, ys) -> float:
    """Entry-weighted MSE over a list of sequences."""
    sq, n = _sum_squared_error(params, xs, ys)
    return sq / n


def train_model(
    train_x,
    train_y,
    val_x,
    val_y,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    epoch_callback=None,
) -> tuple[ModelParams, TrainHistory]:
    """Train and return the best-validation-epoch parameters plus history.

    epoch_callback(epoch, train_mse, val_mse, adam_state), when given, runs
    after each epoch's validation pass; it may mutate the optimizer state
    (used by tests to force early-stopping behavior and by the CLI to log).
    """
    mcfg.validate()
    tcfg.validate()
    if len(train_x) == 0 or len(val_x) == 0:
        raise ContractError("train and validation splits must be non-empty")
    if len(train_x) != len(train_y) or len(val_x) != len(val_y):
        raise ContractError("feature/target sequence counts differ")
    for x, y in zip(list(train_x) + list(val_x), list(train_y) + list(val_y)):
        if x.shape[0] != y.shape[0]:
            raise ContractError("feature/target frame counts differ within a sequence")
        if y.shape[1] != mcfg.output_dim:
            raise ContractError(
                f"targets are {y.shape[1]}-wide, model outputs {mcfg.output_dim}"
            )

    params = init_params(mcfg)
    state = adam_init(params, lr=tcfg.learning_rate)
    shuffle_rng = Xoshiro256pp(derive_seed(tcfg.seed, _SHUFFLE_STREAM_TAG))

    history = TrainHistory()
    best_params = params.copy()
    best_val = np.inf
    epochs_since_best = 0

    n_train = len(train_x)
    for epoch in range(1, tcfg.max_epochs + 1):
        order = list(range(n_train))
        shuffle_rng.shuffle(order)

        epoch_sq = 0.0
        epoch_entries = 0
        for start in range(0, n_train, tcfg.batch_sequences):
            batch = order[start:start + tcfg.batch_sequences]
            batch_entries = sum(train_y[i].size for i in batch)
            grads = params.zeros_like()
            grad_arrays = [a for _, a in grads.named_arrays()]
            for i in batch:
                pred, cache = model_forward(params, train_x[i], want_cache=True)
                diff = pred - train_y[i]
                epoch_sq += float(np.sum(diff * diff))
                dY = (2.0 / batch_entries) * diff
                g = model_backward_from_dy(params, cache, dY)
                for acc, (_, arr) in zip(grad_arrays, g.named_arrays()):
                    acc += arr
            epoch_entries += batch_entries
            adam_step(params, grads, state)

        train_mse = epoch_sq / epoch_entries
        val_mse = evaluate_mse(params, val_x, val_y)
        history.train_mse.append(train_mse)
        history.val_mse.append(val_mse)
        history.stopped_epoch = epoch

        if epoch_callback is not None:
            epoch_callback(epoch, train_mse, val_mse, state)

        if val_mse < best_val:
            best_val = val_mse
            best_params = params.copy()
            history.best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= tcfg.patience:
                break

    return best_params, history
