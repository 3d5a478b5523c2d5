"""Feed-forward scorers over precomputed embeddings.

Two scorer kinds share one architecture and training loop:

- ``embedding_mlp`` regresses pK from the interaction embedding alone.
- ``fusion`` concatenates the ligand embedding followed by the
  interaction embedding into a single feature vector.

The network is a plain MLP trained with Adam on mean squared error.
Features are z-scored per dimension with statistics fit on the training
split only. Gradients are computed analytically in closed form (see
:func:`loss_and_gradients`), which keeps training deterministic per seed
and makes the implementation verifiable against finite differences.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import erf

from .data import ComplexRecord
from .errors import (
    MissingEmbeddingError,
    ModelFileError,
    TrainingError,
    ValidationError,
)

__all__ = [
    "ScorerKind",
    "Activation",
    "ScorerConfig",
    "TrainedScorer",
    "required_embeddings",
    "has_required_embeddings",
    "build_features",
    "feature_matrix",
    "init_parameters",
    "loss_and_gradients",
    "fit",
    "predict",
    "continue_training",
    "save_scorer",
    "load_scorer",
    "write_predictions",
    "read_predictions",
]

logger = logging.getLogger(__name__)

_CHECKPOINT_MAGIC = "oodbench-scorer"
_CHECKPOINT_VERSION = 1

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


class ScorerKind(str, Enum):
    """Which embeddings feed the network."""

    EMBEDDING_MLP = "embedding_mlp"
    FUSION = "fusion"


class Activation(str, Enum):
    RELU = "relu"
    GELU = "gelu"


@dataclass(frozen=True)
class ScorerConfig:
    """Architecture and optimization settings for one scorer.

    Defaults are a starting point for desk-scale experiments, not tuned
    values. ``patience`` counts consecutive epochs without improvement
    of the validation metric before training stops.
    """

    scorer_kind: ScorerKind = ScorerKind.EMBEDDING_MLP
    hidden_sizes: tuple[int, ...] = (64, 32)
    activation: Activation = Activation.RELU
    dropout_rate: float = 0.1
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scorer_kind", ScorerKind(self.scorer_kind))
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValidationError(f"hidden_sizes must be positive, got {self.hidden_sizes!r}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValidationError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate!r}")
        if self.learning_rate <= 0.0 or not math.isfinite(self.learning_rate):
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be at least 1, got {self.max_epochs!r}")
        if not (1 <= self.patience <= self.max_epochs):
            raise ValidationError(
                f"patience must lie in [1, max_epochs], got {self.patience!r} "
                f"with max_epochs={self.max_epochs!r}"
            )
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be at least 1, got {self.batch_size!r}")

    def to_json_dict(self) -> dict:
        return {
            "scorer_kind": self.scorer_kind.value,
            "hidden_sizes": list(self.hidden_sizes),
            "activation": self.activation.value,
            "dropout_rate": self.dropout_rate,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "ScorerConfig":
        return cls(
            scorer_kind=ScorerKind(payload["scorer_kind"]),
            hidden_sizes=tuple(payload["hidden_sizes"]),
            activation=Activation(payload["activation"]),
            dropout_rate=payload["dropout_rate"],
            learning_rate=payload["learning_rate"],
            max_epochs=payload["max_epochs"],
            patience=payload["patience"],
            batch_size=payload["batch_size"],
            seed=payload["seed"],
        )


def required_embeddings(kind: ScorerKind) -> tuple[str, ...]:
    if ScorerKind(kind) is ScorerKind.FUSION:
        return ("ligand", "interaction")
    return ("interaction",)


def has_required_embeddings(record: ComplexRecord, kind: ScorerKind) -> bool:
    return all(record.embedding(k) is not None for k in required_embeddings(kind))


def build_features(record: ComplexRecord, kind: ScorerKind) -> np.ndarray:
    """Feature vector for one record.

    For ``fusion`` the ligand embedding comes first, then the interaction
    embedding; ``embedding_mlp`` uses the interaction embedding as-is.

    Raises
    ------
    MissingEmbeddingError
        Naming the record and the missing embedding kind.
    """
    kind = ScorerKind(kind)
    parts = []
    for name in required_embeddings(kind):
        vector = record.embedding(name)
        if vector is None:
            raise MissingEmbeddingError(
                f"record {record.complex_id!r} has no {name} embedding required by {kind.value}"
            )
        parts.append(vector)
    return np.concatenate(parts) if len(parts) > 1 else parts[0].copy()


def feature_matrix(
    records: Sequence[ComplexRecord], kind: ScorerKind
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Stack features and labels for a batch of records.

    Returns ``(ids, X, y)``. All records must carry the required
    embeddings and agree on dimensions.
    """
    if not records:
        raise ValidationError("no records to featurize")
    kind = ScorerKind(kind)
    missing = [r.complex_id for r in records if not has_required_embeddings(r, kind)]
    if missing:
        raise MissingEmbeddingError(
            f"{len(missing)} records lack embeddings required by {kind.value}: "
            + ", ".join(missing[:10])
            + ("..." if len(missing) > 10 else "")
        )
    rows = [build_features(r, kind) for r in records]
    dims = {row.size for row in rows}
    if len(dims) != 1:
        raise ValidationError(f"inconsistent feature dimensions across records: {sorted(dims)}")
    X = np.stack(rows).astype(np.float64)
    y = np.array([r.pk_value for r in records], dtype=np.float64)
    return [r.complex_id for r in records], X, y


# -- network internals ----------------------------------------------------


def init_parameters(
    input_dim: int, hidden_sizes: Sequence[int], rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """He-initialized weights and zero biases for the layer stack."""
    sizes = [int(input_dim), *[int(h) for h in hidden_sizes], 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return 0.5 * z * (1.0 + erf(z / math.sqrt(2.0)))


def _activate_grad(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    return 0.5 * (1.0 + erf(z / math.sqrt(2.0))) + z * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _forward(
    X: np.ndarray,
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    activation: Activation,
    dropout_masks: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Return predictions plus per-layer inputs and pre-activations."""
    inputs = [X]
    pre_acts = []
    a = X
    n_layers = len(weights)
    for i in range(n_layers):
        z = a @ weights[i] + biases[i]
        pre_acts.append(z)
        if i < n_layers - 1:
            a = _activate(z, activation)
            if dropout_masks is not None:
                a = a * dropout_masks[i]
            inputs.append(a)
    return pre_acts[-1][:, 0], inputs, pre_acts


def loss_and_gradients(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    activation: Activation = Activation.RELU,
    dropout_masks: Sequence[np.ndarray] | None = None,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean squared error and its exact gradients by backpropagation.

    Returns ``(loss, weight_grads, bias_grads)`` with gradient arrays
    matching the parameter shapes.
    """
    pred, inputs, pre_acts = _forward(X, weights, biases, activation, dropout_masks)
    residual = pred - y
    m = X.shape[0]
    loss = float(np.mean(residual**2))

    n_layers = len(weights)
    weight_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    bias_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    delta = (2.0 * residual / m)[:, None]
    for i in range(n_layers - 1, -1, -1):
        weight_grads[i] = inputs[i].T @ delta
        bias_grads[i] = delta.sum(axis=0)
        if i > 0:
            upstream = delta @ weights[i].T
            if dropout_masks is not None:
                upstream = upstream * dropout_masks[i - 1]
            delta = upstream * _activate_grad(pre_acts[i - 1], activation)
    return loss, weight_grads, bias_grads


class _Adam:
    """Adam state for a fixed parameter list."""

    def __init__(self, params: Sequence[np.ndarray], learning_rate: float) -> None:
        self.lr = learning_rate
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        correct1 = 1.0 - _ADAM_BETA1**self.t
        correct2 = 1.0 - _ADAM_BETA2**self.t
        for i, g in enumerate(grads):
            self.m[i] = _ADAM_BETA1 * self.m[i] + (1.0 - _ADAM_BETA1) * g
            self.v[i] = _ADAM_BETA2 * self.v[i] + (1.0 - _ADAM_BETA2) * g * g
            params[i] -= self.lr * (self.m[i] / correct1) / (
                np.sqrt(self.v[i] / correct2) + _ADAM_EPS
            )


@dataclass(eq=False)
class TrainedScorer:
    """A trained network together with everything needed to reuse it.

    ``training_history`` holds one ``(epoch, train_loss, val_metric)``
    triple per completed epoch; ``val_metric`` is the validation Pearson
    correlation, or negative validation RMSE when ``val_metric_name`` is
    ``"neg_rmse"`` (the fallback for constant validation labels), or
    ``None`` when no validation metric was available that epoch.
    """

    config: ScorerConfig
    input_dimension: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feature_mean: np.ndarray
    feature_std: np.ndarray
    training_history: list[tuple[int, float, float | None]]
    val_metric_name: str
    best_epoch: int
    stopped_epoch: int
    gradient_ids: tuple[str, ...] = ()
    validation_ids: tuple[str, ...] = ()
    eval_curves: dict[str, tuple[tuple[int, float | None], ...]] | None = None

    @property
    def best_val_metric(self) -> float | None:
        for epoch, _, metric in self.training_history:
            if epoch == self.best_epoch:
                return metric
        return None

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dimension] + [w.shape[1] for w in self.weights]


def _standardize(X: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (X - mean) / std


def _fit_scaler(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)  # constant dimensions pass through unscaled
    return mean, std


def _safe_pearson(predicted: np.ndarray, actual: np.ndarray) -> float | None:
    if predicted.size < 2:
        return None
    dx = predicted - predicted.mean()
    dy = actual - actual.mean()
    sx = float(np.sqrt(np.dot(dx, dx)))
    sy = float(np.sqrt(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        return None
    return min(1.0, max(-1.0, float(np.dot(dx, dy) / (sx * sy))))


def _clone_params(
    weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    return [w.copy() for w in weights], [b.copy() for b in biases]


def _run_epochs(
    X: np.ndarray,
    y: np.ndarray,
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    config: ScorerConfig,
    rng: np.random.Generator,
    *,
    learning_rate: float,
    max_epochs: int,
    early_stop: bool,
    val_X: np.ndarray | None,
    val_y: np.ndarray | None,
    val_metric_name: str,
    eval_features: Mapping[str, tuple[np.ndarray, np.ndarray]] | None,
) -> tuple[
    list[np.ndarray],
    list[np.ndarray],
    list[tuple[int, float, float | None]],
    int,
    int,
    dict[str, list[tuple[int, float | None]]],
]:
    """Shared optimization loop for initial training and fine-tuning."""
    n = X.shape[0]
    n_hidden = len(config.hidden_sizes)
    optimizer = _Adam(weights + biases, learning_rate)
    history: list[tuple[int, float, float | None]] = []
    curves: dict[str, list[tuple[int, float | None]]] = {
        name: [] for name in (eval_features or {})
    }
    best_metric: float | None = None
    best_epoch = 0
    best_weights, best_biases = _clone_params(weights, biases)
    epochs_since_best = 0
    stopped_epoch = 0

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            masks = None
            if config.dropout_rate > 0.0:
                keep = 1.0 - config.dropout_rate
                masks = [
                    rng.binomial(1, keep, size=(batch.size, h)) / keep
                    for h in config.hidden_sizes[:n_hidden]
                ]
            loss, w_grads, b_grads = loss_and_gradients(
                weights, biases, X[batch], y[batch], config.activation, masks
            )
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}; lower the learning rate "
                    f"(currently {learning_rate}) or check the feature scale"
                )
            optimizer.step(weights + biases, list(w_grads) + list(b_grads))
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))

        metric: float | None = None
        if val_X is not None:
            val_pred, _, _ = _forward(val_X, weights, biases, config.activation)
            if val_metric_name == "pearson":
                metric = _safe_pearson(val_pred, val_y)
            else:
                metric = -float(np.sqrt(np.mean((val_pred - val_y) ** 2)))
        history.append((epoch, train_loss, metric))

        if eval_features:
            for name, (eval_X, eval_y) in eval_features.items():
                eval_pred, _, _ = _forward(eval_X, weights, biases, config.activation)
                curves[name].append((epoch, _safe_pearson(eval_pred, eval_y)))

        stopped_epoch = epoch
        if val_X is not None:
            if metric is not None and (best_metric is None or metric > best_metric):
                best_metric = metric
                best_epoch = epoch
                best_weights, best_biases = _clone_params(weights, biases)
                epochs_since_best = 0
            else:
                epochs_since_best += 1
            if early_stop and epochs_since_best >= config.patience:
                break
        else:
            best_epoch = epoch

    if val_X is None:
        best_weights, best_biases = _clone_params(weights, biases)
    elif best_metric is None:
        # No epoch produced a defined metric; keep the final parameters.
        best_epoch = stopped_epoch
        best_weights, best_biases = _clone_params(weights, biases)
    return best_weights, best_biases, history, best_epoch, stopped_epoch, curves


def fit(
    train: Sequence[ComplexRecord],
    validation: Sequence[ComplexRecord],
    config: ScorerConfig,
    *,
    initial_parameters: tuple[Sequence[np.ndarray], Sequence[np.ndarray]] | None = None,
    eval_sets: Mapping[str, Sequence[ComplexRecord]] | None = None,
) -> TrainedScorer:
    """Train one scorer with early stopping on a validation set.

    Optimization runs Adam over shuffled mini-batches; per epoch the
    validation Pearson correlation is recorded and training stops once it
    has not improved for ``config.patience`` consecutive epochs. When the
    validation labels are constant, Pearson is undefined and negative
    validation RMSE takes its place. The returned scorer carries the
    parameters of the best epoch.

    Parameters
    ----------
    train, validation : sequences of ComplexRecord
        Every record must have the embeddings the scorer kind requires;
        validation needs at least 2 records.
    config : ScorerConfig
    initial_parameters : (weights, biases), optional
        Start from these parameters instead of a fresh seeded
        initialization; shapes must match the configured architecture.
    eval_sets : mapping, optional
        Named record collections evaluated at every epoch; the resulting
        Pearson trajectories are stored on ``eval_curves`` for learning
        curve aggregation.

    Raises
    ------
    MissingEmbeddingError
        If any record lacks a required embedding, listing ids.
    ValidationError
        On an empty training set or a validation set smaller than 2.
    TrainingError
        If the loss becomes non-finite.
    """
    if not train:
        raise ValidationError("training set is empty")
    if len(validation) < 2:
        raise ValidationError(
            f"validation set needs at least 2 records for a correlation, got {len(validation)}"
        )
    train_ids, X, y = feature_matrix(train, config.scorer_kind)
    val_ids, val_X_raw, val_y = feature_matrix(validation, config.scorer_kind)
    if val_X_raw.shape[1] != X.shape[1]:
        raise ValidationError(
            f"validation feature dimension {val_X_raw.shape[1]} differs from "
            f"training dimension {X.shape[1]}"
        )
    input_dim = X.shape[1]
    mean, std = _fit_scaler(X)
    Xs = _standardize(X, mean, std)
    val_X = _standardize(val_X_raw, mean, std)

    rng = np.random.default_rng(config.seed)
    if initial_parameters is None:
        weights, biases = init_parameters(input_dim, config.hidden_sizes, rng)
    else:
        weights, biases = _clone_params(*initial_parameters)
        expected = [input_dim, *config.hidden_sizes, 1]
        actual = [weights[0].shape[0]] + [w.shape[1] for w in weights]
        if actual != expected:
            raise ValidationError(
                f"initial parameters have layer sizes {actual}, expected {expected}"
            )

    val_metric_name = "pearson" if np.ptp(val_y) > 0.0 else "neg_rmse"
    eval_features = None
    if eval_sets:
        eval_features = {}
        for name, records in eval_sets.items():
            _, eX, eY = feature_matrix(records, config.scorer_kind)
            eval_features[name] = (_standardize(eX, mean, std), eY)

    weights, biases, history, best_epoch, stopped_epoch, curves = _run_epochs(
        Xs,
        y,
        weights,
        biases,
        config,
        rng,
        learning_rate=config.learning_rate,
        max_epochs=config.max_epochs,
        early_stop=True,
        val_X=val_X,
        val_y=val_y,
        val_metric_name=val_metric_name,
        eval_features=eval_features,
    )
    return TrainedScorer(
        config=config,
        input_dimension=input_dim,
        weights=weights,
        biases=biases,
        feature_mean=mean,
        feature_std=std,
        training_history=history,
        val_metric_name=val_metric_name,
        best_epoch=best_epoch,
        stopped_epoch=stopped_epoch,
        gradient_ids=tuple(sorted(train_ids)),
        validation_ids=tuple(sorted(val_ids)),
        eval_curves={name: tuple(points) for name, points in curves.items()} if curves else None,
    )


def continue_training(
    model: TrainedScorer,
    records: Sequence[ComplexRecord],
    *,
    epochs: int,
    learning_rate: float,
    seed: int | None = None,
) -> TrainedScorer:
    """Resume optimization of an existing scorer on new records.

    Runs exactly ``epochs`` epochs with no early stopping and keeps the
    model's feature standardization unchanged, so the fine-tuned network
    sees features on the same scale as its source. A zero learning rate
    is allowed and leaves the parameters untouched.
    """
    if epochs < 1:
        raise ValidationError(f"epochs must be at least 1, got {epochs}")
    if learning_rate < 0.0 or not math.isfinite(learning_rate):
        raise ValidationError(f"learning_rate must be non-negative, got {learning_rate!r}")
    ids, X, y = feature_matrix(records, model.config.scorer_kind)
    if X.shape[1] != model.input_dimension:
        raise ValidationError(
            f"feature dimension {X.shape[1]} does not match model input "
            f"dimension {model.input_dimension}"
        )
    Xs = _standardize(X, model.feature_mean, model.feature_std)
    config = replace(
        model.config,
        max_epochs=epochs,
        patience=epochs,
        learning_rate=max(learning_rate, np.finfo(np.float64).tiny),
    )
    rng = np.random.default_rng(model.config.seed if seed is None else seed)
    weights, biases = _clone_params(model.weights, model.biases)
    weights, biases, history, best_epoch, stopped_epoch, _ = _run_epochs(
        Xs,
        y,
        weights,
        biases,
        config,
        rng,
        learning_rate=learning_rate,
        max_epochs=epochs,
        early_stop=False,
        val_X=None,
        val_y=None,
        val_metric_name="none",
        eval_features=None,
    )
    return TrainedScorer(
        config=config,
        input_dimension=model.input_dimension,
        weights=weights,
        biases=biases,
        feature_mean=model.feature_mean.copy(),
        feature_std=model.feature_std.copy(),
        training_history=history,
        val_metric_name="none",
        best_epoch=best_epoch,
        stopped_epoch=stopped_epoch,
        gradient_ids=tuple(sorted(ids)),
        validation_ids=(),
    )


def predict(
    model: TrainedScorer,
    records: Sequence[ComplexRecord],
    *,
    batch_size: int | None = None,
) -> dict[str, float]:
    """Predicted pK per complex id.

    Deterministic: dropout is never applied at prediction time, and the
    result does not depend on ``batch_size`` (which exists only to bound
    memory on large inputs).
    """
    ids, X, _ = feature_matrix(records, model.config.scorer_kind)
    if X.shape[1] != model.input_dimension:
        raise ValidationError(
            f"feature dimension {X.shape[1]} does not match model input "
            f"dimension {model.input_dimension}"
        )
    Xs = _standardize(X, model.feature_mean, model.feature_std)
    if batch_size is None or batch_size >= Xs.shape[0]:
        pred, _, _ = _forward(Xs, model.weights, model.biases, model.config.activation)
    else:
        if batch_size < 1:
            raise ValidationError(f"batch_size must be at least 1, got {batch_size}")
        chunks = []
        for start in range(0, Xs.shape[0], batch_size):
            part, _, _ = _forward(
                Xs[start : start + batch_size], model.weights, model.biases, model.config.activation
            )
            chunks.append(part)
        pred = np.concatenate(chunks)
    return {i: float(p) for i, p in zip(ids, pred)}


# -- checkpoint files ------------------------------------------------------


def save_scorer(model: TrainedScorer, path: str | Path) -> None:
    """Write a scorer to a single file.

    The file is a JSON header line followed by the raw parameter payload:
    every weight matrix then bias vector, layer by layer, as little-endian
    float64. Writing the same model twice produces identical bytes.
    """
    header = {
        "magic": _CHECKPOINT_MAGIC,
        "version": _CHECKPOINT_VERSION,
        "config": model.config.to_json_dict(),
        "input_dimension": model.input_dimension,
        "layer_sizes": model.layer_sizes,
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
        "val_metric_name": model.val_metric_name,
        "best_epoch": model.best_epoch,
        "stopped_epoch": model.stopped_epoch,
        "training_history": [[e, tl, vm] for e, tl, vm in model.training_history],
        "gradient_ids": list(model.gradient_ids),
        "validation_ids": list(model.validation_ids),
    }
    payload = b"".join(
        arr.astype("<f8").tobytes()
        for pair in zip(model.weights, model.biases)
        for arr in pair
    )
    with Path(path).open("wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode())
        handle.write(b"\n")
        handle.write(payload)


def load_scorer(path: str | Path) -> TrainedScorer:
    """Read a scorer saved by :func:`save_scorer`.

    Raises
    ------
    ModelFileError
        If the header is unreadable, the magic or version is wrong, or
        the payload size does not match the declared layer sizes.
    """
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ModelFileError(f"{path}: no header line found")
    try:
        header = json.loads(raw[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"{path}: unreadable header: {exc}") from exc
    if header.get("magic") != _CHECKPOINT_MAGIC:
        raise ModelFileError(f"{path}: not a scorer checkpoint")
    if header.get("version") != _CHECKPOINT_VERSION:
        raise ModelFileError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
    sizes = header["layer_sizes"]
    expected_floats = sum(
        fan_in * fan_out + fan_out for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    )
    payload = raw[newline + 1 :]
    if len(payload) != expected_floats * 8:
        raise ModelFileError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected_floats * 8}; "
            "the file is truncated or corrupt"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        offset += fan_in * fan_out
        biases.append(flat[offset : offset + fan_out].copy())
        offset += fan_out
    return TrainedScorer(
        config=ScorerConfig.from_json_dict(header["config"]),
        input_dimension=header["input_dimension"],
        weights=weights,
        biases=biases,
        feature_mean=np.array(header["feature_mean"], dtype=np.float64),
        feature_std=np.array(header["feature_std"], dtype=np.float64),
        training_history=[(e, tl, vm) for e, tl, vm in header["training_history"]],
        val_metric_name=header["val_metric_name"],
        best_epoch=header["best_epoch"],
        stopped_epoch=header["stopped_epoch"],
        gradient_ids=tuple(header.get("gradient_ids", ())),
        validation_ids=tuple(header.get("validation_ids", ())),
    )


def write_predictions(predictions: Mapping[str, float], path: str | Path) -> None:
    """Write ``complex_id,predicted_pk`` rows sorted by id."""
    import csv

    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["complex_id", "predicted_pk"])
        for complex_id in sorted(predictions):
            writer.writerow([complex_id, repr(float(predictions[complex_id]))])


def read_predictions(path: str | Path) -> dict[str, float]:
    import csv

    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        return {row["complex_id"]: float(row["predicted_pk"]) for row in reader}
