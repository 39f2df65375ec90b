"""From-scratch feed-forward network: SELU activations, Adam, early stopping.

Six layers: the input, a half-width hidden layer, three quarter-width
hidden layers, and a single output neuron. SELU applies to every neuron,
the output included (a switch selects a linear output instead); targets
are min-max normalized so the output neuron works in its linear region.
Training minimizes mean squared error with Adam and keeps the parameters
of the best validation epoch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureDataset

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


class TrainingError(RuntimeError):
    """Training diverged or was fed an unusable dataset."""


def selu(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, SELU_LAMBDA * x, SELU_LAMBDA * SELU_ALPHA * np.expm1(x))


def selu_derivative(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(x))


def layer_sizes(n_inputs: int) -> tuple[int, ...]:
    """[N, N/2, N/4, N/4, N/4, 1] with floor division."""
    return (n_inputs, n_inputs // 2, n_inputs // 4, n_inputs // 4, n_inputs // 4, 1)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 20
    seed: int = 0


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    validation_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "validation_loss": self.validation_loss,
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
        }


@dataclass
class MLP:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    selu_output: bool = True
    target_min: float | None = None
    target_max: float | None = None
    history: TrainingHistory | None = None

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "MLP":
        return MLP(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            selu_output=self.selu_output,
            target_min=self.target_min,
            target_max=self.target_max,
            history=self.history,
        )


def init_model(n_inputs: int, seed: int, selu_output: bool = True) -> MLP:
    """Zero-mean weights with variance 1/fan_in (self-normalizing init),
    zero biases. Needs n_inputs >= 8 so every hidden layer keeps a neuron."""
    if n_inputs < 8:
        raise TrainingError(f"input width {n_inputs} too small for the 6-layer shape")
    sizes = layer_sizes(n_inputs)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLP(weights=weights, biases=biases, selu_output=selu_output)


def _forward_pass(model: MLP, inputs: np.ndarray):
    """Activations and pre-activations per layer for a (n, N) batch."""
    activations = [inputs]
    pre = []
    last = len(model.weights) - 1
    a = inputs
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = z if (i == last and not model.selu_output) else selu(z)
        activations.append(a)
    return activations, pre


def forward(model: MLP, inputs) -> np.ndarray:
    """Network output in normalized units; accepts one sample or a batch."""
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.weights[0].shape[0]:
        raise TrainingError(
            f"input length {x.shape[1]} does not match model width {model.weights[0].shape[0]}"
        )
    out = _forward_pass(model, x)[0][-1][:, 0]
    return float(out[0]) if single else out


def loss_and_gradients(model: MLP, inputs: np.ndarray, targets: np.ndarray):
    """Mean-squared-error loss and its gradients for one batch."""
    n = len(targets)
    activations, pre = _forward_pass(model, inputs)
    residual = activations[-1][:, 0] - targets
    loss = float(residual @ residual) / n

    grad_w = [np.empty_like(w) for w in model.weights]
    grad_b = [np.empty_like(b) for b in model.biases]
    last = len(model.weights) - 1
    delta = (2.0 / n) * residual[:, None]
    if model.selu_output:
        delta = delta * selu_derivative(pre[last])
    for layer in range(last, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * selu_derivative(pre[layer - 1])
    return loss, grad_w, grad_b


def _mse(model: MLP, inputs: np.ndarray, targets: np.ndarray) -> float:
    residual = _forward_pass(model, inputs)[0][-1][:, 0] - targets
    return float(residual @ residual) / len(targets)


def train(model: MLP, dataset: FeatureDataset, config: TrainConfig = TrainConfig()):
    """Adam on the train split with early stopping on validation loss.

    Returns a new model carrying the parameters of the best validation
    epoch plus the per-epoch history; the input model is left untouched.
    Raises TrainingError with the epoch index if the loss turns non-finite.
    """
    if len(dataset.train) == 0 or len(dataset.validation) == 0:
        raise TrainingError("dataset needs non-empty train and validation splits")
    x_train = dataset.normalize_inputs(dataset.train.inputs)
    y_train = dataset.normalize_targets(dataset.train.targets)
    x_val = dataset.normalize_inputs(dataset.validation.inputs)
    y_val = dataset.normalize_targets(dataset.validation.targets)

    work = model.copy()
    params = work.weights + work.biases
    moment1 = [np.zeros_like(p) for p in params]
    moment2 = [np.zeros_like(p) for p in params]
    step = 0
    rng = np.random.default_rng(config.seed)
    history = TrainingHistory()

    best_val = np.inf
    best_params = [p.copy() for p in params]
    since_best = 0
    n = len(y_train)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            loss, grad_w, grad_b = loss_and_gradients(work, x_train[batch], y_train[batch])
            epoch_loss += loss * len(batch)
            step += 1
            bc1 = 1.0 - config.beta1**step
            bc2 = 1.0 - config.beta2**step
            for p, m, v, g in zip(params, moment1, moment2, grad_w + grad_b):
                m *= config.beta1
                m += (1.0 - config.beta1) * g
                v *= config.beta2
                v += (1.0 - config.beta2) * np.square(g)
                p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
        train_loss = epoch_loss / n
        val_loss = _mse(work, x_val, y_val)
        history.train_loss.append(train_loss)
        history.validation_loss.append(val_loss)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingError(f"loss diverged at epoch {epoch}")
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in params]
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > config.patience:
                break
    history.stopped_epoch = len(history.train_loss) - 1

    k = len(work.weights)
    trained = MLP(
        weights=[p for p in best_params[:k]],
        biases=[p for p in best_params[k:]],
        selu_output=work.selu_output,
        target_min=dataset.target_min,
        target_max=dataset.target_max,
        history=history,
    )
    return trained, history


def predict(model: MLP, inputs_normalized) -> np.ndarray:
    """Forward pass plus inverse target normalization (per-unit volts)."""
    if model.target_min is None or model.target_max is None:
        raise TrainingError("model carries no target normalization; train it first")
    raw = forward(model, inputs_normalized)
    scale = (model.target_max - model.target_min) or 1.0
    return np.asarray(raw) * scale + model.target_min


def evaluate_errors(model: MLP, dataset: FeatureDataset, split: str = "evaluation") -> np.ndarray:
    """|predicted - true| per sample, in per-unit volts."""
    samples = getattr(dataset, split)
    predictions = predict(model, dataset.normalize_inputs(samples.inputs))
    return np.abs(predictions - samples.targets)


# ---------------------------------------------------------------------------
# Model file: versioned JSON


def save_model(model: MLP, path, metadata: dict | None = None) -> None:
    document = {
        "format": "lvvc-model-v1",
        "sizes": list(model.sizes),
        "selu_output": model.selu_output,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "target_min": model.target_min,
        "target_max": model.target_max,
        "history": model.history.to_dict() if model.history else None,
        "metadata": metadata or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh)
        fh.write("\n")


def load_model(path) -> MLP:
    with open(path, "r", encoding="utf-8") as fh:
        document = json.load(fh)
    if document.get("format") != "lvvc-model-v1":
        raise TrainingError(f"unsupported model format {document.get('format')!r}")
    history = None
    if document.get("history"):
        history = TrainingHistory(**document["history"])
    return MLP(
        weights=[np.asarray(w) for w in document["weights"]],
        biases=[np.asarray(b) for b in document["biases"]],
        selu_output=document["selu_output"],
        target_min=document["target_min"],
        target_max=document["target_max"],
        history=history,
    )
