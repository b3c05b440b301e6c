"""Self-contained models, losses, and gradients.

Two model kinds are supported: multinomial logistic regression and a
fully-connected ReLU network. Parameters and gradients live in flat
float32 vectors ("grad vectors"); the layout of weight/bias blocks
inside the flat vector is described by ModelSpec.param_blocks().

All math is evaluated in float64 internally and results are stored back
as float32, so analytic gradients survive a central finite-difference
check at 1e-4 relative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .data import Dataset

LOGISTIC = "logistic"
MLP = "mlp"

GRAD_DTYPE = np.float32


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description plus the flat-parameter layout.

    layer_dims is (input_dim, hidden..., num_classes); logistic models
    have exactly (input_dim, num_classes). Each layer contributes a
    weight block of shape (d_in, d_out) followed by a bias block of
    shape (d_out,), packed contiguously.
    """

    kind: str
    layer_dims: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind not in (LOGISTIC, MLP):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ConfigError(f"bad layer dims {self.layer_dims}")
        if self.kind == LOGISTIC and len(self.layer_dims) != 2:
            raise ConfigError("logistic model takes exactly (input_dim, num_classes)")

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def param_blocks(self) -> list[tuple[int, tuple[int, ...]]]:
        """(offset, shape) for each W/b block, covering the flat vector."""
        blocks = []
        offset = 0
        for d_in, d_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            blocks.append((offset, (d_in, d_out)))
            offset += d_in * d_out
            blocks.append((offset, (d_out,)))
            offset += d_out
        return blocks

    @property
    def num_params(self) -> int:
        return sum(
            (din + 1) * dout
            for din, dout in zip(self.layer_dims[:-1], self.layer_dims[1:])
        )


def logistic_model(input_dim: int, num_classes: int) -> ModelSpec:
    return ModelSpec(LOGISTIC, (input_dim, num_classes))


def mlp_model(input_dim: int, hidden: tuple[int, ...], num_classes: int) -> ModelSpec:
    return ModelSpec(MLP, (input_dim, *hidden, num_classes))


def init_params(model: ModelSpec, seed: int = 0) -> np.ndarray:
    """Initial flat parameter vector.

    Logistic models start at zero (deterministic, loss starts at ln C).
    MLP weights use uniform(+-sqrt(6/(fan_in+fan_out))) per layer with
    biases at zero.
    """
    params = np.zeros(model.num_params, dtype=GRAD_DTYPE)
    if model.kind == MLP:
        rng = np.random.default_rng(seed)
        for offset, shape in model.param_blocks():
            if len(shape) == 2:
                fan_in, fan_out = shape
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                block = rng.uniform(-limit, limit, size=shape)
                params[offset : offset + fan_in * fan_out] = block.reshape(-1).astype(
                    GRAD_DTYPE
                )
    return params


def _unpack(params: np.ndarray, model: ModelSpec) -> list[np.ndarray]:
    if params.shape != (model.num_params,):
        raise ConfigError(
            f"params length {params.shape} does not match model layout "
            f"({model.num_params},)"
        )
    views = []
    for offset, shape in model.param_blocks():
        size = int(np.prod(shape))
        views.append(params[offset : offset + size].reshape(shape).astype(np.float64))
    return views


def _forward_logits(
    x: np.ndarray, params: np.ndarray, model: ModelSpec
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits plus per-layer pre-activations (needed by backward)."""
    blocks = _unpack(params, model)
    pre_acts = []
    act = x
    n_layers = len(blocks) // 2
    for i in range(n_layers):
        w, b = blocks[2 * i], blocks[2 * i + 1]
        z = act @ w + b
        pre_acts.append(z)
        act = np.maximum(z, 0.0) if i < n_layers - 1 else z
    return act, pre_acts


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _batch_arrays(
    data: Dataset, batch: np.ndarray, model: ModelSpec
) -> tuple[np.ndarray, np.ndarray]:
    if model.input_dim != data.dim or model.num_classes != data.num_classes:
        raise ConfigError(
            f"model ({model.input_dim}->{model.num_classes}) does not fit dataset "
            f"({data.dim}->{data.num_classes})"
        )
    idx = np.asarray(batch, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ConfigError("batch must be a non-empty 1-D index array")
    if idx.min() < 0 or idx.max() >= data.num_samples:
        raise ConfigError("batch indices out of range")
    return data.features[idx].astype(np.float64), data.labels[idx]


def forward_loss(
    params: np.ndarray, model: ModelSpec, data: Dataset, batch: np.ndarray
) -> float:
    """Mean softmax cross-entropy of the batch."""
    x, y = _batch_arrays(data, batch, model)
    logits, _ = _forward_logits(x, params, model)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(y)), y].mean())


def backward_grad(
    params: np.ndarray, model: ModelSpec, data: Dataset, batch: np.ndarray
) -> np.ndarray:
    """Gradient of the mean batch loss w.r.t. the flat parameter vector."""
    x, y = _batch_arrays(data, batch, model)
    logits, pre_acts = _forward_logits(x, params, model)
    probs = np.exp(_log_softmax(logits))
    probs[np.arange(len(y)), y] -= 1.0
    delta = probs / len(y)

    blocks = _unpack(params, model)
    n_layers = len(blocks) // 2
    # Re-derive forward activations (inputs to each layer) from pre_acts.
    acts = [x]
    for i in range(n_layers - 1):
        acts.append(np.maximum(pre_acts[i], 0.0))

    grad = np.empty(model.num_params, dtype=GRAD_DTYPE)
    layout = model.param_blocks()
    for i in range(n_layers - 1, -1, -1):
        gw = acts[i].T @ delta
        gb = delta.sum(axis=0)
        w_off, w_shape = layout[2 * i]
        b_off, _ = layout[2 * i + 1]
        grad[w_off : w_off + gw.size] = gw.reshape(-1).astype(GRAD_DTYPE)
        grad[b_off : b_off + gb.size] = gb.astype(GRAD_DTYPE)
        if i > 0:
            delta = (delta @ blocks[2 * i].T) * (pre_acts[i - 1] > 0.0)
    if not np.isfinite(grad).all():
        raise ConfigError("non-finite gradient (diverging parameters?)")
    return grad


def sgd_update(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """params - lr * grad, elementwise, in float32."""
    if params.shape != grad.shape:
        raise ConfigError(f"length mismatch {params.shape} vs {grad.shape}")
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    return (params - GRAD_DTYPE(lr) * grad).astype(GRAD_DTYPE)


def evaluate_accuracy(params: np.ndarray, model: ModelSpec, data: Dataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class."""
    logits, _ = _forward_logits(
        data.features.astype(np.float64), params, model
    )
    pred = np.argmax(logits, axis=1)
    return float((pred == data.labels).mean())


def full_dataset_loss(params: np.ndarray, model: ModelSpec, data: Dataset) -> float:
    """Mean cross-entropy over the entire dataset."""
    return forward_loss(params, model, data, np.arange(data.num_samples))
