"""Fully connected Q-network with manual backpropagation and Adam.

Everything operates on explicit parameter containers; nothing is hidden in
module state, so policy and target networks are just two `MlpParams` values.
All arithmetic is float64. Hidden layers use ReLU, the output layer is linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ActionIndexOutOfRange, ShapeMismatch

CHECKPOINT_HEADER = "ddqsa-ckpt v1"


@dataclass
class MlpParams:
    """Weights and biases of one network, backed by a single flat vector.

    ``weights[i]`` has shape (dims[i+1], dims[i]) and ``biases[i]`` shape
    (dims[i+1],); both are views into ``flat``, so optimizer updates on the
    flat vector are visible through the per-layer views and vice versa.
    Gradients use the same container (congruent shapes by construction).
    """

    dims: tuple[int, ...]
    flat: np.ndarray
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.dims) < 2:
            raise ShapeMismatch(f"need at least two layer dims, got {self.dims}")
        if self.flat.shape != (param_count(self.dims),):
            raise ShapeMismatch(
                f"flat vector has {self.flat.shape[0]} entries, "
                f"dims {self.dims} need {param_count(self.dims)}"
            )
        self.weights, self.biases = [], []
        offset = 0
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            self.weights.append(self.flat[offset : offset + fan_out * fan_in].reshape(fan_out, fan_in))
            offset += fan_out * fan_in
            self.biases.append(self.flat[offset : offset + fan_out])
            offset += fan_out

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1


def param_count(dims) -> int:
    return sum((i + 1) * o for i, o in zip(dims[:-1], dims[1:]))


def zeros_like_params(params: MlpParams) -> MlpParams:
    return MlpParams(params.dims, np.zeros_like(params.flat))


def init_params(dims, rng: np.random.Generator) -> MlpParams:
    """Fan-balanced uniform init: W ~ U(-a, a) with a = sqrt(6/(fan_in+fan_out)), biases 0."""
    params = MlpParams(tuple(dims), np.zeros(param_count(dims)))
    for w in params.weights:
        a = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-a, a, size=w.shape)
    return params


def copy_params(src: MlpParams) -> MlpParams:
    return MlpParams(src.dims, src.flat.copy())


@dataclass
class ForwardCache:
    """Per-layer inputs of one forward pass, consumed by backward().

    ``inputs[i]`` is what layer i consumed (the batch for i=0, ReLU outputs
    after that). The ReLU derivative mask is recovered as inputs[i] > 0,
    which equals pre_activation > 0 exactly, so pre-activations need not be
    kept.
    """

    inputs: list[np.ndarray]


def forward(params: MlpParams, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Compute Q-values for a batch (B, in_dim) -> (B, out_dim).

    Deterministic given (params, batch). The cache holds references to the
    intermediates, so requesting it costs nothing.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != params.dims[0]:
        raise ShapeMismatch(f"batch width {x.shape[1]} != input dim {params.dims[0]}")
    inputs = [x]
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = x @ w.T
        z += b
        if i < last:
            x = np.maximum(z, 0.0, out=z)
            inputs.append(x)
        else:
            x = z
    return x, ForwardCache(inputs)


def masked_mse_loss(q_pred: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """MSE over the taken actions only.

    loss = (1/B) * sum_b (q_pred[b, actions[b]] - targets[b])^2, and the
    returned gradient w.r.t. q_pred is zero except at the taken entries,
    where it is (2/B) * (q_pred - target).
    """
    b = q_pred.shape[0]
    actions = np.asarray(actions)
    targets = np.asarray(targets, dtype=np.float64)
    if actions.shape != (b,) or targets.shape != (b,):
        raise ShapeMismatch("actions/targets must be vectors of the batch length")
    if actions.min() < 0 or actions.max() >= q_pred.shape[1]:
        raise ActionIndexOutOfRange(f"action outside [0, {q_pred.shape[1]})")
    rows = np.arange(b)
    diff = q_pred[rows, actions] - targets
    loss = float(diff @ diff) / b
    output_grad = np.zeros_like(q_pred)
    output_grad[rows, actions] = (2.0 / b) * diff
    return loss, output_grad


def backward(
    params: MlpParams, cache: ForwardCache, output_grad: np.ndarray, out: MlpParams | None = None
) -> MlpParams:
    """Exact gradients of the loss w.r.t. every weight and bias.

    ``cache`` must come from a forward() of the same params on the same batch.
    Returns an MlpParams-shaped container of gradients (written into ``out``
    when given; every entry is overwritten).
    """
    if output_grad.shape != (cache.inputs[0].shape[0], params.dims[-1]):
        raise ShapeMismatch("output_grad shape does not match the cached forward pass")
    grads = out if out is not None else zeros_like_params(params)
    if grads.dims != params.dims:
        raise ShapeMismatch(f"gradient dims {grads.dims} do not match params {params.dims}")
    delta = output_grad
    for i in range(params.n_layers - 1, -1, -1):
        np.matmul(delta.T, cache.inputs[i], out=grads.weights[i])
        delta.sum(axis=0, out=grads.biases[i])
        if i > 0:
            # dead ReLU units (input <= 0) pass no gradient
            delta = (delta @ params.weights[i]) * (cache.inputs[i] > 0.0)
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators (flat, congruent with MlpParams.flat)."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat))


def adam_update(params: MlpParams, state: AdamState, grads: MlpParams, lr: float):
    """One Adam step with bias correction; mutates params and state in place.

    The textbook update lr * m_hat / (sqrt(v_hat) + eps) is applied with the
    bias corrections folded into scalars:
    lr * s / (1 - beta1^t) * m / (sqrt(v) + eps * s), s = sqrt(1 - beta2^t),
    which is the same expression with one pass less over the vectors.
    """
    if grads.flat.shape != params.flat.shape:
        raise ShapeMismatch("gradient vector does not match parameter vector")
    state.step += 1
    g = grads.flat
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * np.square(g)
    s = np.sqrt(1.0 - state.beta2 ** state.step)
    denom = np.sqrt(state.v)
    denom += state.eps * s
    np.divide(state.m, denom, out=denom)
    denom *= lr * s / (1.0 - state.beta1 ** state.step)
    params.flat -= denom
    return params, state


def save_checkpoint(path, params: MlpParams) -> None:
    """Versioned text checkpoint: header, layer dims, then each matrix row-major
    (one row per line, biases as a single row after their weight matrix),
    17 significant digits so float64 values round-trip exactly."""
    lines = [CHECKPOINT_HEADER, " ".join(str(d) for d in params.dims)]
    for w, b in zip(params.weights, params.biases):
        for row in w:
            lines.append(" ".join(f"{x:.17g}" for x in row))
        lines.append(" ".join(f"{x:.17g}" for x in b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> MlpParams:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ShapeMismatch(f"not a '{CHECKPOINT_HEADER}' checkpoint: {path}")
    dims = tuple(int(tok) for tok in lines[1].split())
    params = MlpParams(dims, np.zeros(param_count(dims)))
    cursor = 2
    for w, b in zip(params.weights, params.biases):
        for r in range(w.shape[0]):
            w[r] = np.array(lines[cursor].split(), dtype=np.float64)
            cursor += 1
        b[...] = np.array(lines[cursor].split(), dtype=np.float64)
        cursor += 1
    if cursor != len(lines):
        raise ShapeMismatch(f"checkpoint has {len(lines) - cursor} trailing lines")
    return params
