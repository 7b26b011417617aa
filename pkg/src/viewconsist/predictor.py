"""Feedforward keypoint regressor with explicit backprop and SGD.

The network maps a flat feature vector to a 3 x d keypoint matrix; a final
centering layer subtracts the column mean so every prediction is a valid
centroid-zero configuration by construction.  Losses are owned by callers:
``backward`` takes the gradient of the loss w.r.t. the (centered) output and
chains it through the centering layer and the stack of tanh layers.

Batched variants carry the training loop; the single-sample functions are
thin wrappers over batches of one.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .procrustes import KeypointConfig

CHECKPOINT_FORMAT = "viewconsist-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class SgdConfig:
    """Hyperparameters for SGD with classical momentum and L2 weight decay."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    lr_drop_epoch: int = 70
    lr_drop_factor: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise InvalidInputError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError("momentum must lie in [0, 1)")
        if self.weight_decay < 0.0:
            raise InvalidInputError("weight_decay must be nonnegative")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be positive")
        if self.lr_drop_epoch < 1:
            raise InvalidInputError("lr_drop_epoch must be positive")
        if self.lr_drop_factor <= 0.0:
            raise InvalidInputError("lr_drop_factor must be positive")

    def lr_at(self, epoch: int) -> float:
        """Effective learning rate for a 1-based epoch index."""
        if epoch <= self.lr_drop_epoch:
            return self.learning_rate
        return self.learning_rate * self.lr_drop_factor


@dataclass
class PredictorParams:
    """Weights and biases of the regressor; weights[l] has shape (out, in)."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    n_keypoints: int = 0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidInputError("need matching nonempty weight/bias lists")
        prev = None
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise InvalidInputError("layer shapes are inconsistent")
            if prev is not None and w.shape[1] != prev:
                raise InvalidInputError("layer shapes are inconsistent")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidInputError("parameters must be finite")
            prev = w.shape[0]
        if self.n_keypoints < 2 or prev != 3 * self.n_keypoints:
            raise InvalidInputError(
                f"final layer must emit 3 * {self.n_keypoints} values"
            )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_dims(self) -> tuple:
        return tuple(w.shape[0] for w in self.weights[:-1])


@dataclass
class ParamGrads:
    """A parameter-shaped buffer (gradients or momentum velocities)."""

    weights: list
    biases: list


def zeros_like_params(params: PredictorParams) -> ParamGrads:
    return ParamGrads(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
    )


def init_params(input_dim, hidden_dims, n_keypoints, seed) -> PredictorParams:
    """Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dims = [int(input_dim), *map(int, hidden_dims), 3 * int(n_keypoints)]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return PredictorParams(weights=weights, biases=biases, n_keypoints=n_keypoints)


def _check_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise InvalidInputError(
            f"expected inputs of shape (batch, {params.input_dim}), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("inputs must be finite")
    return x


def _forward_cached(params, x):
    acts = [x]
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w.T + b)
        acts.append(h)
    out = h @ params.weights[-1].T + params.biases[-1]
    return acts, out


def forward_batch(params: PredictorParams, x) -> np.ndarray:
    """Predict centered (batch, 3, d) configurations for (batch, F) inputs."""
    x = _check_batch(params, x)
    _, out = _forward_cached(params, x)
    raw = out.reshape(-1, 3, params.n_keypoints)
    return raw - raw.mean(axis=2, keepdims=True)


def forward(params: PredictorParams, x) -> KeypointConfig:
    """Predict a single centered configuration for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a flat feature vector, got shape {x.shape}")
    return KeypointConfig(forward_batch(params, x[None])[0])


def backward_batch(params: PredictorParams, x, output_grad) -> ParamGrads:
    """Parameter gradients, summed over the batch.

    ``output_grad`` is dL/d(centered output) per sample, shape (batch, 3, d);
    per-sample scaling (batch averaging, loss weights) belongs to the caller.
    The centering layer's Jacobian is part of the chain.
    """
    x = _check_batch(params, x)
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != (x.shape[0], 3, params.n_keypoints):
        raise InvalidInputError(
            f"output_grad shape {g.shape} does not match "
            f"({x.shape[0]}, 3, {params.n_keypoints})"
        )
    acts, _ = _forward_cached(params, x)
    # centering: out = raw - mean(raw) has Jacobian I - (1/d) 11^T per row
    g = g - g.mean(axis=2, keepdims=True)
    g = g.reshape(x.shape[0], -1)

    n_layers = len(params.weights)
    grads = ParamGrads(weights=[None] * n_layers, biases=[None] * n_layers)
    for layer in range(n_layers - 1, -1, -1):
        grads.weights[layer] = g.T @ acts[layer]
        grads.biases[layer] = g.sum(axis=0)
        if layer > 0:
            g = (g @ params.weights[layer]) * (1.0 - acts[layer] ** 2)
    return grads


def backward(params: PredictorParams, x, output_grad) -> ParamGrads:
    """Single-sample parameter gradient for a supplied output gradient."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a flat feature vector, got shape {x.shape}")
    return backward_batch(params, x[None], np.asarray(output_grad)[None])


def sgd_step(
    params: PredictorParams,
    grads: ParamGrads,
    momentum_state: ParamGrads,
    cfg: SgdConfig,
    lr: float | None = None,
):
    """In-place momentum step: v <- m v + (g + wd theta); theta <- theta - lr v.

    Returns the same (params, momentum_state) objects for convenience.
    """
    step = cfg.learning_rate if lr is None else lr
    for w, gw, vw in zip(params.weights, grads.weights, momentum_state.weights):
        vw *= cfg.momentum
        vw += gw + cfg.weight_decay * w
        w -= step * vw
    for b, gb, vb in zip(params.biases, grads.biases, momentum_state.biases):
        vb *= cfg.momentum
        vb += gb + cfg.weight_decay * b
        b -= step * vb
    return params, momentum_state


def save_checkpoint(path, params: PredictorParams, seed=None, extra=None) -> None:
    """Write a self-describing, byte-stable binary checkpoint.

    Layout: one JSON header line (architecture, seed, array manifest) followed
    by the raw little-endian float64 bytes of every array in row-major order.
    Round-trips bit-exactly.
    """
    arrays = []
    manifest = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays.extend([w, b])
        manifest.extend([[f"w{i}", list(w.shape)], [f"b{i}", list(b.shape)]])
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "input_dim": params.input_dim,
        "hidden_dims": list(params.hidden_dims),
        "n_keypoints": params.n_keypoints,
        "seed": seed,
        "extra": extra or {},
        "arrays": manifest,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (params, header dict)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise InvalidInputError(f"{path} is not a predictor checkpoint")
        blobs = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape, dtype=np.int64))
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise InvalidInputError(f"checkpoint truncated while reading {name}")
            blobs[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    n_layers = sum(1 for name in blobs if name.startswith("w"))
    params = PredictorParams(
        weights=[blobs[f"w{i}"] for i in range(n_layers)],
        biases=[blobs[f"b{i}"] for i in range(n_layers)],
        n_keypoints=header["n_keypoints"],
    )
    return params, header
