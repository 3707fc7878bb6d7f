"""From-scratch fully connected feed-forward ReLU network.

Conventions used throughout the package:

* ``layer_sizes = (n_0, ..., n_H)``: n_0 input features, n_H = 1 single
  linear output node, layers 1..H-1 hidden with ReLU.
* Weight layer p (1-based, p in 1..H) connects layer p-1 to layer p and is
  stored as ``weights[p-1]`` with shape (n_{p-1}, n_p), so W[i, j] is the
  weight from node i to node j. Node indices are 0-based.
* The Heaviside gate used for activities and the ReLU subgradient is 1 at
  exactly 0.
* All computation is float64.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError

RELU = "relu"
BIAS_ZERO = "zero"
BIAS_TRAINABLE = "trainable"


@dataclass(frozen=True)
class NetworkArch:
    """Shape of the network: at least one hidden layer, single output node."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str = RELU
    bias_mode: str = BIAS_ZERO

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ConfigError("need at least one hidden layer (len(layer_sizes) >= 3)")
        if any(n <= 0 for n in sizes):
            raise ConfigError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] != 1:
            raise ConfigError(f"single linear output node required, got n_H={sizes[-1]}")
        if self.hidden_activation != RELU:
            raise ConfigError(f"unsupported activation {self.hidden_activation!r}")
        if self.bias_mode not in (BIAS_ZERO, BIAS_TRAINABLE):
            raise ConfigError(f"unknown bias_mode {self.bias_mode!r}")

    @property
    def depth(self) -> int:
        """H: number of weight layers."""
        return len(self.layer_sizes) - 1

    @property
    def n_features(self) -> int:
        return self.layer_sizes[0]

    def hidden_layers(self) -> range:
        """Indices of the ReLU-gated layers (1..H-1)."""
        return range(1, self.depth)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 256
    epochs: int = 500
    optimizer: str = "adam"
    loss_halved: bool = True
    init_low: float = -0.05
    init_high: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size >= 1 and epochs >= 0 required")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not self.init_low < self.init_high:
            raise ConfigError("init_low < init_high required")


@dataclass
class LayeredNetwork:
    arch: NetworkArch
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "LayeredNetwork":
        return LayeredNetwork(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def validate(self):
        sizes = self.arch.layer_sizes
        if len(self.weights) != self.arch.depth or len(self.biases) != self.arch.depth:
            raise ShapeError("one weight matrix and bias vector per layer 1..H required")
        for p in range(1, self.arch.depth + 1):
            if self.weights[p - 1].shape != (sizes[p - 1], sizes[p]):
                raise ShapeError(
                    f"weight layer {p}: expected {(sizes[p - 1], sizes[p])}, "
                    f"got {self.weights[p - 1].shape}"
                )
            if self.biases[p - 1].shape != (sizes[p],):
                raise ShapeError(f"bias layer {p}: expected ({sizes[p]},)")
        if self.arch.bias_mode == BIAS_ZERO:
            for b in self.biases:
                if np.any(b != 0.0):
                    raise ShapeError("zero-bias network has a nonzero bias")


@dataclass
class Dataset:
    features: np.ndarray  # (M, d)
    targets: np.ndarray  # (M,)
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError("features must be a 2-d (samples x features) array")
        if self.targets.shape != (self.features.shape[0],):
            raise ShapeError("targets must be a vector matching the sample count")
        if self.features.shape[0] < 1:
            raise ShapeError("dataset needs at least one sample")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class SnapshotSeries:
    """Per-epoch copies of all parameters recorded during training.

    snapshots[k] is a (weights, biases) pair of lists; epoch_indices[k] is the
    epoch after which it was taken, with index 0 = the initial network.
    loss_history[e] is the mean minibatch loss of epoch e+1 (length = epochs).
    """

    arch: NetworkArch
    snapshots: list[tuple[list[np.ndarray], list[np.ndarray]]]
    epoch_indices: list[int]
    loss_history: list[float]
    seed: int
    config: TrainConfig | None = None

    def network_at(self, k: int) -> LayeredNetwork:
        w, b = self.snapshots[k]
        return LayeredNetwork(self.arch, [x.copy() for x in w], [x.copy() for x in b])


def init_network(arch: NetworkArch, config: TrainConfig) -> LayeredNetwork:
    """Uniform initialization on [init_low, init_high], deterministic per seed.

    All weight matrices are drawn before any bias vector, so adding trainable
    biases does not reshuffle the weight draws.
    """
    rng = np.random.default_rng(config.seed)
    sizes = arch.layer_sizes
    weights = [
        rng.uniform(config.init_low, config.init_high, size=(sizes[p - 1], sizes[p]))
        for p in range(1, arch.depth + 1)
    ]
    if arch.bias_mode == BIAS_TRAINABLE:
        biases = [
            rng.uniform(config.init_low, config.init_high, size=sizes[p])
            for p in range(1, arch.depth + 1)
        ]
    else:
        biases = [np.zeros(sizes[p]) for p in range(1, arch.depth + 1)]
    net = LayeredNetwork(arch, weights, biases)
    net.validate()
    return net


def _check_input(net: LayeredNetwork, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.arch.n_features:
        raise ShapeError(f"expected {net.arch.n_features} features, got shape {X.shape}")
    return X


def forward_trace(net: LayeredNetwork, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """All pre- and post-activations for a batch.

    Returns (pre, post) where pre[p-1] and post[p-1] have shape (M, n_p) for
    layer p in 1..H. The output layer is linear: post[-1] == pre[-1].
    """
    X = _check_input(net, X)
    pre = []
    post = []
    h = X
    H = net.arch.depth
    for p in range(1, H + 1):
        z = h @ net.weights[p - 1] + net.biases[p - 1]
        pre.append(z)
        h = np.maximum(z, 0.0) if p < H else z
        post.append(h)
    return pre, post


def forward_batch(net: LayeredNetwork, X: np.ndarray) -> np.ndarray:
    """Network outputs for a batch, shape (M,)."""
    _, post = forward_trace(net, X)
    return post[-1][:, 0]


def forward(net: LayeredNetwork, x: np.ndarray) -> float:
    """Scalar output for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward() takes a single input vector; use forward_batch for batches")
    return float(forward_batch(net, x[None, :])[0])


def loss_mse(targets: np.ndarray, predictions: np.ndarray, halved: bool = True) -> float:
    """Mean squared error, with the conventional 1/2 prefactor if halved."""
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if targets.shape != predictions.shape or targets.ndim != 1:
        raise ShapeError("targets and predictions must be equal-length vectors")
    if targets.size == 0:
        raise ConfigError("loss of an empty batch is undefined")
    scale = 0.5 if halved else 1.0
    return float(scale * np.mean((targets - predictions) ** 2))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def backprop_gradient(net: LayeredNetwork, batch: Dataset, halved: bool = True) -> Gradients:
    """Exact reverse-mode gradient of the MSE loss over the batch.

    ReLU subgradient at exactly 0 is taken as 1, matching the Heaviside
    convention used by the path formalism.
    """
    X = _check_input(net, batch.features)
    y = batch.targets
    M = X.shape[0]
    H = net.arch.depth
    pre, post = forward_trace(net, X)
    y_hat = post[-1][:, 0]
    # dL/dy_hat; the 1/2 prefactor cancels one factor of 2 when halved.
    scale = 1.0 if halved else 2.0
    delta = (scale / M) * (y_hat - y)[:, None]  # (M, 1)

    g_w = [np.empty(0)] * H
    g_b = [np.empty(0)] * H
    for p in range(H, 0, -1):
        h_prev = X if p == 1 else post[p - 2]
        g_w[p - 1] = h_prev.T @ delta
        g_b[p - 1] = delta.sum(axis=0)
        if p > 1:
            gate = np.where(pre[p - 2] >= 0.0, 1.0, 0.0)
            delta = (delta @ net.weights[p - 1].T) * gate
    return Gradients(g_w, g_b)


@dataclass
class OptimizerState:
    kind: str
    step: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def optimizer_step(
    net: LayeredNetwork,
    grads: Gradients,
    config: TrainConfig,
    state: OptimizerState | None = None,
) -> tuple[LayeredNetwork, OptimizerState]:
    """One SGD or Adam update, in place. Returns (net, carried state)."""
    if state is None:
        state = OptimizerState(kind=config.optimizer)
        if config.optimizer == "adam":
            state.m_w = [np.zeros_like(w) for w in net.weights]
            state.v_w = [np.zeros_like(w) for w in net.weights]
            state.m_b = [np.zeros_like(b) for b in net.biases]
            state.v_b = [np.zeros_like(b) for b in net.biases]
    if state.kind != config.optimizer:
        raise ConfigError("optimizer state does not match config")

    eta = config.learning_rate
    trainable_bias = net.arch.bias_mode == BIAS_TRAINABLE

    if config.optimizer == "sgd":
        for p in range(net.arch.depth):
            if np.any(grads.weights[p]):
                net.weights[p] -= eta * grads.weights[p]
            if trainable_bias and np.any(grads.biases[p]):
                net.biases[p] -= eta * grads.biases[p]
        state.step += 1
        return net, state

    state.step += 1
    t = state.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for p in range(net.arch.depth):
        g = grads.weights[p]
        state.m_w[p] = ADAM_BETA1 * state.m_w[p] + (1 - ADAM_BETA1) * g
        state.v_w[p] = ADAM_BETA2 * state.v_w[p] + (1 - ADAM_BETA2) * g * g
        if np.any(g):
            net.weights[p] -= eta * (state.m_w[p] / c1) / (np.sqrt(state.v_w[p] / c2) + ADAM_EPS)
        if trainable_bias:
            gb = grads.biases[p]
            state.m_b[p] = ADAM_BETA1 * state.m_b[p] + (1 - ADAM_BETA1) * gb
            state.v_b[p] = ADAM_BETA2 * state.v_b[p] + (1 - ADAM_BETA2) * gb * gb
            if np.any(gb):
                net.biases[p] -= eta * (state.m_b[p] / c1) / (np.sqrt(state.v_b[p] / c2) + ADAM_EPS)
    return net, state


def _snapshot(net: LayeredNetwork) -> tuple[list[np.ndarray], list[np.ndarray]]:
    return ([w.copy() for w in net.weights], [b.copy() for b in net.biases])


def train(net: LayeredNetwork, data: Dataset, config: TrainConfig) -> SnapshotSeries:
    """Mini-batch training with a full parameter snapshot after every epoch.

    Batches are formed by a seeded shuffle each epoch; the final short batch
    is used. Raises DivergenceError when the loss stops being finite.
    """
    if data.features.shape[1] != net.arch.n_features:
        raise ShapeError("dataset features do not match the network input width")
    M = len(data)
    rng = np.random.default_rng(config.seed)
    state: OptimizerState | None = None
    series = SnapshotSeries(
        arch=net.arch,
        snapshots=[_snapshot(net)],
        epoch_indices=[0],
        loss_history=[],
        seed=config.seed,
        config=copy.copy(config),
    )
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(M)
        batch_losses = []
        for start in range(0, M, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = Dataset(data.features[idx], data.targets[idx], name=data.name)
            preds = forward_batch(net, batch.features)
            batch_losses.append(loss_mse(batch.targets, preds, halved=config.loss_halved))
            grads = backprop_gradient(net, batch, halved=config.loss_halved)
            net, state = optimizer_step(net, grads, config, state)
        epoch_loss = float(np.mean(batch_losses))
        if not np.isfinite(epoch_loss):
            raise DivergenceError(
                f"training diverged at epoch {epoch} (seed {config.seed}): loss={epoch_loss}"
            )
        series.loss_history.append(epoch_loss)
        series.snapshots.append(_snapshot(net))
        series.epoch_indices.append(epoch)
    return series


def accuracy(net: LayeredNetwork, data: Dataset) -> float:
    """Fraction of samples whose rounded prediction equals the target."""
    if len(data) == 0:
        raise ConfigError("accuracy of an empty dataset is undefined")
    preds = forward_batch(net, data.features)
    return float(np.mean(np.rint(preds) == data.targets))


# ---------------------------------------------------------------------------
# snapshot serialization: meta.json + one npz per recorded epoch


def save_snapshots(series: SnapshotSeries, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k, (ws, bs) in enumerate(series.snapshots):
        fname = f"snapshot_{series.epoch_indices[k]:04d}.npz"
        arrays = {f"w{p + 1}": ws[p] for p in range(len(ws))}
        arrays.update({f"b{p + 1}": bs[p] for p in range(len(bs))})
        np.savez(out / fname, **arrays)
        files.append(fname)
    cfg = series.config
    meta = {
        "arch": {
            "layer_sizes": list(series.arch.layer_sizes),
            "hidden_activation": series.arch.hidden_activation,
            "bias_mode": series.arch.bias_mode,
        },
        "config": None
        if cfg is None
        else {
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "optimizer": cfg.optimizer,
            "loss_halved": cfg.loss_halved,
            "init_low": cfg.init_low,
            "init_high": cfg.init_high,
            "seed": cfg.seed,
        },
        "seed": series.seed,
        "epoch_indices": series.epoch_indices,
        "loss_history": series.loss_history,
        "files": files,
    }
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_snapshots(in_dir: str | Path) -> SnapshotSeries:
    src = Path(in_dir)
    with open(src / "meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    arch = NetworkArch(
        tuple(meta["arch"]["layer_sizes"]),
        meta["arch"]["hidden_activation"],
        meta["arch"]["bias_mode"],
    )
    cfg = None
    if meta.get("config"):
        cfg = TrainConfig(**meta["config"])
    snapshots = []
    H = arch.depth
    for fname in meta["files"]:
        with np.load(src / fname) as npz:
            ws = [npz[f"w{p}"] for p in range(1, H + 1)]
            bs = [npz[f"b{p}"] for p in range(1, H + 1)]
        snapshots.append((ws, bs))
    return SnapshotSeries(
        arch=arch,
        snapshots=snapshots,
        epoch_indices=list(meta["epoch_indices"]),
        loss_history=list(meta["loss_history"]),
        seed=int(meta["seed"]),
        config=cfg,
    )
