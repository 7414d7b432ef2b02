"""Windowed sequence regressors built on the autodiff tape.

Four architectures share one training loop: an MLP over the flattened
window, a 1-D CNN, a stacked LSTM, and the CNN-LSTM hybrid (convolution,
relu, max pooling, LSTM stack, dense head). Labels are divided by the RUL
cap during training; predictions are rescaled and clipped to [0, cap] at
inference only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import persist
from .autodiff import (
    Tape,
    Tensor,
    add,
    conv1d,
    index_time,
    matmul,
    maxpool1d,
    mse_loss,
    mul,
    relu,
    reshape,
    sigmoid,
    tanh,
)
from .errors import (
    ConfigError,
    EmptyInputError,
    NonFiniteLossError,
    TooFewEnginesError,
)
from .preprocess import WindowSet

ARCHITECTURES = ("mlp", "cnn", "lstm", "cnn_lstm")
OPTIMIZERS = ("adam", "sgd")

# Learning rate paired with SGD for the tuned MLP preset.
MLP_SGD_LEARNING_RATE = 0.1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(slots=True)
class ModelConfig:
    architecture: str = "cnn_lstm"
    conv_filters: int = 64
    conv_kernel: int = 3
    pool: int = 2
    lstm_layers: tuple[int, ...] = (64, 32)
    dense_layers: tuple[int, ...] = (32, 1)
    mlp_layers: tuple[int, ...] = (32, 64, 64, 32, 16)

    def __post_init__(self):
        self.lstm_layers = tuple(self.lstm_layers)
        self.dense_layers = tuple(self.dense_layers)
        self.mlp_layers = tuple(self.mlp_layers)
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.conv_filters < 1 or self.conv_kernel < 1 or self.pool < 1:
            raise ConfigError("conv_filters, conv_kernel, and pool must be >= 1")
        if not self.lstm_layers or any(h < 1 for h in self.lstm_layers):
            raise ConfigError("lstm_layers must be non-empty positive sizes")
        if not self.dense_layers or self.dense_layers[-1] != 1:
            raise ConfigError("dense_layers must end with an output of size 1")
        if any(h < 1 for h in self.dense_layers):
            raise ConfigError("dense_layers must be positive sizes")
        if not self.mlp_layers or any(h < 1 for h in self.mlp_layers):
            raise ConfigError("mlp_layers must be non-empty positive sizes")


@dataclass(slots=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "adam"
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


MODEL_PRESETS: dict[str, ModelConfig] = {
    "cnn_lstm": ModelConfig(architecture="cnn_lstm"),
    "lstm": ModelConfig(architecture="lstm"),
    "cnn": ModelConfig(architecture="cnn"),
    "mlp": ModelConfig(architecture="mlp"),
}


@dataclass(slots=True)
class LstmParams:
    """Gate parameters of one LSTM layer (forget, input, output, candidate)."""

    w_f: Tensor
    w_i: Tensor
    w_o: Tensor
    w_g: Tensor
    u_f: Tensor
    u_i: Tensor
    u_o: Tensor
    u_g: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_g: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.{name}": getattr(self, name)
            for name in (
                "w_f", "w_i", "w_o", "w_g",
                "u_f", "u_i", "u_o", "u_g",
                "b_f", "b_i", "b_o", "b_g",
            )
        }


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, p: LstmParams) -> tuple[Tensor, Tensor]:
    """One LSTM step.

    f = sig(xW_f + hU_f + b_f), i and o likewise, g = tanh(xW_g + hU_g + b_g);
    c' = f*c + i*g and h' = o * tanh(c').
    """
    f = sigmoid(add(add(matmul(x, p.w_f), matmul(h, p.u_f)), p.b_f))
    i = sigmoid(add(add(matmul(x, p.w_i), matmul(h, p.u_i)), p.b_i))
    o = sigmoid(add(add(matmul(x, p.w_o), matmul(h, p.u_o)), p.b_o))
    g = tanh(add(add(matmul(x, p.w_g), matmul(h, p.u_g)), p.b_g))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


@dataclass(slots=True)
class Network:
    """Instantiated parameters plus the geometry they were built for."""

    config: ModelConfig
    window_len: int
    n_features: int
    params: dict[str, Tensor]
    conv: tuple[Tensor, Tensor] | None
    lstms: list[LstmParams]
    dense: list[tuple[Tensor, Tensor]]


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _validate_geometry(config: ModelConfig, window_len: int) -> int:
    """Width of the sequence after the conv/pool front end; ConfigError if empty."""
    if config.architecture in ("cnn", "cnn_lstm"):
        if config.conv_kernel > window_len:
            raise ConfigError(
                f"conv_kernel {config.conv_kernel} exceeds window length {window_len}"
            )
        steps = (window_len - config.conv_kernel + 1) // config.pool
        if steps < 1:
            raise ConfigError(
                "conv/pool geometry leaves no time steps "
                f"(window {window_len}, kernel {config.conv_kernel}, pool {config.pool})"
            )
        return steps
    return window_len


def build_network(
    config: ModelConfig, window_len: int, n_features: int, seed: int
) -> Network:
    """Create freshly initialized parameters.

    Weights draw from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start
    at zero except the LSTM forget gate, which starts at 1. The draw order
    (conv, then each LSTM layer's W then U matrices gate by gate, then each
    dense layer) is part of the reproducibility contract.
    """
    steps = _validate_geometry(config, window_len)
    rng = np.random.default_rng([seed, 0])
    params: dict[str, Tensor] = {}
    conv = None
    lstms: list[LstmParams] = []
    dense: list[tuple[Tensor, Tensor]] = []
    arch = config.architecture

    if arch in ("cnn", "cnn_lstm"):
        fan_in = config.conv_kernel * n_features
        w = Tensor(_uniform(rng, (config.conv_kernel, n_features, config.conv_filters), fan_in))
        b = Tensor(np.zeros(config.conv_filters))
        conv = (w, b)
        params["conv.w"] = w
        params["conv.b"] = b

    if arch in ("lstm", "cnn_lstm"):
        in_dim = config.conv_filters if arch == "cnn_lstm" else n_features
        for li, hidden in enumerate(config.lstm_layers):
            gates_w = {
                name: Tensor(_uniform(rng, (in_dim, hidden), in_dim))
                for name in ("w_f", "w_i", "w_o", "w_g")
            }
            gates_u = {
                name: Tensor(_uniform(rng, (hidden, hidden), hidden))
                for name in ("u_f", "u_i", "u_o", "u_g")
            }
            biases = {
                "b_f": Tensor(np.ones(hidden)),
                "b_i": Tensor(np.zeros(hidden)),
                "b_o": Tensor(np.zeros(hidden)),
                "b_g": Tensor(np.zeros(hidden)),
            }
            layer = LstmParams(**gates_w, **gates_u, **biases)
            params.update(layer.named(f"lstm{li}"))
            lstms.append(layer)
            in_dim = hidden

    if arch == "mlp":
        width = window_len * n_features
        sizes = config.mlp_layers + (1,)
    elif arch == "cnn":
        width = steps * config.conv_filters
        sizes = config.dense_layers
    else:
        width = config.lstm_layers[-1]
        sizes = config.dense_layers

    for di, out_dim in enumerate(sizes):
        w = Tensor(_uniform(rng, (width, out_dim), width))
        b = Tensor(np.zeros(out_dim))
        dense.append((w, b))
        params[f"dense{di}.w"] = w
        params[f"dense{di}.b"] = b
        width = out_dim

    return Network(
        config=config,
        window_len=window_len,
        n_features=n_features,
        params=params,
        conv=conv,
        lstms=lstms,
        dense=dense,
    )


def _forward_graph(net: Network, x: Tensor) -> Tensor:
    """Predictions on the normalized label scale, shape (batch,)."""
    cfg = net.config
    batch = x.shape[0]
    arch = cfg.architecture

    if arch == "mlp":
        feat = reshape(x, (batch, net.window_len * net.n_features))
    else:
        seq = x
        if arch in ("cnn", "cnn_lstm"):
            w, b = net.conv
            seq = maxpool1d(relu(conv1d(seq, w, b)), cfg.pool)
        if arch == "cnn":
            feat = reshape(seq, (batch, seq.shape[1] * seq.shape[2]))
        else:
            states = [
                (Tensor(np.zeros((batch, h))), Tensor(np.zeros((batch, h))))
                for h in cfg.lstm_layers
            ]
            for t in range(seq.shape[1]):
                step = index_time(seq, t)
                for li, layer in enumerate(net.lstms):
                    h_prev, c_prev = states[li]
                    h_next, c_next = lstm_cell(step, h_prev, c_prev, layer)
                    states[li] = (h_next, c_next)
                    step = h_next
            feat = states[-1][0]

    last = len(net.dense) - 1
    for di, (w, b) in enumerate(net.dense):
        feat = add(matmul(feat, w), b)
        if di < last:
            feat = relu(feat)
    return reshape(feat, (batch,))


class _Sgd:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self):
        for t in self.params.values():
            t.data -= self.lr * t.grad


class _Adam:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self):
        self.t += 1
        correct1 = 1.0 - ADAM_BETA1 ** self.t
        correct2 = 1.0 - ADAM_BETA2 ** self.t
        for name, tensor in self.params.items():
            g = tensor.grad
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            tensor.data -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)


@dataclass(slots=True)
class TrainedModel:
    """Everything needed to reload and apply a trained network."""

    config: ModelConfig
    train_config: TrainConfig
    params: dict[str, np.ndarray]
    window_len: int
    n_features: int
    columns: tuple[str, ...]
    cap: float
    loss_curve: list[float]
    fingerprint: str = ""


def train(config: ModelConfig, tcfg: TrainConfig, windows: WindowSet) -> TrainedModel:
    """Minibatch training against MSE on cap-normalized labels.

    Deterministic for a fixed (config, tcfg, windows): initialization and
    shuffling use generators derived from tcfg.seed. A NaN or infinite batch
    loss aborts with NonFiniteLossError carrying the epoch.
    """
    if windows.n_windows == 0:
        raise EmptyInputError("cannot train on an empty window set")
    net = build_network(config, windows.window_len, windows.n_features, tcfg.seed)
    shuffle_rng = np.random.default_rng([tcfg.seed, 1])
    targets = windows.labels / windows.cap
    n = windows.n_windows
    if tcfg.optimizer == "adam":
        optimizer = _Adam(net.params, tcfg.learning_rate)
    else:
        optimizer = _Sgd(net.params, tcfg.learning_rate)
    loss_curve: list[float] = []
    for epoch in range(tcfg.epochs):
        order = shuffle_rng.permutation(n) if tcfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, tcfg.batch_size):
            batch = order[start:start + tcfg.batch_size]
            x = Tensor(windows.data[batch])
            y = Tensor(targets[batch])
            # an exploding step overflows to inf here; that is the detected
            # failure mode, not a numerics bug worth a warning
            with np.errstate(over="ignore", invalid="ignore"):
                with Tape() as tape:
                    pred = _forward_graph(net, x)
                    loss = mse_loss(pred, y)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NonFiniteLossError(epoch=epoch, loss=value)
            tape.backward(loss)
            optimizer.step()
            total += value * batch.size
        loss_curve.append(total / n)
    return TrainedModel(
        config=config,
        train_config=tcfg,
        params={name: t.data.copy() for name, t in net.params.items()},
        window_len=windows.window_len,
        n_features=windows.n_features,
        columns=windows.columns,
        cap=windows.cap,
        loss_curve=loss_curve,
    )


def network_from_trained(model: TrainedModel) -> Network:
    """Rebuild a Network whose tensors hold the trained parameter values."""
    net = build_network(model.config, model.window_len, model.n_features, seed=0)
    for name, tensor in net.params.items():
        tensor.data = np.array(model.params[name], dtype=np.float64)
    return net


def predict(model: TrainedModel, windows: WindowSet, batch_size: int = 256) -> np.ndarray:
    """RUL estimates in cycles, clipped to [0, cap]; order follows windows."""
    if windows.n_features != model.n_features or windows.window_len != model.window_len:
        raise ConfigError(
            "window geometry "
            f"({windows.window_len}, {windows.n_features}) does not match model "
            f"({model.window_len}, {model.n_features})"
        )
    net = network_from_trained(model)
    chunks = []
    for start in range(0, windows.n_windows, batch_size):
        x = Tensor(windows.data[start:start + batch_size])
        chunks.append(_forward_graph(net, x).data)
    raw = np.concatenate(chunks) if chunks else np.empty(0)
    return np.clip(raw * model.cap, 0.0, model.cap)


def _split_entry(entry, tcfg: TrainConfig) -> tuple[ModelConfig, TrainConfig]:
    if isinstance(entry, ModelConfig):
        return entry, tcfg
    model_config, entry_tcfg = entry
    return model_config, entry_tcfg


def assign_folds(units: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministically partition distinct unit ids into near-equal folds."""
    distinct = np.unique(units)
    if distinct.size < folds:
        raise TooFewEnginesError(
            f"{distinct.size} engines cannot fill {folds} folds"
        )
    rng = np.random.default_rng([seed, 2])
    return [np.sort(part) for part in np.array_split(rng.permutation(distinct), folds)]


def cross_validate(
    grid: Sequence,
    tcfg: TrainConfig,
    windows: WindowSet,
    folds: int = 5,
):
    """Grouped k-fold search over model (and optionally train) configs.

    Folds split by engine so no unit appears on both sides. Returns the best
    grid entry and a list of (entry, mean validation RMSE); ties keep the
    earlier entry, and a configuration that diverges on any fold scores inf.
    """
    from .metrics import rmse

    if windows.n_windows == 0:
        raise EmptyInputError("cannot cross-validate an empty window set")
    fold_units = assign_folds(windows.units, folds, tcfg.seed)
    results = []
    for ci, entry in enumerate(grid):
        model_config, base_tcfg = _split_entry(entry, tcfg)
        fold_scores = []
        for fi, held_out in enumerate(fold_units):
            mask = np.isin(windows.units, held_out)
            train_ws = windows.take(~mask)
            val_ws = windows.take(mask)
            seed = int(np.random.SeedSequence([base_tcfg.seed, ci, fi]).generate_state(1)[0])
            fold_tcfg = replace(base_tcfg, seed=seed)
            try:
                model = train(model_config, fold_tcfg, train_ws)
                fold_scores.append(rmse(predict(model, val_ws), val_ws.labels))
            except NonFiniteLossError:
                fold_scores.append(math.inf)
        results.append((entry, float(np.mean(fold_scores))))
    best = int(np.argmin([score for _, score in results]))
    return results[best][0], results


def _config_to_meta(model: TrainedModel) -> dict:
    return {
        "architecture": {
            "architecture": model.config.architecture,
            "conv_filters": model.config.conv_filters,
            "conv_kernel": model.config.conv_kernel,
            "pool": model.config.pool,
            "lstm_layers": list(model.config.lstm_layers),
            "dense_layers": list(model.config.dense_layers),
            "mlp_layers": list(model.config.mlp_layers),
        },
        "train": {
            "learning_rate": model.train_config.learning_rate,
            "epochs": model.train_config.epochs,
            "batch_size": model.train_config.batch_size,
            "seed": model.train_config.seed,
            "optimizer": model.train_config.optimizer,
            "shuffle": model.train_config.shuffle,
        },
        "window_len": model.window_len,
        "n_features": model.n_features,
        "columns": list(model.columns),
        "cap": model.cap,
        "loss_curve": model.loss_curve,
        "fingerprint": model.fingerprint,
    }


def save_model(path, model: TrainedModel) -> None:
    """Write a self-describing single-file model."""
    persist.save_container(path, kind="model", meta=_config_to_meta(model),
                           tensors=model.params)


def load_model(path) -> TrainedModel:
    kind, meta, tensors = persist.load_container(path)
    if kind != "model":
        raise ConfigError(f"{path} is a {kind!r} container, not a model")
    arch = dict(meta["architecture"])
    for key in ("lstm_layers", "dense_layers", "mlp_layers"):
        arch[key] = tuple(arch[key])
    return TrainedModel(
        config=ModelConfig(**arch),
        train_config=TrainConfig(**meta["train"]),
        params=tensors,
        window_len=int(meta["window_len"]),
        n_features=int(meta["n_features"]),
        columns=tuple(meta["columns"]),
        cap=float(meta["cap"]),
        loss_curve=[float(v) for v in meta["loss_curve"]],
        fingerprint=str(meta["fingerprint"]),
    )
