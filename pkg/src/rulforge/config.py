"""Run configuration: strict JSON schema, defaults, and fingerprints.

Unknown keys are rejected with the offending block and key named, so typos
fail loudly instead of silently falling back to defaults. Two digests are
derived from a config: the run fingerprint (the normalized config minus the
output directory, which cannot change results) and the preprocessing
fingerprint (preprocessing plus feature settings plus content hashes of the
three data files), which trained models are stamped with so evaluation can
refuse mismatched artifacts.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

from .errors import ConfigError
from .metrics import EVAL_MODES
from .nn import MODEL_PRESETS, ModelConfig, TrainConfig
from .preprocess import (
    DEFAULT_RUL_CAP,
    DEFAULT_WINDOW_LENGTH,
    NORMALIZATION_METHODS,
    SmoothingConfig,
)

EVAL_MODE_BOTH = "both"
DEFAULT_VARIANCE_TOL = 1e-12


@dataclass(slots=True)
class DataPaths:
    train: str
    test: str
    rul: str


@dataclass(slots=True)
class RunConfig:
    data: DataPaths
    smoothing: SmoothingConfig
    normalization: str
    rul_cap: int
    window_length: int
    stride: int
    variance_tol: float
    pca_components: int | None
    append_pc1: bool
    select_k: int | None
    model_preset: str | None
    model_config: ModelConfig | None
    train: TrainConfig
    eval_mode: str
    output_dir: str


def _mapping(value, context: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"config: {context} must be an object")
    return value


def _reject_unknown(block: dict, allowed: tuple[str, ...], context: str) -> None:
    for key in block:
        if key not in allowed:
            raise ConfigError(
                f"config: unknown key {key!r} in {context} "
                f"(allowed: {', '.join(allowed)})"
            )


def _get_str(block: dict, key: str, context: str, default=None, required=False):
    if key not in block:
        if required:
            raise ConfigError(f"config: {context}.{key} is required")
        return default
    value = block[key]
    if not isinstance(value, str):
        raise ConfigError(f"config: {context}.{key} must be a string")
    return value


def _get_int(block: dict, key: str, context: str, default=None):
    if key not in block:
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"config: {context}.{key} must be an integer")
    return value


def _get_float(block: dict, key: str, context: str, default=None):
    if key not in block:
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config: {context}.{key} must be a number")
    return float(value)


def _get_bool(block: dict, key: str, context: str, default=None):
    if key not in block:
        return default
    value = block[key]
    if not isinstance(value, bool):
        raise ConfigError(f"config: {context}.{key} must be true or false")
    return value


def _get_int_or_null(block: dict, key: str, context: str):
    if key not in block or block[key] is None:
        return None
    return _get_int(block, key, context)


def _int_tuple(block: dict, key: str, context: str, default: tuple[int, ...]):
    if key not in block:
        return default
    value = block[key]
    if not isinstance(value, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(f"config: {context}.{key} must be a list of integers")
    return tuple(value)


def _parse_data(block: dict) -> DataPaths:
    _reject_unknown(block, ("train", "test", "rul"), "data")
    paths = DataPaths(
        train=_get_str(block, "train", "data", required=True),
        test=_get_str(block, "test", "data", required=True),
        rul=_get_str(block, "rul", "data", required=True),
    )
    for role in ("train", "test", "rul"):
        path = getattr(paths, role)
        if not os.path.exists(path):
            raise ConfigError(f"config: data.{role} path does not exist: {path}")
    return paths


def _parse_smoothing(block: dict) -> SmoothingConfig:
    _reject_unknown(block, ("method", "alpha", "window"), "preprocess.smoothing")
    return SmoothingConfig(
        method=_get_str(block, "method", "preprocess.smoothing", default="ema"),
        alpha=_get_float(block, "alpha", "preprocess.smoothing", default=0.1),
        window=_get_int(block, "window", "preprocess.smoothing", default=5),
    )


def _parse_model(block: dict) -> tuple[str | None, ModelConfig | None]:
    allowed = (
        "preset", "architecture", "conv_filters", "conv_kernel", "pool",
        "lstm_layers", "dense_layers", "mlp_layers",
    )
    _reject_unknown(block, allowed, "model")
    preset = _get_str(block, "preset", "model")
    if preset is not None:
        if len(block) > 1:
            raise ConfigError("config: model.preset excludes other model keys")
        if preset not in MODEL_PRESETS:
            raise ConfigError(
                f"config: unknown model preset {preset!r} "
                f"(available: {', '.join(sorted(MODEL_PRESETS))})"
            )
        return preset, None
    defaults = ModelConfig()
    config = ModelConfig(
        architecture=_get_str(block, "architecture", "model", default="cnn_lstm"),
        conv_filters=_get_int(block, "conv_filters", "model", defaults.conv_filters),
        conv_kernel=_get_int(block, "conv_kernel", "model", defaults.conv_kernel),
        pool=_get_int(block, "pool", "model", defaults.pool),
        lstm_layers=_int_tuple(block, "lstm_layers", "model", defaults.lstm_layers),
        dense_layers=_int_tuple(block, "dense_layers", "model", defaults.dense_layers),
        mlp_layers=_int_tuple(block, "mlp_layers", "model", defaults.mlp_layers),
    )
    return None, config


def _parse_train(block: dict) -> TrainConfig:
    allowed = ("learning_rate", "epochs", "batch_size", "seed", "optimizer", "shuffle")
    _reject_unknown(block, allowed, "train")
    defaults = TrainConfig()
    return TrainConfig(
        learning_rate=_get_float(block, "learning_rate", "train", defaults.learning_rate),
        epochs=_get_int(block, "epochs", "train", defaults.epochs),
        batch_size=_get_int(block, "batch_size", "train", defaults.batch_size),
        seed=_get_int(block, "seed", "train", defaults.seed),
        optimizer=_get_str(block, "optimizer", "train", defaults.optimizer),
        shuffle=_get_bool(block, "shuffle", "train", defaults.shuffle),
    )


def parse_run_config(raw: dict) -> RunConfig:
    top = ("data", "preprocess", "features", "model", "train", "evaluation", "output_dir")
    _reject_unknown(_mapping(raw, "top level"), top, "top level")
    if "data" not in raw:
        raise ConfigError("config: data block is required")
    data = _parse_data(_mapping(raw["data"], "data"))

    prep = _mapping(raw.get("preprocess", {}), "preprocess")
    _reject_unknown(
        prep,
        ("smoothing", "normalization", "rul_cap", "window_length", "stride", "variance_tol"),
        "preprocess",
    )
    smoothing = _parse_smoothing(_mapping(prep.get("smoothing", {}), "preprocess.smoothing"))
    normalization = _get_str(prep, "normalization", "preprocess", default="zscore")
    if normalization not in NORMALIZATION_METHODS:
        raise ConfigError(
            f"config: preprocess.normalization must be one of {NORMALIZATION_METHODS}"
        )
    rul_cap = _get_int(prep, "rul_cap", "preprocess", DEFAULT_RUL_CAP)
    window_length = _get_int(prep, "window_length", "preprocess", DEFAULT_WINDOW_LENGTH)
    stride = _get_int(prep, "stride", "preprocess", 1)
    variance_tol = _get_float(prep, "variance_tol", "preprocess", DEFAULT_VARIANCE_TOL)
    if rul_cap < 1:
        raise ConfigError("config: preprocess.rul_cap must be >= 1")
    if window_length < 1:
        raise ConfigError("config: preprocess.window_length must be >= 1")
    if stride < 1:
        raise ConfigError("config: preprocess.stride must be >= 1")
    if variance_tol < 0:
        raise ConfigError("config: preprocess.variance_tol must be >= 0")

    feats = _mapping(raw.get("features", {}), "features")
    _reject_unknown(feats, ("pca_components", "append_pc1", "select_k"), "features")
    pca_components = _get_int_or_null(feats, "pca_components", "features")
    append_pc1 = _get_bool(feats, "append_pc1", "features", default=True)
    select_k = _get_int_or_null(feats, "select_k", "features")

    preset, model_config = _parse_model(_mapping(raw.get("model", {"preset": "cnn_lstm"}), "model"))
    train = _parse_train(_mapping(raw.get("train", {}), "train"))

    evaluation = _mapping(raw.get("evaluation", {}), "evaluation")
    _reject_unknown(evaluation, ("mode",), "evaluation")
    eval_mode = _get_str(evaluation, "mode", "evaluation", default=EVAL_MODE_BOTH)
    if eval_mode not in EVAL_MODES + (EVAL_MODE_BOTH,):
        raise ConfigError(
            f"config: evaluation.mode must be one of {EVAL_MODES + (EVAL_MODE_BOTH,)}"
        )

    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ConfigError("config: output_dir must be a string")

    return RunConfig(
        data=data,
        smoothing=smoothing,
        normalization=normalization,
        rul_cap=rul_cap,
        window_length=window_length,
        stride=stride,
        variance_tol=variance_tol,
        pca_components=pca_components,
        append_pc1=append_pc1,
        select_k=select_k,
        model_preset=preset,
        model_config=model_config,
        train=train,
        eval_mode=eval_mode,
        output_dir=output_dir,
    )


def load_run_config(
    path: str | os.PathLike,
    out_override: str | None = None,
    seed_override: int | None = None,
) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    cfg = parse_run_config(raw)
    if out_override is not None:
        cfg.output_dir = out_override
    if seed_override is not None:
        cfg.train = TrainConfig(
            learning_rate=cfg.train.learning_rate,
            epochs=cfg.train.epochs,
            batch_size=cfg.train.batch_size,
            seed=seed_override,
            optimizer=cfg.train.optimizer,
            shuffle=cfg.train.shuffle,
        )
    return cfg


def resolve_model_config(cfg: RunConfig) -> ModelConfig:
    if cfg.model_preset is not None:
        return MODEL_PRESETS[cfg.model_preset]
    return cfg.model_config


def _model_block(cfg: RunConfig) -> dict:
    if cfg.model_preset is not None:
        return {"preset": cfg.model_preset}
    mc = cfg.model_config
    return {
        "architecture": mc.architecture,
        "conv_filters": mc.conv_filters,
        "conv_kernel": mc.conv_kernel,
        "pool": mc.pool,
        "lstm_layers": list(mc.lstm_layers),
        "dense_layers": list(mc.dense_layers),
        "mlp_layers": list(mc.mlp_layers),
    }


def _preprocess_block(cfg: RunConfig) -> dict:
    return {
        "smoothing": {
            "method": cfg.smoothing.method,
            "alpha": cfg.smoothing.alpha,
            "window": cfg.smoothing.window,
        },
        "normalization": cfg.normalization,
        "rul_cap": cfg.rul_cap,
        "window_length": cfg.window_length,
        "stride": cfg.stride,
        "variance_tol": cfg.variance_tol,
    }


def _features_block(cfg: RunConfig) -> dict:
    return {
        "pca_components": cfg.pca_components,
        "append_pc1": cfg.append_pc1,
        "select_k": cfg.select_k,
    }


def normalized_dict(cfg: RunConfig) -> dict:
    """The config with every default made explicit (includes output_dir)."""
    return {
        "data": {"train": cfg.data.train, "test": cfg.data.test, "rul": cfg.data.rul},
        "preprocess": _preprocess_block(cfg),
        "features": _features_block(cfg),
        "model": _model_block(cfg),
        "train": {
            "learning_rate": cfg.train.learning_rate,
            "epochs": cfg.train.epochs,
            "batch_size": cfg.train.batch_size,
            "seed": cfg.train.seed,
            "optimizer": cfg.train.optimizer,
            "shuffle": cfg.train.shuffle,
        },
        "evaluation": {"mode": cfg.eval_mode},
        "output_dir": cfg.output_dir,
    }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def run_fingerprint(cfg: RunConfig) -> str:
    """Digest of every result-affecting setting; key order never matters."""
    payload = normalized_dict(cfg)
    payload.pop("output_dir")
    return _sha256_text(canonical_json(payload))


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def prep_fingerprint(cfg: RunConfig) -> str:
    """Digest tying prepared artifacts to preprocessing settings and data
    content, used to refuse evaluating a model against foreign artifacts."""
    payload = {
        "preprocess": _preprocess_block(cfg),
        "features": _features_block(cfg),
        "data": {
            "train": _sha256_file(cfg.data.train),
            "test": _sha256_file(cfg.data.test),
            "rul": _sha256_file(cfg.data.rul),
        },
    }
    return _sha256_text(canonical_json(payload))
