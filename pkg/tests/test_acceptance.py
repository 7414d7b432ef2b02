"""Release gate: the ten checks a build must clear before it ships.

Each test prints one verdict line (PASS / FAIL / SKIP) into the terminal
summary via the registry in conftest. Tolerances here are pinned; loosening
one is a release decision, not a test fix.

The three checks against the real turbofan dataset skip with an explanation
when the files are absent, since the data cannot be redistributed with the
code. Point CMAPSS_DIR at a directory holding train_FD001.txt,
test_FD001.txt and RUL_FD001.txt (or drop them under data/) to enable them.
"""

import functools
import math
import os
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import ACCEPTANCE_RESULTS, find_real_data
from test_baselines import exhaustive_root_split
from test_features import jacobi_eigh
from test_kernels import naive_conv_forward, naive_maxpool_forward

from rulforge.autodiff import (
    Tensor,
    add,
    conv1d,
    grad_check,
    index_time,
    matmul,
    maxpool1d,
    mse_loss,
    mul,
    relu,
    reshape,
    sigmoid,
    sub,
    tanh,
    tensor_sum,
)
from rulforge.baselines import (
    BoostConfig,
    boost_fit,
    boost_staged_predict,
    linreg_fit,
    linreg_predict,
    tree_fit,
)
from rulforge.cmapss import group_engines, parse_records
from rulforge.config import parse_run_config, resolve_model_config
from rulforge.features import pca_fit
from rulforge.frame import FeatureFrame
from rulforge.kernels import conv1d_forward, maxpool1d_forward
from rulforge.metrics import nasa_score, r2, rmse
from rulforge.nn import (
    MODEL_PRESETS,
    LstmParams,
    ModelConfig,
    Network,
    _forward_graph,
    build_network,
    predict,
    train,
)
from rulforge.pipeline import MODEL_FILE, build_prepared, cmd_prepare, cmd_train
from rulforge.preprocess import RulTargetConfig, label_piecewise_rul


def criterion(n: int, label: str):
    """Record and print a one-line verdict for acceptance check `n`."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException as exc:
                if isinstance(exc, pytest.skip.Exception):
                    status, note = "SKIP", str(exc).splitlines()[0]
                else:
                    status, note = "FAIL", type(exc).__name__
                ACCEPTANCE_RESULTS[n] = (label, status, note)
                print(f"ACCEPTANCE {n} [{label}]: {status}")
                raise
            ACCEPTANCE_RESULTS[n] = (label, "PASS", "")
            print(f"ACCEPTANCE {n} [{label}]: PASS")

        return run

    return wrap


# ------------------------------------------------------- real-data fixtures

SKIP_REASON = "FD001 data not present (set CMAPSS_DIR or place files under data/)"


@pytest.fixture(scope="module")
def fd001_run():
    """Default-config pipeline artifacts plus a trained model, or None.

    Returns None instead of skipping so each dependent test can record its
    own SKIP verdict. Training time is measured here and checked against the
    runtime budget by the accuracy criterion.
    """
    paths = find_real_data()
    if paths is None:
        return None
    cfg = parse_run_config({"data": dict(paths)})
    prepared = build_prepared(cfg)
    t0 = time.perf_counter()
    trained = train(resolve_model_config(cfg), cfg.train, prepared.windows_train)
    elapsed = time.perf_counter() - t0
    return cfg, prepared, trained, elapsed


def _require_real(run):
    if run is None:
        pytest.skip(SKIP_REASON)


@criterion(1, "held-out last-cycle accuracy")
def test_real_data_last_cycle_accuracy(fd001_run):
    _require_real(fd001_run)
    _, prepared, trained, elapsed = fd001_run
    last = prepared.windows_test_last
    preds = predict(trained, last)
    assert rmse(preds, last.labels) <= 16.0
    assert r2(preds, last.labels) >= 0.78
    assert elapsed <= 1800.0  # thirty-minute training budget


@criterion(2, "beats lstm and linear baselines")
def test_default_model_beats_simpler_models(fd001_run):
    _require_real(fd001_run)
    cfg, prepared, trained, _ = fd001_run
    last = prepared.windows_test_last
    r2_main = r2(predict(trained, last), last.labels)

    lstm = train(MODEL_PRESETS["lstm"], cfg.train, prepared.windows_train)
    r2_lstm = r2(predict(lstm, last), last.labels)

    # the linear baseline sees the last row of each training window
    x_train = prepared.windows_train.data[:, -1, :]
    lin = linreg_fit(x_train, prepared.windows_train.labels)
    lin_preds = np.clip(linreg_predict(lin, last.data[:, -1, :]), 0.0, last.cap)
    r2_lin = r2(lin_preds, last.labels)

    assert r2_main > r2_lstm
    assert r2_main > r2_lin


@criterion(3, "top-two component variance share")
def test_leading_components_carry_most_variance(fd001_run):
    _require_real(fd001_run)
    _, prepared, _, _ = fd001_run
    ratios = prepared.pca_model.explained_variance_ratio
    top_two = float(ratios[0] + ratios[1])
    assert 0.60 <= top_two <= 0.80


# --------------------------------------------------------- scoring oracles


@criterion(4, "scoring penalty elementwise oracle")
def test_scoring_penalty_matches_elementwise_oracle():
    rng = np.random.default_rng(2024)
    actual = rng.uniform(0.0, 130.0, size=10_000)
    h = rng.uniform(-50.0, 50.0, size=10_000)
    h[::97] = 0.0  # exact hits must contribute nothing
    expected = 0.0
    for d in h:
        expected += math.exp(-d / 13.0) - 1.0 if d < 0 else math.exp(d / 10.0) - 1.0
    assert_allclose(nasa_score(actual + h, actual), expected, rtol=1e-12, atol=1e-12)

    for k in (1.0, 5.0, 10.0, 20.0):
        late = nasa_score([100.0 + k], [100.0])
        early = nasa_score([100.0 - k], [100.0])
        assert late > early  # overestimating remaining life costs more


@criterion(6, "rmse and r2 pinned fixtures")
def test_error_metrics_reproduce_pinned_fixtures():
    assert_allclose(rmse([1.0, 2.0, 3.0], [2.0, 4.0, 5.0]), math.sqrt(3.0), rtol=1e-12)
    assert rmse([5.0, 5.0], [5.0, 5.0]) == 0.0

    preds = np.array([2.0, 4.0, 6.0, 8.0])
    actual = np.array([1.0, 5.0, 5.0, 9.0])
    ss_res = float(np.sum((actual - preds) ** 2))
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    assert_allclose(r2(preds, actual), 1.0 - ss_res / ss_tot, rtol=1e-12)

    actual = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
    assert r2(np.full(5, actual.mean()), actual) == 0.0


# ------------------------------------------------------------ label curve


@criterion(7, "capped linear rul labels")
def test_rul_labels_exact_for_long_engine():
    rows = "\n".join(f"1 {c} " + " ".join("0.0" for _ in range(24)) for c in range(1, 201))
    series = group_engines(parse_records(rows))[0]
    labels = label_piecewise_rul(series, RulTargetConfig(cap=130))
    cycles = np.arange(1, 201)
    assert_array_equal(labels, np.minimum(130.0, 200.0 - cycles))


# --------------------------------------------------------------- gradients

LSTM_FIELDS = (
    "w_f", "w_i", "w_o", "w_g",
    "u_f", "u_i", "u_o", "u_g",
    "b_f", "b_i", "b_o", "b_g",
)


def _net_from(template: Network, mapping: dict) -> Network:
    """Clone the template's wiring around externally supplied tensors."""
    conv = (mapping["conv.w"], mapping["conv.b"]) if template.conv is not None else None
    lstms = [
        LstmParams(**{f: mapping[f"lstm{i}.{f}"] for f in LSTM_FIELDS})
        for i in range(len(template.lstms))
    ]
    dense = [
        (mapping[f"dense{i}.w"], mapping[f"dense{i}.b"])
        for i in range(len(template.dense))
    ]
    return Network(
        config=template.config,
        window_len=template.window_len,
        n_features=template.n_features,
        params=mapping,
        conv=conv,
        lstms=lstms,
        dense=dense,
    )


def _op_cases():
    rng = np.random.default_rng(55)
    n = rng.normal
    x_relu = n(size=8)
    x_relu[np.abs(x_relu) < 0.2] += 0.5  # keep clear of the kink
    x_pool = rng.permutation(np.arange(24.0)).reshape(1, 12, 2) * 0.37
    return [
        ("add", lambda a, b: tensor_sum(add(a, b)), [n(size=(3, 2)), n(size=(3, 2))]),
        ("add_bias", lambda a, b: tensor_sum(add(a, b)), [n(size=(3, 2)), n(size=2)]),
        ("sub", lambda a, b: tensor_sum(sub(a, b)), [n(size=4), n(size=4)]),
        ("mul", lambda a, b: tensor_sum(mul(a, b)), [n(size=(3, 2)), n(size=(3, 2))]),
        ("matmul", lambda a, b: tensor_sum(matmul(a, b)), [n(size=(3, 4)), n(size=(4, 2))]),
        ("relu", lambda a: tensor_sum(relu(a)), [x_relu]),
        ("sigmoid", lambda a: tensor_sum(sigmoid(a)), [n(size=5)]),
        ("tanh", lambda a: tensor_sum(tanh(a)), [n(size=5)]),
        ("reshape", lambda a: tensor_sum(reshape(a, (6,))), [n(size=(2, 3))]),
        ("index_time", lambda a: tensor_sum(index_time(a, 1)), [n(size=(2, 4, 3))]),
        ("mse", lambda a, b: mse_loss(a, b), [n(size=6), n(size=6)]),
        ("sum", lambda a: tensor_sum(a), [n(size=(4, 3))]),
        ("conv", lambda *t: tensor_sum(conv1d(*t)), [n(size=(2, 7, 3)), n(size=(3, 3, 4)), n(size=4)]),
        ("maxpool", lambda a: tensor_sum(maxpool1d(a, 3)), [x_pool]),
    ]


GRAD_NET = ModelConfig(
    architecture="cnn_lstm",
    conv_filters=3,
    conv_kernel=2,
    pool=2,
    lstm_layers=(3,),
    dense_layers=(3, 1),
)


@criterion(5, "gradient finite-difference agreement")
def test_gradients_match_finite_differences():
    for name, fn, point in _op_cases():
        err = grad_check(fn, point)
        assert err < 1e-6, f"{name}: {err:.3e}"

    # the whole default architecture, end to end, twenty fresh draws
    worst = 0.0
    for seed in range(20):
        net = build_network(GRAD_NET, window_len=6, n_features=2, seed=seed)
        names = sorted(net.params)
        rng = np.random.default_rng([seed, 99])
        x = rng.normal(size=(2, 6, 2))
        y = rng.uniform(0.2, 0.8, size=2)

        def loss_fn(*tensors, _names=names, _net=net, _x=x, _y=y):
            clone = _net_from(_net, dict(zip(_names, tensors)))
            return mse_loss(_forward_graph(clone, Tensor(_x)), Tensor(_y))

        point = [net.params[name].data for name in names]
        worst = max(worst, grad_check(loss_fn, point))
    assert worst < 1e-4


# --------------------------------------------------------------- dual routes


@criterion(8, "dual-route kernel, split, pca agreement")
def test_independent_routes_agree():
    rng = np.random.default_rng(88)

    # integer-valued inputs make both conv routes bit-identical
    x = rng.integers(-9, 10, size=(3, 9, 2)).astype(np.float64)
    w = rng.integers(-9, 10, size=(3, 2, 4)).astype(np.float64)
    b = rng.integers(-9, 10, size=4).astype(np.float64)
    assert_array_equal(conv1d_forward(x, w, b), naive_conv_forward(x, w, b))

    xp = rng.integers(-9, 10, size=(2, 10, 3)).astype(np.float64)
    out, idx = maxpool1d_forward(xp, 3)
    exp_out, exp_idx = naive_maxpool_forward(xp, 3)
    assert_array_equal(out, exp_out)
    assert_array_equal(idx, exp_idx)

    # greedy root split vs brute force over every candidate threshold
    for trial in range(10):
        xt = rng.normal(size=(20, 3))
        yt = rng.normal(size=20)
        node = tree_fit(xt, yt, max_depth=1)
        _, feature, threshold = exhaustive_root_split(xt, yt)
        assert node.feature == feature, f"trial {trial}"
        assert_allclose(node.threshold, threshold, rtol=1e-12)

    # eigh-based fit vs a cyclic Jacobi eigensolver
    data = rng.normal(size=(60, 5)) @ rng.normal(size=(5, 5))
    frame = FeatureFrame(
        columns=tuple(f"c{i}" for i in range(5)),
        values=data,
        units=np.ones(60, dtype=np.int64),
        cycles=np.arange(1, 61),
    )
    model = pca_fit(frame)
    centered = data - data.mean(axis=0)
    jac_vals, _ = jacobi_eigh(centered.T @ centered / data.shape[0])
    assert_allclose(model.eigenvalues, np.sort(jac_vals)[::-1], rtol=0, atol=1e-8)


# ------------------------------------------------------------- determinism


def _artifact_bytes(out_dir: str) -> dict[str, bytes]:
    # manifests embed wall-clock timings, so they differ between runs
    table = {}
    for name in sorted(os.listdir(out_dir)):
        if name.endswith("_manifest.json"):
            continue
        with open(os.path.join(out_dir, name), "rb") as fh:
            table[name] = fh.read()
    return table


def _small_cfg(synth_paths, out_dir: str):
    return parse_run_config(
        {
            "data": dict(synth_paths),
            "preprocess": {
                "smoothing": {"method": "ema", "alpha": 0.1},
                "rul_cap": 40,
                "window_length": 12,
                "stride": 2,
            },
            "features": {"pca_components": 2},
            "model": {
                "architecture": "cnn_lstm",
                "conv_filters": 4,
                "conv_kernel": 3,
                "pool": 2,
                "lstm_layers": [6],
                "dense_layers": [4, 1],
            },
            "train": {"epochs": 2, "batch_size": 32, "seed": 11},
            "output_dir": out_dir,
        }
    )


@criterion(9, "byte-identical reruns")
def test_pipeline_reruns_are_byte_identical(synth_paths, tmp_path):
    cfg_a = _small_cfg(synth_paths, str(tmp_path / "a"))
    cfg_b = _small_cfg(synth_paths, str(tmp_path / "b"))

    cmd_prepare(cfg_a)
    cmd_prepare(cfg_b)
    assert _artifact_bytes(cfg_a.output_dir) == _artifact_bytes(cfg_b.output_dir)

    cmd_train(cfg_a)
    first = _artifact_bytes(cfg_a.output_dir)
    assert MODEL_FILE in first
    cmd_train(cfg_a)
    assert _artifact_bytes(cfg_a.output_dir) == first


# ----------------------------------------------------------------- boosting


@criterion(10, "boosting stagewise error monotone")
def test_boosting_training_error_never_increases():
    rng = np.random.default_rng(909)
    x = rng.normal(size=(600, 4))
    y = 2.0 * x[:, 0] - x[:, 1] ** 2 + rng.normal(size=600) * 0.25
    model = boost_fit(x, y, BoostConfig())
    mses = [float(np.mean((stage - y) ** 2)) for stage in boost_staged_predict(model, x)]
    assert len(mses) == BoostConfig().n_estimators + 1
    assert np.all(np.diff(mses) <= 1e-12)
    assert mses[-1] < mses[0]
