"""The preprocessing pipeline and the five command implementations.

Pipeline order: parse and validate the split, drop constant columns (fitted
on raw train data), smooth per engine, normalize with train-fitted
statistics, fit PCA, append the first principal component, rank features by
F score against the piecewise RUL target, keep the top k, and cut windows.
Every artifact lands in the configured output directory through atomic
writes, and each command leaves a manifest naming exactly what it wrote.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .baselines import (
    BoostConfig,
    ForestConfig,
    boost_fit,
    boost_predict,
    forest_fit,
    forest_predict,
    linreg_fit,
    linreg_predict,
)
from .cmapss import DatasetSplit, EngineSeries, load_split, write_snapshot_csv
from .config import (
    EVAL_MODE_BOTH,
    RunConfig,
    normalized_dict,
    prep_fingerprint,
    resolve_model_config,
    run_fingerprint,
)
from .errors import ConfigError, DataError, FingerprintMismatchError
from .features import (
    append_pc1,
    correlation_matrix,
    default_k,
    f_scores,
    pca_fit,
    pca_transform,
    select_k_best,
)
from .frame import FeatureFrame
from .metrics import (
    MODE_LAST_CYCLE,
    MODE_PER_WINDOW,
    EvalReport,
    evaluate_pair,
)
from .nn import (
    MLP_SGD_LEARNING_RATE,
    MODEL_PRESETS,
    load_model,
    predict,
    save_model,
    train,
)
from .persist import atomic_write_text, load_windows, save_windows
from .preprocess import (
    RulTargetConfig,
    WindowSet,
    drop_constant_features,
    label_piecewise_rul,
    label_test_rul,
    make_test_windows,
    make_train_windows,
    normalize_apply,
    normalize_fit,
    smooth_frame,
)

SNAPSHOT_TRAIN = "snapshot_train.csv"
SNAPSHOT_TEST = "snapshot_test.csv"
TRAIN_FRAME = "train_frame.csv"
TEST_FRAME = "test_frame.csv"
DROPPED_FEATURES = "dropped_features.json"
WINDOWS_TRAIN = "windows_train.rfc"
WINDOWS_TEST_LAST = "windows_test_last.rfc"
WINDOWS_TEST_FULL = "windows_test_full.rfc"
MODEL_FILE = "model.rfc"
LOSS_CURVE = "loss_curve.csv"
EVALUATION_JSON = "evaluation.json"
COMPARE_CSV = "compare.csv"
COMPARE_JSON = "compare.json"

COMPARE_ROSTER = ("linreg", "random_forest", "gradient_boost", "mlp", "lstm", "cnn_lstm")

HISTOGRAM_BINS = 50
PARALLEL_COORDS_STRIDE = 10


def worker_count() -> int:
    """Worker cap from RULFORGE_THREADS; defaults to 1 (fully sequential)."""
    raw = os.environ.get("RULFORGE_THREADS", "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"RULFORGE_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"RULFORGE_THREADS must be >= 1, got {value}")
    return value


@dataclass(slots=True)
class PreparedData:
    """Every intermediate stage of the preprocessing pipeline."""

    split: DatasetSplit
    raw_train: FeatureFrame
    raw_test: FeatureFrame
    variances: dict[str, float]
    dropped: list[str]
    smoothed_train: FeatureFrame
    smoothed_test: FeatureFrame
    normalized_train: FeatureFrame
    normalized_test: FeatureFrame
    train_labels: np.ndarray
    test_labels: np.ndarray
    pca_model: object
    ranking: object
    selected_columns: tuple[str, ...]
    final_train: FeatureFrame
    final_test: FeatureFrame
    windows_train: WindowSet
    windows_test_last: WindowSet
    windows_test_full: WindowSet
    fingerprint: str


def _per_row_labels(
    frame: FeatureFrame,
    engines: dict[int, EngineSeries],
    target: RulTargetConfig,
    true_rul: dict[int, int] | None,
) -> np.ndarray:
    labels = np.empty(frame.n_rows)
    for unit, rows in frame.engine_groups():
        series = engines[unit]
        if true_rul is None:
            labels[rows] = label_piecewise_rul(series, target)
        else:
            labels[rows] = label_test_rul(series, true_rul[unit], target)
    return labels


def build_prepared(cfg: RunConfig) -> PreparedData:
    """Run the full deterministic pipeline in memory."""
    split = load_split(cfg.data.train, cfg.data.test, cfg.data.rul)
    raw_train = FeatureFrame.from_series(split.train)
    raw_test = FeatureFrame.from_series(split.test)

    variances = {
        name: float(v)
        for name, v in zip(raw_train.columns, raw_train.values.var(axis=0))
    }
    reduced_train, dropped = drop_constant_features(raw_train, cfg.variance_tol)
    reduced_test = raw_test.select(reduced_train.columns, note="drop_constant")

    smoothed_train = smooth_frame(reduced_train, cfg.smoothing)
    smoothed_test = smooth_frame(reduced_test, cfg.smoothing)

    target = RulTargetConfig(cap=cfg.rul_cap)
    train_engines = {eng.unit_id: eng for eng in split.train}
    test_engines = {eng.unit_id: eng for eng in split.test}
    rul_by_unit = {
        eng.unit_id: rul for eng, rul in zip(split.test, split.true_rul)
    }
    train_labels = _per_row_labels(smoothed_train, train_engines, target, None)
    test_labels = _per_row_labels(smoothed_test, test_engines, target, rul_by_unit)

    stats = normalize_fit(smoothed_train, cfg.normalization)
    normalized_train = normalize_apply(smoothed_train, stats)
    normalized_test = normalize_apply(smoothed_test, stats)

    pca_model = pca_fit(normalized_train, cfg.pca_components)
    if cfg.append_pc1:
        feats_train = append_pc1(normalized_train, pca_model)
        feats_test = append_pc1(normalized_test, pca_model)
    else:
        feats_train = normalized_train
        feats_test = normalized_test

    ranking = f_scores(feats_train, train_labels)
    k = cfg.select_k if cfg.select_k is not None else default_k(feats_train.n_columns)
    top = set(select_k_best(ranking, k))
    selected = tuple(c for c in feats_train.columns if c in top)
    final_train = feats_train.select(selected, note="select_k_best")
    final_test = feats_test.select(selected, note="select_k_best")

    cap = float(cfg.rul_cap)
    windows_train = make_train_windows(
        final_train, train_labels, cfg.window_length, cfg.stride, cap
    )
    windows_test_last = make_test_windows(
        final_test, split.true_rul, cfg.window_length, cap
    )
    windows_test_full = make_train_windows(
        final_test, test_labels, cfg.window_length, stride=1, cap=cap
    )

    return PreparedData(
        split=split,
        raw_train=raw_train,
        raw_test=raw_test,
        variances=variances,
        dropped=dropped,
        smoothed_train=smoothed_train,
        smoothed_test=smoothed_test,
        normalized_train=normalized_train,
        normalized_test=normalized_test,
        train_labels=train_labels,
        test_labels=test_labels,
        pca_model=pca_model,
        ranking=ranking,
        selected_columns=selected,
        final_train=final_train,
        final_test=final_test,
        windows_train=windows_train,
        windows_test_last=windows_test_last,
        windows_test_full=windows_test_full,
        fingerprint=prep_fingerprint(cfg),
    )


# --- serialization helpers -------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


class ArtifactWriter:
    """Writes files under one directory and remembers their names."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def text(self, name: str, content: str) -> None:
        atomic_write_text(self.path(name), content)
        self.files.append(name)

    def csv(self, name: str, header, rows) -> None:
        self.text(name, _csv_text(header, rows))

    def json(self, name: str, payload) -> None:
        from .config import canonical_json

        self.text(name, canonical_json(payload) + "\n")

    def windows(self, name: str, windows: WindowSet, fingerprint: str, stride: int) -> None:
        save_windows(self.path(name), windows, fingerprint, stride)
        self.files.append(name)

    def manifest(self, name: str, command: str, cfg: RunConfig, timings: dict) -> dict:
        payload = {
            "command": command,
            "tool": "rulforge",
            "version": __version__,
            "config_fingerprint": run_fingerprint(cfg),
            "config": normalized_dict(cfg),
            "files": sorted(self.files + [name]),
            "timings_s": {k: round(v, 6) for k, v in timings.items()},
        }
        self.json(name, payload)
        return payload


def _frame_csv(writer: ArtifactWriter, name: str, frame: FeatureFrame, labels) -> None:
    header = ("unit_id", "cycle") + frame.columns + ("rul",)
    rows = (
        [int(u), int(c)] + [float(v) for v in row] + [float(lab)]
        for u, c, row, lab in zip(frame.units, frame.cycles, frame.values, labels)
    )
    writer.csv(name, header, rows)


# --- commands ----------------------------------------------------------------


def cmd_prepare(cfg: RunConfig) -> dict:
    """Build and persist every preprocessing artifact. Idempotent."""
    t0 = time.perf_counter()
    prepared = build_prepared(cfg)
    t1 = time.perf_counter()
    writer = ArtifactWriter(cfg.output_dir)
    write_snapshot_csv(prepared.split.train, writer.path(SNAPSHOT_TRAIN))
    writer.files.append(SNAPSHOT_TRAIN)
    write_snapshot_csv(prepared.split.test, writer.path(SNAPSHOT_TEST))
    writer.files.append(SNAPSHOT_TEST)
    _frame_csv(writer, TRAIN_FRAME, prepared.final_train, prepared.train_labels)
    _frame_csv(writer, TEST_FRAME, prepared.final_test, prepared.test_labels)
    writer.json(
        DROPPED_FEATURES,
        {
            "tolerance": cfg.variance_tol,
            "dropped": prepared.dropped,
            "variances": prepared.variances,
        },
    )
    fp = prepared.fingerprint
    writer.windows(WINDOWS_TRAIN, prepared.windows_train, fp, cfg.stride)
    writer.windows(WINDOWS_TEST_LAST, prepared.windows_test_last, fp, cfg.stride)
    writer.windows(WINDOWS_TEST_FULL, prepared.windows_test_full, fp, 1)
    t2 = time.perf_counter()
    return writer.manifest(
        "prepare_manifest.json",
        "prepare",
        cfg,
        {"pipeline": t1 - t0, "write": t2 - t1},
    )


def _require(out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    if not os.path.exists(path):
        raise DataError(f"missing artifact {path}; run `rulforge prepare` first")
    return path


def cmd_analyze(cfg: RunConfig) -> dict:
    """Emit plot-ready exploratory tables next to the prepared artifacts."""
    _require(cfg.output_dir, WINDOWS_TRAIN)
    t0 = time.perf_counter()
    prepared = build_prepared(cfg)
    writer = ArtifactWriter(cfg.output_dir)

    first_unit, first_rows = next(prepared.raw_train.engine_groups())
    writer.csv(
        "life_curves.csv",
        ("cycle",) + prepared.raw_train.columns,
        (
            [int(c)] + [float(v) for v in row]
            for c, row in zip(
                prepared.raw_train.cycles[first_rows],
                prepared.raw_train.values[first_rows],
            )
        ),
    )

    hist_rows = []
    for j, name in enumerate(prepared.raw_train.columns):
        col = prepared.raw_train.values[:, j]
        counts, edges = np.histogram(col, bins=HISTOGRAM_BINS)
        for b, count in enumerate(counts):
            hist_rows.append([name, float(edges[b]), float(edges[b + 1]), int(count)])
    writer.csv(
        "sensor_histograms.csv",
        ("feature", "bin_left", "bin_right", "count"),
        hist_rows,
    )

    frame = prepared.normalized_train
    stride_rows = np.arange(0, frame.n_rows, PARALLEL_COORDS_STRIDE)
    writer.csv(
        "parallel_coordinates.csv",
        ("unit_id", "cycle", "rul") + frame.columns,
        (
            [int(frame.units[i]), int(frame.cycles[i]), float(prepared.train_labels[i])]
            + [float(v) for v in frame.values[i]]
            for i in stride_rows
        ),
    )

    smoothed = prepared.smoothed_train
    failure_cycle = {eng.unit_id: eng.max_cycle for eng in prepared.split.train}
    writer.csv(
        "engine_smoothed.csv",
        ("unit_id", "cycle", "is_failure") + smoothed.columns,
        (
            [int(u), int(c), int(c == failure_cycle[int(u)])]
            + [float(v) for v in row]
            for u, c, row in zip(smoothed.units, smoothed.cycles, smoothed.values)
        ),
    )

    raw_reduced = prepared.raw_train.select(smoothed.columns)
    first_col = smoothed.columns[0]
    writer.csv(
        "raw_vs_smoothed.csv",
        ("cycle", "raw", "smoothed"),
        (
            [int(c), float(r), float(s)]
            for c, r, s in zip(
                smoothed.cycles[first_rows],
                raw_reduced.values[first_rows, raw_reduced.index(first_col)],
                smoothed.values[first_rows, smoothed.index(first_col)],
            )
        ),
    )

    pca = prepared.pca_model
    writer.csv(
        "explained_variance.csv",
        ("component", "eigenvalue", "explained_variance_ratio"),
        (
            [i + 1, float(pca.eigenvalues[i]), float(pca.explained_variance_ratio[i])]
            for i in range(len(pca.eigenvalues))
        ),
    )

    projected = pca_transform(pca, prepared.normalized_train)
    pc_cols = projected.columns[: min(2, projected.n_columns)]
    writer.csv(
        "pc_projection.csv",
        ("unit_id", "cycle", "rul") + pc_cols,
        (
            [int(projected.units[i]), int(projected.cycles[i]), float(prepared.train_labels[i])]
            + [float(projected.values[i, j]) for j in range(len(pc_cols))]
            for i in range(projected.n_rows)
        ),
    )

    feats = (
        append_pc1(prepared.normalized_train, pca)
        if cfg.append_pc1
        else prepared.normalized_train
    )
    corr = correlation_matrix(feats)
    writer.csv(
        "correlation_matrix.csv",
        ("feature",) + feats.columns,
        (
            [feats.columns[i]] + [float(v) for v in corr[i]]
            for i in range(len(feats.columns))
        ),
    )

    ranking = prepared.ranking
    selected = set(prepared.selected_columns)
    score_rows = []
    for pos, col in enumerate(ranking.order):
        name = ranking.names[col]
        score = float(ranking.scores[col])
        log10_f = repr(math.log10(score)) if 0.0 < score < math.inf else ""
        score_rows.append([name, score, log10_f, pos + 1, int(name in selected)])
    writer.csv(
        "f_scores.csv",
        ("feature", "f_score", "log10_f", "rank", "selected"),
        score_rows,
    )

    t1 = time.perf_counter()
    return writer.manifest(
        "analyze_manifest.json", "analyze", cfg, {"analyze": t1 - t0}
    )


def cmd_train(cfg: RunConfig) -> dict:
    """Train the configured model on the prepared training windows."""
    path = _require(cfg.output_dir, WINDOWS_TRAIN)
    t0 = time.perf_counter()
    windows, meta = load_windows(path)
    expected = prep_fingerprint(cfg)
    if meta["fingerprint"] != expected:
        raise FingerprintMismatchError(
            "prepared windows were built from a different config or data; rerun prepare"
        )
    model_config = resolve_model_config(cfg)
    t1 = time.perf_counter()
    trained = train(model_config, cfg.train, windows)
    trained.fingerprint = expected
    t2 = time.perf_counter()
    writer = ArtifactWriter(cfg.output_dir)
    save_model(writer.path(MODEL_FILE), trained)
    writer.files.append(MODEL_FILE)
    writer.csv(
        LOSS_CURVE,
        ("epoch", "loss"),
        ([e + 1, float(v)] for e, v in enumerate(trained.loss_curve)),
    )
    t3 = time.perf_counter()
    return writer.manifest(
        "train_manifest.json",
        "train",
        cfg,
        {"load": t1 - t0, "train": t2 - t1, "write": t3 - t2},
    )


def _reports_for(
    cfg: RunConfig,
    name: str,
    per_window: np.ndarray | None,
    last_cycle: np.ndarray | None,
    windows_full: WindowSet,
    windows_last: WindowSet,
) -> list[EvalReport]:
    fingerprint = run_fingerprint(cfg)
    reports = []
    if per_window is not None:
        reports.append(
            evaluate_pair(per_window, windows_full.labels, MODE_PER_WINDOW, name, fingerprint)
        )
    if last_cycle is not None:
        reports.append(
            evaluate_pair(last_cycle, windows_last.labels, MODE_LAST_CYCLE, name, fingerprint)
        )
    return reports


def cmd_evaluate(cfg: RunConfig, model_path: str | None = None) -> dict:
    """Score a trained model on the held-out windows in the configured modes."""
    t0 = time.perf_counter()
    model_path = model_path or _require(cfg.output_dir, MODEL_FILE)
    if not os.path.exists(model_path):
        raise DataError(f"model file not found: {model_path}")
    trained = load_model(model_path)
    windows_full, meta_full = load_windows(_require(cfg.output_dir, WINDOWS_TEST_FULL))
    windows_last, meta_last = load_windows(_require(cfg.output_dir, WINDOWS_TEST_LAST))
    for meta in (meta_full, meta_last):
        if trained.fingerprint != meta["fingerprint"]:
            raise FingerprintMismatchError(
                "model was trained on artifacts with a different fingerprint; "
                "rerun prepare and train with this config"
            )
    modes = (
        (MODE_PER_WINDOW, MODE_LAST_CYCLE)
        if cfg.eval_mode == EVAL_MODE_BOTH
        else (cfg.eval_mode,)
    )
    per_window = (
        predict(trained, windows_full) if MODE_PER_WINDOW in modes else None
    )
    last_cycle = (
        predict(trained, windows_last) if MODE_LAST_CYCLE in modes else None
    )
    reports = _reports_for(
        cfg, trained.config.architecture, per_window, last_cycle, windows_full, windows_last
    )
    t1 = time.perf_counter()
    writer = ArtifactWriter(cfg.output_dir)
    writer.json(EVALUATION_JSON, [r.to_dict() for r in reports])
    return writer.manifest(
        "evaluate_manifest.json", "evaluate", cfg, {"evaluate": t1 - t0}
    )


def _derived_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def _clip_cap(values: np.ndarray, cap: float) -> np.ndarray:
    return np.clip(values, 0.0, cap)


def _compare_member(
    name: str,
    index: int,
    cfg: RunConfig,
    windows_train: WindowSet,
    windows_full: WindowSet,
    windows_last: WindowSet,
) -> list[EvalReport]:
    """Train one roster member and score it in both modes."""
    cap = windows_train.cap
    seed = _derived_seed(cfg.train.seed, index)
    if name in ("linreg", "random_forest", "gradient_boost"):
        x_train = windows_train.data[:, -1, :]
        y_train = windows_train.labels
        x_full = windows_full.data[:, -1, :]
        x_last = windows_last.data[:, -1, :]
        if name == "linreg":
            model = linreg_fit(x_train, y_train)
            full, last = linreg_predict(model, x_full), linreg_predict(model, x_last)
        elif name == "random_forest":
            forest = forest_fit(x_train, y_train, ForestConfig(seed=seed))
            full, last = forest_predict(forest, x_full), forest_predict(forest, x_last)
        else:
            boost = boost_fit(x_train, y_train, BoostConfig(seed=seed))
            full, last = boost_predict(boost, x_full), boost_predict(boost, x_last)
        full, last = _clip_cap(full, cap), _clip_cap(last, cap)
    else:
        tcfg = replace(cfg.train, seed=seed)
        if name == "mlp":
            tcfg = replace(tcfg, optimizer="sgd", learning_rate=MLP_SGD_LEARNING_RATE)
        trained = train(MODEL_PRESETS[name], tcfg, windows_train)
        full = predict(trained, windows_full)
        last = predict(trained, windows_last)
    return _reports_for(cfg, name, full, last, windows_full, windows_last)


def _rank(values: list[float | None], descending: bool) -> list[int | None]:
    present = [(v, i) for i, v in enumerate(values) if v is not None]
    ordered = sorted(present, key=lambda p: (-p[0] if descending else p[0]))
    ranks: list[int | None] = [None] * len(values)
    for pos, (_, i) in enumerate(ordered):
        ranks[i] = pos + 1
    return ranks


def cmd_compare(cfg: RunConfig) -> dict:
    """Fit the whole roster on the same artifacts and tabulate the metrics.

    A member that fails records its error and leaves the others alone.
    Members run on up to RULFORGE_THREADS workers; results are assembled in
    roster order either way.
    """
    windows_train, meta = load_windows(_require(cfg.output_dir, WINDOWS_TRAIN))
    windows_full, _ = load_windows(_require(cfg.output_dir, WINDOWS_TEST_FULL))
    windows_last, _ = load_windows(_require(cfg.output_dir, WINDOWS_TEST_LAST))
    expected = prep_fingerprint(cfg)
    if meta["fingerprint"] != expected:
        raise FingerprintMismatchError(
            "prepared windows were built from a different config or data; rerun prepare"
        )
    t0 = time.perf_counter()

    def member(args) -> tuple[str, list[EvalReport] | None, str | None]:
        index, name = args
        try:
            reports = _compare_member(
                name, index, cfg, windows_train, windows_full, windows_last
            )
            return name, reports, None
        except Exception as exc:  # per-member isolation by design
            return name, None, f"{type(exc).__name__}: {exc}"

    jobs = list(enumerate(COMPARE_ROSTER))
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(member, jobs))
    else:
        outcomes = [member(job) for job in jobs]
    t1 = time.perf_counter()

    metric_cols = []
    for mode in (MODE_PER_WINDOW, MODE_LAST_CYCLE):
        for metric in ("rmse", "r2", "nasa_score"):
            metric_cols.append((metric, mode))

    table: dict[str, dict] = {}
    json_rows = []
    for name, reports, error in outcomes:
        row: dict = {"status": "ok" if error is None else "error", "error": error or ""}
        if reports is not None:
            for report in reports:
                for metric in ("rmse", "r2", "nasa_score"):
                    row[(metric, report.mode)] = getattr(report, metric)
            json_rows.extend(r.to_dict() for r in reports)
        table[name] = row
        json_rows.append(
            {"model": name, "status": row["status"], "error": error}
        )

    ranks: dict[tuple[str, str], list[int | None]] = {}
    for metric, mode in metric_cols:
        values = [table[name].get((metric, mode)) for name in COMPARE_ROSTER]
        ranks[(metric, mode)] = _rank(values, descending=(metric == "r2"))

    header = ["model", "status"]
    for metric, mode in metric_cols:
        header.append(f"{metric}_{mode}")
    for metric, mode in metric_cols:
        header.append(f"rank_{metric}_{mode}")
    header.append("error")

    rows = []
    for i, name in enumerate(COMPARE_ROSTER):
        row = [name, table[name]["status"]]
        for metric, mode in metric_cols:
            value = table[name].get((metric, mode))
            row.append("" if value is None else float(value))
        for metric, mode in metric_cols:
            rank = ranks[(metric, mode)][i]
            row.append("" if rank is None else rank)
        row.append(table[name]["error"])
        rows.append(row)

    writer = ArtifactWriter(cfg.output_dir)
    writer.csv(COMPARE_CSV, header, rows)
    writer.json(COMPARE_JSON, json_rows)
    return writer.manifest(
        "compare_manifest.json", "compare", cfg, {"compare": t1 - t0}
    )
