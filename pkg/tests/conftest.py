"""Shared fixtures: synthetic dataset, config factory, real-data discovery."""

from __future__ import annotations

import json
import os

import pytest

from synthdata import write_split

REAL_DATA_FILES = {
    "train": "train_FD001.txt",
    "test": "test_FD001.txt",
    "rul": "RUL_FD001.txt",
}


def find_real_data() -> dict[str, str] | None:
    """Locate the turbofan FD001 files via CMAPSS_DIR or a repo-level data/ dir."""
    candidates = []
    env_dir = os.environ.get("CMAPSS_DIR")
    if env_dir:
        candidates.append(env_dir)
    candidates.append(os.path.join(os.path.dirname(os.path.dirname(__file__)), "data"))
    for root in candidates:
        paths = {role: os.path.join(root, name) for role, name in REAL_DATA_FILES.items()}
        if all(os.path.isfile(p) for p in paths.values()):
            return paths
    return None


@pytest.fixture(scope="session")
def real_data_paths():
    paths = find_real_data()
    if paths is None:
        pytest.skip("FD001 data not present (set CMAPSS_DIR or place files under data/)")
    return paths


@pytest.fixture(scope="session")
def synth_paths(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthdata")
    return write_split(out)


# Populated by the decorator in test_acceptance; one entry per criterion.
# Rendered after the run so the verdict lines survive output capture.
ACCEPTANCE_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        label, status, note = ACCEPTANCE_RESULTS[n]
        suffix = f"  ({note})" if note else ""
        terminalreporter.write_line(f"ACCEPTANCE {n} [{label}]: {status}{suffix}")


@pytest.fixture
def make_config(synth_paths, tmp_path):
    """Factory writing a run-config JSON aimed at the synthetic dataset.

    Keyword overrides are merged shallowly per top-level block.
    """

    def _make(**overrides) -> str:
        cfg = {
            "data": dict(synth_paths),
            "preprocess": {
                "smoothing": {"method": "ema", "alpha": 0.1},
                "rul_cap": 40,
                "window_length": 12,
                "stride": 1,
            },
            "features": {"pca_components": 2, "append_pc1": True},
            "model": {
                "architecture": "cnn_lstm",
                "conv_filters": 8,
                "conv_kernel": 3,
                "pool": 2,
                "lstm_layers": [8, 6],
                "dense_layers": [6, 1],
            },
            "train": {"epochs": 2, "batch_size": 32, "learning_rate": 0.001, "seed": 3},
            "evaluation": {"mode": "both"},
            "output_dir": str(tmp_path / "out"),
        }
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(cfg.get(key), dict):
                merged = dict(cfg[key])
                merged.update(value)
                cfg[key] = merged
            else:
                cfg[key] = value
        path = tmp_path / "run.json"
        path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
        return str(path)

    return _make
