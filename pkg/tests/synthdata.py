"""Deterministic synthetic run-to-failure generator for tests.

Mimics the real text layout: 26 whitespace-delimited fields per row, train
units running to failure, test units truncated with a separate true-RUL
file. Several sensors trend with degradation, a fixed subset stays constant
(so constant-column screening has something to do), and the rest is noise.
"""

from __future__ import annotations

import os

import numpy as np

CONSTANT_SENSORS = (1, 5, 10, 16, 18, 19)   # 1-based sensor numbers held flat


def mean_channel_windows(n=500, length=16, features=4, seed=0, cap=1.0):
    """A learnable window task: channel 0 is constant per window and equals
    the label; the rest is noise. Labels are uniform on [0, cap]."""
    from rulforge.preprocess import WindowSet

    rng = np.random.default_rng(seed)
    labels = rng.uniform(0.0, cap, size=n)
    data = rng.normal(size=(n, length, features))
    data[:, :, 0] = labels[:, None]
    return WindowSet(
        data=data,
        labels=labels,
        window_len=length,
        units=(np.arange(n) % 10 + 1).astype(np.int64),
        last_cycles=np.arange(1, n + 1, dtype=np.int64),
        columns=tuple(f"c{i}" for i in range(features)),
        cap=float(cap),
    )


def _engine_rows(unit: int, length: int, rng: np.random.Generator) -> list[str]:
    t = np.arange(1, length + 1, dtype=np.float64)
    degradation = (t / length) ** 1.5
    rows = []
    setting_1 = rng.normal(0.0, 0.002, size=length)
    setting_2 = rng.normal(0.0, 0.0003, size=length)
    for i in range(length):
        fields = [str(unit), str(int(t[i])), f"{setting_1[i]:.4f}", f"{setting_2[i]:.4f}", "100.0"]
        for sensor in range(1, 22):
            if sensor in CONSTANT_SENSORS:
                value = 100.0 + sensor
            else:
                base = 500.0 + 10.0 * sensor
                coef = 25.0 if sensor % 2 else -18.0
                noise = rng.normal(0.0, 0.4)
                value = base + coef * degradation[i] + noise
            fields.append(f"{value:.4f}")
        rows.append(" ".join(fields))
    return rows


def write_split(
    out_dir: str | os.PathLike,
    n_train: int = 12,
    n_test: int = 6,
    seed: int = 7,
    min_len: int = 50,
    max_len: int = 110,
) -> dict[str, str]:
    """Write train/test/rul files; returns their paths."""
    rng = np.random.default_rng(seed)
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    train_path = os.path.join(out_dir, "train_synth.txt")
    test_path = os.path.join(out_dir, "test_synth.txt")
    rul_path = os.path.join(out_dir, "rul_synth.txt")

    with open(train_path, "w", encoding="ascii") as handle:
        for unit in range(1, n_train + 1):
            length = int(rng.integers(min_len, max_len + 1))
            handle.write("\n".join(_engine_rows(unit, length, rng)) + "\n")

    ruls = []
    with open(test_path, "w", encoding="ascii") as handle:
        for unit in range(1, n_test + 1):
            full = int(rng.integers(min_len, max_len + 1))
            observed = int(rng.integers(min_len // 2, full))
            ruls.append(full - observed)
            rows = _engine_rows(unit, full, rng)[:observed]
            handle.write("\n".join(rows) + "\n")

    with open(rul_path, "w", encoding="ascii") as handle:
        handle.write("\n".join(str(r) for r in ruls) + "\n")

    return {"train": train_path, "test": test_path, "rul": rul_path}
