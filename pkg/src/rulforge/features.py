"""Feature analysis: PCA, univariate F scoring, and selection.

PCA is an eigendecomposition of the explicit 1/N covariance matrix of the
(already standardized) input. Explained-variance ratios are eigenvalues
divided by the covariance trace, so with fewer components than features the
ratios sum to less than 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ColumnMismatchError,
    KOutOfRangeError,
    NComponentsTooLargeError,
    TooFewRowsError,
)
from .frame import FeatureFrame

# F statistic reported for a numerically perfect linear fit (r^2 == 1).
F_SENTINEL = math.inf

PC1_COLUMN = "pc_1"


@dataclass(slots=True)
class PcaModel:
    columns: tuple[str, ...]
    mean: np.ndarray
    components: np.ndarray          # (n_features, n_components), orthonormal cols
    eigenvalues: np.ndarray         # descending
    explained_variance_ratio: np.ndarray


def pca_fit(frame: FeatureFrame, n_components: int | None = None) -> PcaModel:
    """Fit principal components on a frame.

    Components are ordered by descending eigenvalue, and each is sign-fixed
    so its largest-magnitude entry is positive.
    """
    n_features = frame.n_columns
    k = n_features if n_components is None else n_components
    if not (1 <= k <= n_features):
        raise NComponentsTooLargeError(
            f"n_components={k} not in [1, {n_features}]"
        )
    if frame.n_rows < 2:
        raise TooFewRowsError("PCA needs at least 2 rows")
    mean = frame.values.mean(axis=0)
    centered = frame.values - mean
    cov = (centered.T @ centered) / frame.n_rows
    eigenvalues, vectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:k]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    components = vectors[:, order]
    for j in range(components.shape[1]):
        anchor = np.argmax(np.abs(components[:, j]))
        if components[anchor, j] < 0:
            components[:, j] = -components[:, j]
    trace = float(np.trace(cov))
    ratios = eigenvalues / trace if trace > 0 else np.zeros_like(eigenvalues)
    return PcaModel(
        columns=frame.columns,
        mean=mean,
        components=components,
        eigenvalues=eigenvalues,
        explained_variance_ratio=ratios,
    )


def _check_columns(model: PcaModel, frame: FeatureFrame) -> None:
    if frame.columns != model.columns:
        raise ColumnMismatchError(
            f"frame columns {frame.columns} do not match PCA fit {model.columns}"
        )


def pca_transform(model: PcaModel, frame: FeatureFrame) -> FeatureFrame:
    """Project rows onto the fitted components; columns become pc_1..pc_k."""
    _check_columns(model, frame)
    projected = (frame.values - model.mean) @ model.components
    names = tuple(f"pc_{i}" for i in range(1, model.components.shape[1] + 1))
    return FeatureFrame(
        columns=names,
        values=projected,
        units=frame.units,
        cycles=frame.cycles,
        provenance=frame.provenance + ("pca_transform",),
    )


def pca_reconstruct(model: PcaModel, projected: np.ndarray) -> np.ndarray:
    """Map projected coordinates back to the original feature space."""
    return np.asarray(projected) @ model.components.T + model.mean


def append_pc1(frame: FeatureFrame, model: PcaModel) -> FeatureFrame:
    """Append the first principal-component projection as column pc_1."""
    _check_columns(model, frame)
    pc1 = (frame.values - model.mean) @ model.components[:, 0]
    return frame.append_column(PC1_COLUMN, pc1, "append_pc1")


@dataclass(slots=True)
class FeatureRanking:
    """Univariate F scores plus a deterministic descending order.

    order[i] is the column index of the i-th best feature; ties fall back
    to the lower column index.
    """

    names: tuple[str, ...]
    scores: np.ndarray
    order: np.ndarray

    def ranked_names(self) -> tuple[str, ...]:
        return tuple(self.names[i] for i in self.order)


def f_scores(frame: FeatureFrame, target: np.ndarray) -> FeatureRanking:
    """Regression F statistic of each column against the target.

    F = r^2 (n - 2) / (1 - r^2). Zero-variance columns score 0; an exact
    linear relationship (r^2 == 1) scores F_SENTINEL.
    """
    target = np.asarray(target, dtype=np.float64)
    n = frame.n_rows
    if target.shape != (n,):
        raise TooFewRowsError("target must align with frame rows")
    if n < 3:
        raise TooFewRowsError(f"F scores need at least 3 rows, got {n}")
    yc = target - target.mean()
    syy = float(yc @ yc)
    scores = np.zeros(frame.n_columns)
    for j in range(frame.n_columns):
        xc = frame.values[:, j] - frame.values[:, j].mean()
        sxx = float(xc @ xc)
        if sxx == 0.0 or syy == 0.0:
            continue
        d = float(xc @ yc)
        r2 = min((d * d) / (sxx * syy), 1.0)
        if r2 >= 1.0:
            scores[j] = F_SENTINEL
        else:
            scores[j] = r2 * (n - 2) / (1.0 - r2)
    order = np.lexsort((np.arange(frame.n_columns), -scores))
    return FeatureRanking(names=frame.columns, scores=scores, order=order)


def default_k(n_features: int) -> int:
    """Default selection size: keep all but the two weakest features."""
    return max(1, n_features - 2)


def select_k_best(ranking: FeatureRanking, k: int) -> tuple[str, ...]:
    """Names of the top-k features by F score, in ranking order."""
    n = len(ranking.names)
    if not (1 <= k <= n):
        raise KOutOfRangeError(f"k={k} not in [1, {n}]")
    return tuple(ranking.names[i] for i in ranking.order[:k])


def correlation_matrix(frame: FeatureFrame) -> np.ndarray:
    """Pearson correlation between columns.

    Unit diagonal by construction; columns with zero variance correlate 0
    with everything else by convention.
    """
    if frame.n_rows < 2:
        raise TooFewRowsError("correlation needs at least 2 rows")
    values = frame.values
    std = values.std(axis=0)
    flat = std == 0.0
    denom = np.where(flat, 1.0, std)
    z = (values - values.mean(axis=0)) / denom
    z[:, flat] = 0.0
    corr = (z.T @ z) / frame.n_rows
    corr = (corr + corr.T) / 2.0
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def correlation_columns(frame: FeatureFrame, names: Sequence[str]) -> np.ndarray:
    """Correlation matrix restricted to the named columns, in that order."""
    return correlation_matrix(frame.select(list(names)))
