"""Evaluation metrics and the report record the CLI serializes.

The asymmetric score penalizes late predictions (h = predicted - actual
positive) harder than early ones: sum of exp(-h/13) - 1 for h < 0 and
exp(h/10) - 1 for h >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ShapeMismatchError, ZeroVarianceTargetError

MODE_PER_WINDOW = "per_window"
MODE_LAST_CYCLE = "last_cycle"
EVAL_MODES = (MODE_PER_WINDOW, MODE_LAST_CYCLE)

REPORT_KEYS = ("rmse", "r2", "nasa_score", "n", "mode", "model", "config_fingerprint")


def _pair(predicted, actual) -> tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1)
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    if predicted.shape != actual.shape:
        raise ShapeMismatchError(
            f"{predicted.shape[0]} predictions vs {actual.shape[0]} actuals"
        )
    if predicted.size == 0:
        raise EmptyInputError("empty prediction/actual arrays")
    return predicted, actual


def rmse(predicted, actual) -> float:
    predicted, actual = _pair(predicted, actual)
    diff = predicted - actual
    return float(np.sqrt((diff @ diff) / diff.size))


def r2(predicted, actual) -> float:
    """Coefficient of determination about the actuals' mean.

    The mean predictor scores exactly 0; constant actuals are undefined.
    """
    predicted, actual = _pair(predicted, actual)
    ss_tot = float(((actual - actual.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ZeroVarianceTargetError("actuals are constant; r2 undefined")
    ss_res = float(((actual - predicted) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def nasa_score(predicted, actual) -> float:
    """Asymmetric exponential scoring over h = predicted - actual."""
    predicted, actual = _pair(predicted, actual)
    h = predicted - actual
    # absurd errors overflow to +inf, which is the right answer, not a warning
    with np.errstate(over="ignore"):
        terms = np.where(h < 0.0, np.exp(-h / 13.0) - 1.0, np.exp(h / 10.0) - 1.0)
    return float(terms.sum())


@dataclass(slots=True)
class EvalReport:
    rmse: float
    r2: float
    nasa_score: float
    n: int
    mode: str
    model: str
    config_fingerprint: str

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "r2": self.r2,
            "nasa_score": self.nasa_score,
            "n": self.n,
            "mode": self.mode,
            "model": self.model,
            "config_fingerprint": self.config_fingerprint,
        }


def evaluate_pair(
    predicted, actual, mode: str, model: str, config_fingerprint: str
) -> EvalReport:
    """Bundle the three metrics over one prediction/actual pair."""
    predicted, actual = _pair(predicted, actual)
    return EvalReport(
        rmse=rmse(predicted, actual),
        r2=r2(predicted, actual),
        nasa_score=nasa_score(predicted, actual),
        n=int(predicted.size),
        mode=mode,
        model=model,
        config_fingerprint=config_fingerprint,
    )
