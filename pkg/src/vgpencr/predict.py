"""Intercept recovery and point prediction on the uncentered scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatchError
from .grouped_model import CenteringStats


@dataclass(frozen=True)
class PredictionModel:
    beta: np.ndarray
    stats: CenteringStats
    kappa_hat: float

    def predict(self, X_new) -> np.ndarray:
        """Predictions for the rows of an uncentered feature matrix."""
        X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
        if X_new.shape[1] != self.beta.shape[0]:
            raise LengthMismatchError(
                f"feature rows have {X_new.shape[1]} entries, model expects {self.beta.shape[0]}"
            )
        return self.stats.y_bar + (X_new - self.stats.x_bar) @ self.beta


def make_model(beta, stats: CenteringStats) -> PredictionModel:
    """Attach the intercept ``y_bar - beta' x_bar`` to a slope estimate."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape != np.shape(stats.x_bar):
        raise LengthMismatchError(
            f"beta has length {beta.shape[0]} but x_bar has length {len(stats.x_bar)}"
        )
    kappa = float(stats.y_bar - beta @ stats.x_bar)
    return PredictionModel(beta=beta, stats=stats, kappa_hat=kappa)


def predict_point(model: PredictionModel, x_star) -> float:
    x_star = np.asarray(x_star, dtype=float).ravel()
    if x_star.shape != model.beta.shape:
        raise LengthMismatchError(
            f"x_star has length {x_star.shape[0]}, model expects {model.beta.shape[0]}"
        )
    return float(model.stats.y_bar + (x_star - model.stats.x_bar) @ model.beta)
