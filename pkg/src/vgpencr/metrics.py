"""Selection and prediction metrics.

Selection metrics work on groups. A metric whose denominator vanishes is
reported as NaN (missing), never as 0, so that replication averages can
drop it explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, IndexOutOfRangeError, LengthMismatchError

MISE_DOMAIN = (0.0, 20.0)
MISE_GRID = 401


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def G(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(selected, truth, G: int) -> ConfusionCounts:
    """Confusion counts of two group sets drawn from ``{1, ..., G}``."""
    sel, tru = set(int(g) for g in selected), set(int(g) for g in truth)
    for g in sel | tru:
        if not 1 <= g <= G:
            raise IndexOutOfRangeError(f"group {g} outside 1..{G}")
    tp = len(sel & tru)
    fp = len(sel - tru)
    fn = len(tru - sel)
    return ConfusionCounts(tp=tp, fp=fp, tn=G - tp - fp - fn, fn=fn)


def youden(c: ConfusionCounts) -> float:
    """J = sensitivity + specificity - 1; NaN if either class is empty."""
    pos, neg = c.tp + c.fn, c.tn + c.fp
    if pos == 0 or neg == 0:
        return math.nan
    return c.tp / pos + c.tn / neg - 1.0


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation; NaN when any margin of the 2x2 table is zero."""
    margins = (c.tp + c.fp, c.tp + c.fn, c.tn + c.fp, c.tn + c.fn)
    if 0 in margins:
        return math.nan
    # integer numerator keeps hand-checkable cases exact
    num = c.tp * c.tn - c.fp * c.fn
    return num / math.sqrt(math.prod(margins))


def mspe(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.shape != actual.shape:
        raise LengthMismatchError(f"{pred.size} predictions for {actual.size} responses")
    if pred.size == 0:
        raise EmptyInputError("no test points")
    return float(np.mean((pred - actual) ** 2))


def mise(beta_hat_fn, beta_true_fn, domain=MISE_DOMAIN, grid_points: int = MISE_GRID) -> float:
    """Integrated squared difference of two functions by the trapezoid rule."""
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    t = np.linspace(domain[0], domain[1], grid_points)
    diff = np.asarray(beta_hat_fn(t), dtype=float) - np.asarray(beta_true_fn(t), dtype=float)
    return float(np.trapezoid(diff**2, t))
