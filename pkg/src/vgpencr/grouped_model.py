"""Group metadata, design assembly and the centering transform."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import EmptyGroupError, LengthMismatchError, SizeMismatchError


@dataclass(frozen=True)
class GroupSpec:
    """Contiguous column groups of a design matrix."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) == 0:
            raise EmptyGroupError("at least one group is required")
        if any(s < 1 for s in sizes):
            raise EmptyGroupError(f"group sizes must be >= 1, got {list(sizes)}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", tuple(int(o) for o in np.cumsum((0,) + sizes[:-1])))

    @property
    def G(self) -> int:
        return len(self.sizes)

    @property
    def p(self) -> int:
        return int(sum(self.sizes))

    def slice(self, g: int) -> slice:
        return slice(self.offsets[g], self.offsets[g] + self.sizes[g])

    def slices(self) -> list[slice]:
        return [self.slice(g) for g in range(self.G)]

    def group_index(self) -> np.ndarray:
        """Group label of every column, length p."""
        return np.repeat(np.arange(self.G), self.sizes)

    def expand(self, per_group) -> np.ndarray:
        """Broadcast a length-G vector to length p (one value per column)."""
        return np.repeat(np.asarray(per_group, dtype=float), self.sizes)

    def group_norms(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.sqrt(np.add.reduceat(v * v, self.offsets))

    def group_sums(self, v) -> np.ndarray:
        return np.add.reduceat(np.asarray(v, dtype=float), self.offsets)

    @classmethod
    def singletons(cls, p: int) -> "GroupSpec":
        return cls((1,) * p)


@dataclass(frozen=True)
class GroupedDesign:
    X: np.ndarray
    spec: GroupSpec

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise SizeMismatchError("design must be a 2-d matrix")
        if X.shape[1] != self.spec.p:
            raise SizeMismatchError(
                f"design has {X.shape[1]} columns but group sizes sum to {self.spec.p}"
            )
        if X.shape[0] < 2:
            raise SizeMismatchError("design needs at least two rows")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class CenteringStats:
    y_bar: float
    x_bar: np.ndarray


@dataclass(frozen=True)
class CenteredDataset:
    y: np.ndarray
    design: GroupedDesign
    stats: CenteringStats

    @property
    def X(self) -> np.ndarray:
        return self.design.X

    @property
    def spec(self) -> GroupSpec:
        return self.design.spec

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def p(self) -> int:
        return self.design.spec.p

    @cached_property
    def gram(self) -> tuple[np.ndarray, np.ndarray]:
        """(XᵀX, Xᵀy), computed once per dataset."""
        X = self.design.X
        return X.T @ X, X.T @ self.y


def build_grouped_design(raw_matrix, sizes) -> GroupedDesign:
    raw = np.asarray(raw_matrix, dtype=float)
    sizes = [int(s) for s in sizes]
    if any(s == 0 for s in sizes):
        raise EmptyGroupError(f"group sizes must be >= 1, got {sizes}")
    if raw.ndim != 2 or sum(sizes) != raw.shape[1]:
        raise SizeMismatchError(
            f"group sizes sum to {sum(sizes)} but matrix has shape {raw.shape}"
        )
    return GroupedDesign(raw.copy(), GroupSpec(tuple(sizes)))


def center(y_raw, design: GroupedDesign) -> CenteredDataset:
    """Subtract the response mean and column means; the intercept drops out."""
    y_raw = np.asarray(y_raw, dtype=float).ravel()
    if y_raw.shape[0] != design.n:
        raise LengthMismatchError(
            f"response has length {y_raw.shape[0]}, design has {design.n} rows"
        )
    y_bar = float(y_raw.mean())
    x_bar = design.X.mean(axis=0)
    y = y_raw - y_bar
    Xc = design.X - x_bar
    y.setflags(write=False)
    x_bar.setflags(write=False)
    return CenteredDataset(
        y=y,
        design=GroupedDesign(Xc, design.spec),
        stats=CenteringStats(y_bar=y_bar, x_bar=x_bar),
    )
