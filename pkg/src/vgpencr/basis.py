"""Spline bases: natural cubic splines for additive models and clamped
B-splines for varying-coefficient designs."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import BSpline

from .errors import DegenerateInputError, EmptyObservationError, OutOfDomainError
from .grouped_model import GroupedDesign, GroupSpec

DOMAIN_SLACK = 1e-9


@dataclass(frozen=True)
class SplineBasisSpec:
    kind: str  # "natural-cubic" | "bspline"
    dim: int
    knots: tuple  # natural-cubic: all knots incl. boundary; bspline: full clamped knot vector
    degree: int = 3
    domain: tuple = (0.0, 1.0)
    transform: tuple | None = None  # row-major dim x dim matrix applied after evaluation

    def __post_init__(self):
        if self.kind not in ("natural-cubic", "bspline"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))
        k = np.asarray(self.knots)
        if self.kind == "bspline":
            if len(k) != self.dim + self.degree + 1:
                raise ValueError("clamped knot vector must have dim + degree + 1 entries")
            inner = k[self.degree : len(k) - self.degree]
        else:
            if len(k) != self.dim + 1:
                raise ValueError("natural cubic basis of dimension dim needs dim + 1 knots")
            inner = k
        if np.any(np.diff(inner) <= 0):
            raise ValueError("knots must be strictly increasing")
        if self.transform is not None:
            T = tuple(float(v) for v in np.asarray(self.transform, dtype=float).ravel())
            if len(T) != self.dim * self.dim:
                raise ValueError("transform must be a dim x dim matrix")
            object.__setattr__(self, "transform", T)

    @property
    def transform_matrix(self) -> np.ndarray:
        if self.transform is None:
            return np.eye(self.dim)
        return np.asarray(self.transform).reshape(self.dim, self.dim)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["knots"] = list(self.knots)
        d["domain"] = list(self.domain)
        if self.transform is not None:
            d["transform"] = list(self.transform)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SplineBasisSpec":
        return cls(
            d["kind"], int(d["dim"]), tuple(d["knots"]), int(d.get("degree", 3)), tuple(d["domain"]),
            d.get("transform"),
        )

    def evaluate(self, z) -> np.ndarray:
        """Basis matrix, one row per entry of ``z``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.kind == "natural-cubic":
            B = _natural_cubic_eval(z, np.asarray(self.knots))
        else:
            B = _bspline_eval(z, self)
        if self.transform is not None:
            B = B @ self.transform_matrix
        return B


# --- natural cubic splines -------------------------------------------------


def _natural_cubic_eval(z: np.ndarray, knots: np.ndarray) -> np.ndarray:
    # truncated-power form: x, then d_k - d_{K-1} for k = 1..K-2, with
    # d_k(x) = ((x - k_k)^3_+ - (x - k_K)^3_+) / (k_K - k_k)
    K = len(knots)
    last = knots[-1]
    cols = [z]

    def d(k):
        return (np.maximum(z - knots[k], 0.0) ** 3 - np.maximum(z - last, 0.0) ** 3) / (last - knots[k])

    d_pen = d(K - 2)
    for k in range(K - 2):
        cols.append(d(k) - d_pen)
    return np.column_stack(cols)


def natural_cubic_spec(z, dim: int = 4, orthonormalize: bool = True) -> SplineBasisSpec:
    """Knots for a dimension-``dim`` natural cubic basis fitted to ``z``.

    Boundary knots sit at min/max of ``z``; ``dim - 1`` interior knots at the
    equispaced quantiles k/dim. The basis excludes the constant, so it has
    exactly ``dim`` columns.

    With ``orthonormalize`` the columns are re-expressed (same span) so that,
    after centering, they are orthonormal on ``z``. The raw truncated-power
    columns are nearly collinear, which makes coordinatewise solvers crawl
    and ties the scale of the coefficients to the range of ``z``.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    z = np.asarray(z, dtype=float).ravel()
    lo, hi = float(z.min()), float(z.max())
    if hi - lo <= 0:
        raise DegenerateInputError("all values are equal; no spline basis can be built")
    inner = np.quantile(z, np.arange(1, dim) / dim)
    knots = np.concatenate([[lo], inner, [hi]])
    if np.any(np.diff(knots) <= 0):
        # heavy ties: fall back to equispaced interior knots over the range
        knots = np.linspace(lo, hi, dim + 1)
    transform = None
    if orthonormalize:
        B = _natural_cubic_eval(z, knots)
        _, R = np.linalg.qr(B - B.mean(axis=0))
        d = np.abs(np.diag(R))
        # too few distinct points for a full-rank basis: keep the raw columns
        if d.min() > 1e-10 * d.max():
            transform = tuple(np.linalg.inv(R).ravel())
    return SplineBasisSpec("natural-cubic", dim, tuple(knots), 3, (lo, hi), transform)


def natural_cubic_basis(z, dim: int = 4, spec: SplineBasisSpec | None = None) -> np.ndarray:
    """n x dim natural cubic spline basis (linear beyond the boundary knots)."""
    if spec is None:
        spec = natural_cubic_spec(z, dim)
    return spec.evaluate(z)


# --- B-splines ---------------------------------------------------------------


def bspline_spec(dim: int = 8, domain=(0.0, 20.0), degree: int = 3) -> SplineBasisSpec:
    """Clamped B-spline basis with equispaced interior knots on ``domain``."""
    n_inner = dim - degree - 1
    if n_inner < 0:
        raise ValueError("dim must be at least degree + 1")
    lo, hi = float(domain[0]), float(domain[1])
    inner = np.linspace(lo, hi, n_inner + 2)[1:-1]
    knots = np.concatenate([[lo] * (degree + 1), inner, [hi] * (degree + 1)])
    return SplineBasisSpec("bspline", dim, tuple(knots), degree, (lo, hi))


def _bspline_eval(t: np.ndarray, spec: SplineBasisSpec) -> np.ndarray:
    lo, hi = spec.domain
    outside = (t < lo) | (t > hi)
    if np.any(outside):
        if np.any((t < lo - DOMAIN_SLACK) | (t > hi + DOMAIN_SLACK)):
            bad = t[(t < lo - DOMAIN_SLACK) | (t > hi + DOMAIN_SLACK)][0]
            raise OutOfDomainError(f"t={bad} outside [{lo}, {hi}]")
        warnings.warn(f"{int(outside.sum())} value(s) clamped to [{lo}, {hi}]", stacklevel=3)
        t = np.clip(t, lo, hi)
    return BSpline.design_matrix(t, np.asarray(spec.knots), spec.degree).toarray()


def bspline_basis(t: float, spec: SplineBasisSpec) -> np.ndarray:
    """All ``spec.dim`` B-spline values at ``t``.

    Points within 1e-9 outside the domain are clamped with a warning;
    anything further out raises ``OutOfDomainError``.
    """
    return _bspline_eval(np.array([float(t)]), spec)[0]


def expand_varying_coefficient_design(obs, G: int, d: int = 8, domain=(0.0, 20.0), spec=None):
    """Stack observations (subject, time, covariates) into the U matrix.

    Row for observation (i, t) holds B(t) * x_g(t) for every g, so each
    coefficient function occupies one group of ``d`` columns. Rows are
    ordered by subject, then time. Returns ``(design, order, spec)`` where
    ``order`` indexes ``obs`` in row order.
    """
    obs = list(obs)
    if not obs:
        raise EmptyObservationError("no observations")
    if d < 2:
        raise ValueError("d must be at least 2")
    spec = spec or bspline_spec(d, domain)
    order = sorted(range(len(obs)), key=lambda k: (obs[k][0], obs[k][1]))
    U = np.empty((len(obs), G * d))
    for row, k in enumerate(order):
        _, t, x = obs[k]
        x = np.asarray(x, dtype=float)
        if x.shape != (G,):
            raise EmptyObservationError(f"observation {k} has {x.size} covariates, expected {G}")
        U[row] = np.outer(x, bspline_basis(t, spec)).ravel()
    return GroupedDesign(U, GroupSpec((d,) * G)), np.asarray(order), spec


def coefficient_function(spec: SplineBasisSpec, gamma_g):
    """t -> sum_l gamma_gl B_l(t) for one group of fitted coefficients."""
    gamma_g = np.asarray(gamma_g, dtype=float)

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return spec.evaluate(t) @ gamma_g

    return f
