"""Penalized-credible-region sparsification of a CAVI fit.

The Lagrangian problem::

    minimize_b  (b - mu)' Sigma^{-1} (b - mu) + lam * sum_g sqrt(p_g) ||b_g|| / u_g^2

is mapped to a weighted group lasso with X* = L'D and Y* = L'mu, where
L L' = Sigma^{-1} and D = BlockDiag(u_g^2 I). The lasso solution b* maps
back by b~ = D b*.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import group_lasso as gl
from .cavi import CaviFit, HyperParams, run_cavi, select_tau
from .errors import FoldTooSmallError, NegativeLambdaError
from .grouped_model import GroupedDesign, GroupSpec, center
from .predict import make_model

logger = logging.getLogger(__name__)

SCALE_FLOOR = 1e-8
SCALE_MODES = ("second-moment", "mean-norm")
MODES = ("grouped", "nongrouped")


@dataclass
class SparseEstimate:
    beta_tilde: np.ndarray
    selected: frozenset
    lam: float
    u_hat: np.ndarray
    mode: str = "grouped"
    scale_mode: str = "second-moment"
    solution: gl.LassoSolution = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "beta_tilde": [float(b) for b in self.beta_tilde],
            "selected": sorted(int(g) + 1 for g in self.selected),
            "lambda": float(self.lam),
            "u_hat": [float(u) for u in self.u_hat],
            "mode": self.mode,
            "scale_mode": self.scale_mode,
        }


@dataclass
class CvResult:
    lambdas: np.ndarray
    mean_cv_error: np.ndarray
    se_cv_error: np.ndarray
    chosen_lambda: float
    rule: str = "min"
    n_failed_folds: int = 0
    fit: CaviFit = field(default=None, repr=False)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lambda", "mean", "se"])
            for lam, m, s in zip(self.lambdas, self.mean_cv_error, self.se_cv_error):
                wr.writerow([repr(float(lam)), repr(float(m)), repr(float(s))])


def compute_group_scales(fit: CaviFit, scale_mode: str = "second-moment", spec: GroupSpec | None = None):
    """Per-group posterior size u_g of the coefficient block.

    ``second-moment``: sqrt(||mu_g||^2 + tr(Sigma_gg)); ``mean-norm``: ||mu_g||.
    Both are floored at 1e-8.
    """
    spec = spec or fit.data.spec
    st = fit.state
    if scale_mode == "second-moment":
        u = np.sqrt(spec.group_sums(st.mu_beta**2 + st.sigma_diag))
    elif scale_mode == "mean-norm":
        u = spec.group_norms(st.mu_beta)
    else:
        raise ValueError(f"unknown scale_mode {scale_mode!r}")
    return np.maximum(u, SCALE_FLOOR)


def build_working_problem(fit: CaviFit, u_hat, spec: GroupSpec | None = None) -> gl.WorkingProblem:
    spec = spec or fit.data.spec
    L = fit.state.prec_factor
    d = spec.expand(np.asarray(u_hat, dtype=float) ** 2)
    Xstar = L.T * d[None, :]
    Ystar = L.T @ fit.state.mu_beta
    return gl.WorkingProblem(Xstar, Ystar, spec)


def _estimate(fit, problem, sol, u_hat, mode, scale_mode, spec):
    beta_tilde = spec.expand(u_hat**2) * sol.beta_star
    groups = fit.data.spec
    selected = frozenset(int(g) for g in np.flatnonzero(groups.group_norms(beta_tilde) > 0))
    return SparseEstimate(beta_tilde, selected, sol.lam, u_hat, mode, scale_mode, sol)


def _setup(fit, mode, scale_mode):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "grouped":
        spec = fit.data.spec
    else:
        spec = GroupSpec.singletons(fit.data.p)
    u_hat = compute_group_scales(fit, scale_mode, spec)
    return spec, u_hat, build_working_problem(fit, u_hat, spec)


def sparsify(
    fit: CaviFit,
    lam: float,
    scale_mode: str = "second-moment",
    mode: str = "grouped",
    **solve_kwargs,
) -> SparseEstimate:
    if lam < 0:
        raise NegativeLambdaError(f"lambda must be nonnegative, got {lam}")
    spec, u_hat, problem = _setup(fit, mode, scale_mode)
    sol = gl.solve(problem, lam, **solve_kwargs)
    return _estimate(fit, problem, sol, u_hat, mode, scale_mode, spec)


def sparsify_nongrouped(fit: CaviFit, lam: float, scale_mode: str = "mean-norm", **solve_kwargs) -> SparseEstimate:
    """Coordinatewise variant: every coefficient is its own group.

    A group of the original design counts as selected when any of its
    coordinates is nonzero.
    """
    return sparsify(fit, lam, scale_mode=scale_mode, mode="nongrouped", **solve_kwargs)


def default_scale_mode(mode: str) -> str:
    return "second-moment" if mode == "grouped" else "mean-norm"


def working_lambda_max(fit: CaviFit, mode: str = "grouped", scale_mode: str | None = None) -> float:
    scale_mode = scale_mode or default_scale_mode(mode)
    return gl.lambda_max(_setup(fit, mode, scale_mode)[2])


def sparsify_path(fit: CaviFit, lambdas, mode: str = "grouped", scale_mode: str | None = None, **solve_kwargs):
    """Sparse estimates along a decreasing lambda grid (warm-started)."""
    scale_mode = scale_mode or default_scale_mode(mode)
    spec, u_hat, problem = _setup(fit, mode, scale_mode)
    path = gl.solve_path(problem, lambdas=lambdas, **solve_kwargs)
    return [_estimate(fit, problem, s, u_hat, mode, scale_mode, spec) for s in path.solutions]


def fit_cavi(y_raw, design: GroupedDesign, hyper: HyperParams, tau_grid=None, **cavi_kwargs) -> CaviFit:
    """Center, then run CAVI at ``hyper.tau`` or at the best tau of ``tau_grid``."""
    data = center(y_raw, design)
    if tau_grid is not None:
        return select_tau(data, hyper, tau_grid, **cavi_kwargs).fit
    return run_cavi(data, hyper, **cavi_kwargs)


@dataclass
class _Fold:
    fit: CaviFit
    spec: GroupSpec
    u_hat: np.ndarray
    problem: gl.WorkingProblem
    X_test: np.ndarray
    y_test: np.ndarray
    last: np.ndarray | None = None

    def errors(self, lambdas, mode, scale_mode, solve_kwargs) -> np.ndarray:
        """Held-out MSPE along ``lambdas``, continuing from the previous call."""
        path = gl.solve_path(self.problem, lambdas=lambdas, warm=self.last, **solve_kwargs)
        self.last = path.solutions[-1].beta_star
        stats = self.fit.data.stats
        out = np.empty(len(lambdas))
        for i, sol in enumerate(path.solutions):
            est = _estimate(self.fit, self.problem, sol, self.u_hat, mode, scale_mode, self.spec)
            pred = make_model(est.beta_tilde, stats).predict(self.X_test)
            out[i] = np.mean((pred - self.y_test) ** 2)
        return out


def _make_fold(y_raw, design, train, test, hyper, mode, scale_mode, cavi_kwargs) -> _Fold:
    sub = GroupedDesign(design.X[train], design.spec)
    fit = fit_cavi(y_raw[train], sub, hyper, **cavi_kwargs)
    spec, u_hat, problem = _setup(fit, mode, scale_mode)
    return _Fold(fit, spec, u_hat, problem, design.X[test], y_raw[test])


def _extension(lambdas, lam_max, n_lambda, lambda_min_ratio, floor):
    """The next decade of grid points below ``lambdas[-1]`` at the same
    log spacing, stopping at ``lam_max * floor``."""
    step = np.log10(lambda_min_ratio) / (n_lambda - 1)
    k = int(np.ceil(-1.0 / step))
    cur = np.log10(lambdas[-1] / lam_max)
    pts = cur + step * np.arange(1, k + 1)
    pts = pts[pts >= np.log10(floor) - 1e-12]
    return lam_max * 10.0**pts


def cross_validate_lambda(
    raw_y,
    design: GroupedDesign,
    hyper: HyperParams,
    folds: int = 5,
    n_lambda: int = 100,
    rule: str = "min",
    seed: int = 0,
    mode: str = "grouped",
    scale_mode: str | None = None,
    lambda_min_ratio: float = 1e-3,
    extend_to: float | None = 1e-6,
    tau_grid=None,
    threads: int = 1,
    cavi_kwargs: dict | None = None,
    solve_kwargs: dict | None = None,
) -> CvResult:
    """K-fold choice of lambda on a grid anchored at the full-data lambda_max.

    CAVI is refitted on every training fold at the tau used for the full
    data. The grid runs from lambda_max down to ``lambda_min_ratio *
    lambda_max`` in ``n_lambda`` log-spaced steps. While the CV minimum sits
    at the smallest grid value the grid is continued one decade at a time
    with the same spacing, down to ``extend_to * lambda_max`` (``None``
    switches this off). The full-data fit is returned on the result.
    """
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if rule not in ("min", "one-se"):
        raise ValueError(f"unknown rule {rule!r}")
    y = np.asarray(raw_y, dtype=float).ravel()
    n = design.n
    if n < 2 * folds:
        raise FoldTooSmallError(f"n={n} is too small for {folds} folds")
    cavi_kwargs = dict(cavi_kwargs or {})
    solve_kwargs = dict(solve_kwargs or {})
    scale_mode = scale_mode or default_scale_mode(mode)

    full = fit_cavi(y, design, hyper, tau_grid=tau_grid, **cavi_kwargs)
    hyper_cv = full.hyper
    lam_max = working_lambda_max(full, mode, scale_mode)
    lambdas = gl.lambda_grid(lam_max, n_lambda, lambda_min_ratio)
    anchor = float(lambdas[0])

    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    fold_objs: dict = {}
    errs: dict = {}

    def first(k):
        test = np.sort(parts[k])
        train = np.sort(np.concatenate([parts[j] for j in range(folds) if j != k]))
        try:
            f = _make_fold(y, design, train, test, hyper_cv, mode, scale_mode, cavi_kwargs)
            return k, f, f.errors(lambdas, mode, scale_mode, solve_kwargs)
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            warnings.warn(f"CV fold {k} failed and was skipped: {exc}", stacklevel=3)
            return k, None, None

    def more(k, new):
        try:
            return k, fold_objs[k], fold_objs[k].errors(new, mode, scale_mode, solve_kwargs)
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            warnings.warn(f"CV fold {k} failed and was skipped: {exc}", stacklevel=3)
            return k, None, None

    def run_all(fn, *args):
        ks = sorted(fold_objs) if fold_objs else list(range(folds))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(lambda k: fn(k, *args), ks))
        return [fn(k, *args) for k in ks]

    def collect(results, extend=False):
        for k, f, e in results:
            if f is None:
                fold_objs.pop(k, None)
                errs.pop(k, None)
            else:
                fold_objs[k] = f
                errs[k] = np.concatenate([errs[k], e]) if extend else e
        failed = folds - len(errs)
        if failed > folds / 2:
            raise ArithmeticError(f"{failed} of {folds} CV folds failed")

    collect(run_all(first))
    while True:
        mean = np.vstack([errs[k] for k in sorted(errs)]).mean(axis=0)
        if extend_to is None or int(np.argmin(mean)) != len(lambdas) - 1:
            break
        new = _extension(lambdas, anchor, n_lambda, lambda_min_ratio, extend_to)
        if new.size == 0:
            break
        collect(run_all(more, new), extend=True)
        lambdas = np.concatenate([lambdas, new])

    mat = np.vstack([errs[k] for k in sorted(errs)])
    failed = folds - mat.shape[0]
    mean = mat.mean(axis=0)
    se = mat.std(axis=0, ddof=1) / np.sqrt(mat.shape[0]) if mat.shape[0] > 1 else np.zeros_like(mean)

    best = int(np.argmin(mean))  # first minimum = largest lambda among ties
    if rule == "one-se":
        limit = mean[best] + se[best]
        best = int(np.flatnonzero(mean <= limit)[0])
    return CvResult(lambdas, mean, se, float(lambdas[best]), rule, failed, full)
