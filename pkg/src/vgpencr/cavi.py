"""Coordinate-ascent variational inference for the grouped horseshoe model.

Mean-field family::

    q(beta)    = N(mu_beta, Sigma_beta)
    q(sigma^2) = InvGa(r + (n + p)/2, s_sigma2)
    q(b_g)     = Ga((p_g + 1)/2, s_b[g])        shape-rate
    q(c_g)     = Exp(s_c[g])

``Sigma_beta`` is never formed. The state keeps the lower Cholesky factor
``L`` of the precision ``m_inv_sigma2 * (X'X + M_tau)`` and derives the
diagonal of ``Sigma_beta`` and ``tr(X'X Sigma_beta)`` from ``L^{-1}``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .errors import DivergenceDetected, MaxCyclesWarning, NumericalFailure
from .grouped_model import CenteredDataset

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

SCHEDULES = ("lagged", "sequential")


@dataclass(frozen=True)
class HyperParams:
    r: float = 0.01
    s: float = 0.01
    tau: float = 1.0

    def __post_init__(self):
        for name in ("r", "s", "tau"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v}")

    def with_tau(self, tau: float) -> "HyperParams":
        return replace(self, tau=float(tau))


@dataclass
class CaviState:
    """All variational parameters after ``cycle`` CAVI cycles.

    ``m_b = r_b / s_b``, ``m_c = 1 / s_c`` and
    ``m_inv_sigma2 = r_sigma2 / s_sigma2`` are kept consistent with the
    stored rates, so the state describes a valid member of the family.
    """

    mu_beta: np.ndarray
    prec_factor: np.ndarray
    m_b: np.ndarray
    m_inv_sigma2: float
    s_sigma2: float
    s_b: np.ndarray
    s_c: np.ndarray
    m_c: np.ndarray
    cycle: int = 0
    elbo_trace: list = field(default_factory=list)
    # derived from prec_factor and X; cached because every update needs them
    sigma_diag: np.ndarray = None
    tr_xtx_sigma: float = None

    def covariance(self) -> np.ndarray:
        """Dense Sigma_beta. Diagnostics and tests only."""
        Linv = linalg.solve_triangular(self.prec_factor, np.eye(len(self.mu_beta)), lower=True)
        return Linv.T @ Linv

    def log_det_sigma(self) -> float:
        return -2.0 * float(np.sum(np.log(np.diag(self.prec_factor))))


@dataclass
class CaviFit:
    state: CaviState
    data: CenteredDataset
    hyper: HyperParams
    converged: bool
    cycles_run: int
    schedule: str = "lagged"

    @property
    def mu_beta(self) -> np.ndarray:
        return self.state.mu_beta

    @property
    def elbo(self) -> float:
        return self.state.elbo_trace[-1]

    def summary(self) -> dict:
        st = self.state
        return {
            "mu_beta": st.mu_beta.tolist(),
            "m_b": st.m_b.tolist(),
            "m_inv_sigma2": float(st.m_inv_sigma2),
            "elbo_trace": [float(e) for e in st.elbo_trace],
            "cycles_run": int(self.cycles_run),
            "converged": bool(self.converged),
            "tau": float(self.hyper.tau),
            "r": float(self.hyper.r),
            "s": float(self.hyper.s),
            "schedule": self.schedule,
        }


@dataclass
class TauSelection:
    tau: float
    elbos: list
    fit: CaviFit


def shape_b(data: CenteredDataset) -> np.ndarray:
    return (np.asarray(data.spec.sizes, dtype=float) + 1.0) / 2.0


def shape_sigma2(data: CenteredDataset, hyper: HyperParams) -> float:
    return hyper.r + (data.n + data.p) / 2.0


def _cholesky(A: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"precision matrix is not positive definite: {exc}") from exc


def _sigma_moments(L: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, float]:
    """diag(Sigma) and tr(X'X Sigma) for Sigma = (L L')^{-1}."""
    p = L.shape[0]
    Linv = linalg.solve_triangular(L, np.eye(p), lower=True, check_finite=False)
    diag = np.einsum("ij,ij->j", Linv, Linv)
    # tr(X'X Sigma) = ||X L^{-T}||_F^2
    XLt = X @ Linv.T
    return diag, float(np.einsum("ij,ij->", XLt, XLt))


def _with_moments(state: CaviState, X: np.ndarray) -> CaviState:
    state.sigma_diag, state.tr_xtx_sigma = _sigma_moments(state.prec_factor, X)
    return state


def _group_second_moments(state: CaviState, data: CenteredDataset) -> np.ndarray:
    """E_q ||beta_g||^2 = ||mu_g||^2 + tr(Sigma_gg), per group."""
    spec = data.spec
    return spec.group_sums(state.mu_beta**2 + state.sigma_diag)


def init_cavi(data: CenteredDataset, hyper: HyperParams) -> CaviState:
    X, y = data.X, data.y
    n, p = X.shape
    XtX, Xty = data.gram
    ridge = 1e-6 * float(np.trace(XtX)) / p
    if ridge <= 0:
        ridge = 1e-12
    C = _cholesky(XtX + ridge * np.eye(p))
    mu = linalg.cho_solve((C, True), Xty)

    rss = float(np.sum((y - X @ mu) ** 2))
    yy = float(y @ y)
    if n > p + 1 and rss > 1e-10 * max(yy, 1e-300):
        m_sig = (n - p) / rss
    else:
        m_sig = 1.0 / max(float(np.var(y, ddof=1)), 1e-12)

    return state_from(data, hyper, mu, np.ones(data.spec.G), m_sig)


def state_from(data: CenteredDataset, hyper: HyperParams, mu_beta, m_b, m_inv_sigma2: float) -> CaviState:
    """A cycle-0 state built from explicit starting values.

    The covariance factor, rates and cached moments are derived so that
    the state is internally consistent.
    """
    X = data.X
    XtX, _ = data.gram
    m_b = np.asarray(m_b, dtype=float).copy()
    rb = shape_b(data)
    s_c = 1.0 + m_b
    M = data.spec.expand(m_b) / hyper.tau
    L = _cholesky(m_inv_sigma2 * (XtX + np.diag(M)))
    state = CaviState(
        mu_beta=np.asarray(mu_beta, dtype=float).copy(),
        prec_factor=L,
        m_b=m_b,
        m_inv_sigma2=float(m_inv_sigma2),
        s_sigma2=shape_sigma2(data, hyper) / m_inv_sigma2,
        s_b=rb / m_b,
        s_c=s_c,
        m_c=1.0 / s_c,
    )
    return _with_moments(state, X)


def cavi_cycle(
    state: CaviState,
    data: CenteredDataset,
    hyper: HyperParams,
    schedule: str = "lagged",
) -> CaviState:
    """One block-CAVI cycle; returns a new state with its ELBO appended.

    Both schedules share the local-scale step, which reads the previous
    cycle's moments. ``lagged`` (default) also takes the mean from the
    previous covariance factor and the noise rate from the previous mean, so
    every block of cycle t is a function of the cycle t-1 state.
    ``sequential`` feeds each block the newest values of the others, which
    makes every block an exact coordinate-ascent step.
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}")
    X, y = data.X, data.y
    spec = data.spec
    tau = hyper.tau
    XtX, Xty = data.gram
    rb = shape_b(data)
    r_sig = shape_sigma2(data, hyper)

    E_old = _group_second_moments(state, data)

    # local scales: q(b_g) given q(c_g) refreshed from the previous m_b
    s_b = 1.0 / (1.0 + state.m_b) + state.m_inv_sigma2 * E_old / (2.0 * tau)
    m_b = rb / s_b
    M_diag = spec.expand(m_b) / tau

    if schedule == "lagged":
        mu = state.m_inv_sigma2 * linalg.cho_solve((state.prec_factor, True), Xty)
        resid = y - X @ state.mu_beta
        quad = float(np.sum(state.m_b / tau * E_old))
        s_sig = hyper.s + 0.5 * (quad + state.tr_xtx_sigma + float(resid @ resid))
        m_sig = r_sig / s_sig
        L = _cholesky(m_sig * (XtX + np.diag(M_diag)))
    else:
        C = _cholesky(XtX + np.diag(M_diag))
        mu = linalg.cho_solve((C, True), Xty)
        resid = y - X @ mu
        E_mid = spec.group_sums(mu**2 + state.sigma_diag)
        quad = float(np.sum(m_b / tau * E_mid))
        s_sig = hyper.s + 0.5 * (quad + state.tr_xtx_sigma + float(resid @ resid))
        m_sig = r_sig / s_sig
        L = math.sqrt(m_sig) * C

    s_c = 1.0 + m_b
    new = CaviState(
        mu_beta=mu,
        prec_factor=L,
        m_b=m_b,
        m_inv_sigma2=m_sig,
        s_sigma2=s_sig,
        s_b=s_b,
        s_c=s_c,
        m_c=1.0 / s_c,
        cycle=state.cycle + 1,
        elbo_trace=list(state.elbo_trace),
    )
    _with_moments(new, X)
    new.elbo_trace.append(elbo(new, data, hyper))
    return new


def elbo(state: CaviState, data: CenteredDataset, hyper: HyperParams) -> float:
    """Evidence lower bound of the state, including every additive constant.

    Expectations use the rates only (m_b = r_b/s_b etc.), so the value is the
    ELBO of the distribution the state describes.
    """
    n, p = data.n, data.p
    G = data.spec.G
    tau = hyper.tau
    rb = shape_b(data)
    r_sig = shape_sigma2(data, hyper)
    m_sig = r_sig / state.s_sigma2
    m_b = rb / state.s_b
    m_c = 1.0 / state.s_c

    E_g = _group_second_moments(state, data)
    resid = data.y - data.X @ state.mu_beta
    E_fit = float(resid @ resid) + state.tr_xtx_sigma

    value = -0.5 * n * LOG_2PI - 0.5 * p * math.log(tau)
    value -= m_sig * (float(np.sum(m_b * E_g)) / (2.0 * tau) + 0.5 * E_fit + hyper.s)
    value += -2.0 * G * gammaln(0.5)
    value += float(
        np.sum(gammaln(rb) - np.log(state.s_c) - rb * (np.log(state.s_b) - 1.0) - (m_b + 1.0) * m_c + 1.0)
    )
    value += hyper.r * math.log(hyper.s) - gammaln(hyper.r)
    value += 0.5 * p + 0.5 * state.log_det_sigma()
    value += -r_sig * math.log(state.s_sigma2) + gammaln(r_sig) + r_sig
    return float(value)


def run_cavi(
    data: CenteredDataset,
    hyper: HyperParams,
    min_cycles: int = 2,
    rel_tol: float = 1e-4,
    max_cycles: int = 500,
    schedule: str = "lagged",
    check_monotone: bool = True,
) -> CaviFit:
    """Iterate CAVI cycles until the relative ELBO change drops below ``rel_tol``.

    At least ``min_cycles`` cycles always run. Hitting ``max_cycles`` emits a
    warning and returns ``converged=False``.
    """
    if min_cycles < 2:
        raise ValueError("min_cycles must be at least 2")
    if max_cycles < min_cycles:
        raise ValueError("max_cycles must be >= min_cycles")
    state = init_cavi(data, hyper)
    converged = False
    while state.cycle < max_cycles:
        state = cavi_cycle(state, data, hyper, schedule=schedule)
        trace = state.elbo_trace
        if len(trace) < 2:
            continue
        prev, cur = trace[-2], trace[-1]
        if check_monotone and cur < prev - 1e-6 * abs(prev):
            raise DivergenceDetected(
                f"ELBO fell from {prev:.10g} to {cur:.10g} at cycle {state.cycle}"
            )
        if state.cycle >= min_cycles and abs(cur - prev) < rel_tol * abs(cur):
            converged = True
            break
    if not converged:
        warnings.warn(
            f"CAVI did not reach rel_tol={rel_tol} within {max_cycles} cycles",
            MaxCyclesWarning,
            stacklevel=2,
        )
    return CaviFit(state, data, hyper, converged, state.cycle, schedule)


DEFAULT_TAU_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)


def select_tau(
    data: CenteredDataset,
    hyper_base: HyperParams,
    tau_grid=DEFAULT_TAU_GRID,
    **cavi_kwargs,
) -> TauSelection:
    """Fit once per tau and keep the fit with the largest final ELBO.

    Ties within 1e-12 (relative) go to the smaller tau.
    """
    grid = [float(t) for t in tau_grid]
    if not grid or any(not (t > 0) for t in grid):
        raise ValueError("tau_grid must be a nonempty list of positive numbers")
    order = sorted(range(len(grid)), key=lambda i: grid[i])
    elbos = [float("nan")] * len(grid)
    best = None
    errors = []
    for i in order:
        try:
            fit = run_cavi(data, hyper_base.with_tau(grid[i]), **cavi_kwargs)
        except (NumericalFailure, DivergenceDetected) as exc:
            warnings.warn(f"tau={grid[i]} skipped: {exc}", stacklevel=2)
            errors.append(exc)
            continue
        elbos[i] = fit.elbo
        if best is None or fit.elbo > best.elbo + 1e-12 * abs(best.elbo):
            best = fit
    if best is None:
        raise NumericalFailure(f"every tau in the grid failed: {errors}")
    return TauSelection(tau=best.hyper.tau, elbos=elbos, fit=best)
