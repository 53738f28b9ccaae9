"""Replication harness for the three simulation designs.

One replication generates a train/test pair, fits each requested method
(CAVI, tau by ELBO, lambda by cross-validation, sparsification) and scores
it. Replication r uses seed ``seed_base + r``; nothing else is random, so
results do not depend on how replications are spread over workers.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics, sim
from .basis import coefficient_function
from .cavi import DEFAULT_TAU_GRID, HyperParams
from .pencr import cross_validate_lambda, default_scale_mode, sparsify
from .predict import make_model

logger = logging.getLogger(__name__)

METHOD_NAMES = {"grouped": "VGPenCR", "nongrouped": "VPenCR"}
VC_REPORTED = 6


@dataclass
class BenchConfig:
    scenario: str = "gam"
    size: int | None = None  # G for gam / varying, K for categorical
    n: int | None = None
    reps: int = 20
    seed: int = 0
    modes: tuple = ("grouped",)
    folds: int = 5
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-3
    rule: str = "min"
    r: float = 0.01
    s: float = 0.01
    tau_grid: tuple = DEFAULT_TAU_GRID
    threads: int = 1
    max_cycles: int = 500
    min_cycles: int = 2
    rel_tol: float = 1e-4
    scale_mode: str | None = None  # None: the default for each mode
    tol: float = 1e-7
    max_iter: int = 10000


@dataclass
class RepResult:
    scenario: str
    size: int
    seed: int
    method: str
    J: float
    MCC: float
    MSPE: float
    runtime_seconds: float
    selected: tuple = ()
    exact_recovery: bool = False
    mise: dict = field(default_factory=dict)  # column name -> value
    tau: float = math.nan
    lam: float = math.nan
    all_or_nothing: bool = True

    def row(self) -> dict:
        out = {
            "scenario": self.scenario,
            "size": self.size,
            "seed": self.seed,
            "method": self.method,
            "J": self.J,
            "MCC": self.MCC,
            "MSPE": self.MSPE,
            "MISE": self.mise.get("MISE", ""),
        }
        out.update({k: v for k, v in self.mise.items() if k != "MISE"})
        out.update(
            {
                "selected": " ".join(str(g) for g in self.selected),
                "exact_recovery": int(self.exact_recovery),
                "tau": self.tau,
                "lambda": self.lam,
                "runtime_seconds": self.runtime_seconds,
            }
        )
        return out


def _vc_mise(est, train: sim.SimDataset) -> dict:
    spec = train.bases[0]
    fs = train.truth.functions
    d = spec.dim
    per = []
    for g in range(train.G):
        fhat = coefficient_function(spec, est.beta_tilde[g * d : (g + 1) * d])
        per.append(metrics.mise(fhat, fs[g]))
    out = {f"MISE_{g + 1}": per[g] for g in range(min(VC_REPORTED, train.G))}
    zero = per[VC_REPORTED:]
    out["MISE_zero"] = float(np.mean(zero)) if zero else math.nan
    out["MISE"] = float(np.mean(per))
    return out


def run_replication(cfg: BenchConfig, rep: int) -> list[RepResult]:
    """All requested methods on replication ``rep``; one result per method."""
    seed = cfg.seed + rep
    train, test = sim.generate(cfg.scenario, seed, cfg.n, cfg.size)
    hyper = HyperParams(r=cfg.r, s=cfg.s)
    truth = {g + 1 for g in train.truth.active_groups}
    G = train.G
    results = []
    for mode in cfg.modes:
        scale_mode = cfg.scale_mode or default_scale_mode(mode)
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cv = cross_validate_lambda(
                train.y_raw, train.design, hyper,
                folds=cfg.folds, n_lambda=cfg.n_lambda, rule=cfg.rule, seed=seed, mode=mode, scale_mode=scale_mode,
                lambda_min_ratio=cfg.lambda_min_ratio, tau_grid=list(cfg.tau_grid),
                cavi_kwargs={"max_cycles": cfg.max_cycles, "min_cycles": cfg.min_cycles, "rel_tol": cfg.rel_tol},
                solve_kwargs={"tol": cfg.tol, "max_iter": cfg.max_iter},
            )
            est = sparsify(cv.fit, cv.chosen_lambda, scale_mode=scale_mode, mode=mode,
                           tol=cfg.tol, max_iter=cfg.max_iter)
        runtime = time.perf_counter() - t0
        selected = sorted(g + 1 for g in est.selected)
        cc = metrics.confusion(selected, truth, G)
        pred = make_model(est.beta_tilde, cv.fit.data.stats).predict(test.design.X)
        norms = train.design.spec.group_norms(est.beta_tilde)
        aon = True
        if mode == "grouped":
            for g, sl in enumerate(train.design.spec.slices()):
                blk = est.beta_tilde[sl]
                if norms[g] > 0 and np.any(blk == 0.0) and not np.all(blk == 0.0):
                    aon = False
        res = RepResult(
            scenario=cfg.scenario,
            size=G if cfg.scenario != "categorical" else (cfg.size or 10),
            seed=seed,
            method=METHOD_NAMES[mode],
            J=metrics.youden(cc),
            MCC=metrics.mcc(cc),
            MSPE=metrics.mspe(pred, test.y_raw),
            runtime_seconds=runtime,
            selected=tuple(selected),
            exact_recovery=set(selected) == truth,
            tau=cv.fit.hyper.tau,
            lam=cv.chosen_lambda,
            all_or_nothing=aon,
        )
        if cfg.scenario in ("varying", "vc"):
            res.mise = _vc_mise(est, train)
        results.append(res)
    return results


def _safe_rep(args):
    cfg, rep = args
    try:
        return rep, run_replication(cfg, rep), None
    except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
        return rep, None, f"{type(exc).__name__}: {exc}"


def run_bench(cfg: BenchConfig):
    """Run every replication; returns (results in replication order, failures)."""
    jobs = [(cfg, r) for r in range(cfg.reps)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            out = list(pool.map(_safe_rep, jobs))
    else:
        out = [_safe_rep(j) for j in jobs]
    results, failures = [], []
    for rep, res, err in sorted(out, key=lambda o: o[0]):
        if err is not None:
            logger.error("replication %d failed: %s", rep, err)
            failures.append((rep, err))
        else:
            results.extend(res)
    return results, failures


METRIC_COLUMNS = ("J", "MCC", "MSPE", "MISE")


def summarize(results: list[RepResult]) -> list[dict]:
    """Per-method mean, SE and count of defined values for every metric."""
    rows = []
    for method in dict.fromkeys(r.method for r in results):
        sub = [r.row() for r in results if r.method == method]
        extra = [k for k in sub[0] if k.startswith("MISE_")]
        row = {"method": method, "replications": len(sub)}
        for col in METRIC_COLUMNS + tuple(extra) + ("runtime_seconds",):
            vals = np.array([v[col] for v in sub if v[col] != ""], dtype=float)
            vals = vals[np.isfinite(vals)]
            row[f"{col}_mean"] = float(vals.mean()) if vals.size else math.nan
            row[f"{col}_se"] = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else math.nan
            row[f"{col}_n"] = int(vals.size)
        rows.append(row)
    return rows


def _write(path, rows, fields=None):
    fields = fields or list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields, restval="")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_results(prefix, results: list[RepResult]) -> dict:
    """Write ``<prefix>.csv`` (one row per replication and method),
    ``<prefix>_summary.csv`` and ``<prefix>_long.csv`` (one metric per row)."""
    rows = [r.row() for r in results]
    paths = {"rows": f"{prefix}.csv", "summary": f"{prefix}_summary.csv", "long": f"{prefix}_long.csv"}
    _write(paths["rows"], rows)
    _write(paths["summary"], summarize(results) if results else [])
    long = []
    for r in rows:
        for k in r:
            if k in METRIC_COLUMNS or k.startswith("MISE_") or k == "runtime_seconds":
                if r[k] != "":
                    long.append({"scenario": r["scenario"], "size": r["size"], "seed": r["seed"],
                                 "method": r["method"], "metric": k, "value": r[k]})
    _write(paths["long"], long, ["scenario", "size", "seed", "method", "metric", "value"])
    return paths
