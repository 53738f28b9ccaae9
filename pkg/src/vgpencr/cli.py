"""Command-line front end: ``vgpencr fit|cv|predict|simulate|bench``.

Every command accepts ``--config FILE``, a flat JSON object whose keys are
the long option names (dashes or underscores). Flags given on the command
line override the file. Exit codes: 0 success, 2 bad input or I/O,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .bench import BenchConfig, run_bench, write_results
from .cavi import DEFAULT_TAU_GRID, HyperParams
from .errors import VGPenCRError
from .grouped_model import CenteringStats, build_grouped_design
from .pencr import cross_validate_lambda, default_scale_mode, fit_cavi, sparsify
from .predict import make_model
from .sim import generate

logger = logging.getLogger("vgpencr")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    """Unreadable or inconsistent input files."""


# --- file helpers ---------------------------------------------------------------


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_matrix(path) -> np.ndarray:
    """Numeric CSV to a 2-d array; a non-numeric first row is taken as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: no data rows")
    try:
        arr = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if arr.ndim != 2:
        raise InputError(f"{path}: rows have different lengths")
    return arr


def write_matrix(path, arr: np.ndarray, header=None) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if header:
            wr.writerow(header)
        for row in np.atleast_2d(arr):
            wr.writerow([repr(float(v)) for v in row])


def read_json(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: {exc}") from exc


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_training(data_path, groups_path=None, sizes=None):
    """Response in the first column, predictors after it; sizes from JSON or flag."""
    arr = read_matrix(data_path)
    if arr.shape[1] < 2:
        raise InputError(f"{data_path}: need a response column and at least one predictor")
    if sizes is None:
        if groups_path is None:
            raise InputError("group sizes are required (--groups FILE or --sizes)")
        spec = read_json(groups_path)
        if "sizes" not in spec:
            raise InputError(f"{groups_path}: missing 'sizes'")
        sizes = spec["sizes"]
    design = build_grouped_design(arr[:, 1:], [int(s) for s in sizes])
    return arr[:, 0], design


# --- argument handling ---------------------------------------------------------------


def _hyper_args(p):
    p.add_argument("--r", type=float, default=0.01, help="inverse-gamma shape of sigma^2")
    p.add_argument("--s", type=float, default=0.01, help="inverse-gamma rate of sigma^2")
    p.add_argument("--tau", type=float, default=None, help="fixed global scale (skips selection)")
    p.add_argument("--tau-grid", type=float, nargs="+", default=list(DEFAULT_TAU_GRID))
    p.add_argument("--max-cycles", type=int, default=500)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--min-cycles", type=int, default=2)


def _solver_args(p):
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--rule", choices=("min", "one-se"), default="min")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("grouped", "nongrouped"), default="grouped")
    p.add_argument("--scale-mode", choices=("second-moment", "mean-norm"), default=None)
    p.add_argument("--threads", type=int, default=1)


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV, response first")
    p.add_argument("--groups", default=None, help='JSON {"sizes": [...]}')
    p.add_argument("--sizes", type=int, nargs="+", default=None, help="group sizes (instead of --groups)")


SCENARIO_CHOICES = ("gam", "cat", "categorical", "vc", "varying")


def _scenario_args(p):
    # accepted either positionally (``bench gam``) or as ``--scenario gam``
    p.add_argument("scenario_pos", nargs="?", choices=SCENARIO_CHOICES, metavar="SCENARIO")
    p.add_argument("--scenario", choices=SCENARIO_CHOICES, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vgpencr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit and sparsify; write a model JSON")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    _data_args(p)
    _hyper_args(p)
    _solver_args(p)
    p.add_argument("--lambda", dest="lam", default="cv", help="penalty value or 'cv'")
    p.add_argument("--basis", default=None, help="basis spec JSON to embed in the model")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("cv", help="cross-validate lambda; write the CV curve")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    _data_args(p)
    _hyper_args(p)
    _solver_args(p)
    p.add_argument("--out", required=True, help="CSV of lambda, mean, se")
    p.add_argument("--config", default=None)

    p = sub.add_parser("predict", help="predict from a model JSON")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV of uncentered feature rows")
    p.add_argument("--has-response", action="store_true", help="first column is a response; drop it")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("simulate", help="write a simulated train/test pair")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    _scenario_args(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--g", type=int, default=None, help="G (gam, vc) or K (cat)")
    p.add_argument("--k", type=int, default=None, help="alias of --g for the categorical design")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("bench", help="replicated simulation benchmark")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    _scenario_args(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--g", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--modes", nargs="+", choices=("grouped", "nongrouped"), default=None,
                   help="methods to compare (default: --mode)")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv, _summary.csv, _long.csv")
    _hyper_args(p)
    _solver_args(p)
    p.add_argument("--config", default=None)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    """Parse, then re-parse with config-file values as defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = read_json(args.config)
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise InputError("config must be a flat JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        defaults = {}
        for key, val in cfg.items():
            dest = key.replace("-", "_")
            dest = "lam" if dest == "lambda" else dest
            if dest not in known:
                raise InputError(f"unknown config key {key!r}")
            defaults[dest] = val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    _validate(args)
    return args


def _validate(args):
    if hasattr(args, "scenario_pos"):
        args.scenario = args.scenario or args.scenario_pos
        if args.scenario is None:
            raise InputError("a scenario is required (gam, cat or vc)")
    for name in ("tol", "rel_tol", "lambda_min_ratio"):
        v = getattr(args, name, None)
        if v is not None and not v > 0:
            raise InputError(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "reps", 1) < 1:
        raise InputError("--reps must be at least 1")
    if getattr(args, "threads", 1) < 1:
        raise InputError("--threads must be at least 1")


def _hyper(args) -> HyperParams:
    return HyperParams(r=args.r, s=args.s, tau=args.tau if args.tau is not None else 1.0)


def _cavi_kwargs(args) -> dict:
    return {"max_cycles": args.max_cycles, "rel_tol": args.rel_tol, "min_cycles": args.min_cycles}


def _tau_grid(args):
    return None if args.tau is not None else list(args.tau_grid)


def _cv(args, y, design):
    return cross_validate_lambda(
        y, design, _hyper(args), folds=args.folds, n_lambda=args.n_lambda, rule=args.rule,
        seed=args.seed, mode=args.mode, scale_mode=args.scale_mode,
        lambda_min_ratio=args.lambda_min_ratio, tau_grid=_tau_grid(args), threads=args.threads,
        cavi_kwargs=_cavi_kwargs(args), solve_kwargs={"tol": args.tol, "max_iter": args.max_iter},
    )


# --- commands ------------------------------------------------------------------------


def cmd_fit(args) -> int:
    y, design = load_training(args.data, args.groups, args.sizes)
    scale_mode = args.scale_mode or default_scale_mode(args.mode)
    cv_info = None
    if str(args.lam).lower() == "cv":
        cv = _cv(args, y, design)
        fit, lam = cv.fit, cv.chosen_lambda
        cv_info = {"chosen_lambda": lam, "rule": cv.rule, "folds": args.folds,
                   "n_lambda": int(len(cv.lambdas)), "failed_folds": cv.n_failed_folds}
    else:
        try:
            lam = float(args.lam)
        except ValueError as exc:
            raise InputError(f"--lambda must be a number or 'cv', got {args.lam!r}") from exc
        fit = fit_cavi(y, design, _hyper(args), tau_grid=_tau_grid(args), **_cavi_kwargs(args))
    est = sparsify(fit, lam, scale_mode=scale_mode, mode=args.mode, tol=args.tol, max_iter=args.max_iter)
    stats = fit.data.stats
    model = {
        "format": "vgpencr-model",
        "version": 1,
        "groups": {"sizes": list(design.spec.sizes)},
        "centering": {"y_bar": float(stats.y_bar), "x_bar": [float(v) for v in stats.x_bar]},
        "estimate": est.to_dict(),
        "cavi": fit.summary(),
        "cv": cv_info,
        "kappa_hat": make_model(est.beta_tilde, stats).kappa_hat,
    }
    if args.basis:
        model["bases"] = read_json(args.basis)
    write_json(args.out, model)
    logger.info("selected groups %s at lambda %.6g", model["estimate"]["selected"], lam)
    return EXIT_OK


def cmd_cv(args) -> int:
    y, design = load_training(args.data, args.groups, args.sizes)
    cv = _cv(args, y, design)
    cv.to_csv(args.out)
    print(repr(cv.chosen_lambda))
    return EXIT_OK


def load_model(path):
    m = read_json(path)
    try:
        stats = CenteringStats(float(m["centering"]["y_bar"]), np.asarray(m["centering"]["x_bar"], dtype=float))
        beta = np.asarray(m["estimate"]["beta_tilde"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a model file ({exc})") from exc
    return make_model(beta, stats), m


def cmd_predict(args) -> int:
    model, _ = load_model(args.model)
    X = read_matrix(args.data)
    if args.has_response:
        X = X[:, 1:]
    write_matrix(args.out, model.predict(X)[:, None], header=["prediction"])
    return EXIT_OK


def _size(args):
    return args.g if args.g is not None else args.k


def cmd_simulate(args) -> int:
    train, test = generate(args.scenario, args.seed, args.n, _size(args))
    os.makedirs(args.out_dir, exist_ok=True)
    for name, ds in (("train", train), ("test", test)):
        arr = np.column_stack([ds.y_raw, ds.design.X])
        header = ["y"] + [f"x{j + 1}" for j in range(ds.design.X.shape[1])]
        write_matrix(os.path.join(args.out_dir, f"{name}.csv"), arr, header)
    write_json(os.path.join(args.out_dir, "groups.json"), {"sizes": list(train.design.spec.sizes)})
    truth = train.truth.to_dict()
    truth.update({"seed": args.seed, "n": int(len(train.y_raw)), "G": train.G})
    write_json(os.path.join(args.out_dir, "truth.json"), truth)
    if train.bases:
        write_json(os.path.join(args.out_dir, "basis.json"), [b.to_dict() for b in train.bases])
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario = {"cat": "categorical", "vc": "varying"}.get(args.scenario, args.scenario)
    cfg = BenchConfig(
        scenario=scenario, size=_size(args), n=args.n, reps=args.reps, seed=args.seed,
        modes=tuple(args.modes or [args.mode]), folds=args.folds, n_lambda=args.n_lambda,
        lambda_min_ratio=args.lambda_min_ratio, rule=args.rule, r=args.r, s=args.s,
        tau_grid=tuple([args.tau] if args.tau is not None else args.tau_grid),
        threads=args.threads, max_cycles=args.max_cycles, min_cycles=args.min_cycles,
        rel_tol=args.rel_tol, scale_mode=args.scale_mode, tol=args.tol, max_iter=args.max_iter,
    )
    results, failures = run_bench(cfg)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    paths = write_results(args.out, results)
    ok = cfg.reps - len(failures)
    for rep, err in failures:
        print(f"replication {rep} failed: {err}", file=sys.stderr)
    print(f"{ok}/{cfg.reps} replications succeeded; rows in {paths['rows']}")
    return EXIT_OK if ok >= math.ceil(0.9 * cfg.reps) else EXIT_NUMERIC


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "predict": cmd_predict, "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VGPenCRError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
