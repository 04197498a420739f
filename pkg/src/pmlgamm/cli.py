"""Command-line interface: single fits, data simulation, and full studies.

Exit codes: 0 for a converged fit, 2 for a flagged (non-converged or
covariance-withheld) fit, 1 for any error.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import read_csv, write_csv
from .errors import PmlgammError
from .gam import fit_gam
from .gamm_laplace import fit_gamm_laplace
from .pml import fit_pml, pml_objective_weighted_nll_variant
from .simulate import simulate_dataset
from .splines import build_design
from .study import (StudyConfig, aggregate, run_study, write_pointwise_csv,
                    write_records_csv, write_summary_csv)

log = logging.getLogger("pmlgamm")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

SEED_ENV_VAR = "PMLGAMM_SEED"


def _default_seed():
    return int(os.environ.get(SEED_ENV_VAR, "0"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmlgamm",
        description="Additive mixed models by penalized quadrature marginal "
                    "likelihood, with Laplace and no-random-effect baselines.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one model to a dataset CSV")
    fit.add_argument("--data", required=True, help="input CSV (group,y,x1,...)")
    fit.add_argument("--model", required=True,
                     choices=["gam", "gamm-laplace", "pml"])
    fit.add_argument("--family", default="poisson",
                     choices=["gaussian", "poisson", "bernoulli"])
    fit.add_argument("--quad-points", type=int, default=9,
                     help="quadrature order for --model pml (default 9)")
    fit.add_argument("--num-basis", type=int, default=10)
    fit.add_argument("--knots", default="quantile",
                     choices=["quantile", "uniform"])
    fit.add_argument("--penalty-logdet", default="rank",
                     choices=["rank", "unit"],
                     help="log-smoothing-parameter coefficient in marginal "
                          "objectives: penalty rank over two, or one")
    fit.add_argument("--stage1", default=None,
                     help="existing stage-one fit JSON for --model pml; "
                          "fitted internally when omitted")
    fit.add_argument("--out", default=None, help="fit JSON path "
                     "(default: <out-dir>/fit.json)")
    fit.add_argument("--out-dir", default=".", help="output directory")
    fit.add_argument("--band", default=None,
                     help="also write a function-band CSV to this path")
    fit.add_argument("--band-points", type=int, default=100)
    fit.add_argument("--dump-basis", action="store_true",
                     help="write knots and penalty matrices as CSVs next to "
                          "the fit for inspection")
    fit.add_argument("--max-outer", type=int, default=200)

    sim = sub.add_parser("simulate", help="write a simulated dataset CSV")
    sim.add_argument("--m", type=int, required=True, help="number of groups")
    sim.add_argument("--n", type=int, required=True, help="rows per group")
    sim.add_argument("--sigma", type=float, default=1.0)
    sim.add_argument("--f-true", default="sin2pi",
                     choices=["sin2pi", "linear", "flat"])
    sim.add_argument("--family", default="poisson",
                     choices=["gaussian", "poisson", "bernoulli"])
    sim.add_argument("--seed", type=int, default=None,
                     help=f"default: ${SEED_ENV_VAR} or 0")
    sim.add_argument("--out", default=None,
                     help="output CSV (default: <out-dir>/dataset.csv)")
    sim.add_argument("--out-dir", default=".")

    study = sub.add_parser("study", help="run a replicated bias/coverage study")
    study.add_argument("--config", required=True, help="key = value config file")
    study.add_argument("--out-dir", default=".")
    study.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: config value)")
    study.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 means "flagged fit" here
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_study(args)
    except PmlgammError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_ERROR


def _json_ready(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def _write_json(payload, path):
    payload = {k: _json_ready(v) for k, v in payload.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit(args) -> int:
    data = read_csv(args.data)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(args.out) if args.out else out_dir / "fit.json"
    design = build_design(data.X, num_basis=args.num_basis,
                          knot_strategy=args.knots)
    if args.dump_basis:
        _dump_basis(design, out_dir)

    flagged = False
    band_source = None
    if args.model == "gam":
        fit = fit_gam(data, args.family, design,
                      penalty_logdet=args.penalty_logdet,
                      max_outer=args.max_outer)
        payload = {
            "model": "gam",
            "family": args.family,
            "lambda_hat": fit.lambda_hat,
            "beta": fit.beta,
            "laml": fit.laml,
            "outer_iterations": fit.outer_iterations,
            "converged": bool(fit.converged),
        }
        flagged = not fit.converged
        band_source = (fit.beta, fit.beta_covariance)
    elif args.model == "gamm-laplace":
        fit = fit_gamm_laplace(data, args.family, design,
                               penalty_logdet=args.penalty_logdet,
                               max_outer=args.max_outer)
        payload = {
            "model": "gamm-laplace",
            "family": args.family,
            "sigma_hat": fit.sigma_hat,
            "lambda_hat": fit.lambda_hat,
            "beta_hat": fit.beta_hat,
            "objective": fit.objective,
            "outer_iterations": fit.outer_iterations,
            "converged": bool(fit.converged),
        }
        flagged = not fit.converged
        band_source = (fit.beta_hat, fit.beta_covariance)
    else:
        gam_fit = _resolve_stage1(args, data, design)
        fit = fit_pml(data, args.family, design, gam_fit, k=args.quad_points,
                      max_iter=args.max_outer)
        payload = {
            "model": "pml",
            "family": args.family,
            "sigma_hat": fit.sigma_hat,
            "beta_hat": fit.beta_hat,
            "lambda_used": fit.lambda_used,
            "k": fit.k,
            "objective": fit.objective,
            "iterations": fit.iterations,
            "converged": bool(fit.ok),
        }
        flagged = not fit.ok
        if fit.covariance is not None:
            band_source = (fit.beta_hat, fit.beta_covariance)
        if args.verbose:
            alt = pml_objective_weighted_nll_variant(
                np.log(fit.sigma_hat), fit.beta_hat, fit.lambda_used, fit.k,
                data, args.family, design)
            log.debug("objective=%r weighted-nll variant=%r",
                      fit.objective, alt)

    _write_json(payload, out_path)
    log.info("wrote %s", out_path)
    if args.band:
        if band_source is None:
            log.error("band requested but covariance is unavailable")
            return EXIT_ERROR
        _write_band(args, data, design, band_source)
    return EXIT_FLAGGED if flagged else EXIT_OK


def _resolve_stage1(args, data, design):
    if args.stage1:
        with open(args.stage1) as fh:
            stage1 = json.load(fh)
        from .gam import GamFit
        return GamFit(
            lambda_hat=np.asarray(stage1["lambda_hat"], dtype=float),
            beta=np.asarray(stage1["beta"], dtype=float),
            laml=float(stage1.get("laml", np.nan)),
            outer_iterations=int(stage1.get("outer_iterations", 0)),
            converged=bool(stage1.get("converged", True)),
            beta_covariance=None,
            penalty_logdet=args.penalty_logdet,
        )
    log.info("no stage-one fit supplied; fitting one internally")
    return fit_gam(data, args.family, design,
                   penalty_logdet=args.penalty_logdet,
                   max_outer=args.max_outer)


def _write_band(args, data, design, band_source):
    beta, cov = band_source
    x = data.X[:, 0]
    grid = np.linspace(float(x.min()), float(x.max()), args.band_points)
    W = design.smooth_rows(grid, 0)
    estimate = W @ beta
    from .pml import WALD_Z, FunctionBand
    variance = np.einsum("ij,jk,ik->i", W, cov, W)
    half = WALD_Z * np.sqrt(np.maximum(variance, 0.0))
    FunctionBand(grid, estimate, estimate - half, estimate + half).write_csv(args.band)
    log.info("wrote %s", args.band)


def _dump_basis(design, out_dir):
    for s, basis in enumerate(design.bases):
        knots_path = Path(out_dir) / f"basis{s}_knots.csv"
        with open(knots_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["knot"])
            for v in basis.knots:
                writer.writerow([repr(float(v))])
        penalty_path = Path(out_dir) / f"basis{s}_penalty.csv"
        np.savetxt(penalty_path, basis.penalty, delimiter=",")
        log.info("wrote %s and %s", knots_path, penalty_path)


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    data = simulate_dataset(args.m, args.n, args.sigma, args.f_true,
                            args.family, seed)
    out = Path(args.out) if args.out else Path(args.out_dir) / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, out)
    log.info("wrote %s (%d rows)", out, data.n)
    return EXIT_OK


def cmd_study(args) -> int:
    config = StudyConfig.from_file(args.config)
    if args.threads is not None:
        config.threads = args.threads
    if args.seed is not None:
        config.seed = args.seed
    elif SEED_ENV_VAR in os.environ and config.seed == 0:
        config.seed = _default_seed()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    t_start = time.perf_counter()

    def progress(m, n):
        print(f"completed cell m={m} n={n} "
              f"({time.perf_counter() - t_start:.1f}s elapsed)",
              file=sys.stderr, flush=True)

    records, pointwise = run_study(config, progress=progress)
    write_records_csv(records, out_dir / "study_records.csv")
    write_summary_csv(aggregate(records), out_dir / "study_summary.csv")
    if config.dump_pointwise:
        write_pointwise_csv(pointwise, out_dir / "study_pointwise.csv")
    log.info("wrote %s and %s", out_dir / "study_records.csv",
             out_dir / "study_summary.csv")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
