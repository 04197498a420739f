"""Replicated bias/coverage study comparing the three fitting methods.

Each replicate simulates one dataset and fits it three ways — the
dependence-ignoring additive model (GAM), the Laplace-approximate mixed
model (GAMM), and the two-stage quadrature method (PML) — then evaluates
the fitted smooth and its 95% band on a fixed grid.

Smooths are compared as centered contrasts: both the estimate and the
truth have their average over the dataset's covariate values removed.
The level of the smooth is not comparable across methods (a
dependence-ignoring Poisson fit absorbs half the intercept variance into
the level), while the centered shape is the common estimand; bands use
the variance of the centered contrast.

Replicates get independent, worker-count-independent random substreams,
so a study is a pure function of (config, seed) and records files are
byte-identical across reruns.
"""

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

from .errors import ConfigurationError, NumericError, PmlgammError
from .gam import fit_gam
from .gamm_laplace import fit_gamm_laplace
from .pml import WALD_Z, fit_pml
from .simulate import simulate_dataset, true_function
from .splines import build_design

METHODS = ("GAM", "GAMM", "PML")

RECORD_COLUMNS = ("replicate", "m", "n", "method", "bias_f", "bias_sigma",
                  "coverage_f", "converged", "runtime_ms")
SUMMARY_COLUMNS = ("m", "n", "method",
                   "bias_f_mean", "bias_f_se",
                   "bias_sigma_mean", "bias_sigma_se",
                   "coverage_f_mean", "coverage_f_se",
                   "n_converged", "n_total", "convergence_rate")
POINTWISE_COLUMNS = ("replicate", "m", "n", "method", "x",
                     "estimate", "lower", "upper", "truth")


@dataclass
class StudyConfig:
    """Declarative description of one study run."""

    m_grid: tuple = (5, 10, 20, 50, 100)
    n_grid: tuple = (3, 10)
    replicates: int = 200
    family: str = "poisson"
    sigma_true: float = 1.0
    f_true: str = "sin2pi"
    num_basis: int = 10
    quad_points: int = 9
    seed: int = 0
    grid_points: int = 100
    grid_lo: float = 0.05
    grid_hi: float = 0.95
    threads: int = 1
    penalty_logdet: str = "rank"
    dump_pointwise: bool = False

    def __post_init__(self):
        self.m_grid = tuple(int(v) for v in self.m_grid)
        self.n_grid = tuple(int(v) for v in self.n_grid)
        if self.replicates < 1:
            raise ConfigurationError("replicates must be at least 1")
        if any(v < 1 for v in self.m_grid) or any(v < 1 for v in self.n_grid):
            raise ConfigurationError("all m and n values must be at least 1")
        if not 0 <= self.grid_lo < self.grid_hi <= 1:
            raise ConfigurationError("grid range must satisfy 0 <= lo < hi <= 1")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_lo, self.grid_hi, self.grid_points)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        """Parse a ``key = value`` config file; lists are comma separated."""
        known = {f.name: f.type for f in fields(cls)}
        values = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(
                        f"{path}: line {lineno}: expected 'key = value', got {raw.strip()!r}")
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in known:
                    raise ConfigurationError(f"{path}: unknown config key {key!r}")
                values[key] = _parse_config_value(key, value, path)
        return cls(**values)


def _parse_config_value(key, value, path):
    try:
        if key in ("m_grid", "n_grid"):
            return tuple(int(v) for v in value.split(","))
        if key in ("replicates", "num_basis", "quad_points", "seed",
                   "grid_points", "threads"):
            return int(value)
        if key in ("sigma_true", "grid_lo", "grid_hi"):
            return float(value)
        if key == "dump_pointwise":
            if value.lower() not in ("true", "false", "0", "1"):
                raise ValueError("expected a boolean")
            return value.lower() in ("true", "1")
        return value
    except ValueError as exc:
        raise ConfigurationError(f"{path}: key {key!r}: {exc}") from None


@dataclass
class StudyRecord:
    """Per-replicate, per-method outcome."""

    replicate: int
    m: int
    n: int
    method: str
    bias_f: float | None
    bias_sigma: float | None
    coverage_f: float | None
    converged: bool
    runtime_ms: float | None = field(default=None, compare=False)


def replicate_seed(seed, m, n, replicate) -> np.random.SeedSequence:
    """Worker-independent substream for one (m, n, replicate) cell."""
    return np.random.SeedSequence(entropy=(int(seed), int(m), int(n), int(replicate)))


def _centered_metrics(beta, cov_rows_fn, design, grid, truth_c, b_mean):
    """Bias and coverage of the centered smooth contrast on the grid."""
    W = design.smooth_rows(grid, 0) - b_mean[None, :]
    est_c = W @ beta
    err = est_c - truth_c
    bias = float(np.mean(err))
    cov = cov_rows_fn(W)
    half = WALD_Z * np.sqrt(np.maximum(cov, 0.0))
    coverage = float(np.mean(np.abs(err) <= half))
    return bias, coverage


def _quadform_rows(W, C):
    return np.einsum("ij,jk,ik->i", W, C, W)


def run_replicate(config: StudyConfig, m, n, replicate):
    """Simulate one dataset, fit all three methods, return the records."""
    data = simulate_dataset(m, n, config.sigma_true, config.f_true,
                            config.family, replicate_seed(config.seed, m, n, replicate))
    design = build_design(data.X, num_basis=config.num_basis, support=(0.0, 1.0))
    grid = config.grid
    f = true_function(config.f_true)
    B_data = design.design_matrix(data.X)
    # centering functional restricted to the evaluation window, so spline
    # flare outside the trimmed grid cannot leak into the contrast
    x = data.X[:, 0]
    inside = (x >= config.grid_lo) & (x <= config.grid_hi)
    if not np.any(inside):
        inside = np.ones_like(x, dtype=bool)
    b_mean = B_data[inside].mean(axis=0)
    truth_c = f(grid) - float(np.mean(f(x[inside])))

    records, pointwise = [], []

    def evaluate(method, beta, beta_cov, sigma_hat, converged, elapsed):
        bias = coverage = None
        if beta is not None and beta_cov is not None:
            bias, coverage = _centered_metrics(
                beta, lambda W: _quadform_rows(W, beta_cov), design, grid,
                truth_c, b_mean)
            if config.dump_pointwise:
                W = design.smooth_rows(grid, 0) - b_mean[None, :]
                est = W @ beta
                half = WALD_Z * np.sqrt(np.maximum(_quadform_rows(W, beta_cov), 0.0))
                for j in range(grid.size):
                    pointwise.append((replicate, m, n, method, grid[j],
                                      est[j], est[j] - half[j], est[j] + half[j],
                                      truth_c[j]))
        bias_sigma = None
        if method != "GAM" and sigma_hat is not None:
            bias_sigma = float(sigma_hat - config.sigma_true)
        records.append(StudyRecord(replicate, m, n, method, bias, bias_sigma,
                                   coverage, converged, elapsed))

    # GAM: stage one on its own
    t0 = time.perf_counter()
    gam_fit = None
    try:
        gam_fit = fit_gam(data, config.family, design,
                          penalty_logdet=config.penalty_logdet)
        evaluate("GAM", gam_fit.beta, gam_fit.beta_covariance, None,
                 gam_fit.converged, _ms(t0))
    except (PmlgammError, np.linalg.LinAlgError):
        evaluate("GAM", None, None, None, False, _ms(t0))

    # GAMM: Laplace-approximate baseline
    t0 = time.perf_counter()
    try:
        gamm_fit = fit_gamm_laplace(data, config.family, design,
                                    penalty_logdet=config.penalty_logdet)
        evaluate("GAMM", gamm_fit.beta_hat, gamm_fit.beta_covariance,
                 gamm_fit.sigma_hat, gamm_fit.converged, _ms(t0))
    except (PmlgammError, np.linalg.LinAlgError):
        evaluate("GAMM", None, None, None, False, _ms(t0))

    # PML: two-stage quadrature method, reusing the stage-one fit
    t0 = time.perf_counter()
    try:
        if gam_fit is None:
            raise NumericError("stage-one fit unavailable")
        pml_fit = fit_pml(data, config.family, design, gam_fit,
                          k=config.quad_points)
        beta_cov = (pml_fit.beta_covariance
                    if pml_fit.covariance is not None else None)
        evaluate("PML", pml_fit.beta_hat, beta_cov, pml_fit.sigma_hat,
                 pml_fit.ok, _ms(t0))
    except (PmlgammError, np.linalg.LinAlgError):
        evaluate("PML", None, None, None, False, _ms(t0))

    return records, pointwise


def _ms(t0):
    return 1000.0 * (time.perf_counter() - t0)


def _replicate_task(args):
    config, m, n, replicate = args
    if threadpool_limits is None:  # pragma: no cover
        return run_replicate(config, m, n, replicate)
    # single-threaded BLAS keeps replicate arithmetic identical no matter
    # how many workers share the machine
    with threadpool_limits(limits=1):
        return run_replicate(config, m, n, replicate)


def run_study(config: StudyConfig, progress=None):
    """All replicates over the (m, n) grid; returns (records, pointwise).

    Records are merged in (m, n, replicate, method) order regardless of
    the worker count.
    """
    tasks = [(config, m, n, r)
             for m in config.m_grid
             for n in config.n_grid
             for r in range(config.replicates)]
    results = {}
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            for task, out in zip(tasks, pool.map(_replicate_task, tasks,
                                                 chunksize=4)):
                results[task[1:]] = out
                _maybe_progress(progress, config, task, results)
    else:
        for task in tasks:
            results[task[1:]] = _replicate_task(task)
            _maybe_progress(progress, config, task, results)

    records, pointwise = [], []
    for m in config.m_grid:
        for n in config.n_grid:
            for r in range(config.replicates):
                rec, pw = results[(m, n, r)]
                method_order = {name: i for i, name in enumerate(METHODS)}
                records.extend(sorted(rec, key=lambda s: method_order[s.method]))
                pointwise.extend(pw)
    return records, pointwise


def _maybe_progress(progress, config, task, results):
    if progress is None:
        return
    _, m, n, r = task
    if r == config.replicates - 1:
        done = sum(1 for (mm, nn, _) in results if (mm, nn) == (m, n))
        if done == config.replicates:
            progress(m, n)


@dataclass
class SummaryRow:
    m: int
    n: int
    method: str
    bias_f_mean: float | None
    bias_f_se: float | None
    bias_sigma_mean: float | None
    bias_sigma_se: float | None
    coverage_f_mean: float | None
    coverage_f_se: float | None
    n_converged: int
    n_total: int
    convergence_rate: float


def _mean_se(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    mean = float(np.mean(arr))
    if arr.size == 1:
        return mean, 0.0
    se = float(np.std(arr, ddof=1) / math.sqrt(arr.size))
    return mean, se


def aggregate(records) -> list:
    """Mean and Monte-Carlo standard error per (m, n, method) over the
    converged replicates."""
    if not records:
        raise ConfigurationError("no records to aggregate")
    keys = sorted({(r.m, r.n, r.method) for r in records},
                  key=lambda k: (k[0], k[1], METHODS.index(k[2])))
    rows = []
    for m, n, method in keys:
        cell = [r for r in records if (r.m, r.n, r.method) == (m, n, method)]
        used = [r for r in cell if r.converged]
        bias_mean, bias_se = _mean_se([r.bias_f for r in used])
        bs_mean, bs_se = (None, None) if method == "GAM" else _mean_se(
            [r.bias_sigma for r in used])
        cov_mean, cov_se = _mean_se([r.coverage_f for r in used])
        rows.append(SummaryRow(m, n, method, bias_mean, bias_se, bs_mean,
                               bs_se, cov_mean, cov_se, len(used), len(cell),
                               len(used) / len(cell)))
    return rows


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_records_csv(records, path):
    """Records file; the runtime column is left empty so reruns of the
    same config are byte-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([r.replicate, r.m, r.n, r.method, _cell(r.bias_f),
                             _cell(r.bias_sigma), _cell(r.coverage_f),
                             _cell(r.converged), ""])


def write_summary_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for r in rows:
            writer.writerow([r.m, r.n, r.method,
                             _cell(r.bias_f_mean), _cell(r.bias_f_se),
                             _cell(r.bias_sigma_mean), _cell(r.bias_sigma_se),
                             _cell(r.coverage_f_mean), _cell(r.coverage_f_se),
                             r.n_converged, r.n_total,
                             _cell(r.convergence_rate)])


def write_pointwise_csv(pointwise, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POINTWISE_COLUMNS)
        for row in pointwise:
            writer.writerow([row[0], row[1], row[2], row[3]]
                            + [_cell(v) for v in row[4:]])
