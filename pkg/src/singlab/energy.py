"""Normalized free energies, replication grids and learning-coefficient fits.

The normalized free energy of one dataset is

    F~_X  = -log Z(X^n)      + sum_i ln q(x_i)
    F~_XY = -log Z(X^n, Y^n) + sum_i ln q(x_i, y_i)

Adding the true log-likelihood cancels the ``n S`` term and its ``O(sqrt n)``
fluctuation, so the replicate mean tracks ``lambda ln n`` at a modest
number of replicates.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, cell_task, empirical_log_q, sample_dataset
from .evidence import QuadConfig, log_evidence, log_evidence_complete
from .exceptions import DomainError, SinglabError
from .model import Binomial, MixtureSpec, TrueModel

__all__ = [
    "normalized_free_energy_x",
    "normalized_free_energy_xy",
    "EnergyCurve",
    "LambdaFit",
    "GenErrorCurve",
    "energy_curve",
    "fit_lambda",
    "generalization_error_curve",
    "check_geometric_grid",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("family", "K", "Kstar", "M", "eta1", "n", "replicate", "seed", "engine", "f_tilde_x", "f_tilde_xy")
MIN_POINTS = 4
MIN_REPLICATES = 20


def normalized_free_energy_x(dataset: Dataset, spec: MixtureSpec, truth: TrueModel, engine: str = "dp",
                             config: QuadConfig | None = None) -> float:
    if dataset.n == 0:
        return 0.0
    lz = log_evidence(dataset, spec, engine, config=config).log_z
    inc, _ = empirical_log_q(dataset, truth, spec, complete=False)
    return float(-lz + inc)


def normalized_free_energy_xy(dataset: Dataset, spec: MixtureSpec, truth: TrueModel) -> float:
    if dataset.ys is None:
        raise DomainError("the complete free energy needs the true labels")
    if dataset.n == 0:
        return 0.0
    _, comp = empirical_log_q(dataset, truth, spec)
    return float(-log_evidence_complete(dataset, spec) + comp)


def check_geometric_grid(n_grid, min_points: int = MIN_POINTS, rtol: float = 0.05) -> np.ndarray:
    """Validate an increasing, (nearly) geometric grid of positive sample sizes."""
    g = np.asarray(n_grid, dtype=int)
    if g.ndim != 1 or len(g) < min_points:
        raise DomainError(f"n_grid needs at least {min_points} points")
    if g[0] < 1 or np.any(np.diff(g) <= 0):
        raise DomainError("n_grid must be positive and strictly increasing")
    r = g[1:] / g[:-1]
    if np.max(np.abs(r / r.mean() - 1)) > rtol:
        raise DomainError("n_grid must be geometric")
    return g


@dataclass
class EnergyCurve:
    """Replicated normalized free energies on a grid of sample sizes.

    ``values[which]`` has shape ``(len(n_grid), R)``; cells that failed hold
    NaN and are listed in ``errors``.
    """

    n_grid: np.ndarray
    values: dict
    spec: MixtureSpec | None = None
    truth: TrueModel | None = None
    master_seed: int | None = None
    engine: str = "synthetic"
    tol: float | None = None
    errors: list = field(default_factory=list)

    @property
    def R(self) -> int:
        return next(iter(self.values.values())).shape[1]

    @property
    def complete(self) -> bool:
        return not self.errors and all(np.isfinite(v).all() for v in self.values.values())

    @classmethod
    def from_values(cls, n_grid, values, which: str = "x") -> "EnergyCurve":
        """Wrap externally produced replicate values (e.g. synthetic curves)."""
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        return cls(np.asarray(n_grid), {which: v})

    def mean(self, which: str = "x") -> np.ndarray:
        return np.nanmean(self.values[which], axis=1)

    def se(self, which: str = "x") -> np.ndarray:
        v = self.values[which]
        k = np.isfinite(v).sum(axis=1)
        if v.shape[1] < 2:
            return np.zeros(len(v))
        return np.nanstd(v, axis=1, ddof=1) / np.sqrt(k)

    def provenance(self) -> dict:
        return {
            "spec": self.spec.to_dict() if self.spec else None,
            "truth": self.truth.to_dict() if self.truth else None,
            "n_grid": [int(n) for n in self.n_grid],
            "R": self.R,
            "master_seed": self.master_seed,
            "engine": self.engine,
            "tol": self.tol,
            "errors": self.errors,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        fam = self.spec.family
        M = fam.M if isinstance(fam, Binomial) else ""
        fx = self.values.get("x")
        fxy = self.values.get("xy")
        for i, n in enumerate(self.n_grid):
            for r in range(self.R):
                w.writerow([fam.to_dict()["name"], self.spec.K, self.truth.Kstar, M, repr(self.spec.prior.eta1),
                            int(n), r, self.master_seed, self.engine,
                            "" if fx is None else repr(float(fx[i, r])),
                            "" if fxy is None else repr(float(fxy[i, r]))])
        return buf.getvalue()


def _cell(args):
    spec, truth, n, r, seed, engine, which, config = args
    ds = sample_dataset(truth, spec, int(n), seed, cell_task(n, r))
    out = {}
    err = None
    if "xy" in which:
        out["xy"] = normalized_free_energy_xy(ds, spec, truth)
    if "x" in which:
        try:
            out["x"] = normalized_free_energy_x(ds, spec, truth, engine, config)
        except SinglabError as exc:
            out["x"] = np.nan
            err = {"n": int(n), "replicate": r, "error": type(exc).__name__, "message": str(exc)}
    return out, err


def energy_curve(spec: MixtureSpec, truth: TrueModel, n_grid, R: int, seed: int, engine: str = "dp",
                 which=("x", "xy"), workers: int = 1, config: QuadConfig | None = None) -> EnergyCurve:
    """Replicate ``F~_X`` and/or ``F~_XY`` over ``R`` datasets per grid point.

    Replicate ``r`` at size ``n`` uses task :func:`~singlab.data.cell_task`,
    so both energies come from the same datasets and any schedule of the
    cells gives the same curve.
    """
    grid = check_geometric_grid(n_grid)
    if R < MIN_REPLICATES:
        raise DomainError(f"R must be at least {MIN_REPLICATES}")
    which = tuple(which)
    jobs = [(spec, truth, n, r, int(seed), engine, which, config) for n in grid for r in range(R)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_cell(j) for j in jobs]
    values = {w: np.array([res[w] for res, _ in results], dtype=float).reshape(len(grid), R) for w in which}
    errors = [e for _, e in results if e is not None]
    tol = config.tol if (config is not None and engine == "quad") else (QuadConfig().tol if engine == "quad" else None)
    return EnergyCurve(grid, values, spec, truth, int(seed), engine, tol, errors)


@dataclass(frozen=True)
class LambdaFit:
    lambda_hat: float
    intercept: float
    ci_lo: float
    ci_hi: float
    n_points: int
    model: str
    m_hat: float | None = None
    residuals: tuple = ()
    chi2: float | None = None

    def to_dict(self) -> dict:
        d = {"lambda_hat": self.lambda_hat, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi}
        if self.m_hat is not None:
            d["m_hat"] = self.m_hat
        d["n_points"] = self.n_points
        d["model"] = self.model
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _design(n, model):
    ln = np.log(n)
    if model == "ln_only":
        return np.column_stack([np.ones_like(ln), ln])
    if model == "ln_plus_lnln":
        return np.column_stack([np.ones_like(ln), ln, -np.log(ln)])
    raise DomainError(f"unknown fit model {model!r}")


def _wls(X, y, se):
    if np.all(se > 0):
        w = 1.0 / se
        coef, *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
    else:
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef


def fit_slope(n, mean, se, model: str = "ln_only"):
    """Weighted least-squares coefficients of ``mean`` on ``ln n`` (and ``-lnln n``)."""
    n = np.asarray(n, float)
    if len(n) < MIN_POINTS:
        raise DomainError(f"a fit needs at least {MIN_POINTS} grid points")
    return _wls(_design(n, model), np.asarray(mean, float), np.asarray(se, float))


def bootstrap_slope(values, n, model: str = "ln_only", n_boot: int = 1000, seed: int = 0,
                    level: float = 0.95):
    """Percentile CI of the fitted slope, resampling replicates within each cell."""
    rng = np.random.default_rng(seed)
    n = np.asarray(n, float)
    X = _design(n, model)
    v = np.asarray(values, float)
    cells, R = v.shape
    idx = rng.integers(0, R, size=(n_boot, cells, R))
    boot = np.take_along_axis(np.broadcast_to(v, (n_boot, cells, R)), idx, axis=2)
    means = boot.mean(axis=2)
    ses = boot.std(axis=2, ddof=1) / np.sqrt(R) if R > 1 else np.zeros_like(means)
    slopes = np.array([_wls(X, means[b], ses[b])[1] for b in range(n_boot)])
    a = (1 - level) / 2
    return np.quantile(slopes, a), np.quantile(slopes, 1 - a)


def fit_lambda(curve: EnergyCurve, model: str = "ln_only", which: str = "x", n_boot: int = 1000,
               seed: int = 0, level: float = 0.95) -> LambdaFit:
    """Fit ``mean F~ = c + lambda ln n [- (m - 1) lnln n]``.

    Inverse-variance weights come from the per-cell standard errors; a
    noise-free curve is fitted unweighted.  The interval is a percentile
    bootstrap over replicates, widened if needed so it contains the point
    estimate.
    """
    v = curve.values[which]
    if not np.isfinite(v).all():
        raise DomainError("curve has failed cells; refit after recomputing them")
    mean, se = curve.mean(which), curve.se(which)
    coef = fit_slope(curve.n_grid, mean, se, model)
    lam = float(coef[1])
    lo, hi = bootstrap_slope(v, curve.n_grid, model, n_boot, seed, level) if v.shape[1] > 1 else (lam, lam)
    X = _design(np.asarray(curve.n_grid, float), model)
    resid = mean - X @ coef
    chi2 = float(np.sum((resid / se) ** 2)) if np.all(se > 0) else None
    m_hat = float(coef[2] + 1) if model == "ln_plus_lnln" else None
    return LambdaFit(lam, float(coef[0]), float(min(lo, lam)), float(max(hi, lam)), len(curve.n_grid),
                     model, m_hat, tuple(float(r) for r in resid), chi2)


@dataclass(frozen=True)
class GenErrorCurve:
    n_mid: np.ndarray
    g_hat: np.ndarray
    se: np.ndarray


def generalization_error_curve(curve: EnergyCurve, which: str = "x") -> GenErrorCurve:
    """Difference quotients of the mean normalized free energy.

    The midpoint of ``[n1, n2]`` is the logarithmic mean
    ``(n2 - n1) / ln(n2 / n1)``, at which the quotient of ``lambda ln n`` is
    exactly ``lambda / n``.
    """
    n = np.asarray(curve.n_grid, float)
    if len(n) < 3:
        raise DomainError("need at least 3 grid points")
    m, se = curve.mean(which), curve.se(which)
    dn = np.diff(n)
    g = np.diff(m) / dn
    g_se = np.sqrt(se[1:] ** 2 + se[:-1] ** 2) / dn
    mid = dn / np.log(n[1:] / n[:-1])
    return GenErrorCurve(mid, g, g_se)
