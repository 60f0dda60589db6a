"""Posterior over ``(a, b1, b2)`` for two-component learners.

``grid_posterior`` tabulates the posterior on a tensor Gauss-Legendre grid
in prior-CDF coordinates.  ``mass_curve`` follows the masses of the three
branch neighbourhoods across sample sizes using the adaptive region-aligned
cubature of :func:`singlab.evidence.posterior_region_mass`.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import beta as beta_dist

from .data import Dataset, cell_task, sample_dataset
from .energy import MIN_REPLICATES, check_geometric_grid
from .evidence import QuadConfig, _make_log_likelihood, _Transform, posterior_region_mass
from .exceptions import DomainError, UnsupportedEngineError
from .model import Binomial, MixtureSpec, TrueModel
from .regions import REGION_KEYS, RegionSet, inclusion_exclusion_total

__all__ = [
    "RegionSet",
    "GridPosterior",
    "GridResolutionWarning",
    "grid_posterior",
    "MassCurve",
    "mass_curve",
    "detect_phase",
    "count_inversions",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("eta1", "n", "mass_w1", "mass_w2", "mass_w3", "mass_w12", "mass_w23", "mass_w13", "mass_rest", "err_est")
PHASES = ("eliminate", "use_all", "transition_ambiguous")


class GridResolutionWarning(UserWarning):
    """The posterior is narrower than two grid steps along some axis."""


@dataclass
class GridPosterior:
    """Posterior masses on a tensor grid.

    ``a``, ``b1``, ``b2`` are node coordinates, ``t_weights`` the quadrature
    weights in CDF coordinates and ``table[i, j, k]`` the posterior mass of
    node ``(a_i, b1_j, b2_k)``; the table sums to one.
    """

    a: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    t_nodes: np.ndarray
    t_weights: np.ndarray
    table: np.ndarray
    log_lik: np.ndarray
    spec: MixtureSpec

    def marginal_mass(self, axis: str) -> np.ndarray:
        drop = {"a": (1, 2), "b1": (0, 2), "b2": (0, 1)}[axis]
        return self.table.sum(axis=drop)

    def marginal_density(self, axis: str) -> np.ndarray:
        """Marginal posterior density in parameter units at the nodes.

        The CDF coordinate satisfies ``dt = prior(theta) d theta``, so the
        density is mass / t-weight times the prior density.
        """
        tr = _Transform(self.spec)
        m = self.marginal_mass(axis) / self.t_weights
        p = self.spec.prior
        if axis == "a":
            return m * beta_dist.pdf(self.a, p.eta1, p.eta1)
        b = self.b1 if axis == "b1" else self.b2
        if isinstance(self.spec.family, Binomial):
            return m * beta_dist.pdf(b, p.alpha, p.beta)
        dens = np.exp(-0.5 * (b / p.scale) ** 2) / (p.scale * np.sqrt(2 * np.pi)) / (tr.zhi - tr.zlo)
        return m * dens


def _composite_nodes(resolution: int, order: int = 4):
    panels = max(1, resolution // order)
    x, w = leggauss(order)
    edges = np.linspace(0, 1, panels + 1)
    h = np.diff(edges) / 2
    t = ((edges[:-1] + edges[1:]) / 2)[:, None] + h[:, None] * x[None, :]
    tc = ((1 - (edges[:-1] + edges[1:]) / 2))[:, None] - h[:, None] * x[None, :]
    return t.ravel(), tc.ravel(), (h[:, None] * w[None, :]).ravel()


def grid_posterior(dataset: Dataset, spec: MixtureSpec, resolution: int = 64) -> GridPosterior:
    """Normalised posterior table on ``resolution`` nodes per axis.

    Nodes are composite Gauss-Legendre points (order 4 panels) in the prior
    CDF coordinates, so with no data the table reproduces the prior.
    """
    if spec.K != 2:
        raise UnsupportedEngineError("grid posterior is defined for K = 2 only")
    if resolution < 4:
        raise DomainError("resolution must be at least 4")
    tr = _Transform(spec)
    t, tc, w = _composite_nodes(resolution)
    log_f = _make_log_likelihood(dataset, spec, tr)
    node = (t[None], tc[None], w[None])
    L = log_f([node, node, node])[0]
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    top = L.max()
    mass = np.exp(L - top) * W
    table = mass / mass.sum()
    a = tr.weight(t, tc)[0]
    b = tr.comp(t)
    gp = GridPosterior(a, b, b.copy(), t, w, table, L, spec)
    step = 1.0 / len(t)
    for ax in ("a", "b1", "b2"):
        m = gp.marginal_mass(ax)
        mu = np.sum(m * t)
        sd = np.sqrt(max(np.sum(m * (t - mu) ** 2), 0.0))
        if sd < 2 * step:
            warnings.warn(f"posterior sd along {ax} is below two grid steps; increase resolution",
                          GridResolutionWarning, stacklevel=2)
    return gp


def count_inversions(seq, direction: str = "up") -> int:
    """Number of adjacent steps that go against ``direction``."""
    d = np.diff(np.asarray(seq, float))
    return int(np.sum(d < 0) if direction == "up" else np.sum(d > 0))


@dataclass
class MassCurve:
    """Replicated region masses; ``masses[key]`` has shape ``(cells, R)``."""

    n_grid: np.ndarray
    masses: dict
    err_est: np.ndarray
    eta1: float
    regions: RegionSet | None = None
    master_seed: int | None = None
    errors: list = field(default_factory=list)

    def mean(self, key: str) -> np.ndarray:
        if key == "union13":
            return self.mean("w1") + self.mean("w3") - self.mean("w13")
        if key == "w2_only":
            return self.mean("w2") - self.mean("w12") - self.mean("w23") + self.mean("w123")
        if key == "union13_only":
            return self.mean("union13") - self.mean("w12") - self.mean("w23") + self.mean("w123")
        return np.nanmean(self.masses[key], axis=1)

    def inclusion_exclusion(self) -> np.ndarray:
        """Per-cell, per-replicate ``|W1 u W2 u W3| + rest``."""
        return inclusion_exclusion_total(self.masses)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        cols = ["w1", "w2", "w3", "w12", "w23", "w13", "rest"]
        means = {k: self.mean(k) for k in cols}
        err = np.nanmax(self.err_est, axis=1)
        for i, n in enumerate(self.n_grid):
            w.writerow([repr(self.eta1), int(n)] + [repr(float(means[k][i])) for k in cols] + [repr(float(err[i]))])
        return buf.getvalue()


def _mass_cell(args):
    spec, truth, n, r, seed, regions, config = args
    ds = sample_dataset(truth, spec, int(n), seed, cell_task(n, r))
    rm = posterior_region_mass(ds, spec, regions, config)
    return rm.masses, rm.err_est


def mass_curve(spec: MixtureSpec, truth: TrueModel, n_grid, R: int, seed: int, regions: RegionSet | None = None,
               config: QuadConfig | None = None, workers: int = 1, min_replicates: int = MIN_REPLICATES
               ) -> MassCurve:
    """Region masses for ``R`` datasets at each ``n``; same datasets as :func:`energy_curve`."""
    if truth.Kstar != 1 or spec.K != 2:
        raise DomainError("branch masses are defined for K = 2 learners of a one-component truth")
    grid = check_geometric_grid(n_grid)
    if R < min_replicates:
        raise DomainError(f"R must be at least {min_replicates}")
    regions = RegionSet(float(truth.bstar[0])) if regions is None else regions
    jobs = [(spec, truth, n, r, int(seed), regions, config) for n in grid for r in range(R)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            res = list(ex.map(_mass_cell, jobs))
    else:
        res = [_mass_cell(j) for j in jobs]
    masses = {k: np.array([m[k] for m, _ in res]).reshape(len(grid), R) for k in REGION_KEYS}
    err = np.array([e for _, e in res]).reshape(len(grid), R)
    return MassCurve(grid, masses, err, spec.prior.eta1, regions, int(seed))


def _increasing(n_grid, m) -> bool:
    slope = np.polyfit(np.log(np.asarray(n_grid, float)), m, 1)[0]
    return bool(slope > 0)


def detect_phase(curve: MassCurve, threshold: float = 0.5) -> str:
    """``eliminate`` if W1 u W3 dominates and grows, ``use_all`` if W2 does.

    Dominance is read at the largest ``n``; growth is a positive slope of
    the mean mass against ``ln n``.
    """
    u13 = curve.mean("union13")
    w2 = curve.mean("w2")
    if u13[-1] > threshold and _increasing(curve.n_grid, u13):
        return "eliminate"
    if w2[-1] > threshold and _increasing(curve.n_grid, w2):
        return "use_all"
    return "transition_ambiguous"
