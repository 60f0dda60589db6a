"""Latent-variable estimation error, theory values and peak assignments.

The per-dataset contribution to ``n D(n)`` is the divergence between the
true label conditional and the Bayes label posterior,

    E_{Y ~ q(Y|X)} [ ln q(Y|X) - ln p(Y|X) ],
    ln p(Y|X) = log Z(X, Y) - log Z(X).

``q(Y|X)`` factorises over items, so ``E[ln q(Y|X)]`` is an exact sum.  The
remaining term ``E[log Z(X, Y)]`` is handled by

* ``K* = 1``: the labels are all ones; the contribution reduces to
  ``log Z(X) - log Z(X, 1^n)``;
* binomial with ``K = K* = 2``: ``log Z(X, Y)`` depends on ``Y`` only through
  ``(N_1, s_1)``, whose law under independent labels is a convolution over
  value classes and is computed exactly;
* otherwise enumeration of all ``K*^n`` label vectors, or Monte Carlo when
  ``mc_draws`` is given.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from math import lgamma, log

import numba
import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom

from .data import Dataset, cell_task, rng_for, sample_dataset
from .energy import EnergyCurve, bootstrap_slope, check_geometric_grid, fit_slope, MIN_REPLICATES
from .evidence import (
    BRUTE_LIMIT,
    QuadConfig,
    _log_const,
    complete_evidence_table,
    enumerate_assignments,
    log_evidence,
    log_evidence_complete,
    log_evidence_complete_stats,
)
from .exceptions import DomainError, GuardError
from .model import Binomial, Family, Gaussian, MixtureSpec, TrueModel, component_logpdf, fisher_matrices

__all__ = [
    "TheoryPrediction",
    "theory_predictions",
    "true_label_posterior",
    "dataset_latent_error",
    "DnCurve",
    "dn_curve",
    "dn_curve_from_energy",
    "regular_plateau",
    "PeakResult",
    "peak_assignment",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("eta1", "n", "replicate", "seed", "nD_contribution")
PRUNE = 1e-18


@dataclass(frozen=True)
class TheoryPrediction:
    """Asymptotic coefficients of the free energies and of ``D(n)``.

    Fields that are only known in special cases are ``None`` elsewhere.
    """

    lambda_xy: float
    lambda_x_upper: float
    lambda_x_lower: float
    dn_slope_lower: float
    m_xy: int = 1
    lambda_x_exact: float | None = None
    m_x: int | None = None
    dn_slope_exact: float | None = None
    effective_area: str | None = None
    phase: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def theory_predictions(K: int, Kstar: int, d_c: int, eta1: float, family: Family | str | None = None
                       ) -> TheoryPrediction:
    """Theory values for a ``K``-component learner of a ``K*``-component truth.

    ``family`` enables the exact two-component binomial values.  A
    :class:`~singlab.model.Binomial` instance is also checked for ``K < M``.
    """
    if not (K >= Kstar >= 1):
        raise DomainError(f"need K >= K* >= 1, got K={K}, K*={Kstar}")
    if eta1 <= 0 or d_c < 1:
        raise DomainError("need eta1 > 0 and d_c >= 1")
    if isinstance(family, Binomial) and K >= family.M:
        raise DomainError(f"theory values need K < M, got K={K}, M={family.M}")
    name = family if isinstance(family, str) or family is None else family.to_dict()["name"]
    base = (Kstar - 1 + Kstar * d_c) / 2
    extra = K - Kstar
    lam_xy = base + extra * eta1
    upper = base + extra * (eta1 if eta1 <= d_c else d_c) / 2
    kw = {}
    if extra == 0:
        kw = dict(lambda_x_exact=base, m_x=1, dn_slope_exact=0.0)
    elif name == "binomial" and K == 2 and Kstar == 1 and d_c == 1:
        if eta1 < 0.5:
            area, exact = "W1∪W3", (1 + eta1) / 2
        elif eta1 == 0.5:
            area, exact = "intersections", 0.75
        else:
            area, exact = "W2", 0.75
        kw = dict(lambda_x_exact=exact, m_x=2 if eta1 == 0.5 else 1, dn_slope_exact=lam_xy - exact,
                  effective_area=area, phase="use_all" if area == "W2" else "eliminate")
    return TheoryPrediction(lam_xy, upper, base, extra * eta1 / 2, **kw)


def true_label_posterior(dataset: Dataset, truth: TrueModel, spec: MixtureSpec) -> np.ndarray:
    """``q(y = k | x_i)``, shape ``(n, K*)``."""
    lj = np.log(truth.astar) + component_logpdf(dataset.xs, truth.bstar, spec.family)
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))


def _label_stat_law(hist, p1):
    """Law of ``(N_1, s_1)`` when each item of value ``m`` joins class 1 w.p. ``p1[m]``.

    Returns ``(N_offset, s_offset, P)`` with ``P[i, j] = Pr(N_1 = N_offset + i,
    s_1 = s_offset + j)``.  Tails below ``PRUNE`` times the running maximum
    are dropped; the result is renormalised.
    """
    P = np.ones((1, 1))
    n0 = s0 = 0
    for m, c in enumerate(hist):
        c = int(c)
        if c == 0:
            continue
        w = binom.pmf(np.arange(c + 1), c, p1[m])
        keep = np.nonzero(w > PRUNE * w.max())[0]
        jl, jh = keep[0], keep[-1]
        a, b = P.shape
        out = np.zeros((a + jh - jl, b + m * (jh - jl)))
        for j in range(jl, jh + 1):
            d = j - jl
            out[d : d + a, m * d : m * d + b] += w[j] * P
        n0 += jl
        s0 += m * jl
        rows = np.nonzero(out.max(axis=1) > PRUNE * out.max())[0]
        cols = np.nonzero(out.max(axis=0) > PRUNE * out.max())[0]
        P = out[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
        n0 += rows[0]
        s0 += cols[0]
    return n0, s0, P / P.sum()


def _expected_complete_binomial2(dataset: Dataset, spec: MixtureSpec, r1) -> float:
    fam = spec.family
    hist = dataset.hist
    x = dataset.xs
    # q(y=1|x) depends on x only through its value
    p1 = np.zeros(fam.M + 1)
    p1[x] = r1
    n0, s0, P = _label_stat_law(hist, p1)
    n = dataset.n
    S = int(x.sum())
    N1 = n0 + np.arange(P.shape[0])[:, None]
    s1 = s0 + np.arange(P.shape[1])[None, :]
    N = np.stack(np.broadcast_arrays(N1, n - N1), -1).astype(float)
    s = np.stack(np.broadcast_arrays(s1, S - s1), -1).astype(float)
    valid = (s1 <= fam.M * N1) & (S - s1 <= fam.M * (n - N1)) & (s1 >= 0)
    with np.errstate(invalid="ignore"):
        lz = log_evidence_complete_stats(N, s, None, spec, _log_const(dataset, spec))
    return float(np.sum(np.where(valid, P * np.where(valid, lz, 0.0), 0.0)))


def dataset_latent_error(dataset: Dataset, spec: MixtureSpec, truth: TrueModel, engine: str = "dp",
                         method: str = "auto", mc_draws: int | None = None, seed: int = 0,
                         config: QuadConfig | None = None, limit: int = BRUTE_LIMIT) -> float:
    """Per-dataset contribution to ``n D(n)``; nonnegative.

    ``method`` is one of ``auto``, ``exact`` (the ``(N_1, s_1)`` law),
    ``enumerate`` or ``mc``.  ``auto`` picks the first exact route that
    applies and falls back to Monte Carlo only when ``mc_draws`` is set;
    otherwise a :class:`GuardError` is raised.
    """
    if spec.K < truth.Kstar:
        raise DomainError("learner has fewer components than the true model")
    n = dataset.n
    if n == 0:
        return 0.0
    lzx = log_evidence(dataset, spec, engine, config=config).log_z
    if truth.Kstar == 1 and method == "auto":
        return float(lzx - log_evidence_complete(dataset, spec, np.ones(n, dtype=int)))
    r = true_label_posterior(dataset, truth, spec)
    e_lnq = float(np.sum(np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0)))
    exact_ok = isinstance(spec.family, Binomial) and spec.K == 2 and truth.Kstar == 2
    if method == "auto":
        if exact_ok:
            method = "exact"
        elif truth.Kstar**n <= limit:
            method = "enumerate"
        elif mc_draws:
            method = "mc"
        else:
            raise GuardError(f"{truth.Kstar}^{n} true label vectors exceed the enumeration limit {limit}; "
                             "pass mc_draws for a Monte Carlo estimate", limit=limit)
    if method == "exact":
        if not exact_ok:
            raise DomainError("the exact route needs a binomial learner with K = K* = 2")
        e_lz = _expected_complete_binomial2(dataset, spec, r[:, 0])
    elif method == "enumerate":
        Y = enumerate_assignments(n, truth.Kstar, limit)
        logq = np.log(r)[np.arange(n), Y - 1].sum(axis=1)
        # labels 1..K* of the truth map to the same learner labels
        lz = complete_evidence_table(dataset, spec, limit, n_labels=truth.Kstar)
        e_lz = float(np.sum(np.exp(logq) * lz))
    elif method == "mc":
        if not mc_draws:
            raise DomainError("method 'mc' needs mc_draws")
        rng = rng_for(seed, 0)
        cum = np.cumsum(r, axis=1)
        u = rng.random((mc_draws, n, 1))
        Y = (u > cum[None]).sum(axis=2)
        x = dataset.xs.astype(float)
        K = spec.K
        onehot = Y[..., None] == np.arange(K)
        N = onehot.sum(axis=1).astype(float)
        s = (onehot * x[None, :, None]).sum(axis=1)
        ss = (onehot * (x * x)[None, :, None]).sum(axis=1)
        e_lz = float(np.mean(log_evidence_complete_stats(N, s, ss, spec, _log_const(dataset, spec))))
    else:
        raise DomainError(f"unknown method {method!r}")
    return float(lzx + e_lnq - e_lz)


# ---------------------------------------------------------------------------
# curves


@dataclass
class DnCurve:
    n_grid: np.ndarray
    values: np.ndarray  # (cells, R)
    spec: MixtureSpec | None = None
    truth: TrueModel | None = None
    master_seed: int | None = None
    slope_hat: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None
    theory_slope: float | None = None
    theory_source: str | None = None
    errors: list = field(default_factory=list)

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=1)

    @property
    def se(self) -> np.ndarray:
        return self.values.std(axis=1, ddof=1) / np.sqrt(self.values.shape[1])

    def fit_dict(self) -> dict:
        return {"slope_hat": self.slope_hat, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi,
                "theory_slope": self.theory_slope, "theory_source": self.theory_source}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i, n in enumerate(self.n_grid):
            for r in range(self.values.shape[1]):
                w.writerow([repr(self.spec.prior.eta1), int(n), r, self.master_seed, repr(float(self.values[i, r]))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.fit_dict())


def regular_plateau(truth: TrueModel, spec: MixtureSpec) -> dict:
    """Candidate limits of ``n D(n)`` for a regular learner (``K = K*``).

    ``trace`` is ``Tr[I_XY I_X^{-1}]``.  ``laplace`` is the value from a
    second-order expansion of both evidences around the true parameter,
    ``(1/2) ln det(I_XY I_X^{-1}) + ln K!``; the ``ln K!`` term counts the
    label-permuted copies of the posterior mode under a symmetric prior.
    """
    if spec.K != truth.Kstar:
        raise DomainError("regular plateau needs K = K*")
    F = fisher_matrices(truth.as_params(spec.K), spec, validate=True)
    A = np.linalg.solve(F.I_X, F.I_XY)
    sign, logdet = np.linalg.slogdet(A)
    return {"trace": float(np.trace(A)), "laplace": float(0.5 * logdet + lgamma(spec.K + 1))}


def _theory_slope(spec: MixtureSpec, truth: TrueModel):
    fam = spec.family
    try:
        t = theory_predictions(spec.K, truth.Kstar, fam.d_c, spec.prior.eta1, fam)
    except DomainError:
        t = theory_predictions(spec.K, truth.Kstar, fam.d_c, spec.prior.eta1, None)
    if t.dn_slope_exact is not None:
        return t.dn_slope_exact, ("regular" if spec.K == truth.Kstar else "exact_binomial")
    return t.dn_slope_lower, "lower_bound"


def _fit(curve: DnCurve, n_boot: int, seed: int) -> DnCurve:
    coef = fit_slope(curve.n_grid, curve.mean, curve.se)
    lo, hi = bootstrap_slope(curve.values, curve.n_grid, n_boot=n_boot, seed=seed)
    curve.slope_hat = float(coef[1])
    curve.ci_lo = float(min(lo, coef[1]))
    curve.ci_hi = float(max(hi, coef[1]))
    curve.theory_slope, curve.theory_source = _theory_slope(curve.spec, curve.truth)
    return curve


def _dn_cell(args):
    spec, truth, n, r, seed, engine, config, mc_draws = args
    ds = sample_dataset(truth, spec, int(n), seed, cell_task(n, r))
    return dataset_latent_error(ds, spec, truth, engine, mc_draws=mc_draws, seed=cell_task(n, r), config=config)


def dn_curve(spec: MixtureSpec, truth: TrueModel, n_grid, R: int, seed: int, engine: str = "dp",
             config: QuadConfig | None = None, mc_draws: int | None = None, n_boot: int = 1000,
             workers: int = 1) -> DnCurve:
    """Replicated per-dataset ``n D(n)`` contributions with a slope fit against ``ln n``."""
    grid = check_geometric_grid(n_grid)
    if R < MIN_REPLICATES:
        raise DomainError(f"R must be at least {MIN_REPLICATES}")
    jobs = [(spec, truth, n, r, int(seed), engine, config, mc_draws) for n in grid for r in range(R)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            vals = list(ex.map(_dn_cell, jobs))
    else:
        vals = [_dn_cell(j) for j in jobs]
    curve = DnCurve(grid, np.array(vals).reshape(len(grid), R), spec, truth, int(seed))
    return _fit(curve, n_boot, int(seed))


def dn_curve_from_energy(curve: EnergyCurve, n_boot: int = 1000) -> DnCurve:
    """``n D(n)`` contributions from an energy curve of a one-component truth.

    With ``K* = 1`` the complete and incomplete true likelihoods coincide, so
    ``F~_XY - F~_X = log Z(X) - log Z(X, 1^n)`` on every dataset.
    """
    if curve.truth is None or curve.truth.Kstar != 1:
        raise DomainError("the energy shortcut needs a one-component truth")
    vals = curve.values["xy"] - curve.values["x"]
    out = DnCurve(np.asarray(curve.n_grid), vals, curve.spec, curve.truth, curve.master_seed)
    return _fit(out, n_boot, int(curve.master_seed or 0))


# ---------------------------------------------------------------------------
# peak assignment


@dataclass(frozen=True)
class PeakResult:
    labels: np.ndarray
    labels_used: int
    log_z: float


@numba.njit(cache=True)
def _comp_term(N, s, ss, fam, M, al, be, prec):
    if fam == 0:
        return lgamma(al + s) + lgamma(be + M * N - s) - lgamma(al + be + M * N)
    return -0.5 * log(1.0 + N / prec) - 0.5 * (ss - s * s / (N + prec))


@numba.njit(cache=True)
def _icm(x, y, K, eta, fam, M, al, be, prec):
    """Coordinate ascent on ``log Z(X, Y)``; moves item i to its best label."""
    n = x.shape[0]
    N = np.zeros(K)
    s = np.zeros(K)
    ss = np.zeros(K)
    for i in range(n):
        N[y[i]] += 1
        s[y[i]] += x[i]
        ss[y[i]] += x[i] * x[i]
    changed = True
    sweeps = 0
    while changed and sweeps < 1000:
        changed = False
        sweeps += 1
        for i in range(n):
            k0 = y[i]
            N[k0] -= 1
            s[k0] -= x[i]
            ss[k0] -= x[i] * x[i]
            best = -np.inf
            kb = k0
            for k in range(K):
                # score change of adding item i to label k (labels scanned low to high)
                d = (lgamma(eta + N[k] + 1) - lgamma(eta + N[k])
                     + _comp_term(N[k] + 1, s[k] + x[i], ss[k] + x[i] * x[i], fam, M, al, be, prec)
                     - _comp_term(N[k], s[k], ss[k], fam, M, al, be, prec))
                if k == 0 or d > best + 1e-12 * abs(best) + 1e-13:
                    best = d
                    kb = k
            # keep the current label on ties
            if kb != k0:
                dk0 = (lgamma(eta + N[k0] + 1) - lgamma(eta + N[k0])
                       + _comp_term(N[k0] + 1, s[k0] + x[i], ss[k0] + x[i] * x[i], fam, M, al, be, prec)
                       - _comp_term(N[k0], s[k0], ss[k0], fam, M, al, be, prec))
                if dk0 >= best - 1e-12 * abs(best) - 1e-13:
                    kb = k0
            if kb != k0:
                changed = True
            y[i] = kb
            N[kb] += 1
            s[kb] += x[i]
            ss[kb] += x[i] * x[i]
    return y


def _icm_inits(dataset: Dataset, K: int, restarts: int, seed: int):
    n = dataset.n
    inits = [np.full(n, k) for k in range(K)]
    order = np.argsort(dataset.xs, kind="stable")
    thr = np.empty(n, dtype=np.int64)
    thr[order] = np.minimum(np.arange(n) * K // max(n, 1), K - 1)
    inits.append(thr)
    for r in range(restarts):
        inits.append(rng_for(seed, r).integers(0, K, n))
    return inits


def peak_assignment(dataset: Dataset, spec: MixtureSpec, method: str = "exhaustive", restarts: int = 10,
                    seed: int = 0, limit: int = BRUTE_LIMIT) -> PeakResult:
    """Label vector maximising ``log Z(X, Y)``.

    ``exhaustive`` scans all ``K^n`` vectors and returns the first maximiser
    in enumeration order.  ``icm_restarts`` runs coordinate ascent from each
    single-label start, a sorted-threshold start and ``restarts`` random
    starts, and keeps the best (earliest on ties).
    """
    K = spec.K
    if method == "exhaustive":
        table = complete_evidence_table(dataset, spec, limit)
        i = int(np.argmax(table))
        y = enumerate_assignments(dataset.n, K, limit)[i]
        return PeakResult(y, len(np.unique(y)), float(table[i]))
    if method != "icm_restarts":
        raise DomainError(f"unknown peak method {method!r}")
    if restarts < 10:
        raise DomainError("icm_restarts uses at least 10 random restarts")
    fam = spec.family
    p = spec.prior
    code = 0 if isinstance(fam, Binomial) else 1
    M = float(fam.M) if code == 0 else 0.0
    prec = 1.0 / p.scale**2 if isinstance(fam, Gaussian) else 1.0
    x = dataset.xs.astype(float)
    best_y, best = None, -np.inf
    for y0 in _icm_inits(dataset, K, restarts, seed):
        y = _icm(x, y0.astype(np.int64).copy(), K, float(p.eta1), code, M, float(p.alpha), float(p.beta), prec)
        score = log_evidence_complete(dataset, spec, y + 1)
        if score > best:
            best, best_y = score, y + 1
    return PeakResult(best_y, len(np.unique(best_y)), float(best))
