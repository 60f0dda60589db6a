"""Gibbs sampler for the joint posterior of parameters and labels.

One sweep draws every label from ``p(y_i | w, x_i)`` and then the
parameters from their conjugate full conditionals: ``a`` from
``Dirichlet(eta1 + N_k)`` and each ``b_k`` from ``Beta(alpha + s_k,
beta + M N_k - s_k)`` (binomial) or the normal posterior of the mean,
truncated to ``[-bound, bound]`` by rejection (Gaussian).  Empty
components therefore draw from the prior.

The kernel is compiled with numba and seeded inside the compiled code, so a
chain is a pure function of ``(dataset, spec, seed)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from math import exp, log

import numba
import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .evidence import log_evidence, log_evidence_complete
from .exceptions import DomainError
from .model import Binomial, MixtureSpec, component_logpdf
from .regions import RegionSet, classify

__all__ = [
    "GibbsState",
    "GibbsTrace",
    "gibbs_run",
    "occupancy_stats",
    "PYComparison",
    "compare_pY_estimates",
    "label_posterior_exact",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("iter", "a1", "b1", "b2", "region")
CODE_LIMIT = 2**20


@dataclass
class GibbsState:
    a: np.ndarray
    b: np.ndarray
    labels: np.ndarray
    iteration: int
    seed: int


@dataclass
class GibbsTrace:
    """Thinned post-burn-in draws.

    ``codes`` holds each kept label vector as a base-``K`` integer
    (``y_1`` least significant) when ``K^n`` is small enough.
    """

    iters: np.ndarray
    a: np.ndarray  # (S, K)
    b: np.ndarray  # (S, K)
    seed: int
    settings: dict = field(default_factory=dict)
    codes: np.ndarray | None = None
    labels: np.ndarray | None = None
    last: GibbsState | None = None

    def __len__(self) -> int:
        return len(self.iters)

    def regions(self, regions: RegionSet) -> np.ndarray:
        return classify(regions.membership(self.a[:, 0], self.b[:, 0], self.b[:, 1]))

    def to_csv(self, regions: RegionSet) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        names = self.regions(regions)
        for t, a1, b1, b2, r in zip(self.iters, self.a[:, 0], self.b[:, 0], self.b[:, 1], names):
            w.writerow([int(t), repr(float(a1)), repr(float(b1)), repr(float(b2)), r])
        return buf.getvalue()


@numba.njit(cache=True)
def _binom_logw(a, b, m, M):
    if a <= 0.0:
        return -np.inf
    v = log(a)
    if m > 0:
        v += m * log(b) if b > 0.0 else -np.inf
    if m < M:
        v += (M - m) * log(1.0 - b) if b < 1.0 else -np.inf
    return v


@numba.njit(cache=True)
def _trunc_normal(mu, sd, bound):
    """Normal(mu, sd) restricted to ``[-bound, bound]``."""
    for _ in range(100):
        z = np.random.normal(mu, sd)
        if abs(z) <= bound:
            return z
    # mean far outside the box: uniform proposal scaled at the box mode
    c = min(max(mu, -bound), bound)
    while True:
        z = np.random.uniform(-bound, bound)
        if np.log(np.random.random()) <= ((c - mu) ** 2 - (z - mu) ** 2) / (2 * sd * sd):
            return z


@numba.njit(cache=True)
def _gibbs_kernel(x, K, fam, M, eta, al, be, scale, bound, iters, burnin, thin, seed, want_codes, want_labels):
    np.random.seed(seed)
    n = x.shape[0]
    prec = 1.0 / (scale * scale)
    # prior initialisation
    a = np.empty(K)
    b = np.empty(K)
    tot = 0.0
    for k in range(K):
        a[k] = np.random.gamma(eta, 1.0)
        tot += a[k]
    for k in range(K):
        a[k] /= tot
        if fam == 0:
            b[k] = np.random.beta(al, be)
        else:
            b[k] = _trunc_normal(0.0, scale, bound)
    y = np.zeros(n, np.int64)
    n_keep = 0
    for t in range(burnin, iters):
        if (t - burnin) % thin == 0:
            n_keep += 1
    A = np.empty((n_keep, K))
    B = np.empty((n_keep, K))
    its = np.empty(n_keep, np.int64)
    codes = np.empty(n_keep if want_codes else 0, np.int64)
    labs = np.empty((n_keep if want_labels else 0, n), np.int8)
    N = np.empty(K)
    s = np.empty(K)
    lw = np.empty(K)
    Mi = int(M)
    cum = np.empty((Mi + 1, K))
    j = 0
    for t in range(iters):
        # labels
        for k in range(K):
            N[k] = 0.0
            s[k] = 0.0
        if fam == 0:
            # binomial: label probabilities depend on x only through its value
            for m in range(Mi + 1):
                mx = -np.inf
                for k in range(K):
                    lw[k] = _binom_logw(a[k], b[k], m, M)
                    if lw[k] > mx:
                        mx = lw[k]
                z = 0.0
                for k in range(K):
                    z += exp(lw[k] - mx)
                    cum[m, k] = z
                for k in range(K):
                    cum[m, k] /= z
        for i in range(n):
            if fam == 0:
                row = int(x[i])
            else:
                row = 0
                mx = -np.inf
                for k in range(K):
                    lw[k] = log(a[k]) - 0.5 * (x[i] - b[k]) ** 2 if a[k] > 0.0 else -np.inf
                    if lw[k] > mx:
                        mx = lw[k]
                z = 0.0
                for k in range(K):
                    z += exp(lw[k] - mx)
                    cum[0, k] = z
                for k in range(K):
                    cum[0, k] /= z
            u = np.random.random()
            kk = K - 1
            for k in range(K):
                if u < cum[row, k]:
                    kk = k
                    break
            y[i] = kk
            N[kk] += 1.0
            s[kk] += x[i]
        # weights
        tot = 0.0
        for k in range(K):
            a[k] = np.random.gamma(eta + N[k], 1.0)
            tot += a[k]
        for k in range(K):
            a[k] /= tot
        # components
        for k in range(K):
            if fam == 0:
                b[k] = np.random.beta(al + s[k], be + M * N[k] - s[k])
            else:
                v = 1.0 / (N[k] + prec)
                b[k] = _trunc_normal(s[k] * v, np.sqrt(v), bound)
        if t >= burnin and (t - burnin) % thin == 0:
            A[j] = a
            B[j] = b
            its[j] = t
            if want_codes:
                code = 0
                p = 1
                for i in range(n):
                    code += y[i] * p
                    p *= K
                codes[j] = code
            if want_labels:
                for i in range(n):
                    labs[j, i] = y[i]
            j += 1
    return its, A, B, codes, labs, y, a, b


def gibbs_run(dataset: Dataset, spec: MixtureSpec, iters: int = 200_000, burnin: int = 20_000, thin: int = 10,
              seed: int = 0, keep_labels: bool = False) -> GibbsTrace:
    """Run one chain and keep every ``thin``-th draw after ``burnin``.

    Label vectors are kept as integer codes when ``K^n <= 2**20`` and as a
    full ``(S, n)`` array when ``keep_labels`` is set.
    """
    if iters <= burnin or burnin < 0 or thin < 1:
        raise DomainError("need iters > burnin >= 0 and thin >= 1")
    fam = spec.family
    p = spec.prior
    code = 0 if isinstance(fam, Binomial) else 1
    M = float(fam.M) if code == 0 else 0.0
    want_codes = spec.K ** dataset.n <= CODE_LIMIT
    its, A, B, codes, labs, y, a, b = _gibbs_kernel(
        dataset.xs.astype(float), spec.K, code, M, float(p.eta1), float(p.alpha), float(p.beta),
        float(p.scale), float(p.bound), int(iters), int(burnin), int(thin), int(seed) % 2**32,
        want_codes, bool(keep_labels))
    settings = {"iters": iters, "burnin": burnin, "thin": thin, "seed": int(seed)}
    last = GibbsState(a.copy(), b.copy(), y + 1, iters, int(seed))
    return GibbsTrace(its, A, B, int(seed), settings, codes if want_codes else None,
                      (labs.astype(int) + 1) if keep_labels else None, last)


def occupancy_stats(trace: GibbsTrace, regions: RegionSet) -> dict:
    """Fractions of kept draws in each branch neighbourhood.

    Raw fractions ``occ_w1``, ``occ_w2``, ``occ_w3`` may overlap; ``occ_rest``
    is the fraction outside all three, and ``occ_w13`` is ``W1 u W3``.
    """
    if len(trace) == 0:
        raise DomainError("empty trace")
    m = regions.membership(trace.a[:, 0], trace.b[:, 0], trace.b[:, 1])
    return {
        "occ_w1": float(m[:, 0].mean()),
        "occ_w2": float(m[:, 1].mean()),
        "occ_w3": float(m[:, 2].mean()),
        "occ_rest": float((~m.any(axis=1)).mean()),
        "occ_w13": float((m[:, 0] | m[:, 2]).mean()),
    }


def summary_json(trace: GibbsTrace, regions: RegionSet, eta1: float, n: int) -> str:
    occ = occupancy_stats(trace, regions)
    return json.dumps({"occ_w1": occ["occ_w1"], "occ_w2": occ["occ_w2"], "occ_w3": occ["occ_w3"],
                       "occ_rest": occ["occ_rest"], "eta1": eta1, "n": n, "seed": trace.seed})


@dataclass(frozen=True)
class PYComparison:
    log_mc: float
    log_exact: float
    n_nonzero: int


def compare_pY_estimates(dataset: Dataset, y_query, trace: GibbsTrace, spec: MixtureSpec, engine: str = "dp"
                         ) -> PYComparison:
    """Two estimates of ``log p(Y|X)`` for one label vector.

    ``log_mc`` averages ``prod_i p(x_i, y_i | w) / p(x_i | w)`` over the
    trace (in the log domain); ``log_exact`` is
    ``log Z(X, Y) - log Z(X)``.  ``n_nonzero`` counts draws whose term does
    not underflow to zero in double precision.
    """
    y = np.asarray(y_query, dtype=int)
    if y.shape != (dataset.n,):
        raise DomainError("query must assign a label to every observation")
    lf = component_logpdf(dataset.xs[:, None], trace.b, spec.family)  # (n, S, K)
    with np.errstate(divide="ignore"):
        lj = np.log(trace.a)[None] + lf
    lmarg = logsumexp(lj, axis=2)
    lsel = np.take_along_axis(lj, (y - 1)[:, None, None].repeat(lj.shape[1], axis=1), axis=2)[..., 0]
    terms = (lsel - lmarg).sum(axis=0)
    n_nonzero = int(np.sum(terms > np.log(np.finfo(float).tiny)))
    log_mc = float(logsumexp(terms) - np.log(len(terms))) if np.isfinite(terms).any() else float("-inf")
    log_exact = log_evidence_complete(dataset, spec, y) - log_evidence(dataset, spec, engine).log_z
    return PYComparison(log_mc, float(log_exact), n_nonzero)


def label_posterior_exact(dataset: Dataset, spec: MixtureSpec) -> np.ndarray:
    """``p(Y|X)`` for all ``K^n`` label vectors, indexed by base-``K`` code."""
    from .evidence import complete_evidence_table

    t = complete_evidence_table(dataset, spec)
    return np.exp(t - logsumexp(t))
