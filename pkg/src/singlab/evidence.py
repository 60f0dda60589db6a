"""Log marginal likelihoods of complete and incomplete data.

Engines for the incomplete evidence ``log Z(X^n)``:

``brute``
    Log-sum-exp of the closed-form complete evidence over all ``K^n`` label
    assignments.  Exact; refused above ``2**20`` assignments.
``dp``
    Exact sum for binomial mixtures with ``K = 2``.  The complete evidence
    depends on an assignment only through ``(N_1, s_1)``, so the sum is a
    dot product of the subset-count table with closed-form weights.
``quad``
    Adaptive Gauss-Legendre cubature over ``(a, b_1, b_2)`` for ``K = 2``.
    Coordinates are prior CDF values, which makes the prior uniform and
    removes the Dirichlet endpoint singularities.

Everything stays in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc, betaincinv, betaln, gammaln, logsumexp, ndtr, ndtri

from . import _cubature
from ._dp import subset_count_table
from .data import Dataset
from .exceptions import DomainError, GuardError, UnsupportedEngineError
from .model import Binomial, Gaussian, MixtureSpec, component_logpdf
from .regions import REGION_KEYS, RegionSet

__all__ = [
    "EvidenceResult",
    "LabelCounts",
    "QuadConfig",
    "RegionMasses",
    "BRUTE_LIMIT",
    "label_counts",
    "log_evidence_complete",
    "log_evidence_complete_stats",
    "log_evidence_brute",
    "log_evidence_dp",
    "log_evidence_quad",
    "log_evidence",
    "posterior_region_mass",
]

BRUTE_LIMIT = 2**20
ENGINES = ("complete", "brute", "dp", "quad")


@dataclass(frozen=True)
class EvidenceResult:
    log_z: float
    engine: str
    err_est: float = 0.0

    def to_dict(self) -> dict:
        return {"log_z": self.log_z, "engine": self.engine, "err_est": self.err_est}


@dataclass(frozen=True)
class LabelCounts:
    """Occupancies ``N_k``, value sums ``s_k`` and (Gaussian) square sums."""

    N: np.ndarray
    s: np.ndarray
    ss: np.ndarray


@dataclass(frozen=True)
class QuadConfig:
    tol: float = 1e-6
    order: int = 6
    max_boxes: int = 400_000
    max_iter: int = 80
    init_splits: int = 2


def _check_labels(labels, n, K) -> np.ndarray:
    y = np.asarray(labels, dtype=int).reshape(-1)
    if y.shape != (n,):
        raise DomainError(f"expected {n} labels, got {y.size}")
    if n and (y.min() < 1 or y.max() > K):
        raise DomainError(f"labels must lie in {{1..{K}}}")
    return y


def label_counts(dataset: Dataset, labels, K: int) -> LabelCounts:
    y = _check_labels(labels, dataset.n, K) - 1
    x = dataset.xs.astype(float)
    N = np.bincount(y, minlength=K).astype(float)
    s = np.bincount(y, weights=x, minlength=K)
    ss = np.bincount(y, weights=x * x, minlength=K)
    return LabelCounts(N, s, ss)


def _log_const(dataset: Dataset, spec: MixtureSpec) -> float:
    """Part of ``sum_i ln f(x_i|b)`` that does not depend on ``b``."""
    fam = spec.family
    if isinstance(fam, Binomial):
        x = dataset.xs
        return float(np.sum(gammaln(fam.M + 1) - gammaln(x + 1) - gammaln(fam.M - x + 1)))
    return 0.0


def log_evidence_complete_stats(N, s, ss, spec: MixtureSpec, const: float = 0.0) -> np.ndarray:
    """Closed-form ``log Z(X, Y)`` from sufficient statistics, vectorised.

    ``N``, ``s`` and ``ss`` have shape ``(..., K)``.  ``const`` is the
    observation-only term returned by :func:`_log_const`.
    """
    N = np.asarray(N, float)
    s = np.asarray(s, float)
    K = spec.K
    eta = spec.prior.eta1
    n = N.sum(axis=-1)
    out = gammaln(K * eta) - K * gammaln(eta) + gammaln(eta + N).sum(axis=-1) - gammaln(K * eta + n)
    fam = spec.family
    if isinstance(fam, Binomial):
        al, be = spec.prior.alpha, spec.prior.beta
        out = out + (betaln(al + s, be + fam.M * N - s) - betaln(al, be)).sum(axis=-1)
    else:
        ss = np.asarray(ss, float)
        prec = 1.0 / spec.prior.scale**2
        comp = -0.5 * N * np.log(2 * np.pi) - 0.5 * np.log1p(N / prec) - 0.5 * (ss - s * s / (N + prec))
        out = out + comp.sum(axis=-1)
    return out + const


def log_evidence_complete(dataset: Dataset, spec: MixtureSpec, labels=None) -> float:
    """``log Z(X^n, Y^n)`` under the conjugate prior.

    ``labels`` defaults to the dataset's own labels.  For the Gaussian
    family the normal prior on the means is not truncated here.
    """
    labels = dataset.ys if labels is None else labels
    if labels is None:
        raise DomainError("complete evidence needs labels")
    lc = label_counts(dataset, labels, spec.K)
    return float(log_evidence_complete_stats(lc.N, lc.s, lc.ss, spec, _log_const(dataset, spec)))


def _enumerate_stats(dataset: Dataset, K: int, limit: int = BRUTE_LIMIT, n_labels: int | None = None):
    """Sufficient statistics of every assignment in ``{1..L}^n``, ``L = n_labels or K``.

    Row ``r`` corresponds to the assignment whose base-``L`` digits (least
    significant first) are the 0-based labels of ``x_1..x_n``.  Statistics
    always have ``K`` columns.
    """
    L = K if n_labels is None else n_labels
    n = dataset.n
    total = L**n
    if total > limit:
        raise GuardError(f"{L}^{n} assignments exceed the enumeration limit {limit}", limit=limit)
    codes = np.arange(total)
    x = dataset.xs.astype(float)
    N = np.zeros((total, K))
    s = np.zeros((total, K))
    ss = np.zeros((total, K))
    rows = np.arange(total)
    for i in range(n):
        k = (codes // L**i) % L
        N[rows, k] += 1
        s[rows, k] += x[i]
        ss[rows, k] += x[i] * x[i]
    return N, s, ss


def enumerate_assignments(n: int, K: int, limit: int = BRUTE_LIMIT) -> np.ndarray:
    """All label assignments as a ``(K^n, n)`` array of 1-based labels."""
    if K**n > limit:
        raise GuardError(f"{K}^{n} assignments exceed the enumeration limit {limit}", limit=limit)
    codes = np.arange(K**n)
    return np.stack([(codes // K**i) % K for i in range(n)], axis=1).astype(int) + 1


def complete_evidence_table(dataset: Dataset, spec: MixtureSpec, limit: int = BRUTE_LIMIT,
                            n_labels: int | None = None) -> np.ndarray:
    """``log Z(X, Y)`` for every ``Y`` over ``n_labels`` (default ``K``) labels.

    Rows follow :func:`enumerate_assignments` with the same label count.
    """
    N, s, ss = _enumerate_stats(dataset, spec.K, limit, n_labels)
    return log_evidence_complete_stats(N, s, ss, spec, _log_const(dataset, spec))


def log_evidence_brute(dataset: Dataset, spec: MixtureSpec, limit: int = BRUTE_LIMIT) -> float:
    if dataset.n == 0:
        return 0.0
    return float(logsumexp(complete_evidence_table(dataset, spec, limit)))


def log_evidence_dp(dataset: Dataset, spec: MixtureSpec) -> float:
    fam = spec.family
    if not isinstance(fam, Binomial) or spec.K != 2:
        raise UnsupportedEngineError("the dp engine covers binomial mixtures with K = 2 only")
    n = dataset.n
    if n == 0:
        return 0.0
    counts = dataset.hist
    M = fam.M
    S = int((np.arange(M + 1) * counts).sum())
    table = subset_count_table(counts)
    N1 = np.arange(n + 1, dtype=float)[:, None]
    s1 = np.arange(S + 1, dtype=float)[None, :]
    N = np.stack(np.broadcast_arrays(N1, n - N1), axis=-1)
    s = np.stack(np.broadcast_arrays(s1, S - s1), axis=-1)
    valid = (s1 <= M * N1) & (S - s1 <= M * (n - N1))
    with np.errstate(invalid="ignore"):
        w = log_evidence_complete_stats(N, s, None, spec, 0.0)
    terms = np.where(valid & np.isfinite(table), table + np.where(valid, w, 0.0), -np.inf)
    return float(logsumexp(terms) + _log_const(dataset, spec))


# ---------------------------------------------------------------------------
# quadrature


class _Transform:
    """Prior-CDF coordinates: uniform ``t`` in ``[0, 1]`` maps to parameters."""

    def __init__(self, spec: MixtureSpec):
        self.spec = spec
        p = spec.prior
        if isinstance(spec.family, Gaussian):
            self.zlo = ndtr(-p.bound / p.scale)
            self.zhi = ndtr(p.bound / p.scale)

    def weight(self, t, tc):
        """``(a, 1 - a)`` from ``t`` and ``1 - t`` without cancellation."""
        eta = self.spec.prior.eta1
        return betaincinv(eta, eta, t), betaincinv(eta, eta, tc)

    def weight_cdf(self, a: float) -> float:
        eta = self.spec.prior.eta1
        return float(betainc(eta, eta, a))

    def comp(self, t):
        p = self.spec.prior
        if isinstance(self.spec.family, Binomial):
            return betaincinv(p.alpha, p.beta, t)
        return p.scale * ndtri(self.zlo + t * (self.zhi - self.zlo))

    def comp_cdf(self, b: float) -> float:
        p = self.spec.prior
        if isinstance(self.spec.family, Binomial):
            return float(betainc(p.alpha, p.beta, b))
        return float((ndtr(b / p.scale) - self.zlo) / (self.zhi - self.zlo))

    @property
    def comp_domain(self):
        if isinstance(self.spec.family, Binomial):
            return 0.0, 1.0
        return -self.spec.prior.bound, self.spec.prior.bound


def _comp_pdf(support, b, fam):
    """Component densities with shape ``b.shape + support.shape``."""
    vals = np.exp(component_logpdf(support, b.ravel(), fam))
    return vals.T.reshape(b.shape + support.shape)


def _make_log_likelihood(dataset: Dataset, spec: MixtureSpec, tr: _Transform):
    fam = spec.family
    if isinstance(fam, Binomial):
        hist = dataset.hist.astype(float)
        support = np.nonzero(hist)[0]
        counts = hist[support]
    else:
        support = dataset.xs
        counts = np.ones(dataset.n)

    def log_f(nodes):
        (ta, tca, _), (t1, _, _), (t2, _, _) = nodes
        if dataset.n == 0:
            return np.zeros((ta.shape[0], ta.shape[1], t1.shape[1], t2.shape[1]))
        a, abar = tr.weight(ta, tca)
        f1 = _comp_pdf(support, tr.comp(t1), fam)
        f2 = _comp_pdf(support, tr.comp(t2), fam)
        # (B, qa, q1, q2, m)
        p = a[:, :, None, None, None] * f1[:, None, :, None, :] + abar[:, :, None, None, None] * f2[:, None, None, :, :]
        with np.errstate(divide="ignore"):
            return np.log(p) @ counts

    return log_f


def _chunk_for(dataset: Dataset, spec: MixtureSpec, order: int) -> int:
    width = int((dataset.hist > 0).sum()) if isinstance(spec.family, Binomial) else max(dataset.n, 1)
    return int(max(16, min(2048, 4_000_000 // (order**3 * max(width, 1)))))


def _run_cubature(dataset, spec, breaks, config: QuadConfig):
    if spec.K != 2:
        raise UnsupportedEngineError("the quad engine integrates K = 2 mixtures only")
    tr = _Transform(spec)
    log_f = _make_log_likelihood(dataset, spec, tr)
    boxes, _ = _cubature.integrate(log_f, breaks, tol=config.tol, order=config.order,
                                   max_boxes=config.max_boxes, max_iter=config.max_iter,
                                   chunk=_chunk_for(dataset, spec, config.order))
    return boxes, tr


def log_evidence_quad(dataset: Dataset, spec: MixtureSpec, config: QuadConfig | None = None) -> EvidenceResult:
    """Incomplete evidence by adaptive cubature; ``err_est`` is a log-domain bound."""
    config = QuadConfig() if config is None else config
    g = np.linspace(0, 1, config.init_splits + 1)
    boxes, _ = _run_cubature(dataset, spec, [g, g, g], config)
    return EvidenceResult(boxes.log_total, "quad", boxes.rel_err)


def log_evidence(dataset: Dataset, spec: MixtureSpec, engine: str = "dp", labels=None,
                 config: QuadConfig | None = None) -> EvidenceResult:
    """Dispatch to one engine and wrap the value in an :class:`EvidenceResult`."""
    if engine == "complete":
        err = 0.0
        if isinstance(spec.family, Gaussian):
            # untruncated prior: log of the prior mass inside the box, per component
            p = spec.prior
            err = -spec.K * float(np.log1p(-2 * ndtr(-p.bound / p.scale)))
        return EvidenceResult(log_evidence_complete(dataset, spec, labels), "complete", err)
    if engine == "brute":
        return EvidenceResult(log_evidence_brute(dataset, spec), "brute", 0.0)
    if engine == "dp":
        return EvidenceResult(log_evidence_dp(dataset, spec), "dp", 0.0)
    if engine == "quad":
        return log_evidence_quad(dataset, spec, config)
    raise UnsupportedEngineError(f"unknown engine {engine!r}; choose from {ENGINES}")


@dataclass(frozen=True)
class RegionMasses:
    """Posterior masses of W1, W2, W3, their intersections and the rest."""

    masses: dict = field(default_factory=dict)
    err_est: float = 0.0
    log_z: float = 0.0

    def __getitem__(self, key):
        return self.masses[key]

    @property
    def union13(self) -> float:
        return self.masses["w1"] + self.masses["w3"] - self.masses["w13"]


def posterior_region_mass(dataset: Dataset, spec: MixtureSpec, regions: RegionSet,
                          config: QuadConfig | None = None) -> RegionMasses:
    """Posterior mass of each branch neighbourhood.

    The cubature starts from cells cut at the region boundaries, so every
    box lies wholly inside or outside each region and the masses are exact
    sums of box integrals.
    """
    config = QuadConfig() if config is None else config
    if spec.K != 2:
        raise UnsupportedEngineError("region masses are defined for K = 2 only")
    tr = _Transform(spec)
    lo, hi = tr.comp_domain
    blo, bhi = regions.b_window(lo, hi)
    ta = [0.0, tr.weight_cdf(regions.delta_a), 1.0 - tr.weight_cdf(regions.delta_a), 1.0]
    tb = sorted({0.0, tr.comp_cdf(blo), tr.comp_cdf(bhi), 1.0})
    boxes, _ = _run_cubature(dataset, spec, [ta, tb, tb], config)
    mid = (boxes.lo + boxes.hi) / 2
    # boxes never straddle a region boundary, so the midpoint decides membership
    a_mid = tr.weight(mid[:, 0], 1 - mid[:, 0])[0]
    member = regions.membership(a_mid, tr.comp(mid[:, 1]), tr.comp(mid[:, 2]))
    w = boxes.q / boxes.q.sum()
    m1, m2, m3 = member[:, 0], member[:, 1], member[:, 2]
    masses = {
        "w1": w[m1].sum(), "w2": w[m2].sum(), "w3": w[m3].sum(),
        "w12": w[m1 & m2].sum(), "w23": w[m2 & m3].sum(), "w13": w[m1 & m3].sum(),
        "w123": w[m1 & m2 & m3].sum(), "rest": w[~(m1 | m2 | m3)].sum(),
    }
    masses = {k: float(masses[k]) for k in REGION_KEYS}
    return RegionMasses(masses, boxes.rel_err, boxes.log_total)
