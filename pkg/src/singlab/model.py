"""Mixture families, priors, true models and exact information quantities.

Two component families are supported: a binomial with ``M`` trials (the
success probability is the component parameter) and a unit-variance
Gaussian in one dimension (the mean is the component parameter).  Weights
carry a symmetric Dirichlet prior; components carry a Beta prior (binomial)
or a centred normal prior truncated to ``[-bound, bound]`` (Gaussian).

All quantities that are integrals over the observation space are exact
sums over ``{0, ..., M}`` for the binomial family and composite
Gauss-Legendre quadrature for the Gaussian family.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln, logsumexp, xlog1py, xlogy

from .exceptions import (
    DomainError,
    FisherValidationError,
    RegularityError,
    SingularPointError,
)

__all__ = [
    "Binomial",
    "Gaussian",
    "PriorHyper",
    "MixtureSpec",
    "MixtureParams",
    "TrueModel",
    "FisherPair",
    "component_logpdf",
    "mixture_density",
    "complete_density",
    "kl_incomplete",
    "kl_complete",
    "entropy_true",
    "fisher_matrices",
    "fisher_matrices_fd",
    "reg_lv_coefficient",
]

SIMPLEX_TOL = 1e-12
GAUSS_PAD = 8.0
GAUSS_RTOL = 1e-9


@dataclass(frozen=True)
class Binomial:
    """Binomial component ``f(m|b) = C(M, m) b^m (1-b)^(M-m)`` on ``{0..M}``."""

    M: int
    name: str = field(default="binomial", init=False)

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise DomainError(f"binomial trial count must be an integer >= 1, got {self.M}")

    @property
    def d_c(self) -> int:
        return 1

    @property
    def discrete(self) -> bool:
        return True

    def support(self) -> np.ndarray:
        return np.arange(self.M + 1)

    def to_dict(self) -> dict:
        return {"name": "binomial", "M": int(self.M)}


@dataclass(frozen=True)
class Gaussian:
    """Unit-variance normal component with unknown mean."""

    dim: int = 1
    name: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if self.dim != 1:
            raise DomainError("only one-dimensional Gaussian components are supported")

    @property
    def d_c(self) -> int:
        return 1

    @property
    def discrete(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"name": "gaussian", "dim": 1}


Family = Union[Binomial, Gaussian]


def family_from_dict(d: dict) -> Family:
    if d["name"] == "binomial":
        return Binomial(int(d["M"]))
    if d["name"] == "gaussian":
        return Gaussian(int(d.get("dim", 1)))
    raise DomainError(f"unknown family {d['name']!r}")


@dataclass(frozen=True)
class PriorHyper:
    """Prior hyperparameters.

    ``eta1`` is the symmetric Dirichlet concentration.  ``alpha``/``beta``
    define the Beta prior of binomial success probabilities; ``scale`` and
    ``bound`` define the truncated normal prior of Gaussian means.
    """

    eta1: float
    alpha: float = 1.0
    beta: float = 1.0
    scale: float = 3.0
    bound: float = 10.0

    def __post_init__(self):
        for name in ("eta1", "alpha", "beta", "scale", "bound"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"prior hyperparameter {name} must be > 0, got {v}")

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("eta1", "alpha", "beta", "scale", "bound")}


@dataclass(frozen=True)
class MixtureSpec:
    family: Family
    K: int
    prior: PriorHyper

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise DomainError(f"component count must be >= 1, got {self.K}")

    @property
    def dim(self) -> int:
        """Parameter dimension ``K - 1 + K d_c``."""
        return self.K - 1 + self.K * self.family.d_c

    def with_eta(self, eta1: float) -> "MixtureSpec":
        p = self.prior
        return MixtureSpec(self.family, self.K, PriorHyper(eta1, p.alpha, p.beta, p.scale, p.bound))

    def to_dict(self) -> dict:
        return {"family": self.family.to_dict(), "K": int(self.K), "prior": self.prior.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        return cls(family_from_dict(d["family"]), int(d["K"]), PriorHyper(**d["prior"]))


def _check_comp_domain(b: np.ndarray, family: Family) -> None:
    if not np.all(np.isfinite(b)):
        raise DomainError("component parameters must be finite")
    if isinstance(family, Binomial) and (np.any(b < 0) or np.any(b > 1)):
        raise DomainError("binomial success probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class MixtureParams:
    """Mixture weights ``a`` (on the simplex) and component parameters ``b``."""

    weights: np.ndarray
    comps: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.comps, dtype=float)
        if a.ndim != 1 or b.shape != a.shape:
            raise DomainError("weights and component parameters must be 1-d of equal length")
        if np.any(a < -SIMPLEX_TOL) or abs(a.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"weights {a} are not on the simplex")
        object.__setattr__(self, "weights", np.clip(a, 0.0, None))
        object.__setattr__(self, "comps", b)

    @property
    def K(self) -> int:
        return len(self.weights)

    def to_vector(self) -> np.ndarray:
        """Free parameter vector ``(a_2..a_K, b_1..b_K)``."""
        return np.concatenate([self.weights[1:], self.comps])

    @classmethod
    def from_vector(cls, w: np.ndarray, K: int) -> "MixtureParams":
        w = np.asarray(w, dtype=float)
        a_rest = w[: K - 1]
        a = np.concatenate([[1.0 - a_rest.sum()], a_rest])
        return cls(a, w[K - 1 :])

    def swapped(self, perm) -> "MixtureParams":
        perm = np.asarray(perm)
        return MixtureParams(self.weights[perm], self.comps[perm])


@dataclass(frozen=True)
class TrueModel:
    """True mixture ``q(x) = sum_k astar_k f(x|bstar_k)``.

    Minimality is enforced: weights are strictly positive and component
    parameters pairwise distinct.
    """

    astar: np.ndarray
    bstar: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.astar, dtype=float))
        b = np.atleast_1d(np.asarray(self.bstar, dtype=float))
        if a.shape != b.shape or a.ndim != 1:
            raise DomainError("astar and bstar must be 1-d of equal length")
        if np.any(a <= 0) or abs(a.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError("true weights must be strictly positive and sum to one")
        if len(np.unique(b)) != len(b):
            raise DomainError("true component parameters must be pairwise distinct (minimality)")
        object.__setattr__(self, "astar", a)
        object.__setattr__(self, "bstar", b)

    @property
    def Kstar(self) -> int:
        return len(self.astar)

    def as_params(self, K: int | None = None) -> MixtureParams:
        """Embed into a ``K``-component learner via the identity injection."""
        K = self.Kstar if K is None else K
        if K < self.Kstar:
            raise DomainError("learner has fewer components than the true model")
        a = np.zeros(K)
        a[: self.Kstar] = self.astar
        b = np.full(K, self.bstar[0])
        b[: self.Kstar] = self.bstar
        return MixtureParams(a, b)

    def to_dict(self) -> dict:
        return {"astar": self.astar.tolist(), "bstar": self.bstar.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrueModel":
        return cls(np.asarray(d["astar"], float), np.asarray(d["bstar"], float))


@dataclass(frozen=True)
class FisherPair:
    I_XY: np.ndarray
    I_X: np.ndarray


# ---------------------------------------------------------------------------
# component densities


def component_logpdf(x, b, family: Family) -> np.ndarray:
    """Log density of each component at each observation.

    Broadcasts ``x[..., None]`` against ``b``, so the result has shape
    ``x.shape + b.shape``.
    """
    x = np.asarray(x, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)
    if isinstance(family, Binomial):
        M = family.M
        lc = gammaln(M + 1) - gammaln(x + 1) - gammaln(M - x + 1)
        return lc + xlogy(x, b) + xlog1py(M - x, -b)
    return -0.5 * np.log(2 * np.pi) - 0.5 * (x - b) ** 2


def _component_dlogpdf(x, b, family: Family) -> np.ndarray:
    x = np.asarray(x, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)
    if isinstance(family, Binomial):
        return x / b - (family.M - x) / (1.0 - b)
    return x - b


def _check_obs(x, family: Family) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if isinstance(family, Binomial):
        if np.any(x < 0) or np.any(x > family.M) or np.any(x != np.round(x)):
            raise DomainError(f"observation outside binomial support {{0..{family.M}}}")
    elif not np.all(np.isfinite(x)):
        raise DomainError("Gaussian observations must be finite")
    return x


def mixture_density(x, params: MixtureParams, spec: MixtureSpec):
    """``p(x|w) = sum_k a_k f(x|b_k)``; scalar in, scalar out."""
    _check_comp_domain(params.comps, spec.family)
    xv = _check_obs(x, spec.family)
    val = np.exp(component_logpdf(xv, params.comps, spec.family)) @ params.weights
    return float(val) if np.ndim(val) == 0 else val


def complete_density(x, y, params: MixtureParams, spec: MixtureSpec):
    """``p(x, y|w) = a_y f(x|b_y)`` with 1-based label ``y``."""
    _check_comp_domain(params.comps, spec.family)
    xv = _check_obs(x, spec.family)
    y = np.asarray(y)
    if np.any(y < 1) or np.any(y > params.K) or np.any(y != np.round(y)):
        raise DomainError(f"label outside {{1..{params.K}}}")
    k = y.astype(int) - 1
    lp = component_logpdf(xv, params.comps, spec.family)
    val = params.weights[k] * np.exp(np.take_along_axis(lp, k[..., None], axis=-1)[..., 0])
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# integration over the observation space


def _gl_nodes(lo: float, hi: float, panels: int, order: int = 20):
    xg, wg = leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    h = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    return (mid[:, None] + h[:, None] * xg).ravel(), (h[:, None] * wg).ravel()


def observation_expectation(fn, spec: MixtureSpec, centers) -> np.ndarray:
    """Integrate ``fn(x)`` (summed over its first axis) over the observation space.

    Binomial: exact sum over the support with unit weights.  Gaussian:
    composite Gauss-Legendre on ``[min(centers)-8, max(centers)+8]`` with
    panel doubling until the relative change drops below 1e-9.
    """
    fam = spec.family
    if isinstance(fam, Binomial):
        xs = fam.support().astype(float)
        return np.sum(fn(xs), axis=0)
    centers = np.asarray(centers, dtype=float)
    lo, hi = centers.min() - GAUSS_PAD, centers.max() + GAUSS_PAD
    panels = 8
    x, w = _gl_nodes(lo, hi, panels)
    prev = np.tensordot(w, fn(x), axes=(0, 0))
    for _ in range(8):
        panels *= 2
        x, w = _gl_nodes(lo, hi, panels)
        cur = np.tensordot(w, fn(x), axes=(0, 0))
        scale = np.maximum(np.abs(cur), 1e-300)
        if np.all(np.abs(cur - prev) <= GAUSS_RTOL * scale + 1e-300):
            return cur
        prev = cur
    return cur


def _log_true_joint(x, truth: TrueModel, family: Family) -> np.ndarray:
    """``ln q(x, y)`` for ``y = 1..K*``; shape ``x.shape + (K*,)``."""
    with np.errstate(divide="ignore"):
        return np.log(truth.astar) + component_logpdf(x, truth.bstar, family)


def kl_incomplete(params: MixtureParams, truth: TrueModel, spec: MixtureSpec) -> float:
    """``H_X(w) = E_q[ln q(x) / p(x|w)]`` in nats; ``inf`` if ``p = 0`` where ``q > 0``."""
    _check_comp_domain(params.comps, spec.family)
    fam = spec.family

    def integrand(x):
        lq = logsumexp(_log_true_joint(x, truth, fam), axis=-1)
        with np.errstate(divide="ignore"):
            lp = logsumexp(np.log(params.weights) + component_logpdf(x, params.comps, fam), axis=-1)
        q = np.exp(lq)
        out = np.where(q > 0, q * (lq - lp), 0.0)
        return out

    val = float(observation_expectation(integrand, spec, np.r_[params.comps, truth.bstar]))
    if not np.isfinite(val):
        return float("inf")
    return max(val, 0.0)


def kl_complete(params: MixtureParams, truth: TrueModel, spec: MixtureSpec) -> float:
    """``H_XY(w)`` with true label ``k`` identified with learner label ``k``."""
    _check_comp_domain(params.comps, spec.family)
    fam = spec.family
    if params.K < truth.Kstar:
        return float("inf")
    ks = truth.Kstar

    def integrand(x):
        lq = _log_true_joint(x, truth, fam)
        with np.errstate(divide="ignore"):
            lp = np.log(params.weights[:ks]) + component_logpdf(x, params.comps[:ks], fam)
        q = np.exp(lq)
        return np.where(q > 0, q * (lq - lp), 0.0).sum(axis=-1)

    val = float(observation_expectation(integrand, spec, np.r_[params.comps, truth.bstar]))
    if not np.isfinite(val):
        return float("inf")
    return max(val, 0.0)


def entropy_true(truth: TrueModel, spec: MixtureSpec) -> tuple[float, float]:
    """Return ``(S_X, S_XY)`` in nats."""
    fam = spec.family
    if isinstance(fam, Gaussian) and truth.Kstar == 1:
        s = 0.5 * np.log(2 * np.pi * np.e)
        return s, s

    def integrand(x):
        lj = _log_true_joint(x, truth, fam)
        lq = logsumexp(lj, axis=-1)
        sx = -np.exp(lq) * lq
        sxy = -(np.exp(lj) * lj).sum(axis=-1)
        return np.stack([sx, sxy], axis=-1)

    sx, sxy = observation_expectation(integrand, spec, truth.bstar)
    if truth.Kstar == 1:
        sxy = sx
    return float(sx), float(sxy)


# ---------------------------------------------------------------------------
# Fisher information


def _check_interior(params: MixtureParams, spec: MixtureSpec) -> None:
    if np.any(params.weights <= 0):
        raise SingularPointError("Fisher matrices need all weights strictly positive")
    if isinstance(spec.family, Binomial) and (np.any(params.comps <= 0) or np.any(params.comps >= 1)):
        raise SingularPointError("Fisher matrices need success probabilities in (0, 1)")


def _scores(x, params: MixtureParams, spec: MixtureSpec):
    """Analytic scores in the free parametrisation ``(a_2..a_K, b_1..b_K)``.

    Returns ``(log p(x,y), s_xy, log p(x), s_x)`` with shapes ``(n, K)``,
    ``(n, K, d)``, ``(n,)``, ``(n, d)``.
    """
    K = params.K
    a, b = params.weights, params.comps
    lf = component_logpdf(x, b, spec.family)  # (n, K)
    df = _component_dlogpdf(x, b, spec.family)  # (n, K)
    n = lf.shape[0]
    d = spec.dim
    ljoint = np.log(a) + lf
    s_xy = np.zeros((n, K, d))
    for y in range(K):
        for k in range(1, K):
            s_xy[:, y, k - 1] = (1.0 / a[k] if y == k else 0.0) - (1.0 / a[0] if y == 0 else 0.0)
        s_xy[:, y, K - 1 + y] = df[:, y]
    lmix = logsumexp(ljoint, axis=1)
    resp = np.exp(ljoint - lmix[:, None])
    # score of the marginal is the posterior-weighted complete score
    s_x = np.einsum("nk,nkd->nd", resp, s_xy)
    return ljoint, s_xy, lmix, s_x


def fisher_matrices(params: MixtureParams, spec: MixtureSpec, validate: bool = False) -> FisherPair:
    """Complete- and incomplete-data Fisher matrices at an interior point.

    With ``validate=True`` the result is checked against
    :func:`fisher_matrices_fd`; a disagreement above 1e-4 raises
    :class:`FisherValidationError`.
    """
    _check_comp_domain(params.comps, spec.family)
    _check_interior(params, spec)
    d = spec.dim

    def integrand(x):
        ljoint, s_xy, lmix, s_x = _scores(x, params, spec)
        pj = np.exp(ljoint)
        ixy = np.einsum("nk,nki,nkj->nij", pj, s_xy, s_xy).reshape(len(x), d * d)
        ix = np.einsum("n,ni,nj->nij", np.exp(lmix), s_x, s_x).reshape(len(x), d * d)
        return np.concatenate([ixy, ix], axis=1)

    flat = observation_expectation(integrand, spec, params.comps)
    ixy = flat[: d * d].reshape(d, d)
    ix = flat[d * d :].reshape(d, d)
    pair = FisherPair((ixy + ixy.T) / 2, (ix + ix.T) / 2)
    if validate:
        fd = fisher_matrices_fd(params, spec)
        scale = max(1.0, np.abs(pair.I_XY).max())
        err = max(np.abs(fd.I_XY - pair.I_XY).max(), np.abs(fd.I_X - pair.I_X).max()) / scale
        if err > 1e-4:
            raise FisherValidationError(f"finite-difference Fisher disagrees by {err:.3g}")
    return pair


def _richardson_gradient(f, w: np.ndarray, steps) -> np.ndarray:
    """Central differences with one Richardson step, best step from a sweep.

    ``f`` maps a parameter vector to an array of values; the result has
    shape ``values.shape + (d,)``.
    """
    d = len(w)
    ests = []
    for h in steps:
        cols = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            dh = (f(w + h * e) - f(w - h * e)) / (2 * h)
            dh2 = (f(w + h / 2 * e) - f(w - h / 2 * e)) / h
            cols.append((4 * dh2 - dh) / 3)
        ests.append(np.stack(cols, axis=-1))
    diffs = [np.abs(ests[i] - ests[i + 1]).max() for i in range(len(ests) - 1)]
    return ests[int(np.argmin(diffs))]


def fisher_matrices_fd(params: MixtureParams, spec: MixtureSpec, steps=None) -> FisherPair:
    """Fisher matrices from finite-difference scores of the log densities.

    Only :func:`component_logpdf` is used, never the analytic scores, so this
    is an independent check of :func:`fisher_matrices`.
    """
    _check_interior(params, spec)
    steps = np.geomspace(1e-3, 1e-5, 5) if steps is None else steps
    K, d = params.K, spec.dim
    w0 = params.to_vector()

    def logs(x, w):
        a_rest = w[: K - 1]
        a = np.concatenate([[1.0 - a_rest.sum()], a_rest])
        lj = np.log(a) + component_logpdf(x, w[K - 1 :], spec.family)
        return np.concatenate([lj, logsumexp(lj, axis=1)[:, None]], axis=1)

    def integrand(x):
        g = _richardson_gradient(lambda w: logs(x, w), w0, steps)  # (n, K+1, d)
        base = logs(x, w0)
        pj = np.exp(base[:, :K])
        ixy = np.einsum("nk,nki,nkj->nij", pj, g[:, :K], g[:, :K])
        ix = np.einsum("n,ni,nj->nij", np.exp(base[:, K]), g[:, K], g[:, K])
        return np.concatenate([ixy.reshape(len(x), -1), ix.reshape(len(x), -1)], axis=1)

    flat = observation_expectation(integrand, spec, params.comps)
    return FisherPair(flat[: d * d].reshape(d, d), flat[d * d :].reshape(d, d))


def reg_lv_coefficient(params: MixtureParams, spec: MixtureSpec) -> float:
    """``Tr[I_XY I_X^{-1}]``, the regular-case latent error coefficient."""
    pair = fisher_matrices(params, spec, validate=True)
    cond = np.linalg.cond(pair.I_X)
    if not np.isfinite(cond) or cond > 1e12:
        raise RegularityError(f"incomplete Fisher matrix is singular (condition {cond:.3g})")
    return float(np.trace(np.linalg.solve(pair.I_X, pair.I_XY)))
