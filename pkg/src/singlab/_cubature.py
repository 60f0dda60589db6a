"""Adaptive tensor Gauss-Legendre cubature on boxes of the unit cube.

The integrand is given in log form on tensor grids.  Each box carries a
Gauss-Legendre estimate of order ``p`` and an error estimate from the
difference with order ``p - 2``; boxes whose error exceeds their share of
the tolerance are bisected along the dimension whose Legendre tail is
largest.  Box values are stored relative to a running maximum of the log
integrand so nothing over- or underflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .exceptions import ConvergenceError


@dataclass
class BoxSet:
    lo: np.ndarray  # (B, d)
    hi: np.ndarray
    q: np.ndarray  # (B,) integral, in units of exp(shift)
    err: np.ndarray  # (B,)
    shift: float

    @property
    def total(self) -> float:
        return float(self.q.sum())

    @property
    def log_total(self) -> float:
        return self.shift + float(np.log(self.q.sum()))

    @property
    def rel_err(self) -> float:
        return float(self.err.sum() / self.q.sum())


class _Rule:
    def __init__(self, order: int):
        self.p = order
        self.x, self.w = legendre.leggauss(order)
        self.x2, self.w2 = legendre.leggauss(order - 2)
        V = legendre.legvander(self.x, order - 1)
        self.T = ((2 * np.arange(order) + 1) / 2)[:, None] * (V * self.w[:, None]).T

    @staticmethod
    def _map(x, w, lo, hi):
        h = (hi - lo) / 2
        mid = (hi + lo) / 2
        # both t and 1 - t are returned; 1 - t is formed without cancellation
        t = mid[:, None] + h[:, None] * x[None, :]
        tc = (1 - mid)[:, None] - h[:, None] * x[None, :]
        return t, tc, h[:, None] * w[None, :]


def _eval(rule: _Rule, log_f, lo, hi):
    """Return (log values at order p, log values at order p-2, weights)."""
    d = lo.shape[1]
    hiord = [rule._map(rule.x, rule.w, lo[:, k], hi[:, k]) for k in range(d)]
    loord = [rule._map(rule.x2, rule.w2, lo[:, k], hi[:, k]) for k in range(d)]
    return log_f(hiord), log_f(loord), hiord, loord


def _box_estimates(rule: _Rule, log_f, lo, hi, shift, chunk):
    B = len(lo)
    q = np.empty(B)
    q2 = np.empty(B)
    ind = np.empty((B, 3))
    top = -np.inf
    logs = []
    for s in range(0, B, chunk):
        l1, l2, n1, n2 = _eval(rule, log_f, lo[s : s + chunk], hi[s : s + chunk])
        top = max(top, np.max(l1), np.max(l2))
        logs.append((s, l1, l2, n1, n2))
    new_shift = max(shift, top)
    if not np.isfinite(new_shift):
        new_shift = 0.0
    for s, l1, l2, n1, n2 in logs:
        F = np.exp(l1 - new_shift)
        F2 = np.exp(l2 - new_shift)
        wa, w1, w2 = (n1[k][2] for k in range(3))
        q[s : s + len(F)] = np.einsum("bijk,bi,bj,bk->b", F, wa, w1, w2)
        va, v1, v2 = (n2[k][2] for k in range(3))
        q2[s : s + len(F)] = np.einsum("bijk,bi,bj,bk->b", F2, va, v1, v2)
        T = rule.T
        C = np.einsum("li,bijk->bljk", T, F)
        C = np.einsum("mj,bljk->blmk", T, C)
        C = np.abs(np.einsum("nk,blmk->blmn", T, C))
        tail = np.arange(rule.p) >= rule.p - 2
        ind[s : s + len(F)] = np.stack(
            [C[:, tail].sum((1, 2, 3)), C[:, :, tail].sum((1, 2, 3)), C[:, :, :, tail].sum((1, 2, 3))], axis=1
        )
    return q, np.abs(q - q2), ind, new_shift


def integrate(log_f, breaks, tol=1e-6, order=6, max_boxes=400_000, max_iter=80, chunk=2048,
              batch=4096) -> tuple[BoxSet, int]:
    """Adaptively integrate ``exp(log_f)`` over the unit cube in 3 dimensions.

    ``log_f`` receives a list of three tuples ``(t, 1 - t, weights)`` with
    arrays of shape ``(B, q)`` and must return log values of shape
    ``(B, q, q, q)``.  ``breaks`` lists initial break points per dimension;
    boxes never straddle them, so region integrals over unions of initial
    cells are exact sums of box values.

    Returns the final boxes and the number of refinement sweeps.
    """
    rule = _Rule(order)
    grids = np.meshgrid(*[np.arange(len(b) - 1) for b in breaks], indexing="ij")
    lo = np.stack([np.asarray(breaks[k])[grids[k].ravel()] for k in range(3)], axis=1)
    hi = np.stack([np.asarray(breaks[k])[grids[k].ravel() + 1] for k in range(3)], axis=1)
    q, err, ind, shift = _box_estimates(rule, log_f, lo, hi, -np.inf, chunk)
    it = 0
    for it in range(1, max_iter + 1):
        tot = q.sum()
        if tot <= 0:
            raise ConvergenceError("integrand vanishes on every node", estimate=-np.inf, err_est=np.inf)
        if err.sum() <= tol * tot:
            break
        if len(q) >= max_boxes:
            raise ConvergenceError(
                f"adaptive cubature hit {max_boxes} boxes before reaching tol={tol}",
                estimate=shift + np.log(tot), err_est=err.sum() / tot)
        thr = tol * tot / len(q)
        order_ = np.argsort(-err)
        k = int(np.searchsorted(-err[order_], -thr))
        sel = order_[: max(1, min(k, batch))]
        dim = ind[sel].argmax(axis=1)
        rows = np.arange(len(sel))
        l0, h0 = lo[sel], hi[sel]
        mid = (l0[rows, dim] + h0[rows, dim]) / 2
        hA = h0.copy()
        hA[rows, dim] = mid
        lB = l0.copy()
        lB[rows, dim] = mid
        nlo = np.concatenate([l0, lB])
        nhi = np.concatenate([hA, h0])
        qn, en, indn, new_shift = _box_estimates(rule, log_f, nlo, nhi, shift, chunk)
        keep = np.ones(len(q), bool)
        keep[sel] = False
        scale = np.exp(shift - new_shift) if np.isfinite(shift) else 0.0
        lo = np.concatenate([lo[keep], nlo])
        hi = np.concatenate([hi[keep], nhi])
        q = np.concatenate([q[keep] * scale, qn])
        err = np.concatenate([err[keep] * scale, en])
        ind = np.concatenate([ind[keep], indn])
        shift = new_shift
    else:
        raise ConvergenceError(f"adaptive cubature did not converge in {max_iter} sweeps",
                               estimate=shift + np.log(q.sum()), err_est=err.sum() / q.sum())
    return BoxSet(lo, hi, q, err, shift), it
