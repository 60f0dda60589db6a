"""Seeded generation of complete datasets from a true mixture.

Every dataset is a pure function of ``(master_seed, task)``.  The stream
for a task is ``numpy.random.SeedSequence(master_seed, spawn_key=(task,))``
feeding a PCG64 generator; SeedSequence mixes the spawn key into the
entropy pool with its documented integer hash, so tasks can be generated
in any order or in parallel and still reproduce bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .exceptions import DomainError
from .model import Binomial, Family, MixtureSpec, TrueModel, component_logpdf, family_from_dict

__all__ = ["SeedSpec", "Dataset", "rng_for", "cell_task", "sample_dataset", "empirical_log_q"]


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2**64):
            raise DomainError("master seed must be a 64-bit unsigned integer")


def rng_for(seed: SeedSpec | int, task: int) -> np.random.Generator:
    master = seed.master_seed if isinstance(seed, SeedSpec) else int(seed)
    ss = np.random.SeedSequence(int(master), spawn_key=(int(task),))
    return np.random.Generator(np.random.PCG64(ss))


def cell_task(n: int, replicate: int) -> int:
    """Task index of replicate ``r`` at sample size ``n`` in a replication grid."""
    return int(n) * 1_000_000 + int(replicate)


@dataclass
class Dataset:
    """Observations, optional true labels (1-based) and provenance."""

    xs: np.ndarray
    family: Family
    ys: Optional[np.ndarray] = None
    seed: Optional[int] = None
    task: Optional[int] = None

    def __post_init__(self):
        dtype = int if self.family.discrete else float
        self.xs = np.asarray(self.xs, dtype=dtype).reshape(-1)
        if isinstance(self.family, Binomial) and self.xs.size:
            if self.xs.min() < 0 or self.xs.max() > self.family.M:
                raise DomainError("observation outside binomial support")
        if self.ys is not None:
            self.ys = np.asarray(self.ys, dtype=int).reshape(-1)
            if self.ys.shape != self.xs.shape:
                raise DomainError("labels and observations differ in length")
            if self.ys.size and self.ys.min() < 1:
                raise DomainError("labels are 1-based")

    @property
    def n(self) -> int:
        return int(self.xs.size)

    @property
    def hist(self) -> Optional[np.ndarray]:
        """Count of each support value for discrete families, else ``None``."""
        if not isinstance(self.family, Binomial):
            return None
        return np.bincount(self.xs, minlength=self.family.M + 1)

    def with_labels(self, ys) -> "Dataset":
        return Dataset(self.xs, self.family, ys, self.seed, self.task)

    def to_json(self) -> str:
        obj = {"n": self.n, "family": self.family.to_dict(), "xs": self.xs.tolist()}
        if self.ys is not None:
            obj["ys"] = self.ys.tolist()
        obj["seed"] = self.seed
        obj["task"] = self.task
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        obj = json.loads(text)
        ds = cls(np.asarray(obj["xs"]), family_from_dict(obj["family"]), obj.get("ys"),
                 obj.get("seed"), obj.get("task"))
        if ds.n != obj["n"]:
            raise DomainError(f"declared n={obj['n']} but {ds.n} observations stored")
        return ds


def sample_dataset(truth: TrueModel, spec: MixtureSpec, n: int, seed: SeedSpec | int, task: int = 0) -> Dataset:
    """Draw ``n`` complete observations ``(x_i, y_i)`` from the true model."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    rng = rng_for(seed, task)
    ys = rng.choice(truth.Kstar, size=n, p=truth.astar) + 1 if truth.Kstar > 1 else np.ones(n, dtype=int)
    b = truth.bstar[ys - 1]
    if isinstance(spec.family, Binomial):
        xs = rng.binomial(spec.family.M, b)
    else:
        xs = b + rng.standard_normal(n)
    master = seed.master_seed if isinstance(seed, SeedSpec) else int(seed)
    return Dataset(xs, spec.family, ys, master, task)


def empirical_log_q(dataset: Dataset, truth: TrueModel, spec: MixtureSpec, complete: bool = True):
    """``(sum_i ln q(x_i), sum_i ln q(x_i, y_i))`` under the true model.

    The complete value is ``None`` when ``complete`` is false; requesting it
    on a dataset without labels raises :class:`DomainError`.
    """
    if dataset.n == 0:
        return 0.0, (0.0 if complete else None)
    lj = np.log(truth.astar) + component_logpdf(dataset.xs, truth.bstar, spec.family)
    inc = float(logsumexp(lj, axis=1).sum())
    if not complete:
        return inc, None
    if dataset.ys is None:
        raise DomainError("complete log-likelihood needs the true labels")
    if dataset.ys.max() > truth.Kstar:
        return inc, float("-inf")
    comp = float(np.take_along_axis(lj, dataset.ys[:, None] - 1, axis=1).sum())
    return inc, comp
