"""Neighbourhoods of the three branches of the two-component true-parameter set.

For a learner ``a f(x|b1) + (1-a) f(x|b2)`` fitted to a one-component truth
``f(x|b*)`` the zero set of the divergence is the union of

* W1: ``a = 1, b1 = b*`` (component 2 switched off),
* W2: ``b1 = b2 = b*`` (both components used, any ``a``),
* W3: ``a = 0, b2 = b*`` (component 1 switched off).

The boxes below are axis-aligned neighbourhoods of these branches.  They
overlap on purpose; intersections are reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = ["RegionSet", "REGION_KEYS", "classify", "inclusion_exclusion_total"]

REGION_KEYS = ("w1", "w2", "w3", "w12", "w23", "w13", "w123", "rest")


@dataclass(frozen=True)
class RegionSet:
    bstar: float
    delta_a: float = 0.1
    delta_b: float = 0.1

    def __post_init__(self):
        for name in ("delta_a", "delta_b"):
            v = getattr(self, name)
            if not 0 < v < 0.5:
                raise DomainError(f"{name} must lie in (0, 0.5), got {v}")

    def b_window(self, lo: float, hi: float) -> tuple[float, float]:
        """``b* -+ delta_b`` clipped to the component domain ``[lo, hi]``."""
        return max(lo, self.bstar - self.delta_b), min(hi, self.bstar + self.delta_b)

    def membership(self, a, b1, b2) -> np.ndarray:
        """Boolean array ``(..., 3)`` for membership in W1, W2, W3."""
        a, b1, b2 = np.broadcast_arrays(np.asarray(a, float), np.asarray(b1, float), np.asarray(b2, float))
        in1 = np.abs(b1 - self.bstar) <= self.delta_b
        in2 = np.abs(b2 - self.bstar) <= self.delta_b
        w1 = (a >= 1 - self.delta_a) & in1
        w2 = in1 & in2
        w3 = (a <= self.delta_a) & in2
        return np.stack([w1, w2, w3], axis=-1)

    def to_dict(self) -> dict:
        return {"bstar": self.bstar, "delta_a": self.delta_a, "delta_b": self.delta_b}


_ATOM_NAMES = {
    (True, False, False): "W1",
    (False, True, False): "W2",
    (False, False, True): "W3",
    (True, True, False): "W12",
    (False, True, True): "W23",
    (True, False, True): "W13",
    (True, True, True): "W123",
    (False, False, False): "rest",
}


def classify(member: np.ndarray) -> np.ndarray:
    """Name of the Venn atom of each membership row."""
    return np.array([_ATOM_NAMES[tuple(bool(v) for v in row)] for row in member.reshape(-1, 3)])


def inclusion_exclusion_total(m: dict) -> float:
    """``|W1 u W2 u W3| + rest`` from raw and intersection masses; 1 for a probability."""
    return (m["w1"] + m["w2"] + m["w3"] - m["w12"] - m["w23"] - m["w13"] + m["w123"] + m["rest"])
