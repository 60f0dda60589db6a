"""Three ways to compute the marginal likelihood of a two-component mixture.

A binomial mixture with two components is fitted to data drawn from a single
binomial.  Summing over every label vector is exact but only feasible for a
handful of points.  Grouping label vectors by their sufficient statistics
gives the same number in polynomial time, and adaptive cubature over the
parameters reaches large samples without any label enumeration.
"""

import time

from singlab.data import sample_dataset
from singlab.evidence import log_evidence
from singlab.model import Binomial, MixtureSpec, PriorHyper, TrueModel

truth = TrueModel([1.0], [0.5])

for eta in (0.25, 2.0):
    spec = MixtureSpec(Binomial(3), 2, PriorHyper(eta))
    print(f"eta1 = {eta}")
    for n in (12, 200, 1600):
        ds = sample_dataset(truth, spec, n, seed=1)
        row = []
        for engine in ("brute", "dp", "quad"):
            if engine == "brute" and n > 16:
                row.append(f"{engine:>5}: {'-':>12}")
                continue
            t = time.perf_counter()
            r = log_evidence(ds, spec, engine)
            row.append(f"{engine:>5}: {r.log_z:12.6f} ({time.perf_counter() - t:5.2f}s)")
        print(f"  n={n:5d}  " + "  ".join(row))
