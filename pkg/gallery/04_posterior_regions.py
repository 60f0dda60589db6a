"""Where the posterior puts its mass.

With a redundant component the true distribution is realised on three
branches: one weight near one (W1), both locations at the truth (W2), or the
mirror of W1 (W3).  Exact region masses from cubature show that small eta1
favours the W1/W3 branches while large eta1 favours W2.
"""

import numpy as np

from singlab.data import sample_dataset
from singlab.evidence import posterior_region_mass
from singlab.model import Binomial, MixtureSpec, PriorHyper, TrueModel
from singlab.regions import RegionSet

truth = TrueModel([1.0], [0.5])
regions = RegionSet(0.5, 0.1, 0.1)

for eta in (0.25, 2.0):
    spec = MixtureSpec(Binomial(3), 2, PriorHyper(eta))
    print(f"eta1 = {eta}")
    for n in (100, 400, 1600):
        m = [posterior_region_mass(sample_dataset(truth, spec, n, 5, r), spec, regions) for r in range(5)]
        u13 = np.mean([x.union13 for x in m])
        w2 = np.mean([x["w2"] for x in m])
        rest = np.mean([x["rest"] for x in m])
        print(f"  n={n:5d}  mass(W1 u W3)={u13:.3f}  mass(W2)={w2:.3f}  outside={rest:.3f}")
