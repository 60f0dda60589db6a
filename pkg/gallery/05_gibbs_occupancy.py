"""Gibbs sampling over parameters and labels.

On a tiny dataset the label histogram of a long chain is compared with the
exact posterior over all label vectors.  On a larger dataset the fraction of
draws in each branch neighbourhood is compared with the exact posterior mass
of the same region.
"""

import numpy as np

from singlab.data import sample_dataset
from singlab.evidence import posterior_region_mass
from singlab.model import Binomial, MixtureSpec, PriorHyper, TrueModel
from singlab.regions import RegionSet
from singlab.sampler import gibbs_run, label_posterior_exact, occupancy_stats

truth = TrueModel([1.0], [0.5])
spec = MixtureSpec(Binomial(3), 2, PriorHyper(1.0))

ds = sample_dataset(truth, spec, 7, seed=2)
exact = label_posterior_exact(ds, spec)
trace = gibbs_run(ds, spec, iters=300_000, burnin=20_000, thin=2, seed=1)
hist = np.bincount(trace.codes, minlength=len(exact)) / len(trace)
print(f"n=7: total variation between chain and exact label posterior = {0.5 * np.abs(hist - exact).sum():.4f}")

regions = RegionSet(0.5)
for eta in (0.25, 2.0):
    sp = spec.with_eta(eta)
    ds = sample_dataset(truth, sp, 1000, seed=4)
    occ = occupancy_stats(gibbs_run(ds, sp, seed=11), regions)
    m = posterior_region_mass(ds, sp, regions)
    print(f"eta1={eta}: occupancy W1uW3={occ['occ_w13']:.3f} W2={occ['occ_w2']:.3f} | "
          f"exact mass W1uW3={m.union13:.3f} W2={m['w2']:.3f}")
