"""How much is lost by not observing the labels.

``n D(n)`` is the expected Kullback-Leibler divergence between the true label
distribution and the Bayesian predictive one, scaled by ``n``.  For a learner
with a redundant component it grows like ``ln n``; when the learner matches
the truth it levels off.  Both behaviours are shown on small grids.
"""

import numpy as np

from singlab.latenterr import dn_curve, regular_plateau, theory_predictions
from singlab.model import Binomial, MixtureSpec, PriorHyper, TrueModel

print("theory slopes for a two-component binomial learner of one component")
for eta in (0.25, 0.5, 1.0, 2.0):
    t = theory_predictions(2, 1, 1, eta, "binomial")
    print(f"  eta1={eta:4}: lambda_XY={t.lambda_xy:.3f} lambda_X={t.lambda_x_exact:.3f} "
          f"slope={t.dn_slope_exact:.3f} area={t.effective_area} phase={t.phase}")

grid = (25, 50, 100, 200, 400)
spec = MixtureSpec(Binomial(3), 2, PriorHyper(2.0))
c = dn_curve(spec, TrueModel([1.0], [0.5]), grid, R=20, seed=3, n_boot=300)
print("\nredundant component, eta1 = 2")
print("  mean nD(n):", np.round(c.mean, 3))
print(f"  slope {c.slope_hat:.3f} CI [{c.ci_lo:.3f}, {c.ci_hi:.3f}] theory {c.theory_slope:.3f}")

truth = TrueModel([0.4, 0.6], [0.2, 0.7])
spec = MixtureSpec(Binomial(8), 2, PriorHyper(1.0))
c = dn_curve(spec, truth, grid, R=20, seed=3, engine="quad", n_boot=300)
p = regular_plateau(truth, spec)
print("\nno redundancy, two-component truth")
print("  mean nD(n):", np.round(c.mean, 3))
print(f"  slope {c.slope_hat:.3f} CI [{c.ci_lo:.3f}, {c.ci_hi:.3f}]")
print(f"  Tr[I_XY I_X^-1] = {p['trace']:.3f}, Laplace value = {p['laplace']:.3f}")
