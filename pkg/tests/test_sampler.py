import json

import numpy as np
import pytest

from singlab.data import Dataset, sample_dataset
from singlab.exceptions import DomainError
from singlab.model import Binomial, Gaussian, MixtureSpec, PriorHyper, TrueModel
from singlab.regions import RegionSet
from singlab.sampler import (
    TRACE_COLUMNS,
    _binom_logw,
    compare_pY_estimates,
    gibbs_run,
    label_posterior_exact,
    occupancy_stats,
    summary_json,
)

TRUTH1 = TrueModel([1.0], [0.5])
REG = RegionSet(0.5)


def bspec(M=3, eta=1.0, K=2):
    return MixtureSpec(Binomial(M), K, PriorHyper(eta))


def test_symmetric_label_conditional():
    # a = (1/2, 1/2), b1 = b2: both labels get the same weight
    for m in range(4):
        w1 = np.log(0.5) + _binom_logw(0.5, 0.3, m, 3.0)
        w2 = np.log(0.5) + _binom_logw(0.5, 0.3, m, 3.0)
        assert np.exp(w1) / (np.exp(w1) + np.exp(w2)) == 0.5


def test_binom_logw_edges():
    assert _binom_logw(1.0, 0.0, 0, 3.0) == 0.0
    assert _binom_logw(1.0, 0.0, 1, 3.0) == -np.inf
    assert _binom_logw(0.5, 1.0, 3, 3.0) == pytest.approx(np.log(0.5))


def test_same_seed_same_trace():
    spec = bspec(eta=0.5)
    ds = sample_dataset(TRUTH1, spec, 50, 1)
    t1 = gibbs_run(ds, spec, 3000, 500, 5, seed=9)
    t2 = gibbs_run(ds, spec, 3000, 500, 5, seed=9)
    t3 = gibbs_run(ds, spec, 3000, 500, 5, seed=10)
    assert t1.a.tobytes() == t2.a.tobytes() and t1.b.tobytes() == t2.b.tobytes()
    assert t1.a.tobytes() != t3.a.tobytes()
    assert t1.to_csv(REG) == t2.to_csv(REG)
    assert len(t1) == 500
    assert t1.iters[0] >= 500  # iterations are counted from 0


def test_trace_domain_and_csv():
    spec = bspec(eta=2.0)
    ds = sample_dataset(TRUTH1, spec, 30, 2)
    t = gibbs_run(ds, spec, 2000, 200, 4, seed=1, keep_labels=True)
    assert np.allclose(t.a.sum(axis=1), 1)
    assert np.all((t.b >= 0) & (t.b <= 1))
    assert set(np.unique(t.labels)) <= {1, 2}
    assert t.labels.shape == (len(t), 30)
    assert set(np.unique(t.last.labels)) <= {1, 2}
    header = t.to_csv(REG).splitlines()[0]
    assert tuple(header.split(",")) == TRACE_COLUMNS


def test_gaussian_trace_within_bounds():
    spec = MixtureSpec(Gaussian(), 2, PriorHyper(1.0, scale=1.0, bound=2.0))
    ds = sample_dataset(TrueModel([1.0], [0.0]), spec, 40, 3)
    t = gibbs_run(ds, spec, 3000, 300, 3, seed=2)
    assert np.all(np.abs(t.b) <= 2.0)


def test_empty_component_drawn_from_prior():
    # with no data both labels are always empty, so b follows the Beta(2, 5) prior
    spec = MixtureSpec(Binomial(3), 2, PriorHyper(1.0, alpha=2.0, beta=5.0))
    t = gibbs_run(Dataset([], Binomial(3)), spec, 40_000, 0, 1, seed=3)
    assert t.b.mean() == pytest.approx(2 / 7, abs=0.01)


def test_gibbs_argument_checks():
    with pytest.raises(DomainError):
        gibbs_run(Dataset([1], Binomial(3)), bspec(), 100, 100)


def test_occupancy_fractions():
    spec = bspec(eta=0.25)
    ds = sample_dataset(TRUTH1, spec, 200, 4)
    t = gibbs_run(ds, spec, 20_000, 2000, 10, seed=5)
    occ = occupancy_stats(t, REG)
    assert occ["occ_w13"] <= occ["occ_w1"] + occ["occ_w3"] + 1e-12
    m = REG.membership(t.a[:, 0], t.b[:, 0], t.b[:, 1])
    assert occ["occ_rest"] == pytest.approx(1 - m.any(axis=1).mean())
    assert 1 - occ["occ_rest"] <= occ["occ_w1"] + occ["occ_w2"] + occ["occ_w3"] + 1e-12
    s = json.loads(summary_json(t, REG, 0.25, 200))
    assert set(s) == {"occ_w1", "occ_w2", "occ_w3", "occ_rest", "eta1", "n", "seed"}


def test_exact_label_posterior_normalized():
    spec = bspec(eta=0.7)
    ds = Dataset([0, 1, 3, 2, 2], Binomial(3))
    p = label_posterior_exact(ds, spec)
    assert p.shape == (32,)
    assert abs(p.sum() - 1) < 1e-12


@pytest.mark.parametrize(
    "spec, truth",
    [
        (MixtureSpec(Binomial(3), 2, PriorHyper(1.0)), TrueModel([1.0], [0.5])),
        (MixtureSpec(Binomial(4), 2, PriorHyper(0.5)), TrueModel([0.5, 0.5], [0.2, 0.8])),
        (MixtureSpec(Gaussian(), 2, PriorHyper(2.0, scale=1.0)), TrueModel([1.0], [0.0])),
    ],
)
def test_label_histogram_matches_exact(spec, truth):
    ds = sample_dataset(truth, spec, 6, 11)
    if isinstance(spec.family, Gaussian):
        from singlab.evidence import complete_evidence_table
        from scipy.special import logsumexp

        tab = complete_evidence_table(ds, spec)
        exact = np.exp(tab - logsumexp(tab))
    else:
        exact = label_posterior_exact(ds, spec)
    t = gibbs_run(ds, spec, 220_000, 20_000, 2, seed=4)
    hist = np.bincount(t.codes, minlength=len(exact)) / len(t)
    assert 0.5 * np.abs(hist - exact).sum() <= 0.05


def test_compare_pY_small_n_agrees():
    spec = bspec(eta=0.25)
    ds = sample_dataset(TRUTH1, spec, 8, 12)
    t = gibbs_run(ds, spec, 110_000, 10_000, 1, seed=6)
    y = np.ones(8, dtype=int)
    c = compare_pY_estimates(ds, y, t, spec, engine="brute")
    assert c.n_nonzero == len(t)
    assert c.log_mc == pytest.approx(c.log_exact, abs=0.2)
    with pytest.raises(DomainError):
        compare_pY_estimates(ds, y[:3], t, spec)


def test_exact_pY_sums_to_one():
    from scipy.special import logsumexp

    from singlab.evidence import enumerate_assignments

    spec = bspec(eta=0.5)
    ds = sample_dataset(TRUTH1, spec, 6, 3)
    t = gibbs_run(ds, spec, 200, 100, 1, seed=1)
    vals = [compare_pY_estimates(ds, y, t, spec).log_exact for y in enumerate_assignments(6, 2)]
    assert abs(logsumexp(vals)) < 1e-12


def test_truncated_normal_far_outside_box():
    from singlab.sampler import _trunc_normal

    np.random.seed(0)
    z = np.array([_trunc_normal(25.0, 0.5, 2.0) for _ in range(2000)])
    assert np.all(np.abs(z) <= 2.0)
    # the restricted law piles up at the upper edge
    assert np.mean(z > 1.9) > 0.9
