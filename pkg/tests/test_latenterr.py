import numpy as np
import pytest

from singlab.data import Dataset, sample_dataset
from singlab.evidence import complete_evidence_table, enumerate_assignments, log_evidence_brute
from singlab.exceptions import DomainError, GuardError
from singlab.latenterr import (
    dataset_latent_error,
    dn_curve,
    peak_assignment,
    regular_plateau,
    theory_predictions,
    true_label_posterior,
)
from singlab.model import Binomial, Gaussian, MixtureSpec, PriorHyper, TrueModel

TRUTH1 = TrueModel([1.0], [0.5])


def bspec(M=3, eta=1.0, K=2):
    return MixtureSpec(Binomial(M), K, PriorHyper(eta))


# -- theory values ------------------------------------------------------------------


@pytest.mark.parametrize(
    "eta, lam_x, m_x, area, phase",
    [
        (0.25, 0.625, 1, "W1∪W3", "eliminate"),
        (0.5, 0.75, 2, "intersections", "eliminate"),
        (1.0, 0.75, 1, "W2", "use_all"),
        (2.0, 0.75, 1, "W2", "use_all"),
    ],
)
def test_theory_binomial_two_component(eta, lam_x, m_x, area, phase):
    t = theory_predictions(2, 1, 1, eta, "binomial")
    assert t.lambda_xy == pytest.approx(0.5 + eta)
    assert t.lambda_x_exact == pytest.approx(lam_x)
    assert t.m_x == m_x
    assert t.dn_slope_exact == pytest.approx(0.5 + eta - lam_x)
    assert t.effective_area == area and t.phase == phase
    assert t.lambda_x_lower <= lam_x <= t.lambda_x_upper + 1e-15


def test_theory_general_bounds():
    t = theory_predictions(4, 2, 1, 0.3)
    assert t.lambda_xy == pytest.approx(1.5 + 0.6)
    assert t.lambda_x_upper == pytest.approx(1.5 + 0.3)
    assert t.lambda_x_lower == 1.5
    assert t.dn_slope_lower == pytest.approx(0.3)
    assert t.lambda_x_exact is None
    t = theory_predictions(3, 1, 2, 5.0)
    assert t.lambda_x_upper == pytest.approx(1.0 + 2 * 2 / 2)


def test_theory_regular_case():
    t = theory_predictions(2, 2, 1, 0.7)
    assert t.lambda_xy == t.lambda_x_exact == 1.5
    assert t.dn_slope_exact == 0.0


def test_theory_domain_errors():
    with pytest.raises(DomainError):
        theory_predictions(1, 2, 1, 1.0)
    with pytest.raises(DomainError):
        theory_predictions(2, 1, 1, 0.0)
    with pytest.raises(DomainError):
        theory_predictions(3, 1, 1, 1.0, Binomial(3))


# -- per-dataset latent error ---------------------------------------------------------


def test_half_weight_example():
    # n = 1, M = 1, truth b* = 1/2: the two labels are exchangeable so D = ln 2
    ds = Dataset([1], Binomial(1), [1])
    spec = MixtureSpec(Binomial(1), 2, PriorHyper(1.0))
    assert dataset_latent_error(ds, spec, TrueModel([1.0], [0.5]), engine="brute") == pytest.approx(np.log(2))


def test_nonnegative_random():
    rng = np.random.default_rng(0)
    for j in range(1000):
        spec = bspec(4, eta=float(rng.choice([0.25, 1.0, 2.0])))
        truth = TrueModel([0.4, 0.6], [0.2, 0.7]) if j % 2 else TRUTH1
        ds = sample_dataset(truth, spec, int(rng.integers(1, 40)), 9, j)
        assert dataset_latent_error(ds, spec, truth) >= -1e-10


def _enumeration_oracle(ds, spec, truth):
    # sum over all K*^n true labelings, done by hand with brute-force tables
    r = true_label_posterior(ds, truth, spec)
    Y = enumerate_assignments(ds.n, truth.Kstar)
    q = np.exp(np.log(r)[np.arange(ds.n), Y - 1].sum(axis=1))
    lz_xy = complete_evidence_table(ds, spec, n_labels=truth.Kstar)
    return log_evidence_brute(ds, spec) + np.sum(q * np.log(q)) - np.sum(q * lz_xy)


def test_two_component_truth_routes_agree():
    truth = TrueModel([0.4, 0.6], [0.2, 0.7])
    spec = bspec(4, eta=0.8)
    for r in range(6):
        ds = sample_dataset(truth, spec, 10, 2, r)
        want = _enumeration_oracle(ds, spec, truth)
        for method in ("exact", "enumerate"):
            assert dataset_latent_error(ds, spec, truth, method=method) == pytest.approx(want, abs=1e-9)


def test_exact_law_large_n_matches_mc():
    truth = TrueModel([0.4, 0.6], [0.2, 0.7])
    spec = bspec(8, eta=1.0)
    ds = sample_dataset(truth, spec, 120, 4)
    ex = dataset_latent_error(ds, spec, truth, method="exact")
    # Monte Carlo sd is about 0.022 at this draw count
    mc = dataset_latent_error(ds, spec, truth, method="mc", mc_draws=40_000, seed=1)
    assert mc == pytest.approx(ex, abs=0.1)


def test_guard_without_mc_draws():
    truth = TrueModel([0.5, 0.5], [-1.0, 1.0])
    spec = MixtureSpec(Gaussian(), 2, PriorHyper(1.0))
    ds = sample_dataset(truth, spec, 25, 1)
    with pytest.raises(GuardError):
        dataset_latent_error(ds, spec, truth, engine="quad")
    with pytest.raises(DomainError):
        dataset_latent_error(ds, MixtureSpec(Gaussian(), 1, PriorHyper(1.0)), truth)


def test_regular_plateau_values():
    truth = TrueModel([0.4, 0.6], [0.2, 0.7])
    p = regular_plateau(truth, bspec(8))
    assert p["trace"] >= 3.0
    assert p["laplace"] > np.log(2)
    with pytest.raises(DomainError):
        regular_plateau(TRUTH1, bspec(3))


def test_dn_curve_small():
    c = dn_curve(bspec(eta=2.0), TRUTH1, (10, 20, 40, 80), 20, 5, n_boot=100)
    assert c.values.shape == (4, 20)
    assert np.all(c.values >= -1e-10)
    assert c.theory_slope == pytest.approx(1.75)
    assert c.theory_source == "exact_binomial"
    assert c.ci_lo <= c.slope_hat <= c.ci_hi
    assert c.to_csv().count("\n") == 1 + 80


# -- peak assignment ----------------------------------------------------------------


def test_peak_small_all_same_label():
    ds = Dataset([1, 2, 1, 2, 1, 2], Binomial(3))
    res = peak_assignment(ds, bspec(eta=0.25))
    assert res.labels_used == 1
    ones = complete_evidence_table(ds, bspec(eta=0.25))
    assert ones[0] == pytest.approx(ones[-1], abs=1e-12)  # all-ones and all-twos tie
    assert res.labels.tolist() == [1] * 6


def test_peak_exhaustive_is_max():
    rng = np.random.default_rng(3)
    spec = bspec(5, eta=1.5)
    ds = Dataset(rng.integers(0, 6, 9), Binomial(5))
    res = peak_assignment(ds, spec)
    assert res.log_z == pytest.approx(complete_evidence_table(ds, spec).max())


def test_icm_reaches_exhaustive_on_small_data():
    rng = np.random.default_rng(4)
    for j in range(10):
        spec = bspec(6, eta=float(rng.choice([0.25, 2.0])))
        truth = TrueModel([0.5, 0.5], [0.15, 0.85])
        ds = sample_dataset(truth, spec, 12, 11, j)
        ex = peak_assignment(ds, spec)
        icm = peak_assignment(ds, spec, "icm_restarts", seed=j)
        assert icm.log_z == pytest.approx(ex.log_z, abs=1e-9)


def test_icm_beats_true_labels():
    truth = TrueModel([0.4, 0.6], [0.2, 0.7])
    spec = bspec(8)
    from singlab.evidence import log_evidence_complete

    for r in range(5):
        ds = sample_dataset(truth, spec, 300, 6, r)
        res = peak_assignment(ds, spec, "icm_restarts", seed=r)
        assert res.log_z >= log_evidence_complete(ds, spec) - 1e-9


@pytest.mark.parametrize("eta", [0.25, 2.0])
def test_exhaustive_one_label_for_single_component_truth(eta):
    spec = bspec(eta=eta)
    used = [peak_assignment(sample_dataset(TRUTH1, spec, 12, 13, r), spec).labels_used for r in range(40)]
    assert used == [1] * 40


def test_icm_beats_true_labels_single_component():
    from singlab.evidence import log_evidence_complete

    rng = np.random.default_rng(8)
    for r in range(50):
        spec = bspec(int(rng.integers(2, 9)), eta=float(rng.choice([0.25, 1.0, 2.0])))
        ds = sample_dataset(TRUTH1, spec, int(rng.integers(5, 200)), 14, r)
        res = peak_assignment(ds, spec, "icm_restarts", seed=r)
        assert res.log_z >= log_evidence_complete(ds, spec) - 1e-9


def test_ci_width_shrinks_with_replicates():
    spec = bspec(eta=2.0)
    w = []
    for R in (20, 80):
        c = dn_curve(spec, TRUTH1, (10, 20, 40, 80), R, 5, n_boot=1000)
        w.append(c.ci_hi - c.ci_lo)
    # quadrupling R halves the width
    assert 1.4 <= w[0] / w[1] <= 2.6


def test_icm_requires_restarts():
    with pytest.raises(DomainError):
        peak_assignment(Dataset([1], Binomial(3)), bspec(), "icm_restarts", restarts=5)


def test_peak_eliminates_at_large_eta():
    # even with a prior favouring balanced weights the peak uses one label
    spec = bspec(eta=2.0)
    used = [peak_assignment(sample_dataset(TRUTH1, spec, 200, 77, r), spec, "icm_restarts", seed=r).labels_used
            for r in range(100)]
    assert np.mean(np.array(used) == 1) >= 0.95


@pytest.mark.slow
def test_small_eta_dn_slope_ci_covers_theory():
    from singlab import acceptance
    from singlab.latenterr import dn_curve_from_energy

    dn = dn_curve_from_energy(acceptance._energy(0.25, ("x", "xy")))
    assert dn.ci_lo <= 0.125 <= dn.ci_hi


@pytest.mark.slow
@pytest.mark.parametrize("eta", [0.25, 2.0])
def test_dn_slope_respects_lower_bound(eta):
    from singlab import acceptance
    from singlab.latenterr import dn_curve_from_energy

    dn = dn_curve_from_energy(acceptance._energy(eta, ("x", "xy")))
    assert dn.ci_hi >= eta / 2
