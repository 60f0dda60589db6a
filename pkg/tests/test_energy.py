import numpy as np
import pytest

from singlab.data import Dataset, cell_task, sample_dataset
from singlab.energy import (
    CSV_COLUMNS,
    EnergyCurve,
    check_geometric_grid,
    energy_curve,
    fit_lambda,
    fit_slope,
    generalization_error_curve,
    normalized_free_energy_x,
    normalized_free_energy_xy,
)
from singlab.evidence import log_evidence_brute, log_evidence_complete
from singlab.exceptions import DomainError
from singlab.latenterr import dataset_latent_error
from singlab.model import Binomial, MixtureSpec, PriorHyper, TrueModel

GRID = (100, 200, 400, 800, 1600)
SMALL = (10, 20, 40, 80)
TRUTH = TrueModel([1.0], [0.5])


def bspec(M=3, eta=1.0):
    return MixtureSpec(Binomial(M), 2, PriorHyper(eta))


# -- fits on synthetic curves ----------------------------------------------------


def test_fit_exact_line():
    n = np.array(GRID)
    fit = fit_lambda(EnergyCurve.from_values(n, 0.75 * np.log(n) + 2.0))
    assert fit.lambda_hat == pytest.approx(0.75, abs=1e-12)
    assert fit.intercept == pytest.approx(2.0, abs=1e-11)
    assert fit.n_points == 5
    assert fit.ci_lo == fit.ci_hi == fit.lambda_hat


def test_fit_lnln_multiplicity():
    n = np.array(GRID)
    y = 0.9 * np.log(n) - np.log(np.log(n)) + 0.3
    fit = fit_lambda(EnergyCurve.from_values(n, y), model="ln_plus_lnln")
    assert fit.lambda_hat == pytest.approx(0.9, abs=1e-10)
    assert fit.m_hat == pytest.approx(2.0, abs=1e-9)
    assert set(fit.to_dict()) == {"lambda_hat", "ci_lo", "ci_hi", "m_hat", "n_points", "model"}


def test_fit_noisy_ci_covers_truth():
    rng = np.random.default_rng(0)
    n = np.array(GRID)
    v = 0.75 * np.log(n)[:, None] + rng.normal(0, 0.5, (5, 40))
    fit = fit_lambda(EnergyCurve.from_values(n, v), n_boot=400)
    assert fit.ci_lo <= 0.75 <= fit.ci_hi
    assert fit.ci_lo <= fit.lambda_hat <= fit.ci_hi


def test_fit_rejects_short_grid():
    with pytest.raises(DomainError):
        fit_slope([100, 200, 400], [1, 2, 3], [0.1, 0.1, 0.1])
    with pytest.raises(DomainError):
        check_geometric_grid([100, 200, 400])


def test_grid_validation():
    assert check_geometric_grid(GRID).tolist() == list(GRID)
    with pytest.raises(DomainError):
        check_geometric_grid([100, 200, 300, 1600])
    with pytest.raises(DomainError):
        check_geometric_grid([100, 100, 200, 400])


def test_fit_refuses_failed_cells():
    v = np.ones((4, 3))
    v[1, 2] = np.nan
    with pytest.raises(DomainError):
        fit_lambda(EnergyCurve.from_values(SMALL, v))


def test_generalization_error_is_lambda_over_n():
    n = np.array(GRID)
    g = generalization_error_curve(EnergyCurve.from_values(n, 0.75 * np.log(n)))
    np.testing.assert_allclose(g.g_hat * g.n_mid, 0.75, rtol=1e-12)
    assert np.all((g.n_mid > n[:-1]) & (g.n_mid < n[1:]))


# -- energies on data -------------------------------------------------------------


def test_free_energy_single_observation():
    # Z(X) = 1/3 and q(x=1) = 1/2 for M = 2, b* = 1/2
    ds = Dataset([1], Binomial(2), [1])
    spec = MixtureSpec(Binomial(2), 2, PriorHyper(1.0))
    assert normalized_free_energy_x(ds, spec, TRUTH, "brute") == pytest.approx(np.log(3) + np.log(0.5), abs=1e-14)
    assert normalized_free_energy_xy(ds, spec, TRUTH) == pytest.approx(np.log(6) + np.log(0.5), abs=1e-14)


def test_free_energy_bernoulli_enumeration_oracle():
    # M = 1: brute force over all labelings for every dataset up to n = 8
    spec = MixtureSpec(Binomial(1), 2, PriorHyper(0.5))
    truth = TrueModel([1.0], [0.3])
    for n in range(1, 9):
        for k in range(n + 1):
            ds = Dataset(np.r_[np.ones(k, int), np.zeros(n - k, int)], Binomial(1), np.ones(n, int))
            inc = k * np.log(0.3) + (n - k) * np.log(0.7)
            want = -log_evidence_brute(ds, spec) + inc
            assert normalized_free_energy_x(ds, spec, truth, "dp") == pytest.approx(want, abs=1e-10)


def test_one_component_identity():
    # F~_XY - F~_X equals the latent error when the truth has one component
    spec = bspec(eta=0.7)
    for r in range(5):
        ds = sample_dataset(TRUTH, spec, 150, 3, r)
        d = normalized_free_energy_xy(ds, spec, TRUTH) - normalized_free_energy_x(ds, spec, TRUTH)
        assert d == pytest.approx(dataset_latent_error(ds, spec, TRUTH), abs=1e-10)
        assert d >= 0


def test_free_energy_nonnegative_expectation():
    spec = bspec(eta=2.0)
    vals = [normalized_free_energy_x(sample_dataset(TRUTH, spec, 200, 8, r), spec, TRUTH) for r in range(30)]
    assert np.mean(vals) > 0


# -- curves ------------------------------------------------------------------------


def test_energy_curve_determinism_and_sharing():
    spec = bspec(eta=0.5)
    c1 = energy_curve(spec, TRUTH, SMALL, 20, 42)
    c2 = energy_curve(spec, TRUTH, SMALL, 20, 42, workers=2)
    assert c1.values["x"].tobytes() == c2.values["x"].tobytes()
    assert c1.values["xy"].tobytes() == c2.values["xy"].tobytes()
    assert c1.to_csv() == c2.to_csv()
    ds = sample_dataset(TRUTH, spec, 40, 42, cell_task(40, 7))
    assert c1.values["x"][2, 7] == normalized_free_energy_x(ds, spec, TRUTH)


def test_energy_curve_csv_and_guards():
    spec = bspec()
    c = energy_curve(spec, TRUTH, SMALL, 20, 1, which=("xy",))
    lines = c.to_csv().splitlines()
    assert tuple(lines[0].split(",")) == CSV_COLUMNS
    assert len(lines) == 1 + 4 * 20
    assert c.complete
    assert c.provenance()["master_seed"] == 1
    with pytest.raises(DomainError):
        energy_curve(spec, TRUTH, SMALL, 19, 1)


def test_complete_evidence_matches_closed_form_in_curve():
    spec = bspec(eta=1.0)
    ds = sample_dataset(TRUTH, spec, 80, 5)
    inc = float(np.sum(np.log([0.125, 0.375, 0.375, 0.125])[ds.xs]))
    want = -log_evidence_complete(ds, spec) + inc
    assert normalized_free_energy_xy(ds, spec, TRUTH) == pytest.approx(want, abs=1e-10)


def test_empty_dataset_energies():
    spec = bspec()
    ds = Dataset([], Binomial(3), [])
    assert normalized_free_energy_x(ds, spec, TRUTH) == 0.0
    assert normalized_free_energy_xy(ds, spec, TRUTH) == 0.0


def test_brute_and_dp_energies_identical():
    spec = bspec(eta=0.25)
    ds = sample_dataset(TRUTH, spec, 14, 2)
    assert normalized_free_energy_x(ds, spec, TRUTH, "brute") == pytest.approx(
        normalized_free_energy_x(ds, spec, TRUTH, "dp"), abs=1e-10)


def test_standard_error_scaling():
    spec = bspec(eta=1.0)
    se20 = energy_curve(spec, TRUTH, SMALL, 20, 3, which=("xy",)).se("xy")
    se80 = energy_curve(spec, TRUTH, SMALL, 80, 3, which=("xy",)).se("xy")
    ratio = np.mean(se20 / se80)
    assert 1.4 <= ratio <= 2.6


# The following run at the acceptance grid and share its cached curves.


@pytest.mark.slow
@pytest.mark.parametrize("eta", [0.25, 2.0])
def test_control_variate_variance_stable(eta):
    from scipy import stats

    from singlab import acceptance

    v = acceptance._energy(eta, ("x", "xy")).values["x"]
    f = np.var(v[-1], ddof=1) / np.var(v[0], ddof=1)
    R = v.shape[1]
    assert f <= stats.f.ppf(0.99, R - 1, R - 1)


@pytest.mark.slow
@pytest.mark.parametrize("eta", [0.25, 2.0])
def test_complete_energy_dominates_on_average(eta):
    from singlab import acceptance

    c = acceptance._energy(eta, ("x", "xy"))
    assert np.all(c.mean("xy") >= c.mean("x"))


@pytest.mark.slow
def test_small_eta_lambda_ci_covers_theory():
    from singlab import acceptance

    fit = fit_lambda(acceptance._energy(0.25, ("x", "xy")), which="x")
    assert fit.ci_lo <= 0.625 <= fit.ci_hi


@pytest.mark.slow
def test_generalization_error_level():
    from singlab import acceptance

    g = generalization_error_curve(acceptance._energy(2.0, ("x", "xy")), "x")
    ng, se = g.n_mid * g.g_hat, g.n_mid * g.se
    assert np.all(g.g_hat >= -2 * g.se)
    assert np.ptp(ng) <= 2 * np.sqrt(se[np.argmax(ng)] ** 2 + se[np.argmin(ng)] ** 2)
    assert abs(np.mean(ng) - 0.75) <= 2 * np.sqrt(np.sum(se**2)) / len(se)
