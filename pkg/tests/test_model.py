import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from singlab.exceptions import DomainError, RegularityError, SingularPointError
from singlab.model import (
    Binomial,
    Gaussian,
    MixtureParams,
    MixtureSpec,
    PriorHyper,
    TrueModel,
    complete_density,
    entropy_true,
    fisher_matrices,
    fisher_matrices_fd,
    kl_complete,
    kl_incomplete,
    mixture_density,
    reg_lv_coefficient,
)


def bspec(M, K=2, eta=1.0):
    return MixtureSpec(Binomial(M), K, PriorHyper(eta))


def random_params(rng, K=2, family="binomial", interior=True):
    a = rng.dirichlet(np.ones(K))
    b = rng.uniform(0.05, 0.95, K) if family == "binomial" else rng.normal(0, 2, K)
    return MixtureParams(a, b)


# -- mixture_density / complete_density --------------------------------------


def test_mixture_density_equal_components():
    spec = bspec(2)
    assert mixture_density(1, MixtureParams([0.5, 0.5], [0.5, 0.5]), spec) == pytest.approx(0.5, abs=1e-15)


def test_mixture_density_degenerate_weight():
    spec = bspec(4)
    p = MixtureParams([1.0, 0.0], [0.3, 0.9])
    for x in range(5):
        assert mixture_density(x, p, spec) == pytest.approx(stats.binom.pmf(x, 4, 0.3), rel=1e-14)


def test_mixture_density_two_term_sum():
    spec = bspec(5)
    p = MixtureParams([0.3, 0.7], [0.2, 0.9])
    # C(5,4) = 5
    want = 0.3 * 5 * 0.2**4 * 0.8 + 0.7 * 5 * 0.9**4 * 0.1
    assert mixture_density(4, p, spec) == pytest.approx(want, rel=1e-13)


def test_mixture_density_out_of_support():
    with pytest.raises(DomainError):
        mixture_density(3, MixtureParams([0.5, 0.5], [0.5, 0.5]), bspec(2))
    with pytest.raises(DomainError):
        mixture_density(-1, MixtureParams([0.5, 0.5], [0.5, 0.5]), bspec(2))


def test_normalization_random_params():
    rng = np.random.default_rng(11)
    spec = bspec(6)
    for _ in range(100):
        p = random_params(rng)
        total = sum(mixture_density(x, p, spec) for x in range(7))
        assert abs(total - 1) < 1e-12


def test_marginalization_random():
    rng = np.random.default_rng(12)
    spec = bspec(5, K=3)
    for _ in range(100):
        p = random_params(rng, K=3)
        x = int(rng.integers(0, 6))
        s = sum(complete_density(x, y, p, spec) for y in (1, 2, 3))
        assert abs(s - mixture_density(x, p, spec)) < 1e-14


def test_complete_density_values():
    spec = bspec(2)
    assert complete_density(1, 2, MixtureParams([1.0, 0.0], [0.5, 0.5]), spec) == 0.0
    assert complete_density(1, 1, MixtureParams([0.5, 0.5], [0.5, 0.5]), spec) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        complete_density(1, 3, MixtureParams([0.5, 0.5], [0.5, 0.5]), spec)
    with pytest.raises(DomainError):
        complete_density(1, 0, MixtureParams([0.5, 0.5], [0.5, 0.5]), spec)


def test_params_validation():
    with pytest.raises(DomainError):
        MixtureParams([0.5, 0.6], [0.1, 0.2])
    with pytest.raises(DomainError):
        TrueModel([0.5, 0.5], [0.3, 0.3])
    with pytest.raises(DomainError):
        TrueModel([1.0, 0.0], [0.3, 0.4])
    with pytest.raises(DomainError):
        PriorHyper(0.0)
    with pytest.raises(DomainError):
        Binomial(0)


def test_gaussian_density_matches_scipy():
    spec = MixtureSpec(Gaussian(), 2, PriorHyper(1.0))
    p = MixtureParams([0.4, 0.6], [-1.0, 2.0])
    x = 0.3
    want = 0.4 * stats.norm.pdf(x, -1) + 0.6 * stats.norm.pdf(x, 2)
    assert mixture_density(x, p, spec) == pytest.approx(want, rel=1e-14)


# -- divergences and entropies -------------------------------------------------


def test_kl_zero_on_true_params():
    spec = bspec(3)
    truth = TrueModel([1.0], [0.5])
    assert kl_incomplete(MixtureParams([1.0, 0.0], [0.5, 0.2]), truth, spec) < 1e-14
    assert kl_complete(MixtureParams([1.0, 0.0], [0.5, 0.2]), truth, spec) < 1e-14


def test_kl_zero_on_w2_branch():
    spec = bspec(3)
    truth = TrueModel([1.0], [0.5])
    for a in (0.1, 0.5, 0.9):
        assert kl_incomplete(MixtureParams([a, 1 - a], [0.5, 0.5]), truth, spec) < 1e-10


def test_kl_incomplete_four_term_sum():
    spec = bspec(3)
    truth = TrueModel([1.0], [0.5])
    q = stats.binom.pmf(np.arange(4), 3, 0.5)
    p = stats.binom.pmf(np.arange(4), 3, 0.25)
    want = float(np.sum(q * np.log(q / p)))
    assert kl_incomplete(MixtureParams([1.0, 0.0], [0.25, 0.7]), truth, spec) == pytest.approx(want, rel=1e-12)


def test_kl_complete_half_weight_is_ln2():
    spec = bspec(3)
    truth = TrueModel([1.0], [0.5])
    assert kl_complete(MixtureParams([0.5, 0.5], [0.5, 0.5]), truth, spec) == pytest.approx(np.log(2), abs=1e-12)


def test_kl_infinite_sentinel():
    spec = bspec(3)
    truth = TrueModel([1.0], [0.5])
    assert kl_incomplete(MixtureParams([1.0, 0.0], [0.0, 0.5]), truth, spec) == np.inf


def test_kl_dominance_random():
    rng = np.random.default_rng(13)
    spec = bspec(4)
    truth = TrueModel([0.4, 0.6], [0.2, 0.7])
    for _ in range(1000):
        p = random_params(rng)
        hx = kl_incomplete(p, truth, spec)
        hxy = kl_complete(p, truth, spec)
        assert hx >= -1e-12
        assert hxy >= hx - 1e-12


def test_zero_set_branches():
    spec = bspec(3)
    truth = TrueModel([1.0], [0.5])
    rng = np.random.default_rng(14)
    for b in rng.uniform(0.05, 0.95, 10):
        w1 = MixtureParams([1.0, 0.0], [0.5, b])
        w3 = MixtureParams([0.0, 1.0], [b, 0.5])
        w2 = MixtureParams([b, 1 - b], [0.5, 0.5])
        for p in (w1, w2, w3):
            assert kl_incomplete(p, truth, spec) < 1e-10
        assert kl_complete(w1, truth, spec) < 1e-12
        assert kl_complete(w2, truth, spec) > 1e-3
        assert kl_complete(w3, truth, spec) == np.inf


def test_gaussian_kl_matches_quad():
    spec = MixtureSpec(Gaussian(), 2, PriorHyper(1.0))
    truth = TrueModel([1.0], [0.0])
    p = MixtureParams([0.7, 0.3], [0.5, -1.0])

    def f(x):
        q = stats.norm.pdf(x)
        m = 0.7 * stats.norm.pdf(x, 0.5) + 0.3 * stats.norm.pdf(x, -1.0)
        return q * np.log(q / m)

    want = quad(f, -20, 20, epsabs=1e-13)[0]
    assert kl_incomplete(p, truth, spec) == pytest.approx(want, rel=1e-8)


def test_entropy_fair_coin():
    sx, sxy = entropy_true(TrueModel([1.0], [0.5]), bspec(1, K=1))
    assert sx == pytest.approx(np.log(2), abs=1e-15)
    assert sxy == sx


def test_entropy_six_term_sum():
    spec = bspec(5)
    truth = TrueModel([0.5, 0.5], [0.2, 0.8])
    x = np.arange(6)
    q1, q2 = stats.binom.pmf(x, 5, 0.2), stats.binom.pmf(x, 5, 0.8)
    q = 0.5 * q1 + 0.5 * q2
    sx_want = -np.sum(q * np.log(q))
    sxy_want = -np.sum(0.5 * q1 * np.log(0.5 * q1)) - np.sum(0.5 * q2 * np.log(0.5 * q2))
    sx, sxy = entropy_true(truth, spec)
    assert sx == pytest.approx(sx_want, rel=1e-13)
    assert sxy == pytest.approx(sxy_want, rel=1e-13)
    assert sxy >= sx


def test_entropy_gaussian_closed_form():
    sx, sxy = entropy_true(TrueModel([1.0], [1.5]), MixtureSpec(Gaussian(), 1, PriorHyper(1.0)))
    assert sx == pytest.approx(0.5 * np.log(2 * np.pi * np.e), rel=1e-10)
    assert sxy == sx


# -- Fisher matrices -----------------------------------------------------------


def test_fisher_k1_equal():
    spec = bspec(4, K=1)
    F = fisher_matrices(MixtureParams([1.0], [0.3]), spec)
    np.testing.assert_allclose(F.I_X, F.I_XY, rtol=1e-13)
    # binomial Fisher M / (b (1 - b))
    assert F.I_X[0, 0] == pytest.approx(4 / (0.3 * 0.7), rel=1e-12)


def test_fisher_boundary_raises():
    with pytest.raises(SingularPointError):
        fisher_matrices(MixtureParams([1.0, 0.0], [0.3, 0.5]), bspec(4))


def test_fisher_fd_agreement():
    rng = np.random.default_rng(15)
    spec = bspec(5)
    for _ in range(5):
        p = random_params(rng)
        F = fisher_matrices(p, spec)
        G = fisher_matrices_fd(p, spec)
        scale = np.abs(F.I_XY).max()
        assert np.abs(F.I_X - G.I_X).max() <= 1e-5 * scale
        assert np.abs(F.I_XY - G.I_XY).max() <= 1e-5 * scale


def test_fisher_dominance_and_symmetry():
    rng = np.random.default_rng(16)
    spec = bspec(5)
    for _ in range(50):
        F = fisher_matrices(random_params(rng), spec)
        assert F.I_X.shape == (3, 3)
        np.testing.assert_allclose(F.I_X, F.I_X.T, atol=1e-12)
        assert np.linalg.eigvalsh(F.I_XY - F.I_X).min() >= -1e-8
        assert np.linalg.eigvalsh(F.I_X).min() >= -1e-8


def test_score_mean_zero():
    from singlab.model import _scores, observation_expectation

    rng = np.random.default_rng(17)
    for fam in ("binomial", "gaussian"):
        spec = bspec(5) if fam == "binomial" else MixtureSpec(Gaussian(), 2, PriorHyper(1.0))
        for _ in range(20):
            p = random_params(rng, family=fam)
            centers = p.comps

            def integrand(x):
                ljoint, s_xy, lmix, s_x = _scores(x, p, spec)
                comp = np.einsum("nk,nkd->nd", np.exp(ljoint), s_xy)
                return np.concatenate([np.exp(lmix)[:, None] * s_x, comp], axis=1)

            m = observation_expectation(integrand, spec, centers)
            assert np.abs(m).max() < 1e-8


def test_reg_lv_k1_is_dim():
    assert reg_lv_coefficient(MixtureParams([1.0], [0.4]), bspec(4, K=1)) == pytest.approx(1.0, abs=1e-12)


def test_reg_lv_trace_label_swap():
    spec = bspec(8)
    p = MixtureParams([0.3, 0.7], [0.2, 0.8])
    t = reg_lv_coefficient(p, spec)
    assert t >= spec.dim
    assert reg_lv_coefficient(p.swapped([1, 0]), spec) == pytest.approx(t, rel=1e-9)


def test_reg_lv_singular_point():
    with pytest.raises((RegularityError, SingularPointError)):
        reg_lv_coefficient(MixtureParams([0.5, 0.5], [0.5, 0.5]), bspec(3))
