import math
import statistics

import numpy as np
import pytest

from zicount.baselines import BetaBin, BetaNegBin, NegBin, Poisson
from zicount.fisher import (
    BoundaryError,
    FisherMatrix,
    SingularFisherError,
    confidence_intervals,
    expected_trigamma_term,
    fisher_information,
    normal_quantile,
    score_covariance,
    score_mean,
    standard_errors,
)
from zicount.fit import fit_hurdle, fit_zero_inflated
from zicount.specfun import trigamma
from zicount.zero_models import Kind, ZeroModifiedModel

PH_GRID = [(phi, lam) for phi in (0.1, 0.5, 0.85) for lam in (0.3, 2.0, 15.0)]
NB_GRID = [(phi, r, p) for phi, r, p in zip((0.1, 0.5, 0.85) * 3, (0.4, 2.0, 9.0) * 3,
                                           (0.2,) * 3 + (0.5,) * 3 + (0.85,) * 3)]


def hurdle(base, phi):
    return ZeroModifiedModel(base, Kind.HURDLE, phi)


def inflated(base, phi):
    return ZeroModifiedModel(base, Kind.ZI, phi)


class TestClosedForms:
    def test_poisson_hurdle_example(self):
        info = fisher_information(hurdle(Poisson(1.0), 0.5)).matrix
        np.testing.assert_allclose(info, [[4.0, 0.0], [0.0, 0.33065156]], atol=1e-8)

    @pytest.mark.parametrize("phi,lam", PH_GRID)
    def test_poisson_hurdle_closed_vs_numeric(self, phi, lam):
        m = hurdle(Poisson(lam), phi)
        closed = fisher_information(m, method="closed").matrix
        numeric = fisher_information(m, method="numeric").matrix
        np.testing.assert_allclose(closed, numeric, rtol=1e-6)

    @pytest.mark.parametrize("phi,r,p", NB_GRID)
    def test_negbin_hurdle_closed_vs_numeric(self, phi, r, p):
        m = hurdle(NegBin(r, p), phi)
        closed = fisher_information(m, method="closed").matrix
        numeric = fisher_information(m, method="numeric").matrix
        np.testing.assert_allclose(closed, numeric, rtol=1e-6, atol=1e-10)

    @pytest.mark.parametrize("phi,lam", PH_GRID)
    def test_zip_closed_vs_numeric(self, phi, lam):
        m = inflated(Poisson(lam), phi)
        closed = fisher_information(m, method="closed").matrix
        numeric = fisher_information(m, method="numeric").matrix
        np.testing.assert_allclose(closed, numeric, rtol=1e-6, atol=1e-12)

    @pytest.mark.parametrize("base", [Poisson(2.0), NegBin(1.5, 0.4), BetaBin(10, 1.2, 2.0),
                                      BetaNegBin(3.0, 4.0, 2.0)])
    def test_hurdle_is_block_diagonal(self, base):
        info = fisher_information(hurdle(base, 0.3)).matrix
        assert np.all(info[0, 1:] == 0.0) and np.all(info[1:, 0] == 0.0)

    def test_zip_without_inflation_reduces_to_poisson(self):
        lam = 2.5
        info = fisher_information(inflated(Poisson(lam), 0.0)).matrix
        assert info[1, 1] == pytest.approx(1.0 / lam, rel=1e-14)
        assert info[0, 0] == pytest.approx((1 - math.exp(-lam)) / math.exp(-lam), rel=1e-12)

    def test_zi_equals_hurdle_without_baseline_zeros(self):
        base = Poisson(800.0)
        a = fisher_information(hurdle(base, 0.3)).matrix
        b = fisher_information(inflated(base, 0.3)).matrix
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)

    @pytest.mark.parametrize("lam", np.logspace(-3, 2, 30))
    def test_truncated_poisson_information_positive(self, lam):
        assert 1 / lam - math.exp(-lam) / -math.expm1(-lam) > 0

    def test_scaling_by_n(self):
        m = inflated(NegBin(2.0, 0.5), 0.2)
        per = fisher_information(m)
        total = fisher_information(m, 250)
        np.testing.assert_allclose(total.matrix, 250 * per.matrix, rtol=1e-15)
        np.testing.assert_allclose(per.scaled(10).matrix, total.scaled(10).matrix, rtol=1e-14)


class TestInformationIdentity:
    MODELS = [
        hurdle(Poisson(1.7), 0.4), inflated(Poisson(1.7), 0.4),
        hurdle(NegBin(1.3, 0.45), 0.25), inflated(NegBin(1.3, 0.45), 0.25),
        hurdle(BetaBin(12.0, 1.5, 2.5), 0.3), inflated(BetaBin(12.0, 1.5, 2.5), 0.3),
        hurdle(BetaNegBin(3.0, 5.0, 2.0), 0.35), inflated(BetaNegBin(3.0, 5.0, 2.0), 0.35),
    ]

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label)
    def test_expected_hessian_equals_score_covariance(self, model):
        info = fisher_information(model, method="numeric").matrix
        cov = score_covariance(model)
        if model.baseline.family == "bb":
            # the identity needs a parameter-free support, which excludes n
            info, cov = (np.delete(np.delete(a, 1, 0), 1, 1) for a in (info, cov))
        np.testing.assert_allclose(info, cov, rtol=1e-5, atol=1e-8)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label)
    def test_score_has_mean_zero(self, model):
        mean = score_mean(model)
        if model.baseline.family == "bb":
            # the support of the baseline depends on n, so its score does not average to zero
            mean = np.delete(mean, 1)
        assert np.max(np.abs(mean)) <= 1e-8


class TestTrigammaTerm:
    def test_positive(self):
        for r in (0.1, 1.0, 20.0):
            for p in (0.05, 0.5, 0.95):
                assert expected_trigamma_term(NegBin(r, p)) > 0

    def test_vanishes_when_mass_at_zero(self):
        for p in (1e-4, 1e-6, 1e-8):
            nb = NegBin(2.0, p)
            a = expected_trigamma_term(nb)
            # one nonzero term dominates: f(1) (Psi_1(r) - Psi_1(r + 1)) = f(1) / r^2
            f1 = math.exp(nb.log_pmf(1))
            assert a == pytest.approx(f1 / 4.0, rel=1e-3)

    def test_monte_carlo(self):
        nb = NegBin(1.7, 0.4)
        draws = nb.sample(400_000, 9)
        vals = trigamma(1.7) - trigamma(draws + 1.7)
        mc, se = vals.mean(), vals.std() / math.sqrt(vals.size)
        assert abs(expected_trigamma_term(nb) - mc) <= 4 * se


class TestWald:
    def test_phi_standard_error(self):
        fit = fit_hurdle("poisson", [0] * 50 + [1, 2, 3, 4, 5] * 10)
        assert fit.phi == 0.5
        assert standard_errors(fit)["phi"] == pytest.approx(0.05, rel=1e-14)

    def test_normal_quantile(self):
        assert normal_quantile(0.95) == pytest.approx(1.959964, abs=1e-6)
        assert normal_quantile(0.95) == pytest.approx(statistics.NormalDist().inv_cdf(0.975), rel=1e-12)
        with pytest.raises(ValueError):
            normal_quantile(1.0)

    def test_intervals(self):
        fit = fit_hurdle("nb", NegBin(2.0, 0.5).sample(400, 3).tolist() + [0] * 100)
        cis = confidence_intervals(fit, 0.9)
        z = statistics.NormalDist().inv_cdf(0.95)
        for ci in cis:
            assert ci.lower == pytest.approx(ci.estimate - z * ci.se, rel=1e-12)
            assert ci.upper == pytest.approx(ci.estimate + z * ci.se, rel=1e-12)
            assert ci.level == 0.9
        assert [ci.name for ci in cis] == ["phi", "r", "p"]

    def test_boundary_phi_suppresses_intervals(self):
        fit = fit_hurdle("poisson", [1, 2, 3, 1])
        with pytest.raises(BoundaryError):
            standard_errors(fit)
        fit = fit_zero_inflated("poisson", [1, 2, 3, 1, 2])
        assert fit.phi == 0.0
        with pytest.raises(BoundaryError):
            confidence_intervals(fit)

    def test_singular_matrix(self):
        with pytest.raises(SingularFisherError):
            FisherMatrix(np.array([[1.0, 1.0], [1.0, 1.0]]), ("a", "b")).covariance()

    def test_hurdle_information_undefined_on_boundary(self):
        with pytest.raises(BoundaryError):
            fisher_information(hurdle(Poisson(1.0), 0.0))
        with pytest.raises(BoundaryError):
            fisher_information(inflated(Poisson(1.0), 1.0))
