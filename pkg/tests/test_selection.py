import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from dagsbm.graph import Dag
from dagsbm.likelihood import PriorConfig, PyParams, log_eppf, log_prior_py
from dagsbm.sampler import TuningConfig, run_chain
from dagsbm.selection import (
    EvidenceWarning,
    FinitePseudoPrior,
    InfinitePseudoPrior,
    PseudoPrior,
    bayes_factor,
    fit_pseudopriors,
    pseudopriors_from_priors,
    regime_gibbs_step,
    regime_log_weights,
)

from dagsbm.synth import draw_truncated_negbin

from conftest import batch_se, make_state, set_partitions

class PriorPseudo:
    """Pseudopriors equal to the regime priors themselves."""

    def __init__(self, pri):
        self.finite = _PriorFinite(pri)
        self.infinite = _PriorInfinite(pri)


class _PriorFinite:
    def __init__(self, pri):
        self.pri = pri

    def sample(self, rng):
        return float(rng.gamma(self.pri.gamma_shape, 1 / self.pri.gamma_rate)), draw_truncated_negbin(
            self.pri.k_a, self.pri.k_b, rng)

    def logpdf(self, gamma, k):
        return log_prior_py(PyParams.finite(gamma, int(k)), self.pri)


class _PriorInfinite:
    def __init__(self, pri):
        self.pri = pri

    def sample(self, rng):
        alpha = float(rng.random())
        return alpha, float(rng.gamma(self.pri.theta_shape, 1 / self.pri.theta_rate)) - alpha

    def logpdf(self, alpha, theta):
        return log_prior_py(PyParams.infinite(alpha, theta), self.pri)


def neutral_marginal_r1(n, pri):
    """P(r=1) with the likelihood removed, by summing the EPPF over partitions and integrating the priors."""
    parts = [np.bincount(z) for z in set_partitions(n)]

    def inf_mass(alpha, total):
        py = PyParams.infinite(alpha, total - alpha)
        return sum(math.exp(log_eppf(s, py)) for s in parts) * math.exp(log_prior_py(py, pri))

    m0, _ = integrate.dblquad(lambda t, a: inf_mass(a, t), 0, 1, 0, 60, epsabs=1e-10)
    m1 = 0.0
    for k in range(1, 80):
        def fin_mass(g):
            py = PyParams.finite(g, k)
            return sum(math.exp(log_eppf(s, py)) for s in parts) * math.exp(log_prior_py(py, pri))
        m1 += integrate.quad(fin_mass, 0, 60, epsabs=1e-12)[0]
    return pri.p_r1 * m1 / (pri.p_r1 * m1 + (1 - pri.p_r1) * m0)


PSEUDO = PseudoPrior(FinitePseudoPrior(0.0, 1.0, 1.0, 0.5), InfinitePseudoPrior(2.0, 2.0, 2.0, 1.0))


class TestBayesFactor:
    def test_examples(self):
        assert bayes_factor(0.5602, 0.2) == pytest.approx(5.094, abs=0.01)
        assert bayes_factor(0.5, 0.5) == 1.0
        assert bayes_factor(0.2, 0.2) == pytest.approx(1.0)

    @pytest.mark.parametrize("p, expect", [(1.0, math.inf), (0.0, 0.0)])
    def test_unbounded(self, p, expect):
        with pytest.warns(EvidenceWarning):
            assert bayes_factor(p, 0.99 if p else 0.5) == expect

    def test_domain(self):
        with pytest.raises(ValueError):
            bayes_factor(0.5, 1.0)
        with pytest.raises(ValueError):
            bayes_factor(1.2, 0.5)

    def test_product_identity(self, rng):
        for _ in range(200):
            p, pi = rng.uniform(0.01, 0.99, 2)
            assert abs(bayes_factor(p, pi) * bayes_factor(1 - p, 1 - pi) - 1.0) < 1e-12


class TestPseudoPriorDensities:
    def test_finite_normalized(self):
        f = PSEUDO.finite
        total, _ = integrate.quad(lambda g: math.exp(f.logpdf_gamma(g)), 0, np.inf)
        assert total == pytest.approx(1.0, abs=1e-8)
        assert sum(math.exp(f.logpmf_k(k)) for k in range(1, 200)) == pytest.approx(1.0, abs=1e-12)
        assert f.logpmf_k(0) == -math.inf and f.logpdf_gamma(0.0) == -math.inf

    def test_infinite_normalized(self):
        f = PSEUDO.infinite
        total, _ = integrate.dblquad(lambda t, a: math.exp(f.logpdf(a, t - a)), 0, 1, 0, 80)
        assert total == pytest.approx(1.0, abs=1e-7)
        assert f.logpdf(1.0, 1.0) == -math.inf

    def test_matches_scipy(self):
        from scipy import stats

        f, i = PSEUDO.finite, PSEUDO.infinite
        assert f.logpdf_gamma(1.7) == pytest.approx(stats.lognorm(1.0, scale=1.0).logpdf(1.7))
        assert f.logpmf_k(4) == pytest.approx(stats.nbinom(1.0, 0.5).logpmf(3))
        want = stats.beta(2, 2).logpdf(0.3) + stats.gamma(2.0, scale=1.0).logpdf(1.5)
        assert i.logpdf(0.3, 1.2) == pytest.approx(want)

    def test_samples_in_support(self, rng):
        for _ in range(500):
            g, k = PSEUDO.finite.sample(rng)
            a, t = PSEUDO.infinite.sample(rng)
            assert g > 0 and k >= 1 and 0 <= a < 1 and t + a > 0

    def test_json_round_trip(self, tmp_path):
        PSEUDO.save(tmp_path / "p.json")
        assert PseudoPrior.load(tmp_path / "p.json") == PSEUDO


class TestFit:
    def test_moment_recovery(self, rng):
        N = 100_000
        fin = {"gamma": np.exp(rng.normal(0.3, 0.5, N)), "k": 1 + rng.negative_binomial(3.0, 0.4, N)}
        alpha = rng.beta(2.0, 5.0, N)
        inf = {"alpha": alpha, "theta": rng.gamma(4.0, 1 / 2.0, N) - alpha}
        p = fit_pseudopriors(fin, inf)
        assert p.finite.log_gamma_loc == pytest.approx(0.3, abs=0.02)
        assert p.finite.log_gamma_scale == pytest.approx(0.5, abs=0.02)
        assert p.finite.k_b == pytest.approx(0.4, abs=0.02)
        assert p.finite.k_a == pytest.approx(3.0, rel=0.05)
        assert p.infinite.alpha_a == pytest.approx(2.0, rel=0.05)
        assert p.infinite.alpha_b == pytest.approx(5.0, rel=0.05)
        assert p.infinite.shape == pytest.approx(4.0, rel=0.05)
        assert p.infinite.rate == pytest.approx(2.0, rel=0.05)

    def test_standard_lognormal_pilot(self, rng):
        fin = {"gamma": rng.lognormal(0.0, 1.0, 100_000), "k": rng.integers(1, 6, 100_000)}
        inf = {"alpha": rng.random(100), "theta": rng.gamma(2, 1, 100)}
        p = fit_pseudopriors(fin, inf)
        assert abs(p.finite.log_gamma_loc) < 0.02 and abs(p.finite.log_gamma_scale - 1.0) < 0.02

    def test_fitted_densities_normalized(self, rng):
        fin = {"gamma": rng.gamma(3, 0.5, 2000), "k": 1 + rng.poisson(6, 2000)}
        inf = {"alpha": rng.beta(3, 4, 2000), "theta": rng.gamma(2, 1, 2000)}
        p = fit_pseudopriors(fin, inf)
        total, _ = integrate.quad(lambda g: math.exp(p.finite.logpdf_gamma(g)), 0, np.inf)
        assert abs(total - 1) < 1e-6
        assert abs(sum(math.exp(p.finite.logpmf_k(k)) for k in range(1, 2000)) - 1) < 1e-6
        total, _ = integrate.dblquad(lambda t, a: math.exp(p.infinite.logpdf(a, t - a)), 0, 1, 0, 200)
        assert abs(total - 1) < 1e-6

    def test_degenerate_pilots_warn(self):
        fin = {"gamma": np.ones(10), "k": np.full(10, 3.0)}
        inf = {"alpha": np.full(10, 0.2), "theta": np.full(10, 1.0)}
        with pytest.warns(UserWarning, match="do not vary"):
            p = fit_pseudopriors(fin, inf)
        pri = PriorConfig()
        assert (p.finite.k_a, p.finite.k_b) == (pri.k_a, pri.k_b)
        assert (p.infinite.alpha_a, p.infinite.alpha_b) == (1.0, 1.0)
        assert p.finite.log_gamma_scale > 0

    def test_nan_entries_dropped_and_empty_rejected(self, rng):
        fin = {"gamma": np.r_[np.nan, rng.gamma(2, 1, 50)], "k": np.r_[np.nan, rng.integers(1, 5, 50)]}
        inf = {"alpha": rng.random(50), "theta": rng.gamma(2, 1, 50)}
        fit_pseudopriors(fin, inf)
        with pytest.raises(ValueError):
            fit_pseudopriors({"gamma": [np.nan], "k": [np.nan]}, inf)

    def test_from_priors_mean(self):
        pri = PriorConfig(gamma_shape=2.0, gamma_rate=4.0)
        f = pseudopriors_from_priors(pri).finite
        assert math.exp(f.log_gamma_loc + f.log_gamma_scale ** 2 / 2) == pytest.approx(0.5)


class TestRegimeStep:
    def test_hand_computed_weights(self):
        pri = PriorConfig(k_a=1.0, k_b=0.5)
        p = 0.3
        la0, la1 = regime_log_weights(np.array([2, 1]), (0.5, 1.0), (1.0, 3), PSEUDO, pri, p)
        # infinite EPPF of sizes (2, 1) at alpha 0.5, theta 1 is 1/8; finite at gamma 1, k 3 is 1/5
        a0 = 0.125 * (0.01 * math.exp(-0.015)) * (0.125 / math.sqrt(2 * math.pi)) * (1 - p)
        a1 = 0.2 * (0.01 * math.exp(-0.01) * 0.125) * (1.5 * 1.5 * math.exp(-1.5)) * p
        assert la0 == pytest.approx(math.log(a0), abs=1e-12)
        assert la1 == pytest.approx(math.log(a1), abs=1e-12)

    def test_more_groups_than_k_forces_infinite(self, rng):
        st = make_state(Dag(3, []), [0, 1, 2], [0, 1, 2], alpha=0.3, theta=1.0)
        pseudo = PseudoPrior(FinitePseudoPrior(0.0, 1.0, 1.0, 1 - 1e-12), PSEUDO.infinite)
        for _ in range(20):
            assert regime_gibbs_step(st, pseudo, 0.9, rng) == 0.0
            assert st.regime == 0

    def test_probability_consistent_and_state_untouched(self, rng):
        st = make_state(Dag(5, [(0, 1), (2, 3)]), np.arange(5), [0, 0, 1, 1, 2], rng.gamma(2, 1, 5),
                        a=1.7, b=0.4, alpha=0.3, theta=1.0)
        snapshot = (st.z.copy(), st.sigma.copy(), st.xi.copy(), st.a, st.b)
        for _ in range(200):
            before = (st.regime, st.alpha, st.theta, st.gamma, st.k)
            p1 = regime_gibbs_step(st, PSEUDO, 0.4, rng)
            la0, la1 = regime_log_weights(st.sizes, (st.alpha, st.theta), (st.gamma, st.k), PSEUDO, st.priors, 0.4)
            assert p1 == pytest.approx(1 / (1 + math.exp(la0 - la1)))
            # the parameters of the regime the chain was in are not redrawn
            if before[0] == 0:
                assert (st.alpha, st.theta) == before[1:3]
            else:
                assert (st.gamma, st.k) == before[3:5]
        assert np.array_equal(st.z, snapshot[0]) and np.array_equal(st.sigma, snapshot[1])
        assert np.array_equal(st.xi, snapshot[2]) and (st.a, st.b) == snapshot[3:]
        assert st.check_counts()

    def test_symmetric_construction(self, rng):
        # one node: both EPPFs equal 1, and pseudopriors equal to the priors make the cross terms match
        pri = PriorConfig(theta_shape=2.0, theta_rate=1.0, gamma_shape=2.0, gamma_rate=1.0, k_a=2.0, k_b=0.4)
        pseudo = PriorPseudo(pri)
        la0, la1 = regime_log_weights(np.array([1]), (0.4, 0.7), (1.3, 2), pseudo, pri, 0.5)
        assert la0 == pytest.approx(la1, abs=1e-12)
        st = make_state(Dag(1, []), [0], [0], alpha=0.4, theta=0.7, priors=pri)
        assert regime_gibbs_step(st, pseudo, 0.5, rng) == pytest.approx(0.5, abs=1e-12)

    def test_bad_regime_prior(self, rng):
        st = make_state(Dag(2, []), [0, 1], [0, 0])
        with pytest.raises(ValueError):
            regime_gibbs_step(st, PSEUDO, 0.0, rng)

    @pytest.mark.parametrize("matched", [True, False])
    def test_neutralized_chain_matches_marginal(self, matched):
        pri = PriorConfig(p_r1=0.3, theta_shape=2.0, theta_rate=1.0, gamma_shape=2.0, gamma_rate=1.0,
                          k_a=2.0, k_b=0.4)
        target = neutral_marginal_r1(3, pri)
        assert target == pytest.approx(0.3, abs=1e-6)
        tu = TuningConfig(iterations=40000, prior_only=True, update_ordering=False, update_xi=False,
                          update_hyper=False, s_alpha=0.2, s_gamma=0.5, seed=11)
        pseudo = PriorPseudo(pri) if matched else PSEUDO
        recs = run_chain(Dag(3, [(0, 1)]), pri, tu, "select", pseudo=pseudo)
        r = np.array([rec.regime for rec in recs], dtype=float)
        assert abs(r.mean() - target) < 3 * batch_se(r)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            bayes_factor(r.mean(), 0.3)
