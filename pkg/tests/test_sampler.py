"""Draw primitives, the two step kernels, and the chain driver."""

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import cho_factor, solve_triangular

from helpers import ZeroNormalRng, crossed_model, one_way_model, tiny_model
from probitlmm.linalg import build_precision, conditional_mean, residual_form_matrix, sigma_inverse
from probitlmm.model import ObservationSet, PriorSpec, ProbitMixedModel, RandomEffectsStructure
from probitlmm.sampler import (
    ChainState,
    RefusedRunError,
    SamplerConfig,
    draw_eta,
    draw_gamma,
    draw_truncated_normal,
    gibbs_step,
    pxda_step,
    run_chain,
)

HALF_NORMAL_MEAN = np.sqrt(2.0 / np.pi)


class TestTruncatedNormal:
    def test_standard_positive_moments(self):
        rng = np.random.default_rng(0)
        draws = np.array([draw_truncated_normal(0.0, 1.0, "positive", rng)
                          for _ in range(100_000)])
        assert np.all(draws > 0)
        se = stats.truncnorm.std(0, np.inf) / np.sqrt(draws.size)
        assert abs(draws.mean() - HALF_NORMAL_MEAN) < 4 * se

    def test_far_from_boundary(self):
        rng = np.random.default_rng(1)
        draws = np.array([draw_truncated_normal(10.0, 1.0, "positive", rng)
                          for _ in range(20_000)])
        assert abs(draws.mean() - 10.0) < 4 / np.sqrt(draws.size)

    def test_deep_tail(self):
        rng = np.random.default_rng(2)
        draws = np.array([draw_truncated_normal(-8.0, 1.0, "positive", rng)
                          for _ in range(100_000)])
        assert np.all(draws > 0)
        mean = stats.truncnorm.mean(8, np.inf, loc=-8, scale=1)
        se = stats.truncnorm.std(8, np.inf, loc=-8, scale=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - mean) < 4 * se

    def test_nonpositive_side(self):
        rng = np.random.default_rng(3)
        draws = np.array([draw_truncated_normal(2.0, 1.5, "nonpositive", rng)
                          for _ in range(50_000)])
        assert np.all(draws <= 0)
        mean = stats.truncnorm.mean(-np.inf, (0 - 2.0) / 1.5, loc=2.0, scale=1.5)
        se = stats.truncnorm.std(-np.inf, (0 - 2.0) / 1.5, loc=2.0, scale=1.5)
        assert abs(draws.mean() - mean) < 4 * se / np.sqrt(draws.size) + 1e-12

    def test_bad_arguments(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError, match="sigma"):
            draw_truncated_normal(0.0, 0.0, "positive", rng)
        with pytest.raises(ValueError, match="side"):
            draw_truncated_normal(0.0, 1.0, "above", rng)


class TestGamma:
    def test_exponential_mean(self):
        rng = np.random.default_rng(5)
        draws = np.array([draw_gamma(1.0, 2.0, rng) for _ in range(100_000)])
        se = 0.5 / np.sqrt(draws.size)
        assert abs(draws.mean() - 0.5) < 4 * se

    def test_shape_below_one(self):
        rng = np.random.default_rng(6)
        draws = np.array([draw_gamma(0.3, 1.0, rng) for _ in range(100_000)])
        assert np.all(draws > 0)
        se = np.sqrt(0.3) / np.sqrt(draws.size)
        assert abs(draws.mean() - 0.3) < 4 * se
        var_se = np.sqrt(2 * 0.3 ** 2 / draws.size) * 4  # rough moment band
        assert abs(draws.var() - 0.3) < 10 * var_se

    def test_zero_rate_rejected(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ValueError, match="positive"):
            draw_gamma(1.0, 0.0, rng)
        with pytest.raises(ValueError, match="positive"):
            draw_gamma(0.0, 1.0, rng)


class TestDrawEta:
    def test_zero_noise_returns_conditional_mean(self):
        m = one_way_model(a=1.5, b=1.0)
        pp = build_precision(m, np.array([0.8]))
        v = np.array([0.5, -1.0, 2.0, 0.1])
        got = draw_eta(pp, m, v, ZeroNormalRng())
        np.testing.assert_allclose(got, conditional_mean(pp, m, v), atol=1e-12)

    def test_moments_match_block_formulas(self):
        m = one_way_model(a=1.5, b=1.0)
        tau = np.array([0.6])
        pp = build_precision(m, tau)
        v = np.array([1.0, -0.5, 0.25, 2.0])
        rng = np.random.default_rng(8)
        draws = np.array([draw_eta(pp, m, v, rng) for _ in range(40_000)])
        mean = conditional_mean(pp, m, v)
        cov = sigma_inverse(pp)
        se_mean = np.sqrt(np.diag(cov) / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se_mean)
        emp_cov = np.cov(draws.T)
        se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2)
                         / draws.shape[0])
        assert np.all(np.abs(emp_cov - cov) < 4 * se_cov)

    def test_nonfinite_v_rejected(self):
        m = one_way_model()
        pp = build_precision(m, np.array([1.0]))
        with pytest.raises(ValueError, match="finite"):
            draw_eta(pp, m, np.array([np.nan, 0, 0, 0]), np.random.default_rng(0))


class TestGibbsStep:
    def test_latent_signs_match_responses(self):
        m = crossed_model(3, 3)
        state = ChainState(eta=np.zeros(m.p + m.q), v=np.zeros(m.n),
                           tau=np.ones(m.r))
        rng = np.random.default_rng(9)
        for _ in range(25):
            state = gibbs_step(m, state, rng)
            pos = state.v > 0
            np.testing.assert_array_equal(pos, m.obs.y == 1)

    def test_scalar_case_replays_hand_formulas(self):
        # n = p = q = 1: replay the generator stream and rebuild the draw
        # from the closed-form 2x2 precision
        X = np.array([[1.0]])
        Z = np.array([[1.0]])
        m = ProbitMixedModel(
            obs=ObservationSet(y=np.array([1]), X=X),
            re=RandomEffectsStructure(q=np.array([1]), Z=Z),
            prior=PriorSpec(a=[1.0], b=[0.5]))
        eta0 = np.array([0.4, -0.3])
        state = ChainState(eta=eta0, v=np.array([0.2]), tau=np.array([1.0]))

        new = gibbs_step(m, state, np.random.default_rng(77))

        rng = np.random.default_rng(77)
        a, b = 1.0, 0.5
        tau = rng.gamma(a + 0.5, 1.0 / (b + 0.5 * eta0[1] ** 2))
        v = draw_truncated_normal(eta0.sum(), 1.0, "positive", rng)
        sigma = np.array([[1.0, 1.0], [1.0, 1.0 + tau]])
        mean = np.linalg.solve(sigma, np.array([v, v]))
        c, low = cho_factor(sigma, lower=True)
        z = rng.standard_normal(2)
        eta = mean + solve_triangular(c, z, lower=True, trans="T")

        assert new.tau[0] == pytest.approx(tau, rel=1e-12)
        assert new.v[0] == pytest.approx(v, rel=1e-12)
        np.testing.assert_allclose(new.eta, eta, rtol=1e-10)

    def test_equal_seeds_equal_states(self):
        m = crossed_model(3, 2)
        state = ChainState(eta=np.zeros(m.p + m.q), v=np.zeros(m.n),
                           tau=np.ones(m.r))
        s1 = gibbs_step(m, state, np.random.default_rng(13))
        s2 = gibbs_step(m, state, np.random.default_rng(13))
        np.testing.assert_array_equal(s1.eta, s2.eta)
        np.testing.assert_array_equal(s1.v, s2.v)
        np.testing.assert_array_equal(s1.tau, s2.tau)

    def test_different_seeds_give_independent_streams(self):
        m = tiny_model()
        cfg_a = SamplerConfig(iterations=300, burn_in=100, thin=1, seed=100)
        cfg_b = SamplerConfig(iterations=300, burn_in=100, thin=1, seed=101)
        a, b = run_chain(m, cfg_a), run_chain(m, cfg_b)
        assert not np.array_equal(a.draws, b.draws)

    def test_nullset_guard_keeps_tau_finite(self):
        # zero random effects with b = 0 hit the undefined conditional;
        # the fallback must still produce a positive precision
        m = crossed_model(3, 3)
        state = ChainState(eta=np.zeros(m.p + m.q), v=np.zeros(m.n),
                           tau=np.ones(m.r))
        new = gibbs_step(m, state, np.random.default_rng(21))
        assert np.all(new.tau > 0) and np.all(np.isfinite(new.tau))


class TestPxdaStep:
    def test_rescale_preserves_quadratic_identity(self):
        m = tiny_model()
        state = ChainState(eta=np.array([0.3, -0.2]), v=np.ones(m.n),
                           tau=np.array([1.0]))
        seed = 31
        new = pxda_step(m, state, np.random.default_rng(seed))

        # replay the stream up to the rescale to recover (tau, v, g)
        rng = np.random.default_rng(seed)
        a, b = 1.5, 1.0
        tau = rng.gamma(a + 0.5, 1.0 / (b + 0.5 * state.eta[1] ** 2))
        v = np.array([
            draw_truncated_normal(float(m.W[i] @ state.eta), 1.0,
                                  "positive" if m.obs.y[i] == 1 else "nonpositive",
                                  rng)
            for i in range(m.n)])
        pp = build_precision(m, np.array([tau]))
        M = residual_form_matrix(pp, m)
        w = v @ M @ v
        gsq = rng.gamma(m.n / 2.0, 2.0 / w)
        np.testing.assert_allclose(new.v, np.sqrt(gsq) * v, rtol=1e-9)
        assert new.v @ M @ new.v == pytest.approx(gsq * w, rel=1e-9)

    def test_signs_preserved_by_rescale(self):
        m = crossed_model(3, 3)
        state = ChainState(eta=np.zeros(m.p + m.q), v=np.zeros(m.n),
                           tau=np.ones(m.r))
        rng = np.random.default_rng(32)
        for _ in range(25):
            state = pxda_step(m, state, rng)
            np.testing.assert_array_equal(state.v > 0, m.obs.y == 1)

    def test_rescaled_form_is_chi_square(self):
        # the rescaled quadratic form is chi-square(n) whatever (v, tau) was
        m = tiny_model()
        state = ChainState(eta=np.array([0.5, -0.1]), v=np.ones(m.n),
                           tau=np.array([2.0]))
        rng = np.random.default_rng(33)
        vals = np.empty(4000)
        for k in range(vals.size):
            out = pxda_step(m, state, rng)
            pp = build_precision(m, out.tau)
            M = residual_form_matrix(pp, m)
            vals[k] = out.v @ M @ out.v
        ks = stats.kstest(vals, "chi2", args=(m.n,))
        assert ks.statistic < 1.628 / np.sqrt(vals.size)  # 1% critical value


class TestRunChain:
    def test_retained_count_arithmetic(self):
        m = tiny_model()
        cfg = SamplerConfig(algorithm="gibbs", iterations=1000, burn_in=200,
                            thin=2, seed=3)
        out = run_chain(m, cfg)
        assert out.retained == 400
        assert out.draws.shape == (400, m.p + m.q + m.r)

    def test_bit_identical_reruns(self):
        m = tiny_model()
        for algorithm in ("gibbs", "pxda"):
            cfg = SamplerConfig(algorithm=algorithm, iterations=500, burn_in=100,
                                thin=1, seed=42)
            a = run_chain(m, cfg)
            b = run_chain(m, cfg)
            np.testing.assert_array_equal(a.draws, b.draws)

    def test_column_labels(self):
        m = crossed_model(3, 2, a=(1.0, 1.0), b=(1.0, 1.0))
        cfg = SamplerConfig(iterations=150, burn_in=10, thin=1, seed=0)
        out = run_chain(m, cfg)
        assert out.column_labels == (
            "beta_0", "u_1_1", "u_1_2", "u_1_3", "u_2_1", "u_2_2",
            "tau_1", "tau_2")

    def test_refuses_unestablished_model(self):
        m = crossed_model(3, 3, y_fn=lambda i, j: 1)  # constant responses
        cfg = SamplerConfig(iterations=200, burn_in=50, thin=1, seed=1)
        with pytest.raises(RefusedRunError):
            run_chain(m, cfg)
        out = run_chain(m, cfg, force=True)
        assert out.retained == 150

    def test_explicit_init_vector(self):
        m = tiny_model()
        cfg = SamplerConfig(iterations=200, burn_in=50, thin=1, seed=2,
                            init_eta=[3.0, -3.0])
        out = run_chain(m, cfg)
        assert out.retained == 150
        bad = SamplerConfig(iterations=200, burn_in=50, thin=1, seed=2,
                            init_eta=[1.0])
        with pytest.raises(ValueError, match="length"):
            run_chain(m, bad)

    def test_dispersed_starts_agree(self):
        # post-burn-in means from very different starting points match
        # within combined Monte Carlo error
        from probitlmm.diagnostics import batch_means

        m = tiny_model()
        cfg1 = SamplerConfig(iterations=12_000, burn_in=2000, thin=1, seed=5,
                             init_eta="zero")
        cfg2 = SamplerConfig(iterations=12_000, burn_in=2000, thin=1, seed=6,
                             init_eta=[8.0, -8.0])
        out1 = run_chain(m, cfg1)
        out2 = run_chain(m, cfg2)
        for k in range(out1.draws.shape[1]):
            m1_, m2_ = out1.draws[:, k].mean(), out2.draws[:, k].mean()
            _, e1 = batch_means(out1.draws[:, k])
            _, e2 = batch_means(out2.draws[:, k])
            assert abs(m1_ - m2_) < 4 * np.hypot(e1, e2)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="algorithm"):
            SamplerConfig(algorithm="nope", iterations=10, burn_in=1, seed=0)
        with pytest.raises(ValueError, match="burn_in"):
            SamplerConfig(iterations=10, burn_in=10, seed=0)
        with pytest.raises(ValueError, match="thin"):
            SamplerConfig(iterations=10, burn_in=1, thin=0, seed=0)

    def test_csv_export_round_trip(self, tmp_path):
        m = tiny_model()
        cfg = SamplerConfig(iterations=300, burn_in=100, thin=1, seed=7)
        out = run_chain(m, cfg)
        path = tmp_path / "draws.csv"
        out.to_csv(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data, out.draws)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(out.column_labels)
