import numpy as np
import pytest

from gcdp.distribution import JointSample
from gcdp.errors import ValidationError
from gcdp.oracles import (
    brute_cat_posterior,
    composed_transition,
    conjugate_gauss_posterior,
    transition_matrix,
)
from gcdp.process import (
    cat_posterior_theta,
    gauss_posterior_coeffs,
    marginal_theta,
    one_hot,
    posterior_arrays,
    posterior_from_clean,
    posterior_params,
    q_marginal_params,
    q_step,
    q_step_arrays,
    step_theta,
)
from gcdp.schedules import NoiseSchedule

from conftest import random_schedule


class TestQStep:
    def test_vanishing_noise_keeps_state(self):
        beta = np.full(3, 1e-12)
        sched = NoiseSchedule(beta_gauss=beta, beta_cat=beta, check_terminal=False)
        z = JointSample(x=np.array([0.4, -0.9]), y=np.array([1, 3, 2]))
        rng = np.random.default_rng(0)
        for _ in range(200):
            zt = q_step(z, 1, sched, rng, n_classes=3)
            assert np.allclose(zt.x, z.x, atol=1e-5)
            assert np.array_equal(zt.y, z.y)

    def test_full_mixing_kernel_is_uniform(self):
        # beta = 1 is validated off in schedules; the kernel itself is testable
        theta = step_theta(np.array([2, 1]), beta_c=1.0, n_classes=4)
        assert np.allclose(theta, 0.25)

    def test_binary_flip_probability(self):
        beta = np.array([0.5, 0.5])
        sched = NoiseSchedule(beta_gauss=beta, beta_cat=beta, check_terminal=False)
        n = 100_000
        rng = np.random.default_rng(1)
        _, y_t = q_step_arrays(np.zeros((n, 1)), np.ones((n, 1), dtype=int), 1, sched, rng, 2)
        p_hat = (y_t == 1).mean()
        assert abs(p_hat - 0.75) < 3 * np.sqrt(0.75 * 0.25 / n)

    def test_rejects_out_of_range_t(self):
        sched = NoiseSchedule(beta_gauss=np.array([0.5]), beta_cat=np.array([0.5]), check_terminal=False)
        z = JointSample(x=np.zeros(1), y=np.array([1]))
        with pytest.raises(ValidationError):
            q_step(z, 2, sched, np.random.default_rng(0), 2)
        with pytest.raises(ValidationError):
            q_step(z, 0, sched, np.random.default_rng(0), 2)


class TestMarginal:
    def test_gaussian_coefficients(self):
        # alphabar = 0.25 at t=2 via beta = [0.5, 0.5]
        beta = np.array([0.5, 0.5])
        sched = NoiseSchedule(beta_gauss=beta, beta_cat=beta, check_terminal=False)
        z0 = JointSample(x=np.array([1.0]), y=np.array([1]))
        params = q_marginal_params(z0, 2, sched, n_classes=2)
        assert params.mu[0] == pytest.approx(0.5, abs=1e-15)
        assert params.var[0] == pytest.approx(0.75, abs=1e-15)

    def test_categorical_mixture(self):
        theta = marginal_theta(np.array([1]), abar_c=0.5, n_classes=2)
        assert np.allclose(theta, [[0.75, 0.25]])

    def test_induction_matches_transition_products(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            k = int(rng.integers(2, 6))
            total = int(rng.integers(1, 11))
            sched = random_schedule(rng, total)
            t = int(rng.integers(1, total + 1))
            prod = composed_transition(sched.alpha_cat[:t], k)
            closed = transition_matrix(sched.abar_cat(t), k)
            assert np.max(np.abs(prod - closed)) < 1e-12
            y0 = int(rng.integers(1, k + 1))
            row = marginal_theta(np.array([y0]), sched.abar_cat(t), k)[0]
            assert np.max(np.abs(prod[y0 - 1] - row)) < 1e-12

    def test_chained_steps_reproduce_marginal(self):
        rng = np.random.default_rng(3)
        sched = random_schedule(rng, 5)
        k, x0, y0 = 3, 0.7, 2
        n = 100_000
        x = np.full((n, 1), x0)
        y = np.full((n, 1), y0)
        for t in range(1, 6):
            x, y = q_step_arrays(x, y, t, sched, rng, k)
        abar = sched.abar_gauss(5)
        mean_true, var_true = np.sqrt(abar) * x0, 1 - abar
        assert abs(x.mean() - mean_true) < 3 * np.sqrt(var_true / n)
        assert abs(x.var(ddof=1) - var_true) < 3 * var_true * np.sqrt(2 / (n - 1))
        # categorical side is exact: compare frequencies against the matrix product
        probs = composed_transition(sched.alpha_cat[:5], k)[y0 - 1]
        freq = np.array([(y == c).mean() for c in range(1, k + 1)])
        assert np.all(np.abs(freq - probs) < 3 * np.sqrt(probs * (1 - probs) / n))


class TestPosterior:
    def test_worked_three_class_example(self):
        theta = cat_posterior_theta(one_hot(np.array([1]), 3), np.array([2]), 0.9, 0.5, 3)
        assert np.allclose(theta, [[0.121212, 0.848485, 0.030303]], atol=1e-6)

    def test_vanishing_beta_collapses_to_current_state(self):
        beta = np.array([0.5, 1e-13])
        sched = NoiseSchedule(beta_gauss=beta, beta_cat=beta, check_terminal=False)
        c0, ct, var = gauss_posterior_coeffs(2, 1, sched)
        assert abs(c0) < 1e-9
        assert ct == pytest.approx(1.0, abs=1e-9)
        assert var < 1e-9

    def test_no_prior_noise_gives_one_hot(self):
        theta0 = one_hot(np.array([3]), 4)
        theta = cat_posterior_theta(theta0, np.array([1]), alpha_eff=0.7, abar_s=1.0, n_classes=4)
        assert np.array_equal(theta, theta0)

    def test_matches_bayes_enumeration_and_conjugate_form(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            k = int(rng.integers(2, 6))
            total = int(rng.integers(2, 12))
            sched = random_schedule(rng, total)
            t = int(rng.integers(2, total + 1))
            y0, y_t = int(rng.integers(1, k + 1)), int(rng.integers(1, k + 1))
            x0, x_t = rng.standard_normal(2)
            z_t = JointSample(x=np.array([x_t]), y=np.array([y_t]))
            post = posterior_params(np.array([x0]), one_hot(np.array([y0]), k), z_t, t, sched)
            ref = brute_cat_posterior(y_t, y0, float(sched.alpha_cat[t - 1]), sched.abar_cat(t - 1), k)
            mu_ref, var_ref = conjugate_gauss_posterior(
                x_t, x0, float(sched.alpha_gauss[t - 1]), sched.abar_gauss(t - 1)
            )
            assert np.max(np.abs(post.theta[0] - ref)) < 1e-10
            assert abs(post.mu[0] - mu_ref) < 1e-10 * max(1.0, abs(mu_ref))
            assert abs(post.var[0] - var_ref) < 1e-10

    def test_predicted_pmf_enters_linearly(self):
        rng = np.random.default_rng(5)
        k = 4
        theta0 = rng.dirichlet(np.ones(k), size=2)
        y_t = np.array([1, 3])
        mixed = cat_posterior_theta(theta0, y_t, 0.8, 0.6, k)
        # expectation of one-hot posteriors under theta0, renormalized
        expected = np.zeros_like(mixed)
        for i in range(2):
            acc = np.zeros(k)
            for y0 in range(1, k + 1):
                like = 0.8 * one_hot(np.array([y_t[i]]), k)[0] + 0.2 / k
                prior = 0.6 * one_hot(np.array([y0]), k)[0] + 0.4 / k
                acc += theta0[i, y0 - 1] * like * prior
            expected[i] = acc / acc.sum()
        assert np.allclose(mixed, expected, atol=1e-12)

    def test_rows_are_valid_pmfs(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            k = int(rng.integers(2, 7))
            m = int(rng.integers(1, 6))
            theta = cat_posterior_theta(
                rng.dirichlet(np.ones(k), size=m),
                rng.integers(1, k + 1, m),
                float(rng.uniform(0.01, 0.99)),
                float(rng.uniform(0.01, 0.99)),
                k,
            )
            assert np.all(theta >= 0)
            assert np.allclose(theta.sum(axis=-1), 1.0, atol=1e-12)

    def test_rejects_t_below_two(self):
        sched = NoiseSchedule(beta_gauss=np.array([0.5, 0.5]), beta_cat=np.array([0.5, 0.5]), check_terminal=False)
        z = JointSample(x=np.zeros(1), y=np.array([1]))
        with pytest.raises(ValidationError):
            posterior_params(np.zeros(1), one_hot(np.array([1]), 2), z, 1, sched)

    def test_posterior_from_clean_wrapper(self):
        rng = np.random.default_rng(7)
        sched = random_schedule(rng, 4)
        z0 = JointSample(x=rng.standard_normal(3), y=rng.integers(1, 4, 2))
        z_t = JointSample(x=rng.standard_normal(3), y=rng.integers(1, 4, 2))
        a = posterior_from_clean(z0, z_t, 3, sched, 3)
        b = posterior_params(z0.x, one_hot(z0.y, 3), z_t, 3, sched)
        assert np.array_equal(a.theta, b.theta) and np.array_equal(a.mu, b.mu)


class TestStride:
    def test_one_step_stride_equals_single_step(self):
        rng = np.random.default_rng(8)
        sched = random_schedule(rng, 6)
        x0 = rng.standard_normal(2)
        th0 = rng.dirichlet(np.ones(3), size=2)
        x_t = rng.standard_normal(2)
        y_t = rng.integers(1, 4, 2)
        z_t = JointSample(x=x_t, y=y_t)
        mu, var, theta = posterior_arrays(x0, th0, x_t, y_t, 4, 3, sched, 3)
        one = posterior_params(x0, th0, z_t, 4, sched)
        assert np.array_equal(mu, one.mu)
        # the params type renormalizes rows on construction (one-ulp drift)
        assert np.allclose(theta, one.theta, atol=1e-15)
        assert np.allclose(var, one.var[0])

    def test_categorical_stride_composes_skipped_steps(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            k = int(rng.integers(2, 5))
            total = int(rng.integers(3, 12))
            sched = random_schedule(rng, total)
            t = int(rng.integers(2, total + 1))
            s = int(rng.integers(1, t))
            composed = composed_transition(sched.alpha_cat[s:t], k)
            effective = transition_matrix(sched.abar_cat(t) / sched.abar_cat(s), k)
            assert np.max(np.abs(composed - effective)) < 1e-10

    def test_gaussian_stride_preserves_marginal(self):
        # if x_t ~ q(x_t|x0) and x_s ~ posterior(t->s), then x_s ~ q(x_s|x0)
        rng = np.random.default_rng(10)
        for _ in range(100):
            total = int(rng.integers(3, 12))
            sched = random_schedule(rng, total)
            t = int(rng.integers(2, total + 1))
            s = int(rng.integers(1, t))
            c0, ct, var = gauss_posterior_coeffs(t, s, sched)
            abar_t, abar_s = sched.abar_gauss(t), sched.abar_gauss(s)
            x0 = float(rng.standard_normal())
            mean_s = c0 * x0 + ct * np.sqrt(abar_t) * x0
            var_s = ct * ct * (1 - abar_t) + var
            assert mean_s == pytest.approx(np.sqrt(abar_s) * x0, abs=1e-12)
            assert var_s == pytest.approx(1 - abar_s, abs=1e-12)

    def test_invalid_stride_targets(self):
        rng = np.random.default_rng(11)
        sched = random_schedule(rng, 5)
        x0 = np.zeros(1)
        th0 = one_hot(np.array([1]), 2)
        with pytest.raises(ValidationError):
            posterior_arrays(x0, th0, x0, np.array([1]), 3, 3, sched, 2)
        with pytest.raises(ValidationError):
            posterior_arrays(x0, th0, x0, np.array([1]), 3, 0, sched, 2)


def test_one_hot_rejects_out_of_range():
    with pytest.raises(ValidationError):
        one_hot(np.array([0]), 3)
    with pytest.raises(ValidationError):
        one_hot(np.array([4]), 3)
