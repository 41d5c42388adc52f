import numpy as np
import pytest
import scipy.optimize as so
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from gpexperts.errors import InvalidArgumentError, NumericalFailureError
from gpexperts.gp import (
    Dataset,
    FitOptions,
    GaussianPrediction,
    Space,
    default_init,
    fit,
    gaussian_nlpd,
    lift_to_y,
    lml_and_grad,
    lml_gradient,
    log_marginal_likelihood,
    maximize,
    nlpd,
    predict,
    train_gp,
)
from gpexperts.numerics import Hyperparameters, kernel_matrix

LOG_2PI = np.log(2 * np.pi)


def raw(X, y):
    """Dataset with identity standardization, for hand-computed instances."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return Dataset(X, y, np.zeros(X.shape[1]), np.ones(X.shape[1]))


def direct_lml(data, h):
    K = kernel_matrix(data.X, data.X, h) + h.noise_var * np.eye(data.n)
    return multivariate_normal(np.zeros(data.n), K).logpdf(data.y)


def finite_diff(f, theta, eps=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = eps
        g[i] = (f(theta + e) - f(theta - e)) / (2 * eps)
    return g


def gp_draw(rng, n, ell, sf, sn, lo=-5.0, hi=5.0):
    x = np.sort(rng.uniform(lo, hi, n))
    h = Hyperparameters.from_values([ell], sf, sn)
    K = kernel_matrix(x[:, None], x[:, None], h) + 1e-10 * np.eye(n)
    f = np.linalg.cholesky(K) @ rng.standard_normal(n)
    return x, f, f + sn * rng.standard_normal(n)


class TestDataset:
    def test_standardization_round_trip(self, rng):
        X = rng.normal(3.0, 2.0, (10, 2))
        y = rng.normal(-1.0, 5.0, 10)
        d = Dataset.from_raw(X, y)
        np.testing.assert_allclose(d.X.mean(0), 0, atol=1e-12)
        np.testing.assert_allclose(d.X.std(0), 1, atol=1e-12)
        np.testing.assert_allclose(d.raw_X(), X, atol=1e-12)
        np.testing.assert_allclose(d.raw_y(), y, atol=1e-12)

    def test_statistics_from_fit_rows_only(self, rng):
        X = rng.standard_normal((20, 1))
        y = rng.standard_normal(20)
        X[15:] += 100.0
        d = Dataset.from_raw(X, y, fit_rows=np.arange(15))
        assert d.feature_means[0] == pytest.approx(X[:15, 0].mean())
        assert d.target_std == pytest.approx(y[:15].std())

    def test_constant_column_warns_and_clamps(self):
        X = np.column_stack([np.ones(5), np.arange(5.0)])
        with pytest.warns(UserWarning, match="constant"):
            d = Dataset.from_raw(X, np.arange(5.0))
        assert d.feature_stds[0] == 1.0
        assert np.all(np.isfinite(d.X))

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidArgumentError):
            raw([[0.0], [np.nan]], [0.0, 1.0])
        with pytest.raises(InvalidArgumentError):
            raw([[0.0], [1.0]], [0.0])

    def test_default_init(self, rng):
        X = rng.normal(0, [1.0, 3.0], (200, 2))
        h = default_init(X)
        np.testing.assert_allclose(h.lengthscales, X.std(0))
        assert h.log_signal_std == 0.0
        assert h.noise_var == pytest.approx(0.01)


class TestLogMarginalLikelihood:
    tiny_noise = Hyperparameters.from_values([1.0], 1.0, 1e-9)

    def test_standard_normal_at_zero(self):
        assert log_marginal_likelihood(raw([[0.0]], [0.0]), self.tiny_noise) == pytest.approx(-0.5 * LOG_2PI,
                                                                                              abs=1e-12)

    def test_standard_normal_at_one(self):
        value = log_marginal_likelihood(raw([[0.0]], [1.0]), self.tiny_noise)
        assert value == pytest.approx(-0.5 - 0.5 * LOG_2PI, abs=1e-12)
        assert value == pytest.approx(-1.41894, abs=1e-5)

    def test_two_point_bivariate_density(self):
        h = Hyperparameters.from_values([1.0], 1.0, 0.5)
        d = raw([[0.0], [1.0]], [0.3, -0.7])
        k = np.exp(-0.5)
        C = np.array([[1.25, k], [k, 1.25]])
        r = d.y
        expected = -0.5 * r @ np.linalg.solve(C, r) - 0.5 * np.log(np.linalg.det(C)) - LOG_2PI
        assert log_marginal_likelihood(d, h) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_multivariate_normal(self, seed):
        rng = np.random.default_rng(seed)
        d = raw(rng.standard_normal((15, 3)), rng.standard_normal(15))
        h = Hyperparameters(rng.normal(0, 0.5, 3), rng.normal(0, 0.3), rng.normal(-1, 0.3))
        assert log_marginal_likelihood(d, h) == pytest.approx(direct_lml(d, h), rel=1e-10)

    @settings(max_examples=30)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        X, y = rng.standard_normal((12, 2)), rng.standard_normal(12)
        h = Hyperparameters.from_values([0.8, 1.5], 1.2, 0.3)
        perm = rng.permutation(12)
        a = log_marginal_likelihood(raw(X, y), h)
        b = log_marginal_likelihood(raw(X[perm], y[perm]), h)
        assert a == pytest.approx(b, rel=1e-11, abs=1e-11)


class TestGradient:
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        d = raw(rng.standard_normal((20, 3)), rng.standard_normal(20))
        h = Hyperparameters(rng.normal(0, 0.4, 3), rng.normal(0, 0.3), rng.normal(-1, 0.3))
        fd = finite_diff(lambda t: log_marginal_likelihood(d, Hyperparameters.from_vector(t)), h.to_vector())
        g = lml_gradient(d, h)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-6)

    def test_value_consistent(self, rng):
        d = raw(rng.standard_normal((10, 2)), rng.standard_normal(10))
        h = Hyperparameters.from_values([1.0, 2.0], 1.0, 0.2)
        value, grad = lml_and_grad(d, h)
        assert value == log_marginal_likelihood(d, h)
        np.testing.assert_array_equal(grad, lml_gradient(d, h))

    def test_constant_dimension_has_zero_gradient(self, rng):
        X = np.column_stack([rng.standard_normal(10), np.full(10, 0.7)])
        d = raw(X, rng.standard_normal(10))
        g = lml_gradient(d, Hyperparameters.from_values([1.0, 0.5], 1.0, 0.1))
        assert g[1] == 0.0

    def test_noise_stationary_at_slice_maximum(self, rng):
        d = raw(rng.standard_normal((25, 1)), rng.standard_normal(25))
        base = Hyperparameters.from_values([1.0], 1.0, 0.1)

        def negative(log_sn):
            return -log_marginal_likelihood(d, Hyperparameters(base.log_lengthscales, 0.0, log_sn))

        res = so.minimize_scalar(negative, bounds=(-6, 2), method="bounded", options={"xatol": 1e-12})
        g = lml_gradient(d, Hyperparameters(base.log_lengthscales, 0.0, res.x))
        assert abs(g[-1]) < 1e-6


class TestFit:
    def test_recovers_generating_hyperparameters(self):
        rng = np.random.default_rng(7)
        x, _, y = gp_draw(rng, 100, 1.0, 1.0, 0.1)
        res = fit(raw(x, y))
        np.testing.assert_allclose(res.hyp.to_vector(), np.log([1.0, 1.0, 0.1]), atol=0.5)

    def test_fixed_point(self, rng):
        x, _, y = gp_draw(rng, 40, 1.0, 1.0, 0.2)
        d = raw(x, y)
        first = fit(d)
        again = fit(d, init=first.hyp)
        np.testing.assert_allclose(again.hyp.to_vector(), first.hyp.to_vector(), atol=1e-4)
        assert np.linalg.norm(lml_gradient(d, again.hyp)) < 1e-3
        assert again.lml >= first.lml - 1e-9

    def test_trace_non_decreasing(self, rng):
        x, _, y = gp_draw(rng, 60, 0.7, 1.5, 0.1)
        res = fit(raw(x, y))
        assert len(res.trace) >= 2
        assert np.all(np.diff(res.trace) >= -1e-9)
        assert res.lml >= res.trace[0]

    def test_restarts_never_worse(self, rng):
        x = np.sort(rng.uniform(-1, 1, 150))
        y = np.sin(12 * x) + 0.66 * np.cos(25 * x) + 0.1 * rng.standard_normal(150)
        d = Dataset.from_raw(x[:, None], y)
        single = fit(d)
        multi = fit(d, opts=FitOptions(lengthscale_restarts=(0.1,)))
        assert multi.lml >= single.lml
        assert multi.n_eval > single.n_eval

    def test_invalid_restart_factor(self):
        with pytest.raises(InvalidArgumentError):
            FitOptions(lengthscale_restarts=(0.0,))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(InvalidArgumentError):
            fit(raw(rng.standard_normal((5, 2)), rng.standard_normal(5)), init=Hyperparameters.from_values([1.0], 1, 1))

    def test_objective_failing_everywhere_raises(self):
        def broken(h):
            raise NumericalFailureError("no")

        with pytest.raises(NumericalFailureError):
            maximize(broken, Hyperparameters.from_values([1.0], 1.0, 0.1))

    def test_failed_region_is_avoided(self):
        # a concave bowl with a hole; the optimizer should still find the peak
        target = np.array([0.5, 0.2, -1.0])

        def f(h):
            t = h.to_vector()
            if t[0] > 2.0:
                raise NumericalFailureError("hole")
            return -np.sum((t - target) ** 2), -2 * (t - target)

        res = maximize(f, Hyperparameters.from_values([1.0], 1.0, 0.1))
        np.testing.assert_allclose(res.hyp.to_vector(), target, atol=1e-4)


class TestPredict:
    def test_interpolates_training_input(self):
        d = raw([[0.0], [1.0], [2.5]], [0.4, -1.0, 2.0])
        gp = train_gp(d, Hyperparameters.from_values([1.0], 1.0, 1e-6))
        p = predict(gp, [[1.0]])
        assert p.mean[0] == pytest.approx(-1.0, abs=1e-4)
        assert p.variance[0] < 1e-4

    def test_far_field_reverts_to_prior(self):
        d = raw([[0.0], [1.0]], [1.0, -1.0])
        gp = train_gp(d, Hyperparameters.from_values([1.0], 1.7, 0.1))
        p = predict(gp, [[1e3]])
        assert abs(p.mean[0]) < 1e-6
        assert p.variance[0] == pytest.approx(1.7 ** 2, abs=1e-6)

    def test_two_point_formula(self):
        sf2, sn2, ell = 1.5 ** 2, 0.3 ** 2, 0.8
        X = np.array([[0.0], [1.0]])
        y = np.array([0.5, -0.2])
        xs = 0.4
        k = lambda a, b: sf2 * np.exp(-0.5 * (a - b) ** 2 / ell ** 2)
        k01 = k(0.0, 1.0)
        a, c = sf2 + sn2, k01
        det = a * a - c * c
        Kinv = np.array([[a, -c], [-c, a]]) / det
        ks = np.array([k(0.0, xs), k(1.0, xs)])
        mean = ks @ Kinv @ y
        var = sf2 - ks @ Kinv @ ks
        gp = train_gp(raw(X, y), Hyperparameters.from_values([ell], 1.5, 0.3))
        pf = predict(gp, [[xs]])
        py = predict(gp, [[xs]], Space.Y_SPACE)
        assert pf.mean[0] == pytest.approx(mean, abs=1e-12)
        assert pf.variance[0] == pytest.approx(var, abs=1e-12)
        assert py.variance[0] == pytest.approx(var + sn2, abs=1e-12)
        assert py.space is Space.Y_SPACE

    @settings(max_examples=25)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_variance_bounds(self, seed):
        rng = np.random.default_rng(seed)
        d = raw(rng.uniform(-2, 2, (15, 2)), rng.standard_normal(15))
        h = Hyperparameters(rng.normal(0, 0.5, 2), rng.normal(0, 0.5), rng.normal(-2, 1))
        gp = train_gp(d, h)
        Xs = rng.uniform(-4, 4, (30, 2))
        pf = predict(gp, Xs)
        py = predict(gp, Xs, Space.Y_SPACE)
        assert np.all(pf.variance >= 0)
        assert np.all(pf.variance <= h.signal_var + 1e-10)
        assert np.all(py.variance >= h.noise_var - 1e-12)

    def test_alpha_solves_system(self, rng):
        d = raw(rng.standard_normal((30, 2)), rng.standard_normal(30))
        h = Hyperparameters.from_values([1.0, 0.7], 1.1, 0.2)
        gp = train_gp(d, h)
        Ky = kernel_matrix(d.X, d.X, h) + h.noise_var * np.eye(d.n)
        assert np.linalg.norm(Ky @ gp.alpha - d.y) <= 1e-8 * np.linalg.norm(d.y)

    def test_training_fit_on_noiseless_data(self):
        rng = np.random.default_rng(3)
        x, f, _ = gp_draw(rng, 60, 1.0, 1.0, 0.1)
        d = raw(x, f)
        res = fit(d)
        gp = train_gp(d, res.hyp)
        resid = predict(gp, d.X).mean - f
        assert np.sqrt(np.mean(resid ** 2)) <= np.sqrt(res.hyp.noise_var) * 1.05

    def test_one_dimensional_input_handling(self, rng):
        gp1 = train_gp(raw(rng.standard_normal((5, 1)), rng.standard_normal(5)),
                       Hyperparameters.from_values([1.0], 1.0, 0.1))
        assert predict(gp1, np.array([0.0, 1.0, 2.0])).mean.shape == (3,)
        gp2 = train_gp(raw(rng.standard_normal((5, 2)), rng.standard_normal(5)),
                       Hyperparameters.from_values([1.0, 1.0], 1.0, 0.1))
        assert predict(gp2, np.array([0.0, 1.0])).mean.shape == (1,)
        with pytest.raises(InvalidArgumentError):
            predict(gp2, np.zeros((2, 3)))


class TestNLPD:
    def test_standard_normal(self):
        assert gaussian_nlpd(0.0, 1.0, 0.0) == pytest.approx(0.91894, abs=1e-5)
        assert gaussian_nlpd(0.0, 1.0, 1.0) == pytest.approx(1.41894, abs=1e-5)

    def test_hand_value(self):
        expected = 0.5 * np.log(2 * np.pi * 0.25) + 1 / 0.5
        assert gaussian_nlpd(2.0, 0.25, 1.0) == pytest.approx(expected, abs=1e-12)
        assert gaussian_nlpd(2.0, 0.25, 1.0) == pytest.approx(2.22579, abs=1e-5)

    def test_matches_scipy(self, rng):
        m, v, y = rng.standard_normal(20), rng.uniform(0.1, 3, 20), rng.standard_normal(20)
        from scipy.stats import norm
        np.testing.assert_allclose(gaussian_nlpd(m, v, y), -norm(m, np.sqrt(v)).logpdf(y), rtol=1e-12)

    def test_non_positive_variance(self):
        with pytest.raises(InvalidArgumentError):
            gaussian_nlpd(0.0, 0.0, 1.0)
        with pytest.raises(InvalidArgumentError):
            gaussian_nlpd([0.0, 0.0], [1.0, -1.0], [0.0, 0.0])

    def test_requires_y_space(self):
        p = GaussianPrediction(np.zeros(2), np.ones(2), Space.F_SPACE)
        with pytest.raises(InvalidArgumentError):
            nlpd(p, np.zeros(2))
        lifted = lift_to_y(p, 0.5)
        assert lifted.space is Space.Y_SPACE
        np.testing.assert_allclose(lifted.variance, 1.5)
        assert lift_to_y(lifted, 0.5) is lifted
