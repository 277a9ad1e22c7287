import numpy as np
import pytest

from cgpso.data import Dataset
from cgpso.kernel import (Hyperparameters, KernelConfig, cross_cov,
                          prior_variance, sample_hyperparameters)
from cgpso.model import (EmptyEvalSet, HyperparameterObjective, condition,
                         load_model, mse, mse_grad, mse_per_output, nll,
                         nll_grad, predict, save_model)
from cgpso.numerics import RngStream, fd_gradient


def random_problem(seed, n_outputs=2, input_dim=2, n_latent=1, max_size=8):
    rng = np.random.default_rng(seed)
    config = KernelConfig(input_dim=input_dim, n_outputs=n_outputs,
                          n_latent=n_latent)
    sizes = rng.integers(2, max_size + 1, size=n_outputs)
    data = Dataset(
        inputs=[rng.standard_normal((s, input_dim)) for s in sizes],
        targets=[rng.standard_normal(s) for s in sizes])
    hp = sample_hyperparameters(config, RngStream(seed))
    return config, data, hp


def dense_reference(data, hp):
    """Gram matrix and inverse assembled entry by entry with plain numpy."""
    offs = np.concatenate([[0], np.cumsum(data.sizes)])
    n = data.total_points
    k = np.empty((n, n))
    for d in range(data.n_outputs):
        for d2 in range(data.n_outputs):
            for i in range(data.sizes[d]):
                for j in range(data.sizes[d2]):
                    v = cross_cov(data.inputs[d][i], data.inputs[d2][j],
                                  d, d2, hp)
                    if d == d2 and i == j:
                        v += hp.sigma2[d]
                    k[offs[d] + i, offs[d2] + j] = v
    return k


class TestPredict:
    def test_mean_matches_dense_formula(self):
        config, data, hp = random_problem(1)
        model = condition(hp, data)
        k = dense_reference(data, hp)
        y = data.stacked_targets()
        rng = np.random.default_rng(2)
        queries = rng.standard_normal((6, config.input_dim))
        for d in range(2):
            pred = predict(model, queries, d)
            kc = np.array([[cross_cov(queries[i], data.inputs[d2][j], d, d2,
                                      hp)
                            for d2 in range(2)
                            for j in range(data.sizes[d2])]
                           for i in range(6)])
            want_mean = kc @ np.linalg.solve(k, y)
            want_var = (prior_variance(d, hp)
                        - np.einsum("ij,ji->i", kc, np.linalg.solve(k, kc.T)))
            np.testing.assert_allclose(pred.mean, want_mean, rtol=1e-9,
                                       atol=1e-11)
            np.testing.assert_allclose(pred.variance, want_var, rtol=1e-7,
                                       atol=1e-9)

    def test_small_noise_interpolates(self):
        """With vanishing noise the posterior passes through the data and is
        certain there."""
        rng = np.random.default_rng(3)
        config = KernelConfig(input_dim=1, n_outputs=1)
        x = np.linspace(0.0, 4.0, 9).reshape(-1, 1)
        y = np.sin(x[:, 0])
        data = Dataset(inputs=[x], targets=[y])
        hp = Hyperparameters(nu=np.array([[1.0]]), alpha=np.array([[2.0]]),
                             upsilon=np.array([2.0]), beta=np.array([[2.0]]),
                             sigma2=np.array([1e-12]))
        model = condition(hp, data)
        pred = predict(model, x, 0)
        assert np.max(np.abs(pred.mean - y)) < 1e-6
        assert np.max(pred.variance) < 1e-6

    def test_variance_nonnegative(self):
        config, data, hp = random_problem(4)
        model = condition(hp, data)
        queries = np.random.default_rng(5).standard_normal((50, 2))
        for d in range(2):
            assert np.all(predict(model, queries, d).variance >= 0.0)

    def test_distant_query_reverts_to_prior(self):
        config, data, hp = random_problem(6, n_outputs=1)
        model = condition(hp, data)
        far = np.full((1, 2), 1e3)
        pred = predict(model, far, 0)
        np.testing.assert_allclose(pred.mean, 0.0, atol=1e-8)
        np.testing.assert_allclose(pred.variance, prior_variance(0, hp),
                                   rtol=1e-8)


class TestNll:
    def test_single_point_closed_form(self):
        """One observation: NLL = y^2/(2c) + log(c)/2 + log(2*pi)/2 with
        c the prior variance plus noise."""
        config = KernelConfig(input_dim=1, n_outputs=1)
        hp = Hyperparameters(nu=np.array([[1.5]]), alpha=np.array([[0.8]]),
                             upsilon=np.array([1.2]), beta=np.array([[2.0]]),
                             sigma2=np.array([0.3]))
        y = 0.9
        data = Dataset(inputs=[np.array([[0.4]])], targets=[np.array([y])])
        c = prior_variance(0, hp) + 0.3
        want = 0.5 * y * y / c + 0.5 * np.log(c) + 0.5 * np.log(2 * np.pi)
        np.testing.assert_allclose(nll(data, hp), want, rtol=1e-13)

    def test_matches_dense_formula(self):
        for seed in range(5):
            config, data, hp = random_problem(seed)
            k = dense_reference(data, hp)
            y = data.stacked_targets()
            want = 0.5 * (y @ np.linalg.solve(k, y)
                          + np.linalg.slogdet(k)[1]
                          + len(y) * np.log(2 * np.pi))
            np.testing.assert_allclose(nll(data, hp), want, rtol=1e-10)

    def test_single_point_noise_gradient(self):
        """d NLL / d sigma2 = 1/(2c) - y^2/(2c^2) for one observation."""
        config = KernelConfig(input_dim=1, n_outputs=1)
        hp = Hyperparameters(nu=np.array([[1.0]]), alpha=np.array([[1.0]]),
                             upsilon=np.array([1.0]), beta=np.array([[1.0]]),
                             sigma2=np.array([0.5]))
        y = 1.3
        data = Dataset(inputs=[np.array([[0.0]])], targets=[np.array([y])])
        c = prior_variance(0, hp) + 0.5
        g = nll_grad(data, hp)
        want = 0.5 / c - 0.5 * y * y / c ** 2
        np.testing.assert_allclose(g[config.idx_sigma2(0)], want, rtol=1e-12)

    def test_gradient_matches_finite_differences(self):
        for seed in range(4):
            config, data, hp = random_problem(seed + 20, max_size=6)
            theta = hp.flatten()
            g = nll_grad(data, hp)
            fd = fd_gradient(
                lambda t: nll(data, Hyperparameters.unflatten(t, config)),
                theta, h=1e-6)
            np.testing.assert_allclose(g, fd, rtol=5e-5, atol=1e-7)


class TestMse:
    def test_hand_value(self):
        config, data, hp = random_problem(30)
        model = condition(hp, data)
        rng = np.random.default_rng(31)
        eval_data = Dataset(
            inputs=[rng.standard_normal((4, 2)), rng.standard_normal((3, 2))],
            targets=[rng.standard_normal(4), rng.standard_normal(3)])
        per = mse_per_output(eval_data, model)
        total = mse(eval_data, model)
        for d in range(2):
            resid = predict(model, eval_data.inputs[d], d).mean \
                - eval_data.targets[d]
            np.testing.assert_allclose(per[d], np.mean(resid ** 2),
                                       rtol=1e-12)
        np.testing.assert_allclose(total, (4 * per[0] + 3 * per[1]) / 7,
                                   rtol=1e-12)

    def test_fully_empty_dataset_rejected_at_construction(self):
        from cgpso.numerics import DimensionMismatch
        with pytest.raises(DimensionMismatch):
            Dataset(inputs=[np.empty((0, 2)), np.empty((0, 2))],
                    targets=[np.empty(0), np.empty(0)])

    def test_per_output_nan_for_missing_block(self):
        config, data, hp = random_problem(33)
        model = condition(hp, data)
        rng = np.random.default_rng(34)
        eval_data = Dataset(inputs=[rng.standard_normal((3, 2)),
                                    np.empty((0, 2))],
                            targets=[rng.standard_normal(3), np.empty(0)])
        per = mse_per_output(eval_data, model)
        assert np.isfinite(per[0]) and np.isnan(per[1])
        np.testing.assert_allclose(mse(eval_data, model), per[0], rtol=1e-12)

    def test_gradient_matches_finite_differences(self):
        for seed in range(4):
            config, data, hp = random_problem(seed + 40, max_size=6)
            rng = np.random.default_rng(seed)
            eval_data = Dataset(
                inputs=[rng.standard_normal((5, 2)),
                        rng.standard_normal((4, 2))],
                targets=[rng.standard_normal(5), rng.standard_normal(4)])
            theta = hp.flatten()

            def f(t):
                m = condition(Hyperparameters.unflatten(t, config), data)
                return mse(eval_data, m)

            g = mse_grad(eval_data, condition(hp, data))
            np.testing.assert_allclose(g, fd_gradient(f, theta, h=1e-6),
                                       rtol=5e-5, atol=1e-7)


class TestObjective:
    def test_values_match_direct_computation(self):
        config, data, hp = random_problem(50)
        rng = np.random.default_rng(51)
        eval_data = Dataset(
            inputs=[rng.standard_normal((4, 2)), rng.standard_normal((4, 2))],
            targets=[rng.standard_normal(4), rng.standard_normal(4)])
        theta = hp.flatten()
        obj_nll = HyperparameterObjective(data, config, fitness="nll")
        obj_mse = HyperparameterObjective(data, config, fitness="mse",
                                          eval_data=eval_data)
        np.testing.assert_allclose(obj_nll.value(theta), nll(data, hp),
                                   rtol=1e-12)
        np.testing.assert_allclose(obj_mse.value(theta),
                                   mse(eval_data, condition(hp, data)),
                                   rtol=1e-12)

    def test_gradients_match_direct_computation(self):
        config, data, hp = random_problem(52)
        rng = np.random.default_rng(53)
        eval_data = Dataset(
            inputs=[rng.standard_normal((3, 2)), rng.standard_normal((3, 2))],
            targets=[rng.standard_normal(3), rng.standard_normal(3)])
        theta = hp.flatten()
        obj_nll = HyperparameterObjective(data, config, fitness="nll")
        obj_mse = HyperparameterObjective(data, config, fitness="mse",
                                          eval_data=eval_data)
        np.testing.assert_allclose(obj_nll.gradient(theta),
                                   nll_grad(data, hp), rtol=1e-10)
        np.testing.assert_allclose(obj_mse.gradient(theta),
                                   mse_grad(eval_data, condition(hp, data)),
                                   rtol=1e-10)

    def test_invalid_vector_maps_to_inf(self):
        config, data, _ = random_problem(54)
        obj = HyperparameterObjective(data, config, fitness="nll")
        theta = np.ones(config.n_hyperparameters)
        theta[0] = -1.0
        assert obj.value(theta) == np.inf
        theta[0] = np.nan
        assert obj.value(theta) == np.inf

    def test_mse_fitness_requires_eval_data(self):
        config, data, _ = random_problem(55)
        with pytest.raises(EmptyEvalSet):
            HyperparameterObjective(data, config, fitness="mse")

    def test_unknown_fitness_rejected(self):
        config, data, _ = random_problem(56)
        with pytest.raises(ValueError):
            HyperparameterObjective(data, config, fitness="likelihood")


class TestSaveLoad:
    def test_round_trip_reproduces_predictions(self, tmp_path):
        config, data, hp = random_problem(60)
        model = condition(hp, data)
        path = tmp_path / "model.txt"
        save_model(model, path)
        back = load_model(path)
        assert back.config == config
        np.testing.assert_array_equal(back.theta, model.theta)
        queries = np.random.default_rng(61).standard_normal((10, 2))
        for d in range(2):
            a = predict(model, queries, d)
            b = predict(back, queries, d)
            np.testing.assert_array_equal(a.mean, b.mean)
            np.testing.assert_array_equal(a.variance, b.variance)
