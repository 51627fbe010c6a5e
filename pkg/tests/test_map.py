"""Point-estimate trainer against a ridge-regression closed form."""

import numpy as np
import pytest

from partial_bnn.data import Dataset
from partial_bnn.inference.map import MapConfig, train_map
from partial_bnn.inference.model import GaussianLikelihood, LogDensityModel
from partial_bnn.network import Activation, ArchitectureSpec, eval_theta, init_network
from partial_bnn.partition import PriorSpec, select_by_layer

from conftest import conjugate_posterior, linear_regression_model


class TestAgainstClosedForm:
    def test_converges_to_ridge_solution(self, rng):
        x = rng.standard_normal((40, 3))
        w_true = np.array([1.0, -2.0, 0.5])
        y = (x @ w_true + 0.3)[:, None] + 0.05 * rng.standard_normal((40, 1))
        model, mask = linear_regression_model(x, y, prior_var=10.0, noise_var=0.01)
        mean, _ = conjugate_posterior(x, y, prior_var=10.0, noise_var=0.01)

        net = train_map(model, None, MapConfig(steps=4000, lr=0.05))
        np.testing.assert_allclose(net.theta[mask], mean, atol=2e-3)

    def test_temperature_shifts_the_optimum(self, rng):
        # tempering the likelihood moves the ridge solution toward the prior
        x = rng.standard_normal((30, 2))
        y = (x @ np.array([2.0, -1.0]))[:, None]
        lam = 0.25
        model, mask = linear_regression_model(
            x, y, prior_var=1.0, noise_var=0.1, temperature=lam
        )
        mean, _ = conjugate_posterior(x, y, prior_var=1.0, noise_var=0.1, temperature=lam)
        net = train_map(model, None, MapConfig(steps=4000, lr=0.05))
        np.testing.assert_allclose(net.theta[mask], mean, atol=2e-3)


class TestMechanics:
    def setup_model(self, rng, **kw):
        x = rng.standard_normal((20, 2))
        y = rng.standard_normal((20, 1))
        return linear_regression_model(x, y, **kw)

    def test_zero_steps_returns_init(self, rng):
        model, _ = self.setup_model(rng)
        before = model.network.theta.copy()
        net = train_map(model, None, MapConfig(steps=0))
        np.testing.assert_array_equal(net.theta, before)

    def test_frozen_side_bitwise_unchanged(self, rng):
        model, mask = self.setup_model(rng)
        before = model.network.theta.copy()
        net = train_map(model, None, MapConfig(steps=50, lr=0.1))
        np.testing.assert_array_equal(net.theta[~mask], before[~mask])
        assert not np.array_equal(net.theta[mask], before[mask])

    def test_deterministic_given_seed(self, rng):
        x = rng.standard_normal((25, 2))
        y = rng.standard_normal((25, 1))
        model1, _ = linear_regression_model(x, y)
        model2, _ = linear_regression_model(x, y)
        cfg = MapConfig(steps=60, lr=0.05, batch_size=8, seed=5)
        a = train_map(model1, None, cfg)
        b = train_map(model2, None, cfg)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_minibatch_path_approaches_full_batch(self, rng):
        x = rng.standard_normal((64, 2))
        y = (x @ np.array([1.5, -0.5]))[:, None] + 0.1 * rng.standard_normal((64, 1))
        full_model, mask = linear_regression_model(x, y, prior_var=100.0)
        mini_model, _ = linear_regression_model(x, y, prior_var=100.0)
        full = train_map(full_model, None, MapConfig(steps=3000, lr=0.05))
        mini = train_map(mini_model, None, MapConfig(steps=3000, lr=0.05, batch_size=16))
        np.testing.assert_allclose(mini.theta[mask], full.theta[mask], atol=0.05)

    def test_needs_data(self, rng):
        spec = ArchitectureSpec(2, (3,), 1)
        from partial_bnn.partition import select_all

        model = LogDensityModel(
            init_network(spec, seed=0), select_all(spec), PriorSpec()
        )
        with pytest.raises(ValueError):
            train_map(model, None, MapConfig(steps=1))

    def test_validation_snapshot_wins(self, rng):
        # run long with a huge lr after convergence; the best-val iterate must
        # be at least as good on validation as the last iterate would be
        x = rng.standard_normal((30, 1))
        y = np.sin(2 * x)
        split = np.array([0] * 20 + [1] * 10, dtype=np.int8)
        ds = Dataset(x, y, split=split)
        spec = ArchitectureSpec(1, (8,), 1, Activation("tanh"))
        net = init_network(spec, seed=1)
        from partial_bnn.partition import select_all

        model = LogDensityModel(
            net, select_all(spec), PriorSpec(variance=10.0),
            GaussianLikelihood(noise_var=0.05), x=x[:20], y=y[:20],
        )
        out = train_map(model, ds, MapConfig(steps=400, lr=0.02, val_check_every=5))
        vx, vy = ds.val
        pred = eval_theta(spec, out.theta, vx)
        val_mse = float(np.mean((pred - vy) ** 2))
        assert val_mse < 0.5

    def test_learned_precision_model_trains_on_fixed_noise(self, rng):
        # optimizer path strips the precision coordinate and uses noise_var
        x = rng.standard_normal((20, 2))
        y = rng.standard_normal((20, 1))
        spec = ArchitectureSpec(2, (3,), 1, Activation("tanh"))
        net = init_network(spec, seed=3)
        from partial_bnn.partition import select_all

        model = LogDensityModel(
            net, select_all(spec), PriorSpec(),
            GaussianLikelihood(noise_var=0.1, learn_precision=True), x=x, y=y,
        )
        out = train_map(model, None, MapConfig(steps=20, lr=0.01))
        assert out.theta.size == spec.param_count
        assert np.all(np.isfinite(out.theta))
