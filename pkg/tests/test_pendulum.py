import warnings

import numpy as np
import pytest

import socgrad as sg
from socgrad import models
from socgrad.adjoint import pendulum_cost
from socgrad.pendulum import EmpiricalInit, SupportOptConfig, optimize_support, _pathwise_gradients
from socgrad.sde import TimeGrid, path_rng


def test_equilibrium_point_is_stationary():
    # (0, 0) is an equilibrium of the drift and a zero of the cost gradient
    model = models.pendulum_model(noise=0.0)
    cost = pendulum_cost()
    cfg = SupportOptConfig(iters=5, step=1e-3, pathwise_rollouts=2,
                           history_every=10, cost_rollouts=2, grid=TimeGrid(0.0, 2.0, 50))
    init, _ = optimize_support("pathwise", model, cost, [[0.0, 0.0]], cfg, seed=0)
    assert np.linalg.norm(init.points[0]) <= 5 * 1e-3 * 0.05


def test_pathwise_gradients_zero_noise_match_fd():
    model = models.pendulum_model(noise=0.0)
    cost = pendulum_cost()
    cfg = SupportOptConfig(grid=TimeGrid(0.0, 2.0, 100), pathwise_rollouts=1)
    rng = np.random.default_rng(1)
    pts = rng.normal(0, 1.2, size=(4, 2))
    grads = _pathwise_gradients(model, cost, pts, cfg, seed=2)

    def rollout_cost(x):
        from socgrad.sde import _euler_loop, ZeroControl
        dW = np.zeros((1, 100, 2))
        st, _ = _euler_loop(model.drift, model.diffusion, ZeroControl(), cfg.grid, x[None, :], dW)
        return cost.loss(st[:, -1])[0]

    for i, p in enumerate(pts):
        for j in range(2):
            e = np.zeros(2)
            e[j] = 1e-5
            fd = (rollout_cost(p + e) - rollout_cost(p - e)) / 2e-5
            assert abs(grads[i, j] - fd) <= 1e-4 * max(1e-6, abs(fd))


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        optimize_support("sgd", models.pendulum_model(), pendulum_cost(), [[0, 0]], None, 0)


def test_point_count_conserved_and_divergent_points_frozen():
    model = models.pendulum_model()
    cost = pendulum_cost()
    cfg = SupportOptConfig(iters=3, step=1e-3, pathwise_rollouts=2, history_every=100,
                           cost_rollouts=2, freeze_norm=1.0, grid=TimeGrid(0.0, 1.0, 20))
    pts0 = np.array([[0.1, 0.1], [4.0, 0.0], [-3.0, 2.0]])
    init, history = optimize_support("pathwise", model, cost, pts0, cfg, seed=3)
    assert init.points.shape[0] == 3
    assert init.frozen[1] and init.frozen[2] and not init.frozen[0]
    # frozen points stop moving after the freeze
    assert np.allclose(init.points[1], pts0[1] - cfg.step * 0 , atol=0.5)
    assert history[-1]["n_frozen"] == 2


def test_trbsde_descends_mean_cost_short_run():
    model = models.pendulum_model()
    cost = pendulum_cost()
    rng = path_rng(4, 0)
    pts0 = np.column_stack([rng.uniform(-np.pi, np.pi, 16), rng.uniform(-2, 2, 16)])
    cfg = SupportOptConfig(
        iters=300, step=0.01, refresh_every=150, n_paths=400, J_f=3,
        reg_steps=500, score_steps=500, pnaa_steps=1500, history_every=100,
        cost_rollouts=100, grid=TimeGrid(0.0, 2.0, 100),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        init, history = optimize_support("trbsde", model, cost, pts0, cfg, seed=5)
    assert history[-1]["mean_cost"] < history[0]["mean_cost"]
