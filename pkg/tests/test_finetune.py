import math
import warnings

import numpy as np
import pytest

import socgrad as sg
from socgrad.adjoint import tilted_cost, zero_cost
from socgrad.finetune import (
    FinetuneConfig,
    GaussianInit,
    build_pretrained_model,
    finetune_adjoint_matching,
    finetune_trbsde,
    gaussian_kl,
    init_dist_gradients,
    sample_terminal,
    soc_objective_eval,
)
from socgrad.oracles import tilted_mixture, w1_distance
from socgrad.score import GaussianMixture1D
from socgrad.sde import TimeGrid, ZeroControl, path_rng, simulate_forward
from socgrad import models

TARGET = GaussianMixture1D([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])


def small_cfg(**kw):
    base = dict(k_f=6, J_f=2, o_f=20, n_paths=300, reg_steps=150, score_steps=150,
                eval_paths=500, w1_samples=2000, final_eval_paths=2000, n_finalists=3)
    base.update(kw)
    return FinetuneConfig(**base)


def test_gaussian_kl_values():
    assert gaussian_kl(0.0, 1.0) == 0.0
    assert abs(gaussian_kl(1.0, 1.0) - 0.5) < 1e-15
    assert abs(gaussian_kl(0.0, 2.0) - 0.5 * (4 - math.log(4) - 1)) < 1e-12
    assert abs(gaussian_kl(0.0, 2.0) - 0.8068528194400547) < 1e-12
    with pytest.raises(ValueError):
        gaussian_kl(0.0, 0.0)
    with pytest.raises(ValueError):
        gaussian_kl(0.0, -1.0)


def test_kl_nonnegative_with_unique_zero():
    rng = np.random.default_rng(0)
    for _ in range(50):
        mu, Q = rng.normal(0, 2), abs(rng.normal(1, 0.5)) + 0.05
        v = gaussian_kl(mu, Q)
        assert v >= 0.0
        if abs(mu) > 1e-3 or abs(Q - 1) > 1e-3:
            assert v > 0.0


def test_init_gradients_zero_costate_at_nominal_law():
    d = init_dist_gradients(np.zeros(100), np.random.default_rng(1).normal(size=100), 0.0, 1.0)
    assert d == (0.0, 0.0)


def test_init_gradients_constant_costate():
    c = -0.7
    x0 = np.random.default_rng(2).normal(size=50)
    dmu, _ = init_dist_gradients(np.full(50, c), x0, 0.4, 1.0)
    assert abs(dmu - (c + 0.4)) < 1e-12


def test_init_gradients_empty_rejected():
    with pytest.raises(ValueError):
        init_dist_gradients([], [], 0.0, 1.0)


def test_init_gradients_match_fd_on_quadratic_toy():
    # f = 0, g = 0, l_f = x^2/2: X_T = X_0 = mu + Q z, Y_0 = X_0;
    # gradients of E[l_f] + KL match central differences under common z
    rng = path_rng(3, 0)
    z = rng.standard_normal(200_000)

    def objective(mu, Q):
        x = mu + Q * z
        return np.mean(0.5 * x * x) + gaussian_kl(mu, Q)

    mu, Q = 0.6, 1.3
    x0 = mu + Q * z
    dmu, dQ = init_dist_gradients(x0, x0, mu, Q)  # Y_0 = X_0 here
    h = 1e-5
    fd_mu = (objective(mu + h, Q) - objective(mu - h, Q)) / (2 * h)
    fd_Q = (objective(mu, Q + h) - objective(mu, Q - h)) / (2 * h)
    assert abs(dmu - fd_mu) <= 1e-3 * max(1.0, abs(fd_mu))
    assert abs(dQ - fd_Q) <= 1e-3 * max(1.0, abs(fd_Q))


def test_gaussian_init_sampling_and_positivity():
    q = GaussianInit(0.5, 2.0)
    assert abs(q.Q - 2.0) < 1e-15
    rng = path_rng(4, 0)
    xs = q.sample_n(rng, 50_000)
    assert abs(xs.mean() - 0.5) < 0.05
    assert abs(xs.std() - 2.0) < 0.05
    with pytest.raises(ValueError):
        GaussianInit(0.0, 0.0)


def test_build_pretrained_alpha_and_p0_variance():
    model = build_pretrained_model(TARGET, lam=8.0, T_gen=1.0, n_steps=100)
    alpha = math.exp(-4.0)
    mix_T = model.marginal_mixture(1.0)
    assert np.allclose(mix_T.means, [-3 * alpha, 3 * alpha])
    # second moment of the fully noised law is within 1% of 1
    assert abs(mix_T.second_moment() - 1.0) <= 0.01


def test_build_pretrained_precondition():
    with pytest.raises(ValueError):
        build_pretrained_model(TARGET, lam=2.0, T_gen=1.0)


def test_pretrained_terminal_law_matches_target():
    model = build_pretrained_model(TARGET, lam=8.0, T_gen=1.0, n_steps=200)
    batch = simulate_forward(model.sde, model.p0, ZeroControl(), model.grid, 10_000, seed=5)
    ref = TARGET.sample(path_rng(6, 0), 10_000)
    assert w1_distance(batch.terminal_states()[:, 0], ref) <= 0.15


def test_pretrained_single_component_is_stationary():
    single = GaussianMixture1D([1.0], [0.0], [1.0])
    model = build_pretrained_model(single, lam=8.0, T_gen=1.0, n_steps=100)
    batch = simulate_forward(model.sde, model.p0, ZeroControl(), model.grid, 10_000, seed=7)
    xT = batch.terminal_states()[:, 0]
    assert abs(xT.mean()) <= 5 / np.sqrt(10_000) + 0.01
    assert abs(xT.var() - 1.0) <= 5 * np.sqrt(2 / 10_000) + 0.02


def test_soc_objective_bookkeeping():
    model = build_pretrained_model(TARGET, lam=8.0, T_gen=1.0, n_steps=50)
    q0 = GaussianInit(0.3, 1.2)
    batch = simulate_forward(model.sde, q0, ZeroControl(), model.grid, 200, seed=8)
    terms = soc_objective_eval(batch, None, tilted_cost(0.5, 3.0), q0)
    assert terms.total == terms.terminal + terms.running + terms.kl
    assert terms.running == 0.0  # zero control
    assert abs(terms.kl - q0.kl()) < 1e-15


def test_soc_objective_zero_cost_zero_control():
    model = build_pretrained_model(TARGET, lam=8.0, T_gen=1.0, n_steps=50)
    q0 = GaussianInit()
    batch = simulate_forward(model.sde, q0, ZeroControl(), model.grid, 500, seed=9)
    terms = soc_objective_eval(batch, None, zero_cost(1), q0)
    assert terms.total == 0.0


def test_soc_objective_ou_terminal_moment():
    # OU dX = -X dt + dW from N(0,1) is not stationary (stationary var 1/2):
    # E[X_1^2/2] = (e^{-2} + (1 - e^{-2})/2) / 2
    m = models.ou_model(rate=1.0, sigma=1.0)
    grid = TimeGrid(0.0, 1.0, 100)

    class Q0:
        dim = 1

        def sample(self, rng):
            return rng.standard_normal(1)

        def kl(self):
            return 0.0

    N = 20_000
    batch = simulate_forward(m, Q0(), ZeroControl(), grid, N, seed=10)
    cost = sg.quadratic_cost(np.eye(1))
    terms = soc_objective_eval(batch, None, cost, Q0())
    ref = 0.5 * (np.exp(-2.0) + 0.5 * (1 - np.exp(-2.0)))
    per_path = cost.loss(batch.terminal_states())
    se = per_path.std(ddof=1) / np.sqrt(N)
    assert abs(terms.terminal - ref) <= 3 * se + 2.0 * grid.dt * ref


def test_finetune_beta_zero_stays_at_nominal():
    model = build_pretrained_model(TARGET, lam=8.0, T_gen=1.0, n_steps=60)
    cost = tilted_cost(0.0, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for fn in (finetune_trbsde, finetune_adjoint_matching):
            control, q0, info = fn(model, cost, small_cfg(), seed=11)
            assert abs(q0.mu) <= 0.1
            assert abs(q0.Q - 1.0) <= 0.1
            x = np.linspace(-3, 3, 31)[:, None]
            u = np.concatenate([control(t, x) for t in (0.0, 0.5, 1.0)])
            assert np.abs(u).max() <= 0.2


def test_adjoint_matching_inner_regression_descends():
    # regression sanity at fixed outer state: one simulated batch, one set of
    # -g^T Y targets, loss halves on a testbed where the conditional mean
    # carries the target energy (on the diffusion testbed the pathwise
    # adjoint leaves ~83% of the energy as irreducible conditional variance,
    # so only plain descent is checked there)
    from socgrad.nets import AdamState, FuncApproximator, train_regression
    from socgrad.adjoint import simulate_nonadapted, quadratic_cost

    def run_rounds(sde_model, grid, cost, sampler, seed):
        knet = FuncApproximator(sde_model.dim, t_scale=grid.T, seed=12)
        batch = simulate_forward(sde_model, sampler, ZeroControl(), grid, 400, seed)
        Y = simulate_nonadapted(batch, sde_model, cost)
        N, K1, n = batch.states.shape
        g = sde_model.diffusion(0.0)
        targets = -Y.reshape(N * K1, n) @ g
        initial = float(np.mean(np.sum(targets**2, axis=1)))  # untrained k = 0
        losses = [initial]
        for j in range(5):
            info = train_regression(
                knet, np.tile(grid.times(), N), batch.states.reshape(N * K1, n),
                targets, 400,
                state=AdamState.for_params(knet.params, lr=1e-3), seed=14,
            )
            losses.append(info["final_holdout"])
        return losses

    lin = models.linear_model(eps=0.5)
    losses = run_rounds(lin, TimeGrid(0.0, 2.0, 60), quadratic_cost(np.eye(2)),
                        sg.GaussianSampler(np.zeros(2)), seed=13)
    assert losses[-1] <= 0.5 * losses[0]

    model = build_pretrained_model(TARGET, lam=8.0, T_gen=1.0, n_steps=60)
    losses = run_rounds(model.sde, model.grid, tilted_cost(1 / 8, 3.0), GaussianInit(), seed=13)
    assert losses[-1] < losses[0]


def test_finetune_small_beta_reaches_tilted_target():
    model = build_pretrained_model(TARGET, lam=8.0, T_gen=1.0, n_steps=100)
    beta = 1 / 50
    cost = tilted_cost(beta, 3.0)
    ref = tilted_mixture(TARGET, beta, 3.0).sample(path_rng(14, 0), 10_000)
    cfg = small_cfg(k_f=12, n_paths=600, reg_steps=250, score_steps=250,
                    eval_paths=1000, final_eval_paths=4000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        control, q0, info = finetune_trbsde(model, cost, cfg, seed=15)
    w1 = w1_distance(sample_terminal(model, control, q0, 10_000, seed=16), ref)
    assert w1 <= 0.25  # loose desk-scale bound; the acceptance suite runs the full budget


def test_budget_counters_and_parity():
    model = build_pretrained_model(TARGET, lam=8.0, T_gen=1.0, n_steps=50)
    cost = tilted_cost(0.1, 3.0)
    cfg = small_cfg(k_f=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, _, info_tr = finetune_trbsde(model, cost, cfg, seed=17)
        _, _, info_am = finetune_adjoint_matching(model, cost, cfg, seed=17)
    # same forward-path simulation counts; the reg-step budgets match and
    # the reversed-BSDE side additionally trains its score
    assert info_tr["n_forward_sims"] == cfg.k_f * 2 * cfg.n_paths
    assert info_am["n_forward_sims"] == cfg.k_f * cfg.J_f * cfg.n_paths
    assert info_tr["n_forward_sims"] == info_am["n_forward_sims"]  # J_f = 2
    assert info_am["n_opt_steps"] == cfg.k_f * cfg.J_f * cfg.reg_steps
    assert info_tr["n_opt_steps"] == cfg.k_f * (cfg.J_f * cfg.reg_steps + cfg.score_steps)
    assert "descent_violations" in info_tr
