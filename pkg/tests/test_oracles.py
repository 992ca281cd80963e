import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import wasserstein_distance

import socgrad as sg
from socgrad import models
from socgrad.adjoint import pendulum_cost
from socgrad.oracles import (
    LinearModelConfig,
    LyapunovPhi,
    linear_gaussian_moments,
    lyapunov_gain,
    mc_cost_map,
    mc_cost_of_points,
    mse_vs_oracle,
    tilted_mixture,
    w1_distance,
)
from socgrad.score import GaussianMixture1D
from socgrad.sde import TimeGrid, path_rng

BIMODAL = GaussianMixture1D([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])


def test_gain_at_terminal_time_is_qf():
    cfg = LinearModelConfig()
    assert np.allclose(lyapunov_gain(cfg, cfg.T), cfg.Q_f, atol=1e-12)


def test_gain_with_zero_dynamics_is_constant():
    cfg = LinearModelConfig(A=np.zeros((2, 2)))
    for t in (0.0, 0.7, 2.0):
        assert np.allclose(lyapunov_gain(cfg, t), cfg.Q_f, atol=1e-12)


def test_dual_oracle_agreement_at_random_times():
    cfg = LinearModelConfig()
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, cfg.T, 20):
        lyapunov_gain(cfg, t, cross_check=True, tol=1e-8)  # raises on mismatch


def test_gain_is_symmetric_psd_and_solves_the_ode():
    cfg = LinearModelConfig()
    h = 1e-5
    for t in (0.1, 0.5, 1.3):
        G = lyapunov_gain(cfg, t, cross_check=False)
        assert np.allclose(G, G.T)
        assert np.linalg.eigvalsh(G).min() > 0
        dG = (lyapunov_gain(cfg, t + h, cross_check=False) - lyapunov_gain(cfg, t - h, cross_check=False)) / (2 * h)
        resid = dG + cfg.A.T @ G + G @ cfg.A
        assert np.abs(resid).max() <= 1e-8


def test_tilted_mixture_identity_at_zero_beta():
    out = tilted_mixture(BIMODAL, 0.0)
    assert np.allclose(out.weights, BIMODAL.weights)
    assert np.allclose(out.means, BIMODAL.means)


def test_tilted_single_gaussian_complete_square():
    mix = GaussianMixture1D([1.0], [0.0], [1.0])
    out = tilted_mixture(mix, 1.0, center=3.0)
    assert abs(out.means[0] - 1.5) < 1e-12
    assert abs(out.variances[0] - 0.5) < 1e-12


def test_tilted_bimodal_right_component_dominates():
    out = tilted_mixture(BIMODAL, 1.0, center=3.0)
    right = int(np.argmax(out.means))
    assert out.weights[right] > 0.99


def test_tilted_mixture_normalizes_and_matches_quadrature():
    beta = 1.0
    out = tilted_mixture(BIMODAL, beta, center=3.0)
    val, _ = quad(lambda x: out.pdf(x), -20, 20, limit=300)
    assert abs(val - 1.0) <= 1e-6
    # cross-check the density shape against the unnormalized tilt
    Z, _ = quad(lambda x: BIMODAL.pdf(x) * np.exp(-0.5 * beta * (x - 3.0) ** 2), -20, 20, limit=300)
    for x in (-3.0, 0.0, 2.0, 3.0, 4.0):
        direct = BIMODAL.pdf(x) * np.exp(-0.5 * beta * (x - 3.0) ** 2) / Z
        assert abs(out.pdf(x) - direct) <= 1e-6


def test_negative_beta_rejected():
    with pytest.raises(ValueError):
        tilted_mixture(BIMODAL, -0.1)


def test_mse_vs_oracle_zero_for_exact_phi():
    cfg = LinearModelConfig()
    assert mse_vs_oracle(LyapunovPhi(cfg), cfg, n_eval=500, seed=1) == 0.0


def test_mse_vs_oracle_of_zero_predictor_is_gain_energy():
    cfg = LinearModelConfig()

    class Zero:
        def value(self, t, x):
            return np.zeros_like(np.atleast_2d(x))

    G0 = lyapunov_gain(cfg, 0.0)
    expected = np.trace(G0.T @ G0)  # E||G0 xi||^2 for standard normal xi
    got = mse_vs_oracle(Zero(), cfg, n_eval=200_000, seed=2)
    assert abs(got - expected) <= 0.03 * expected


def test_w1_identical_samples_zero():
    x = np.random.default_rng(3).normal(size=1000)
    assert w1_distance(x, x.copy()) == 0.0


def test_w1_shift_is_exact():
    x = np.random.default_rng(4).normal(size=777)
    assert abs(w1_distance(x, x + 1.3) - 1.3) < 1e-12


def test_w1_between_unit_gaussians():
    rng = path_rng(5, 0)
    a = rng.standard_normal(100_000)
    b = rng.standard_normal(100_000) + 1.0
    assert abs(w1_distance(a, b) - 1.0) <= 0.02


def test_w1_matches_scipy_and_triangle_inequality():
    rng = np.random.default_rng(6)
    for _ in range(5):
        a = rng.normal(0, 1, size=400)
        b = rng.normal(1, 2, size=400)
        c = rng.normal(-1, 0.5, size=400)
        ab, bc, ac = w1_distance(a, b), w1_distance(b, c), w1_distance(a, c)
        assert abs(ab - wasserstein_distance(a, b)) <= 1e-12
        assert ac <= ab + bc + 1e-12
    # unequal sizes go through quantile resampling
    a = rng.normal(size=1000)
    b = rng.normal(size=333)
    assert abs(w1_distance(a, b) - wasserstein_distance(a, b)) <= 0.05


def test_w1_empty_rejected():
    with pytest.raises(ValueError):
        w1_distance([], [1.0])


def test_cost_map_nonnegative_and_symmetric():
    model = models.pendulum_model()
    cost = pendulum_cost()
    grid = TimeGrid(0.0, 2.0, 50)
    thetas, omegas, cmap = mc_cost_map(
        model, cost, theta_range=(-np.pi, np.pi), omega_range=(-2, 2),
        resolution=9, rollouts=120, grid=grid, seed=7,
    )
    assert cmap.min() >= 0.0
    # pendulum drift is odd: the map is symmetric under (theta, omega) -> -(theta, omega)
    flipped = cmap[::-1, ::-1]
    scale = np.maximum(0.3, 0.5 * (cmap + flipped))
    assert (np.abs(cmap - flipped) / scale).max() <= 0.5  # MC noise at 120 rollouts


def test_cost_map_zero_noise_equilibrium():
    model = models.pendulum_model(noise=0.0)
    cost = pendulum_cost()
    pts = np.array([[0.0, 0.0]])
    c = mc_cost_of_points(model, cost, pts, rollouts=3, grid=TimeGrid(0.0, 2.0, 50), seed=8)
    assert abs(c[0]) < 1e-12  # equilibrium of the drift with zero terminal cost


def test_cost_map_resolution_validated():
    with pytest.raises(ValueError):
        mc_cost_map(models.pendulum_model(), pendulum_cost(), resolution=1, rollouts=2)


def test_linear_gaussian_moments_ou_closed_form():
    # scalar OU dX = -X dt + dW from N(0, 1): var_t = e^{-2t} + (1 - e^{-2t})/2
    grid = TimeGrid(0.0, 1.0, 50)
    means, covs = linear_gaussian_moments(
        np.array([[-1.0]]), np.array([[1.0]]), np.array([0.0]), np.array([[1.0]]), grid
    )
    for k, t in enumerate(grid.times()):
        ref = np.exp(-2 * t) + 0.5 * (1 - np.exp(-2 * t))
        assert abs(covs[k, 0, 0] - ref) <= 1e-9
        assert abs(means[k, 0]) == 0.0
