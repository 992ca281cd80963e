"""Closed-form references: linear-quadratic gain, tilted mixtures,
1-D Wasserstein distance, Monte-Carlo cost maps, and Gaussian path moments.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .score import GaussianMixture1D
from .sde import TimeGrid, PointSampler, ZeroControl, simulate_forward, path_rng


@dataclass
class LinearModelConfig:
    A: np.ndarray = field(default_factory=lambda: np.array([[0.0, 1.0], [-1.0, -0.5]]))
    B: np.ndarray = field(default_factory=lambda: np.eye(2))
    Q_f: np.ndarray = field(default_factory=lambda: np.eye(2))
    eps: float = 1.0
    T: float = 2.0


def _lyapunov_rk4(A, Q_f, T, t, n_sub=2000):
    """Integrate dG/ds = -A^T G - G A backward from G(T) = Q_f to time t."""
    G = Q_f.copy()
    h = (T - t) / n_sub

    def rhs(M):
        return -(A.T @ M + M @ A)

    for _ in range(n_sub):
        k1 = rhs(G)
        k2 = rhs(G - 0.5 * h * k1)
        k3 = rhs(G - 0.5 * h * k2)
        k4 = rhs(G - h * k3)
        G = G - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return G


def lyapunov_gain(cfg, t, cross_check=True, tol=1e-8):
    """Gain G(t) = exp(A^T (T-t)) Q_f exp(A (T-t)).

    Two independent routes (matrix exponential, backward RK4 of the
    Lyapunov ODE) must agree to ``tol``; the estimation problem has no
    control term, so the Riccati equation degenerates to Lyapunov.
    """
    A, Q_f, T = np.asarray(cfg.A), np.asarray(cfg.Q_f), cfg.T
    if not 0.0 <= t <= T + 1e-12:
        raise ValueError(f"t={t} outside [0, {T}]")
    E = expm(A * (T - t))
    G = E.T @ Q_f @ E
    if cross_check:
        G_ode = _lyapunov_rk4(A, Q_f, T, t)
        err = np.max(np.abs(G - G_ode))
        if err > tol:
            raise RuntimeError(f"Lyapunov oracle mismatch: expm vs ODE differ by {err:.3g}")
    return G


def tilted_mixture(target, beta, center=3.0):
    """Closed-form tilt of a Gaussian mixture by exp(-beta (x-c)^2 / 2).

    Component k becomes N((m_k/v_k + beta c)/(1/v_k + beta), 1/(1/v_k + beta))
    with unnormalized log-weight log w_k + log N(c; m_k, v_k + 1/beta).
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return GaussianMixture1D(target.weights.copy(), target.means.copy(),
                                 target.variances.copy())
    w, m, v = target.weights, target.means, target.variances
    prec = 1.0 / v + beta
    new_means = (m / v + beta * center) / prec
    new_vars = 1.0 / prec
    s2 = v + 1.0 / beta
    logw = np.log(w) - 0.5 * np.log(2 * np.pi * s2) - 0.5 * (center - m) ** 2 / s2
    logw -= logw.max()
    new_w = np.exp(logw)
    new_w /= new_w.sum()
    return GaussianMixture1D(new_w, new_means, new_vars)


def mse_vs_oracle(phi, cfg, n_eval=10_000, seed=0):
    """Mean squared error of phi(0, .) against the Lyapunov gain map G(0)x."""
    G0 = lyapunov_gain(cfg, 0.0)
    rng = path_rng(seed, 0)
    xi = rng.standard_normal((n_eval, G0.shape[0]))
    pred = phi.value(0.0, xi)
    truth = xi @ G0.T
    return float(np.mean(np.sum((truth - pred) ** 2, axis=1)))


def w1_distance(samples_a, samples_b):
    """1-D Wasserstein distance via sorted samples.

    Equal sizes: mean |order statistics difference|. Unequal sizes: both
    empirical quantile functions are resampled at a common grid first.
    """
    a = np.sort(np.asarray(samples_a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(samples_b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    m = max(a.size, b.size)
    q = (np.arange(m) + 0.5) / m
    qa = np.interp(q, (np.arange(a.size) + 0.5) / a.size, a)
    qb = np.interp(q, (np.arange(b.size) + 0.5) / b.size, b)
    return float(np.mean(np.abs(qa - qb)))


def mc_cost_map(model, cost, theta_range=(-2 * np.pi, 2 * np.pi), omega_range=(-3.0, 3.0),
                resolution=50, rollouts=200, grid=None, seed=0):
    """Monte-Carlo map of the expected terminal cost over initial conditions.

    Returns (thetas, omegas, cost[i_theta, i_omega]); cells simulate
    ``rollouts`` paths each from the cell center under zero control.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if grid is None:
        grid = TimeGrid(0.0, 2.0, 100)
    thetas = np.linspace(*theta_range, resolution)
    omegas = np.linspace(*omega_range, resolution)
    out = np.empty((resolution, resolution))
    for i, th in enumerate(thetas):
        # one batched rollout block per theta row: (resolution * rollouts) paths
        x0 = np.repeat(np.column_stack([np.full(resolution, th), omegas]), rollouts, axis=0)
        XT = _terminal_states(model, grid, x0, seed + i)
        out[i] = cost.loss(XT).reshape(resolution, rollouts).mean(axis=1)
    return thetas, omegas, out


def mc_cost_of_points(model, cost, points, rollouts=200, grid=None, seed=0):
    """Expected terminal cost at each support point (vectorized rollouts)."""
    if grid is None:
        grid = TimeGrid(0.0, 2.0, 100)
    points = np.atleast_2d(points)
    x0 = np.repeat(points, rollouts, axis=0)
    XT = _terminal_states(model, grid, x0, seed)
    return cost.loss(XT).reshape(points.shape[0], rollouts).mean(axis=1)


def _terminal_states(model, grid, x0, seed):
    """Memory-light Euler loop keeping only the current state."""
    n_paths, dim = x0.shape
    dt = grid.dt
    sq = np.sqrt(dt)
    times = grid.times()
    X = x0.copy()
    rng = path_rng(seed, 0)
    for k in range(grid.n_steps):
        g = model.diffusion(times[k])
        X = X + model.drift(times[k], X) * dt + sq * rng.standard_normal(X.shape) @ g.T
    return X


def linear_gaussian_moments(A, g_const, m0, S0, grid, n_sub=20):
    """Mean/covariance path of dX = AX dt + g dW from N(m0, S0), RK4 refined.

    Returns (means (K+1, n), covs (K+1, n, n)) at the grid times.
    """
    A = np.asarray(A, dtype=np.float64)
    GG = g_const @ g_const.T
    h = grid.dt / n_sub
    m = np.asarray(m0, dtype=np.float64).copy()
    S = np.asarray(S0, dtype=np.float64).copy()
    means = [m.copy()]
    covs = [S.copy()]

    def rhs_S(M):
        return A @ M + M @ A.T + GG

    for _ in range(grid.n_steps):
        for _ in range(n_sub):
            k1 = rhs_S(S)
            k2 = rhs_S(S + 0.5 * h * k1)
            k3 = rhs_S(S + 0.5 * h * k2)
            k4 = rhs_S(S + h * k3)
            S = S + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            j1 = A @ m
            j2 = A @ (m + 0.5 * h * j1)
            j3 = A @ (m + 0.5 * h * j2)
            j4 = A @ (m + h * j3)
            m = m + (h / 6.0) * (j1 + 2 * j2 + 2 * j3 + j4)
        means.append(m.copy())
        covs.append(S.copy())
    return np.stack(means), np.stack(covs)


class LyapunovPhi:
    """Exact linear costate field phi(t, x) = G(t) x with its derivatives.

    Drop-in for FuncApproximator in the reversed-BSDE simulator when an
    exact reference is wanted: jacobian G(t), Hessian traces 0.
    """

    def __init__(self, cfg):
        self.cfg = cfg

    def gain(self, t):
        return lyapunov_gain(self.cfg, t, cross_check=False)

    def value(self, t, x):
        return np.atleast_2d(x) @ self.gain(float(t)).T

    def derivatives(self, t, x, G):
        x = np.atleast_2d(x)
        B = x.shape[0]
        M = self.gain(float(t))
        jac = np.broadcast_to(M, (B, *M.shape)).copy()
        return self.value(t, x), jac, np.zeros_like(x)
