"""Initial-distribution optimization for the stochastic pendulum.

The initial law is an empirical cloud of support points; each point is
an independent optimization variable moved by plain gradient descent.
The gradient at a point is phi(0, theta) (reversed-BSDE or projected
adjoint estimate, refreshed periodically as the cloud shifts), or a
fresh-noise pathwise gradient average for the backprop baseline.
"""

from dataclasses import dataclass, field

import numpy as np

from .adjoint import discrete_pathwise_gradient, pnaa_fit
from .oracles import mc_cost_of_points
from .sde import EmpiricalSampler, TimeGrid, TrajectoryBatch, ZeroControl, domain_seed, path_rng, simulate_forward, _euler_loop
from .trbsde import SolvePhiConfig, solve_phi

METHODS = ("trbsde", "pnaa", "pathwise")


@dataclass
class EmpiricalInit:
    points: np.ndarray  # (N_pts, 2)
    frozen: np.ndarray = None  # bool mask of diverged points

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.frozen is None:
            self.frozen = np.zeros(self.points.shape[0], dtype=bool)


@dataclass
class SupportOptConfig:
    iters: int = 1500
    step: float = 1e-3
    refresh_every: int = 500
    n_paths: int = 1000
    J_f: int = 5
    reg_steps: int = 1000
    score_steps: int = 1000
    pnaa_steps: int = 5000  # = J_f * reg_steps, budget parity with trbsde
    pathwise_rollouts: int = 16
    history_every: int = 100
    cost_rollouts: int = 200
    freeze_norm: float = 50.0
    batch_size: int = 128
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(0.0, 2.0, 100))


def _fit_phi(method, model, cost, points, cfg, seed, warm_phi=None, warm_psi=None):
    sampler = EmpiricalSampler(points)
    if method == "trbsde":
        sp = SolvePhiConfig(
            grid=cfg.grid,
            n_paths=cfg.n_paths,
            J_f=cfg.J_f,
            score_steps=cfg.score_steps,
            reg_steps=cfg.reg_steps,
            batch_size=cfg.batch_size,
        )
        phi, info = solve_phi(
            model, ZeroControl(), cost, sampler, sp, seed=seed,
            warm_phi=warm_phi, warm_psi=warm_psi,
        )
        return phi, info.get("score_net")
    batch = simulate_forward(model, sampler, ZeroControl(), cfg.grid, cfg.n_paths, seed)
    phi, _ = pnaa_fit(
        batch, model, cost, net=warm_phi, steps=cfg.pnaa_steps,
        batch_size=cfg.batch_size, seed=seed % (2 ** 32),
    )
    return phi, None


def _pathwise_gradients(model, cost, points, cfg, seed):
    """Average of fresh-noise discrete pathwise gradients per point."""
    M = cfg.pathwise_rollouts
    x0 = np.repeat(points, M, axis=0)
    n_paths, dim = x0.shape
    rng = path_rng(seed, 1)
    dW = np.sqrt(cfg.grid.dt) * rng.standard_normal((n_paths, cfg.grid.n_steps, dim))
    states, controls = _euler_loop(model.drift, model.diffusion, ZeroControl(), cfg.grid, x0, dW)
    batch = TrajectoryBatch(grid=cfg.grid, states=states, controls=controls, noises=dW, seed=seed)
    lam0 = discrete_pathwise_gradient(batch, model, cost)
    return lam0.reshape(points.shape[0], M, dim).mean(axis=1)


def optimize_support(method, model, cost, points0, cfg=None, seed=0):
    """Gradient descent on the support points of the empirical initial law.

    Returns (EmpiricalInit, history). Points whose norm exceeds the freeze
    threshold are frozen in place and flagged, never dropped. History rows
    log the Monte-Carlo mean cost of the cloud every history_every
    iterations plus point snapshots.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    cfg = cfg or SupportOptConfig()
    if cfg.iters < 1:
        raise ValueError("iters must be >= 1")
    init = EmpiricalInit(np.array(points0, dtype=np.float64, copy=True))
    n_pts = init.points.shape[0]
    history = []
    phi = psi = None
    for it in range(cfg.iters):
        if method in ("trbsde", "pnaa") and it % cfg.refresh_every == 0:
            phi, psi = _fit_phi(
                method, model, cost, init.points[~init.frozen], cfg,
                domain_seed(seed, 50_000 + it), warm_phi=phi, warm_psi=psi,
            )
        if it % cfg.history_every == 0:
            costs = mc_cost_of_points(
                model, cost, init.points, rollouts=cfg.cost_rollouts,
                grid=cfg.grid, seed=domain_seed(seed, 60_000 + it),
            )
            history.append(
                {
                    "iter": it,
                    "mean_cost": float(costs.mean()),
                    "n_frozen": int(init.frozen.sum()),
                    "points": init.points.copy(),
                }
            )
        if method == "pathwise":
            grads = _pathwise_gradients(
                model, cost, init.points, cfg, domain_seed(seed, 70_000 + it)
            )
        else:
            grads = phi.value(0.0, init.points)
        grads = np.where(init.frozen[:, None], 0.0, grads)
        init.points -= cfg.step * grads
        init.frozen |= np.linalg.norm(init.points, axis=1) > cfg.freeze_norm
    costs = mc_cost_of_points(
        model, cost, init.points, rollouts=cfg.cost_rollouts,
        grid=cfg.grid, seed=domain_seed(seed, 61_000),
    )
    history.append(
        {
            "iter": cfg.iters,
            "mean_cost": float(costs.mean()),
            "n_frozen": int(init.frozen.sum()),
            "points": init.points.copy(),
        }
    )
    assert init.points.shape[0] == n_pts
    return init, history
