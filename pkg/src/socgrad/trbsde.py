"""Time-reversed diffusion and time-reversed BSDE solver.

The adapted costate pair (Y, Z) = (phi(t, X_t), g^T dphi/dx) solves a
BSDE with a terminal condition, which cannot be simulated forward under
the forward filtration. Reversing time turns it into an initial-value
SDE driven by the reversed diffusion: simulate the reversed states once,
then iterate {simulate the reversed costate with the current phi;
regress phi onto the simulated pairs}.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .nets import AdamState, FuncApproximator, train_regression
from .score import train_score
from .sde import (
    TimeGrid,
    TrajectoryBatch,
    domain_seed,
    path_rng,
    simulate_forward,
    _euler_loop,
)


def hamiltonian_grad_x(model, t, x, y):
    """x-gradient of the Hamiltonian: (df/dx)^T y for state-independent g."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    J = model.drift_jacobian(t, x)
    return np.einsum("bji,bj->bi", J, y)


class ReversedModel:
    """Time reversal of a controlled diffusion given a score field.

    drift(t, x) = -f(T-t, x) + s(T-t, x); diffusion(t) = -g(T-t);
    control(t, x) = k(T-t, x).
    """

    def __init__(self, model, score, control, T):
        self.fwd = model
        self.score = score
        self.control_fwd = control
        self.T = float(T)
        self.dim = model.dim

    def drift(self, t, X):
        tf = self.T - t
        return -self.fwd.drift(tf, X) + self.score(tf, np.atleast_2d(X))

    def diffusion(self, t):
        return -self.fwd.diffusion(self.T - t)

    def control(self, t, X):
        return self.control_fwd(self.T - t, X)


def simulate_reversed(terminals, rmodel, grid, seed):
    """Euler-Maruyama of the reversed SDE started at the forward terminals.

    Noise streams are keyed by (seed, i) like the forward pass but live
    in their own seed domain, so they are independent of it.
    """
    x0 = np.atleast_2d(np.asarray(terminals, dtype=np.float64))
    n_paths, dim = x0.shape
    dW = np.empty((n_paths, grid.n_steps, dim))
    sq = np.sqrt(grid.dt)
    for i in range(n_paths):
        dW[i] = sq * path_rng(seed, i).standard_normal((grid.n_steps, dim))
    states, controls = _euler_loop(
        rmodel.drift, rmodel.diffusion, rmodel.control, grid, x0, dW
    )
    return TrajectoryBatch(grid=grid, states=states, controls=controls, noises=dW, seed=seed)


@dataclass
class ReversedAdjointPath:
    Y: np.ndarray  # (N, K+1, n) costate along reversed paths
    Z: np.ndarray  # (N, K+1, n, n), g~^T dphi/dx at each grid index


def _phi_path_derivs(phi, rbatch, rmodel):
    """phi value/jacobian/G-weighted Hessian trace at every (T-t_k, X~_k).

    One batched call per grid index: the per-step working set stays
    cache-resident, which beats one huge fused pass on this problem size.
    """
    grid = rbatch.grid
    times = grid.times()
    T = rmodel.T
    N, K1, n = rbatch.states.shape
    vals = np.empty((N, K1, n))
    jacs = np.empty((N, K1, n, n))
    ghts = np.empty((N, K1, n))
    for k in range(K1):
        vals[:, k], jacs[:, k], ghts[:, k] = phi.derivatives(
            T - times[k], rbatch.states[:, k], rmodel.fwd.G(T - times[k])
        )
    return vals, jacs, ghts


def tr_bsde_path_cache(rbatch, rmodel):
    """Score values and forward drift Jacobians along the reversed paths.

    Both depend only on the stored states, so solve_phi computes them once
    and reuses them across the J_f costate simulations.
    """
    times = rbatch.grid.times()
    T = rmodel.T
    N, K1, n = rbatch.states.shape
    scores = np.empty((N, K1 - 1, n))
    jacs_f = np.empty((N, K1 - 1, n, n))
    for k in range(K1 - 1):
        tf = T - times[k]
        scores[:, k] = rmodel.score(tf, rbatch.states[:, k])
        jacs_f[:, k] = rmodel.fwd.drift_jacobian(tf, rbatch.states[:, k])
    return scores, jacs_f


def simulate_tr_bsde(rbatch, rmodel, phi, cost, cache=None):
    """Forward-in-reversed-time costate recursion along stored reversed paths.

    Y~[0] = grad l_f(X~[0]);
    Y~[k+1] = Y~[k] + dt [ (df/dx)^T(T-t_k, X~_k) Y~[k] + c(T-t_k, X~_k) ]
              + Z~[k]^T dW~[k],
    with the correction c = (dphi/dx) s + Tr(G d2phi/dx2) per component and
    Z~ = g~^T (dphi/dx)^T derived from the current phi iterate. Reuses the
    noise increments stored in the reversed batch (coupled system).
    """
    grid = rbatch.grid
    dt = grid.dt
    times = grid.times()
    N, K1, n = rbatch.states.shape
    K = K1 - 1

    _, jacs, ghts = _phi_path_derivs(phi, rbatch, rmodel)
    scores, jacs_f = tr_bsde_path_cache(rbatch, rmodel) if cache is None else cache

    Y = np.empty((N, K1, n))
    Y[:, 0] = cost.grad(rbatch.states[:, 0])
    Z = np.empty((N, K1, n, n))
    for k in range(K1):
        gt = rmodel.diffusion(times[k])
        Z[:, k] = np.swapaxes(jacs[:, k] @ gt, 1, 2)

    for k in range(K):
        c = np.einsum("bij,bj->bi", jacs[:, k], scores[:, k]) + ghts[:, k]
        h = np.einsum("bji,bj->bi", jacs_f[:, k], Y[:, k])
        mart = np.einsum("bji,bj->bi", Z[:, k], rbatch.noises[:, k])
        Y[:, k + 1] = Y[:, k] + dt * (h + c) + mart
        if not np.all(np.isfinite(Y[:, k + 1])):
            bad = int(np.flatnonzero(~np.isfinite(Y[:, k + 1]).all(axis=1))[0])
            raise RuntimeError(
                f"reversed costate diverged: trajectory {bad} at reversed step {k + 1}"
            )
    return ReversedAdjointPath(Y=Y, Z=Z)


@dataclass
class SolvePhiConfig:
    grid: TimeGrid
    n_paths: int = 2000
    J_f: int = 10
    score_steps: int = 2000
    reg_steps: int = 2000
    batch_size: int = 128
    lr: float = 1e-3
    score_lr: float = 1e-3
    hidden: int = 64


def solve_phi(
    model,
    control,
    cost,
    q0_sampler,
    config,
    seed=0,
    warm_phi=None,
    warm_psi=None,
    score_field=None,
    oracle_cb=None,
):
    """Iterative time-reversal solver for the adapted costate map phi.

    Simulate the controlled forward batch, learn the score by implicit
    score matching (unless an exact field is injected), reverse-simulate
    the states once, then alternate J_f times between simulating the
    reversed costate under the current phi and regressing phi onto the
    simulated (T - t, X~) -> Y~ pairs.

    Returns (phi, info); info carries the forward batch, score field,
    per-iteration regression losses and budget counters.
    """
    grid = config.grid
    fwd = simulate_forward(
        model, q0_sampler, control, grid, config.n_paths, domain_seed(seed, 1)
    )
    info = {"n_forward_sims": 1, "n_opt_steps": 0, "reg_losses": [], "oracle": []}
    psi = warm_psi
    if score_field is None:
        score_field, score_info = train_score(
            fwd,
            model.G,
            psi=psi,
            steps=config.score_steps,
            batch_size=config.batch_size,
            lr=config.score_lr,
            seed=domain_seed(seed, 3),
            hidden=config.hidden,
        )
        psi = score_info["net"]
        info["n_opt_steps"] += config.score_steps
    rmodel = ReversedModel(model, score_field, control, grid.T)
    rbatch = simulate_reversed(fwd.terminal_states(), rmodel, grid, domain_seed(seed, 2))

    phi = warm_phi
    if phi is None:
        phi = FuncApproximator(
            model.dim, hidden=config.hidden, t_scale=grid.T, seed=domain_seed(seed, 5) % (2**32)
        )
    times = grid.times()
    N, K1, n = rbatch.states.shape
    t_fwd = np.repeat((grid.T - times)[None, :], N, axis=0).ravel()
    x_flat = rbatch.states.reshape(N * K1, n)
    cache = tr_bsde_path_cache(rbatch, rmodel)
    for j in range(config.J_f):
        ypath = simulate_tr_bsde(rbatch, rmodel, phi, cost, cache=cache)
        reg = train_regression(
            phi,
            t_fwd,
            x_flat,
            ypath.Y.reshape(N * K1, n),
            config.reg_steps,
            batch_size=config.batch_size,
            state=AdamState.for_params(phi.params, lr=config.lr),
            seed=domain_seed(seed, 100 + j),
        )
        info["n_opt_steps"] += config.reg_steps
        info["reg_losses"].append(reg["final_holdout"])
        if oracle_cb is not None:
            info["oracle"].append(float(oracle_cb(phi)))
        losses = info["reg_losses"]
        if len(losses) >= 3 and losses[-1] >= losses[-2] >= losses[-3]:
            warnings.warn(
                f"phi regression loss non-decreasing over 3 outer iterations "
                f"(last three: {losses[-3]:.4g}, {losses[-2]:.4g}, {losses[-1]:.4g})",
                RuntimeWarning,
            )
    info["forward_batch"] = fwd
    info["reversed_batch"] = rbatch
    info["score_field"] = score_field
    info["score_net"] = psi
    return phi, info
