"""Forward simulation of controlled diffusions on a uniform time grid.

Euler-Maruyama with counter-based per-trajectory noise streams: the
stream of trajectory i in a batch is a Philox generator keyed by
(seed, i), so a batch is reproducible bit-for-bit regardless of how the
trajectories are scheduled, and trajectory i does not change when
n_paths does. Gaussian increments come from numpy's Philox
standard_normal; a port only needs to match moments, not bit patterns.
"""

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


class SimulationDivergedError(RuntimeError):
    def __init__(self, trajectory, step, t):
        super().__init__(
            f"non-finite state in trajectory {trajectory} at step {step} (t={t:.6g})"
        )
        self.trajectory = trajectory
        self.step = step


def path_rng(seed, i):
    """Philox stream keyed by (seed, trajectory index)."""
    key = np.array([seed & MASK64, i & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def domain_seed(seed, domain):
    """Derive a disjoint sub-seed for a named usage domain (fwd/rev/...)."""
    ss = np.random.SeedSequence([int(seed) & MASK64, int(domain) & MASK64])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1 or not self.T > self.t0:
            raise ValueError(f"degenerate time grid: {self}")

    @property
    def dt(self):
        return (self.T - self.t0) / self.n_steps

    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


class SdeModel:
    """Diffusion dX = f(t,X)dt + g(t)(U dt + dW) with state-independent g.

    drift and drift_jacobian act on batches: drift(t, X) -> (B, n),
    drift_jacobian(t, X) -> (B, n, n). diffusion(t) -> (n, n).
    """

    def __init__(self, dim, drift, diffusion, drift_jacobian=None, name=""):
        self.dim = int(dim)
        self.drift = drift
        self.diffusion = diffusion
        self.name = name
        if drift_jacobian is None:
            drift_jacobian = lambda t, X: np.stack(
                [drift_jacobian_fd(self, t, x) for x in np.atleast_2d(X)]
            )
        self.drift_jacobian = drift_jacobian

    def G(self, t):
        g = self.diffusion(t)
        return g @ g.T


class ZeroControl:
    """The uncontrolled law: k(t, x) = 0."""

    def __call__(self, t, X):
        X = np.atleast_2d(X)
        return np.zeros_like(X)


class NeuralControl:
    """Feedback law equal to the network output: k(t, x) = net(t, x)."""

    def __init__(self, net):
        self.net = net

    def __call__(self, t, X):
        return self.net.value(t, X)


class PhiGainControl:
    """Costate-gain feedback k(t, x) = -g(t)^T phi(t, x)."""

    def __init__(self, phi, diffusion):
        self.phi = phi
        self.diffusion = diffusion

    def __call__(self, t, X):
        g = self.diffusion(t)
        return -self.phi.value(t, X) @ g  # row b is -(g^T phi(t, x_b))^T


class GaussianSampler:
    """x0 ~ N(mean, cov) drawn from the per-trajectory stream."""

    def __init__(self, mean, cov_chol=None):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        n = self.mean.size
        self.chol = np.eye(n) if cov_chol is None else np.atleast_2d(cov_chol)
        self.dim = n

    def sample(self, rng):
        return self.mean + self.chol @ rng.standard_normal(self.dim)


class PointSampler:
    """Deterministic start: every trajectory begins at the same point."""

    def __init__(self, x0):
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
        self.dim = self.x0.size

    def sample(self, rng):
        return self.x0.copy()


class EmpiricalSampler:
    """Uniform draw from a finite set of support points."""

    def __init__(self, points):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.dim = self.points.shape[1]

    def sample(self, rng):
        return self.points[rng.integers(0, self.points.shape[0])].copy()


class CallableSampler:
    """Adapter for an arbitrary rng -> x0 function."""

    def __init__(self, fn, dim):
        self.fn = fn
        self.dim = dim

    def sample(self, rng):
        return np.atleast_1d(np.asarray(self.fn(rng), dtype=np.float64))


@dataclass
class TrajectoryBatch:
    grid: TimeGrid
    states: np.ndarray  # (N, n_steps+1, n)
    controls: np.ndarray  # (N, n_steps, n)
    noises: np.ndarray  # (N, n_steps, n), Brownian increments
    seed: int

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[2]

    def terminal_states(self):
        return self.states[:, -1, :]

    def to_npz(self, path):
        np.savez_compressed(
            path,
            times=self.grid.times(),
            states=self.states,
            controls=self.controls,
            noises=self.noises,
            seed=np.int64(self.seed),
        )

    def to_csv(self, path):
        """Long-format dump: one row per (t, trajectory), x components as columns."""
        times = self.grid.times()
        n = self.dim
        with open(path, "w") as fh:
            fh.write("t,i," + ",".join(f"x{j+1}" for j in range(n)) + "\n")
            for i in range(self.n_paths):
                for k, t in enumerate(times):
                    row = ",".join(f"{v:.17g}" for v in self.states[i, k])
                    fh.write(f"{t:.17g},{i},{row}\n")


def _draw_initial_and_noise(init, grid, n_paths, seed, dim):
    x0 = np.empty((n_paths, dim))
    dW = np.empty((n_paths, grid.n_steps, dim))
    sqdt = np.sqrt(grid.dt)
    for i in range(n_paths):
        rng = path_rng(seed, i)
        x0[i] = init.sample(rng)
        dW[i] = sqdt * rng.standard_normal((grid.n_steps, dim))
    return x0, dW


def simulate_forward(model, init, control, grid, n_paths, seed):
    """Euler-Maruyama batch of the controlled SDE.

    X[k+1] = X[k] + f(t_k, X[k]) dt + g(t_k) (k(t_k, X[k]) dt + dW[k]).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if getattr(init, "dim", model.dim) != model.dim:
        raise ValueError("initial sampler dimension does not match the model")
    x0, dW = _draw_initial_and_noise(init, grid, n_paths, seed, model.dim)
    states, controls = _euler_loop(model.drift, model.diffusion, control, grid, x0, dW)
    return TrajectoryBatch(grid=grid, states=states, controls=controls, noises=dW, seed=seed)


def _euler_loop(drift, diffusion, control, grid, x0, dW):
    n_paths, dim = x0.shape
    K = grid.n_steps
    dt = grid.dt
    times = grid.times()
    states = np.empty((n_paths, K + 1, dim))
    controls = np.empty((n_paths, K, dim))
    states[:, 0] = x0
    X = x0.copy()
    for k in range(K):
        t = times[k]
        U = control(t, X)
        g = diffusion(t)
        X = X + drift(t, X) * dt + (U * dt + dW[:, k]) @ g.T
        if not np.all(np.isfinite(X)):
            bad = np.flatnonzero(~np.isfinite(X).all(axis=1))[0]
            raise SimulationDivergedError(int(bad), k + 1, times[k + 1])
        states[:, k + 1] = X
        controls[:, k] = U
    return states, controls


def simulate_sensitivity(model, batch):
    """Initial-condition sensitivity eta along each stored path.

    eta[k+1] = (I + dt J_k) eta[k] with J_k = df/dx(t_k, X[k]), eta[0] = I.
    Valid for batches generated with zero or state-independent control.
    """
    if batch.dim != model.dim:
        raise ValueError("batch dimension does not match the model")
    N, K1, n = batch.states.shape
    K = K1 - 1
    dt = batch.grid.dt
    times = batch.grid.times()
    eta = np.empty((N, K + 1, n, n))
    eta[:, 0] = np.eye(n)
    for k in range(K):
        J = model.drift_jacobian(times[k], batch.states[:, k])
        eta[:, k + 1] = eta[:, k] + dt * np.einsum("bij,bjl->bil", J, eta[:, k])
    return eta


def drift_jacobian_fd(model, t, x):
    """Central finite-difference Jacobian of the drift at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        h = 1e-5 * (1.0 + abs(x[j]))
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        J[:, j] = (model.drift(t, xp[None, :])[0] - model.drift(t, xm[None, :])[0]) / (2 * h)
    if not np.all(np.isfinite(J)):
        raise NonFiniteDriftError(t, x)
    return J


class NonFiniteDriftError(RuntimeError):
    def __init__(self, t, x):
        super().__init__(f"drift not finite near t={t:.6g}, x={np.asarray(x)}")
