"""Score fields: analytic Gaussian-mixture scores and implicit score matching.

The score convention throughout is the diffusion-weighted one,
s(t,x) = G(t) grad_x log p(t,x) for state-independent G, which is what
enters the drift of the time-reversed diffusion.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .nets import AdamState, adam_step, FuncApproximator

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GaussianMixture1D:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        self.means = np.atleast_1d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_1d(np.asarray(self.variances, dtype=np.float64))
        if np.any(self.weights < 0) or np.any(self.variances <= 0):
            raise ValueError("mixture needs nonnegative weights and positive variances")
        s = self.weights.sum()
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {s}, expected 1")

    def _log_terms(self, x):
        x = np.asarray(x, dtype=np.float64)
        d = x[..., None] - self.means
        return (
            np.log(self.weights)
            - 0.5 * (LOG_2PI + np.log(self.variances))
            - 0.5 * d * d / self.variances
        )

    def logpdf(self, x):
        lt = self._log_terms(x)
        mx = lt.max(axis=-1)
        return mx + np.log(np.exp(lt - mx[..., None]).sum(axis=-1))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def dlogpdf(self, x):
        """grad log p, computed with softmax responsibilities (no underflow)."""
        x = np.asarray(x, dtype=np.float64)
        lt = self._log_terms(x)
        mx = lt.max(axis=-1, keepdims=True)
        r = np.exp(lt - mx)
        r /= r.sum(axis=-1, keepdims=True)
        return (r * (self.means - x[..., None]) / self.variances).sum(axis=-1)

    def d2logpdf(self, x):
        """Second derivative of log p: p''/p - (p'/p)^2 via responsibilities."""
        x = np.asarray(x, dtype=np.float64)
        lt = self._log_terms(x)
        mx = lt.max(axis=-1, keepdims=True)
        r = np.exp(lt - mx)
        r /= r.sum(axis=-1, keepdims=True)
        a = (self.means - x[..., None]) / self.variances
        dlp = (r * a).sum(axis=-1)
        # p''/p = sum_k r_k (a_k^2 - 1/v_k)
        ppp = (r * (a * a - 1.0 / self.variances)).sum(axis=-1)
        return ppp - dlp * dlp

    def mean(self):
        return float(np.dot(self.weights, self.means))

    def second_moment(self):
        return float(np.dot(self.weights, self.variances + self.means ** 2))

    def var(self):
        return self.second_moment() - self.mean() ** 2

    def sample(self, rng, size):
        comp = rng.choice(self.weights.size, size=size, p=self.weights)
        return self.means[comp] + np.sqrt(self.variances[comp]) * rng.standard_normal(size)

    def noised(self, alpha):
        """Mixture after unit-stationary OU noising with decay factor alpha."""
        a = float(alpha)
        return GaussianMixture1D(
            self.weights.copy(),
            a * self.means,
            a * a * self.variances + (1.0 - a * a),
        )


def analytic_mixture_score(mix, G, x):
    """Exact diffusion-weighted score G * dlog p for a 1-D Gaussian mixture."""
    if np.any(np.asarray(G) < 0):
        raise ValueError("G must be nonnegative")
    return np.asarray(G, dtype=np.float64) * mix.dlogpdf(x)


class AnalyticScoreField:
    """Score field backed by a closure s(t, X) -> (B, n)."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, t, X):
        return self.fn(t, np.atleast_2d(X))


class ZeroScoreField:
    def __call__(self, t, X):
        return np.zeros_like(np.atleast_2d(X))


class NetScoreField:
    """Learned score: the network output is s directly."""

    def __init__(self, net):
        self.net = net

    def __call__(self, t, X):
        return self.net.value(t, X)


class GaussianPathScore:
    """Exact score of a Gaussian-marginal path given grid-time moments.

    s(t_k, x) = -G(t_k) Sigma_k^{-1} (x - m_k); evaluation snaps t to the
    nearest grid time (all callers evaluate exactly on the grid).
    """

    def __init__(self, times, means, covs, G_of_t):
        self.times = np.asarray(times, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.float64)
        self.mats = np.stack(
            [G_of_t(t) @ np.linalg.inv(c) for t, c in zip(self.times, covs)]
        )

    def __call__(self, t, X):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 + 1e-6 * max(1.0, abs(t)):
            raise ValueError(f"score requested off-grid at t={t}")
        X = np.atleast_2d(X)
        return -(X - self.means[k]) @ self.mats[k].T


class ScoreDivergedError(RuntimeError):
    pass


def _ism_dataset(batch, G_of_t, t_scale):
    """Flatten a trajectory batch into ISM training arrays."""
    N, K1, n = batch.states.shape
    times = batch.grid.times()
    d_in = 1 + n
    # per grid time: eigendirections and eigenvalues of G(t)
    dirs_t = np.zeros((K1, n, d_in))
    sig_t = np.zeros((K1, n))
    for k, t in enumerate(times):
        G = G_of_t(t)
        sig, U = np.linalg.eigh(0.5 * (G + G.T))
        dirs_t[k, :, 1:] = U.T
        sig_t[k] = sig
    inputs = np.empty((N * K1, d_in))
    inputs[:, 0] = np.tile(times / t_scale, N)
    inputs[:, 1:] = batch.states.reshape(N * K1, n)
    k_idx = np.tile(np.arange(K1), N)
    return inputs, dirs_t, sig_t, k_idx


def ism_loss(net, batch, G_of_t):
    """Implicit score matching objective averaged over all stored (t_k, X_k).

    Mean of 0.5 ||psi||^2 + sum_ij G_ij(t) d psi_i / d x_j, the sampled
    version of the expectation over t ~ Unif{grid} and X_t. Works for any
    object exposing derivatives(t, x, G) (training uses the fused kernel).
    """
    times = batch.grid.times()
    total = 0.0
    count = 0
    for k, t in enumerate(times):
        G = G_of_t(t)
        val, jac, _ = net.derivatives(t, batch.states[:, k], G)
        total += float(np.sum(0.5 * np.sum(val * val, axis=1) + np.einsum("ij,bij->b", G, jac)))
        count += val.shape[0]
    loss = total / count
    if not np.isfinite(loss):
        raise ScoreDivergedError("ISM loss is not finite")
    return loss


def train_score(
    batch,
    G_of_t,
    psi=None,
    steps=2000,
    batch_size=128,
    lr=1e-3,
    seed=0,
    hidden=64,
):
    """Learn the score of the law of the batch by implicit score matching.

    Returns (NetScoreField, info). psi can be a warm-start network; by
    default a fresh zero-output net is built (initial loss 0).
    """
    n = batch.dim
    if psi is None:
        psi = FuncApproximator(n, hidden=hidden, t_scale=batch.grid.T, seed=seed)
    inputs, dirs_t, sig_t, k_idx = _ism_dataset(batch, G_of_t, psi.t_scale)
    m = inputs.shape[0]
    rng = np.random.default_rng(seed)
    state = AdamState.for_params(psi.params, lr=lr)
    loss0 = None
    history = []
    for step in range(steps):
        idx = rng.integers(0, m, size=min(batch_size, m))
        xb = np.ascontiguousarray(inputs[idx])
        kb = k_idx[idx]
        DIRS = np.ascontiguousarray(dirs_t[kb])
        SIG = np.ascontiguousarray(sig_t[kb])
        CV = np.ascontiguousarray(DIRS[:, :, 1:])
        loss, grad = kernels.mlp_ism_loss_grad(psi.params, xb, DIRS, CV, SIG, *psi._dims)
        if loss0 is None:
            loss0 = loss
        if not np.isfinite(loss) or loss > 10.0 * max(1.0, abs(loss0)):
            raise ScoreDivergedError(
                f"ISM training diverged at step {step}: loss={loss:.3g}, initial={loss0:.3g}"
            )
        adam_step(psi.params, grad, state)
        if step % 200 == 0 or step == steps - 1:
            history.append(float(loss))
    return NetScoreField(psi), {"net": psi, "loss_history": history}
