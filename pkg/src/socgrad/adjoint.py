"""Pathwise (non-adapted) adjoint, its regression projection, and the
discrete backprop baseline.

The backward recursions use the left-endpoint Jacobian J_k = df/dx(t_k, X_k),
which makes the costate recursion the exact transpose of the sensitivity
recursion: lambda[k]^T eta[k] is then constant to roundoff, and the
pathwise gradient equals backpropagation through the discrete Euler map.
"""

import numpy as np

from .nets import AdamState, FuncApproximator, train_regression


class TerminalCost:
    """Terminal loss with its gradient; beta tilts are folded into the loss."""

    def __init__(self, loss, grad, beta=0.0, name=""):
        self.loss = loss
        self.grad = grad
        self.beta = float(beta)
        self.name = name


def quadratic_cost(Q_f):
    Q_f = np.atleast_2d(np.asarray(Q_f, dtype=np.float64))

    def loss(X):
        X = np.atleast_2d(X)
        return 0.5 * np.einsum("bi,ij,bj->b", X, Q_f, X)

    def grad(X):
        return np.atleast_2d(X) @ Q_f.T

    return TerminalCost(loss, grad, name="quadratic")


def pendulum_cost():
    """0.5 x2^2 + 1 - cos(x1): swing-up style terminal penalty."""

    def loss(X):
        X = np.atleast_2d(X)
        return 0.5 * X[:, 1] ** 2 + 1.0 - np.cos(X[:, 0])

    def grad(X):
        X = np.atleast_2d(X)
        out = np.empty_like(X)
        out[:, 0] = np.sin(X[:, 0])
        out[:, 1] = X[:, 1]
        return out

    return TerminalCost(loss, grad, name="pendulum")


def tilted_cost(beta, center=3.0):
    """1-D fine-tuning loss beta * (x - center)^2 / 2."""

    def loss(X):
        X = np.atleast_2d(X)
        return 0.5 * beta * (X[:, 0] - center) ** 2

    def grad(X):
        X = np.atleast_2d(X)
        return beta * (X - center)

    return TerminalCost(loss, grad, beta=beta, name="tilted")


def zero_cost(dim):
    def loss(X):
        return np.zeros(np.atleast_2d(X).shape[0])

    def grad(X):
        return np.zeros_like(np.atleast_2d(X))

    return TerminalCost(loss, grad, name="zero")


def simulate_nonadapted(batch, model, cost):
    """Backward costate ODE along each stored path.

    Y[K] = grad l_f(X_T); Y[k] = (I + dt J_k)^T Y[k+1]. Returns (N, K+1, n).
    """
    N, K1, n = batch.states.shape
    K = K1 - 1
    dt = batch.grid.dt
    times = batch.grid.times()
    Y = np.empty((N, K1, n))
    Y[:, K] = cost.grad(batch.states[:, K])
    for k in range(K - 1, -1, -1):
        J = model.drift_jacobian(times[k], batch.states[:, k])
        Y[:, k] = Y[:, k + 1] + dt * np.einsum("bji,bj->bi", J, Y[:, k + 1])
    return Y


def discrete_pathwise_gradient(batch, model, cost, return_path=False):
    """Gradient of l_f(X_T) w.r.t. X_0 through the exact Euler recursion.

    Reverse accumulation with frozen noises and controls; identical to
    central finite differences of the discrete map up to FD error.
    """
    N, K1, n = batch.states.shape
    K = K1 - 1
    dt = batch.grid.dt
    times = batch.grid.times()
    lam = cost.grad(batch.states[:, K])
    path = np.empty((N, K1, n)) if return_path else None
    if return_path:
        path[:, K] = lam
    for k in range(K - 1, -1, -1):
        J = model.drift_jacobian(times[k], batch.states[:, k])
        step = np.eye(n) + dt * J
        lam = np.einsum("bji,bj->bi", step, lam)
        if return_path:
            path[:, k] = lam
    return (lam, path) if return_path else lam


def pnaa_fit(batches, model, cost, net=None, steps=20000, batch_size=128,
             lr=1e-3, seed=0, hidden=64):
    """Project the non-adapted adjoint onto (t, X_t) by regression.

    Fits phi_hat(t_k, X[k]) ~ Y[k] over every trajectory and grid index,
    estimating the conditional expectation E[Y_t | X_t].
    """
    if not isinstance(batches, (list, tuple)):
        batches = [batches]
    t_list, x_list, y_list = [], [], []
    for batch in batches:
        Y = simulate_nonadapted(batch, model, cost)
        N, K1, n = batch.states.shape
        t_list.append(np.tile(batch.grid.times(), N))
        x_list.append(batch.states.reshape(N * K1, n))
        y_list.append(Y.reshape(N * K1, n))
    t_vals = np.concatenate(t_list)
    x_vals = np.concatenate(x_list)
    y_vals = np.concatenate(y_list)
    if net is None:
        net = FuncApproximator(model.dim, hidden=hidden, t_scale=batches[0].grid.T, seed=seed)
    state = AdamState.for_params(net.params, lr=lr)
    info = train_regression(net, t_vals, x_vals, y_vals, steps,
                            batch_size=batch_size, state=state, seed=seed)
    return net, info
