"""Concrete diffusion models used by the experiments and tests."""

import numpy as np

from .sde import SdeModel

LINEAR_A = np.array([[0.0, 1.0], [-1.0, -0.5]])


def linear_model(A=None, eps=1.0, B=None):
    """2-D (or n-D) linear diffusion dX = A X dt + eps B dW."""
    A = LINEAR_A if A is None else np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    B = np.eye(n) if B is None else np.asarray(B, dtype=np.float64)
    g = eps * B

    def drift(t, X):
        return np.atleast_2d(X) @ A.T

    def jac(t, X):
        return np.broadcast_to(A, (np.atleast_2d(X).shape[0], n, n)).copy()

    return SdeModel(n, drift, lambda t: g, jac, name="linear")


def pendulum_model(damping=0.01, noise=0.5):
    """Stochastic pendulum: f = (x2, sin(x1) - damping x2), noise on x2 only."""
    g = np.array([[0.0, 0.0], [0.0, noise]])

    def drift(t, X):
        X = np.atleast_2d(X)
        out = np.empty_like(X)
        out[:, 0] = X[:, 1]
        out[:, 1] = np.sin(X[:, 0]) - damping * X[:, 1]
        return out

    def jac(t, X):
        X = np.atleast_2d(X)
        J = np.zeros((X.shape[0], 2, 2))
        J[:, 0, 1] = 1.0
        J[:, 1, 0] = np.cos(X[:, 0])
        J[:, 1, 1] = -damping
        return J

    return SdeModel(2, drift, lambda t: g, jac, name="pendulum")


def ou_model(rate=1.0, sigma=1.0, dim=1):
    """Ornstein-Uhlenbeck dX = -rate X dt + sigma dW."""
    g = sigma * np.eye(dim)

    def drift(t, X):
        return -rate * np.atleast_2d(X)

    def jac(t, X):
        X = np.atleast_2d(X)
        return np.broadcast_to(-rate * np.eye(dim), (X.shape[0], dim, dim)).copy()

    return SdeModel(dim, drift, lambda t: g, jac, name="ou")


def constant_model(dim, drift_value=None, noise=0.0):
    """Constant drift and diffusion, for degenerate-case tests."""
    c = np.zeros(dim) if drift_value is None else np.asarray(drift_value, dtype=np.float64)
    g = noise * np.eye(dim)

    def drift(t, X):
        X = np.atleast_2d(X)
        return np.broadcast_to(c, X.shape).copy()

    def jac(t, X):
        X = np.atleast_2d(X)
        return np.zeros((X.shape[0], dim, dim))

    return SdeModel(dim, drift, lambda t: g, jac, name="constant")
