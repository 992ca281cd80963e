"""Small smooth tanh MLP with exact input derivatives and an ADAM trainer.

The network maps (t, x) -> R^n with time rescaled to [0,1] as the first
input coordinate. First and second input-derivatives are propagated in
closed form (nested forward mode), so the Jacobian and the G-weighted
Hessian traces needed by the reversed-BSDE correction term carry no
finite-difference noise.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class NonFiniteError(RuntimeError):
    pass


class FuncApproximator:
    """Two-hidden-layer tanh MLP (t, x) -> R^n on a flat parameter vector."""

    def __init__(self, state_dim, hidden=64, t_scale=1.0, seed=0, activation="tanh"):
        if activation != "tanh":
            raise ValueError(
                "only the smooth tanh activation is supported; piecewise-linear "
                "activations would break the second-derivative interface"
            )
        self.state_dim = int(state_dim)
        self.hidden = int(hidden)
        self.t_scale = float(t_scale)
        self.seed = int(seed)
        self.d_in = 1 + self.state_dim
        self.d_out = self.state_dim
        self._dims = (self.d_in, self.hidden, self.hidden, self.d_out)
        self.params = self._init_params()

    def _init_params(self):
        rng = np.random.default_rng(self.seed)
        d_in, h1, h2, d_out = self._dims
        parts = [
            rng.normal(0.0, 1.0 / np.sqrt(d_in), size=d_in * h1),
            np.zeros(h1),
            rng.normal(0.0, 1.0 / np.sqrt(h1), size=h1 * h2),
            np.zeros(h2),
            # zero-initialized output layer: the fresh net is identically 0
            np.zeros(h2 * d_out),
            np.zeros(d_out),
        ]
        return np.concatenate(parts)

    @property
    def n_params(self):
        return kernels.n_params(*self._dims)

    def inputs(self, t, x):
        """Stack rescaled time and state into the (B, 1+n) input matrix."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t = np.asarray(t, dtype=np.float64)
        if t.ndim == 0:
            t = np.full(x.shape[0], float(t))
        inp = np.empty((x.shape[0], self.d_in))
        inp[:, 0] = t / self.t_scale
        inp[:, 1:] = x
        return inp

    def value(self, t, x):
        if not np.all(np.isfinite(self.params)):
            raise NonFiniteError("network parameters are not finite")
        return kernels.mlp_forward(self.params, self.inputs(t, x), *self._dims)

    __call__ = value

    def value_from_inputs(self, inp):
        return kernels.mlp_forward(self.params, inp, *self._dims)

    def derivatives(self, t, x, G):
        """Value, x-Jacobian and G-weighted Hessian trace at (t, x).

        Returns (value (B,n), jac (B,n,n) with jac[b,i,j] = d out_i/d x_j,
        ght (B,n) with ght[b,i] = Tr(G d^2 out_i/dx^2)). G must be a
        symmetric PSD (n, n) matrix shared across the batch; the second
        derivatives are taken along its eigenvectors.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = self.state_dim
        G = np.asarray(G, dtype=np.float64).reshape(n, n)
        sig, U = np.linalg.eigh(0.5 * (G + G.T))
        inp = self.inputs(t, x)
        B = x.shape[0]
        chunk = 65536  # keeps the tangent-chain temporaries bounded
        out = np.empty((B, self.d_out))
        jac = np.empty((B, self.d_out, n))
        ght = np.empty((B, self.d_out))
        for lo in range(0, B, chunk):
            hi = min(lo + chunk, B)
            dirs = np.zeros((hi - lo, n, self.d_in))
            dirs[:, :, 1:] = U.T[None, :, :]
            o, D1, D2 = kernels.mlp_dir_derivs(self.params, inp[lo:hi], dirs, *self._dims)
            out[lo:hi] = o
            # D1[:, a, i] = (Jac u_a)_i  =>  Jac = M U^T with M[:, i, a] = D1[:, a, i]
            jac[lo:hi] = np.einsum("bai,ja->bij", D1, U)
            ght[lo:hi] = np.einsum("a,bai->bi", sig, D2)
        return out, jac, ght

    def copy(self):
        dup = FuncApproximator(
            self.state_dim, hidden=self.hidden, t_scale=self.t_scale, seed=self.seed
        )
        dup.params = self.params.copy()
        return dup

    def save(self, path):
        header = {
            "state_dim": self.state_dim,
            "hidden": self.hidden,
            "t_scale": self.t_scale,
            "seed": self.seed,
            "n_params": int(self.params.size),
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(b"SOCGRADNET1\n")
            fh.write(len(blob).to_bytes(8, "little"))
            fh.write(blob)
            fh.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.readline()
            if magic != b"SOCGRADNET1\n":
                raise ValueError(f"not a socgrad net snapshot: {path}")
            hlen = int.from_bytes(fh.read(8), "little")
            header = json.loads(fh.read(hlen).decode())
            raw = fh.read(8 * header["n_params"])
        net = cls(
            header["state_dim"],
            hidden=header["hidden"],
            t_scale=header["t_scale"],
            seed=header["seed"],
        )
        net.params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        return net


def net_eval(net, t, x):
    """Forward pass of the approximator at (t, x)."""
    return net.value(t, x)


def net_derivatives(net, t, x, G):
    """Value, x-Jacobian and G-weighted Hessian traces (exact forward mode)."""
    return net.derivatives(t, x, G)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            m=np.zeros_like(params),
            v=np.zeros_like(params),
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params, grads, state):
    """One bias-corrected ADAM update, in place; returns (params, state).

    Rejects non-finite gradients so a diverged loss cannot silently poison
    the parameter vector.
    """
    grads = np.asarray(grads)
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NonFiniteError(
            f"non-finite gradient at step {state.step + 1} (first bad coordinate {bad})"
        )
    state.step += 1
    kernels.adam_update(
        params, grads, state.m, state.v, state.step,
        state.lr, state.beta1, state.beta2, state.eps,
    )
    return params, state


def train_regression(
    net,
    t_vals,
    x_vals,
    targets,
    steps,
    batch_size=128,
    state=None,
    seed=0,
    holdout_frac=0.1,
    eval_every=500,
    eval_cap=4096,
):
    """Mean-squared-error regression of net(t, x) onto targets.

    The loss is the batch mean of ||net(t,x) - y||^2. A 10% holdout split
    is evaluated every ``eval_every`` steps (on at most ``eval_cap`` rows,
    to keep the evaluation off the hot path); the history is returned so
    callers can check that training actually descends.
    """
    x_vals = np.atleast_2d(np.asarray(x_vals, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    m = x_vals.shape[0]
    if m == 0:
        raise ValueError("empty regression dataset")
    inputs = net.inputs(np.asarray(t_vals, dtype=np.float64), x_vals)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    n_hold = int(round(holdout_frac * m))
    hold, train = perm[:n_hold], perm[n_hold:]
    if train.size == 0:
        train, hold = perm, perm[:0]
    hold = hold[:eval_cap]
    Xtr, Ytr = np.ascontiguousarray(inputs[train]), np.ascontiguousarray(targets[train])
    Xho, Yho = np.ascontiguousarray(inputs[hold]), np.ascontiguousarray(targets[hold])

    if state is None:
        state = AdamState.for_params(net.params)
    dims = net._dims
    holdout_history = []
    last_train_loss = np.nan
    for step in range(steps):
        idx = rng.integers(0, Xtr.shape[0], size=min(batch_size, Xtr.shape[0]))
        xb = np.ascontiguousarray(Xtr[idx])
        yb = np.ascontiguousarray(Ytr[idx])
        loss, grad = kernels.mlp_mse_loss_grad(net.params, xb, yb, *dims)
        adam_step(net.params, grad, state)
        last_train_loss = loss
        if Xho.shape[0] and (step % eval_every == 0 or step == steps - 1):
            pred = net.value_from_inputs(Xho)
            holdout_history.append(float(np.mean(np.sum((pred - Yho) ** 2, axis=1))))
    return {
        "state": state,
        "holdout_history": holdout_history,
        "final_holdout": holdout_history[-1] if holdout_history else None,
        "final_train_loss": float(last_train_loss),
    }
