"""Hot numeric kernels for the small tanh MLP used throughout the package.

Every kernel exists twice: a numba ``@njit`` version and a vectorized
numpy version with identical semantics, selected once at import by the
``SOCGRAD_USE_NUMBA`` env flag. The numpy path is the default: these
kernels are tanh-dominated, numpy's tanh is SIMD-vectorized while
numba lowers it to scalar libm calls (no SVML on this stack), and
``benchmarks/benchmark_kernels.py`` shows numpy ahead at every batch
size that matters here. Set ``SOCGRAD_USE_NUMBA=1`` to flip. The two
paths agree to ~1e-12 relative, not bitwise.

Parameter layout (flat float64 vector, input-major weights):

    [W1 (d_in x h1), b1 (h1), W2 (h1 x h2), b2 (h2), W3 (h2 x d_out), b3 (d_out)]

Network: out = W3^T tanh(W2^T tanh(W1^T inp + b1) + b2) + b3, applied
row-wise to a batch, i.e. OUT = tanh(tanh(X@W1 + b1)@W2 + b2)@W3 + b3.
"""

import os

import numpy as np

NUMBA_ENV_FLAG = "SOCGRAD_USE_NUMBA"

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - sandbox always has numba
    numba = None
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get(NUMBA_ENV_FLAG, "0") in ("1", "true", "yes")


def n_params(d_in: int, h1: int, h2: int, d_out: int) -> int:
    return d_in * h1 + h1 + h1 * h2 + h2 + h2 * d_out + d_out


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def _unpack(params, d_in, h1, h2, d_out):
    i = 0
    W1 = params[i:i + d_in * h1].reshape(d_in, h1); i += d_in * h1
    b1 = params[i:i + h1]; i += h1
    W2 = params[i:i + h1 * h2].reshape(h1, h2); i += h1 * h2
    b2 = params[i:i + h2]; i += h2
    W3 = params[i:i + h2 * d_out].reshape(h2, d_out); i += h2 * d_out
    b3 = params[i:i + d_out]
    return W1, b1, W2, b2, W3, b3


def _pack_grads(gW1, gb1, gW2, gb2, gW3, gb3):
    return np.concatenate(
        [gW1.ravel(), gb1, gW2.ravel(), gb2, gW3.ravel(), gb3]
    )


def _np_forward(params, X, d_in, h1, h2, d_out):
    W1, b1, W2, b2, W3, b3 = _unpack(params, d_in, h1, h2, d_out)
    A1 = np.tanh(X @ W1 + b1)
    A2 = np.tanh(A1 @ W2 + b2)
    return A2 @ W3 + b3


def _np_mse_loss_grad(params, X, Y, d_in, h1, h2, d_out):
    W1, b1, W2, b2, W3, b3 = _unpack(params, d_in, h1, h2, d_out)
    B = X.shape[0]
    A1 = np.tanh(X @ W1 + b1)
    A2 = np.tanh(A1 @ W2 + b2)
    R = A2 @ W3 + b3 - Y
    loss = float(np.sum(R * R)) / B
    dOUT = (2.0 / B) * R
    gW3 = A2.T @ dOUT
    gb3 = dOUT.sum(axis=0)
    dZ2 = (1.0 - A2 * A2) * (dOUT @ W3.T)
    gW2 = A1.T @ dZ2
    gb2 = dZ2.sum(axis=0)
    dZ1 = (1.0 - A1 * A1) * (dZ2 @ W2.T)
    gW1 = X.T @ dZ1
    gb1 = dZ1.sum(axis=0)
    return loss, _pack_grads(gW1, gb1, gW2, gb2, gW3, gb3)


def _np_dir_derivs(params, X, DIRS, d_in, h1, h2, d_out):
    W1, b1, W2, b2, W3, b3 = _unpack(params, d_in, h1, h2, d_out)
    B, nd, _ = DIRS.shape
    A1 = np.tanh(X @ W1 + b1)
    A2 = np.tanh(A1 @ W2 + b2)
    OUT = A2 @ W3 + b3
    s1 = 1.0 - A1 * A1
    s2 = 1.0 - A2 * A2
    q1 = A1 * s1
    q2 = A2 * s2
    D1 = np.empty((B, nd, d_out))
    D2 = np.empty((B, nd, d_out))
    # one 2-D gemm chain per direction: batched 3-D matmuls miss BLAS
    for a in range(nd):
        dZ1 = DIRS[:, a, :] @ W1
        dA1 = s1 * dZ1
        dZ2 = dA1 @ W2
        dA2 = s2 * dZ2
        D1[:, a, :] = dA2 @ W3
        hA1 = -2.0 * q1 * dZ1 * dZ1
        hZ2 = hA1 @ W2
        hA2 = -2.0 * q2 * dZ2 * dZ2 + s2 * hZ2
        D2[:, a, :] = hA2 @ W3
    return OUT, D1, D2


def _np_ism_loss_grad(params, X, DIRS, CV, SIG, d_in, h1, h2, d_out):
    W1, b1, W2, b2, W3, b3 = _unpack(params, d_in, h1, h2, d_out)
    B, nd, _ = DIRS.shape
    A1 = np.tanh(X @ W1 + b1)
    A2 = np.tanh(A1 @ W2 + b2)
    OUT = A2 @ W3 + b3
    s1 = 1.0 - A1 * A1
    s2 = 1.0 - A2 * A2
    W3T, W2T = W3.T, W2.T

    loss = 0.5 * np.sum(OUT * OUT)
    gOUT = OUT / B
    gW3 = A2.T @ gOUT
    gb3 = gOUT.sum(axis=0)
    gW2 = np.zeros((h1, h2))
    gW1 = np.zeros((d_in, h1))
    gA2 = gOUT @ W3T
    gA1_tang = 0.0
    # per-direction tangent chains, each reversed immediately (2-D gemms)
    for a in range(nd):
        U = DIRS[:, a, :]
        dZ1 = U @ W1
        dA1 = s1 * dZ1
        dZ2 = dA1 @ W2
        dA2 = s2 * dZ2
        D1a = dA2 @ W3
        sig = SIG[:, a]
        cv = CV[:, a, :]
        loss += np.sum(sig * np.sum(cv * D1a, axis=1))
        gD1 = cv * (sig / B)[:, None]
        gW3 += dA2.T @ gD1
        gdA2 = gD1 @ W3T
        gdZ2 = s2 * gdA2
        gA2 += -2.0 * A2 * dZ2 * gdA2
        gW2 += dA1.T @ gdZ2
        gdA1 = gdZ2 @ W2T
        gdZ1 = s1 * gdA1
        gA1_tang += -2.0 * A1 * dZ1 * gdA1
        gW1 += U.T @ gdZ1
    loss = float(loss) / B
    gZ2 = s2 * gA2
    gW2 += A1.T @ gZ2
    gb2 = gZ2.sum(axis=0)
    gA1 = gZ2 @ W2T + gA1_tang
    gZ1 = s1 * gA1
    gW1 += X.T @ gZ1
    gb1 = gZ1.sum(axis=0)
    return loss, _pack_grads(gW1, gb1, gW2, gb2, gW3, gb3)


def _np_adam_update(params, grad, m, v, step, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    params -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=True)
    def _tanh2d(Z):
        # exp-based tanh: scalar libm tanh is ~2x slower under numba
        out = np.empty_like(Z)
        for i in range(Z.shape[0]):
            for j in range(Z.shape[1]):
                z = Z[i, j]
                if z >= 0.0:
                    e = np.exp(-2.0 * z)
                    out[i, j] = (1.0 - e) / (1.0 + e)
                else:
                    e = np.exp(2.0 * z)
                    out[i, j] = (e - 1.0) / (e + 1.0)
        return out

    @numba.njit(cache=True)
    def _nb_forward(params, X, d_in, h1, h2, d_out):
        i = 0
        W1 = params[i:i + d_in * h1].reshape(d_in, h1); i += d_in * h1
        b1 = params[i:i + h1]; i += h1
        W2 = params[i:i + h1 * h2].reshape(h1, h2); i += h1 * h2
        b2 = params[i:i + h2]; i += h2
        W3 = params[i:i + h2 * d_out].reshape(h2, d_out); i += h2 * d_out
        b3 = params[i:i + d_out]
        A1 = _tanh2d(np.dot(X, W1) + b1)
        A2 = _tanh2d(np.dot(A1, W2) + b2)
        return np.dot(A2, W3) + b3

    @numba.njit(cache=True)
    def _nb_mse_loss_grad(params, X, Y, d_in, h1, h2, d_out):
        i = 0
        W1 = params[i:i + d_in * h1].reshape(d_in, h1); i += d_in * h1
        b1 = params[i:i + h1]; i += h1
        W2 = params[i:i + h1 * h2].reshape(h1, h2); i += h1 * h2
        b2 = params[i:i + h2]; i += h2
        W3 = params[i:i + h2 * d_out].reshape(h2, d_out); i += h2 * d_out
        b3 = params[i:i + d_out]
        B = X.shape[0]
        A1 = _tanh2d(np.dot(X, W1) + b1)
        A2 = _tanh2d(np.dot(A1, W2) + b2)
        R = np.dot(A2, W3) + b3 - Y
        loss = np.sum(R * R) / B
        dOUT = (2.0 / B) * R
        gW3 = np.dot(A2.T.copy(), dOUT)
        dZ2 = (1.0 - A2 * A2) * np.dot(dOUT, W3.T.copy())
        gW2 = np.dot(A1.T.copy(), dZ2)
        dZ1 = (1.0 - A1 * A1) * np.dot(dZ2, W2.T.copy())
        gW1 = np.dot(X.T.copy(), dZ1)
        g = np.empty_like(params)
        i = 0
        g[i:i + d_in * h1] = gW1.ravel(); i += d_in * h1
        g[i:i + h1] = np.sum(dZ1, axis=0); i += h1
        g[i:i + h1 * h2] = gW2.ravel(); i += h1 * h2
        g[i:i + h2] = np.sum(dZ2, axis=0); i += h2
        g[i:i + h2 * d_out] = gW3.ravel(); i += h2 * d_out
        g[i:i + d_out] = np.sum(dOUT, axis=0)
        return loss, g

    @numba.njit(cache=True)
    def _nb_dir_derivs(params, X, DIRS, d_in, h1, h2, d_out):
        i = 0
        W1 = params[i:i + d_in * h1].reshape(d_in, h1); i += d_in * h1
        b1 = params[i:i + h1]; i += h1
        W2 = params[i:i + h1 * h2].reshape(h1, h2); i += h1 * h2
        b2 = params[i:i + h2]; i += h2
        W3 = params[i:i + h2 * d_out].reshape(h2, d_out); i += h2 * d_out
        b3 = params[i:i + d_out]
        B = X.shape[0]
        nd = DIRS.shape[1]
        A1 = _tanh2d(np.dot(X, W1) + b1)
        A2 = _tanh2d(np.dot(A1, W2) + b2)
        OUT = np.dot(A2, W3) + b3
        s1 = 1.0 - A1 * A1
        s2 = 1.0 - A2 * A2
        D1 = np.empty((B, nd, d_out))
        D2 = np.empty((B, nd, d_out))
        for a in range(nd):
            dZ1 = np.dot(DIRS[:, a, :].copy(), W1)
            dA1 = s1 * dZ1
            dZ2 = np.dot(dA1, W2)
            dA2 = s2 * dZ2
            D1[:, a, :] = np.dot(dA2, W3)
            hA1 = -2.0 * A1 * s1 * dZ1 * dZ1
            hZ2 = np.dot(hA1, W2)
            hA2 = -2.0 * A2 * s2 * dZ2 * dZ2 + s2 * hZ2
            D2[:, a, :] = np.dot(hA2, W3)
        return OUT, D1, D2

    @numba.njit(cache=True)
    def _nb_ism_loss_grad(params, X, DIRS, CV, SIG, d_in, h1, h2, d_out):
        i = 0
        W1 = params[i:i + d_in * h1].reshape(d_in, h1); i += d_in * h1
        b1 = params[i:i + h1]; i += h1
        W2 = params[i:i + h1 * h2].reshape(h1, h2); i += h1 * h2
        b2 = params[i:i + h2]; i += h2
        W3 = params[i:i + h2 * d_out].reshape(h2, d_out); i += h2 * d_out
        b3 = params[i:i + d_out]
        B = X.shape[0]
        nd = DIRS.shape[1]
        A1 = _tanh2d(np.dot(X, W1) + b1)
        A2 = _tanh2d(np.dot(A1, W2) + b2)
        OUT = np.dot(A2, W3) + b3
        s1 = 1.0 - A1 * A1
        s2 = 1.0 - A2 * A2
        W3T = W3.T.copy()
        W2T = W2.T.copy()
        loss = 0.5 * np.sum(OUT * OUT)
        gOUT = OUT / B
        gW3 = np.dot(A2.T.copy(), gOUT)
        gb3 = np.sum(gOUT, axis=0)
        gA2 = np.dot(gOUT, W3T)
        gW2 = np.zeros((h1, h2))
        gW1 = np.zeros((d_in, h1))
        gA1_extra = np.zeros((B, h1))
        gZ2_tang = np.zeros((B, h2))  # accumulated -2*A2*dZ2*gdA2 terms
        # per-direction tangent chains with their reverse passes
        for a in range(nd):
            U = DIRS[:, a, :].copy()
            dZ1 = np.dot(U, W1)
            dA1 = s1 * dZ1
            dZ2 = np.dot(dA1, W2)
            dA2 = s2 * dZ2
            D1a = np.dot(dA2, W3)
            sig = SIG[:, a]
            cv = CV[:, a, :]
            loss += np.sum(sig * np.sum(cv * D1a, axis=1))
            gD1 = np.empty((B, d_out))
            for b in range(B):
                for o in range(d_out):
                    gD1[b, o] = cv[b, o] * sig[b] / B
            gW3 += np.dot(dA2.T.copy(), gD1)
            gdA2 = np.dot(gD1, W3T)
            gdZ2 = s2 * gdA2
            gZ2_tang += -2.0 * A2 * dZ2 * gdA2
            gW2 += np.dot(dA1.T.copy(), gdZ2)
            gdA1 = np.dot(gdZ2, W2T)
            gdZ1 = s1 * gdA1
            gA1_extra += -2.0 * A1 * dZ1 * gdA1
            gW1 += np.dot(U.T.copy(), gdZ1)
        loss = loss / B
        gA2 = gA2 + gZ2_tang
        gZ2 = s2 * gA2
        gW2 += np.dot(A1.T.copy(), gZ2)
        gb2 = np.sum(gZ2, axis=0)
        gA1 = np.dot(gZ2, W2T) + gA1_extra
        gZ1 = s1 * gA1
        gW1 += np.dot(X.T.copy(), gZ1)
        gb1 = np.sum(gZ1, axis=0)
        g = np.empty_like(params)
        i = 0
        g[i:i + d_in * h1] = gW1.ravel(); i += d_in * h1
        g[i:i + h1] = gb1; i += h1
        g[i:i + h1 * h2] = gW2.ravel(); i += h1 * h2
        g[i:i + h2] = gb2; i += h2
        g[i:i + h2 * d_out] = gW3.ravel(); i += h2 * d_out
        g[i:i + d_out] = gb3
        return loss, g

    @numba.njit(cache=True)
    def _nb_adam_update(params, grad, m, v, step, lr, beta1, beta2, eps):
        bc1 = 1.0 - beta1 ** step
        bc2 = 1.0 - beta2 ** step
        for j in range(params.shape[0]):
            m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j]
            v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j]
            params[j] -= lr * (m[j] / bc1) / (np.sqrt(v[j] / bc2) + eps)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    mlp_forward = _nb_forward
    mlp_mse_loss_grad = _nb_mse_loss_grad
    mlp_dir_derivs = _nb_dir_derivs
    mlp_ism_loss_grad = _nb_ism_loss_grad
    adam_update = _nb_adam_update
else:
    mlp_forward = _np_forward
    mlp_mse_loss_grad = _np_mse_loss_grad
    mlp_dir_derivs = _np_dir_derivs
    mlp_ism_loss_grad = _np_ism_loss_grad
    adam_update = _np_adam_update
