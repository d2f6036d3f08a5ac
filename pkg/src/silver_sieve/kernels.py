"""Hot loops of the linear softmax detector.

Negative-learning losses are handled through a coefficient matrix ``A``
(N x K): ``A[n, k]`` is how many times class ``k`` was drawn as a
complementary label for sample ``n``, already multiplied by the class weight
for the weighted variant. The per-sample loss is then
``-sum_k A[n, k] * log(1 - p[n, k])`` and its gradient w.r.t. the logits is
``g - p * sum(g)`` with ``g_k = A[n, k] * p_k / (1 - p_k)``.

Each kernel exists twice: a numba version (``*_nb``) and a vectorised numpy
version (``*_np``). The public names bind to one of them according to
``silver_sieve._jit.HAS_NUMBA``.
"""
import math

import numpy as np

from ._jit import HAS_NUMBA, njit

EPS = 1e-12
CE, NEG = 0, 1


# ---------------------------------------------------------------------------
# numpy path


def softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logit_grad_np(p, y, a, kind):
    """d(loss)/d(logits) per row, shape (B, K)."""
    if kind == CE:
        g = p.copy()
        g[np.arange(len(y)), y] -= 1.0
        return g
    q = a * p / np.maximum(1.0 - p, EPS)
    return q - p * q.sum(axis=1, keepdims=True)


def batch_grad_np(x, y, a, w, b, kind):
    p = softmax_rows(x @ w.T + b)
    g = logit_grad_np(p, y, a, kind)
    n = x.shape[0]
    return g.T @ x / n, g.sum(axis=0) / n


def epoch_np(x, y, a, w, b, order, batch_size, lr, wd, kind):
    """One pass of minibatch descent, updating ``w`` and ``b`` in place."""
    n = order.shape[0]
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        gw, gb = batch_grad_np(x[idx], y[idx], a[idx], w, b, kind)
        gw += wd * w
        w -= lr * gw
        b -= lr * gb


def ce_losses_np(x, y, w, b):
    z = x @ w.T + b
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    return lse - z[np.arange(len(y)), y]


# ---------------------------------------------------------------------------
# numba path


@njit(cache=True)
def _accumulate_nb(x, y, a, w, b, idx, kind, gw, gb, z, p):
    k, d = w.shape
    for i in idx:
        zmax = -np.inf
        for c in range(k):
            s = b[c]
            for j in range(d):
                s += w[c, j] * x[i, j]
            z[c] = s
            if s > zmax:
                zmax = s
        tot = 0.0
        for c in range(k):
            p[c] = math.exp(z[c] - zmax)
            tot += p[c]
        for c in range(k):
            p[c] /= tot
        if kind == CE:
            for c in range(k):
                z[c] = p[c]
            z[y[i]] -= 1.0
        else:
            qsum = 0.0
            for c in range(k):
                om = 1.0 - p[c]
                if om < EPS:
                    om = EPS
                z[c] = a[i, c] * p[c] / om
                qsum += z[c]
            for c in range(k):
                z[c] -= p[c] * qsum
        for c in range(k):
            gb[c] += z[c]
            for j in range(d):
                gw[c, j] += z[c] * x[i, j]


@njit(cache=True)
def batch_grad_nb(x, y, a, w, b, kind):
    k, d = w.shape
    gw = np.zeros((k, d))
    gb = np.zeros(k)
    idx = np.arange(x.shape[0])
    _accumulate_nb(x, y, a, w, b, idx, kind, gw, gb, np.empty(k), np.empty(k))
    n = x.shape[0]
    return gw / n, gb / n


@njit(cache=True)
def epoch_nb(x, y, a, w, b, order, batch_size, lr, wd, kind):
    k, d = w.shape
    gw = np.empty((k, d))
    gb = np.empty(k)
    z = np.empty(k)
    p = np.empty(k)
    n = order.shape[0]
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        gw[:] = 0.0
        gb[:] = 0.0
        _accumulate_nb(x, y, a, w, b, order[start:stop], kind, gw, gb, z, p)
        m = stop - start
        for c in range(k):
            for j in range(d):
                w[c, j] -= lr * (gw[c, j] / m + wd * w[c, j])
            b[c] -= lr * gb[c] / m


@njit(cache=True)
def ce_losses_nb(x, y, w, b):
    n = x.shape[0]
    k, d = w.shape
    out = np.empty(n)
    z = np.empty(k)
    for i in range(n):
        zmax = -np.inf
        for c in range(k):
            s = b[c]
            for j in range(d):
                s += w[c, j] * x[i, j]
            z[c] = s
            if s > zmax:
                zmax = s
        tot = 0.0
        for c in range(k):
            tot += math.exp(z[c] - zmax)
        out[i] = zmax + math.log(tot) - z[y[i]]
    return out


if HAS_NUMBA:
    batch_grad, train_epoch, ce_losses = batch_grad_nb, epoch_nb, ce_losses_nb
else:
    batch_grad, train_epoch, ce_losses = batch_grad_np, epoch_np, ce_losses_np

BACKEND = "numba" if HAS_NUMBA else "numpy"
