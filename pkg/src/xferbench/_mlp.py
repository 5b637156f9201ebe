"""Pure numpy MLP kernels (fallback backend).

Network: ``x -> tanh(x W1 + b1) -> tanh(. W2 + b2) -> softmax(. W3 + b3)``.
``params`` is the list ``[W1, b1, W2, b2, W3, b3]`` of float64 C-contiguous
arrays; weights are ``(fan_in, fan_out)``. Loss is mean cross-entropy plus
``0.5 * weight_decay * sum(W**2)`` over the weight matrices only.
"""
from __future__ import annotations

import numpy as np


def forward(params, X):
    W1, b1, W2, b2, W3, b3 = params
    a1 = np.tanh(X @ W1 + b1)
    a2 = np.tanh(a1 @ W2 + b2)
    z = a2 @ W3 + b3
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    lse = np.log(ez.sum(axis=1, keepdims=True))
    return a1, a2, z - lse


def _grads(params, X, y, weight_decay):
    W1, b1, W2, b2, W3, b3 = params
    n = X.shape[0]
    a1, a2, logp = forward(params, X)
    ce = -logp[np.arange(n), y].sum()
    dz = np.exp(logp)
    dz[np.arange(n), y] -= 1.0
    dz /= n
    gW3 = a2.T @ dz
    gb3 = dz.sum(axis=0)
    dh2 = (dz @ W3.T) * (1.0 - a2 * a2)
    gW2 = a1.T @ dh2
    gb2 = dh2.sum(axis=0)
    dh1 = (dh2 @ W2.T) * (1.0 - a1 * a1)
    gW1 = X.T @ dh1
    gb1 = dh1.sum(axis=0)
    if weight_decay:
        gW1 = gW1 + weight_decay * W1
        gW2 = gW2 + weight_decay * W2
        gW3 = gW3 + weight_decay * W3
    return ce, [gW1, gb1, gW2, gb2, gW3, gb3]


def loss_grad(params, X, y, weight_decay=0.0):
    """Full-batch loss and gradients (used for gradient checking)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    ce, grads = _grads(params, X, y, weight_decay)
    loss = ce / X.shape[0]
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float(np.sum(W * W)) for W in params[0::2])
    return float(loss), grads


def train_epoch(params, velocity, X, y, order, lr, momentum, weight_decay, batch_size):
    """One pass of mini-batch momentum SGD in ``order``; updates in place.

    Returns the mean per-sample cross-entropy seen during the pass.
    """
    n = len(order)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        ce, grads = _grads(params, X[idx], y[idx], weight_decay)
        total += ce
        for p, v, g in zip(params, velocity, grads):
            v *= momentum
            v -= lr * g
            p += v
    return total / n
