"""Pure-NumPy forward/backward passes and the mini-batch epoch loop.

Weight matrices are stored ``(fan_in, fan_out)``; activation codes are
0 = tanh, 1 = logistic.  The output unit is always logistic.
"""

from __future__ import annotations

import numpy as np

TANH, LOGISTIC = 0, 1


def logistic(z):
    # 1 / (1 + e^-z) without overflow warnings
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(z, code):
    if code == TANH:
        return np.tanh(z)
    # hidden units: plain formula, overflow of exp(-z) correctly gives 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def activation_slope(a, code):
    """Derivative expressed through the activation value."""
    return 1.0 - a * a if code == TANH else a * (1.0 - a)


def forward_pass(X, weights, biases, acts):
    """Return the per-layer activations and the output pre-activation."""
    outs = [X]
    a = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        if i == last:
            return outs, z[:, 0]
        a = activate(z, acts[i])
        outs.append(a)
    raise ValueError("network has no output layer")


def weighted_bce(z, y, sw):
    """Per-sample class-weighted binary cross-entropy on logits."""
    return sw * (np.logaddexp(0.0, z) - y * z)


def backward_pass(outs, z, y, sw, weights, acts):
    """Gradients of the mean weighted loss w.r.t. every weight and bias."""
    n = len(y)
    delta = (sw * (logistic(z) - y) / n)[:, None]
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = outs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * activation_slope(outs[i], acts[i - 1])
    return gw, gb


def loss_and_grad(X, y, sw, weights, biases, acts):
    outs, z = forward_pass(X, weights, biases, acts)
    loss = float(weighted_bce(z, y, sw).mean())
    gw, gb = backward_pass(outs, z, y, sw, weights, acts)
    return loss, gw, gb


def run_epoch(X, y, sw, perm, batch_size, lr, momentum, weights, biases, vel_w, vel_b, acts):
    """One pass of momentum SGD over ``perm``; updates arrays in place.

    Returns the sample-mean weighted loss seen during the pass.
    """
    n = len(perm)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        xb, yb, sb = X[idx], y[idx], sw[idx]
        outs, z = forward_pass(xb, weights, biases, acts)
        total += float(weighted_bce(z, yb, sb).sum())
        gw, gb = backward_pass(outs, z, yb, sb, weights, acts)
        for W, b, vW, vb, g, h in zip(weights, biases, vel_w, vel_b, gw, gb):
            vW *= momentum
            vW -= lr * g
            W += vW
            vb *= momentum
            vb -= lr * h
            b += vb
    return total / n
