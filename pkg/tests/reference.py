"""Independent oracles: a scalar-loop LSTM cell and central finite differences.

Nothing here imports the vectorized kernels.
"""

import math

import numpy as np


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def scalar_step(arrays, s, h, y, candidate="sigmoid"):
    """One cell step written element by element from the cell equations."""
    n = len(s)
    W_h, W_y = arrays["W_h"], arrays["W_y"]
    z = [math.tanh(sum(W_h[i][j] * h[j] for j in range(n)) + W_y[i][0] * y) for i in range(n)]

    def affine(W, b):
        return [sum(W[i][j] * z[j] for j in range(n)) + b[i] for i in range(n)]

    g_i = [_sig(v) for v in affine(arrays["W_i"], arrays["b_i"])]
    g_o = [_sig(v) for v in affine(arrays["W_o"], arrays["b_o"])]
    g_f = [_sig(v) for v in affine(arrays["W_f"], arrays["b_f"])]
    cand_f = _sig if candidate == "sigmoid" else math.tanh
    cand = [cand_f(v) for v in affine(arrays["W_s"], arrays["b_s"])]
    s_new = [g_f[i] * s[i] + g_i[i] * cand[i] for i in range(n)]
    h_new = [g_o[i] * math.tanh(s_new[i]) for i in range(n)]
    W1, b1, W2, b2 = arrays["W_y1"], arrays["b_y1"], arrays["W_y2"], arrays["b_y2"]
    u = [math.tanh(sum(W1[i][j] * h_new[j] for j in range(n)) + b1[i]) for i in range(n)]
    y_hat = sum(W2[0][j] * u[j] for j in range(n)) + b2[0]
    return s_new, h_new, y_hat


def scalar_loss(arrays, inputs, targets, candidate="sigmoid"):
    """Summed half squared error of teacher-forced runs from the zero state."""
    n = len(arrays["b_i"])
    total = 0.0
    for xs, ts in zip(np.atleast_2d(inputs), np.atleast_2d(targets)):
        s, h = [0.0] * n, [0.0] * n
        for x, t in zip(xs, ts):
            s, h, y_hat = scalar_step(arrays, s, h, float(x), candidate)
            total += 0.5 * (t - y_hat) ** 2
    return total


def fd_gradient(f, vec, eps=1e-6):
    """Central differences of scalar ``f`` at every entry of ``vec``."""
    out = np.empty_like(vec)
    for k in range(vec.size):
        up, dn = vec.copy(), vec.copy()
        up[k] += eps
        dn[k] -= eps
        out[k] = (f(up) - f(dn)) / (2 * eps)
    return out


def random_arrays(n, rng, scale=1.0):
    shapes = {
        "W_h": (n, n), "W_y": (n, 1), "W_i": (n, n), "W_o": (n, n), "W_f": (n, n),
        "W_s": (n, n), "b_i": (n,), "b_o": (n,), "b_f": (n,), "b_s": (n,),
        "W_y1": (n, n), "b_y1": (n,), "W_y2": (1, n), "b_y2": (1,),
    }
    return {k: rng.uniform(-scale, scale, size=s) for k, s in shapes.items()}


def grad_mismatch(analytic, numeric, rel=1e-5, floor=1e-8):
    """Entries failing both the relative test and the absolute floor, plus the worst relative error."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel_err = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
    bad = (rel_err >= rel) & (diff >= floor)
    worst = float(np.max(np.where(diff >= floor, rel_err, 0.0), initial=0.0))
    return int(bad.sum()), worst
