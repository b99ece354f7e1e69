#!/usr/bin/env python3
# One LSTM step by hand, then BPTT against central differences.
import numpy as np

from mglstm import init_params, init_state, step
from mglstm.training import bptt

params = init_params(3, seed=4, init_scale=1.0)
state = init_state(3)
for y in (0.1, -0.2, 0.35):
    state, y_hat, tr = step(params, state, y)
    print(f"y={y:+.2f}  y_hat={y_hat:+.4f}  s={np.round(state.s, 4)}  "
          f"|W_h h|_1={np.abs(tr.wh_h).sum():.3f}  |W_y y|_1={np.abs(tr.wy_y).sum():.3f}")

rng = np.random.default_rng(0)
x = rng.uniform(-0.5, 0.5, 6)
t = rng.uniform(-0.5, 0.5, 6)
loss, grads = bptt(params, None, x, t)
g = np.concatenate([grads[k].ravel() for k in params.arrays()])

theta = params.flatten()
eps = 1e-6
fd = np.empty_like(theta)
for k in range(theta.size):
    up, dn = theta.copy(), theta.copy()
    up[k] += eps
    dn[k] -= eps
    fd[k] = (bptt(params.unflatten(up), None, x, t)[0]
             - bptt(params.unflatten(dn), None, x, t)[0]) / (2 * eps)

print(f"loss {loss:.6f}, {theta.size} parameters")
print(f"max |analytic - numeric| = {np.max(np.abs(g - fd)):.2e}")
