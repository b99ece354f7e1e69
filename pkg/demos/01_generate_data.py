#!/usr/bin/env python3
# Mackey-Glass series, noisy observations and the zeroth-order baseline.
import numpy as np

from mglstm import MgConfig, add_noise, fit_scaler, integrate_mg
from mglstm.diagnostics import nrmse, zeroth_order

traj = integrate_mg(MgConfig(t_end=11000.0))
print(f"{len(traj)} samples, t = {traj.times[0]:g} .. {traj.times[-1]:g}")
print(f"range [{traj.values.min():.3f}, {traj.values.max():.3f}], nu = {traj.nu:.4f}")

# a crude text plot of the first 120 samples
lo, hi = traj.values.min(), traj.values.max()
for v in traj.values[:120:4]:
    print(" " * int(50 * (v - lo) / (hi - lo)) + "*")

# noise is measured in units of nu, so sigma=0.64 is a heavily corrupted signal
for sigma in (0.0, 0.02, 0.16, 0.64):
    y = add_noise(traj, sigma, seed=1).values
    e = nrmse(zeroth_order(y), traj.values[1:], traj.nu)
    print(f"sigma={sigma:<5g} observed std of noise {np.std(y - traj.values) / traj.nu:.3f}"
          f"   zeroth-order NRMSE {e:.3f}")

sc = fit_scaler(traj)
scaled = sc.apply(traj.values)
print("scaled range:", scaled.min(), scaled.max())
