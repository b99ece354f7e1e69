#!/usr/bin/env python3
# Kick the input of a trained model every 150 steps and watch the error relax.
import numpy as np

from mglstm import MgConfig, TrainConfig, add_noise, integrate_mg, train
from mglstm.diagnostics import contribution_alpha, impulse_experiment, sequential_predict

traj = integrate_mg(MgConfig(t_end=1000.0 + 16000.0))
train_win, test_win = traj.window(0, 6000), traj.window(6000, 16000)

models = {}
for sigma in (0.0, 0.32):
    cfg = TrainConfig(n_cells=16, seq_len=100, batch_size=16, n_epochs=1000, max_steps=1500,
                      learning_rate=5e-3, seed=5)
    models[sigma] = train(sigma, add_noise(train_win, sigma, seed=3), cfg).model

for sigma, model in models.items():
    res = impulse_experiment(model, test_win, n_ensembles=60)
    run = sequential_predict(model, test_win.values, capture_traces=True)
    alpha = contribution_alpha(run, skip=150).alpha
    print(f"trained at sigma={sigma:g}: alpha {alpha:.3f}, e_0 {res.e_0:.3f}, "
          f"lambda {res.lam:.1f}, baseline {res.e_mu_baseline:.3f}")
    print("  e_n:", np.array2string(res.e_n[:12], precision=3))
