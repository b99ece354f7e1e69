#!/usr/bin/env python3
# Train a small predictor on noisy data and compare it with the zeroth-order guess.
# Takes well under a minute on one core.
from mglstm import MgConfig, TrainConfig, add_noise, integrate_mg, train
from mglstm.diagnostics import nrmse, run_nrmse, sequential_predict, zeroth_order

sigma = 0.64
traj = integrate_mg(MgConfig(t_end=1000.0 + 8000.0))
train_win, test_win = traj.window(0, 6000), traj.window(6000, 8000)

cfg = TrainConfig(n_cells=16, seq_len=100, batch_size=16, n_epochs=1000, max_steps=1500,
                  learning_rate=5e-3, seed=2)
result = train(sigma, add_noise(train_win, sigma, seed=10), cfg)
print(f"trained {len(result.history)} steps, final loss {result.history[-1][1]:.4f}")

obs = add_noise(test_win, sigma, seed=11).values
run = sequential_predict(result.model, obs, test_win.values)
e_model = run_nrmse(run, traj.nu, skip=150)
e_zero = nrmse(zeroth_order(obs)[150:], test_win.values[151:], traj.nu)
print(f"NRMSE against the clean signal: model {e_model:.3f}, zeroth order {e_zero:.3f}")

# the forecast follows the hidden signal rather than the observations
for k in range(300, 320):
    print(f"t={k:4d}  clean {test_win.values[k + 1]:.3f}  observed {obs[k + 1]:.3f}  "
          f"forecast {run.preds[k]:.3f}")
