"""Noisy Mackey-Glass data, a from-scratch LSTM with exact BPTT, and the
noise-robustness diagnostics built on top of them."""

from .diagnostics import (AlphaResult, ImpulseResult, PredictionRun, contribution_alpha,
                          impulse_experiment, noise_sweep, nrmse, relaxation_timescale,
                          sequential_predict, zeroth_order)
from .lstm_core import (LstmParams, LstmState, Model, StepTrace, init_params, init_state,
                        l1_contribution, load_model, save_model, step)
from .mg_dynamics import (NOISE_LEVELS, MgConfig, NoisySeries, Scaler, Trajectory, add_noise,
                          fit_scaler, integrate_mg)
from .training import AdamMoments, TrainConfig, adam_step, bptt, loss, train

__version__ = "0.1.0"
