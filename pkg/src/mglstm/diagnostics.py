"""Measurements on trained predictors.

* sequential one-step prediction, fed with observations only (teacher forcing)
* NRMSE against the noiseless truth, and the persistence baseline ``y_hat[t+1] = y[t]``
* contribution ratio alpha of the recurrent path ``W_h h`` versus the data path
  ``W_y y`` inside the input network
* the periodic-impulse experiment, its ensemble error profile and relaxation timescale
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRelaxationError, UndefinedAlphaError
from .lstm_core import LstmState, Model, init_state, step
from .mg_dynamics import SAMPLE_DT, Trajectory, add_noise
from .rng import derive_seed


class ScalerMismatchWarning(UserWarning):
    pass


@dataclass(eq=False)
class PredictionRun:
    """One teacher-forced pass. ``preds[k]`` is the forecast of sample ``k + 1``."""

    inputs: np.ndarray
    preds: np.ndarray
    truth: np.ndarray | None = None
    states: list | None = None
    wh_h: np.ndarray | None = None  # (T, N) rows of W_h h_t
    wy_y: np.ndarray | None = None  # (T, N) rows of W_y y_t

    def aligned(self, skip: int = 0):
        """``(forecasts, truth)`` pairs for samples ``skip + 1 .. T - 1``."""
        if self.truth is None:
            raise ValueError("run has no truth attached")
        return self.preds[skip:-1], self.truth[skip + 1:]


@dataclass
class AlphaResult:
    alpha: float
    ratio: float
    n_skipped: int = 0
    per_step: np.ndarray | None = None

    @property
    def ratio_overflow(self) -> bool:
        return math.isinf(self.ratio)


@dataclass
class ImpulseResult:
    e_n: np.ndarray
    e_0: float
    e_mu_baseline: float
    lam: float
    n_ensembles: int
    e_0_impulse_units: float = float("nan")
    run: PredictionRun | None = field(default=None, repr=False)

    @property
    def relaxation_timescale(self) -> float:
        return self.lam


def sequential_predict(model: Model, observations, truth=None, *, capture_traces: bool = False,
                       capture_states: bool = False, nu: float | None = None,
                       state: LstmState | None = None, offsets=None) -> PredictionRun:
    """Feed ``observations`` (original scale) one at a time from the zero state.

    ``offsets`` are added to the normalized inputs (the impulse experiment uses
    this); the stored ``inputs`` stay unperturbed.
    """
    obs = np.asarray(observations, dtype=float)
    sc = model.scaler
    if nu is not None and (obs.min() < sc.min - 3 * nu or obs.max() > sc.max + 3 * nu):
        warnings.warn(
            f"observations span [{obs.min():.4g}, {obs.max():.4g}], more than 3 nu outside "
            f"the scaler range [{sc.min:.4g}, {sc.max:.4g}]", ScalerMismatchWarning, stacklevel=2)
    x = sc.apply(obs)
    if offsets is not None:
        x = x + offsets
    params = model.params
    st = state or init_state(params.n_cells)
    n_steps = len(x)
    y_hat = np.empty(n_steps)
    wh = np.empty((n_steps, params.n_cells)) if capture_traces else None
    wy = np.empty((n_steps, params.n_cells)) if capture_traces else None
    states = [] if capture_states else None
    for t in range(n_steps):
        st, y_hat[t], tr = step(params, st, x[t])
        if capture_traces:
            wh[t], wy[t] = tr.wh_h, tr.wy_y
        if capture_states:
            states.append(st)
    preds = sc.invert(y_hat)
    return PredictionRun(obs, preds, None if truth is None else np.asarray(truth, dtype=float),
                         states, wh, wy)


def nrmse(preds, truth, nu: float) -> float:
    """``sqrt(mean((truth - preds)**2)) / nu``."""
    preds, truth = np.asarray(preds, dtype=float), np.asarray(truth, dtype=float)
    if preds.shape != truth.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {truth.shape}")
    if not nu > 0:
        raise ValueError("nu must be positive")
    return float(np.sqrt(np.mean((truth - preds) ** 2)) / nu)


def run_nrmse(run: PredictionRun, nu: float, skip: int = 0) -> float:
    return nrmse(*run.aligned(skip), nu)


def zeroth_order(observations) -> np.ndarray:
    """Persistence forecasts: element ``k`` predicts sample ``k + 1`` as ``y[k]``."""
    obs = np.asarray(observations, dtype=float)
    if len(obs) < 2:
        raise ValueError("need at least two observations")
    return obs[:-1].copy()


def contribution_alpha(run: PredictionRun, skip: int = 0, keep_terms: bool = False) -> AlphaResult:
    """Mean over steps and cells of ``|W_h h| / (|W_y y| + |W_h h|)``.

    Terms whose denominator vanishes are left out of both the sum and the count.
    """
    if run.wh_h is None or run.wy_y is None:
        raise ValueError("run was made without capture_traces")
    num = np.abs(run.wh_h[skip:])
    den = num + np.abs(run.wy_y[skip:])
    valid = den > 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise UndefinedAlphaError("every term of the contribution ratio has a zero denominator")
    terms = np.divide(num, den, out=np.zeros_like(num), where=valid)
    alpha = float(terms.sum() / n_valid)
    ratio = alpha / (1.0 - alpha) if alpha < 1.0 else math.inf
    return AlphaResult(alpha, ratio, int(valid.size - n_valid), terms if keep_terms else None)


def relaxation_timescale(e_n, e_mu: float, dt: float = SAMPLE_DT) -> float:
    """``dt * sum_n (e_n - e_mu) / (e_0 - e_mu)``."""
    e_n = np.asarray(e_n, dtype=float)
    e_0 = e_n[0]
    if not e_0 > e_mu:
        raise DegenerateRelaxationError(
            f"initial deviation {e_0:.6g} does not exceed the unperturbed error {e_mu:.6g}")
    return float(dt * np.sum((e_n - e_mu) / (e_0 - e_mu)))


def impulse_experiment(model: Model, clean, period: int = 150, magnitude: float = 1.0,
                       n_ensembles: int | None = None, warmup_periods: int = 1) -> ImpulseResult:
    """Kick the normalized input by ``magnitude`` every ``period`` steps.

    The run is teacher-forced on noiseless data ``clean`` (a Trajectory or a
    noiseless series). Windows start at each kicked input; the first
    ``warmup_periods`` windows are discarded. ``e_n`` is the ensemble RMS error,
    in units of nu, of the forecast made ``n`` steps after the kick, and the
    baseline ``e_mu`` is the same model's error on the unkicked input over the
    same samples.
    """
    if getattr(clean, "sigma", 0.0) != 0.0:
        raise ValueError("impulse experiment expects noiseless data")
    traj = clean if isinstance(clean, Trajectory) else clean.source
    mu = np.asarray(traj.values, dtype=float)
    nu = traj.nu
    n_points = len(mu)
    kicks = np.arange(warmup_periods * period, n_points - period, period)
    if n_ensembles is not None:
        if len(kicks) < n_ensembles:
            raise ValueError(f"series holds {len(kicks)} impulse windows, {n_ensembles} requested")
        kicks = kicks[:n_ensembles]
    if len(kicks) == 0:
        raise ValueError("series too short for a single impulse window")
    offsets = np.zeros(n_points)
    offsets[np.arange(0, kicks[-1] + 1, period)] = magnitude

    kicked = sequential_predict(model, mu, mu, offsets=offsets)
    base = sequential_predict(model, mu, mu)
    lag = np.arange(period)
    idx = kicks[:, None] + lag  # forecast index; it targets sample idx + 1
    err = kicked.preds[idx] - mu[idx + 1]
    e_n = np.sqrt(np.mean(err**2, axis=0)) / nu
    e_mu = nrmse(base.preds[idx], mu[idx + 1], nu)
    lam = relaxation_timescale(e_n, e_mu)
    e_0_imp = e_n[0] * nu / (magnitude * model.scaler.span)
    return ImpulseResult(e_n, float(e_n[0]), e_mu, lam, len(kicks), float(e_0_imp), kicked)


def noise_sweep(models, traj: Trajectory, eval_sigmas, seed: int = 0, skip: int = 0) -> np.ndarray:
    """NRMSE of every model on every evaluation noise level.

    Each (model, sigma) cell draws its own noise realization.
    """
    out = np.empty((len(models), len(eval_sigmas)))
    for i, model in enumerate(models):
        for j, sigma in enumerate(eval_sigmas):
            cell_seed = derive_seed(seed, "sweep", float(model.train_sigma), float(sigma))
            series = add_noise(traj, sigma, cell_seed)
            run = sequential_predict(model, series.values, traj.values)
            out[i, j] = run_nrmse(run, traj.nu, skip)
    return out
