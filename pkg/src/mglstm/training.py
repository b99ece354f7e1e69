"""Loss, exact backpropagation through time, ADAM, and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergenceError
from .lstm_core import LstmParams, LstmState, Model, init_params, save_model, sigmoid
from .mg_dynamics import NoisySeries, Scaler, fit_scaler
from .rng import CounterStream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    n_cells: int = 32
    seq_len: int = 100
    n_epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    grad_clip: float = 5.0
    init_scale: float | None = None
    forget_bias: float = 1.0
    candidate: str = "sigmoid"
    seed: int = 0
    max_steps: int | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("n_cells", "seq_len", "n_epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("learning_rate", "adam_epsilon", "grad_clip"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")


def loss(preds, targets) -> float:
    """Sum of halved squared residuals."""
    preds, targets = np.asarray(preds, dtype=float), np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {targets.shape}")
    return float(0.5 * np.sum((targets - preds) ** 2))


def loss_grad(preds, targets):
    """d loss / d preds."""
    return np.asarray(preds, dtype=float) - np.asarray(targets, dtype=float)


def zero_grads(params: LstmParams) -> dict:
    return {k: np.zeros_like(v) for k, v in params.arrays().items()}


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))


def clip_grads(grads: dict, max_norm: float):
    """Rescale so the global norm is at most ``max_norm``. Returns ``(grads, pre_clip_norm)``."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def bptt(params: LstmParams, initial_state: LstmState | None, inputs, targets):
    """Loss and exact gradients over full sequences.

    ``inputs`` and ``targets`` are ``(T,)`` or ``(B, T)``; targets are the inputs
    shifted one step ahead. The loss is summed over the batch and all steps.
    """
    x = np.asarray(inputs, dtype=float)
    tgt = np.asarray(targets, dtype=float)
    if x.shape != tgt.shape:
        raise ValueError(f"inputs {x.shape} and targets {tgt.shape} must align")
    if x.ndim == 1:
        x, tgt = x[None, :], tgt[None, :]
    n_batch, n_steps = x.shape
    n = params.n_cells
    p = params
    grads = zero_grads(p)
    if n_steps == 0:
        return 0.0, grads

    # the four gate/candidate maps share the input z, so they run as one (4N, N) matmul
    w_g = np.concatenate([p.W_i, p.W_o, p.W_f, p.W_s])
    w_g_t = np.ascontiguousarray(w_g.T)
    w_h_t = np.ascontiguousarray(p.W_h.T)
    b_g = np.concatenate([p.b_i, p.b_o, p.b_f, p.b_s])
    sig_cand = p.candidate == "sigmoid"
    w_y = p.W_y[:, 0]
    xt = x.T  # (T, B)

    shape = (n_steps, n_batch, n)
    h_prev = np.empty(shape)
    s_prev = np.empty(shape)
    z_all = np.empty(shape)
    act = np.empty((n_steps, n_batch, 4 * n))
    th_all = np.empty(shape)
    h_all = np.empty(shape)

    if initial_state is None:
        s = np.zeros((n_batch, n))
        h = np.zeros((n_batch, n))
    else:
        s = np.broadcast_to(initial_state.s, (n_batch, n)).copy()
        h = np.broadcast_to(initial_state.h, (n_batch, n)).copy()

    for t in range(n_steps):
        h_prev[t] = h
        s_prev[t] = s
        z = np.tanh(h @ w_h_t + xt[t, :, None] * w_y)
        a = z @ w_g_t + b_g
        if sig_cand:
            g = sigmoid(a)
        else:
            g = np.empty_like(a)
            g[:, :3 * n] = sigmoid(a[:, :3 * n])
            g[:, 3 * n:] = np.tanh(a[:, 3 * n:])
        s = g[:, 2 * n:3 * n] * s + g[:, :n] * g[:, 3 * n:]
        th = np.tanh(s)
        h = g[:, n:2 * n] * th
        z_all[t], act[t], th_all[t], h_all[t] = z, g, th, h

    u = np.tanh(h_all @ p.W_y1.T + p.b_y1)  # (T, B, N)
    y_hat = (u @ p.W_y2[0] + p.b_y2[0]).T
    total = loss(y_hat, tgt)
    if not np.isfinite(total):
        raise DivergenceError("non-finite loss in bptt")

    dy = loss_grad(y_hat, tgt).T  # (T, B)
    grads["W_y2"][0] = dy.reshape(-1) @ u.reshape(-1, n)
    grads["b_y2"][0] = dy.sum()
    da_y = dy[:, :, None] * p.W_y2[0] * (1.0 - u * u)
    grads["W_y1"] = da_y.reshape(-1, n).T @ h_all.reshape(-1, n)
    grads["b_y1"] = da_y.sum(axis=(0, 1))
    dh_out = da_y @ p.W_y1

    da_all = np.empty_like(act)
    daz_all = np.empty(shape)
    dh_next = np.zeros((n_batch, n))
    ds_next = np.zeros((n_batch, n))
    for t in range(n_steps - 1, -1, -1):
        g = act[t]
        g_i, g_o, g_f, c = g[:, :n], g[:, n:2 * n], g[:, 2 * n:3 * n], g[:, 3 * n:]
        th = th_all[t]
        dh = dh_out[t] + dh_next
        ds = dh * g_o * (1.0 - th * th) + ds_next
        da = da_all[t]
        da[:, :n] = ds * c * g_i * (1.0 - g_i)
        da[:, n:2 * n] = dh * th * g_o * (1.0 - g_o)
        da[:, 2 * n:3 * n] = ds * s_prev[t] * g_f * (1.0 - g_f)
        da[:, 3 * n:] = ds * g_i * (c * (1.0 - c) if sig_cand else 1.0 - c * c)
        z = z_all[t]
        da_z = (da @ w_g) * (1.0 - z * z)
        daz_all[t] = da_z
        dh_next = da_z @ p.W_h
        ds_next = ds * g_f

    flat_da = da_all.reshape(-1, 4 * n)
    dw_g = flat_da.T @ z_all.reshape(-1, n)
    db_g = flat_da.sum(axis=0)
    for k, key in enumerate("iofs"):
        grads["W_" + key] = dw_g[k * n:(k + 1) * n]
        grads["b_" + key] = db_g[k * n:(k + 1) * n]
    flat_daz = daz_all.reshape(-1, n)
    grads["W_h"] = flat_daz.T @ h_prev.reshape(-1, n)
    grads["W_y"] = (flat_daz.T @ xt.reshape(-1))[:, None]
    return total, {k: np.ascontiguousarray(grads[k]) for k in grads}


@dataclass(eq=False)
class AdamMoments:
    m: dict
    v: dict
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamMoments":
        arrays = params if isinstance(params, dict) else params.arrays()
        return cls({k: np.zeros_like(v) for k, v in arrays.items()},
                   {k: np.zeros_like(v) for k, v in arrays.items()}, 0)


def adam_step(params, grads: dict, moments: AdamMoments, config: TrainConfig):
    """Clip ``grads`` to ``config.grad_clip`` by global norm, then apply one ADAM update.

    ``params`` is an :class:`LstmParams` or a plain dict of arrays. Returns
    ``(new_params, new_moments)`` of the same kind; the inputs are left untouched.
    """
    arrays = params if isinstance(params, dict) else params.arrays()
    grads, _ = clip_grads(grads, config.grad_clip)
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = moments.step_count + 1
    m = {k: b1 * moments.m[k] + (1.0 - b1) * g for k, g in grads.items()}
    v = {k: b2 * moments.v[k] + (1.0 - b2) * g * g for k, g in grads.items()}
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    lr, eps = config.learning_rate, config.adam_epsilon
    new = {k: a - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps) for k, a in arrays.items()}
    moments = AdamMoments(m, v, t)
    if isinstance(params, dict):
        return new, moments
    return params.with_arrays(new), moments


@dataclass
class TrainResult:
    model: Model
    history: list = field(default_factory=list)  # (step, loss, grad_norm)

    @property
    def final_loss(self) -> float:
        return self.history[-1][1] if self.history else float("nan")


def iter_batches(n_points: int, config: TrainConfig, stream: CounterStream):
    """Yield start indices of contiguous windows, ``batch_size`` at a time.

    Each epoch tiles the series with non-overlapping windows at a random offset
    and visits them in shuffled order.
    """
    span = config.seq_len + 1
    for _ in range(config.n_epochs):
        offset = int(stream.integers(config.seq_len, 1)[0]) if n_points > 2 * span else 0
        starts = np.arange(offset, n_points - span + 1, config.seq_len)
        if len(starts) == 0:
            raise ValueError(f"series of {n_points} points is shorter than one window")
        starts = starts[stream.permutation(len(starts))]
        for k in range(0, len(starts) - config.batch_size + 1, config.batch_size):
            yield starts[k:k + config.batch_size]
        rem = len(starts) % config.batch_size
        if len(starts) < config.batch_size and rem:
            yield starts


def write_train_log(history, path) -> None:
    lines = ["step,loss,grad_norm"]
    lines.extend(f"{s},{l:.17g},{g:.17g}" for s, l, g in history)
    Path(path).write_text("\n".join(lines) + "\n")


def train(sigma: float, data: NoisySeries, config: TrainConfig = TrainConfig(),
          scaler: Scaler | None = None, checkpoint_dir=None) -> TrainResult:
    """Train one predictor on the series ``data`` (noise level ``sigma``).

    Windows of ``seq_len`` inputs are mapped to the next-step targets; every window
    starts from the zero state.
    """
    scaler = scaler or fit_scaler(data)
    series = scaler.apply(data.values)
    stream = CounterStream(config.seed)
    params = init_params(config.n_cells, stream.seed ^ 0x5EED, config.init_scale,
                         config.forget_bias, config.candidate)
    moments = AdamMoments.zeros_like(params)
    history = []
    idx = np.arange(config.seq_len)
    if config.checkpoint_every and checkpoint_dir:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)

    def make_model(p):
        return Model(p, scaler, float(sigma), int(config.seed))

    for step_no, starts in enumerate(iter_batches(len(series), config, stream), start=1):
        windows = series[starts[:, None] + idx]
        targets = series[starts[:, None] + idx + 1]
        try:
            value, grads = bptt(params, None, windows, targets)
        except DivergenceError as exc:
            raise DivergenceError(f"divergence at step {step_no}", make_model(params)) from exc
        gnorm = global_norm(grads)
        params, moments = adam_step(params, grads, moments, config)
        history.append((step_no, value, gnorm))
        if config.checkpoint_every and checkpoint_dir and step_no % config.checkpoint_every == 0:
            save_model(make_model(params), Path(checkpoint_dir) / f"step_{step_no:06d}.txt")
        if step_no % 500 == 0:
            log.info("sigma=%g step %d loss %.4g", sigma, step_no, value)
        if config.max_steps and step_no >= config.max_steps:
            break

    model = make_model(params)
    if history:
        model.meta["final_loss"] = float(history[-1][1])
        model.meta["n_steps"] = history[-1][0]
    return TrainResult(model, history)
