"""LSTM cell with a shared input network feeding all gates.

One step, for observation ``y`` and state ``(s, h)``::

    z   = tanh(W_h h + W_y y)
    G_m = sigmoid(W_m z + b_m)              m in {i, o, f}
    s'  = G_f * s + G_i * cand(W_s z + b_s)  cand = sigmoid by default
    h'  = G_o * tanh(s')
    y^  = W_y2 tanh(W_y1 h' + b_y1) + b_y2

Vectors are rows: a state may be ``(N,)`` or a batch ``(B, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ParameterShapeError
from .mg_dynamics import Scaler
from .rng import CounterStream

ARRAY_NAMES = ("W_h", "W_y", "W_i", "W_o", "W_f", "W_s", "b_i", "b_o", "b_f", "b_s",
               "W_y1", "b_y1", "W_y2", "b_y2")
CANDIDATES = ("sigmoid", "tanh")


def sigmoid(x):
    """Logistic function in the two-branch form; exp only ever sees non-positive arguments."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def expected_shapes(n: int) -> dict:
    return {
        "W_h": (n, n), "W_y": (n, 1),
        "W_i": (n, n), "W_o": (n, n), "W_f": (n, n), "W_s": (n, n),
        "b_i": (n,), "b_o": (n,), "b_f": (n,), "b_s": (n,),
        "W_y1": (n, n), "b_y1": (n,), "W_y2": (1, n), "b_y2": (1,),
    }


@dataclass(eq=False)
class LstmParams:
    W_h: np.ndarray
    W_y: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_f: np.ndarray
    W_s: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_f: np.ndarray
    b_s: np.ndarray
    W_y1: np.ndarray
    b_y1: np.ndarray
    W_y2: np.ndarray
    b_y2: np.ndarray
    candidate: str = "sigmoid"

    def __post_init__(self):
        n = np.shape(self.W_h)[0] if np.ndim(self.W_h) == 2 else -1
        for name, shape in expected_shapes(n).items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ParameterShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ParameterShapeError(f"{name} has non-finite entries")
            setattr(self, name, arr)
        if self.candidate not in CANDIDATES:
            raise ValueError(f"candidate must be one of {CANDIDATES}")

    @property
    def n_cells(self) -> int:
        return self.W_h.shape[0]

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in ARRAY_NAMES}

    def with_arrays(self, arrays: dict) -> "LstmParams":
        return replace(self, **arrays)

    def copy(self) -> "LstmParams":
        return self.with_arrays({k: v.copy() for k, v in self.arrays().items()})

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def unflatten(self, vec: np.ndarray) -> "LstmParams":
        out, pos = {}, 0
        for name, arr in self.arrays().items():
            out[name] = np.asarray(vec[pos:pos + arr.size], dtype=float).reshape(arr.shape)
            pos += arr.size
        return self.with_arrays(out)


def zero_params(n_cells: int, candidate: str = "sigmoid") -> LstmParams:
    return LstmParams(**{k: np.zeros(s) for k, s in expected_shapes(n_cells).items()},
                      candidate=candidate)


def init_params(n_cells: int, seed: int, init_scale: float | None = None,
                forget_bias: float = 1.0, candidate: str = "sigmoid") -> LstmParams:
    """Weights uniform in ``[-init_scale, init_scale]`` (default ``1/sqrt(N)``), biases
    zero except the forget-gate bias."""
    if init_scale is None:
        init_scale = 1.0 / np.sqrt(n_cells)
    stream = CounterStream(seed)
    arrays = {}
    for name, shape in expected_shapes(n_cells).items():
        if name.startswith("W"):
            u = stream.uniform(int(np.prod(shape)))
            arrays[name] = (2.0 * u - 1.0).reshape(shape) * init_scale
        else:
            arrays[name] = np.zeros(shape)
    arrays["b_f"][:] = forget_bias
    return LstmParams(**arrays, candidate=candidate)


@dataclass(frozen=True, eq=False)
class LstmState:
    s: np.ndarray
    h: np.ndarray


@dataclass(frozen=True, eq=False)
class StepTrace:
    wh_h: np.ndarray
    wy_y: np.ndarray
    z: np.ndarray
    gate_i: np.ndarray
    gate_o: np.ndarray
    gate_f: np.ndarray


def init_state(n_cells: int, batch: int | None = None) -> LstmState:
    shape = (n_cells,) if batch is None else (batch, n_cells)
    return LstmState(np.zeros(shape), np.zeros(shape))


def candidate_fn(name: str):
    return sigmoid if name == "sigmoid" else np.tanh


def step(params: LstmParams, state: LstmState, y):
    """Advance one step. Returns ``(next_state, y_hat, trace)``.

    ``y`` is a scalar (or a length-B array for batched states) in normalized units.
    """
    n = params.n_cells
    if np.shape(state.s)[-1:] != (n,) or np.shape(state.h) != np.shape(state.s):
        raise ParameterShapeError(
            f"state shapes {np.shape(state.s)}, {np.shape(state.h)} do not match n_cells={n}")
    y = np.asarray(y, dtype=float)
    wh_h = state.h @ params.W_h.T
    wy_y = y[..., None] * params.W_y[:, 0]
    z = np.tanh(wh_h + wy_y)
    g_i = sigmoid(z @ params.W_i.T + params.b_i)
    g_o = sigmoid(z @ params.W_o.T + params.b_o)
    g_f = sigmoid(z @ params.W_f.T + params.b_f)
    cand = candidate_fn(params.candidate)(z @ params.W_s.T + params.b_s)
    s_next = g_f * state.s + g_i * cand
    h_next = g_o * np.tanh(s_next)
    u = np.tanh(h_next @ params.W_y1.T + params.b_y1)
    y_hat = (u @ params.W_y2.T)[..., 0] + params.b_y2[0]
    trace = StepTrace(wh_h, wy_y, z, g_i, g_o, g_f)
    return LstmState(s_next, h_next), y_hat, trace


def l1_contribution(trace: StepTrace):
    """``(|W_h h|_1, |W_y y|_1)`` for one step (summed over the last axis)."""
    return np.abs(trace.wh_h).sum(axis=-1), np.abs(trace.wy_y).sum(axis=-1)


@dataclass(eq=False)
class Model:
    """A trained predictor: parameters plus the scaler fitted on its training series."""

    params: LstmParams
    scaler: Scaler
    train_sigma: float = 0.0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_cells(self) -> int:
        return self.params.n_cells


_HEADER = "mglstm-model 1"


def save_model(model: Model, path) -> Path:
    """Write the model as a text document; a directory path gets ``model.txt`` inside."""
    path = Path(path)
    if path.suffix != ".txt":
        path.mkdir(parents=True, exist_ok=True)
        path = path / "model.txt"
    lines = [
        _HEADER,
        f"n_cells {model.n_cells}",
        f"train_sigma {model.train_sigma:.17g}",
        f"seed {model.seed}",
        f"scaler_min {model.scaler.min:.17g}",
        f"scaler_max {model.scaler.max:.17g}",
        f"candidate {model.params.candidate}",
    ]
    for key, value in model.meta.items():
        lines.append(f"meta {key} {value:.17g}" if isinstance(value, float) else f"meta {key} {value}")
    for name, arr in model.params.arrays().items():
        lines.append(f"array {name} " + " ".join(str(d) for d in arr.shape))
        for row in np.atleast_2d(arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr):
            lines.append(" ".join(f"{v:.17g}" for v in row))
    lines.append("end")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_model(path) -> Model:
    path = Path(path)
    if path.suffix != ".txt":
        path = path / "model.txt"
    lines = path.read_text().splitlines()
    if not lines or lines[0] != _HEADER:
        raise ValueError(f"{path} is not a model file")
    header, meta, arrays = {}, {}, {}
    i = 1
    while i < len(lines) and lines[i] != "end":
        parts = lines[i].split()
        if parts[0] == "array":
            name, shape = parts[1], tuple(int(d) for d in parts[2:])
            n_rows = shape[0] if len(shape) > 1 else 1
            rows = [[float(v) for v in lines[i + 1 + r].split()] for r in range(n_rows)]
            arrays[name] = np.array(rows, dtype=float).reshape(shape)
            i += 1 + n_rows
            continue
        if parts[0] == "meta":
            meta[parts[1]] = _parse_scalar(" ".join(parts[2:]))
        else:
            header[parts[0]] = parts[1]
        i += 1
    params = LstmParams(**arrays, candidate=header.get("candidate", "sigmoid"))
    if params.n_cells != int(header["n_cells"]):
        raise ParameterShapeError("n_cells in header disagrees with array shapes")
    scaler = Scaler(float(header["scaler_min"]), float(header["scaler_max"]))
    return Model(params, scaler, float(header["train_sigma"]), int(header["seed"]), meta)


def _parse_scalar(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text

