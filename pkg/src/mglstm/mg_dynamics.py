"""Mackey-Glass data generation: integration, observation noise, min-max scaling.

The delay equation

    dmu/dt = beta * mu(t - tau) / (1 + mu(t - tau)**exponent) - gamma * mu(t)

is integrated with fixed-step RK4. Because ``tau / dt_int`` is an integer, the
delayed state at the step boundaries falls on stored grid points; the RK4
midpoint stage needs the delayed state half way between two grid points, which
is taken from the cubic Hermite interpolant built from the stored values and
derivatives. For ``t - tau <= 0`` the constant history is used.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateScaleError, IntegrationDivergenceError
from .rng import CounterStream

#: Canonical noise levels of the sweep, in units of the signal standard deviation.
NOISE_LEVELS = (0.0, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64)

SAMPLE_DT = 1.0


@dataclass(frozen=True)
class MgConfig:
    beta: float = 0.2
    gamma: float = 0.1
    tau: float = 17.0
    exponent: float = 10.0
    history_value: float = 1.2
    dt_int: float = 0.1
    t_end: float = 31000.0
    transient: float = 1000.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not self.dt_int > 0:
            raise ConfigError(f"dt_int must be positive, got {self.dt_int}")
        ratio = self.tau / self.dt_int
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 10:
            raise ConfigError(f"tau/dt_int must be an integer >= 10, got {ratio}")
        per_sample = SAMPLE_DT / self.dt_int
        if abs(per_sample - round(per_sample)) > 1e-9 * per_sample:
            raise ConfigError(f"sampling interval must be a multiple of dt_int={self.dt_int}")
        if self.transient < 0 or not self.t_end > self.transient:
            raise ConfigError("need 0 <= transient < t_end")

    @property
    def delay_steps(self) -> int:
        return int(round(self.tau / self.dt_int))

    @property
    def steps_per_sample(self) -> int:
        return int(round(SAMPLE_DT / self.dt_int))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    nu: float

    def __len__(self):
        return len(self.values)

    def window(self, start: int, stop: int) -> "Trajectory":
        """Sub-window that keeps the full-trajectory nu (the normalization stays shared)."""
        return Trajectory(self.times[start:stop], self.values[start:stop], self.nu)


@dataclass(frozen=True, eq=False)
class NoisySeries:
    values: np.ndarray
    sigma: float
    seed: int
    source: Trajectory

    def __len__(self):
        return len(self.values)

    @property
    def nu(self) -> float:
        return self.source.nu


def integrate_mg(config: MgConfig = MgConfig()) -> Trajectory:
    """Integrate the delay equation and sample it at unit spacing after the transient."""
    beta, gamma, power = float(config.beta), float(config.gamma), float(config.exponent)
    dt = float(config.dt_int)
    m = config.delay_steps
    n_steps = int(round(config.t_end / dt))
    hist = float(config.history_value)

    def rhs(x, xd):
        return beta * xd / (1.0 + xd**power) - gamma * x

    xs = [0.0] * (n_steps + 1)
    fs = [0.0] * (n_steps + 1)
    xs[0] = hist
    fs[0] = rhs(hist, hist)

    half = 0.5 * dt
    x = hist
    for k in range(n_steps):
        j = k - m
        # delayed values at t_k - tau, t_k - tau + dt/2, t_k - tau + dt
        if j < 0:
            d0 = dmid = d1 = hist
        else:
            d0 = xs[j]
            d1 = xs[j + 1]
            dmid = 0.5 * (d0 + d1) + dt * (fs[j] - fs[j + 1]) * 0.125
        try:
            k1 = rhs(x, d0)
            k2 = rhs(x + half * k1, dmid)
            k3 = rhs(x + half * k2, dmid)
            k4 = rhs(x + dt * k3, d1)
            x = x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        except (OverflowError, ZeroDivisionError):
            x = math.nan
        if not math.isfinite(x):
            raise IntegrationDivergenceError(
                f"non-finite state at t={(k + 1) * dt:g}; reduce dt_int (now {dt})"
            )
        xs[k + 1] = x
        jn = k + 1 - m
        try:
            fs[k + 1] = rhs(x, xs[jn] if jn >= 0 else hist)
        except OverflowError:
            raise IntegrationDivergenceError(
                f"overflow at t={(k + 1) * dt:g}; reduce dt_int (now {dt})") from None

    stride = config.steps_per_sample
    first = int(round(config.transient / dt))
    idx = np.arange(first, n_steps + 1, stride)
    values = np.asarray(xs)[idx]
    times = idx * dt
    return Trajectory(times=times, values=values, nu=float(np.std(values)))


def add_noise(traj: Trajectory, sigma: float, seed: int) -> NoisySeries:
    """Observations ``y_n = mu_n + nu * eps_n`` with ``eps_n ~ N(0, sigma^2)``."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        values = traj.values.copy()
    else:
        eps = sigma * CounterStream(seed).normal(len(traj))
        values = traj.values + traj.nu * eps
    return NoisySeries(values=values, sigma=float(sigma), seed=int(seed), source=traj)


@dataclass(frozen=True)
class Scaler:
    """Affine map of ``[min, max]`` onto ``[-0.5, 0.5]``."""

    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise DegenerateScaleError(f"scaler needs max > min, got [{self.min}, {self.max}]")

    @property
    def span(self) -> float:
        return self.max - self.min

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.min) / self.span - 0.5

    def invert(self, x):
        return (np.asarray(x, dtype=float) + 0.5) * self.span + self.min


def fit_scaler(series) -> Scaler:
    values = np.asarray(getattr(series, "values", series), dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise DegenerateScaleError("cannot fit a scaler on a constant series")
    return Scaler(lo, hi)


def write_dataset_csv(path, traj: Trajectory, series: NoisySeries | None = None,
                      config: MgConfig | None = None, extra: dict | None = None) -> None:
    """Write ``t,mu,y`` rows; metadata goes in leading ``# key = value`` lines."""
    y = traj.values if series is None else series.values
    meta = {}
    if config is not None:
        meta.update({f"mg.{k}": v for k, v in asdict(config).items()})
    meta["nu"] = traj.nu
    if series is not None:
        meta["sigma"] = series.sigma
        meta["seed"] = series.seed
    if extra:
        meta.update(extra)
    lines = [f"# {k} = {_fmt(v)}" for k, v in meta.items()]
    lines.append("t,mu,y")
    lines.extend(f"{_fmt(t)},{_fmt(m)},{_fmt(v)}" for t, m, v in zip(traj.times, traj.values, y))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset_csv(path):
    """Inverse of :func:`write_dataset_csv`. Returns ``(times, mu, y, meta)``."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = _parse(value.strip())
            elif line != "t,mu,y":
                rows.append([float(v) for v in line.split(",")])
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2], meta


def load_series(path) -> NoisySeries:
    times, mu, y, meta = read_dataset_csv(path)
    traj = Trajectory(times, mu, float(meta["nu"]))
    return NoisySeries(y, float(meta.get("sigma", 0.0)), int(meta.get("seed", 0)), traj)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _parse(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text
