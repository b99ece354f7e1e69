"""End-to-end experiment: data, the family of trained predictors, all diagnostics.

Output layout under ``output_dir``::

    manifest.json
    data/     mg_clean.csv, noisy_<sigma>.csv (training), eval_noisy_<sigma>.csv
    models/   sigma_<sigma>/model.txt, sigma_<sigma>/train_log.csv
    results/  alpha_vs_sigma.csv, nrmse_sweep.csv, zeroth_order.csv, evaluation.csv,
              predictions_<sigma>.csv, impulse_profile_<sigma>.csv, impulse_summary.csv,
              report.md

Each stage records a hash of the configuration it depends on. A stage whose
outputs exist under a matching hash is skipped; outputs left over from a
different configuration raise :class:`StaleArtifactError`.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .errors import ConfigError, MissingArtifactError, StaleArtifactError
from .lstm_core import load_model, save_model
from .mg_dynamics import (NOISE_LEVELS, MgConfig, Trajectory, add_noise, fit_scaler,
                          integrate_mg, load_series, read_dataset_csv, write_dataset_csv)
from .rng import derive_seed
from .training import TrainConfig, train, write_train_log

log = logging.getLogger(__name__)

STAGES = ("generate", "train", "evaluate", "alpha", "sweep", "impulse", "report")


@dataclass(frozen=True)
class ImpulseConfig:
    period: int = 150
    magnitude: float = 1.0
    n_ensembles: int = 64


@dataclass(frozen=True)
class ExperimentConfig:
    mg: MgConfig = MgConfig()
    sigmas: tuple = NOISE_LEVELS
    train: TrainConfig = TrainConfig()
    impulse: ImpulseConfig = ImpulseConfig()
    n_train: int = 20000
    n_eval: int = 10000
    eval_skip: int = 150
    output_dir: str = "experiment"
    global_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        if not sig or any(s < 0 for s in sig) or list(sig) != sorted(sig):
            raise ConfigError("sigmas must be a non-empty ascending list of non-negative values")
        object.__setattr__(self, "sigmas", sig)
        needed = (self.impulse.n_ensembles + 1) * self.impulse.period + 1
        if self.n_eval < needed:
            raise ConfigError(f"n_eval={self.n_eval} too short for {self.impulse.n_ensembles} "
                              f"impulse windows plus warm-up (need {needed})")
        t_end = self.mg.transient + self.n_train + self.n_eval
        if self.mg.t_end != t_end:
            object.__setattr__(self, "mg", replace(self.mg, t_end=float(t_end)))

    @property
    def root(self) -> Path:
        return Path(self.output_dir)


PRESETS = {
    "desk": {
        "train": {"n_cells": 32, "seq_len": 100, "batch_size": 16, "n_epochs": 700,
                  "learning_rate": 5e-3},
    },
    "paper": {
        "train": {"n_cells": 128, "seq_len": 100, "batch_size": 16, "n_epochs": 1500,
                  "learning_rate": 2e-3},
    },
    "tiny": {
        "train": {"n_cells": 4, "seq_len": 20, "batch_size": 4, "n_epochs": 1,
                  "max_steps": 5},
        "experiment": {"n_train": 400, "n_eval": 1300},
        "mg": {"transient": 100.0},
        "impulse": {"period": 50, "n_ensembles": 8},
    },
}


def sigma_tag(sigma: float) -> str:
    return f"{float(sigma):g}"


def _coerce(value: str, kind):
    value = value.strip()
    if kind is bool:
        return value.lower() in ("1", "true", "yes", "on")
    if value.lower() in ("none", ""):
        return None
    if kind in (int, "int", "int | None"):
        return int(value)
    if kind in (float, "float", "float | None"):
        return float(value)
    if kind == "tuple":
        return tuple(float(v) for v in value.replace(",", " ").split())
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _section(cls, overrides: dict):
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, value in overrides.items():
        if key not in types:
            raise ConfigError(f"unknown key '{key}' for {cls.__name__}")
        out[key] = _coerce(value, types[key]) if isinstance(value, str) else value
    return out


def build_config(preset: str | None = "desk", path=None, **experiment_overrides) -> ExperimentConfig:
    """Merge a preset, an optional INI-style file and keyword overrides.

    File sections: ``[experiment]``, ``[mg]``, ``[train]``, ``[impulse]``; one
    ``key = value`` per line; ``sigmas`` is a comma-separated list.
    """
    layers = {"experiment": {}, "mg": {}, "train": {}, "impulse": {}}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}' (choose from {sorted(PRESETS)})")
        for sec, vals in PRESETS[preset].items():
            layers[sec].update(vals)
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for sec in parser.sections():
            if sec not in layers:
                raise ConfigError(f"unknown config section [{sec}]")
            layers[sec].update(dict(parser[sec]))
    layers["experiment"].update(experiment_overrides)
    exp = dict(layers["experiment"])
    if isinstance(exp.get("sigmas"), str):
        exp["sigmas"] = _coerce(exp["sigmas"], "tuple")
    exp = {k: v for k, v in exp.items() if v is not None}
    exp_kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    for key, value in list(exp.items()):
        if key not in exp_kinds or key in ("mg", "train", "impulse"):
            raise ConfigError(f"unknown key '{key}' in [experiment]")
        if isinstance(value, str) and key != "output_dir":
            exp[key] = _coerce(value, exp_kinds[key])
    return ExperimentConfig(
        mg=MgConfig(**_section(MgConfig, layers["mg"])),
        train=TrainConfig(**_section(TrainConfig, layers["train"])),
        impulse=ImpulseConfig(**_section(ImpulseConfig, layers["impulse"])),
        **exp,
    )


def config_text(cfg: ExperimentConfig) -> str:
    """Canonical text form of the config; what the manifest hashes."""
    lines = ["[experiment]"]
    for key in ("sigmas", "n_train", "n_eval", "eval_skip", "global_seed"):
        value = getattr(cfg, key)
        lines.append(f"{key} = {', '.join(repr(v) for v in value) if key == 'sigmas' else value!r}")
    for name in ("mg", "train", "impulse"):
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v!r}" for k, v in asdict(getattr(cfg, name)).items())
    return "\n".join(lines) + "\n"


def _hash(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=repr).encode())
    return h.hexdigest()[:16]


def stage_hashes(cfg: ExperimentConfig) -> dict:
    data = _hash(asdict(cfg.mg), cfg.sigmas, cfg.n_train, cfg.n_eval, cfg.global_seed)
    model = _hash(data, asdict(cfg.train))
    evals = _hash(model, cfg.eval_skip, asdict(cfg.impulse))
    return {"generate": data, "train": model, "evaluate": evals, "alpha": evals,
            "sweep": evals, "impulse": evals, "report": evals}


def stage_seeds(cfg: ExperimentConfig) -> dict:
    g = cfg.global_seed
    return {
        sigma_tag(s): {
            "noise_train": derive_seed(g, "noise-train", s),
            "noise_eval": derive_seed(g, "noise-eval", s),
            "train": derive_seed(g, "train", s),
        } for s in cfg.sigmas
    } | {"sweep": derive_seed(g, "sweep")}


class Experiment:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.root = cfg.root
        self.hashes = stage_hashes(cfg)
        self.seeds = stage_seeds(cfg)

    # paths -----------------------------------------------------------------
    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def data_path(self, name: str) -> Path:
        return self.root / "data" / name

    def model_dir(self, sigma: float) -> Path:
        return self.root / "models" / f"sigma_{sigma_tag(sigma)}"

    def result_path(self, name: str) -> Path:
        return self.root / "results" / name

    def stage_outputs(self, stage: str) -> list:
        tags = [sigma_tag(s) for s in self.cfg.sigmas]
        if stage == "generate":
            return ([self.data_path("mg_clean.csv")]
                    + [self.data_path(f"noisy_{t}.csv") for t in tags]
                    + [self.data_path(f"eval_noisy_{t}.csv") for t in tags])
        if stage == "train":
            return [self.model_dir(s) / "model.txt" for s in self.cfg.sigmas]
        if stage == "evaluate":
            return ([self.result_path("evaluation.csv")]
                    + [self.result_path(f"predictions_{t}.csv") for t in tags])
        if stage == "alpha":
            return [self.result_path("alpha_vs_sigma.csv")]
        if stage == "sweep":
            return [self.result_path("nrmse_sweep.csv"), self.result_path("zeroth_order.csv")]
        if stage == "impulse":
            return ([self.result_path("impulse_summary.csv")]
                    + [self.result_path(f"impulse_profile_{t}.csv") for t in tags])
        if stage == "report":
            return [self.result_path("report.md")]
        raise ValueError(stage)

    # manifest ----------------------------------------------------------------
    def read_manifest(self) -> dict:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text())
        return {"stages": {}}

    def write_manifest(self, manifest: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        manifest["config"] = config_text(self.cfg)
        manifest["config_hash"] = _hash(config_text(self.cfg))
        manifest["seeds"] = self.seeds
        self.manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    def status(self, stage: str) -> str:
        """'done', 'todo', or 'stale'."""
        outputs = self.stage_outputs(stage)
        present = [p.exists() for p in outputs]
        entry = self.read_manifest()["stages"].get(stage)
        if entry and entry.get("hash") == self.hashes[stage]:
            return "done" if all(present) else "todo"
        if stage == "train" and self._partial_training_matches():
            return "todo"
        return "stale" if any(present) else "todo"

    def _partial_training_matches(self) -> bool:
        # models left behind by an interrupted train stage are resumable if they carry
        # this config's hash
        found = [self.model_dir(s) / "model.txt" for s in self.cfg.sigmas]
        found = [p for p in found if p.exists()]
        return bool(found) and all(
            str(load_model(p).meta.get("stage_hash")) == self.hashes["train"] for p in found)

    def require(self, stage: str) -> None:
        for path in self.stage_outputs(stage):
            if not path.exists():
                raise MissingArtifactError(f"{path} is missing; run the '{stage}' subcommand first")
        if self.status(stage) == "stale":
            raise StaleArtifactError(
                f"'{stage}' outputs in {self.root} were made with a different config; "
                f"delete the directory and rerun")

    def run_stage(self, stage: str, force: bool = False) -> bool:
        """Run one stage unless it is already done. Returns True if it ran."""
        state = self.status(stage)
        if state == "stale" and not force:
            raise StaleArtifactError(
                f"'{stage}' outputs in {self.root} do not match this config (hash "
                f"{self.hashes[stage]}); delete {self.root} and rerun")
        if state == "done" and not force:
            log.info("stage %s up to date, skipping", stage)
            return False
        for upstream in STAGES[:STAGES.index(stage)]:
            if upstream in _DEPENDS[stage]:
                self.require(upstream)
        t0 = time.perf_counter()
        getattr(self, f"_{stage}")()
        manifest = self.read_manifest()
        manifest["stages"][stage] = {
            "hash": self.hashes[stage],
            "wall_seconds": round(time.perf_counter() - t0, 3),
            "outputs": [str(p.relative_to(self.root)) for p in self.stage_outputs(stage)],
        }
        self.write_manifest(manifest)
        return True

    def run(self, stages=STAGES) -> dict:
        return {stage: self.run_stage(stage) for stage in stages}

    # loaders -----------------------------------------------------------------
    def trajectory(self) -> Trajectory:
        times, mu, _, meta = read_dataset_csv(self.data_path("mg_clean.csv"))
        return Trajectory(times, mu, float(meta["nu"]))

    def eval_window(self) -> Trajectory:
        return self.trajectory().window(self.cfg.n_train, self.cfg.n_train + self.cfg.n_eval)

    def models(self) -> list:
        return [load_model(self.model_dir(s)) for s in self.cfg.sigmas]

    # stages ------------------------------------------------------------------
    def _generate(self):
        cfg = self.cfg
        self.data_path("").mkdir(parents=True, exist_ok=True)
        traj = integrate_mg(cfg.mg)
        write_dataset_csv(self.data_path("mg_clean.csv"), traj, None, cfg.mg)
        train_win = traj.window(0, cfg.n_train)
        eval_win = traj.window(cfg.n_train, cfg.n_train + cfg.n_eval)
        for s in cfg.sigmas:
            tag = sigma_tag(s)
            seeds = self.seeds[tag]
            write_dataset_csv(self.data_path(f"noisy_{tag}.csv"),
                              train_win, add_noise(train_win, s, seeds["noise_train"]), cfg.mg)
            write_dataset_csv(self.data_path(f"eval_noisy_{tag}.csv"),
                              eval_win, add_noise(eval_win, s, seeds["noise_eval"]), cfg.mg)

    def _train(self):
        jobs = [(s, self.data_path(f"noisy_{sigma_tag(s)}.csv"), self.model_dir(s),
                 replace(self.cfg.train, seed=self.seeds[sigma_tag(s)]["train"] & 0x7FFFFFFF),
                 self.hashes["train"])
                for s in self.cfg.sigmas]
        if self.cfg.jobs > 1:
            with ProcessPoolExecutor(self.cfg.jobs) as pool:
                list(pool.map(_train_one, jobs))
        else:
            for job in jobs:
                _train_one(job)

    def _evaluate(self):
        cfg = self.cfg
        skip = cfg.eval_skip
        rows = ["sigma,e_mu,e_mu_zeroth"]
        for s, model in zip(cfg.sigmas, self.models()):
            tag = sigma_tag(s)
            series = load_series(self.data_path(f"eval_noisy_{tag}.csv"))
            truth = series.source.values
            run = dg.sequential_predict(model, series.values, truth, nu=series.nu)
            e_mu = dg.run_nrmse(run, series.nu, skip)
            e_zero = dg.nrmse(dg.zeroth_order(series.values)[skip:], truth[skip + 1:], series.nu)
            rows.append(f"{tag},{e_mu:.17g},{e_zero:.17g}")
            lines = ["t,mu,y,y_hat"]
            t = series.source.times
            lines.extend(f"{t[k + 1]:.17g},{truth[k + 1]:.17g},{series.values[k + 1]:.17g},"
                         f"{run.preds[k]:.17g}" for k in range(len(truth) - 1))
            _write(self.result_path(f"predictions_{tag}.csv"), lines)
        _write(self.result_path("evaluation.csv"), rows)

    def _alpha(self):
        ev = self.eval_window()
        rows = ["sigma,alpha,ratio"]
        for s, model in zip(self.cfg.sigmas, self.models()):
            res = alpha_for(model, ev.values, ev.values, self.cfg.eval_skip)
            rows.append(f"{sigma_tag(s)},{res.alpha:.17g},{res.ratio:.17g}")
        _write(self.result_path("alpha_vs_sigma.csv"), rows)

    def _sweep(self):
        cfg = self.cfg
        ev = self.eval_window()
        seed = self.seeds["sweep"]
        table = dg.noise_sweep(self.models(), ev, cfg.sigmas, seed, cfg.eval_skip)
        rows = ["train_sigma,eval_sigma,e_mu"]
        for s_train, row in zip(cfg.sigmas, table):
            rows.extend(f"{sigma_tag(s_train)},{sigma_tag(s_eval)},{e:.17g}"
                        for s_eval, e in zip(cfg.sigmas, row))
        _write(self.result_path("nrmse_sweep.csv"), rows)
        rows = ["eval_sigma,e_mu"]
        for s_eval in cfg.sigmas:
            y = add_noise(ev, s_eval, derive_seed(seed, "zeroth", s_eval)).values
            e = dg.nrmse(dg.zeroth_order(y)[cfg.eval_skip:], ev.values[cfg.eval_skip + 1:], ev.nu)
            rows.append(f"{sigma_tag(s_eval)},{e:.17g}")
        _write(self.result_path("zeroth_order.csv"), rows)

    def _impulse(self):
        cfg = self.cfg.impulse
        ev = self.eval_window()
        rows = ["sigma,e_0,lambda,e_0_impulse_units,e_mu,n_ensembles"]
        for s, model in zip(self.cfg.sigmas, self.models()):
            tag = sigma_tag(s)
            try:
                res = dg.impulse_experiment(model, ev, cfg.period, cfg.magnitude, cfg.n_ensembles)
            except dg.DegenerateRelaxationError as exc:
                log.warning("sigma=%s: %s", tag, exc)
                rows.append(f"{tag},nan,nan,nan,nan,0")
                _write(self.result_path(f"impulse_profile_{tag}.csv"), ["n,e_n"])
                continue
            rows.append(f"{tag},{res.e_0:.17g},{res.lam:.17g},{res.e_0_impulse_units:.17g},"
                        f"{res.e_mu_baseline:.17g},{res.n_ensembles}")
            _write(self.result_path(f"impulse_profile_{tag}.csv"),
                   ["n,e_n"] + [f"{n},{e:.17g}" for n, e in enumerate(res.e_n)])
        _write(self.result_path("impulse_summary.csv"), rows)

    def _report(self):
        parts = ["# Experiment report", "", "## Configuration", "", "```ini",
                 config_text(self.cfg).rstrip(), "```", ""]
        manifest = self.read_manifest()
        parts += ["## Manifest", "", "```json", json.dumps(manifest.get("stages", {}), indent=2,
                                                          sort_keys=True), "```", ""]
        for name in ("evaluation.csv", "alpha_vs_sigma.csv", "nrmse_sweep.csv",
                     "zeroth_order.csv", "impulse_summary.csv"):
            path = self.result_path(name)
            if path.exists():
                parts += [f"## {name}", "", "```csv", path.read_text().rstrip(), "```", ""]
        _write(self.result_path("report.md"), parts)


_DEPENDS = {
    "generate": (),
    "train": ("generate",),
    "evaluate": ("generate", "train"),
    "alpha": ("generate", "train"),
    "sweep": ("generate", "train"),
    "impulse": ("generate", "train"),
    "report": (),
}


def alpha_for(model, observations, truth=None, skip: int = 0) -> dg.AlphaResult:
    run = dg.sequential_predict(model, observations, truth, capture_traces=True)
    return dg.contribution_alpha(run, skip=skip)


def _train_one(job):
    sigma, data_path, out_dir, train_cfg, stage_hash = job
    # a model finished by an interrupted run under the same config is kept
    if (Path(out_dir) / "model.txt").exists() and (Path(out_dir) / "train_log.csv").exists():
        if str(load_model(out_dir).meta.get("stage_hash")) == stage_hash:
            log.info("sigma=%g model already trained, reusing", sigma)
            return str(out_dir)
    series = load_series(data_path)
    scaler = fit_scaler(series)
    ckpt = Path(out_dir) / "checkpoints" if train_cfg.checkpoint_every else None
    result = train(sigma, series, train_cfg, scaler, checkpoint_dir=ckpt)
    result.model.meta["stage_hash"] = stage_hash
    save_model(result.model, out_dir)
    write_train_log(result.history, Path(out_dir) / "train_log.csv")
    return str(out_dir)


def _write(path: Path, lines) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def run_pipeline(cfg: ExperimentConfig, stages=STAGES) -> Experiment:
    exp = Experiment(cfg)
    exp.run(stages)
    return exp


def read_csv(path) -> dict:
    """Column-name -> array for the numeric result tables."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float, ndmin=1)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}
