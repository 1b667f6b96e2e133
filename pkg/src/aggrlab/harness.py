"""Sample-complexity curves: sample, train, evaluate on a (T, trial) grid."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .aggregators import Aggregator, averaging, true_optimal
from .errors import AggrLabError, ConfigError, SupportTooLarge
from .hard_instances import DzFamily, ci_pair_build, dz_to_aggregation_instance
from .learners import (
    ThetaGrid,
    empirical_bayes,
    erm_empirical,
    erm_theta,
    multi_erm_theta,
    strongly_informative_learn,
    weakly_informative_learn,
)
from .metrics import LossReport, expected_loss_exact, expected_loss_exchangeable, mc_gap
from .model import (
    CondIndepModel,
    Model,
    SampleSet,
    load_model,
    model_from_dict,
    random_cond_indep,
    random_joint,
    sample,
    symmetric_binary_model,
    to_joint,
    weak_binary_model,
    xor_joint,
)
from .parallel import parallel_map
from .rng import stream

SCHEMA_VERSION = "1"


# ---------------------------------------------------------------------------
# registries


def _gen_dz(m=2, n=2, eps=0.01, seed=0):
    fam = DzFamily(int(m), int(n), float(eps))
    return dz_to_aggregation_instance(fam, fam.random_sign(stream(int(seed), "dz-sign")))


def _gen_cipair(n=4, eps=1e-6, which=1):
    pair = ci_pair_build(int(n), float(eps))
    return pair.first if int(which) == 1 else pair.second


MODEL_GENERATORS: dict[str, Callable[..., Model]] = {
    "random_joint": lambda n=2, m=2, k=2, seed=0, alpha=1.0: random_joint(
        int(n), int(m), int(k), stream(int(seed), "model"), float(alpha)
    ),
    "random_cond_indep": lambda n=3, m=3, k=2, seed=0, alpha=1.0: random_cond_indep(
        int(n), int(m), int(k), stream(int(seed), "model"), alpha=float(alpha)
    ),
    "symmetric": lambda n=5, accuracy=0.8, p=0.5: symmetric_binary_model(int(n), float(accuracy), float(p)),
    "weak": lambda n=5, gamma=0.2, p=0.5: weak_binary_model(int(n), float(gamma), float(p)),
    "xor": lambda: xor_joint(),
    "dz": _gen_dz,
    "cipair": _gen_cipair,
}


def _grid(params: dict) -> ThetaGrid:
    keys = ("theta_min", "theta_max", "points", "rel_tol")
    return ThetaGrid(**{k: params[k] for k in keys if k in params})


# learner(samples, model, params) -> Aggregator
LEARNERS: dict[str, Callable[[SampleSet, Model, dict], Aggregator]] = {
    "bayes_optimal": lambda s, model, p: true_optimal(model),
    "averaging": lambda s, model, p: averaging(),
    "erm_empirical": lambda s, model, p: erm_empirical(s),
    "empirical_bayes": lambda s, model, p: empirical_bayes(s),
    "erm_theta": lambda s, model, p: erm_theta(s, _grid(p)),
    "multi_erm_theta": lambda s, model, p: multi_erm_theta(s, grid=_grid(p)),
    "weakly_informative": lambda s, model, p: weakly_informative_learn(s, float(p["gamma"]), s.n),
    "strongly_informative": lambda s, model, p: strongly_informative_learn(
        s,
        float(p["gamma"]),
        float(p["eps"]),
        float(p["delta"]),
        s.n,
        check_preconditions=bool(p.get("check_preconditions", True)),
    ),
}


def build_model(source: dict, base_dir: Path | None = None) -> Model:
    if "inline" in source:
        return model_from_dict(source["inline"])
    if "file" in source:
        path = Path(source["file"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        return load_model(path)
    if "generator" in source:
        name = source["generator"]
        if name not in MODEL_GENERATORS:
            raise ConfigError(f"unknown model generator {name!r}")
        return MODEL_GENERATORS[name](**source.get("params", {}))
    raise ConfigError("model source needs one of inline, file, generator")


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    learner: str
    schedule: tuple[int, ...]
    trials: int
    seed: int = 0
    learner_params: dict = field(default_factory=dict)
    evaluation: str = "exact"
    mc_budget: int = 100_000
    csv_path: str | None = None
    json_path: str | None = None
    base_dir: str | None = None

    def __post_init__(self):
        if not self.schedule:
            raise ConfigError("T schedule is empty")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ConfigError("T schedule must be strictly increasing")
        if self.schedule[0] < 0:
            raise ConfigError("sample counts must be non-negative")
        if self.trials < 1:
            raise ConfigError("need at least one trial per T")
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}")
        if self.evaluation not in ("exact", "monte_carlo"):
            raise ConfigError(f"unknown evaluation mode {self.evaluation!r}")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | None = None) -> "ExperimentConfig":
        sched = d.get("schedule")
        if isinstance(sched, dict):
            start, stop, num = int(sched["start"]), int(sched["stop"]), int(sched["num"])
            sched = [int(round(x)) for x in np.geomspace(start, stop, num)]
        if not isinstance(sched, list):
            raise ConfigError("schedule must be a list or a {start, stop, num} range")
        learner = d.get("learner", {})
        if isinstance(learner, str):
            learner = {"name": learner}
        ev = d.get("evaluation", {"mode": "exact"})
        out = d.get("output", {})
        return cls(
            model=d["model"],
            learner=learner["name"],
            learner_params=dict(learner.get("params", {})),
            schedule=tuple(int(t) for t in sched),
            trials=int(d.get("trials", 1)),
            seed=int(d.get("seed", 0)),
            evaluation=ev.get("mode", "exact"),
            mc_budget=int(ev.get("budget", 100_000)),
            csv_path=out.get("csv"),
            json_path=out.get("json"),
            base_dir=base_dir,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw, base_dir=str(path.parent))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "learner": {"name": self.learner, "params": self.learner_params},
            "schedule": list(self.schedule),
            "trials": self.trials,
            "seed": self.seed,
            "evaluation": {"mode": self.evaluation, "budget": self.mc_budget},
        }


# ---------------------------------------------------------------------------
# curve


@dataclass(frozen=True)
class CurveRow:
    T: int
    trial: int
    gap: float | None
    loss: float | None
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def _quantiles(values: list[float]) -> dict:
    if not values:
        return {"median": None, "mean": None, "q10": None, "q90": None}
    a = np.asarray(values)
    return {
        "median": float(np.median(a)),
        "mean": float(a.mean()),
        "q10": float(np.quantile(a, 0.1)),
        "q90": float(np.quantile(a, 0.9)),
    }


@dataclass(frozen=True)
class CurveResult:
    config: ExperimentConfig
    rows: tuple[CurveRow, ...]

    def gaps(self, T: int) -> list[float]:
        return [r.gap for r in self.rows if r.T == T and r.ok]

    def summary(self) -> list[dict]:
        out = []
        for T in self.config.schedule:
            cell = [r for r in self.rows if r.T == T]
            ok = [r.gap for r in cell if r.ok]
            out.append({"T": T, "ok": len(ok), "failed": len(cell) - len(ok), **_quantiles(ok)})
        return out

    def medians(self) -> list[float | None]:
        return [s["median"] for s in self.summary()]

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.rows)

    def to_csv(self) -> str:
        lines = ["T,trial,gap,loss"]
        lines += [f"{r.T},{r.trial},{_fmt(r.gap)},{_fmt(r.loss)}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "summary": self.summary(),
            "failures": self.failures,
            "failed_cells": [{"T": r.T, "trial": r.trial, "error": r.error} for r in self.rows if not r.ok],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def write(self, csv_path: str | Path | None = None, json_path: str | Path | None = None) -> None:
        if csv_path:
            Path(csv_path).write_text(self.to_csv())
        if json_path:
            Path(json_path).write_text(self.to_json())


def _evaluator(model: Model, config: ExperimentConfig) -> Callable[[Aggregator, int, int], LossReport]:
    if config.evaluation == "monte_carlo":
        f_star = true_optimal(model)

        def mc(f: Aggregator, T: int, trial: int) -> LossReport:
            fresh = sample(model, config.mc_budget, config.seed, substream=("eval", T, trial))
            return mc_gap(fresh, f, f_star)

        return mc
    try:
        joint = to_joint(model)
        joint.support  # enumerate once, shared read-only by every cell
        return lambda f, T, trial: expected_loss_exact(joint, f)
    except SupportTooLarge:
        if isinstance(model, CondIndepModel) and model.exchangeable:
            return lambda f, T, trial: expected_loss_exchangeable(model, f)
        raise


def run_curve(config: ExperimentConfig, model: Model | None = None) -> CurveResult:
    """Evaluate the configured learner on every (T, trial) cell.

    The cell seed depends on (master seed, T, trial) only, so extending the
    schedule leaves existing cells unchanged. A failing cell is recorded and
    the run continues.
    """
    if model is None:
        model = build_model(config.model, Path(config.base_dir) if config.base_dir else None)
    evaluate = _evaluator(model, config)
    learn = LEARNERS[config.learner]
    cells = [(T, trial) for T in config.schedule for trial in range(config.trials)]

    def run_cell(cell: tuple[int, int]) -> CurveRow:
        T, trial = cell
        try:
            samples = sample(model, T, config.seed, substream=("curve", T, trial))
            f = learn(samples, model, config.learner_params)
            rep = evaluate(f, T, trial)
            return CurveRow(T, trial, rep.gap_direct, rep.loss, diagnostics={"kind": f.kind})
        except (AggrLabError, ValueError) as exc:
            return CurveRow(T, trial, None, None, error=f"{type(exc).__name__}: {exc}")

    return CurveResult(config, tuple(parallel_map(run_cell, cells)))


def non_increasing(medians: list[float | None], slack: float = 0.0) -> bool:
    vals = [m for m in medians if m is not None]
    return len(vals) == len(medians) and all(b <= a + slack for a, b in zip(vals, vals[1:]))


def load_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
