"""Experiment configuration: JSON in, validated dataclass out.

Unknown keys are rejected rather than ignored, at the top level and
inside the task block, so a typo never silently runs the defaults.
Serialization is canonical (sorted keys, fixed indentation), which makes
parse -> serialize -> parse a fixed point.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .data import TaskParams
from .errors import ConfigError
from .losses import LossConfig
from .trainer import SgdConfig

_TOP_KEYS = (
    "task", "method", "lambda", "lr", "batch_size", "epochs",
    "seeds", "rho", "mu_align", "learnable_q", "loss",
)


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskParams = field(default_factory=TaskParams)
    method: str = "full"
    hcs_lambda: float = 0.8
    lr: float = 6e-4
    batch_size: int = 128
    epochs: int = 50
    seeds: tuple = (0,)
    rho: float = 0.01
    mu_align: bool = False
    learnable_q: bool = True
    loss: str = "ce"

    def __post_init__(self):
        # Constructing the derived configs runs their range checks now.
        self.loss_config()
        self.sgd_config()
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError(f"seeds must be a nonempty list of integers, got {self.seeds!r}")

    def loss_config(self) -> LossConfig:
        return LossConfig(
            method=self.method,
            hcs_lambda=self.hcs_lambda,
            mu_align=self.mu_align,
            learnable_q=self.learnable_q,
            cls_loss=self.loss,
        )

    def sgd_config(self) -> SgdConfig:
        return SgdConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs)

    def to_dict(self) -> dict:
        return {
            "task": asdict(self.task),
            "method": self.method,
            "lambda": self.hcs_lambda,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seeds": list(self.seeds),
            "rho": self.rho,
            "mu_align": self.mu_align,
            "learnable_q": self.learnable_q,
            "loss": self.loss,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def with_updates(self, **kw) -> "ExperimentConfig":
        current = {
            "task": self.task,
            "method": self.method,
            "hcs_lambda": self.hcs_lambda,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seeds": self.seeds,
            "rho": self.rho,
            "mu_align": self.mu_align,
            "learnable_q": self.learnable_q,
            "loss": self.loss,
        }
        current.update(kw)
        return ExperimentConfig(**current)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
    unknown = set(raw) - set(_TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    task_raw = raw.get("task", {})
    if not isinstance(task_raw, dict):
        raise ConfigError(f"task block must be an object, got {type(task_raw).__name__}")
    task_fields = {f.name for f in fields(TaskParams)}
    bad = set(task_raw) - task_fields
    if bad:
        raise ConfigError(f"unknown task keys: {sorted(bad)}")
    task = TaskParams(**task_raw)

    kw = {"task": task}
    if "method" in raw:
        kw["method"] = raw["method"]
    if "lambda" in raw:
        kw["hcs_lambda"] = float(raw["lambda"])
    if "lr" in raw:
        kw["lr"] = float(raw["lr"])
    if "batch_size" in raw:
        kw["batch_size"] = int(raw["batch_size"])
    if "epochs" in raw:
        kw["epochs"] = int(raw["epochs"])
    if "seeds" in raw:
        seeds = raw["seeds"]
        if not isinstance(seeds, list):
            raise ConfigError(f"seeds must be a list, got {type(seeds).__name__}")
        kw["seeds"] = tuple(int(s) for s in seeds)
    if "rho" in raw:
        kw["rho"] = float(raw["rho"])
    if "mu_align" in raw:
        kw["mu_align"] = bool(raw["mu_align"])
    if "learnable_q" in raw:
        kw["learnable_q"] = bool(raw["learnable_q"])
    if "loss" in raw:
        kw["loss"] = raw["loss"]
    return ExperimentConfig(**kw)


def config_from_json(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_json(fh.read())
