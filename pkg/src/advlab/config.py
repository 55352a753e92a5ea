"""Experiment configuration: JSON file with CLI flag overrides.

The seed fully determines the synthetic data, training, and attack runs, so
two runs of the same config produce byte-identical artifacts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .attacks import CwConfig, PgdConfig
from .errors import ContractError
from .models import ModelSpec

DEFAULT_MODELS = (
    {"name": "mlp-a", "hidden": [16], "seed": 101},
    {"name": "mlp-b", "hidden": [24, 12], "seed": 202},
    {"name": "mlp-c", "hidden": [32], "seed": 303},
)

DEFAULT_PGD = {"epsilon": 38 / 255, "max_iters": 50, "random_start": False}
DEFAULT_CW = {"kappa": 20.0, "l2_weight": 1.0, "step_size": 0.01, "max_iters": 200}


@dataclass
class ExperimentConfig:
    seed: int = 7
    dim: int = 8
    classes: int = 8
    noise: float = 0.03
    train_per_class: int = 50
    source_per_class: int = 25
    models: list[dict] = field(default_factory=lambda: [dict(m) for m in DEFAULT_MODELS])
    epochs: int = 80
    lr: float = 0.3
    batch_size: int = 32
    pgd: dict | None = field(default_factory=lambda: dict(DEFAULT_PGD))
    cw: dict | None = field(default_factory=lambda: dict(DEFAULT_CW))
    hierarchy: str = "fixture"
    top_k: int = 5
    out_dir: str = "out"

    def __post_init__(self):
        if self.classes != 8:
            raise ContractError("the synthetic fixture is defined for 8 classes")
        if self.top_k < 2 or self.top_k > self.classes:
            raise ContractError(f"top_k must be in [2, {self.classes}]")
        if not self.models:
            raise ContractError("at least one model spec is required")
        names = [m.get("name") for m in self.models]
        if len(set(names)) != len(names):
            raise ContractError("model names must be unique")

    def model_specs(self) -> list[ModelSpec]:
        return [ModelSpec(name=m["name"], input_dim=self.dim,
                          hidden_dims=tuple(m.get("hidden", [16])),
                          num_classes=self.classes, seed=int(m.get("seed", 0)))
                for m in self.models]

    def attack_configs(self, which: str = "both") -> list:
        out = []
        if which in ("pgd", "both") and self.pgd is not None:
            out.append(PgdConfig(**self.pgd))
        if which in ("cw", "both") and self.cw is not None:
            out.append(CwConfig(**self.cw))
        if not out:
            raise ContractError(f"no attack configured for --attack {which}")
        return out

    def checkpoint_path(self, out_dir: Path, name: str) -> Path:
        return Path(out_dir) / "checkpoints" / f"{name}.ckpt"


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file (all keys optional) and apply CLI overrides."""
    doc = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ContractError("config file must hold a JSON object")
    unknown = set(doc) - set(ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise ContractError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ContractError(f"bad config: {exc}") from exc
