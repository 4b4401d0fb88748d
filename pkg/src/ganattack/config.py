"""Experiment configuration: defaults, YAML loading, validation."""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import yaml

from .attacker import AdMode, Scale, Strategy
from .graph import Augmentation
from .stealth import PROFILES, ConstraintSet, profile


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (maps to exit code 2)."""


DEFAULT_RATIOS = {"node": (0.2, 0.4, 0.4), "graph": (0.8, 0.1, 0.1), "link": (0.8, 0.1, 0.1)}


@dataclass
class ExperimentConfig:
    task: str = "node"
    dataset: str | None = None
    format: str = "edgelist"
    tu_name: str | None = None
    split: tuple | None = None
    strategy: str = "structure"
    scale: str | None = None
    K: int = 3
    k: int | None = None
    profile: str = "B-GA"
    budget_ratio: float | None = None
    lambda_threshold: float | None = None
    smr_threshold: float | None = None
    l2_threshold: float | None = None
    ad_mode: str = "frozen_target"
    augmentation: str | None = None
    hidden: int = 64
    hidden_sd: int = 64
    lr: float = 0.03
    target_lr: float = 0.01
    target_epochs: int = 200
    k_sd: int = 10
    k_mag: int = 10
    k_ad: int = 10
    max_epochs: int = 40
    warmup_epochs: int = 3
    generator_loss: str = "nonsaturating"
    project_budget: bool | None = None
    embedding_dim: int = 16
    per_class: int = 20
    max_targets: int | None = None
    examples_per_target: int = 20
    seed: int = 0
    jobs: int | None = None
    out: str = "results"
    checkpoint: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    # -------------------------------------------------------------- checks
    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.task in ("node", "graph", "link"), f"task must be node/graph/link, got {self.task!r}")
        need(self.format in ("edgelist", "tu"), f"format must be edgelist/tu, got {self.format!r}")
        for name, enum in (("strategy", Strategy), ("scale", Scale), ("ad_mode", AdMode)):
            if getattr(self, name) is None:
                continue
            try:
                enum(getattr(self, name))
            except ValueError:
                raise ConfigError(f"invalid {name} {getattr(self, name)!r}; "
                                  f"expected one of {[e.value for e in enum]}") from None
        if self.augmentation is not None:
            try:
                Augmentation(self.augmentation)
            except ValueError:
                raise ConfigError(f"invalid augmentation {self.augmentation!r}") from None
        need(self.profile in PROFILES or self.profile == "custom",
             f"profile must be one of {PROFILES + ('custom',)}")
        ratios = self.split_ratios
        need(len(ratios) == 3 and all(r >= 0 for r in ratios), "split needs three nonnegative ratios")
        need(math.isclose(sum(ratios), 1.0, abs_tol=1e-9), f"split ratios must sum to 1, got {ratios}")
        need(self.K >= 1, "K must be >= 1")
        need(self.k is None or 0 <= self.k <= self.K, "k must satisfy 0 <= k <= K")
        need(self.task != "graph" or self.resolved_scale == "unlimited",
             "graph classification attacks use scale=unlimited")
        for name in ("per_class", "examples_per_target", "max_epochs", "hidden", "hidden_sd"):
            need(getattr(self, name) >= 1, f"{name} must be >= 1")
        for name in ("k_sd", "k_mag", "k_ad", "warmup_epochs", "target_epochs"):
            need(getattr(self, name) >= 0, f"{name} must be >= 0")
        need(self.lr > 0 and self.target_lr > 0, "learning rates must be positive")
        need(self.jobs is None or self.jobs >= 1, "jobs must be >= 1")
        need(self.generator_loss in ("minimax", "nonsaturating"), "generator_loss must be minimax/nonsaturating")
        for t in (self.budget_ratio, self.lambda_threshold, self.smr_threshold, self.l2_threshold):
            need(t is None or t >= 0, "thresholds must be nonnegative")

    # ------------------------------------------------------------ derived
    @property
    def split_ratios(self) -> tuple:
        return tuple(self.split) if self.split is not None else DEFAULT_RATIOS[self.task]

    @property
    def resolved_scale(self) -> str:
        if self.scale is not None:
            return self.scale
        return "unlimited" if self.task == "graph" else "direct"

    @property
    def budget_mode(self) -> str:
        return "graph" if self.task == "graph" else "edges"

    def constraints(self) -> ConstraintSet:
        default_r = 0.1 if self.task == "graph" else 0.05
        r = self.budget_ratio if self.budget_ratio is not None else default_r
        if self.profile == "custom":
            return ConstraintSet(r, self.budget_mode, self.lambda_threshold, self.smr_threshold,
                                 self.l2_threshold, name="custom")
        base = profile(self.profile, r, self.budget_mode)
        if self.l2_threshold is not None:
            base = dataclasses.replace(base, l2_threshold=self.l2_threshold)
        return base

    def resolved_augmentation(self) -> Augmentation:
        if self.augmentation is not None:
            return Augmentation(self.augmentation)
        if self.task == "graph":
            return Augmentation.NONE
        if self.profile == "S-GA":
            return Augmentation.HIGH_SIMILARITY
        return Augmentation.RANDOM_OTHER_CLASS

    def resolved_jobs(self) -> int:
        return self.jobs or os.cpu_count() or 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["split"] is not None:
            d["split"] = list(d["split"])
        d["resolved"] = {"split": list(self.split_ratios),
                         "constraints": self.constraints().to_dict(),
                         "scale": self.resolved_scale,
                         "augmentation": self.resolved_augmentation().value}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d.pop("resolved", None)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    # allow a nested layout: {experiment: {...}, attack: {...}, ...}
    flat = {}
    for key, val in data.items():
        if isinstance(val, dict) and key not in ("extra",):
            flat.update(val)
        else:
            flat[key] = val
    return flat
