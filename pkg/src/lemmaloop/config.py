"""Run configuration loaded from a YAML file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from lemmaloop.llm.gateway import Budget


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WakeConfig:
    max_depth: int = 3
    sketch_attempts: int = 1
    direct_attempts: int = 4
    corrections: int = 6

    def __post_init__(self) -> None:
        if min(self.max_depth, self.sketch_attempts, self.corrections) < 0 or self.direct_attempts < 1:
            raise ConfigError(f"invalid wake settings: {self}")

    @property
    def budget(self) -> Budget:
        return Budget(self.direct_attempts, self.corrections)

    @classmethod
    def training(cls) -> WakeConfig:
        return cls(3, 1, 4, 6)

    @classmethod
    def inference(cls) -> WakeConfig:
        return cls(1, 4, 4, 6)


@dataclass(frozen=True)
class SleepConfig:
    similarity_threshold: float = 0.6
    dup_threshold: float = 0.15
    capacity: int = 100
    candidate_prove_budget: Budget = Budget(4, 6)
    ablate_clustering: bool = False
    ablate_library_optimization: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.similarity_threshold <= 1 or not 0 <= self.dup_threshold <= 1:
            raise ConfigError("thresholds must lie in [0, 1]")
        if self.capacity < 1:
            raise ConfigError("capacity must be at least 1")


@dataclass(frozen=True)
class LLMConfig:
    kind: str = "scripted"  # scripted | openai
    scenario: str | None = None
    endpoint: str | None = None
    model: str = "mock"
    temperature: float = 0.7
    token_ceiling: int | None = None
    max_in_flight: int = 4


@dataclass(frozen=True)
class EmbeddingConfig:
    kind: str = "hash"  # hash | http
    dim: int = 64
    endpoint: str | None = None
    model: str | None = None


@dataclass(frozen=True)
class VerifierConfig:
    kind: str = "mock"  # mock | lean
    rules: str | None = None
    command: str = "lake env lean"
    project_root: str | None = None
    imports_header: str = ""
    timeout: float = 300.0
    keep_failures: bool = False
    max_concurrent: int | None = None


@dataclass(frozen=True)
class RunConfig:
    domain: str = "general"
    cycles: int = 5
    seed: int = 42
    run_id: str = "run"
    runs_dir: str = "runs"
    workers: int = 4
    wake: WakeConfig = field(default_factory=WakeConfig.training)
    inference: WakeConfig = field(default_factory=WakeConfig.inference)
    sleep: SleepConfig = field(default_factory=SleepConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    templates_dir: str | None = None

    def __post_init__(self) -> None:
        if self.cycles < 1:
            raise ConfigError("cycles must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "wake": WakeConfig,
    "inference": WakeConfig,
    "sleep": SleepConfig,
    "llm": LLMConfig,
    "embedding": EmbeddingConfig,
    "verifier": VerifierConfig,
}
_PATH_FIELDS = {("llm", "scenario"), ("verifier", "rules"), ("verifier", "project_root"), (None, "templates_dir")}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict, base_dir: str | Path | None = None) -> RunConfig:
    """Build a RunConfig; relative paths are resolved against `base_dir`."""
    data = dict(data or {})
    base = Path(base_dir) if base_dir is not None else None
    for section, key in _PATH_FIELDS:
        holder = data if section is None else data.get(section)
        if base is not None and isinstance(holder, dict) and holder.get(key):
            p = Path(holder[key])
            holder = dict(holder)
            holder[key] = str(p if p.is_absolute() else (base / p).resolve())
            if section is None:
                data = holder
            else:
                data[section] = holder
    sections = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            raw = dict(data.pop(name) or {})
            if name == "sleep" and isinstance(raw.get("candidate_prove_budget"), dict):
                try:
                    raw["candidate_prove_budget"] = Budget(**raw["candidate_prove_budget"])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"sleep.candidate_prove_budget: {exc}") from exc
            try:
                sections[name] = _build(cls, raw, name)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
    try:
        return _build(RunConfig, {**data, **sections}, "config")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(data or {}, base_dir=path.parent)
