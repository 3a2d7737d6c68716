"""Engine and service configuration with strict key validation.

Configs parse from plain dicts (JSON files); unknown keys are rejected
outright so typos fail at startup instead of silently using defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, ValidationError
from .kg import TransEConfig
from .moe import ROLE_TASKS, ExpertRole
from .retrieval import RetrievalConfig
from .rlhf import COMPONENTS, PPOConfig


def _reject_unknown(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class EmbedderConfig:
    kind: str = "hash"
    dim: int = 256
    ngram: int = 3
    seed: int = 13

    @classmethod
    def from_dict(cls, data: dict) -> "EmbedderConfig":
        _reject_unknown(data, {"kind", "dim", "ngram", "seed"}, "embedder")
        return cls(**data)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "ngram": self.ngram, "seed": self.seed}


@dataclass
class ExpertSpec:
    id: int
    role: str
    tasks: list[str] = field(default_factory=list)
    handler_kind: str = "extractive"
    handler_params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExpertSpec":
        _reject_unknown(data, {"id", "role", "tasks", "handler_kind", "handler_params"}, "expert")
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "role": self.role,
            "tasks": list(self.tasks),
            "handler_kind": self.handler_kind,
            "handler_params": dict(self.handler_params),
        }


def default_experts() -> list[ExpertSpec]:
    """One expert per workflow role, carrying that role's full task set."""
    roles = [ExpertRole.CONSULTANT, ExpertRole.RESEARCHER, ExpertRole.PARALEGAL, ExpertRole.ADVISOR]
    return [
        ExpertSpec(id=i + 1, role=role.value, tasks=sorted(ROLE_TASKS[role]))
        for i, role in enumerate(roles)
    ]


@dataclass
class MoEConfig:
    k: int = 2
    renormalize: bool = True
    experts: list[ExpertSpec] = field(default_factory=default_experts)

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("K must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "MoEConfig":
        _reject_unknown(data, {"k", "renormalize", "experts"}, "moe")
        experts = [ExpertSpec.from_dict(e) for e in data.get("experts", [])] or default_experts()
        return cls(
            k=data.get("k", 2),
            renormalize=data.get("renormalize", True),
            experts=experts,
        )

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "renormalize": self.renormalize,
            "experts": [e.to_dict() for e in self.experts],
        }


@dataclass
class RewardConfig:
    weights: dict[str, float] = field(default_factory=lambda: {c: 0.25 for c in COMPONENTS})
    role_multipliers: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RewardConfig":
        _reject_unknown(data, {"weights", "role_multipliers"}, "reward")
        return cls(
            weights=dict(data.get("weights", {c: 0.25 for c in COMPONENTS})),
            role_multipliers=dict(data.get("role_multipliers", {})),
        )

    def to_dict(self) -> dict:
        return {"weights": dict(self.weights), "role_multipliers": dict(self.role_multipliers)}


_RETRIEVAL_KEYS = {"theta", "alpha", "beta", "fusion_mode", "max_results"}
_TRANSE_KEYS = {"dim", "margin", "learning_rate", "epochs", "negatives", "seed"}
_PPO_KEYS = {
    "learning_rate",
    "clip_epsilon",
    "batch_threshold",
    "epochs",
    "baseline",
    "seed",
    "plateau_min_samples",
}


@dataclass
class EngineConfig:
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    transe: TransEConfig = field(default_factory=TransEConfig)
    moe: MoEConfig = field(default_factory=MoEConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    gazetteer: list[dict] = field(default_factory=list)
    templates: dict[str, str] = field(default_factory=dict)
    auto_update_policy: bool = True
    metrics_window: int = 100

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        _reject_unknown(
            data,
            {
                "embedder",
                "retrieval",
                "transe",
                "moe",
                "ppo",
                "reward",
                "gazetteer",
                "templates",
                "auto_update_policy",
                "metrics_window",
            },
            "engine",
        )
        retrieval = dict(data.get("retrieval", {}))
        _reject_unknown(retrieval, _RETRIEVAL_KEYS, "retrieval")
        transe = dict(data.get("transe", {}))
        _reject_unknown(transe, _TRANSE_KEYS, "transe")
        ppo = dict(data.get("ppo", {}))
        _reject_unknown(ppo, _PPO_KEYS, "ppo")
        return cls(
            embedder=EmbedderConfig.from_dict(dict(data.get("embedder", {}))),
            retrieval=RetrievalConfig(**retrieval),
            transe=TransEConfig(**transe),
            moe=MoEConfig.from_dict(dict(data.get("moe", {}))),
            ppo=PPOConfig(**ppo),
            reward=RewardConfig.from_dict(dict(data.get("reward", {}))),
            gazetteer=list(data.get("gazetteer", [])),
            templates=dict(data.get("templates", {})),
            auto_update_policy=bool(data.get("auto_update_policy", True)),
            metrics_window=int(data.get("metrics_window", 100)),
        )

    def to_dict(self) -> dict:
        return {
            "embedder": self.embedder.to_dict(),
            "retrieval": {
                "theta": self.retrieval.theta,
                "alpha": self.retrieval.alpha,
                "beta": self.retrieval.beta,
                "fusion_mode": self.retrieval.fusion_mode.value,
                "max_results": self.retrieval.max_results,
            },
            "transe": {
                "dim": self.transe.dim,
                "margin": self.transe.margin,
                "learning_rate": self.transe.learning_rate,
                "epochs": self.transe.epochs,
                "negatives": self.transe.negatives,
                "seed": self.transe.seed,
            },
            "moe": self.moe.to_dict(),
            "ppo": {
                "learning_rate": self.ppo.learning_rate,
                "clip_epsilon": self.ppo.clip_epsilon,
                "batch_threshold": self.ppo.batch_threshold,
                "epochs": self.ppo.epochs,
                "baseline": self.ppo.baseline,
                "seed": self.ppo.seed,
                "plateau_min_samples": self.ppo.plateau_min_samples,
            },
            "reward": self.reward.to_dict(),
            "gazetteer": list(self.gazetteer),
            "templates": dict(self.templates),
            "auto_update_policy": self.auto_update_policy,
            "metrics_window": self.metrics_window,
        }


@dataclass
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8620
    snapshot_path: str | None = None
    auth_tokens: dict[str, str] = field(default_factory=dict)  # token -> role
    engine: EngineConfig = field(default_factory=EngineConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "ApiConfig":
        _reject_unknown(data, {"host", "port", "snapshot_path", "auth_tokens", "engine"}, "api")
        return cls(
            host=data.get("host", "127.0.0.1"),
            port=int(data.get("port", 8620)),
            snapshot_path=data.get("snapshot_path"),
            auth_tokens=dict(data.get("auth_tokens", {})),
            engine=EngineConfig.from_dict(dict(data.get("engine", {}))),
        )

    def to_dict(self) -> dict:
        return {
            "host": self.host,
            "port": self.port,
            "snapshot_path": self.snapshot_path,
            "auth_tokens": dict(self.auth_tokens),
            "engine": self.engine.to_dict(),
        }


def load_config(path: str | Path) -> ApiConfig:
    """Parse a JSON config file into a validated ApiConfig."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a JSON object")
    return ApiConfig.from_dict(data)
