"""Scenario configuration: dataclass, strict dict construction, file parsing.

Config files are flat ``key = value`` text with ``[section]`` tables (a TOML
subset); JSON with the same shape is accepted as an alternative.  Unknown
keys are errors.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from .agents import QualityModel
from .poi import RewardParams
from .procache import CacheConfig
from .reputation import ReputationParams
from .session import EscrowShares, QuorumConfig


class ConfigError(ValueError):
    pass


ATTACK_KINDS = ("none", "self_promotion", "collusion", "slandering")
CACHE_POLICIES = ("procache", "lfu", "lruk")
WORKLOADS = ("uniform", "dedup")


@dataclass
class ScenarioConfig:
    seed: int = 42
    rounds: int = 200
    n_users: int = 3
    n_honest_suppliers: int = 8
    n_malicious_suppliers: int = 0
    n_honest_validators: int = 8
    n_malicious_validators: int = 0
    attack: str = "none"
    topics: int = 10
    variants_per_topic: int = 5
    queries_per_round: int = 4
    cache_policy: str = "procache"
    payment_per_query: float = 3.0
    initial_user_balance: float = 1_000_000.0
    d_hit: float = 1.0
    d_miss: float = 10.0
    embedding_dim: int = 8
    official_deviation_threshold: float = 0.25
    validator_exclusion_floor: float = 0.1
    proposer_bonus: float = 0.0
    initial_reputation: float = 0.5
    workload: str = "uniform"
    total_questions: int = 0        # only used by the dedup workload
    hot_topics: int = 0             # adversarial trace: topics served only by attackers
    hot_fraction: float = 0.0       # share of queries aimed at the hot topics
    reputation: ReputationParams = field(default_factory=ReputationParams)
    reward: RewardParams = field(default_factory=RewardParams)
    cache: CacheConfig = field(default_factory=CacheConfig)
    quorum: QuorumConfig = field(default_factory=QuorumConfig)
    quality: QualityModel = field(default_factory=QualityModel)
    shares: EscrowShares = field(default_factory=EscrowShares)

    def check(self) -> None:
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.n_honest_suppliers < 1 or self.n_honest_validators < 1:
            raise ConfigError("at least one honest supplier and validator required")
        if self.n_users < 1:
            raise ConfigError("at least one user required")
        if self.attack not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind: {self.attack!r}")
        if self.cache_policy not in CACHE_POLICIES:
            raise ConfigError(f"unknown cache policy: {self.cache_policy!r}")
        if self.workload not in WORKLOADS:
            raise ConfigError(f"unknown workload: {self.workload!r}")
        if self.workload == "dedup" and self.total_questions < 1:
            raise ConfigError("dedup workload requires total_questions >= 1")
        if self.attack == "none" and (self.n_malicious_suppliers
                                      or self.n_malicious_validators):
            raise ConfigError("malicious nodes configured but attack is 'none'")
        if self.topics < 1 or self.variants_per_topic < 1 or self.queries_per_round < 1:
            raise ConfigError("topics, variants_per_topic and queries_per_round must be >= 1")
        if self.payment_per_query <= 0:
            raise ConfigError("payment_per_query must be positive")
        if not (0.0 <= self.hot_fraction <= 1.0):
            raise ConfigError("hot_fraction must be in [0, 1]")
        if self.hot_topics < 0 or self.hot_topics >= self.topics:
            if self.hot_topics != 0:
                raise ConfigError("hot_topics must leave at least one regular topic")
        if self.hot_topics > 0 and self.n_malicious() == 0:
            raise ConfigError("hot topics require malicious suppliers")

    def n_malicious(self) -> int:
        return self.n_malicious_suppliers + self.n_malicious_validators


_SECTIONS = {
    "reputation": ReputationParams,
    "reward": RewardParams,
    "cache": CacheConfig,
    "quorum": QuorumConfig,
    "quality": QualityModel,
    "shares": EscrowShares,
}

_SCALAR_FIELDS = {f.name: f for f in fields(ScenarioConfig) if f.name not in _SECTIONS}


def _coerce(value: Any, target_type: type, key: str) -> Any:
    if target_type is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if target_type is int and isinstance(value, bool):
        raise ConfigError(f"key {key!r}: expected {target_type.__name__}, got bool")
    if not isinstance(value, target_type):
        raise ConfigError(f"key {key!r}: expected {target_type.__name__}, "
                          f"got {type(value).__name__} ({value!r})")
    return value


_TYPE_OF = {"seed": int, "rounds": int, "n_users": int, "n_honest_suppliers": int,
            "n_malicious_suppliers": int, "n_honest_validators": int,
            "n_malicious_validators": int, "attack": str, "topics": int,
            "variants_per_topic": int, "queries_per_round": int, "cache_policy": str,
            "payment_per_query": float, "initial_user_balance": float,
            "d_hit": float, "d_miss": float, "embedding_dim": int,
            "official_deviation_threshold": float, "validator_exclusion_floor": float,
            "proposer_bonus": float, "initial_reputation": float,
            "workload": str, "total_questions": int,
            "hot_topics": int, "hot_fraction": float}


def _section_types(cls) -> Dict[str, type]:
    out = {}
    for f in fields(cls):
        if f.type in ("float", float):
            out[f.name] = float
        elif f.type in ("int", int):
            out[f.name] = int
        elif f.type in ("bool", bool):
            out[f.name] = bool
        else:
            out[f.name] = str
    return out


def scenario_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """Build a config from a (possibly nested) dict; unknown keys are errors."""
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a table")
            cls = _SECTIONS[key]
            types = _section_types(cls)
            sub_kwargs = {}
            for sub_key, sub_value in value.items():
                if sub_key not in types:
                    raise ConfigError(f"unknown config key: {key}.{sub_key}")
                sub_kwargs[sub_key] = _coerce(sub_value, types[sub_key],
                                              f"{key}.{sub_key}")
            try:
                kwargs[key] = cls(**sub_kwargs)
            except ValueError as exc:
                raise ConfigError(f"section {key!r}: {exc}") from exc
        elif key in _TYPE_OF:
            kwargs[key] = _coerce(value, _TYPE_OF[key], key)
        else:
            raise ConfigError(f"unknown config key: {key}")
    config = ScenarioConfig(**kwargs)
    config.check()
    return config


def scenario_to_dict(config: ScenarioConfig) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for name in _TYPE_OF:
        out[name] = getattr(config, name)
    for name, cls in _SECTIONS.items():
        section = getattr(config, name)
        out[name] = {f.name: getattr(section, f.name) for f in fields(cls)
                     if not isinstance(getattr(section, f.name), frozenset)}
    return out


def merge_overrides(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Apply flat or dotted override keys onto a nested config dict."""
    merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for key, value in overrides.items():
        if isinstance(value, dict):
            merged.setdefault(key, {})
            if not isinstance(merged[key], dict):
                raise ConfigError(f"cannot override scalar {key!r} with a table")
            merged[key].update(value)
        elif "." in key:
            section, _, sub = key.partition(".")
            merged.setdefault(section, {})
            merged[section][sub] = value
        else:
            merged[key] = value
    return merged


# -- text parsing ---------------------------------------------------------------

def _parse_scalar(raw: str, path: str, lineno: int) -> Any:
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw == "true":
        return True
    if raw == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    if raw and all(c.isalnum() or c in "_-" for c in raw):
        return raw  # bare string
    raise ConfigError(f"{path}:{lineno}: cannot parse value {raw!r}")


def parse_config_text(text: str, path: str = "<string>") -> Dict[str, Any]:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level JSON value must be an object")
        return data
    data: Dict[str, Any] = {}
    current: Dict[str, Any] = data
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section_path = line[1:-1].strip()
            if not section_path:
                raise ConfigError(f"{path}:{lineno}: empty section name")
            current = data
            for part in section_path.split("."):
                current = current.setdefault(part, {})
                if not isinstance(current, dict):
                    raise ConfigError(f"{path}:{lineno}: section {section_path!r} "
                                      f"collides with a scalar key")
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        current[key] = _parse_scalar(raw, path, lineno)
    return data


def load_config_dict(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level JSON value must be an object")
        return data
    return parse_config_text(text, str(path))


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    data = load_config_dict(path)
    data.pop("sweep", None)  # sweep variants live beside the base scenario
    return scenario_from_dict(data)


def load_sweep_variants(path: Union[str, Path]) -> List[Tuple[str, Dict[str, Any]]]:
    """Ordered (label, overrides) pairs from a sweep spec's [sweep.<label>] tables."""
    data = load_config_dict(path)
    sweep = data.get("sweep")
    if not isinstance(sweep, dict) or not sweep:
        raise ConfigError(f"{path}: no [sweep.<label>] tables found")
    variants = []
    for label, overrides in sweep.items():
        if not isinstance(overrides, dict):
            raise ConfigError(f"{path}: sweep.{label} must be a table")
        variants.append((label, overrides))
    return variants
