"""Behavioral models for users, suppliers and validators, honest and Byzantine.

A synthetic quality model stands in for real knowledge: honest suppliers
produce high-quality content, malicious ones low-quality content, and all
validators observe quality through the same noise.  Embeddings are
deterministic unit vectors per topic with seeded perturbations for variants.
"""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Sequence, Tuple

from .procache import BadEmbedding, check_unit_norm, dot


class Role(enum.Enum):
    USER = "user"
    CACHE_SERVICE = "cache_service"
    SUPPLIER = "supplier"
    VALIDATOR = "validator"
    OFFICIAL_VALIDATOR = "official_validator"


class StrategyKind(enum.Enum):
    HONEST = "honest"
    SELF_PROMOTION = "self_promotion"
    COLLUSION = "collusion"
    SLANDERING = "slandering"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind = StrategyKind.HONEST
    group_id: Optional[str] = None               # collusion group
    targets: FrozenSet[str] = frozenset()        # slandering victims

    def __post_init__(self) -> None:
        if self.kind is StrategyKind.COLLUSION and self.group_id is None:
            raise ValueError("collusion strategy requires a group id")


HONEST = Strategy(StrategyKind.HONEST)


@dataclass(frozen=True)
class AgentSpec:
    node_id: str
    role: Role
    strategy: Strategy = HONEST
    rng_stream: Optional[str] = None


@dataclass
class QualityModel:
    mu_honest: float = 0.85
    mu_malicious: float = 0.2
    sigma_supply: float = 0.05
    sigma_validate: float = 0.05
    sigma_official: float = 0.02     # noise of the trusted low-cost quality estimate
    p_inject: float = 0.5            # chance a malicious submission is off-topic
    score_granularity: float = 0.0   # 0 disables score rounding

    def __post_init__(self) -> None:
        if self.mu_honest <= self.mu_malicious:
            raise ValueError("honest quality mean must exceed the malicious mean")


# -- embeddings ---------------------------------------------------------------

def _unit(vec: Sequence[float]) -> Tuple[float, ...]:
    norm = math.sqrt(sum(x * x for x in vec))
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return tuple(x / norm for x in vec)


def topic_vector(topic_id: int, dim: int = 8, seed: int = 0) -> Tuple[float, ...]:
    rng = random.Random(f"topic:{seed}:{topic_id}")
    return _unit([rng.gauss(0.0, 1.0) for _ in range(dim)])


def _orthogonal_to(base: Sequence[float], rng: random.Random) -> Tuple[float, ...]:
    while True:
        raw = [rng.gauss(0.0, 1.0) for _ in range(len(base))]
        proj = dot(raw, base)
        residual = [r - proj * b for r, b in zip(raw, base)]
        if sum(x * x for x in residual) > 1e-12:
            return _unit(residual)


def tilted_vector(base: Sequence[float], cosine: float, rng: random.Random) -> Tuple[float, ...]:
    """Unit vector at an exact angle to ``base`` (dot product == cosine)."""
    ortho = _orthogonal_to(base, rng)
    sine = math.sqrt(max(0.0, 1.0 - cosine * cosine))
    return _unit([cosine * b + sine * o for b, o in zip(base, ortho)])


def variant_vector(topic_id: int, variant_id: int, dim: int = 8, seed: int = 0,
                   cos_low: float = 0.94, cos_high: float = 0.99) -> Tuple[float, ...]:
    base = topic_vector(topic_id, dim, seed)
    rng = random.Random(f"variant:{seed}:{topic_id}:{variant_id}")
    return tilted_vector(base, rng.uniform(cos_low, cos_high), rng)


def official_similarity(submission_embedding: Sequence[float],
                        topic_embedding: Sequence[float]) -> float:
    """Cosine similarity between a submission and the query's topic vector."""
    check_unit_norm(submission_embedding)
    check_unit_norm(topic_embedding)
    return dot(submission_embedding, topic_embedding)


# -- content ---------------------------------------------------------------

def canonical_content(topic_id: int) -> str:
    return f"Canonical knowledge for topic {topic_id:04d}."


def adulterated_content(topic_id: int) -> str:
    return f"Adulterated knowledge for topic {topic_id:04d}."


@dataclass
class SupplyResult:
    content: str
    embedding: Tuple[float, ...]
    true_quality: float
    injected: bool = False


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _snap(x: float, step: float) -> float:
    if step <= 0.0:
        return x
    return _clamp01(round(x / step) * step)


class Agent:
    """A passive participant invoked by the simulator; owns its RNG stream."""

    def __init__(self, spec: AgentSpec, quality: QualityModel,
                 seed: int = 0, dim: int = 8):
        self.spec = spec
        self.quality = quality
        self.dim = dim
        self.seed = seed
        stream = spec.rng_stream or spec.node_id
        self.rng = random.Random(f"agent:{seed}:{stream}")

    @property
    def node_id(self) -> str:
        return self.spec.node_id

    @property
    def is_malicious(self) -> bool:
        return self.spec.strategy.kind is not StrategyKind.HONEST

    # -- supplier behavior ------------------------------------------------

    def supply(self, topic_id: int) -> SupplyResult:
        q = self.quality
        base = topic_vector(topic_id, self.dim, self.seed)
        if not self.is_malicious:
            true_quality = _snap(_clamp01(self.rng.gauss(q.mu_honest, q.sigma_supply)),
                                 q.score_granularity)
            return SupplyResult(canonical_content(topic_id), base, true_quality)
        true_quality = _snap(_clamp01(self.rng.gauss(q.mu_malicious, q.sigma_supply)),
                             q.score_granularity)
        injected = self.rng.random() < q.p_inject
        embedding = _orthogonal_to(base, self.rng) if injected else base
        return SupplyResult(adulterated_content(topic_id), embedding,
                            true_quality, injected=injected)

    # -- validator behavior -----------------------------------------------

    def _honest_score(self, true_quality: float) -> float:
        score = _clamp01(true_quality + self.rng.gauss(0.0, self.quality.sigma_validate))
        return _snap(score, self.quality.score_granularity)

    def validate(self, supplier_id: str, true_quality: float,
                 colluders: FrozenSet[str] = frozenset()) -> float:
        kind = self.spec.strategy.kind
        if kind is StrategyKind.SELF_PROMOTION and supplier_id == self.node_id:
            return 1.0
        if kind is StrategyKind.COLLUSION and supplier_id in colluders:
            return 1.0
        if kind is StrategyKind.SLANDERING and supplier_id in self.spec.strategy.targets:
            return 0.0
        return self._honest_score(true_quality)

    # -- user behavior -----------------------------------------------------

    def user_feedback(self, true_quality: float) -> float:
        score = self._honest_score(true_quality)
        return 1.0 - score if self.is_malicious else score

    # -- official validator ----------------------------------------------------

    def official_estimate(self, true_quality: float) -> float:
        """Trusted low-cost quality estimate; not subject to strategies."""
        estimate = _clamp01(true_quality + self.rng.gauss(0.0, self.quality.sigma_official))
        return _snap(estimate, self.quality.score_granularity)
