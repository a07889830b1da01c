"""Reputation primitives: consistency, confidence, EMA updates and threshold checks.

All scoring functions are pure; `ReputationEngine` is the single writer of
reputation values held in a ledger instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence


class EmptyInput(ValueError):
    pass


class NonPositiveMaxReputation(ValueError):
    pass


def clamp(value: float, low: float = 0.0, high: float = 1.0) -> float:
    return min(high, max(low, value))


@dataclass(frozen=True)
class ValidationRecord:
    """One validator's score for one prompt, with the validator's reputation at scoring time."""

    validator_id: str
    score: float
    validator_reputation: float


@dataclass(frozen=True)
class FeedbackRecord:
    """Accuracy feedback from an LLM service on delivered content."""

    llm_id: str
    accuracy: float
    llm_reputation: float


@dataclass
class ReputationParams:
    alpha: float = 0.2              # EMA coefficient
    clamp_low: float = 0.0
    clamp_high: float = 1.0
    official_threshold: float = 0.5  # similarity bar applied by the official validator
    threshold_penalty: float = 0.5   # fractional reputation cut on a failed check

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


def consistency(own_score: float,
                others: Sequence[ValidationRecord],
                max_validator_reputation: float) -> float:
    """Disagreement of one validator's score against its peers, in [0, 1].

    Sum of reputation-weighted absolute score differences, normalised by the
    peer count, the score spread (own score included) and the maximum
    validator reputation.  Identical scores, or no peers, count as perfect
    agreement (0).
    """
    if max_validator_reputation <= 0.0:
        raise NonPositiveMaxReputation(
            f"max validator reputation must be positive, got {max_validator_reputation}")
    if not others:
        return 0.0
    scores = [own_score] + [rec.score for rec in others]
    spread = max(scores) - min(scores)
    if spread == 0.0:
        return 0.0
    n = len(scores)
    weighted = sum(abs(own_score - rec.score) * rec.validator_reputation for rec in others)
    return clamp(weighted / ((n - 1) * spread * max_validator_reputation))


def confidence(scores: Sequence[float]) -> float:
    """Population standard deviation of validator scores (risk term)."""
    if not scores:
        raise EmptyInput("confidence requires at least one score")
    mean = sum(scores) / len(scores)
    return math.sqrt(sum((s - mean) ** 2 for s in scores) / len(scores))


def _ema_agreement(prev: float,
                   consistencies: Sequence[float],
                   params: ReputationParams) -> float:
    if not consistencies:
        return prev
    mean_cs = sum(consistencies) / len(consistencies)
    value = params.alpha * (1.0 - mean_cs) + (1.0 - params.alpha) * prev
    return clamp(value, params.clamp_low, params.clamp_high)


def update_llm_reputation(prev: float,
                          consistencies: Sequence[float],
                          params: ReputationParams) -> float:
    """EMA toward (1 - mean consistency); no evidence leaves the value unchanged."""
    return _ema_agreement(prev, consistencies, params)


def update_validator_reputation(prev: float,
                                consistencies: Sequence[float],
                                params: ReputationParams) -> float:
    """Structurally identical to the LLM-service update."""
    return _ema_agreement(prev, consistencies, params)


def update_prompt_reputation(supplier_rep: float,
                             validations: Sequence[ValidationRecord],
                             feedbacks: Sequence[FeedbackRecord]) -> float:
    """Prompt reputation from supplier reputation, validator scores and service feedback.

    Combines the supplier's reputation, reputation-weighted validator scores
    and reputation-weighted feedback accuracies, then subtracts the score
    standard deviation as a risk discount.  Clamped to [0, 1].
    """
    n = len(validations)
    m = len(feedbacks)
    validation_term = sum(rec.score * rec.validator_reputation for rec in validations)
    feedback_term = sum(rec.accuracy * rec.llm_reputation for rec in feedbacks)
    scores = [rec.score for rec in validations]
    cf = confidence(scores) if len(scores) >= 2 else 0.0
    value = (supplier_rep + validation_term + feedback_term) / (n + m + 1) - cf
    return clamp(value)


def update_supplier_reputation(prev: float,
                               prompt_reps: Sequence[float],
                               params: ReputationParams) -> float:
    """EMA toward the mean reputation of the supplier's recent prompts."""
    if not prompt_reps:
        return prev
    mean_rp = sum(prompt_reps) / len(prompt_reps)
    value = params.alpha * mean_rp + (1.0 - params.alpha) * prev
    return clamp(value, params.clamp_low, params.clamp_high)


@dataclass(frozen=True)
class OfficialCheckResult:
    passed: bool
    penalty_factor: float

    def penalized_reputation(self, prev: float) -> float:
        return prev if self.passed else prev * self.penalty_factor


def official_check(similarity: float, params: ReputationParams) -> OfficialCheckResult:
    """Similarity gate applied by the official validator; >= threshold passes."""
    if similarity >= params.official_threshold:
        return OfficialCheckResult(passed=True, penalty_factor=1.0)
    return OfficialCheckResult(passed=False, penalty_factor=1.0 - params.threshold_penalty)


class ReputationEngine:
    """Applies reputation updates to ledger-held values.

    The ledger exposes raw get/set; this engine is the only component allowed
    to call ``set_reputation`` (API layering, not cryptography).  LLM-service
    reputations have no ledger prefix and are kept in-memory here.
    """

    def __init__(self, ledger, params: Optional[ReputationParams] = None,
                 initial_reputation: float = 0.5):
        self.ledger = ledger
        self.params = params or ReputationParams()
        self.initial_reputation = initial_reputation
        self._llm_reputation: dict[str, float] = {}

    # -- reads -------------------------------------------------------------

    def supplier_reputation(self, node_id: str) -> float:
        key = self.ledger.ensure_supplier(node_id, self.initial_reputation)
        return self.ledger.get(key).reputation

    def validator_reputation(self, node_id: str) -> float:
        key = self.ledger.ensure_validator(node_id, self.initial_reputation)
        return self.ledger.get(key).reputation

    def llm_reputation(self, llm_id: str) -> float:
        return self._llm_reputation.setdefault(llm_id, self.initial_reputation)

    # -- per-prompt --------------------------------------------------------

    def score_prompt(self, supplier_id: str,
                     validations: Sequence[ValidationRecord],
                     feedbacks: Sequence[FeedbackRecord] = ()) -> float:
        return update_prompt_reputation(
            self.supplier_reputation(supplier_id), validations, feedbacks)

    def record_prompt_outcome(self, data_key,
                              validations: Sequence[ValidationRecord],
                              feedbacks: Sequence[FeedbackRecord]) -> float:
        """Append validations to the prompt's reputation entry and store its new value."""
        entry = self.ledger.get(data_key)
        rep_key = self.ledger.prompt_reputation_key(data_key)
        for rec in validations:
            self.ledger.append_validation(rep_key, rec)
        value = self.score_prompt(entry.supplier_id, validations, feedbacks)
        self.ledger.set_reputation(rep_key, value)
        return value

    def prompt_reputation(self, data_key) -> float:
        rep_key = self.ledger.prompt_reputation_key(data_key)
        entry = self.ledger.get(rep_key)
        return self.initial_reputation if entry is None else entry.reputation

    # -- per-node updates ----------------------------------------------------

    def update_supplier(self, node_id: str, prompt_reps: Sequence[float]) -> float:
        key = self.ledger.ensure_supplier(node_id, self.initial_reputation)
        value = update_supplier_reputation(
            self.ledger.get(key).reputation, prompt_reps, self.params)
        self.ledger.set_reputation(key, value)
        return value

    def update_validator(self, node_id: str, consistencies: Sequence[float]) -> float:
        key = self.ledger.ensure_validator(node_id, self.initial_reputation)
        value = update_validator_reputation(
            self.ledger.get(key).reputation, consistencies, self.params)
        self.ledger.set_reputation(key, value)
        return value

    def update_llm(self, llm_id: str, consistencies: Sequence[float]) -> float:
        value = update_llm_reputation(
            self.llm_reputation(llm_id), consistencies, self.params)
        self._llm_reputation[llm_id] = value
        return value

    def penalize_supplier(self, node_id: str) -> float:
        key = self.ledger.ensure_supplier(node_id, self.initial_reputation)
        value = clamp(self.ledger.get(key).reputation * (1.0 - self.params.threshold_penalty))
        self.ledger.set_reputation(key, value)
        return value

    def penalize_validator(self, node_id: str) -> float:
        key = self.ledger.ensure_validator(node_id, self.initial_reputation)
        value = clamp(self.ledger.get(key).reputation * (1.0 - self.params.threshold_penalty))
        self.ledger.set_reputation(key, value)
        return value
