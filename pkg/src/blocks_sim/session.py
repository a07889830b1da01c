"""Four-stage query-session lifecycle with escrow accounting and events.

Stages: create session (payment escrowed), post cache (hit or miss), collect
knowledge submissions, validate, then finalize, which picks a winner, runs
the official similarity gate, writes the prompt to the ledger, applies all
reputation updates and splits the escrow.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from . import poi
from .ledger import Ledger
from .procache import CacheNode, node_id_from
from .reputation import (FeedbackRecord, ReputationEngine, ValidationRecord,
                         consistency, official_check)


class WrongState(RuntimeError):
    pass


class DuplicateSubmission(ValueError):
    pass


class DuplicateValidation(ValueError):
    pass


class InsufficientFunds(ValueError):
    pass


class ZeroPayment(ValueError):
    pass


class NotFinalizable(RuntimeError):
    pass


class SessionState(enum.Enum):
    CREATED = "created"
    CACHE_QUERIED = "cache_queried"
    COLLECTING_KNOWLEDGE = "collecting_knowledge"
    VALIDATING = "validating"
    FINALIZED = "finalized"


class EventKind(enum.Enum):
    NEW_QUERY = "new_query"
    VALIDATE_UPDATE = "validate_update"
    KNOWLEDGE_UPDATE = "knowledge_update"
    SESSION_FINALIZED = "session_finalized"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    session_index: int
    payload: Optional[object] = None


@dataclass
class Query:
    text: str
    topic_id: int
    variant_id: int
    embedding: Tuple[float, ...]
    topic_embedding: Tuple[float, ...]


@dataclass
class Submission:
    supplier_id: str
    content: str
    embedding: Tuple[float, ...]
    true_quality: float   # hidden from agents; oracles only


@dataclass
class SessionValidation:
    validator_id: str
    scores: Tuple[float, ...]          # one score per submission
    is_official: bool
    reputation_at_time: float
    similarities: Optional[Tuple[float, ...]] = None  # official only


@dataclass
class QuorumConfig:
    min_suppliers: int = 3
    min_validators: int = 3
    validator_sample_size: int = 5
    official_required: bool = True

    def __post_init__(self) -> None:
        if self.min_validators < 1 or self.min_suppliers < 1:
            raise ValueError("quorums must be >= 1")


@dataclass
class EscrowShares:
    """Escrow split on a cache miss, plus the resale fee fraction on a hit."""

    supplier: float = 0.6
    validators: float = 0.3
    cache: float = 0.1
    resale_cache_fee: float = 0.1

    def __post_init__(self) -> None:
        total = self.supplier + self.validators + self.cache
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"miss-path shares must sum to 1, got {total}")


@dataclass
class SessionOutcome:
    success: bool
    winner_supplier: Optional[str]
    content: Optional[str]
    prompt_reputation: Optional[float]
    payouts: Dict[str, float]
    refund: float
    cache_hit: bool
    prompt_key: Optional[object] = None


@dataclass
class QuerySession:
    session_index: int
    user_id: str
    query: Query
    rationale: str
    payment: float
    created_round: int
    state: SessionState = SessionState.CREATED
    escrow: float = 0.0
    cache_hit: Optional[bool] = None
    cached_node_id: Optional[str] = None
    submissions: List[Submission] = field(default_factory=list)
    validations: List[SessionValidation] = field(default_factory=list)
    feedback: Optional[FeedbackRecord] = None
    result: Optional[SessionOutcome] = None
    events_emitted: List[EventKind] = field(default_factory=list)
    transitions: List[dict] = field(default_factory=list)

    def official_validation(self) -> Optional[SessionValidation]:
        for rec in self.validations:
            if rec.is_official:
                return rec
        return None

    def regular_validations(self) -> List[SessionValidation]:
        return [rec for rec in self.validations if not rec.is_official]


@dataclass
class CacheResult:
    hit: bool
    content: Optional[str] = None
    embedding: Optional[Tuple[float, ...]] = None
    true_quality: Optional[float] = None
    original_supplier: Optional[str] = None
    node_id: Optional[str] = None


def default_rationale(query: Query) -> str:
    # deterministic stand-in for a generated retrieval rationale
    return f"retrieve external knowledge relevant to: {query.text}"


class SessionBook:
    """Single-writer store of sessions; emits ordered lifecycle events."""

    def __init__(self, wealth: poi.WealthLedger,
                 quorum: Optional[QuorumConfig] = None,
                 shares: Optional[EscrowShares] = None,
                 cache_service_id: str = "cache",
                 rationale_fn: Callable[[Query], str] = default_rationale):
        self.wealth = wealth
        self.quorum = quorum or QuorumConfig()
        self.shares = shares or EscrowShares()
        self.cache_service_id = cache_service_id
        self.rationale_fn = rationale_fn
        self.sessions: Dict[int, QuerySession] = {}
        self.events: List[Event] = []
        self._next_index = 0

    # -- helpers -------------------------------------------------------------

    def _emit(self, session: QuerySession, kind: EventKind,
              payload: Optional[object] = None) -> Event:
        if kind in session.events_emitted:
            raise RuntimeError(f"event {kind.value} already emitted for "
                               f"session {session.session_index}")
        session.events_emitted.append(kind)
        event = Event(kind, session.session_index, payload)
        self.events.append(event)
        return event

    def _transition(self, session: QuerySession, new_state: SessionState,
                    round_no: int, event: Optional[EventKind]) -> None:
        session.transitions.append({
            "round": round_no,
            "session_index": session.session_index,
            "from": session.state.value,
            "to": new_state.value,
            "event": event.value if event else None,
        })
        session.state = new_state

    @staticmethod
    def _require_state(session: QuerySession, expected: SessionState) -> None:
        if session.state is not expected:
            raise WrongState(f"session {session.session_index} is in "
                             f"{session.state.value}, expected {expected.value}")

    # -- stage 1 ------------------------------------------------------------

    def create_session(self, user_id: str, query: Query, payment: float,
                       round_no: int = 0) -> QuerySession:
        if payment <= 0:
            raise ZeroPayment(f"payment must be positive, got {payment}")
        if self.wealth.balance(user_id) < payment:
            raise InsufficientFunds(
                f"user {user_id} balance {self.wealth.balance(user_id)} < {payment}")
        session = QuerySession(
            session_index=self._next_index,
            user_id=user_id,
            query=query,
            rationale=self.rationale_fn(query),
            payment=payment,
            created_round=round_no,
        )
        self._next_index += 1
        self.wealth.withdraw(user_id, payment)
        session.escrow = payment
        self.sessions[session.session_index] = session
        self._emit(session, EventKind.NEW_QUERY)
        self._transition(session, SessionState.CACHE_QUERIED, round_no, EventKind.NEW_QUERY)
        return session

    # -- stage 2 ----------------------------------------------------------------

    def post_cache(self, session: QuerySession, cache_result: CacheResult,
                   round_no: int = 0) -> Event:
        self._require_state(session, SessionState.CACHE_QUERIED)
        session.cache_hit = cache_result.hit
        if cache_result.hit:
            session.cached_node_id = cache_result.node_id
            session.submissions.append(Submission(
                supplier_id=cache_result.original_supplier,
                content=cache_result.content,
                embedding=cache_result.embedding,
                true_quality=cache_result.true_quality,
            ))
            event = self._emit(session, EventKind.VALIDATE_UPDATE)
            self._transition(session, SessionState.VALIDATING, round_no,
                             EventKind.VALIDATE_UPDATE)
        else:
            event = self._emit(session, EventKind.KNOWLEDGE_UPDATE)
            self._transition(session, SessionState.COLLECTING_KNOWLEDGE, round_no,
                             EventKind.KNOWLEDGE_UPDATE)
        return event

    # -- stage 3 ----------------------------------------------------------------

    def update_knowledge(self, session: QuerySession, supplier_id: str,
                         content: str, embedding: Tuple[float, ...],
                         true_quality: float = 1.0,
                         round_no: int = 0) -> Optional[Event]:
        self._require_state(session, SessionState.COLLECTING_KNOWLEDGE)
        if any(sub.supplier_id == supplier_id for sub in session.submissions):
            raise DuplicateSubmission(
                f"supplier {supplier_id} already submitted to session "
                f"{session.session_index}")
        session.submissions.append(
            Submission(supplier_id, content, embedding, true_quality))
        if len(session.submissions) >= self.quorum.min_suppliers:
            event = self._emit(session, EventKind.VALIDATE_UPDATE)
            self._transition(session, SessionState.VALIDATING, round_no,
                             EventKind.VALIDATE_UPDATE)
            return event
        return None

    # -- stage 4 ----------------------------------------------------------------

    def update_validation(self, session: QuerySession, validator_id: str,
                          score: Union[float, Sequence[float]],
                          is_official: bool = False,
                          reputation_at_time: float = 1.0,
                          similarities: Optional[Sequence[float]] = None) -> bool:
        """Record one validator's scores; returns whether the session is finalizable."""
        self._require_state(session, SessionState.VALIDATING)
        if any(rec.validator_id == validator_id for rec in session.validations):
            raise DuplicateValidation(
                f"validator {validator_id} already validated session "
                f"{session.session_index}")
        n_subs = len(session.submissions)
        scores = (float(score),) * n_subs if isinstance(score, (int, float)) \
            else tuple(float(s) for s in score)
        if len(scores) != n_subs:
            raise ValueError(f"expected {n_subs} scores, got {len(scores)}")
        for s in scores:
            if not (0.0 <= s <= 1.0):
                raise ValueError(f"score out of [0, 1]: {s}")
        session.validations.append(SessionValidation(
            validator_id, scores, is_official, reputation_at_time,
            tuple(similarities) if similarities is not None else None))
        return self.is_finalizable(session)

    def is_finalizable(self, session: QuerySession) -> bool:
        if session.state is not SessionState.VALIDATING:
            return False
        if len(session.regular_validations()) < self.quorum.min_validators:
            return False
        if self.quorum.official_required and session.official_validation() is None:
            return False
        return True

    def finalize(self, session: QuerySession, engine: ReputationEngine,
                 ledger: Ledger, cache, round_no: int = 0,
                 feedback_provider: Optional[Callable[[Submission], FeedbackRecord]] = None,
                 official_deviation_threshold: Optional[float] = None) -> SessionOutcome:
        if not self.is_finalizable(session):
            raise NotFinalizable(f"session {session.session_index} is not finalizable")

        official = session.official_validation()
        n_subs = len(session.submissions)

        # similarity gate: disqualify injected submissions and penalize suppliers
        qualified = list(range(n_subs))
        if official is not None and official.similarities is not None:
            qualified = []
            for i, sim in enumerate(official.similarities):
                check = official_check(sim, engine.params)
                if check.passed:
                    qualified.append(i)
                else:
                    engine.penalize_supplier(session.submissions[i].supplier_id)

        # per-submission mean scores and per-supplier prompt reputations
        mean_scores = [
            sum(rec.scores[i] for rec in session.validations) / len(session.validations)
            for i in range(n_subs)]
        records_for = [
            [ValidationRecord(rec.validator_id, rec.scores[i], rec.reputation_at_time)
             for rec in session.validations]
            for i in range(n_subs)]

        payouts: Dict[str, float] = {}
        refund = 0.0

        winner_idx: Optional[int] = None
        if qualified:
            winner_idx = min(qualified, key=lambda i: (-mean_scores[i],
                                                       session.submissions[i].supplier_id))

        if winner_idx is None:
            # all submissions rejected by the similarity gate: refund the user
            refund = session.escrow
            payouts[session.user_id] = payouts.get(session.user_id, 0.0) + refund
            session.escrow = 0.0
            outcome = SessionOutcome(False, None, None, None, payouts, refund,
                                     bool(session.cache_hit))
        else:
            winner = session.submissions[winner_idx]
            feedback = None
            if feedback_provider is not None:
                feedback = feedback_provider(winner)
                session.feedback = feedback
            feedbacks = [feedback] if feedback is not None else []

            key = ledger.put_prompt(winner.content, winner.supplier_id)
            r_p = engine.record_prompt_outcome(key, records_for[winner_idx], feedbacks)

            # escrow split
            escrow = session.escrow
            if session.cache_hit:
                fee = escrow * self.shares.resale_cache_fee
                pool = escrow - fee
                payouts[self.cache_service_id] = payouts.get(self.cache_service_id, 0.0) + fee
                provider_reps = {winner.supplier_id: r_p}
                try:
                    resale = poi.distribute_resale(pool, provider_reps)
                except poi.AllZeroReputation:
                    resale = {self.cache_service_id: pool}  # retained by external storage
                for node, amount in resale.items():
                    payouts[node] = payouts.get(node, 0.0) + amount
            else:
                regular = session.regular_validations()
                validator_pot = escrow * self.shares.validators
                cache_fee = escrow * self.shares.cache
                supplier_pay = escrow - validator_pot - cache_fee
                payouts[winner.supplier_id] = payouts.get(winner.supplier_id, 0.0) + supplier_pay
                payouts[self.cache_service_id] = payouts.get(self.cache_service_id, 0.0) + cache_fee
                for rec in regular:
                    payouts[rec.validator_id] = payouts.get(rec.validator_id, 0.0) \
                        + validator_pot / len(regular)
            session.escrow = 0.0
            outcome = SessionOutcome(True, winner.supplier_id, winner.content, r_p,
                                     payouts, refund, bool(session.cache_hit),
                                     prompt_key=key)

        # reputation updates for every submission's supplier
        for i, sub in enumerate(session.submissions):
            if winner_idx is not None and i == winner_idx:
                r_p_i = outcome.prompt_reputation
            else:
                r_p_i = engine.score_prompt(sub.supplier_id, records_for[i])
            engine.update_supplier(sub.supplier_id, [r_p_i])

        # validator consistency updates and the trusted deviation gate
        r_max = max(rec.reputation_at_time for rec in session.validations)
        for rec in session.validations:
            if rec.is_official:
                continue
            consistencies = []
            for i in range(n_subs):
                others = [ValidationRecord(o.validator_id, o.scores[i], o.reputation_at_time)
                          for o in session.validations if o is not rec]
                consistencies.append(consistency(rec.scores[i], others, r_max))
            engine.update_validator(rec.validator_id, consistencies)
            if official is not None and official_deviation_threshold is not None:
                if any(abs(rec.scores[i] - official.scores[i]) > official_deviation_threshold
                       for i in range(n_subs)):
                    engine.penalize_validator(rec.validator_id)

        # the requesting service's reputation follows its feedback consistency
        if winner_idx is not None and session.feedback is not None:
            others = records_for[winner_idx]
            cs = consistency(session.feedback.accuracy, others, r_max)
            engine.update_llm(session.user_id, [cs])

        # offer the winner to the cache (admission path) or refresh its reputation
        if winner_idx is not None and cache is not None:
            winner = session.submissions[winner_idx]
            if session.cache_hit:
                if session.cached_node_id is not None and \
                        cache.get_node(session.cached_node_id) is not None:
                    cache.update_reputation(session.cached_node_id,
                                            outcome.prompt_reputation)
            else:
                digest = ledger.hash_fn(winner.content)
                result = cache.access(digest, round_no)
                if result.promoted:
                    key = outcome.prompt_key
                    node = CacheNode(
                        node_id=node_id_from(digest, key.count),
                        content=winner.content,
                        embedding=winner.embedding,
                        cost=session.payment,
                        size=float(len(winner.content.encode("utf-8"))),
                        reputation=outcome.prompt_reputation,
                        frequency=cache.config.k if cache.policy == "procache" else 1,
                        last_access_round=round_no,
                    )
                    if cache.get_node(node.node_id) is None:
                        cache.insert(node)

        session.result = outcome
        self._emit(session, EventKind.SESSION_FINALIZED, payload=outcome)
        self._transition(session, SessionState.FINALIZED, round_no,
                         EventKind.SESSION_FINALIZED)
        return outcome
