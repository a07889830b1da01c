"""Deterministic round-based engine driving the full protocol loop.

Each round samples queries, runs every session through the four-stage
lifecycle, settles impact rewards and escrow payouts, refreshes cache
reputations from the ledger and emits one metrics frame.
"""
from __future__ import annotations

import math
import os
import random
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

from . import agents as agents_mod
from . import poi
from .agents import (Agent, AgentSpec, Role, Strategy, StrategyKind,
                     official_similarity, topic_vector, variant_vector)
from .config import ConfigError, ScenarioConfig, merge_overrides, scenario_from_dict, \
    scenario_to_dict
from .ledger import Ledger, Prefix
from .procache import make_cache
from .reputation import FeedbackRecord, ReputationEngine
from .session import CacheResult, Query, SessionBook

CACHE_SERVICE_ID = "cache"
OFFICIAL_ID = "official"


@dataclass
class MetricsFrame:
    round: int
    supplier_reputation: Dict[str, float]
    validator_reputation: Dict[str, float]
    llm_reputation: Dict[str, float]
    honest_supplier_mean: float
    honest_supplier_ci: float
    malicious_supplier_mean: Optional[float]
    honest_validator_mean: float
    honest_validator_ci: float
    malicious_validator_mean: Optional[float]
    hit_rate_cumulative: float
    mean_in_cache_reputation: float
    resident_count: int
    evictions_cumulative: int
    mean_service_delay: float
    datatable_count: int
    total_prompt_bytes: int
    balances: Dict[str, float]
    round_rewards: Dict[str, Tuple[float, float]]  # node -> (impact, minted reward)
    proposer: Optional[str]
    total_minted: float


@dataclass
class RunResult:
    config: ScenarioConfig
    frames: List[MetricsFrame]
    summary: dict
    ledger: Ledger
    cache: object
    wealth: poi.WealthLedger
    book: SessionBook


def _mean(values: List[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _ci95(values: List[float]) -> float:
    if len(values) < 2:
        return 0.0
    mean = _mean(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return 1.96 * math.sqrt(var) / math.sqrt(len(values))


class Simulation:
    """One deterministic run; all randomness flows from named seed streams."""

    def __init__(self, config: ScenarioConfig):
        config.check()
        self.config = config
        seed = config.seed
        self.workload_rng = random.Random(f"workload:{seed}")
        self.sampling_rng = random.Random(f"sampling:{seed}")

        self.ledger = Ledger(initial_prompt_reputation=config.initial_reputation)
        self.engine = ReputationEngine(self.ledger, config.reputation,
                                       initial_reputation=config.initial_reputation)
        self.wealth = poi.WealthLedger()
        self.cache = make_cache(config.cache_policy, replace(config.cache))
        self.book = SessionBook(self.wealth, config.quorum, config.shares,
                                cache_service_id=CACHE_SERVICE_ID)

        self.users = [f"user{i:02d}" for i in range(config.n_users)]
        self.honest_suppliers = [f"sup{i:02d}" for i in range(config.n_honest_suppliers)]
        self.honest_validators = [f"val{i:02d}" for i in range(config.n_honest_validators)]
        self.malicious = [f"mal{i:02d}" for i in range(config.n_malicious())]
        # malicious nodes hold both roles: every attack needs a scoring channel
        self.supplier_pool = self.honest_suppliers + self.malicious
        self.validator_pool = self.honest_validators + self.malicious
        self.colluders = frozenset(self.malicious) \
            if config.attack == "collusion" else frozenset()
        if len(self.supplier_pool) < config.quorum.min_suppliers:
            raise ConfigError("supplier pool smaller than the supplier quorum")
        if len(self.validator_pool) < config.quorum.min_validators:
            raise ConfigError("validator pool smaller than the validator quorum")
        if config.hot_topics > 0 and len(self.malicious) < config.quorum.min_suppliers:
            raise ConfigError("hot topics need at least min_suppliers malicious nodes")

        self.agents: Dict[str, Agent] = {}
        strategy = self._malicious_strategy()
        for user in self.users:
            self._add_agent(user, Role.USER, agents_mod.HONEST)
            self.wealth.deposit(user, config.initial_user_balance)
        for sup in self.honest_suppliers:
            self._add_agent(sup, Role.SUPPLIER, agents_mod.HONEST)
        for val in self.honest_validators:
            self._add_agent(val, Role.VALIDATOR, agents_mod.HONEST)
        for mal in self.malicious:
            self._add_agent(mal, Role.SUPPLIER, strategy)
        self._add_agent(OFFICIAL_ID, Role.OFFICIAL_VALIDATOR, agents_mod.HONEST)
        self._add_agent(CACHE_SERVICE_ID, Role.CACHE_SERVICE, agents_mod.HONEST)

        for sup in self.supplier_pool:
            self.ledger.ensure_supplier(sup, config.initial_reputation)
        for val in self.validator_pool:
            self.ledger.ensure_validator(val, config.initial_reputation)

        self.frames: List[MetricsFrame] = []
        self.cumulative_impact: Dict[str, poi.ImpactRecord] = {}
        self.content_quality: Dict[str, float] = {}
        self._variant_cursor: Dict[int, int] = defaultdict(int)
        self._query_counter = 0
        self.sessions_failed = 0

    def _malicious_strategy(self) -> Strategy:
        attack = self.config.attack
        if attack == "self_promotion":
            return Strategy(StrategyKind.SELF_PROMOTION)
        if attack == "collusion":
            return Strategy(StrategyKind.COLLUSION, group_id="g0")
        if attack == "slandering":
            targets = frozenset(self.honest_suppliers + self.honest_validators)
            return Strategy(StrategyKind.SLANDERING, targets=targets)
        return agents_mod.HONEST

    def _add_agent(self, node_id: str, role: Role, strategy: Strategy) -> None:
        spec = AgentSpec(node_id=node_id, role=role, strategy=strategy)
        self.agents[node_id] = Agent(spec, self.config.quality,
                                     seed=self.config.seed,
                                     dim=self.config.embedding_dim)

    # -- workload -----------------------------------------------------------

    def _uniform_queries(self, count: int) -> List[Tuple[int, int]]:
        cfg = self.config
        out = []
        for _ in range(count):
            if cfg.hot_topics > 0 and self.workload_rng.random() < cfg.hot_fraction:
                topic = self.workload_rng.randrange(cfg.hot_topics)
            elif cfg.hot_topics > 0:
                topic = self.workload_rng.randrange(cfg.hot_topics, cfg.topics)
            else:
                topic = self.workload_rng.randrange(cfg.topics)
            variant = self._variant_cursor[topic] % cfg.variants_per_topic
            self._variant_cursor[topic] += 1
            out.append((topic, variant))
        return out

    def _dedup_workload(self) -> List[Tuple[int, int]]:
        pairs = [(i % self.config.topics, i // self.config.topics)
                 for i in range(self.config.total_questions)]
        self.workload_rng.shuffle(pairs)
        return pairs

    # -- one session --------------------------------------------------------

    def run_session(self, topic: int, variant: int, round_no: int) -> Optional[dict]:
        cfg = self.config
        user_id = self.users[self._query_counter % len(self.users)]
        self._query_counter += 1
        topic_emb = topic_vector(topic, cfg.embedding_dim, cfg.seed)
        query = Query(
            text=f"question about topic {topic} (variant {variant})",
            topic_id=topic, variant_id=variant,
            embedding=variant_vector(topic, variant, cfg.embedding_dim, cfg.seed),
            topic_embedding=topic_emb,
        )
        session = self.book.create_session(user_id, query, cfg.payment_per_query,
                                           round_no)

        # stage 2: the cache service answers with a hit flag
        found = self.cache.retrieve(query.embedding)
        if found is not None:
            node = found.node
            digest = self.ledger.hash_fn(node.content)
            self.cache.access(digest, round_no)
            data_key = self.ledger.key_for_content(node.content)
            entry = self.ledger.get(data_key)
            result = CacheResult(
                hit=True, content=node.content, embedding=node.embedding,
                true_quality=self.content_quality.get(node.content, node.reputation),
                original_supplier=entry.supplier_id, node_id=node.node_id)
            delay = cfg.d_hit
        else:
            result = CacheResult(hit=False)
            delay = cfg.d_miss
        self.book.post_cache(session, result, round_no)

        # stage 3: sampled suppliers answer the knowledge-update event
        if not result.hit:
            # hot topics model knowledge silos held only by the attacking suppliers
            if topic < cfg.hot_topics and self.malicious:
                pool = self.malicious
            else:
                pool = self.supplier_pool
            chosen = sorted(self.sampling_rng.sample(
                pool, min(self.book.quorum.min_suppliers, len(pool))))
            for supplier_id in chosen:
                sub = self.agents[supplier_id].supply(topic)
                self.book.update_knowledge(session, supplier_id, sub.content,
                                           sub.embedding, sub.true_quality, round_no)

        # stage 4: sampled validators plus the official validator score everything
        panel = self._validator_panel()
        for validator_id in panel:
            agent = self.agents[validator_id]
            scores = [agent.validate(sub.supplier_id, sub.true_quality, self.colluders)
                      for sub in session.submissions]
            self.book.update_validation(
                session, validator_id, scores, is_official=False,
                reputation_at_time=self.engine.validator_reputation(validator_id))
        if self.book.quorum.official_required:
            official = self.agents[OFFICIAL_ID]
            estimates = [official.official_estimate(sub.true_quality)
                         for sub in session.submissions]
            sims = [official_similarity(sub.embedding, query.topic_embedding)
                    for sub in session.submissions]
            self.book.update_validation(session, OFFICIAL_ID, estimates,
                                        is_official=True, reputation_at_time=1.0,
                                        similarities=sims)

        user_agent = self.agents[user_id]

        def feedback_provider(winner) -> FeedbackRecord:
            return FeedbackRecord(
                llm_id=user_id,
                accuracy=user_agent.user_feedback(winner.true_quality),
                llm_reputation=self.engine.llm_reputation(user_id))

        outcome = self.book.finalize(
            session, self.engine, self.ledger, self.cache, round_no,
            feedback_provider=feedback_provider,
            official_deviation_threshold=cfg.official_deviation_threshold)
        if outcome.success:
            winner_sub = next(s for s in session.submissions
                              if s.supplier_id == outcome.winner_supplier
                              and s.content == outcome.content)
            self.content_quality.setdefault(outcome.content, winner_sub.true_quality)
        else:
            self.sessions_failed += 1
        return {"outcome": outcome, "panel": panel, "delay": delay}

    def _validator_panel(self) -> List[str]:
        floor = self.config.validator_exclusion_floor
        eligible = sorted(v for v in self.validator_pool
                          if self.engine.validator_reputation(v) >= floor)
        if len(eligible) < self.book.quorum.min_validators:
            # relax the floor rather than stall validation
            eligible = sorted(
                self.validator_pool,
                key=lambda v: (-self.engine.validator_reputation(v), v)
            )[:self.book.quorum.min_validators]
            eligible = sorted(eligible)
        size = min(self.book.quorum.validator_sample_size, len(eligible))
        size = max(size, min(self.book.quorum.min_validators, len(eligible)))
        return sorted(self.sampling_rng.sample(eligible, size))

    # -- rounds -------------------------------------------------------------

    def _node_reputation(self, node_id: str) -> float:
        if node_id in set(self.supplier_pool):
            return self.engine.supplier_reputation(node_id)
        return self.engine.validator_reputation(node_id)

    def run_round(self, round_no: int, queries: List[Tuple[int, int]]) -> MetricsFrame:
        round_payouts: Dict[str, float] = defaultdict(float)
        round_ap: Dict[str, int] = defaultdict(int)
        round_av: Dict[str, int] = defaultdict(int)
        delays: List[float] = []

        for topic, variant in queries:
            info = self.run_session(topic, variant, round_no)
            delays.append(info["delay"])
            outcome = info["outcome"]
            for node, amount in outcome.payouts.items():
                round_payouts[node] += amount
            if outcome.success:
                round_ap[outcome.winner_supplier] += 1
            for validator_id in info["panel"]:
                round_av[validator_id] += 1

        reward_nodes = sorted(set(round_ap) | set(round_av))
        delta_records = [
            poi.ImpactRecord(node, round_ap[node], round_av[node],
                             self._node_reputation(node))
            for node in reward_nodes]
        poi.settle_round(self.wealth, delta_records, dict(round_payouts),
                         self.config.reward)

        round_rewards = {
            rec.node_id: (poi.impact_reward(rec, self.config.reward),
                          poi.impact_reward(rec, self.config.reward))
            for rec in delta_records}
        for rec in delta_records:
            cum = self.cumulative_impact.setdefault(
                rec.node_id, poi.ImpactRecord(rec.node_id))
            cum.prompt_accesses += rec.prompt_accesses
            cum.validation_accesses += rec.validation_accesses
            cum.reputation = rec.reputation
        proposer = None
        if self.cumulative_impact:
            proposer = poi.select_proposer(list(self.cumulative_impact.values()),
                                           self.config.reward)
            if self.config.proposer_bonus > 0:
                self.wealth.deposit(proposer, self.config.proposer_bonus, minted=True)

        # cache reputations follow the ledger at round boundaries
        for node in list(self.cache.residents()):
            data_key = self.ledger.key_for_content(node.content)
            if data_key is None:
                continue
            rep_entry = self.ledger.get(self.ledger.prompt_reputation_key(data_key))
            if rep_entry is not None and rep_entry.reputation != node.reputation:
                self.cache.update_reputation(node.node_id, rep_entry.reputation)

        return self._frame(round_no, delays, round_rewards, proposer)

    def _frame(self, round_no, delays, round_rewards, proposer) -> MetricsFrame:
        supplier_rep = {s: self.engine.supplier_reputation(s)
                        for s in self.supplier_pool}
        validator_rep = {v: self.engine.validator_reputation(v)
                         for v in self.validator_pool}
        llm_rep = {u: self.engine.llm_reputation(u) for u in self.users}
        honest_sup = [supplier_rep[s] for s in self.honest_suppliers]
        honest_val = [validator_rep[v] for v in self.honest_validators]
        mal_sup = [supplier_rep[m] for m in self.malicious]
        mal_val = [validator_rep[m] for m in self.malicious]
        stats = self.ledger.stats()
        return MetricsFrame(
            round=round_no,
            supplier_reputation=supplier_rep,
            validator_reputation=validator_rep,
            llm_reputation=llm_rep,
            honest_supplier_mean=_mean(honest_sup),
            honest_supplier_ci=_ci95(honest_sup),
            malicious_supplier_mean=_mean(mal_sup) if mal_sup else None,
            honest_validator_mean=_mean(honest_val),
            honest_validator_ci=_ci95(honest_val),
            malicious_validator_mean=_mean(mal_val) if mal_val else None,
            hit_rate_cumulative=self.cache.hit_rate(),
            mean_in_cache_reputation=self.cache.mean_reputation(),
            resident_count=self.cache.resident_count(),
            evictions_cumulative=self.cache.evictions,
            mean_service_delay=_mean(delays),
            datatable_count=stats.entries_per_prefix[Prefix.DATA_TABLE],
            total_prompt_bytes=stats.total_prompt_bytes,
            balances=dict(sorted(self.wealth.balances.items())),
            round_rewards=round_rewards,
            proposer=proposer,
            total_minted=self.wealth.total_minted,
        )

    def run(self) -> RunResult:
        cfg = self.config
        if cfg.workload == "dedup":
            pending = self._dedup_workload()
            round_no = 0
            while pending:
                batch, pending = pending[:cfg.queries_per_round], \
                    pending[cfg.queries_per_round:]
                self.frames.append(self.run_round(round_no, batch))
                round_no += 1
        else:
            for round_no in range(cfg.rounds):
                queries = self._uniform_queries(cfg.queries_per_round)
                self.frames.append(self.run_round(round_no, queries))
        return RunResult(config=cfg, frames=self.frames, summary=self._summary(),
                         ledger=self.ledger, cache=self.cache, wealth=self.wealth,
                         book=self.book)

    def _summary(self) -> dict:
        cfg = self.config
        stats = self.ledger.stats()
        last = self.frames[-1] if self.frames else None
        summary = {
            "seed": cfg.seed,
            "rounds": len(self.frames),
            "attack": cfg.attack,
            "cache_policy": cfg.cache_policy,
            "sessions_processed": self._query_counter,
            "sessions_failed": self.sessions_failed,
            "ledger_prompts": stats.entries_per_prefix[Prefix.DATA_TABLE],
            "total_prompt_bytes": stats.total_prompt_bytes,
            "hit_rate_cumulative": self.cache.hit_rate(),
            "mean_in_cache_reputation": self.cache.mean_reputation(),
            "evictions": self.cache.evictions,
            "total_minted": self.wealth.total_minted,
            "honest_supplier_mean": last.honest_supplier_mean if last else None,
            "malicious_supplier_mean": last.malicious_supplier_mean if last else None,
            "honest_validator_mean": last.honest_validator_mean if last else None,
            "malicious_validator_mean": last.malicious_validator_mean if last else None,
            "mean_service_delay": _mean([f.mean_service_delay for f in self.frames]),
        }
        if cfg.workload == "dedup":
            processed = self._query_counter
            summary["questions_processed"] = processed
            summary["storage_reduction_pct"] = \
                100.0 * (1.0 - summary["ledger_prompts"] / processed) if processed else 0.0
        return summary


def run(config: ScenarioConfig) -> RunResult:
    """Execute one scenario; deterministic for a fixed config and seed."""
    return Simulation(config).run()


def dedup_experiment(config: ScenarioConfig) -> dict:
    """Run the deduplication workload and report storage counts."""
    if config.workload != "dedup":
        config = replace(config, workload="dedup")
    config.check()
    result = run(config)
    return {
        "questions_processed": result.summary["questions_processed"],
        "ledger_prompts": result.summary["ledger_prompts"],
        "storage_reduction_pct": result.summary["storage_reduction_pct"],
        "result": result,
    }


def sweep(base: ScenarioConfig,
          overrides: List[Tuple[str, dict]],
          max_workers: Optional[int] = None) -> List[Tuple[str, RunResult]]:
    """Independent runs per override set; seeds derive from the base unless overridden."""
    configs: List[Tuple[str, ScenarioConfig]] = []
    base_dict = scenario_to_dict(base)
    for index, (label, delta) in enumerate(overrides):
        merged = merge_overrides(base_dict, delta)
        if "seed" not in delta:
            merged["seed"] = base.seed + index
        configs.append((label, scenario_from_dict(merged)))

    if max_workers is None:
        max_workers = int(os.environ.get("BLOCKS_SIM_THREADS", "1"))
    if max_workers > 1 and len(configs) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda item: run(item[1]), configs))
        return [(label, result) for (label, _), result in zip(configs, results)]
    return [(label, run(cfg)) for label, cfg in configs]
