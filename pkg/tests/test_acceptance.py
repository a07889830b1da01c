"""Acceptance suite: end-to-end guarantees the package commits to.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.  Reference formulas here are transcribed
independently of the implementation and compared numerically.
"""
import math
import random
import time
from dataclasses import replace

import pytest

from blocks_sim.cli import preset_path
from blocks_sim.config import (ScenarioConfig, load_scenario,
                               load_sweep_variants, scenario_from_dict)
from blocks_sim.poi import ImpactRecord, RewardParams, distribute_resale, impact_reward
from blocks_sim.procache import priority_of
from blocks_sim.reputation import (FeedbackRecord, ReputationParams,
                                   ValidationRecord, confidence, consistency,
                                   update_prompt_reputation,
                                   update_validator_reputation)
from blocks_sim.session import EventKind, SessionState
from blocks_sim.simulator import dedup_experiment, run, sweep
from blocks_sim.outputs import write_outputs


# -- shared preset runs -------------------------------------------------------

def _run_preset_sweep(name: str):
    path = preset_path(name)
    base = load_scenario(path)
    variants = load_sweep_variants(path)
    timings = {}
    results = {}
    for label, overrides in [(lbl, ov) for lbl, ov in variants]:
        start = time.perf_counter()
        pairs = sweep(base, [(label, overrides)])
        timings[label] = time.perf_counter() - start
        results[label] = pairs[0][1]
    return results, timings


@pytest.fixture(scope="module")
def supplier_attack_runs():
    return _run_preset_sweep("fig4")


@pytest.fixture(scope="module")
def validator_attack_runs():
    return _run_preset_sweep("fig5")


@pytest.fixture(scope="module")
def cache_policy_runs():
    return _run_preset_sweep("fig6")


def _std(values):
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))


# -- criterion: prompt deduplication -----------------------------------------

@pytest.mark.criterion("storage-dedup")
def test_dedup_preset_stores_one_entry_per_topic():
    config = load_scenario(preset_path("fig7"))
    start = time.perf_counter()
    report = dedup_experiment(config)
    elapsed = time.perf_counter() - start
    assert report["questions_processed"] == 253
    assert config.topics == 53
    assert report["ledger_prompts"] == 53
    assert abs(report["storage_reduction_pct"] - 80.0) <= 2.0
    assert elapsed < 10.0


# -- criterion: attack resistance ---------------------------------------------

def _check_attack_run(result, elapsed, kind: str):
    assert elapsed < 60.0
    assert len(result.frames) == 200
    last = result.frames[-1]
    if kind == "supplier":
        malicious = last.malicious_supplier_mean
        honest = last.honest_supplier_mean
        tail = [f.honest_supplier_mean for f in result.frames[-50:]]
    else:
        malicious = last.malicious_validator_mean
        honest = last.honest_validator_mean
        tail = [f.honest_validator_mean for f in result.frames[-50:]]
    assert malicious < 0.1
    assert honest > 0.6
    assert _std(tail) < 0.05


@pytest.mark.criterion("supplier-attack-resistance")
@pytest.mark.parametrize("attack", ["self_promotion", "collusion", "slandering"])
def test_malicious_suppliers_lose_reputation(supplier_attack_runs, attack):
    results, timings = supplier_attack_runs
    _check_attack_run(results[attack], timings[attack], "supplier")


@pytest.mark.criterion("validator-attack-resistance")
@pytest.mark.parametrize("attack", ["self_promotion", "collusion", "slandering"])
def test_malicious_validators_lose_reputation(validator_attack_runs, attack):
    results, timings = validator_attack_runs
    _check_attack_run(results[attack], timings[attack], "validator")


# -- criterion: cache quality of service --------------------------------------

@pytest.mark.criterion("cache-reputation-qos")
def test_reputation_aware_cache_beats_baselines(cache_policy_runs):
    results, _ = cache_policy_runs
    seeds = {label: res.config.seed for label, res in results.items()}
    assert len(set(seeds.values())) == 1  # identical workload across policies

    in_cache = {label: res.frames[-1].mean_in_cache_reputation
                for label, res in results.items()}
    hit_rate = {label: res.summary["hit_rate_cumulative"]
                for label, res in results.items()}
    best_baseline_rep = max(in_cache["lfu"], in_cache["lruk"])
    assert in_cache["procache"] >= best_baseline_rep + 0.1

    best_baseline_hit = max(hit_rate["lfu"], hit_rate["lruk"])
    assert hit_rate["procache"] >= best_baseline_hit * 0.9


# -- criterion: scoring formula oracles ----------------------------------------

def _consistency_ref(own, others, r_max):
    if not others:
        return 0.0
    everyone = [own] + [rec.score for rec in others]
    spread = max(everyone) - min(everyone)
    if spread == 0.0:
        return 0.0
    acc = 0.0
    for rec in others:
        acc += abs(own - rec.score) * rec.validator_reputation
    raw = acc / (len(others) * spread * r_max)
    return max(0.0, min(1.0, raw))


def _std_ref(xs):
    mu = sum(xs) / len(xs)
    return (sum((x - mu) ** 2 for x in xs) / len(xs)) ** 0.5


def _prompt_rep_ref(supplier_rep, validations, feedbacks):
    total = supplier_rep
    for rec in validations:
        total += rec.score * rec.validator_reputation
    for rec in feedbacks:
        total += rec.accuracy * rec.llm_reputation
    denom = 1 + len(validations) + len(feedbacks)
    scores = [rec.score for rec in validations]
    risk = _std_ref(scores) if len(scores) > 1 else 0.0
    return max(0.0, min(1.0, total / denom - risk))


def _impact_ref(record, beta):
    return record.reputation * (beta * record.prompt_accesses
                                + (1 - beta) * record.validation_accesses)


def _resale_ref(pool, reps):
    total = sum(reps.values())
    return {node: pool * rep / total for node, rep in reps.items()}


def _priority_ref(freq, cost, size, rep, r_b):
    base = freq * cost / size
    if base < 1.0:
        base = 1.0
    return math.exp((rep - r_b) * math.log(base)) if base > 1.0 else 1.0


@pytest.mark.criterion("scoring-oracles")
def test_formulas_match_independent_transcriptions():
    rng = random.Random(987654321)
    for _ in range(1000):
        n = rng.randint(1, 6)
        others = [ValidationRecord(f"v{i}", rng.random(), rng.uniform(0.05, 1.0))
                  for i in range(n)]
        own = rng.random()
        r_max = max([rec.validator_reputation for rec in others] + [rng.uniform(0.5, 1.0)])
        assert consistency(own, others, r_max) == \
            pytest.approx(_consistency_ref(own, others, r_max), abs=1e-9)

        samples = [rng.random() for _ in range(rng.randint(1, 8))]
        assert confidence(samples) == pytest.approx(_std_ref(samples), abs=1e-9)

        m = rng.randint(0, 3)
        feedbacks = [FeedbackRecord(f"u{j}", rng.random(), rng.random())
                     for j in range(m)]
        supplier_rep = rng.random()
        assert update_prompt_reputation(supplier_rep, others, feedbacks) == \
            pytest.approx(_prompt_rep_ref(supplier_rep, others, feedbacks), abs=1e-9)

        record = ImpactRecord("n", rng.randint(0, 50), rng.randint(0, 50),
                              rng.random())
        beta = rng.random()
        assert impact_reward(record, RewardParams(beta=beta)) == \
            pytest.approx(_impact_ref(record, beta), abs=1e-9)

        reps = {f"p{i}": rng.uniform(0.01, 1.0) for i in range(rng.randint(1, 5))}
        pool = rng.uniform(0.0, 50.0)
        got = distribute_resale(pool, reps)
        want = _resale_ref(pool, reps)
        for node in reps:
            assert got[node] == pytest.approx(want[node], abs=1e-9)

        freq = rng.randint(1, 40)
        cost = rng.uniform(0.1, 20.0)
        size = rng.uniform(0.1, 20.0)
        rep = rng.random()
        r_b = rng.random()
        assert priority_of(freq, cost, size, rep, r_b) == \
            pytest.approx(_priority_ref(freq, cost, size, rep, r_b), abs=1e-9)


# -- criterion: smoothing convergence -------------------------------------------

@pytest.mark.criterion("ema-convergence")
def test_reputation_converges_geometrically():
    for alpha in (0.05, 0.2, 0.5, 0.9):
        params = ReputationParams(alpha=alpha)
        for c in (0.0, 0.1, 0.4, 0.8, 1.0):
            start = 0.5
            value = start
            target = 1.0 - c
            for t in range(1, 501):
                value = update_validator_reputation(value, [c], params)
                expected_gap = abs(start - target) * (1.0 - alpha) ** t
                assert abs(value - target) == pytest.approx(expected_gap, abs=1e-9)
                assert abs(value - target) <= (1.0 - alpha) ** t + 1e-12


# -- criterion: conservation fuzzing ---------------------------------------------

_ALLOWED_EDGES = {
    ("created", "cache_queried"),
    ("cache_queried", "collecting_knowledge"),
    ("cache_queried", "validating"),
    ("collecting_knowledge", "validating"),
    ("validating", "finalized"),
}


def _random_scenario(rng: random.Random) -> ScenarioConfig:
    attack = rng.choice(["none", "self_promotion", "collusion", "slandering"])
    n_mal_sup = rng.randint(1, 3) if attack != "none" and rng.random() < 0.7 else 0
    n_mal_val = rng.randint(1, 3) if attack != "none" and not n_mal_sup else 0
    return scenario_from_dict({
        "seed": rng.randint(0, 10_000),
        "rounds": 100,
        "n_users": rng.randint(1, 3),
        "n_honest_suppliers": rng.randint(4, 8),
        "n_honest_validators": rng.randint(4, 8),
        "n_malicious_suppliers": n_mal_sup,
        "n_malicious_validators": n_mal_val,
        "attack": attack,
        "topics": rng.randint(4, 30),
        "variants_per_topic": rng.randint(1, 5),
        "queries_per_round": rng.randint(1, 3),
        "cache_policy": rng.choice(["procache", "lfu", "lruk"]),
        "payment_per_query": rng.choice([1.0, 3.0, 10.0]),
        "proposer_bonus": rng.choice([0.0, 0.5]),
        "cache": {"capacity": rng.randint(2, 12)},
    })


@pytest.mark.criterion("conservation-fuzz")
@pytest.mark.parametrize("fuzz_index", range(10))
def test_randomized_runs_conserve_tokens_and_state(fuzz_index):
    rng = random.Random(f"fuzz:{fuzz_index}")
    config = _random_scenario(rng)
    result = run(config)

    # token conservation: everything in circulation was deposited or minted
    initial = config.n_users * config.initial_user_balance
    assert result.wealth.total() == pytest.approx(
        initial + result.wealth.total_minted, rel=1e-12, abs=1e-6)

    for session in result.book.sessions.values():
        # escrow conservation: each payment is fully redistributed
        assert session.state is SessionState.FINALIZED
        assert session.escrow == 0.0
        outcome = session.result
        assert sum(outcome.payouts.values()) == pytest.approx(session.payment,
                                                              abs=1e-9)
        # state-machine safety: only legal edges, each event emitted once
        for step in session.transitions:
            assert (step["from"], step["to"]) in _ALLOWED_EDGES
        assert len(session.events_emitted) == len(set(session.events_emitted))
        assert session.events_emitted[0] is EventKind.NEW_QUERY
        assert session.events_emitted[-1] is EventKind.SESSION_FINALIZED


# -- criterion: byte-level determinism --------------------------------------------

@pytest.mark.criterion("determinism")
def test_identical_seeds_produce_byte_identical_outputs(tmp_path):
    config = scenario_from_dict({
        "seed": 42, "rounds": 40, "n_honest_suppliers": 6,
        "n_honest_validators": 6, "n_malicious_suppliers": 2,
        "attack": "collusion", "topics": 12, "queries_per_round": 3,
    })
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    write_outputs(run(config), out_a)
    write_outputs(run(replace(config)), out_b)
    for name in ("reputation_timeseries.csv", "cache_metrics.csv",
                 "rewards.csv", "ledger_stats.csv", "summary.json",
                 "sessions.jsonl"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
