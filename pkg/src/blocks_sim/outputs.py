"""Result serialization: per-round CSV series, summary JSON and session log.

All numeric cells use shortest round-trip float repr, so identical runs
produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, List, Union

from .simulator import RunResult

RESULT_FILES = ("reputation_timeseries.csv", "cache_metrics.csv", "rewards.csv",
                "ledger_stats.csv", "summary.json", "sessions.jsonl")


class OutputExists(FileExistsError):
    pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: List[str], rows: Iterable[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _reputation_rows(result: RunResult) -> Iterable[list]:
    sim = result.config
    honest_suppliers = {f"sup{i:02d}" for i in range(sim.n_honest_suppliers)}
    honest_validators = {f"val{i:02d}" for i in range(sim.n_honest_validators)}
    for frame in result.frames:
        for node_id in sorted(frame.supplier_reputation):
            yield [frame.round, "supplier", node_id,
                   int(node_id in honest_suppliers),
                   frame.supplier_reputation[node_id],
                   frame.honest_supplier_mean, frame.honest_supplier_ci,
                   frame.malicious_supplier_mean]
        for node_id in sorted(frame.validator_reputation):
            yield [frame.round, "validator", node_id,
                   int(node_id in honest_validators),
                   frame.validator_reputation[node_id],
                   frame.honest_validator_mean, frame.honest_validator_ci,
                   frame.malicious_validator_mean]
        for node_id in sorted(frame.llm_reputation):
            yield [frame.round, "llm", node_id, 1,
                   frame.llm_reputation[node_id], None, None, None]


def _cache_rows(result: RunResult) -> Iterable[list]:
    policy = result.config.cache_policy
    for frame in result.frames:
        yield [frame.round, policy, frame.hit_rate_cumulative,
               frame.mean_in_cache_reputation, frame.resident_count,
               frame.evictions_cumulative, frame.mean_service_delay]


def _reward_rows(result: RunResult) -> Iterable[list]:
    for frame in result.frames:
        for node_id in sorted(frame.round_rewards):
            impact, reward = frame.round_rewards[node_id]
            yield [frame.round, node_id, impact, reward,
                   frame.balances.get(node_id, 0.0),
                   int(node_id == frame.proposer)]


def _ledger_rows(result: RunResult) -> Iterable[list]:
    for frame in result.frames:
        yield [frame.round, frame.datatable_count, frame.total_prompt_bytes]


def _session_lines(result: RunResult) -> Iterable[str]:
    for index in sorted(result.book.sessions):
        session = result.book.sessions[index]
        outcome = session.result
        yield json.dumps({
            "session_index": session.session_index,
            "round": session.created_round,
            "user_id": session.user_id,
            "topic_id": session.query.topic_id,
            "variant_id": session.query.variant_id,
            "payment": session.payment,
            "cache_hit": session.cache_hit,
            "state": session.state.value,
            "success": outcome.success if outcome else None,
            "winner_supplier": outcome.winner_supplier if outcome else None,
            "prompt_reputation": outcome.prompt_reputation if outcome else None,
            "refund": outcome.refund if outcome else None,
        }, sort_keys=True)


def write_outputs(result: RunResult, out_dir: Union[str, Path],
                  force: bool = False, dump_ledger: bool = False) -> List[Path]:
    """Write all result files into ``out_dir``; refuses to overwrite unless forced."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(RESULT_FILES) + (["ledger.json"] if dump_ledger else [])
    if not force:
        for name in names:
            if (out / name).exists():
                raise OutputExists(f"{out / name} exists; pass force to overwrite")

    _write_csv(out / "reputation_timeseries.csv",
               ["round", "kind", "node_id", "honest", "reputation",
                "honest_mean", "honest_ci", "malicious_mean"],
               _reputation_rows(result))
    _write_csv(out / "cache_metrics.csv",
               ["round", "policy", "hit_rate_cumulative", "mean_in_cache_reputation",
                "resident_count", "evictions_cumulative", "mean_service_delay"],
               _cache_rows(result))
    _write_csv(out / "rewards.csv",
               ["round", "node_id", "impact", "reward_minted", "balance", "proposer"],
               _reward_rows(result))
    _write_csv(out / "ledger_stats.csv",
               ["round", "data_table_entries", "total_prompt_bytes"],
               _ledger_rows(result))
    with (out / "summary.json").open("w") as fh:
        json.dump(result.summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with (out / "sessions.jsonl").open("w") as fh:
        for line in _session_lines(result):
            fh.write(line + "\n")
    if dump_ledger:
        with (out / "ledger.json").open("w") as fh:
            json.dump(result.ledger.snapshot(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    return [out / name for name in names]
