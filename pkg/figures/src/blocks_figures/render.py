"""Chart rendering over the simulator's CSV/JSON result files.

Reads are strictly schema-checked: a missing column or an empty data file is
reported by name before any drawing happens.  Output is PNG at a fixed dpi
with deterministic styling, so re-rendering the same inputs is idempotent.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

FIGURE_KINDS = ("supplier_reputation", "validator_reputation", "cache_qos",
                "storage")

HONEST_COLOR = "#1f77b4"
MALICIOUS_COLOR = "#d62728"
BAR_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c")


class FigureError(ValueError):
    pass


class MissingInput(FigureError):
    pass


class MissingColumn(FigureError):
    pass


class EmptyData(FigureError):
    pass


@dataclass
class FigureSpec:
    kind: str
    input_dir: Path
    output_path: Path
    title: Optional[str] = None
    dpi: int = 150

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise FigureError(f"unknown figure kind: {self.kind!r} "
                              f"(choose from {', '.join(FIGURE_KINDS)})")
        self.input_dir = Path(self.input_dir)
        self.output_path = Path(self.output_path)


def _read_csv(path: Path, required: List[str]) -> List[Dict[str, str]]:
    if not path.is_file():
        raise MissingInput(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise MissingColumn(
                    f"{path}: missing required column {column!r} "
                    f"(found: {', '.join(header) or 'nothing'})")
        rows = list(reader)
    if not rows:
        raise EmptyData(f"{path}: zero data rows (header only)")
    return rows


def _read_summary(path: Path, required: List[str]) -> dict:
    if not path.is_file():
        raise MissingInput(f"input file not found: {path}")
    data = json.loads(path.read_text())
    for key in required:
        if key not in data:
            raise MissingColumn(f"{path}: missing required field {key!r}")
    return data


def _new_axes(title: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.set_title(title)
    ax.grid(True, linewidth=0.4, alpha=0.5)
    return fig, ax


def _reputation_series(spec: FigureSpec, node_kind: str):
    """Honest mean/CI and per-node malicious curves for one reputation kind."""
    rows = _read_csv(spec.input_dir / "reputation_timeseries.csv",
                     ["round", "kind", "node_id", "honest", "reputation",
                      "honest_mean", "honest_ci", "malicious_mean"])
    rows = [r for r in rows if r["kind"] == node_kind]
    if not rows:
        raise EmptyData(f"no rows of kind {node_kind!r} in "
                        f"{spec.input_dir / 'reputation_timeseries.csv'}")

    mean_by_round: Dict[int, float] = {}
    ci_by_round: Dict[int, float] = {}
    malicious: Dict[str, Dict[int, float]] = {}
    for r in rows:
        rnd = int(r["round"])
        mean_by_round[rnd] = float(r["honest_mean"])
        ci_by_round[rnd] = float(r["honest_ci"])
        if r["honest"] == "0":
            malicious.setdefault(r["node_id"], {})[rnd] = float(r["reputation"])
    rounds = sorted(mean_by_round)
    return rounds, mean_by_round, ci_by_round, malicious


def _render_reputation(spec: FigureSpec, node_kind: str, default_title: str) -> None:
    rounds, mean_by_round, ci_by_round, malicious = _reputation_series(spec, node_kind)
    fig, ax = _new_axes(spec.title or default_title)
    means = [mean_by_round[r] for r in rounds]
    cis = [ci_by_round[r] for r in rounds]
    ax.plot(rounds, means, color=HONEST_COLOR, linewidth=1.6, label="honest mean")
    ax.fill_between(rounds, [m - c for m, c in zip(means, cis)],
                    [m + c for m, c in zip(means, cis)],
                    color=HONEST_COLOR, alpha=0.2, linewidth=0, label="honest 95% CI")
    for node_id in sorted(malicious):
        series = malicious[node_id]
        xs = sorted(series)
        ax.plot(xs, [series[x] for x in xs], color=MALICIOUS_COLOR,
                linewidth=1.0, linestyle="--", label=node_id)
    ax.set_xlabel("round")
    ax.set_ylabel("reputation")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8, loc="center right")
    _save(fig, spec)


def _cache_runs(spec: FigureSpec) -> Dict[str, List[Dict[str, str]]]:
    """cache_metrics.csv from the input dir itself or its immediate children."""
    candidates = [spec.input_dir] + sorted(
        p for p in spec.input_dir.iterdir() if p.is_dir()) \
        if spec.input_dir.is_dir() else [spec.input_dir]
    runs: Dict[str, List[Dict[str, str]]] = {}
    for directory in candidates:
        path = directory / "cache_metrics.csv"
        if not path.is_file():
            continue
        rows = _read_csv(path, ["round", "policy", "hit_rate_cumulative",
                                "mean_in_cache_reputation", "resident_count",
                                "evictions_cumulative", "mean_service_delay"])
        runs[rows[-1]["policy"]] = rows
    if not runs:
        raise MissingInput(f"no cache_metrics.csv under {spec.input_dir}")
    return runs


def _render_cache_qos(spec: FigureSpec) -> None:
    runs = _cache_runs(spec)
    policies = sorted(runs)
    hit = [float(runs[p][-1]["hit_rate_cumulative"]) for p in policies]
    rep = [float(runs[p][-1]["mean_in_cache_reputation"]) for p in policies]
    delay = [sum(float(r["mean_service_delay"]) for r in runs[p]) / len(runs[p])
             for p in policies]

    fig, axes = plt.subplots(1, 3, figsize=(9.6, 3.4))
    fig.suptitle(spec.title or "Cache quality of service by policy")
    panels = [("cumulative hit rate", hit), ("mean in-cache reputation", rep),
              ("mean service delay", delay)]
    for ax, (label, values) in zip(axes, panels):
        bars = ax.bar(policies, values,
                      color=[BAR_COLORS[i % len(BAR_COLORS)]
                             for i in range(len(policies))])
        ax.set_ylabel(label)
        ax.grid(True, axis="y", linewidth=0.4, alpha=0.5)
        ax.bar_label(bars, fmt="%.3g", fontsize=8)
    fig.tight_layout()
    _save(fig, spec)


def _render_storage(spec: FigureSpec) -> None:
    summary = _read_summary(spec.input_dir / "summary.json",
                            ["sessions_processed", "ledger_prompts"])
    _read_csv(spec.input_dir / "ledger_stats.csv",
              ["round", "data_table_entries", "total_prompt_bytes"])
    processed = summary["sessions_processed"]
    stored = summary["ledger_prompts"]
    fig, ax = _new_axes(spec.title or "Ledger storage deduplication")
    bars = ax.bar(["questions processed", "entries stored"],
                  [processed, stored], color=BAR_COLORS[:2])
    ax.bar_label(bars, fontsize=9)
    ax.set_ylabel("count")
    if processed:
        reduction = 100.0 * (1.0 - stored / processed)
        ax.text(0.98, 0.95, f"reduction: {reduction:.2f}%",
                transform=ax.transAxes, ha="right", va="top", fontsize=9)
    _save(fig, spec)


def _save(fig, spec: FigureSpec) -> None:
    spec.output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output_path, dpi=spec.dpi, format="png")
    plt.close(fig)


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the written image path."""
    if spec.kind == "supplier_reputation":
        _render_reputation(spec, "supplier", "Supplier reputation over rounds")
    elif spec.kind == "validator_reputation":
        _render_reputation(spec, "validator", "Validator reputation over rounds")
    elif spec.kind == "cache_qos":
        _render_cache_qos(spec)
    else:
        _render_storage(spec)
    return spec.output_path
