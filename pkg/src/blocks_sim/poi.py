"""Proof-of-Impact surrogate: impact accounting, proposer choice, reward settlement.

Impact weighs a node's reputation against how often its prompts and
validations are accessed; rewards are minted per round, while prompt-access
payouts are funded from session escrows and merely applied here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence


class EmptyInput(ValueError):
    pass


class AllZeroReputation(ValueError):
    pass


@dataclass
class ImpactRecord:
    node_id: str
    prompt_accesses: int = 0
    validation_accesses: int = 0
    reputation: float = 0.0


@dataclass
class RewardParams:
    beta: float = 0.5        # weight of prompt accesses vs validation accesses
    resale_fee: float = 0.0  # tokens retained by external storage per resale

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")


@dataclass
class WealthLedger:
    """Token balances plus a mint counter for conservation checks."""

    balances: Dict[str, float] = field(default_factory=dict)
    total_minted: float = 0.0

    def balance(self, node_id: str) -> float:
        return self.balances.get(node_id, 0.0)

    def deposit(self, node_id: str, amount: float, minted: bool = False) -> None:
        if amount < 0:
            raise ValueError(f"cannot deposit negative amount {amount}")
        self.balances[node_id] = self.balance(node_id) + amount
        if minted:
            self.total_minted += amount

    def withdraw(self, node_id: str, amount: float) -> None:
        current = self.balance(node_id)
        if amount < 0 or amount > current + 1e-9:
            raise ValueError(f"cannot withdraw {amount} from balance {current}")
        self.balances[node_id] = current - amount

    def total(self) -> float:
        return sum(self.balances.values())


def impact_reward(rec: ImpactRecord, params: RewardParams) -> float:
    """Reputation-weighted blend of prompt and validation access counts."""
    return rec.reputation * (params.beta * rec.prompt_accesses
                             + (1.0 - params.beta) * rec.validation_accesses)


def select_proposer(records: Sequence[ImpactRecord], params: RewardParams = RewardParams()) -> str:
    """Node with the highest impact; ties go to the smallest node id."""
    if not records:
        raise EmptyInput("no impact records to select a proposer from")
    best = max(records, key=lambda rec: (impact_reward(rec, params), ), default=None)
    best_impact = impact_reward(best, params)
    tied = [rec.node_id for rec in records
            if impact_reward(rec, params) == best_impact]
    return min(tied)


def distribute_resale(fee_pool: float, provider_reps: Mapping[str, float]) -> Dict[str, float]:
    """Split a resale fee pool among providers in proportion to prompt reputation."""
    if fee_pool < 0:
        raise ValueError(f"fee pool must be non-negative, got {fee_pool}")
    total_rep = sum(provider_reps.values())
    if total_rep <= 0.0:
        raise AllZeroReputation("no provider with positive reputation")
    return {node: fee_pool * rep / total_rep for node, rep in provider_reps.items()}


def settle_round(wealth: WealthLedger,
                 records: Sequence[ImpactRecord],
                 prompt_payouts: Mapping[str, float],
                 params: RewardParams) -> WealthLedger:
    """Mint the per-round impact rewards and apply escrow-funded payouts."""
    for payout in prompt_payouts.values():
        if payout < 0:
            raise ValueError(f"payouts must be non-negative, got {payout}")
    for rec in records:
        wealth.deposit(rec.node_id, impact_reward(rec, params), minted=True)
    for node_id, payout in prompt_payouts.items():
        wealth.deposit(node_id, payout)
    return wealth
