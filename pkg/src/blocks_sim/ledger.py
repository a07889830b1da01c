"""Prefixed key-value store modeling on-chain persistent state.

Entries live under four prefixes.  Prompt-indexed prefixes use a SHA-256
digest plus a collision count; node-indexed prefixes use the node id as the
key.  Backing structure is a plain dict iterated in byte order of
prefix || hash || count, which preserves the by-prefix scan the stats need.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union

from .reputation import ValidationRecord


class MissingEntry(KeyError):
    pass


class OutOfRange(ValueError):
    pass


class Prefix(enum.Enum):
    DATA_TABLE = "data_table"
    REPUTATION_PROMPT = "reputation_prompt"
    REPUTATION_SUPPLIER = "reputation_supplier"
    REPUTATION_VALIDATOR = "reputation_validator"


_PREFIX_BYTE = {
    Prefix.DATA_TABLE: b"\x01",
    Prefix.REPUTATION_PROMPT: b"\x02",
    Prefix.REPUTATION_SUPPLIER: b"\x03",
    Prefix.REPUTATION_VALIDATOR: b"\x04",
}


@dataclass(frozen=True)
class LedgerKey:
    prefix: Prefix
    hash: Union[bytes, str]  # digest for prompt-indexed, node id for node-indexed
    count: int = 0

    def hash_bytes(self) -> bytes:
        return self.hash if isinstance(self.hash, bytes) else self.hash.encode("utf-8")

    def sort_bytes(self) -> bytes:
        return _PREFIX_BYTE[self.prefix] + self.hash_bytes() + self.count.to_bytes(8, "big")

    def hash_hex(self) -> str:
        return self.hash_bytes().hex()


@dataclass
class DataTableEntry:
    prompt_content: str
    supplier_id: str


@dataclass
class PromptReputationEntry:
    reputation: float
    validations: list = field(default_factory=list)


@dataclass
class SupplierReputationEntry:
    reputation: float


@dataclass
class ValidatorReputationEntry:
    reputation: float


@dataclass
class LedgerStats:
    entries_per_prefix: dict
    total_prompt_bytes: int


def sha256_digest(content: str) -> bytes:
    return hashlib.sha256(content.encode("utf-8")).digest()


class Ledger:
    """Single-writer append/update store with idempotent prompt insertion.

    ``hash_fn`` is injectable so tests can force collisions with a truncated
    digest; the default is full SHA-256.
    """

    def __init__(self, initial_prompt_reputation: float = 0.5,
                 hash_fn: Optional[Callable[[str], bytes]] = None):
        self.initial_prompt_reputation = initial_prompt_reputation
        self.hash_fn = hash_fn or sha256_digest
        self._entries: dict[LedgerKey, object] = {}
        self._key_by_content: dict[str, LedgerKey] = {}
        self._count_per_hash: dict[bytes, int] = {}

    # -- prompt-indexed entries ---------------------------------------------

    def put_prompt(self, prompt_content: str, supplier_id: str) -> LedgerKey:
        """Insert a prompt, idempotent by content; first supplier keeps attribution."""
        if not prompt_content:
            raise ValueError("prompt content must be non-empty")
        existing = self._key_by_content.get(prompt_content)
        if existing is not None:
            return existing
        digest = self.hash_fn(prompt_content)
        count = self._count_per_hash.get(digest, 0)
        key = LedgerKey(Prefix.DATA_TABLE, digest, count)
        self._entries[key] = DataTableEntry(prompt_content, supplier_id)
        self._entries[LedgerKey(Prefix.REPUTATION_PROMPT, digest, count)] = \
            PromptReputationEntry(self.initial_prompt_reputation)
        self._key_by_content[prompt_content] = key
        self._count_per_hash[digest] = count + 1
        return key

    def key_for_content(self, prompt_content: str) -> Optional[LedgerKey]:
        return self._key_by_content.get(prompt_content)

    @staticmethod
    def prompt_reputation_key(data_key: LedgerKey) -> LedgerKey:
        return LedgerKey(Prefix.REPUTATION_PROMPT, data_key.hash, data_key.count)

    # -- node-indexed entries -------------------------------------------------

    def ensure_supplier(self, node_id: str, initial: float) -> LedgerKey:
        key = LedgerKey(Prefix.REPUTATION_SUPPLIER, node_id)
        if key not in self._entries:
            self._entries[key] = SupplierReputationEntry(initial)
        return key

    def ensure_validator(self, node_id: str, initial: float) -> LedgerKey:
        key = LedgerKey(Prefix.REPUTATION_VALIDATOR, node_id)
        if key not in self._entries:
            self._entries[key] = ValidatorReputationEntry(initial)
        return key

    # -- generic access ---------------------------------------------------------

    def get(self, key: LedgerKey):
        """Stored entry, or None when absent; never fabricates defaults."""
        return self._entries.get(key)

    def append_validation(self, key: LedgerKey, record: ValidationRecord) -> None:
        entry = self._entries.get(key)
        if entry is None or not isinstance(entry, PromptReputationEntry):
            raise MissingEntry(f"no prompt reputation entry for {key}")
        if not (0.0 <= record.score <= 1.0):
            raise OutOfRange(f"validation score out of [0, 1]: {record.score}")
        if not (0.0 <= record.validator_reputation <= 1.0):
            raise OutOfRange(
                f"validator reputation out of [0, 1]: {record.validator_reputation}")
        entry.validations.append(record)

    def set_reputation(self, key: LedgerKey, value: float) -> None:
        entry = self._entries.get(key)
        if entry is None:
            raise MissingEntry(f"no entry for {key}")
        if not hasattr(entry, "reputation"):
            raise MissingEntry(f"{key.prefix.value} entries carry no reputation")
        if not (0.0 <= value <= 1.0):
            raise OutOfRange(f"reputation out of [0, 1]: {value}")
        entry.reputation = value

    def iter_prefix(self, prefix: Prefix) -> Iterator[tuple]:
        keys = sorted((k for k in self._entries if k.prefix is prefix),
                      key=LedgerKey.sort_bytes)
        for key in keys:
            yield key, self._entries[key]

    def stats(self) -> LedgerStats:
        counts = {prefix: 0 for prefix in Prefix}
        total_bytes = 0
        for key, entry in self._entries.items():
            counts[key.prefix] += 1
            if key.prefix is Prefix.DATA_TABLE:
                total_bytes += len(entry.prompt_content.encode("utf-8"))
        return LedgerStats(entries_per_prefix=counts, total_prompt_bytes=total_bytes)

    def snapshot(self) -> dict:
        """JSON-ready view: prefix name -> list of {key_hex, count, entry}."""
        out: dict[str, list] = {prefix.value: [] for prefix in Prefix}
        for prefix in Prefix:
            for key, entry in self.iter_prefix(prefix):
                record: dict = {"key_hex": key.hash_hex(), "count": key.count}
                if isinstance(entry, DataTableEntry):
                    record["prompt_content"] = entry.prompt_content
                    record["supplier_id"] = entry.supplier_id
                elif isinstance(entry, PromptReputationEntry):
                    record["reputation"] = entry.reputation
                    record["validations"] = [
                        {"validator_id": v.validator_id, "score": v.score,
                         "validator_reputation": v.validator_reputation}
                        for v in entry.validations]
                else:
                    record["reputation"] = entry.reputation
                out[prefix.value].append(record)
        return out

    def __len__(self) -> int:
        return len(self._entries)
