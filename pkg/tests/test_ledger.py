"""Prefixed key-value store: idempotent prompt insertion, collisions, stats."""
import hashlib

import pytest

from blocks_sim.ledger import (DataTableEntry, Ledger, LedgerKey, MissingEntry,
                               OutOfRange, Prefix, PromptReputationEntry,
                               sha256_digest)
from blocks_sim.reputation import ValidationRecord


def truncated_hash(content: str) -> bytes:
    """Two-byte digest, small enough to force collisions in tests."""
    return hashlib.sha256(content.encode("utf-8")).digest()[:2]


class TestPutPrompt:
    def test_idempotent_by_content(self):
        ledger = Ledger()
        key1 = ledger.put_prompt("Paris is the capital of France", "s1")
        size = len(ledger)
        key2 = ledger.put_prompt("Paris is the capital of France", "s2")
        assert key1 == key2
        assert len(ledger) == size
        # first supplier keeps attribution
        assert ledger.get(key1).supplier_id == "s1"

    def test_forced_collision_uses_counts(self):
        ledger = Ledger(hash_fn=lambda content: b"\x00\x01")
        key_a = ledger.put_prompt("first content", "s1")
        key_b = ledger.put_prompt("second content", "s1")
        assert key_a.hash == key_b.hash
        assert (key_a.count, key_b.count) == (0, 1)
        assert ledger.get(key_a).prompt_content == "first content"
        assert ledger.get(key_b).prompt_content == "second content"

    def test_53_distinct_prompts(self):
        ledger = Ledger()
        for i in range(53):
            ledger.put_prompt(f"canonical answer {i}", "s1")
        assert ledger.stats().entries_per_prefix[Prefix.DATA_TABLE] == 53

    def test_key_hash_matches_content_digest(self):
        ledger = Ledger()
        key = ledger.put_prompt("check me", "s1")
        assert key.hash == sha256_digest("check me")

    def test_empty_content_rejected(self):
        with pytest.raises(ValueError):
            Ledger().put_prompt("", "s1")

    def test_paired_reputation_entry(self):
        ledger = Ledger(initial_prompt_reputation=0.5)
        key = ledger.put_prompt("knowledge", "s1")
        entry = ledger.get(ledger.prompt_reputation_key(key))
        assert isinstance(entry, PromptReputationEntry)
        assert entry.reputation == 0.5
        assert entry.validations == []


class TestGet:
    def test_unknown_key_is_absent(self):
        key = LedgerKey(Prefix.DATA_TABLE, b"\x00" * 32, 0)
        assert Ledger().get(key) is None

    def test_round_trip(self):
        ledger = Ledger()
        key = ledger.put_prompt("p", "s")
        entry = ledger.get(key)
        assert isinstance(entry, DataTableEntry)
        assert (entry.prompt_content, entry.supplier_id) == ("p", "s")


class TestAppendValidation:
    def test_append_preserves_order(self):
        ledger = Ledger()
        key = ledger.prompt_reputation_key(ledger.put_prompt("p", "s"))
        for i in range(5):
            ledger.append_validation(key, ValidationRecord(f"v{i}", i / 10, 0.5))
        entry = ledger.get(key)
        assert [v.validator_id for v in entry.validations] == [f"v{i}" for i in range(5)]

    def test_missing_entry(self):
        key = LedgerKey(Prefix.REPUTATION_PROMPT, b"\x01" * 32, 0)
        with pytest.raises(MissingEntry):
            Ledger().append_validation(key, ValidationRecord("v", 0.5, 0.5))

    def test_out_of_range_score(self):
        ledger = Ledger()
        key = ledger.prompt_reputation_key(ledger.put_prompt("p", "s"))
        with pytest.raises(OutOfRange):
            ledger.append_validation(key, ValidationRecord("v", 1.2, 0.5))


class TestSetReputation:
    def test_set_and_get_bounds(self):
        ledger = Ledger()
        key = ledger.ensure_supplier("s1", 0.5)
        ledger.set_reputation(key, 0.0)
        assert ledger.get(key).reputation == 0.0
        ledger.set_reputation(key, 1.0)
        assert ledger.get(key).reputation == 1.0

    def test_out_of_range(self):
        ledger = Ledger()
        key = ledger.ensure_validator("v1", 0.5)
        with pytest.raises(OutOfRange):
            ledger.set_reputation(key, -0.1)

    def test_missing_entry(self):
        key = LedgerKey(Prefix.REPUTATION_SUPPLIER, "ghost")
        with pytest.raises(MissingEntry):
            Ledger().set_reputation(key, 0.5)


class TestStats:
    def test_empty_store(self):
        stats = Ledger().stats()
        assert all(count == 0 for count in stats.entries_per_prefix.values())
        assert stats.total_prompt_bytes == 0

    def test_byte_total_matches_rescan(self):
        ledger = Ledger()
        contents = [f"prompt number {i} with some padding" for i in range(20)]
        for content in contents:
            ledger.put_prompt(content, "s1")
        expected = sum(len(c.encode("utf-8")) for c in contents)
        assert ledger.stats().total_prompt_bytes == expected

    def test_datatable_count_matches_distinct_contents(self):
        ledger = Ledger(hash_fn=truncated_hash)
        contents = [f"c{i % 7}" for i in range(50)]
        for content in contents:
            ledger.put_prompt(content, "s")
        assert ledger.stats().entries_per_prefix[Prefix.DATA_TABLE] == 7


class TestInvariants:
    def test_reputation_pairing(self):
        ledger = Ledger(hash_fn=truncated_hash)
        for i in range(40):
            ledger.put_prompt(f"content {i}", "s")
        data_keys = {(k.hash_bytes(), k.count)
                     for k, _ in ledger.iter_prefix(Prefix.DATA_TABLE)}
        rep_keys = {(k.hash_bytes(), k.count)
                    for k, _ in ledger.iter_prefix(Prefix.REPUTATION_PROMPT)}
        assert data_keys == rep_keys

    def test_contiguous_counts_per_hash(self):
        ledger = Ledger(hash_fn=lambda c: b"\xff")
        for i in range(6):
            ledger.put_prompt(f"body {i}", "s")
        counts = sorted(k.count for k, _ in ledger.iter_prefix(Prefix.DATA_TABLE))
        assert counts == list(range(6))

    def test_iter_prefix_is_byte_ordered(self):
        ledger = Ledger()
        for i in range(30):
            ledger.put_prompt(f"item {i}", "s")
        keys = [k.sort_bytes() for k, _ in ledger.iter_prefix(Prefix.DATA_TABLE)]
        assert keys == sorted(keys)

    def test_snapshot_shape(self):
        ledger = Ledger()
        key = ledger.put_prompt("p", "s")
        ledger.ensure_supplier("s", 0.5)
        snap = ledger.snapshot()
        assert snap["data_table"][0]["key_hex"] == key.hash_bytes().hex()
        assert snap["reputation_supplier"][0]["reputation"] == 0.5
