"""Priority-oriented prompt cache plus LFU and LRU-k baselines.

The main cache admits a prompt only after k accesses recorded in a
lightweight history queue, and evicts by a reputation-exponent priority.
Baselines admit on first access, matching their textbook definitions.
"""
from __future__ import annotations

import heapq
import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple


class NonPositiveInput(ValueError):
    pass


class DuplicateNodeId(ValueError):
    pass


class MissingNode(KeyError):
    pass


class BadEmbedding(ValueError):
    pass


def priority_of(frequency: int, cost: float, size: float,
                reputation: float, r_b: float) -> float:
    """Eviction priority (frequency*cost/size)^(reputation - r_b), base clamped to >= 1.

    The clamp keeps the priority monotone in reputation: a raw base below 1
    with a negative exponent would otherwise reward low reputation.
    """
    if cost <= 0 or size <= 0 or frequency < 1:
        raise NonPositiveInput(
            f"frequency >= 1 and positive cost/size required, got "
            f"frequency={frequency} cost={cost} size={size}")
    base = max(frequency * cost / size, 1.0)
    return base ** (reputation - r_b)


@dataclass
class CacheConfig:
    capacity: int = 16
    k: int = 2                     # admission threshold (and the k of LRU-k)
    r_b: float = 0.5               # reputation threshold in the priority exponent
    history_capacity: int = 64
    similarity_threshold: float = 0.9

    def __post_init__(self) -> None:
        if self.capacity < 1 or self.k < 1 or self.history_capacity < 1:
            raise ValueError("capacity, k and history_capacity must be >= 1")


@dataclass
class CacheNode:
    node_id: str
    content: str
    embedding: Tuple[float, ...]
    cost: float
    size: float
    reputation: float
    frequency: int = 1
    priority: float = 1.0
    last_access_round: int = 0


@dataclass
class HistoryEntry:
    hash: bytes
    access_count: int
    last_access_round: int


@dataclass
class AccessResult:
    hit: Optional[CacheNode] = None
    promoted: bool = False


@dataclass
class RetrieveResult:
    node: CacheNode
    similarity: float


def check_unit_norm(embedding: Sequence[float]) -> None:
    norm = math.sqrt(sum(x * x for x in embedding))
    if abs(norm - 1.0) > 1e-6:
        raise BadEmbedding(f"embedding norm {norm} is not 1 within 1e-6")


def dot(a: Sequence[float], b: Sequence[float]) -> float:
    return sum(x * y for x, y in zip(a, b))


class _CacheBase:
    """Shared residency, retrieval and metric plumbing for all policies."""

    policy = "base"

    def __init__(self, config: CacheConfig):
        self.config = config
        self._nodes: Dict[str, CacheNode] = {}
        self._id_by_hash: Dict[bytes, str] = {}
        self.lookups = 0
        self.hits = 0
        self.evictions = 0

    # residency ------------------------------------------------------------

    def resident_count(self) -> int:
        return len(self._nodes)

    def residents(self) -> List[CacheNode]:
        return list(self._nodes.values())

    def get_node(self, node_id: str) -> Optional[CacheNode]:
        return self._nodes.get(node_id)

    def node_for_hash(self, digest: bytes) -> Optional[CacheNode]:
        node_id = self._id_by_hash.get(digest)
        return self._nodes.get(node_id) if node_id is not None else None

    def mean_reputation(self) -> float:
        if not self._nodes:
            return 0.0
        return sum(n.reputation for n in self._nodes.values()) / len(self._nodes)

    def hit_rate(self) -> float:
        return self.hits / self.lookups if self.lookups else 0.0

    # retrieval ---------------------------------------------------------------

    def retrieve(self, query_embedding: Sequence[float],
                 threshold: Optional[float] = None) -> Optional[RetrieveResult]:
        """Best resident by cosine similarity, or None below the threshold."""
        check_unit_norm(query_embedding)
        bar = self.config.similarity_threshold if threshold is None else threshold
        self.lookups += 1
        best: Optional[CacheNode] = None
        best_sim = -2.0
        for node_id in sorted(self._nodes):
            sim = dot(query_embedding, self._nodes[node_id].embedding)
            if sim > best_sim:
                best, best_sim = self._nodes[node_id], sim
        if best is None or best_sim < bar:
            return None
        self.hits += 1
        return RetrieveResult(node=best, similarity=best_sim)

    # mutation hooks implemented per policy ------------------------------------

    def access(self, query_hash: bytes, round_no: int) -> AccessResult:
        raise NotImplementedError

    def insert(self, node: CacheNode) -> List[str]:
        raise NotImplementedError

    def _add_resident(self, node: CacheNode) -> None:
        if node.node_id in self._nodes:
            raise DuplicateNodeId(f"node {node.node_id} already resident")
        self._nodes[node.node_id] = node
        self._id_by_hash[_hash_of_node(node)] = node.node_id

    def _remove_resident(self, node_id: str) -> None:
        node = self._nodes.pop(node_id)
        self._id_by_hash.pop(_hash_of_node(node), None)
        self.evictions += 1


def _hash_of_node(node: CacheNode) -> bytes:
    # node ids are "<hash hex>:<count>"
    return bytes.fromhex(node.node_id.split(":")[0])


def node_id_from(digest: bytes, count: int) -> str:
    return f"{digest.hex()}:{count}"


class ProCache(_CacheBase):
    """Reputation-aware cache: k-admission history queue + priority eviction."""

    policy = "procache"

    def __init__(self, config: CacheConfig):
        super().__init__(config)
        self._history: "OrderedDict[bytes, HistoryEntry]" = OrderedDict()
        self._heap: List[Tuple[float, int, str, int]] = []
        self._version: Dict[str, int] = {}

    def _push(self, node: CacheNode) -> None:
        self._version[node.node_id] = self._version.get(node.node_id, 0) + 1
        heapq.heappush(self._heap, (node.priority, node.last_access_round,
                                    node.node_id, self._version[node.node_id]))

    def _refresh(self, node: CacheNode) -> None:
        node.priority = priority_of(node.frequency, node.cost, node.size,
                                    node.reputation, self.config.r_b)
        self._push(node)

    def access(self, query_hash: bytes, round_no: int) -> AccessResult:
        node = self.node_for_hash(query_hash)
        if node is not None:
            node.frequency += 1
            node.last_access_round = round_no
            self._refresh(node)
            return AccessResult(hit=node)
        entry = self._history.get(query_hash)
        if entry is None:
            entry = HistoryEntry(hash=query_hash, access_count=0, last_access_round=round_no)
            self._history[query_hash] = entry
            while len(self._history) > self.config.history_capacity:
                self._history.popitem(last=False)  # oldest-inserted first
        entry.access_count += 1
        entry.last_access_round = round_no
        if entry.access_count >= self.config.k:
            del self._history[query_hash]
            return AccessResult(promoted=True)
        return AccessResult()

    def insert(self, node: CacheNode) -> List[str]:
        if node.frequency < self.config.k:
            raise ValueError(
                f"node admitted with frequency {node.frequency} < k={self.config.k}")
        node.priority = priority_of(node.frequency, node.cost, node.size,
                                    node.reputation, self.config.r_b)
        self._add_resident(node)
        self._push(node)
        evicted: List[str] = []
        while len(self._nodes) > self.config.capacity:
            evicted.append(self._evict_min())
        return evicted

    def _evict_min(self) -> str:
        while self._heap:
            priority, last_access, node_id, version = heapq.heappop(self._heap)
            node = self._nodes.get(node_id)
            if (node is None or version != self._version.get(node_id)
                    or priority != node.priority or last_access != node.last_access_round):
                continue  # stale heap entry
            self._remove_resident(node_id)
            self._version.pop(node_id, None)
            return node_id
        raise RuntimeError("eviction requested from an empty heap")

    def update_reputation(self, node_id: str, new_reputation: float) -> None:
        node = self._nodes.get(node_id)
        if node is None:
            raise MissingNode(node_id)
        node.reputation = new_reputation
        self._refresh(node)


class LFUCache(_CacheBase):
    """Evict the minimum-frequency resident; admits on first access."""

    policy = "lfu"

    def access(self, query_hash: bytes, round_no: int) -> AccessResult:
        node = self.node_for_hash(query_hash)
        if node is not None:
            node.frequency += 1
            node.last_access_round = round_no
            return AccessResult(hit=node)
        return AccessResult(promoted=True)

    def insert(self, node: CacheNode) -> List[str]:
        self._add_resident(node)
        evicted: List[str] = []
        while len(self._nodes) > self.config.capacity:
            victim = min(self._nodes.values(),
                         key=lambda n: (n.frequency, n.last_access_round, n.node_id))
            self._remove_resident(victim.node_id)
            evicted.append(victim.node_id)
        return evicted

    def update_reputation(self, node_id: str, new_reputation: float) -> None:
        node = self._nodes.get(node_id)
        if node is None:
            raise MissingNode(node_id)
        node.reputation = new_reputation


class LRUKCache(_CacheBase):
    """Evict by oldest k-th most recent access; under-sampled nodes go first."""

    policy = "lruk"

    def __init__(self, config: CacheConfig):
        super().__init__(config)
        self._access_rounds: Dict[str, deque] = {}

    def _record(self, node: CacheNode, round_no: int) -> None:
        rounds = self._access_rounds.setdefault(
            node.node_id, deque(maxlen=self.config.k))
        rounds.append(round_no)

    def access(self, query_hash: bytes, round_no: int) -> AccessResult:
        node = self.node_for_hash(query_hash)
        if node is not None:
            node.frequency += 1
            node.last_access_round = round_no
            self._record(node, round_no)
            return AccessResult(hit=node)
        return AccessResult(promoted=True)

    def insert(self, node: CacheNode) -> List[str]:
        self._add_resident(node)
        self._record(node, node.last_access_round)
        evicted: List[str] = []
        while len(self._nodes) > self.config.capacity:
            # the node being admitted gets a grace pass: with only its insert
            # recorded it would otherwise always be the first victim
            candidates = [n for n in self._nodes.values() if n.node_id != node.node_id]
            if not candidates:
                candidates = list(self._nodes.values())
            victim = min(candidates, key=self._eviction_key)
            self._access_rounds.pop(victim.node_id, None)
            self._remove_resident(victim.node_id)
            evicted.append(victim.node_id)
        return evicted

    def _eviction_key(self, node: CacheNode):
        rounds = self._access_rounds.get(node.node_id, deque())
        has_k = len(rounds) >= self.config.k
        oldest = rounds[0] if rounds else -1
        return (1 if has_k else 0, oldest, node.node_id)

    def update_reputation(self, node_id: str, new_reputation: float) -> None:
        node = self._nodes.get(node_id)
        if node is None:
            raise MissingNode(node_id)
        node.reputation = new_reputation


def make_cache(policy: str, config: CacheConfig) -> _CacheBase:
    policies = {"procache": ProCache, "lfu": LFUCache, "lruk": LRUKCache}
    try:
        return policies[policy](config)
    except KeyError:
        raise ValueError(f"unknown cache policy: {policy!r}") from None
