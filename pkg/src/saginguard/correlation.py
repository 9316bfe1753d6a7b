"""Attack correlation: similarity scoring and threshold grouping.

Condensed threats are compared pairwise on two axes: semantic similarity
between their descriptions (cosine over embeddings) and feature
similarity between their key features (Jaccard over key:value pairs).
The two scores combine through a weighted sum; pairs above the threshold
merge transitively (connected components) into threat groups. The
intra-network mode correlates one subnet's threats; the inter-network
mode pools every subnet's threats and tags groups spanning several
subnets with an InterNet scope.

The default embedder is a deterministic lexical one (term-count vectors
over a fixed vocabulary), so grouping is reproducible without any model
service; a transformer-backed embedding provider plugs in through the
same interface.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .model import CondensedThreat, GroupScope, SubnetId, ThreatGroup

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; drops empty tokens."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


class EmbeddingProvider(Protocol):
    """Maps text to a fixed-dimension vector, stable within one instance."""

    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class LexicalEmbedder:
    """Term-count embedding over the vocabulary of a fixed corpus.

    Tokens outside the construction-time vocabulary embed to zero
    components, so texts fully outside the corpus yield the zero vector
    (handled by the zero-vector rule in :func:`semantic_similarity`).
    """

    def __init__(self, corpus: Iterable[str]):
        vocabulary: dict[str, int] = {}
        for text in corpus:
            for token in tokenize(text):
                if token not in vocabulary:
                    vocabulary[token] = len(vocabulary)
        self._vocabulary = vocabulary
        self.dimension = max(len(vocabulary), 1)

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=float)
        for token in tokenize(text):
            index = self._vocabulary.get(token)
            if index is not None:
                vector[index] += 1.0
        return vector


@dataclass(frozen=True)
class CorrelationConfig:
    """Weights for the similarity combination and the merge threshold.

    The semantic and feature weights must sum to 1. None of these values
    is prescribed by the correlation procedure itself; they are
    deployment configuration.
    """

    semantic_weight: float = 0.5
    feature_weight: float = 0.5
    threshold: float = 0.7

    def __post_init__(self) -> None:
        for name, value in (
            ("semantic_weight", self.semantic_weight),
            ("feature_weight", self.feature_weight),
            ("threshold", self.threshold),
        ):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if abs(self.semantic_weight + self.feature_weight - 1.0) > 1e-12:
            raise ValueError("semantic_weight and feature_weight must sum to 1")


def cosine_clamped(a: np.ndarray, b: np.ndarray) -> float:
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    value = float(np.dot(a, b)) / (norm_a * norm_b)
    return min(1.0, max(0.0, value))


def semantic_similarity(
    a: CondensedThreat,
    b: CondensedThreat,
    embedder: EmbeddingProvider,
) -> float:
    """Cosine similarity of the embedded descriptions, clamped to [0, 1].

    Zero-vector embeddings degrade gracefully: identical texts score 1,
    distinct texts score 0.
    """
    if a.description == b.description:
        return 1.0
    va = embedder.embed(a.description)
    vb = embedder.embed(b.description)
    return cosine_clamped(va, vb)


def feature_similarity(a: CondensedThreat, b: CondensedThreat) -> float:
    """Jaccard index over key:value pairs; 0 when both maps are empty."""
    pairs_a = set(a.key_features.items())
    pairs_b = set(b.key_features.items())
    union = pairs_a | pairs_b
    if not union:
        return 0.0
    return len(pairs_a & pairs_b) / len(union)


def combined_score(s_sem: float, s_feat: float, config: CorrelationConfig) -> float:
    for name, value in (("semantic", s_sem), ("feature", s_feat)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} similarity must lie in [0, 1], got {value}")
    return config.semantic_weight * s_sem + config.feature_weight * s_feat


def pair_score(
    a: CondensedThreat,
    b: CondensedThreat,
    config: CorrelationConfig,
    embedder: EmbeddingProvider,
) -> float:
    return combined_score(
        semantic_similarity(a, b, embedder), feature_similarity(a, b), config
    )


class UnionFind:
    """Disjoint sets over indices 0..n-1 with path compression."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            # keep the smaller index as the representative
            if rx > ry:
                rx, ry = ry, rx
            self.parent[ry] = rx


def _component_member_lists(
    threats: Sequence[CondensedThreat],
    config: CorrelationConfig,
    embedder: EmbeddingProvider,
) -> list[list[CondensedThreat]]:
    """Merge pairs scoring strictly above the threshold; returns components
    ordered by smallest member record_id, members sorted by record_id."""
    n = len(threats)
    vectors = [embedder.embed(t.description) for t in threats]
    uf = UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if threats[i].description == threats[j].description:
                sem = 1.0
            else:
                sem = cosine_clamped(vectors[i], vectors[j])
            score = combined_score(sem, feature_similarity(threats[i], threats[j]), config)
            if score > config.threshold:
                uf.union(i, j)
    components: dict[int, list[CondensedThreat]] = {}
    for i in range(n):
        components.setdefault(uf.find(i), []).append(threats[i])
    member_lists = [sorted(ms, key=lambda t: t.record_id) for ms in components.values()]
    member_lists.sort(key=lambda ms: ms[0].record_id)
    return member_lists


def correlate(
    threats: Sequence[CondensedThreat],
    config: CorrelationConfig,
    embedder: EmbeddingProvider | None = None,
    subnet: SubnetId | None = None,
) -> list[ThreatGroup]:
    """Group one subnet's threats (intra-network mode).

    Every input lands in exactly one group; singletons are allowed. Group
    ids derive from the smallest member record id, so the output is
    invariant under input permutation. ``subnet`` is the subnet every
    input shares; condensed threats do not carry one themselves and the
    group scope requires it.
    """
    if not threats:
        return []
    if subnet is None:
        raise ValueError("intra-network correlation requires the shared subnet for group scope")
    if embedder is None:
        embedder = LexicalEmbedder(t.description for t in threats)
    return [
        _make_group(members, GroupScope.intra(subnet))
        for members in _component_member_lists(threats, config, embedder)
    ]


def correlate_internet(
    per_subnet: dict[SubnetId, Sequence[CondensedThreat]],
    config: CorrelationConfig,
    embedder: EmbeddingProvider | None = None,
) -> list[ThreatGroup]:
    """Pool all subnets' threats and correlate them as one set.

    Groups whose members span two or more subnets carry an InterNet scope
    listing exactly the subnets involved; single-subnet groups stay
    IntraNet. Requires at least two subnets.
    """
    if len(per_subnet) < 2:
        raise ValueError("inter-network correlation requires at least two subnets")
    subnet_of: dict[str, SubnetId] = {}
    pooled: list[CondensedThreat] = []
    for subnet in sorted(per_subnet, key=lambda s: s.sort_key):
        for threat in per_subnet[subnet]:
            subnet_of[threat.record_id] = subnet
            pooled.append(threat)
    if not pooled:
        return []
    if embedder is None:
        embedder = LexicalEmbedder(t.description for t in pooled)
    groups = []
    for members in _component_member_lists(pooled, config, embedder):
        subnets = {subnet_of[m.record_id] for m in members}
        if len(subnets) >= 2:
            scope = GroupScope.inter(subnets)
        else:
            scope = GroupScope.intra(next(iter(subnets)))
        groups.append(_make_group(members, scope))
    return groups


def _make_group(members: list[CondensedThreat], scope: GroupScope) -> ThreatGroup:
    return ThreatGroup(
        group_id=f"grp-{members[0].record_id}",
        members=tuple(members),
        scope=scope,
    )
