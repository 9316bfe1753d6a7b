"""Key-information extraction and weighted keyword ranking.

Per group: rule patterns pull key-information strings out of each
member, the strings become a TF-IDF matrix (one row per member), the
matrix is scaled column-wise by a term-weight table, and the top-k terms
by weighted column sum form the group's keyword summary. Ties break by
raw term frequency, then lexicographically.

TF is raw count normalized by document length; IDF is the smoothed
``ln((1 + N) / (1 + df)) + 1``, which never divides by zero and keeps
ubiquitous terms above zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyCorpus
from .ingest import RulePattern
from .model import CondensedThreat, KeywordSummary, ThreatGroup

DEFAULT_KEYINFO_PATTERNS = (
    RulePattern("flood", r"((?:syn|udp|http|icmp) flood)"),
    RulePattern("ddos", r"(ddos)", 1),
    RulePattern("sql_injection", r"(sql injection)"),
    RulePattern("arp_spoofing", r"(arp (?:spoofing|poisoning|table conflict))"),
    RulePattern("port_scan", r"(port scan\w*)"),
    RulePattern("brute_force", r"(brute[- ]force|credential stuffing)"),
    RulePattern("gps_spoofing", r"(gps spoofing)"),
    RulePattern("vulnerability", r"(vulnerabilit\w+|exploit attempt)"),
    RulePattern("cve", r"(CVE-\d{4}-\d+)"),
    RulePattern("protocol", r"protocol=(\w+)"),
    RulePattern("service", r"service=(\S+)"),
    RulePattern("component", r"component=(\S+)"),
    RulePattern("dst_ip", r"dst_ip=(\S+)"),
    RulePattern("uav", r"uav=(\S+)"),
    RulePattern("sat", r"sat=(\S+)"),
    RulePattern("saturation", r"(queue saturation)"),
    RulePattern("spoofed_ip", r"\bip=(\S+)"),
)

DEFAULT_TERM_WEIGHT_TABLE = {
    "ddos": 2.0,
    "syn flood": 2.0,
    "udp flood": 2.0,
    "http flood": 2.0,
    "icmp flood": 2.0,
    "sql injection": 2.0,
    "arp spoofing": 2.0,
    "arp poisoning": 2.0,
    "port scan": 2.0,
    "port scanning": 2.0,
    "brute force": 2.0,
    "brute-force": 2.0,
    "credential stuffing": 1.8,
    "gps spoofing": 2.0,
    "queue saturation": 1.5,
    "exploit attempt": 1.8,
}


@dataclass(frozen=True)
class TermWeights:
    """Per-term weights with a default for unlisted terms.

    The shipped table covers the benchmark attack families and is
    editable configuration, not a normative part of the extraction
    procedure.
    """

    weights: dict[str, float] = field(default_factory=dict)
    default_weight: float = 1.0

    def __post_init__(self) -> None:
        for term, weight in self.weights.items():
            if not math.isfinite(weight) or weight < 0:
                raise ValueError(f"weight for {term!r} must be finite and non-negative")
        if not math.isfinite(self.default_weight) or self.default_weight < 0:
            raise ValueError("default_weight must be finite and non-negative")

    def weight_of(self, term: str) -> float:
        return self.weights.get(term, self.default_weight)

    def scaled(self, factor: float) -> "TermWeights":
        return TermWeights(
            weights={t: w * factor for t, w in self.weights.items()},
            default_weight=self.default_weight * factor,
        )

    @classmethod
    def default(cls) -> "TermWeights":
        return cls(weights=dict(DEFAULT_TERM_WEIGHT_TABLE), default_weight=1.0)

    @classmethod
    def from_file(cls, path: str | Path, default_weight: float = 1.0) -> "TermWeights":
        """Load ``term=weight`` lines; '#' starts a comment, blanks ignored.
        A ``default=`` line overrides the default weight."""
        weights: dict[str, float] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                term, sep, value = line.rpartition("=")
                if not sep or not term.strip():
                    raise ValueError(f"{path}:{line_no}: expected 'term=weight'")
                try:
                    numeric = float(value)
                except ValueError:
                    raise ValueError(f"{path}:{line_no}: weight {value!r} is not a number") from None
                if term.strip() == "default":
                    default_weight = numeric
                else:
                    weights[term.strip()] = numeric
        return cls(weights=weights, default_weight=default_weight)


@dataclass(frozen=True)
class TfidfMatrix:
    """Documents-by-terms TF-IDF values with index maps.

    ``values[i, j]`` is the tf-idf of ``terms[j]`` in document ``i``;
    the vocabulary is sorted, so the layout is deterministic.
    """

    values: np.ndarray
    terms: tuple[str, ...]

    @property
    def term_index(self) -> dict[str, int]:
        return {t: j for j, t in enumerate(self.terms)}

    @property
    def n_documents(self) -> int:
        return int(self.values.shape[0])


def extract_key_info(threat: CondensedThreat, patterns: Sequence[RulePattern]) -> list[str]:
    """All pattern matches over the description and key features, in
    pattern order; no match contributes nothing."""
    search_text = threat.description
    if threat.key_features:
        rendered = "\n".join(f"{k}={v}" for k, v in threat.key_features.items())
        search_text = f"{search_text}\n{rendered}"
    found: list[str] = []
    for rule in patterns:
        for match in rule.regex.finditer(search_text):
            found.append(match.group(rule.capture_group))
    return found


def build_tfidf(docs: Sequence[Sequence[str]]) -> TfidfMatrix:
    """TF-IDF matrix over term-list documents.

    tf(t, d) = count(t in d) / len(d); idf(t) = ln((1+N)/(1+df(t))) + 1.
    Documents with no terms produce all-zero rows.

    Raises:
        EmptyCorpus: no documents at all.
    """
    if len(docs) == 0:
        raise EmptyCorpus("TF-IDF needs at least one document")
    vocabulary = sorted({term for doc in docs for term in doc})
    term_index = {t: j for j, t in enumerate(vocabulary)}
    n_docs = len(docs)
    values = np.zeros((n_docs, len(vocabulary)), dtype=float)
    df = np.zeros(len(vocabulary), dtype=float)
    for i, doc in enumerate(docs):
        if not doc:
            continue
        total = len(doc)
        counts: dict[str, int] = {}
        for term in doc:
            counts[term] = counts.get(term, 0) + 1
        for term, count in counts.items():
            j = term_index[term]
            values[i, j] = count / total
            df[j] += 1.0
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0 if vocabulary else df
    values *= idf
    return TfidfMatrix(values=values, terms=tuple(vocabulary))


def apply_weights(matrix: TfidfMatrix, weights: TermWeights) -> TfidfMatrix:
    """Scale each column by its term weight (diagonal right-multiply)."""
    scale = np.array([weights.weight_of(t) for t in matrix.terms], dtype=float)
    return TfidfMatrix(values=matrix.values * scale, terms=matrix.terms)


def top_keywords(
    group: ThreatGroup,
    patterns: Sequence[RulePattern] = DEFAULT_KEYINFO_PATTERNS,
    weights: TermWeights | None = None,
    k: int = 10,
) -> KeywordSummary:
    """Rank a group's key-information terms and keep the top k.

    Score is the column sum of the weighted TF-IDF matrix; equal scores
    order by raw term frequency descending, then lexicographically. A
    group with no extracted key information yields an empty summary.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    if weights is None:
        weights = TermWeights.default()
    docs = [extract_key_info(member, patterns) for member in group.members]
    if not any(docs):
        return KeywordSummary(group_id=group.group_id, keywords=())
    matrix = apply_weights(build_tfidf(docs), weights)
    scores = matrix.values.sum(axis=0)
    frequency: dict[str, int] = {}
    for doc in docs:
        for term in doc:
            frequency[term] = frequency.get(term, 0) + 1
    ranked = sorted(
        ((term, float(scores[j])) for j, term in enumerate(matrix.terms)),
        key=lambda item: (-item[1], -frequency[item[0]], item[0]),
    )
    return KeywordSummary(group_id=group.group_id, keywords=tuple(ranked[:k]))
