"""Shared domain types for the threat-analysis pipeline.

Every stage consumes and produces the value types defined here. All of
them are immutable after construction and safe to share across threads.
The canonical on-disk form is line-delimited JSON (one value per line);
the ``*_to_dict`` / ``*_from_dict`` pairs below define that encoding and
round-trip losslessly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator


class Domain(Enum):
    """Network segment of a space-air-ground deployment."""

    SPACE = "Space"
    AIR = "Air"
    GROUND = "Ground"


_DOMAIN_ORDER = {Domain.SPACE: 0, Domain.AIR: 1, Domain.GROUND: 2}


@dataclass(frozen=True)
class SubnetId:
    """One subnet, e.g. ``Ground-0``. Index is unique within a domain."""

    domain: Domain
    index: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"subnet index must be non-negative, got {self.index}")

    def __str__(self) -> str:
        return f"{self.domain.value}-{self.index}"

    @property
    def sort_key(self) -> tuple[int, int]:
        return (_DOMAIN_ORDER[self.domain], self.index)

    @classmethod
    def parse(cls, text: str) -> "SubnetId":
        domain_part, sep, index_part = text.rpartition("-")
        if not sep or not domain_part:
            raise ValueError(f"malformed subnet id: {text!r}")
        try:
            domain = Domain(domain_part)
        except ValueError:
            raise ValueError(f"unknown network domain in subnet id: {text!r}") from None
        try:
            index = int(index_part)
        except ValueError:
            raise ValueError(f"malformed subnet index in subnet id: {text!r}") from None
        return cls(domain, index)


class DetectorKind(Enum):
    """Closed set of report sources. Unknown source strings are a parse error."""

    IDS = "IDS"
    INTELLIGENT_GATEWAY = "IntelligentGateway"
    VULN_SCAN = "VulnScan"
    AIR_INTERFACE_ANOMALY = "AirInterfaceAnomaly"
    EDR = "EDR"
    HONEYNET = "Honeynet"


BENCHMARK_ATTACK_LABELS = (
    "SqlInjection",
    "DDoS",
    "ArpSpoofing",
    "PortScan",
    "BruteForce",
)

KNOWN_ATTACK_LABELS = BENCHMARK_ATTACK_LABELS + (
    "GpsSpoofing",
    "SatelliteVulnerability",
)


@dataclass(frozen=True)
class AttackKind:
    """A named attack family, or ``Other`` with free-form detail text."""

    label: str
    detail: str = ""

    def __post_init__(self) -> None:
        if self.label == "Other":
            if not self.detail:
                raise ValueError("Other attack kind requires detail text")
        elif self.label not in KNOWN_ATTACK_LABELS:
            raise ValueError(f"unknown attack label: {self.label!r}")
        elif self.detail:
            raise ValueError("detail text is only valid for the Other kind")

    def __str__(self) -> str:
        if self.label == "Other":
            return f"Other:{self.detail}"
        return self.label

    @classmethod
    def other(cls, detail: str) -> "AttackKind":
        return cls("Other", detail)

    @classmethod
    def parse(cls, text: str) -> "AttackKind":
        if text.startswith("Other:"):
            return cls.other(text[len("Other:"):])
        return cls(text)


SQL_INJECTION = AttackKind("SqlInjection")
DDOS = AttackKind("DDoS")
ARP_SPOOFING = AttackKind("ArpSpoofing")
PORT_SCAN = AttackKind("PortScan")
BRUTE_FORCE = AttackKind("BruteForce")
GPS_SPOOFING = AttackKind("GpsSpoofing")
SATELLITE_VULNERABILITY = AttackKind("SatelliteVulnerability")

BENCHMARK_ATTACKS = (SQL_INJECTION, DDOS, ARP_SPOOFING, PORT_SCAN, BRUTE_FORCE)


@dataclass(frozen=True)
class ThreatRecord:
    """One raw detector report.

    Construction is intentionally permissive: well-formedness is checked by
    :func:`validate`, which reports violations instead of raising, so that
    malformed records can be inspected rather than lost.
    """

    id: str
    subnet: SubnetId
    detector: DetectorKind
    timestamp: int
    raw_text: str
    structured_fields: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CondensedThreat:
    """Condensed description plus extracted key features for one record.

    ``ground_truth_attack`` exists for evaluation bookkeeping only; no
    correlation, keyword, or strategy operation may read it.
    """

    record_id: str
    description: str
    key_features: dict[str, str] = field(default_factory=dict)
    ground_truth_attack: AttackKind | None = None

    def __post_init__(self) -> None:
        if not self.description:
            raise ValueError("condensed threat description must be non-empty")


INTRA_NET = "IntraNet"
INTER_NET = "InterNet"


@dataclass(frozen=True)
class GroupScope:
    """Either a single-subnet (IntraNet) or multi-subnet (InterNet) scope."""

    kind: str
    subnets: tuple[SubnetId, ...]

    def __post_init__(self) -> None:
        if self.kind == INTRA_NET:
            if len(self.subnets) != 1:
                raise ValueError("IntraNet scope covers exactly one subnet")
        elif self.kind == INTER_NET:
            if len(set(self.subnets)) < 2:
                raise ValueError("InterNet scope requires at least two distinct subnets")
        else:
            raise ValueError(f"unknown scope kind: {self.kind!r}")

    def __str__(self) -> str:
        return f"{self.kind}({','.join(str(s) for s in self.subnets)})"

    @classmethod
    def intra(cls, subnet: SubnetId) -> "GroupScope":
        return cls(INTRA_NET, (subnet,))

    @classmethod
    def inter(cls, subnets: Iterable[SubnetId]) -> "GroupScope":
        ordered = tuple(sorted(set(subnets), key=lambda s: s.sort_key))
        return cls(INTER_NET, ordered)


@dataclass(frozen=True)
class ThreatGroup:
    """A correlated cluster of condensed threats."""

    group_id: str
    members: tuple[CondensedThreat, ...]
    scope: GroupScope

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("threat group must have at least one member")
        ids = [m.record_id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("group members must be pairwise distinct by record_id")


@dataclass(frozen=True)
class KeywordSummary:
    """Ranked weighted keywords for one group, scores non-increasing."""

    group_id: str
    keywords: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        terms = [t for t, _ in self.keywords]
        if len(set(terms)) != len(terms):
            raise ValueError("keyword summary must not contain duplicate terms")
        previous = math.inf
        for term, score in self.keywords:
            if not math.isfinite(score) or score < 0:
                raise ValueError(f"keyword score for {term!r} must be finite and non-negative")
            if score > previous:
                raise ValueError("keyword scores must be non-increasing")
            previous = score


class StrategyKind(Enum):
    SPECIFIC = "Specific"
    CONSOLIDATED = "Consolidated"


@dataclass(frozen=True)
class SecurityStrategy:
    """Strategy prose with provenance (agent role, provider id)."""

    covered_groups: tuple[str, ...]
    text: str
    provenance: tuple[str, str]
    kind: StrategyKind

    def __post_init__(self) -> None:
        if self.kind is StrategyKind.SPECIFIC and len(self.covered_groups) != 1:
            raise ValueError("a Specific strategy covers exactly one group")
        if not self.covered_groups:
            raise ValueError("a strategy must cover at least one group")
        if len(set(self.covered_groups)) != len(self.covered_groups):
            raise ValueError("covered groups must be listed at most once")


class Origin(Enum):
    SEED = "Seed"
    GENERATED = "Generated"
    COLLECTED = "Collected"


@dataclass(frozen=True)
class Instruction:
    """One (prompt, threat info, strategy) triple in the task pool.

    The strategy field may be empty on freshly generated candidates; the
    admission filter enforces non-emptiness before a candidate enters the
    pool.
    """

    prompt: str
    threat_info: str
    strategy: str
    origin: Origin
    round: int

    def __post_init__(self) -> None:
        if self.round < 0:
            raise ValueError("instruction round must be non-negative")
        if self.origin is Origin.SEED and self.round != 0:
            raise ValueError("seed instructions carry round 0")


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    """Violated invariants for one record; empty means well-formed."""

    record_id: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(record: ThreatRecord) -> ValidationReport:
    """Check one record's local invariants. Never raises; reports instead."""
    report = ValidationReport(record_id=record.id)
    if not record.id:
        report.violations.append("id non-empty")
    if not record.raw_text:
        report.violations.append("raw_text non-empty")
    if record.timestamp < 0:
        report.violations.append("timestamp non-negative")
    for key in record.structured_fields:
        if not key:
            report.violations.append("structured_fields keys non-empty")
            break
    return report


def validate_stream(records: Iterable[ThreatRecord]) -> list[ValidationReport]:
    """Validate records plus the cross-record invariants: id uniqueness
    within the run and non-decreasing timestamps per detector stream."""
    reports = []
    seen_ids: set[str] = set()
    last_ts: dict[tuple[SubnetId, DetectorKind], int] = {}
    for record in records:
        report = validate(record)
        if record.id in seen_ids:
            report.violations.append("id unique within a run")
        seen_ids.add(record.id)
        stream = (record.subnet, record.detector)
        if stream in last_ts and record.timestamp < last_ts[stream]:
            report.violations.append("timestamps non-decreasing within one detector stream")
        last_ts[stream] = record.timestamp
        reports.append(report)
    return reports


# ---------------------------------------------------------------------------
# Canonical serialization (line-delimited JSON)


def record_to_dict(record: ThreatRecord) -> dict[str, Any]:
    return {
        "id": record.id,
        "subnet": str(record.subnet),
        "detector": record.detector.value,
        "timestamp": record.timestamp,
        "raw_text": record.raw_text,
        "structured_fields": dict(record.structured_fields),
    }


def record_from_dict(data: dict[str, Any]) -> ThreatRecord:
    return ThreatRecord(
        id=data["id"],
        subnet=SubnetId.parse(data["subnet"]),
        detector=DetectorKind(data["detector"]),
        timestamp=int(data["timestamp"]),
        raw_text=data["raw_text"],
        structured_fields=dict(data["structured_fields"]),
    )


def condensed_to_dict(threat: CondensedThreat) -> dict[str, Any]:
    gt = threat.ground_truth_attack
    return {
        "record_id": threat.record_id,
        "description": threat.description,
        "key_features": dict(threat.key_features),
        "ground_truth_attack": str(gt) if gt is not None else None,
    }


def condensed_from_dict(data: dict[str, Any]) -> CondensedThreat:
    gt = data.get("ground_truth_attack")
    return CondensedThreat(
        record_id=data["record_id"],
        description=data["description"],
        key_features=dict(data["key_features"]),
        ground_truth_attack=AttackKind.parse(gt) if gt is not None else None,
    )


def group_to_dict(group: ThreatGroup) -> dict[str, Any]:
    return {
        "group_id": group.group_id,
        "members": [condensed_to_dict(m) for m in group.members],
        "scope": {
            "kind": group.scope.kind,
            "subnets": [str(s) for s in group.scope.subnets],
        },
    }


def group_from_dict(data: dict[str, Any]) -> ThreatGroup:
    scope_data = data["scope"]
    scope = GroupScope(
        kind=scope_data["kind"],
        subnets=tuple(SubnetId.parse(s) for s in scope_data["subnets"]),
    )
    return ThreatGroup(
        group_id=data["group_id"],
        members=tuple(condensed_from_dict(m) for m in data["members"]),
        scope=scope,
    )


def keywords_to_dict(summary: KeywordSummary) -> dict[str, Any]:
    return {
        "group_id": summary.group_id,
        "keywords": [[term, score] for term, score in summary.keywords],
    }


def keywords_from_dict(data: dict[str, Any]) -> KeywordSummary:
    return KeywordSummary(
        group_id=data["group_id"],
        keywords=tuple((term, float(score)) for term, score in data["keywords"]),
    )


def strategy_to_dict(strategy: SecurityStrategy) -> dict[str, Any]:
    return {
        "covered_groups": list(strategy.covered_groups),
        "text": strategy.text,
        "provenance": list(strategy.provenance),
        "kind": strategy.kind.value,
    }


def strategy_from_dict(data: dict[str, Any]) -> SecurityStrategy:
    role, provider_id = data["provenance"]
    return SecurityStrategy(
        covered_groups=tuple(data["covered_groups"]),
        text=data["text"],
        provenance=(role, provider_id),
        kind=StrategyKind(data["kind"]),
    )


def instruction_to_dict(instruction: Instruction) -> dict[str, Any]:
    return {
        "prompt": instruction.prompt,
        "threat_info": instruction.threat_info,
        "strategy": instruction.strategy,
        "origin": instruction.origin.value,
        "round": instruction.round,
    }


def instruction_from_dict(data: dict[str, Any]) -> Instruction:
    return Instruction(
        prompt=data["prompt"],
        threat_info=data["threat_info"],
        strategy=data["strategy"],
        origin=Origin(data["origin"]),
        round=int(data["round"]),
    )


def dumps_line(data: dict[str, Any]) -> str:
    return json.dumps(data, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path: str | Path, items: Iterable[Any], to_dict: Callable[[Any], dict[str, Any]]) -> int:
    """Write items one JSON object per line; returns the item count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for item in items:
            handle.write(dumps_line(to_dict(item)))
            handle.write("\n")
            count += 1
    return count


def read_jsonl(path: str | Path, from_dict: Callable[[dict[str, Any]], Any]) -> list[Any]:
    items = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                items.append(from_dict(json.loads(line)))
    return items


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)
