"""Report parsing and condensation.

Two input surfaces feed the pipeline: detector-native text reports (the
format the scenario generator emits) and flow-record CSV rows mapped
through a column-mapping config. Both normalize into
:class:`~saginguard.model.ThreatRecord`.

Condensation turns a record into a :class:`~saginguard.model.CondensedThreat`
either through a text-generation provider or through a deterministic
rule-based path (regex feature extraction plus a description template),
so the full pipeline runs hermetically without any provider.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyCompletion, MalformedReport, UnknownDetector
from .model import AttackKind, CondensedThreat, DetectorKind, SubnetId, ThreatRecord
from .providers import TextGenProvider

_NATIVE_HEADER = re.compile(
    r"^\[(?P<detector>[A-Za-z]+)\]\s+"
    r"subnet=(?P<subnet>\S+)\s+"
    r"ts=(?P<ts>\d+)\s+"
    r"id=(?P<id>\S+)\s+\|\s?(?P<body>.*)$"
)

_FIELD_TOKEN = re.compile(r"(\w+)=(\S+)")


class ReportFormat(Enum):
    DETECTOR_NATIVE = "DetectorNative"
    FLOW_CSV_ROW = "FlowCsvRow"


@dataclass(frozen=True)
class RulePattern:
    """One feature-extraction rule: a regex plus the capture group to keep."""

    feature_key: str
    pattern: str
    capture_group: int = 1

    def __post_init__(self) -> None:
        try:
            compiled = re.compile(self.pattern)
        except re.error as exc:
            raise ValueError(f"pattern for {self.feature_key!r} does not compile: {exc}") from exc
        if not 0 <= self.capture_group <= compiled.groups:
            raise ValueError(
                f"pattern for {self.feature_key!r} has no capture group {self.capture_group}"
            )
        object.__setattr__(self, "_compiled", compiled)

    @property
    def regex(self) -> re.Pattern[str]:
        return self._compiled  # type: ignore[attr-defined]


class CondensationMode(Enum):
    PROVIDER_BACKED = "ProviderBacked"
    RULE_BASED = "RuleBased"


DEFAULT_DESCRIPTION_TEMPLATE = "{detector} alert on {subnet}: {report_body}"

DEFAULT_PATTERNS = (
    RulePattern("src_ip", r"src_ip=(\S+)"),
    RulePattern("dst_ip", r"dst_ip=(\S+)"),
    RulePattern("dst_port", r"dst_port=(\d+)"),
    RulePattern("protocol", r"protocol=(\w+)"),
    RulePattern("pps", r"pps=(\d+)"),
    RulePattern("drop_ratio", r"drop_ratio=([\d.]+)"),
    RulePattern("uri", r"uri=(\S+)"),
    RulePattern("payload_sig", r"payload_sig=(\S+)"),
    RulePattern("username", r"user(?:name)?=(\S+)"),
    RulePattern("service", r"service=(\S+)"),
    RulePattern("attempts", r"attempts=(\d+)"),
    RulePattern("mac", r"\bmac=(\S+)"),
    RulePattern("claimed_ip", r"\bip=(\S+)"),
    RulePattern("ports_probed", r"ports_probed=(\d+)"),
    RulePattern("uav_id", r"uav=(\S+)"),
    RulePattern("offset_m", r"offset_m=(\d+)"),
    RulePattern("sat_id", r"sat=(\S+)"),
    RulePattern("component", r"component=(\S+)"),
    RulePattern("cve", r"cve=(\S+)"),
)


@dataclass(frozen=True)
class CondensationConfig:
    mode: CondensationMode = CondensationMode.RULE_BASED
    patterns: tuple[RulePattern, ...] = DEFAULT_PATTERNS
    description_template: str = DEFAULT_DESCRIPTION_TEMPLATE

    def __post_init__(self) -> None:
        if self.mode is CondensationMode.RULE_BASED and not self.patterns:
            raise ValueError("RuleBased condensation requires at least one pattern")


@dataclass(frozen=True)
class FlowCsvMapping:
    """Column mapping for flow-record CSV datasets.

    ``feature_columns`` maps dataset column names to feature keys;
    ``label_map`` maps dataset label strings to canonical attack-kind
    strings. Labels in ``skip_labels`` (e.g. benign traffic) drop the row.
    """

    feature_columns: dict[str, str]
    label_column: str | None = None
    label_map: dict[str, str] = field(default_factory=dict)
    skip_labels: tuple[str, ...] = ()
    subnet: SubnetId = SubnetId.parse("Ground-0")
    detector: DetectorKind = DetectorKind.IDS
    delimiter: str = ","
    timestamp_column: str | None = None
    id_prefix: str = "flow"

    @classmethod
    def from_file(cls, path: str | Path) -> "FlowCsvMapping":
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        return cls(
            feature_columns=dict(data["feature_columns"]),
            label_column=data.get("label_column"),
            label_map=dict(data.get("label_map", {})),
            skip_labels=tuple(data.get("skip_labels", ())),
            subnet=SubnetId.parse(data.get("subnet", "Ground-0")),
            detector=DetectorKind(data.get("detector", "IDS")),
            delimiter=data.get("delimiter", ","),
            timestamp_column=data.get("timestamp_column"),
            id_prefix=data.get("id_prefix", "flow"),
        )


def parse_detector_report(
    raw: str,
    fmt: ReportFormat,
    mapping: FlowCsvMapping | None = None,
) -> ThreatRecord:
    """Parse one report into a ThreatRecord.

    For ``FLOW_CSV_ROW`` the input must carry the header row followed by
    exactly one data row (the header is required by the CSV adapter
    contract); the label travels out-of-band via :func:`read_flow_csv`.

    Raises:
        MalformedReport: empty or unparseable input.
        UnknownDetector: detector string outside the closed enumeration.
    """
    if not raw:
        raise MalformedReport("empty report")
    if fmt is ReportFormat.DETECTOR_NATIVE:
        return _parse_native(raw)
    if fmt is ReportFormat.FLOW_CSV_ROW:
        if mapping is None:
            raise MalformedReport("flow CSV parsing requires a column mapping")
        pairs = list(read_flow_csv(io.StringIO(raw), mapping))
        if len(pairs) != 1:
            raise MalformedReport(
                f"expected a header row plus one data row, found {len(pairs)} data rows"
            )
        return pairs[0][0]
    raise MalformedReport(f"unknown report format: {fmt}")


def _parse_native(raw: str) -> ThreatRecord:
    match = _NATIVE_HEADER.match(raw.strip())
    if match is None:
        raise MalformedReport(f"unparseable detector report: {raw[:80]!r}")
    try:
        detector = DetectorKind(match.group("detector"))
    except ValueError:
        raise UnknownDetector(f"unknown detector source: {match.group('detector')!r}") from None
    try:
        subnet = SubnetId.parse(match.group("subnet"))
    except ValueError as exc:
        raise MalformedReport(str(exc)) from exc
    body = match.group("body")
    fields = {}
    for key, value in _FIELD_TOKEN.findall(body):
        fields.setdefault(key, value)
    return ThreatRecord(
        id=match.group("id"),
        subnet=subnet,
        detector=detector,
        timestamp=int(match.group("ts")),
        raw_text=raw.strip(),
        structured_fields=fields,
    )


def read_flow_csv(
    source: str | Path | Iterable[str],
    mapping: FlowCsvMapping,
) -> Iterator[tuple[ThreatRecord, AttackKind | None]]:
    """Yield (record, label) pairs from a flow CSV with a header row.

    The label is the mapped attack kind of the row's label column, kept
    out-of-band so pipeline logic never sees it; unmapped labels become
    ``Other(<label>)`` and rows with a label in ``skip_labels`` are dropped.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            yield from _iter_flow_rows(handle, mapping)
    else:
        yield from _iter_flow_rows(source, mapping)


def _iter_flow_rows(
    lines: Iterable[str],
    mapping: FlowCsvMapping,
) -> Iterator[tuple[ThreatRecord, AttackKind | None]]:
    reader = csv.reader(lines, delimiter=mapping.delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedReport("flow CSV is empty; a header row is required") from None
    index = {name: i for i, name in enumerate(header)}
    for column in mapping.feature_columns:
        if column not in index:
            raise MalformedReport(f"mapped column {column!r} not in CSV header")
    if mapping.label_column is not None and mapping.label_column not in index:
        raise MalformedReport(f"label column {mapping.label_column!r} not in CSV header")

    sequence = 0
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        label: AttackKind | None = None
        if mapping.label_column is not None:
            raw_label = row[index[mapping.label_column]].strip()
            if raw_label in mapping.skip_labels:
                continue
            if raw_label:
                canonical = mapping.label_map.get(raw_label)
                label = AttackKind.parse(canonical) if canonical else AttackKind.other(raw_label)
        fields = {}
        for column, feature_key in mapping.feature_columns.items():
            cell = row[index[column]].strip() if index[column] < len(row) else ""
            if cell:
                fields[feature_key] = cell
        timestamp = 0
        if mapping.timestamp_column is not None and mapping.timestamp_column in index:
            cell = row[index[mapping.timestamp_column]].strip()
            try:
                timestamp = int(float(cell))
            except ValueError:
                timestamp = 0
        record = ThreatRecord(
            id=f"{mapping.id_prefix}-{sequence:06d}",
            subnet=mapping.subnet,
            detector=mapping.detector,
            timestamp=timestamp,
            raw_text=mapping.delimiter.join(row),
            structured_fields=fields,
        )
        sequence += 1
        yield record, label


CONDENSE_SYSTEM_PROMPT = (
    "You condense raw network threat reports into a single clear paragraph "
    "naming the suspected attack and its main indicators. Reply with the "
    "paragraph only."
)


class _BlankOnMissing(dict):
    def __missing__(self, key: str) -> str:
        return ""


def condense(
    record: ThreatRecord,
    config: CondensationConfig,
    provider: TextGenProvider | None = None,
    ground_truth: AttackKind | None = None,
) -> CondensedThreat:
    """Condense one record into a description plus key features.

    Feature extraction applies ``config.patterns`` in order over the raw
    text and the structured fields; the first match per feature key wins
    and misses are silently omitted. The description comes from the
    provider (ProviderBacked) or from the template (RuleBased, a pure
    function of its inputs).
    """
    search_text = record.raw_text
    if record.structured_fields:
        rendered = "\n".join(f"{k}={v}" for k, v in record.structured_fields.items())
        search_text = f"{search_text}\n{rendered}"

    features: dict[str, str] = {}
    for rule in config.patterns:
        if rule.feature_key in features:
            continue
        match = rule.regex.search(search_text)
        if match is not None:
            features[rule.feature_key] = match.group(rule.capture_group)

    if config.mode is CondensationMode.PROVIDER_BACKED:
        if provider is None:
            raise ValueError("ProviderBacked condensation requires a provider")
        description = provider.complete(
            [
                ("system", CONDENSE_SYSTEM_PROMPT),
                ("user", f"Report from {record.detector.value} on subnet {record.subnet}:\n{record.raw_text}"),
            ]
        )
        if not description.strip():
            raise EmptyCompletion("condensation provider returned a blank description")
    else:
        context = _BlankOnMissing(
            id=record.id,
            subnet=str(record.subnet),
            detector=record.detector.value,
            timestamp=str(record.timestamp),
            raw_text=record.raw_text,
            report_body=report_body(record.raw_text),
        )
        context.update(features)
        description = config.description_template.format_map(context)

    return CondensedThreat(
        record_id=record.id,
        description=description,
        key_features=features,
        ground_truth_attack=ground_truth,
    )


def report_body(raw_text: str) -> str:
    """Free-text portion of a native report (after the header separator)."""
    _, sep, body = raw_text.partition(" | ")
    return body if sep else raw_text
