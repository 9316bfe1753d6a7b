"""Deterministic desk-scale scenario generation.

Stands in for a full network simulator: it models no physics, mobility,
or protocol behavior, only the threat-report surface the analysis
pipeline consumes. A topology with space/air/ground node counts plus a
list of attack scenarios yields a stream of detector-native text reports
whose bytes depend only on (topology, scenarios, seed).

Event counts and field values come from a repo-specified integer
generator (SplitMix64), not the platform RNG, so identical inputs give
byte-identical streams on every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .ingest import ReportFormat, parse_detector_report
from .model import AttackKind, DetectorKind, SubnetId, ThreatRecord

_MASK64 = (1 << 64) - 1

DEFAULT_START_MS = 1_700_000_000_000

DEFAULT_ALTITUDES_M = {"uav": 100.0, "leo": 600_000.0, "geo": 35_786_000.0}


class SplitMix64:
    """64-bit integer PRNG; the repo's deterministic randomness source."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange needs a positive bound")
        return self.next_u64() % n

    def choice(self, items: Sequence):
        return items[self.randrange(len(items))]


@dataclass(frozen=True)
class Topology:
    """Node counts and altitude table for one deployment."""

    geo_count: int = 1
    leo_count: int = 12
    uav_count: int = 80
    enb_count: int = 240
    ue_count: int = 12000
    altitudes: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_ALTITUDES_M))

    def __post_init__(self) -> None:
        for name in ("geo_count", "leo_count", "uav_count", "enb_count", "ue_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


_TOPOLOGY_KEYS = {"geo_count", "leo_count", "uav_count", "enb_count", "ue_count", "altitudes"}


def build_topology(config: Mapping | None = None) -> Topology:
    """Topology from optional overrides; defaults match the reference
    deployment (1 GEO, 12 LEO, 80 UAV, 240 eNodeB, 12000 UE)."""
    if not config:
        return Topology()
    unknown = set(config) - _TOPOLOGY_KEYS
    if unknown:
        raise ValueError(f"unknown topology keys: {sorted(unknown)}")
    kwargs = dict(config)
    if "altitudes" in kwargs:
        altitudes = dict(DEFAULT_ALTITUDES_M)
        altitudes.update({k: float(v) for k, v in kwargs["altitudes"].items()})
        kwargs["altitudes"] = altitudes
    return Topology(**kwargs)


@dataclass(frozen=True)
class AttackScenario:
    kind: AttackKind
    target_subnets: tuple[SubnetId, ...]
    intensity: float  # events per simulated minute
    duration: float  # simulated minutes

    def __post_init__(self) -> None:
        if not self.target_subnets:
            raise ValueError("scenario needs at least one target subnet")
        if self.intensity <= 0:
            raise ValueError("intensity must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class Emission:
    """Simulator-side truth for one emitted record (evaluation only)."""

    record_id: str
    attack: AttackKind
    detector: DetectorKind
    subnet: SubnetId
    fields: dict[str, str]


def _ip_external(rng: SplitMix64) -> str:
    block = rng.choice(("203.0.113", "198.51.100"))
    return f"{block}.{rng.randrange(254) + 1}"


def _ip_internal(rng: SplitMix64) -> str:
    return f"10.{rng.randrange(250)}.{rng.randrange(250)}.{rng.randrange(254) + 1}"


def _mac(rng: SplitMix64) -> str:
    return "02:" + ":".join(f"{rng.randrange(256):02x}" for _ in range(5))


_PORTS = (80, 443, 53, 22, 8080, 5060)
_SERVICES = ("ssh", "telnet", "http")


@dataclass(frozen=True)
class AttackProfile:
    """Report templates plus field samplers for one attack family.

    ``stable_fields`` is drawn once per scenario (the aspects an attack
    keeps constant: victim, port, asset ids); ``event_fields`` is drawn
    per emitted report.
    """

    templates: tuple[tuple[DetectorKind, str], ...]
    stable_fields: Callable[[SplitMix64], dict[str, str]]
    event_fields: Callable[[SplitMix64], dict[str, str]]


PROFILES: dict[str, AttackProfile] = {
    "DDoS": AttackProfile(
        templates=(
            (
                DetectorKind.IDS,
                "{vector} flood detected: src_ip={src_ip} dst_ip={dst_ip} "
                "dst_port={dst_port} protocol={protocol} pps={pps}",
            ),
            (
                DetectorKind.INTELLIGENT_GATEWAY,
                "uplink queue saturation under {vector} flood: dst_ip={dst_ip} "
                "protocol={protocol} pps={pps} drop_ratio={drop_ratio}",
            ),
        ),
        stable_fields=lambda rng: {
            "dst_ip": _ip_internal(rng),
            "dst_port": str(rng.choice(_PORTS)),
            "protocol": rng.choice(("tcp", "udp")),
            "vector": rng.choice(("syn", "udp", "http", "icmp")),
        },
        event_fields=lambda rng: {
            "src_ip": _ip_external(rng),
            "pps": str(10_000 + rng.randrange(90_000)),
            "drop_ratio": f"0.{10 + rng.randrange(85):02d}",
        },
    ),
    "SqlInjection": AttackProfile(
        templates=(
            (
                DetectorKind.IDS,
                "web attack signature match: sql injection attempt src_ip={src_ip} "
                "dst_ip={dst_ip} uri={uri} payload_sig={payload_sig}",
            ),
            (
                DetectorKind.EDR,
                "sql injection pattern in database query log: username={username} "
                "src_ip={src_ip} uri={uri} payload_sig={payload_sig}",
            ),
        ),
        stable_fields=lambda rng: {
            "dst_ip": _ip_internal(rng),
            "uri": rng.choice(("/login", "/search", "/api/v1/orders")),
            "username": rng.choice(("webapp", "svc_db", "portal")),
        },
        event_fields=lambda rng: {
            "src_ip": _ip_external(rng),
            "payload_sig": f"sig-{rng.randrange(65536):04x}",
        },
    ),
    "ArpSpoofing": AttackProfile(
        templates=(
            (
                DetectorKind.IDS,
                "arp spoofing suspected: ip={claimed_ip} claimed by rogue mac={mac} "
                "gateway dst_ip={dst_ip}",
            ),
            (
                DetectorKind.INTELLIGENT_GATEWAY,
                "arp table conflict: ip={claimed_ip} flapping to mac={mac} "
                "dropped_frames={dropped_frames}",
            ),
        ),
        stable_fields=lambda rng: {
            "claimed_ip": _ip_internal(rng),
            "dst_ip": _ip_internal(rng),
        },
        event_fields=lambda rng: {
            "mac": _mac(rng),
            "dropped_frames": str(5 + rng.randrange(400)),
        },
    ),
    "PortScan": AttackProfile(
        templates=(
            (
                DetectorKind.IDS,
                "port scan detected: src_ip={src_ip} dst_ip={dst_ip} "
                "ports_probed={ports_probed} window_s={window_s}",
            ),
            (
                DetectorKind.HONEYNET,
                "honeypot probed sequentially: src_ip={src_ip} service={service} "
                "ports_probed={ports_probed}",
            ),
        ),
        stable_fields=lambda rng: {
            "dst_ip": _ip_internal(rng),
            "service": rng.choice(_SERVICES),
        },
        event_fields=lambda rng: {
            "src_ip": _ip_external(rng),
            "ports_probed": str(20 + rng.randrange(400)),
            "window_s": str(5 + rng.randrange(55)),
        },
    ),
    "BruteForce": AttackProfile(
        templates=(
            (
                DetectorKind.EDR,
                "brute force login burst: service={service} username={username} "
                "attempts={attempts} src_ip={src_ip}",
            ),
            (
                DetectorKind.HONEYNET,
                "honeypot credential stuffing: service={service} username={username} "
                "attempts={attempts} src_ip={src_ip}",
            ),
        ),
        stable_fields=lambda rng: {
            "service": rng.choice(_SERVICES),
            "username": rng.choice(("admin", "root", "operator")),
        },
        event_fields=lambda rng: {
            "attempts": str(30 + rng.randrange(900)),
            "src_ip": _ip_external(rng),
        },
    ),
    "GpsSpoofing": AttackProfile(
        templates=(
            (
                DetectorKind.AIR_INTERFACE_ANOMALY,
                "gps spoofing indicators: uav={uav_id} offset_m={offset_m} "
                "fix_quality={fix_quality}",
            ),
            (
                DetectorKind.IDS,
                "navigation inconsistency: uav={uav_id} gps spoofing suspected "
                "offset_m={offset_m}",
            ),
        ),
        stable_fields=lambda rng: {
            "uav_id": f"uav-{rng.randrange(80):02d}",
        },
        event_fields=lambda rng: {
            "offset_m": str(50 + rng.randrange(900)),
            "fix_quality": rng.choice(("degraded", "lost", "conflicting")),
        },
    ),
    "SatelliteVulnerability": AttackProfile(
        templates=(
            (
                DetectorKind.VULN_SCAN,
                "vulnerability finding: sat={sat_id} component={component} "
                "cve={cve} severity={severity}",
            ),
            (
                DetectorKind.IDS,
                "exploit attempt against satellite service: sat={sat_id} "
                "component={component} cve={cve} src_ip={src_ip}",
            ),
        ),
        stable_fields=lambda rng: {
            "sat_id": f"leo-{rng.randrange(12):02d}",
            "component": rng.choice(("tmtc", "obc", "transponder", "payload_ctrl")),
            "cve": f"CVE-20{20 + rng.randrange(7)}-{1000 + rng.randrange(9000)}",
        },
        event_fields=lambda rng: {
            "severity": rng.choice(("critical", "high", "medium")),
            "src_ip": _ip_external(rng),
        },
    ),
}


def detector_coverage() -> dict[DetectorKind, int]:
    """How many templates mention each detector (coverage check)."""
    coverage = {kind: 0 for kind in DetectorKind}
    for profile in PROFILES.values():
        for detector, _ in profile.templates:
            coverage[detector] += 1
    return coverage


def _event_count(rng: SplitMix64, intensity: float, duration: float) -> int:
    """Poisson-like count: the expectation plus bounded integer jitter."""
    base = max(1, int(round(intensity * duration)))
    span = max(1, base // 4)
    jitter = rng.randrange(2 * span + 1) - span
    return max(1, base + jitter)


def run_scenario(
    topology: Topology,
    scenarios: Sequence[AttackScenario],
    seed: int,
    start_ms: int = DEFAULT_START_MS,
) -> list[ThreatRecord]:
    """Emit the scenario's threat records; see :func:`run_scenario_detailed`."""
    records, _ = run_scenario_detailed(topology, scenarios, seed, start_ms)
    return records


def run_scenario_detailed(
    topology: Topology,
    scenarios: Sequence[AttackScenario],
    seed: int,
    start_ms: int = DEFAULT_START_MS,
) -> tuple[list[ThreatRecord], list[Emission]]:
    """Generate records plus the emission log (per-record ground truth).

    Timestamps are globally non-decreasing; record ids are
    ``<subnet>-<detector>-<sequence>`` with per-stream sequences, so
    identical inputs reproduce identical bytes. Every emitted line parses
    back through the detector-native report parser.
    """
    if not scenarios:
        raise ValueError("run_scenario requires at least one scenario")
    del topology  # node counts shape the deployment, not the report surface
    rng = SplitMix64(seed)

    staged = []
    for scenario_index, scenario in enumerate(scenarios):
        profile = PROFILES.get(scenario.kind.label)
        if profile is None:
            raise ValueError(f"no report templates for attack kind {scenario.kind}")
        subnets = sorted(scenario.target_subnets, key=lambda s: s.sort_key)
        stable = profile.stable_fields(rng)
        count = _event_count(rng, scenario.intensity, scenario.duration)
        duration_ms = max(1, int(round(scenario.duration * 60_000)))
        for event_index in range(count):
            detector, template = profile.templates[rng.randrange(len(profile.templates))]
            subnet = subnets[rng.randrange(len(subnets))]
            offset = rng.randrange(duration_ms)
            fields = dict(stable)
            fields.update(profile.event_fields(rng))
            staged.append(
                (
                    start_ms + offset,
                    scenario_index,
                    event_index,
                    scenario.kind,
                    detector,
                    subnet,
                    template,
                    fields,
                )
            )

    staged.sort(key=lambda item: (item[0], item[1], item[2]))

    sequences: dict[tuple[SubnetId, DetectorKind], int] = {}
    records: list[ThreatRecord] = []
    emissions: list[Emission] = []
    for ts, _, _, attack, detector, subnet, template, fields in staged:
        stream = (subnet, detector)
        sequences[stream] = sequences.get(stream, 0) + 1
        record_id = f"{subnet}-{detector.value}-{sequences[stream]:04d}"
        body = template.format(**fields)
        line = f"[{detector.value}] subnet={subnet} ts={ts} id={record_id} | {body}"
        records.append(parse_detector_report(line, ReportFormat.DETECTOR_NATIVE))
        emissions.append(
            Emission(
                record_id=record_id,
                attack=attack,
                detector=detector,
                subnet=subnet,
                fields=fields,
            )
        )
    return records, emissions


def emission_to_dict(emission: Emission) -> dict:
    return {
        "record_id": emission.record_id,
        "attack": str(emission.attack),
        "detector": emission.detector.value,
        "subnet": str(emission.subnet),
        "fields": dict(emission.fields),
    }


def load_scenario_file(path: str | Path) -> tuple[Topology, list[AttackScenario], int]:
    """Read a scenario config: topology overrides, scenario list, start time."""
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    unknown = set(data) - {"topology", "scenarios", "start_ms"}
    if unknown:
        raise ValueError(f"unknown scenario file keys: {sorted(unknown)}")
    topology = build_topology(data.get("topology"))
    scenarios = []
    for item in data.get("scenarios", []):
        scenarios.append(
            AttackScenario(
                kind=AttackKind.parse(item["kind"]),
                target_subnets=tuple(SubnetId.parse(s) for s in item["target_subnets"]),
                intensity=float(item["intensity"]),
                duration=float(item["duration"]),
            )
        )
    if not scenarios:
        raise ValueError("scenario file defines no scenarios")
    return topology, scenarios, int(data.get("start_ms", DEFAULT_START_MS))
