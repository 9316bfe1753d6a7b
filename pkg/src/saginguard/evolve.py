"""Self-evolution loop: task pool growth and agent parameter updates.

The task pool starts from a shipped seed set of handwritten instructions
(prompt, threat info, strategy). Each round samples eight instructions
by a round-dependent origin policy, asks the instruction-generation
agent for new candidates, fills in their strategies through the
retrieval-augmented strategy-generation agent, and admits candidates
that clear two filters: maximum ROUGE-L similarity against every pool
member below the threshold, and no blocklisted keyword. Admission
batches commit atomically; a failed round leaves the pool untouched.

Live threats flowing through the strategy stage can be collected into
the pool through the same admission gate. Exported pool snapshots are
the fine-tuning input for a twin agent; the twin replaces the live
strategy provider through an atomic, probe-guarded parameter swap.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

import numpy as np

from .errors import EmptyCompletion, InsufficientStratum, IoFailure, ProbeFailed
from .keyinfo import build_tfidf
from .model import (
    Instruction,
    Origin,
    dumps_line,
    instruction_from_dict,
    instruction_to_dict,
    read_jsonl,
    write_jsonl,
)
from .providers import ProviderSlot, TextGenProvider, resolve_provider
from .strategy import PromptBundle
from .model import SecurityStrategy
from .correlation import tokenize

logger = logging.getLogger(__name__)

BATCH_SIZE = 8

DEFAULT_ROUGE_THRESHOLD = 0.7

# terms signalling tasks a text-only model cannot do; substring match, so
# terms inside longer words ("profile" contains "file") also trigger
DEFAULT_BLOCKLIST = (
    "image",
    "picture",
    "graph",
    "figure",
    "file",
    "map",
    "draw",
    "plot",
    "photo",
)


# ---------------------------------------------------------------------------
# ROUGE-L


def rouge_tokenize(text: str) -> list[str]:
    """Whole-word tokens: lowercase, split on whitespace."""
    return text.lower().split()


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0] * (len(b) + 1)
        for j, token_b in enumerate(b, 1):
            if token_a == token_b:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge_l(candidate: str, reference: str) -> float:
    """LCS-based F-measure between the two token sequences.

    Both empty counts as identical (1.0); exactly one empty is 0.0.
    """
    tokens_c = rouge_tokenize(candidate)
    tokens_r = rouge_tokenize(reference)
    if not tokens_c and not tokens_r:
        return 1.0
    if not tokens_c or not tokens_r:
        return 0.0
    lcs = _lcs_length(tokens_c, tokens_r)
    precision = lcs / len(tokens_c)
    recall = lcs / len(tokens_r)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def admission_text(instruction: Instruction) -> str:
    """The text the ROUGE-L gate compares: prompt plus threat info.
    Strategies are generated after admission and stay out of the gate."""
    return f"{instruction.prompt}\n{instruction.threat_info}"


# ---------------------------------------------------------------------------
# Task pool


class TaskPool:
    """Admitted instructions plus the round counter.

    Appends happen one admission batch at a time under a lock; readers
    see either the pre- or post-batch state. Members are never removed
    or mutated.
    """

    def __init__(self, instructions: Iterable[Instruction] = (), round_no: int = 0):
        self._lock = threading.Lock()
        self.instructions: list[Instruction] = list(instructions)
        self.round = round_no

    def __len__(self) -> int:
        return len(self.instructions)

    def members(self, origin: Origin | None = None) -> list[Instruction]:
        if origin is None:
            return list(self.instructions)
        return [i for i in self.instructions if i.origin is origin]

    def count(self, origin: Origin) -> int:
        return sum(1 for i in self.instructions if i.origin is origin)

    @property
    def origin_counts(self) -> dict[str, int]:
        counts = {origin.value: 0 for origin in Origin}
        for i in self.instructions:
            counts[i.origin.value] += 1
        return counts

    def add(self, instruction: Instruction) -> None:
        """Append one admitted member (collect path)."""
        with self._lock:
            self.instructions.append(instruction)

    def commit_batch(self, admitted: Sequence[Instruction], round_no: int) -> None:
        """Atomically append a round's admissions and advance the counter."""
        with self._lock:
            self.instructions.extend(admitted)
            self.round = round_no

    def state_lines(self) -> list[str]:
        lines = [dumps_line(instruction_to_dict(i)) for i in self.instructions]
        lines.append(dumps_line({"round": self.round}))
        return lines

    def state_digest(self) -> str:
        payload = "\n".join(self.state_lines()).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def seed_instructions_path() -> Path:
    return Path(__file__).parent / "data" / "seed_instructions.jsonl"


def load_seed_instructions(path: str | Path | None = None) -> list[Instruction]:
    """The shipped seed set (or a replacement file in the same format)."""
    seed_path = Path(path) if path is not None else seed_instructions_path()
    seeds = read_jsonl(seed_path, instruction_from_dict)
    for seed in seeds:
        if seed.origin is not Origin.SEED:
            raise ValueError(f"seed file contains a non-seed instruction: {seed.prompt[:40]!r}")
    return seeds


def seeded_pool(path: str | Path | None = None) -> TaskPool:
    return TaskPool(load_seed_instructions(path))


# ---------------------------------------------------------------------------
# Admission


@dataclass(frozen=True)
class AdmissionDecision:
    accepted: bool
    reason_kind: str | None = None  # "empty" | "blocklist" | "rouge"
    reason: str | None = None
    max_rouge: float | None = None


def _pool_members(pool: "TaskPool | Sequence[Instruction]") -> Sequence[Instruction]:
    if isinstance(pool, TaskPool):
        return pool.instructions
    return pool


def admit(
    candidate: Instruction,
    pool: "TaskPool | Sequence[Instruction]",
    blocklist: Sequence[str] = DEFAULT_BLOCKLIST,
    rouge_threshold: float = DEFAULT_ROUGE_THRESHOLD,
) -> AdmissionDecision:
    """Gate one candidate against the pool.

    Rejects on any empty text field, on a blocklisted term appearing
    (case-insensitive substring over all three fields), or when the
    maximum ROUGE-L against any existing member reaches the threshold.
    """
    for field_name, value in (
        ("prompt", candidate.prompt),
        ("threat_info", candidate.threat_info),
        ("strategy", candidate.strategy),
    ):
        if not value.strip():
            return AdmissionDecision(False, "empty", f"empty {field_name}")
    haystack = f"{candidate.prompt}\n{candidate.threat_info}\n{candidate.strategy}".lower()
    for term in blocklist:
        if term.lower() in haystack:
            return AdmissionDecision(False, "blocklist", f"blocklisted term {term!r}")
    text = admission_text(candidate)
    max_rouge = 0.0
    for member in _pool_members(pool):
        score = rouge_l(text, admission_text(member))
        if score > max_rouge:
            max_rouge = score
        if max_rouge >= rouge_threshold:
            return AdmissionDecision(
                False,
                "rouge",
                f"ROUGE-L {max_rouge:.4f} >= {rouge_threshold}",
                max_rouge,
            )
    return AdmissionDecision(True, None, None, max_rouge)


# ---------------------------------------------------------------------------
# Sampling policy


def policy_counts(round_no: int, has_realtime: bool) -> dict[Origin, int]:
    """Origin mix for one batch of eight.

    Round one samples handwritten seeds only; later rounds mix five seeds
    with three generated, or, when real-time collections are available,
    four seeds, two generated, and two collected.
    """
    if round_no <= 1:
        return {Origin.SEED: 8, Origin.GENERATED: 0, Origin.COLLECTED: 0}
    if has_realtime:
        return {Origin.SEED: 4, Origin.GENERATED: 2, Origin.COLLECTED: 2}
    return {Origin.SEED: 5, Origin.GENERATED: 3, Origin.COLLECTED: 0}


def sample_batch(
    pool: TaskPool,
    round_no: int,
    has_realtime: bool,
    rng: random.Random,
) -> list[Instruction]:
    """Draw eight instructions, uniform without replacement per stratum.

    Raises:
        InsufficientStratum: a required stratum has too few members.
    """
    policy = policy_counts(round_no, has_realtime)
    batch: list[Instruction] = []
    for origin in (Origin.SEED, Origin.GENERATED, Origin.COLLECTED):
        needed = policy[origin]
        if needed == 0:
            continue
        members = pool.members(origin)
        if len(members) < needed:
            raise InsufficientStratum(origin.value, needed, len(members))
        batch.extend(rng.sample(members, needed))
    return batch


# ---------------------------------------------------------------------------
# Generation agents


INSTRUCTION_GEN_SYSTEM = (
    "You expand a pool of network security analysis tasks. Given the "
    "example tasks, invent new, materially different tasks in the same "
    "style. Reply with a JSON array of objects, each carrying the string "
    "fields \"prompt\" and \"threat_info\"."
)

STRATEGY_GEN_SYSTEM = (
    "You are a senior security strategist with access to a knowledge "
    "base. Using the supplied knowledge and your judgment, write one "
    "concrete mitigation strategy for the threat."
)


def render_instruction_examples(batch: Sequence[Instruction]) -> str:
    parts = []
    for i, instruction in enumerate(batch, 1):
        parts.append(
            f"Example {i}:\nPrompt: {instruction.prompt}\nThreat info: {instruction.threat_info}"
        )
    return "\n\n".join(parts)


def generate_instructions(
    batch: Sequence[Instruction],
    provider: TextGenProvider | ProviderSlot,
    round_no: int,
) -> list[Instruction]:
    """Ask the instruction-generation agent for new candidates.

    Candidates come back with origin Generated, the current round, and an
    empty strategy (filled later by :func:`generate_strategy`). Malformed
    provider output yields zero candidates and a log line, never an error.
    """
    if len(batch) != BATCH_SIZE:
        raise ValueError(f"instruction generation expects a batch of {BATCH_SIZE}")
    resolved = resolve_provider(provider)
    completion = resolved.complete(
        [
            ("system", INSTRUCTION_GEN_SYSTEM),
            ("user", render_instruction_examples(batch)),
        ]
    )
    candidates = []
    for item in _parse_candidate_array(completion):
        prompt = item.get("prompt")
        threat_info = item.get("threat_info")
        if isinstance(prompt, str) and isinstance(threat_info, str) and prompt and threat_info:
            candidates.append(
                Instruction(
                    prompt=prompt,
                    threat_info=threat_info,
                    strategy="",
                    origin=Origin.GENERATED,
                    round=round_no,
                )
            )
        else:
            logger.warning("skipping malformed candidate item: %r", item)
    return candidates


def _parse_candidate_array(text: str) -> list[dict[str, Any]]:
    for payload in (text, text[text.find("[") : text.rfind("]") + 1]):
        if not payload:
            continue
        try:
            data = json.loads(payload)
        except json.JSONDecodeError:
            continue
        if isinstance(data, list):
            return [item for item in data if isinstance(item, dict)]
        break
    logger.warning("instruction generation output is not a JSON array; ignoring")
    return []


class KnowledgeStore(Protocol):
    """Document store with top-k relevance retrieval."""

    def add(self, document: str) -> None: ...

    def retrieve(self, query: str, k: int) -> list[str]: ...


class LexicalKnowledgeStore:
    """Deterministic store ranking documents by TF-IDF cosine relevance.

    Stands in for a crawled vector database; documents are loaded
    explicitly (CLI or code) and ties break by insertion order.
    """

    def __init__(self, documents: Iterable[str] = ()):
        self._documents: list[str] = []
        self._matrix = None
        for document in documents:
            self.add(document)

    def add(self, document: str) -> None:
        self._documents.append(document)
        self._matrix = None

    def __len__(self) -> int:
        return len(self._documents)

    def retrieve(self, query: str, k: int) -> list[str]:
        if k <= 0 or not self._documents:
            return []
        if self._matrix is None:
            self._matrix = build_tfidf([tokenize(d) for d in self._documents])
        matrix = self._matrix
        query_tokens = tokenize(query)
        scores = np.zeros(len(self._documents), dtype=float)
        if query_tokens and matrix.terms:
            index = matrix.term_index
            counts: dict[int, int] = {}
            for token in query_tokens:
                j = index.get(token)
                if j is not None:
                    counts[j] = counts.get(j, 0) + 1
            if counts:
                query_vector = np.zeros(len(matrix.terms), dtype=float)
                for j, count in counts.items():
                    query_vector[j] = count / len(query_tokens)
                doc_norms = np.linalg.norm(matrix.values, axis=1)
                query_norm = np.linalg.norm(query_vector)
                dots = matrix.values @ query_vector
                with np.errstate(invalid="ignore", divide="ignore"):
                    scores = np.where(
                        (doc_norms > 0) & (query_norm > 0),
                        dots / (doc_norms * query_norm),
                        0.0,
                    )
        order = sorted(range(len(self._documents)), key=lambda i: (-scores[i], i))
        return [self._documents[i] for i in order[:k]]


def generate_strategy(
    threat_info: str,
    provider: TextGenProvider | ProviderSlot,
    store: KnowledgeStore,
    k: int = 3,
) -> str:
    """Retrieval-augmented strategy generation.

    The provider request embeds the top-k retrieved documents verbatim;
    an empty store simply contributes no documents.
    """
    documents = store.retrieve(threat_info, k)
    if documents:
        knowledge = "\n---\n".join(documents)
    else:
        knowledge = "(no knowledge documents retrieved)"
    resolved = resolve_provider(provider)
    completion = resolved.complete(
        [
            ("system", STRATEGY_GEN_SYSTEM),
            (
                "user",
                f"Security knowledge:\n{knowledge}\n\nThreat:\n{threat_info}\n\n"
                "Write the mitigation strategy.",
            ),
        ]
    )
    if not completion.strip():
        raise EmptyCompletion("strategy generation returned a blank completion")
    return completion


# ---------------------------------------------------------------------------
# Real-time collection


def collect_realtime(
    bundle: PromptBundle,
    strategy: SecurityStrategy,
    pool: TaskPool,
    blocklist: Sequence[str] = DEFAULT_BLOCKLIST,
    rouge_threshold: float = DEFAULT_ROUGE_THRESHOLD,
    log: "RoundLog | None" = None,
) -> AdmissionDecision:
    """Wrap a live prompt/threat/strategy into a Collected instruction and
    route it through the admission gate; accepted members join the pool."""
    candidate = Instruction(
        prompt=bundle.system_prompt,
        threat_info=bundle.threat_description,
        strategy=strategy.text,
        origin=Origin.COLLECTED,
        round=pool.round,
    )
    decision = admit(candidate, pool, blocklist, rouge_threshold)
    if decision.accepted:
        pool.add(candidate)
    if log is not None:
        log.append(_candidate_event("collect", candidate, decision))
    return decision


# ---------------------------------------------------------------------------
# Export / import


@dataclass(frozen=True)
class ExportReport:
    path: str
    count: int
    origin_counts: dict[str, int]


def export_training_dataset(pool: TaskPool, destination: str | Path) -> ExportReport:
    """Write the pool in the canonical line format; re-importable losslessly.

    Raises:
        ValueError: empty pool.
        IoFailure: the file could not be written.
    """
    if len(pool) == 0:
        raise ValueError("cannot export an empty pool")
    try:
        count = write_jsonl(destination, pool.instructions, instruction_to_dict)
    except OSError as exc:
        raise IoFailure(f"export to {destination} failed: {exc}") from exc
    return ExportReport(path=str(destination), count=count, origin_counts=pool.origin_counts)


def import_training_dataset(path: str | Path) -> TaskPool:
    """Rebuild a pool from an export. The round counter is restored as the
    maximum member round (the counter itself is runtime state)."""
    try:
        instructions = read_jsonl(path, instruction_from_dict)
    except OSError as exc:
        raise IoFailure(f"import from {path} failed: {exc}") from exc
    round_no = max((i.round for i in instructions), default=0)
    return TaskPool(instructions, round_no)


# ---------------------------------------------------------------------------
# Parameter swap


@dataclass(frozen=True)
class SwapReport:
    previous_provider: str
    new_provider: str


PROBE_MESSAGES = (("system", "health probe"), ("user", "ping"))


def swap_parameters(slot: ProviderSlot, twin_provider: TextGenProvider) -> SwapReport:
    """Atomically route subsequent strategy calls to the twin provider.

    The twin must answer a probe request first; on probe failure the
    current provider stays installed.

    Raises:
        ProbeFailed: the twin raised or answered blank.
    """
    try:
        response = twin_provider.complete(list(PROBE_MESSAGES))
    except Exception as exc:
        raise ProbeFailed(f"twin provider probe raised: {exc}") from exc
    if not response.strip():
        raise ProbeFailed("twin provider probe returned a blank completion")
    previous = slot.swap(twin_provider)
    return SwapReport(previous_provider=previous.provider_id, new_provider=twin_provider.provider_id)


# ---------------------------------------------------------------------------
# Round orchestration


class RoundLog:
    """Append-only event log, in memory and optionally on disk.

    Events carry enough to replay every admission decision (see
    :func:`verify_admission_log`).
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[dict[str, Any]] = []

    def append(self, event: dict[str, Any]) -> None:
        self.events.append(event)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8", newline="\n") as handle:
                handle.write(dumps_line(event))
                handle.write("\n")


def _candidate_event(
    event: str, candidate: Instruction, decision: AdmissionDecision
) -> dict[str, Any]:
    return {
        "event": event,
        "origin": candidate.origin.value,
        "round": candidate.round,
        "prompt": candidate.prompt,
        "threat_info": candidate.threat_info,
        "strategy": candidate.strategy,
        "accepted": decision.accepted,
        "reason_kind": decision.reason_kind,
        "reason": decision.reason,
        "max_rouge": decision.max_rouge,
    }


@dataclass(frozen=True)
class EvolveConfig:
    blocklist: tuple[str, ...] = DEFAULT_BLOCKLIST
    rouge_threshold: float = DEFAULT_ROUGE_THRESHOLD
    retrieval_k: int = 3
    # None = auto: real-time data counts as available when any Collected
    # member exists in the pool
    use_realtime: bool | None = None
    export_path: str | None = None
    export_every_n_rounds: int | None = None
    swap_every_n_rounds: int | None = None


@dataclass(frozen=True)
class EvolveProviders:
    instruction: TextGenProvider
    strategy_generation: TextGenProvider
    live_slot: ProviderSlot | None = None
    twin: TextGenProvider | None = None


@dataclass(frozen=True)
class RoundReport:
    round: int
    policy: dict[str, int]
    n_candidates: int
    admitted: int
    rejected_by_reason: dict[str, int]
    pool_size: int
    export: ExportReport | None = None
    swap: SwapReport | None = None
    swap_error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "policy": dict(self.policy),
            "n_candidates": self.n_candidates,
            "admitted": self.admitted,
            "rejected_by_reason": dict(self.rejected_by_reason),
            "pool_size": self.pool_size,
            "export": None if self.export is None else {
                "path": self.export.path,
                "count": self.export.count,
                "origin_counts": dict(self.export.origin_counts),
            },
            "swap": None if self.swap is None else {
                "previous_provider": self.swap.previous_provider,
                "new_provider": self.swap.new_provider,
            },
            "swap_error": self.swap_error,
        }


def evolution_round(
    pool: TaskPool,
    providers: EvolveProviders,
    store: KnowledgeStore,
    config: EvolveConfig,
    rng: random.Random,
    log: RoundLog | None = None,
) -> RoundReport:
    """Run one full self-evolution round.

    Sample by policy, generate candidate instructions, fill their
    strategies with retrieval augmentation, filter, then commit the
    accepted batch atomically and advance the round counter. Provider
    errors propagate and leave the pool byte-identical to its pre-round
    state.
    """
    round_no = pool.round + 1
    if config.use_realtime is None:
        has_realtime = pool.count(Origin.COLLECTED) > 0
    else:
        has_realtime = config.use_realtime
    policy = policy_counts(round_no, has_realtime)

    batch = sample_batch(pool, round_no, has_realtime, rng)
    if log is not None:
        log.append(
            {
                "event": "round_start",
                "round": round_no,
                "pool_size": len(pool),
                "policy": {origin.value: n for origin, n in policy.items()},
            }
        )

    candidates = generate_instructions(batch, providers.instruction, round_no)
    filled = [
        replace(
            candidate,
            strategy=generate_strategy(
                candidate.threat_info, providers.strategy_generation, store, config.retrieval_k
            ),
        )
        for candidate in candidates
    ]

    admitted: list[Instruction] = []
    staging: list[Instruction] = list(pool.instructions)
    rejected: Counter[str] = Counter()
    for candidate in filled:
        decision = admit(candidate, staging, config.blocklist, config.rouge_threshold)
        if log is not None:
            log.append(_candidate_event("candidate", candidate, decision))
        if decision.accepted:
            admitted.append(candidate)
            staging.append(candidate)
        else:
            rejected[decision.reason_kind or "unknown"] += 1

    pool.commit_batch(admitted, round_no)

    export_report = None
    if (
        config.export_path
        and config.export_every_n_rounds
        and round_no % config.export_every_n_rounds == 0
    ):
        export_report = export_training_dataset(pool, config.export_path)

    swap_report = None
    swap_error = None
    if (
        config.swap_every_n_rounds
        and round_no % config.swap_every_n_rounds == 0
        and providers.live_slot is not None
        and providers.twin is not None
    ):
        try:
            swap_report = swap_parameters(providers.live_slot, providers.twin)
        except ProbeFailed as exc:
            swap_error = str(exc)

    report = RoundReport(
        round=round_no,
        policy={origin.value: n for origin, n in policy.items()},
        n_candidates=len(filled),
        admitted=len(admitted),
        rejected_by_reason=dict(rejected),
        pool_size=len(pool),
        export=export_report,
        swap=swap_report,
        swap_error=swap_error,
    )
    if log is not None:
        log.append({"event": "round_end", **report.to_dict()})
    return report


def run_evolution(
    pool: TaskPool,
    providers: EvolveProviders,
    store: KnowledgeStore,
    config: EvolveConfig,
    rounds: int,
    seed: int,
    log: RoundLog | None = None,
) -> list[RoundReport]:
    rng = random.Random(seed)
    return [evolution_round(pool, providers, store, config, rng, log) for _ in range(rounds)]


def verify_admission_log(
    seeds: Sequence[Instruction],
    events: Iterable[dict[str, Any]],
    rouge_threshold: float = DEFAULT_ROUGE_THRESHOLD,
) -> list[str]:
    """Replay admission decisions from round logs.

    Rebuilds the pool from the seed set and the logged admissions, and
    recomputes every admitted member's maximum ROUGE-L against the pool
    as it stood at admission time. Returns human-readable violations;
    empty means the below-threshold property held throughout.
    """
    violations: list[str] = []
    members: list[Instruction] = list(seeds)
    for event in events:
        if event.get("event") not in ("candidate", "collect"):
            continue
        candidate = Instruction(
            prompt=event["prompt"],
            threat_info=event["threat_info"],
            strategy=event["strategy"],
            origin=Origin(event["origin"]),
            round=int(event["round"]),
        )
        if not event["accepted"]:
            continue
        text = admission_text(candidate)
        max_rouge = max(
            (rouge_l(text, admission_text(m)) for m in members), default=0.0
        )
        if max_rouge >= rouge_threshold:
            violations.append(
                f"admitted candidate at ROUGE-L {max_rouge:.4f} >= {rouge_threshold}: "
                f"{candidate.prompt[:60]!r}"
            )
        members.append(candidate)
    return violations
