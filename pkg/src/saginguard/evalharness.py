"""Strategy-selection evaluation harness.

Evaluation follows a four-option multiple-choice protocol: each item
pairs a threat description with one correct strategy and three
distractors (drawn from other attack kinds' correct strategies), shuffled
deterministically. A provider picks one option per item; accuracy is
reported per attack kind and overall, with unparseable answers counted
as incorrect. A uniform-random chooser lands at the 25% baseline of a
4-to-1 selection.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Literal, Sequence

from .errors import DuplicateOptions, KeyMismatch, ProviderUnavailable, UnparseableChoice
from .model import AttackKind, BENCHMARK_ATTACKS
from .providers import CallableProvider, TextGenProvider
from .strategy import OPTION_LETTERS, choose_option, extract_option_lines


@dataclass(frozen=True)
class McSource:
    """Un-shuffled source item: the correct strategy plus three distractors."""

    threat_description: str
    correct_option: str
    distractors: tuple[str, str, str]
    attack: AttackKind


@dataclass(frozen=True)
class McItem:
    """One shuffled four-option selection item."""

    threat_description: str
    options: tuple[str, str, str, str]
    correct_index: int
    attack: AttackKind

    def __post_init__(self) -> None:
        if len(set(self.options)) != len(self.options):
            raise DuplicateOptions("options must be pairwise distinct")
        if not 0 <= self.correct_index < 4:
            raise ValueError("correct_index must lie in 0..3")


@dataclass(frozen=True)
class AccuracyReport:
    """Per-attack and overall accuracy; unparseable answers are incorrect."""

    per_attack: dict[str, float]
    per_attack_counts: dict[str, tuple[int, int]]  # attack -> (correct, total)
    overall: float
    n_items: int
    n_unparseable: int


@dataclass(frozen=True)
class DeltaReport:
    per_attack: dict[str, float]
    overall: float


def build_mc_dataset(sources: Sequence[McSource], shuffle_seed: int) -> list[McItem]:
    """Shuffle option positions deterministically by seed.

    Raises:
        DuplicateOptions: an item's four options are not pairwise distinct.
    """
    rng = random.Random(shuffle_seed)
    items = []
    for source in sources:
        unshuffled = (source.correct_option,) + source.distractors
        if len(set(unshuffled)) != 4:
            raise DuplicateOptions(
                f"item for {source.attack} has non-distinct options"
            )
        order = list(range(4))
        rng.shuffle(order)
        options = tuple(unshuffled[i] for i in order)
        items.append(
            McItem(
                threat_description=source.threat_description,
                options=options,  # type: ignore[arg-type]
                correct_index=order.index(0),
                attack=source.attack,
            )
        )
    return items


def run_mc_eval(
    dataset: Sequence[McItem],
    provider: TextGenProvider,
    on_provider_error: Literal["count", "abort"] = "count",
) -> AccuracyReport:
    """Evaluate a provider over the dataset.

    Unparseable answers always count as incorrect; provider transport
    failures either count the same way or abort the run, per
    ``on_provider_error``.
    """
    if not dataset:
        raise ValueError("evaluation dataset must be non-empty")
    correct: dict[str, int] = {}
    total: dict[str, int] = {}
    n_unparseable = 0
    for item in dataset:
        key = str(item.attack)
        total[key] = total.get(key, 0) + 1
        try:
            chosen = choose_option(item.threat_description, item.options, provider)
        except UnparseableChoice:
            n_unparseable += 1
            continue
        except ProviderUnavailable:
            if on_provider_error == "abort":
                raise
            n_unparseable += 1
            continue
        if chosen == item.correct_index:
            correct[key] = correct.get(key, 0) + 1
    per_attack = {k: correct.get(k, 0) / total[k] for k in sorted(total)}
    counts = {k: (correct.get(k, 0), total[k]) for k in sorted(total)}
    n_correct = sum(correct.values())
    return AccuracyReport(
        per_attack=per_attack,
        per_attack_counts=counts,
        overall=n_correct / len(dataset),
        n_items=len(dataset),
        n_unparseable=n_unparseable,
    )


def compare_runs(before: AccuracyReport, after: AccuracyReport) -> DeltaReport:
    """Per-attack and overall accuracy deltas (after minus before).

    Raises:
        KeyMismatch: the two reports cover different attack-kind sets.
    """
    if set(before.per_attack) != set(after.per_attack):
        raise KeyMismatch(
            f"attack sets differ: {sorted(before.per_attack)} vs {sorted(after.per_attack)}"
        )
    return DeltaReport(
        per_attack={k: after.per_attack[k] - before.per_attack[k] for k in sorted(before.per_attack)},
        overall=after.overall - before.overall,
    )


def render_delta_table(delta: DeltaReport) -> str:
    width = max([len("attack")] + [len(k) for k in delta.per_attack])
    lines = [f"{'attack':<{width}}  delta"]
    for attack, value in delta.per_attack.items():
        lines.append(f"{attack:<{width}}  {value:+.4f}")
    lines.append(f"{'overall':<{width}}  {delta.overall:+.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Reference providers


def uniform_random_provider(seed: int) -> CallableProvider:
    """Answers a uniformly random option letter; the 25% baseline."""
    rng = random.Random(seed)
    return CallableProvider(lambda messages: rng.choice(OPTION_LETTERS), "uniform-random")


def fixed_option_provider(letter: str = "A") -> CallableProvider:
    if letter not in OPTION_LETTERS:
        raise ValueError("letter must be one of A-D")
    return CallableProvider(lambda messages: letter, f"always-{letter}")


def _options_from_request(messages) -> dict[str, str]:
    user_text = next(text for role, text in messages if role == "user")
    return extract_option_lines(user_text)


def oracle_provider(correct_texts: Sequence[str]) -> CallableProvider:
    """Content-keyed oracle: names the option whose text is a known
    correct strategy, regardless of its shuffled position."""
    known = set(correct_texts)

    def answer(messages) -> str:
        for letter, text in _options_from_request(messages).items():
            if text in known:
                return letter
        return "no option recognized"

    return CallableProvider(answer, "oracle")


def anti_oracle_provider(correct_texts: Sequence[str]) -> CallableProvider:
    """Content-keyed anti-oracle: always names the first wrong option."""
    known = set(correct_texts)

    def answer(messages) -> str:
        for letter in OPTION_LETTERS:
            text = _options_from_request(messages).get(letter)
            if text is not None and text not in known:
                return letter
        return "no option recognized"

    return CallableProvider(answer, "anti-oracle")


# ---------------------------------------------------------------------------
# Synthetic fixtures


_ATTACK_PHRASES = {
    "SqlInjection": (
        "parameterize database queries and deploy a web application firewall",
        "sql injection probes against the login endpoint",
    ),
    "DDoS": (
        "rate-limit traffic at the gateway and enable upstream scrubbing",
        "volumetric flood saturating the uplink",
    ),
    "ArpSpoofing": (
        "enforce dynamic arp inspection and pin critical gateway entries",
        "arp cache poisoning on the local segment",
    ),
    "PortScan": (
        "throttle connection attempts and alert on sequential port probes",
        "sequential scan across the service ports",
    ),
    "BruteForce": (
        "lock accounts after repeated failures and require second factors",
        "credential guessing burst against remote login",
    ),
}


def synthetic_mc_sources(n_items: int, seed: int) -> list[McSource]:
    """Balanced synthetic items across the benchmark attack kinds.

    Correct options are attack-appropriate strategies; distractors are
    other kinds' correct strategies, salted per item so options stay
    pairwise distinct.
    """
    rng = random.Random(seed)
    attacks = list(BENCHMARK_ATTACKS)
    sources = []
    for i in range(n_items):
        attack = attacks[i % len(attacks)]
        strategy_phrase, threat_phrase = _ATTACK_PHRASES[attack.label]
        others = [a for a in attacks if a is not attack]
        rng.shuffle(others)
        distractors = tuple(
            f"case {i}, option {j}: {_ATTACK_PHRASES[other.label][0]}"
            for j, other in enumerate(others[:3])
        )
        sources.append(
            McSource(
                threat_description=f"incident {i}: {threat_phrase}",
                correct_option=f"case {i}: {strategy_phrase}",
                distractors=distractors,  # type: ignore[arg-type]
                attack=attack,
            )
        )
    return sources


# ---------------------------------------------------------------------------
# Serialization


def mc_item_to_dict(item: McItem) -> dict[str, Any]:
    return {
        "threat_description": item.threat_description,
        "options": list(item.options),
        "correct_index": item.correct_index,
        "attack": str(item.attack),
    }


def mc_item_from_dict(data: dict[str, Any]) -> McItem:
    return McItem(
        threat_description=data["threat_description"],
        options=tuple(data["options"]),
        correct_index=int(data["correct_index"]),
        attack=AttackKind.parse(data["attack"]),
    )


def accuracy_report_to_dict(report: AccuracyReport) -> dict[str, Any]:
    return {
        "per_attack": dict(report.per_attack),
        "per_attack_counts": {k: list(v) for k, v in report.per_attack_counts.items()},
        "overall": report.overall,
        "n_items": report.n_items,
        "n_unparseable": report.n_unparseable,
    }


def accuracy_report_from_dict(data: dict[str, Any]) -> AccuracyReport:
    return AccuracyReport(
        per_attack={k: float(v) for k, v in data["per_attack"].items()},
        per_attack_counts={k: (int(v[0]), int(v[1])) for k, v in data["per_attack_counts"].items()},
        overall=float(data["overall"]),
        n_items=int(data["n_items"]),
        n_unparseable=int(data["n_unparseable"]),
    )


def delta_report_to_dict(delta: DeltaReport) -> dict[str, Any]:
    return {"per_attack": dict(delta.per_attack), "overall": delta.overall}
