"""Strategy generation over the provider abstraction.

Three stages: a deterministic templating step renders one prompt bundle
per threat group (keywords plus condensed descriptions); one specific
strategy per group comes back from a text-generation provider; a
consolidating call merges the specific strategies into a single
integrated strategy covering every group.

The prompt step is pure templating by design: prompts are derived from
already-extracted data, so the stage stays testable offline, and a
provider-backed prompt rewriter can be layered on later without touching
the contract.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyCompletion, MismatchedGroup, UnparseableChoice
from .model import KeywordSummary, SecurityStrategy, StrategyKind, ThreatGroup
from .providers import ProviderSlot, TextGenProvider, resolve_provider

SPECIFIC_ROLE = "specific_strategy"
CONSOLIDATING_ROLE = "consolidating"

OPTION_LETTERS = "ABCD"

_OPTION_TOKEN = re.compile(r"\b(?:([A-D])|([1-4]))\b")
_OPTION_LINE = re.compile(r"^([A-D])\)\s?(.*)$", re.MULTILINE)


@dataclass(frozen=True)
class PromptBundle:
    """Rendered system prompt and threat description for one group."""

    group_id: str
    system_prompt: str
    threat_description: str

    def __post_init__(self) -> None:
        if not self.system_prompt or not self.threat_description:
            raise ValueError("prompt bundle texts must be non-empty")


@dataclass(frozen=True)
class TemplateSet:
    """Prompt templates for every agent role; placeholders are named."""

    specific_system: str = (
        "You are a security strategist for a space-air-ground integrated "
        "network. Analyze the correlated threat group and reply with one "
        "targeted, actionable mitigation strategy."
    )
    threat_description: str = (
        "Threat group {group_id} with scope {scope}.\n"
        "Key indicators: {keywords}.\n"
        "Condensed reports:\n{descriptions}"
    )
    consolidate_system: str = (
        "You are the consolidating security agent for a space-air-ground "
        "integrated network. Merge the specific strategies below into one "
        "coherent, non-contradictory overall strategy covering every group."
    )
    consolidate_item: str = "Strategy for group {group_id}:\n{text}"
    choose_system: str = (
        "You are a network security analyst. Pick the single best "
        "mitigation strategy for the described threat."
    )
    choose_user: str = (
        "Threat:\n{threat_description}\n\n"
        "Options:\n{options}\n\n"
        "Answer with the letter (A, B, C, or D) of the best option."
    )


DEFAULT_TEMPLATES = TemplateSet()


def make_prompt(
    group: ThreatGroup,
    keywords: KeywordSummary,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> PromptBundle:
    """Render the prompt bundle for one group.

    Deterministic templating: the threat description always contains
    every keyword term from the summary plus each member's condensed
    description.

    Raises:
        MismatchedGroup: summary and group ids disagree.
    """
    if keywords.group_id != group.group_id:
        raise MismatchedGroup(
            f"keyword summary {keywords.group_id!r} does not match group {group.group_id!r}"
        )
    keyword_text = ", ".join(term for term, _ in keywords.keywords) or "(none)"
    descriptions = "\n".join(f"- {m.description}" for m in group.members)
    threat_description = templates.threat_description.format(
        group_id=group.group_id,
        scope=str(group.scope),
        keywords=keyword_text,
        descriptions=descriptions,
    )
    return PromptBundle(
        group_id=group.group_id,
        system_prompt=templates.specific_system,
        threat_description=threat_description,
    )


def generate_specific_strategy(
    bundle: PromptBundle,
    provider: TextGenProvider | ProviderSlot,
) -> SecurityStrategy:
    """One provider call per group; the completion becomes the strategy text.

    Raises:
        ProviderUnavailable: propagated from the provider.
        EmptyCompletion: the provider returned a blank completion.
    """
    resolved = resolve_provider(provider)
    text = resolved.complete(
        [("system", bundle.system_prompt), ("user", bundle.threat_description)]
    )
    if not text.strip():
        raise EmptyCompletion(f"blank strategy completion for group {bundle.group_id}")
    return SecurityStrategy(
        covered_groups=(bundle.group_id,),
        text=text,
        provenance=(SPECIFIC_ROLE, resolved.provider_id),
        kind=StrategyKind.SPECIFIC,
    )


def generate_specific_strategies(
    bundles: Sequence[PromptBundle],
    provider: TextGenProvider | ProviderSlot,
    parallel: int = 1,
) -> list[SecurityStrategy]:
    """Fan out over groups, optionally with bounded thread parallelism.
    Output order follows bundle order regardless of completion order."""
    if parallel <= 1 or len(bundles) <= 1:
        return [generate_specific_strategy(b, provider) for b in bundles]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(lambda b: generate_specific_strategy(b, provider), bundles))


def consolidate(
    strategies: Sequence[SecurityStrategy],
    provider: TextGenProvider | ProviderSlot,
    keyword_summaries: Sequence[KeywordSummary] = (),
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> SecurityStrategy:
    """Merge specific strategies into one consolidated strategy.

    Covered groups are the deduplicated union of the inputs' groups in
    first-appearance order. The consolidating agent sees the specific
    strategies plus (optionally) the groups' keyword summaries.
    """
    if not strategies:
        raise ValueError("consolidation requires at least one strategy")
    if any(s.kind is not StrategyKind.SPECIFIC for s in strategies):
        raise ValueError("consolidation inputs must all be Specific strategies")
    covered: list[str] = []
    for s in strategies:
        for group_id in s.covered_groups:
            if group_id not in covered:
                covered.append(group_id)
    sections = [
        templates.consolidate_item.format(group_id=", ".join(s.covered_groups), text=s.text)
        for s in strategies
    ]
    keyword_lines = [
        f"Group {ks.group_id} keywords: {', '.join(t for t, _ in ks.keywords) or '(none)'}"
        for ks in keyword_summaries
    ]
    user_text = "\n\n".join(sections)
    if keyword_lines:
        user_text = user_text + "\n\n" + "\n".join(keyword_lines)
    resolved = resolve_provider(provider)
    text = resolved.complete([("system", templates.consolidate_system), ("user", user_text)])
    if not text.strip():
        raise EmptyCompletion("blank consolidated strategy completion")
    return SecurityStrategy(
        covered_groups=tuple(covered),
        text=text,
        provenance=(CONSOLIDATING_ROLE, resolved.provider_id),
        kind=StrategyKind.CONSOLIDATED,
    )


def render_options(options: Sequence[str]) -> str:
    return "\n".join(f"{OPTION_LETTERS[i]}) {text}" for i, text in enumerate(options))


def extract_option_lines(text: str) -> dict[str, str]:
    """Parse ``A) ...`` lines back out of a rendered choice prompt."""
    return {letter: body for letter, body in _OPTION_LINE.findall(text)}


def parse_choice(text: str) -> int | None:
    """First standalone option token wins: uppercase A-D or digit 1-4.

    Lowercase letters are deliberately not accepted, so prose articles
    cannot masquerade as answers.
    """
    match = _OPTION_TOKEN.search(text)
    if match is None:
        return None
    letter, digit = match.groups()
    if letter is not None:
        return OPTION_LETTERS.index(letter)
    return int(digit) - 1


def choose_option(
    threat_description: str,
    options: Sequence[str],
    provider: TextGenProvider | ProviderSlot,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> int:
    """Ask the provider to pick one of exactly four strategies.

    Raises:
        UnparseableChoice: the provider output names no option token;
            evaluation harnesses count this as incorrect, never drop it.
    """
    if len(options) != 4:
        raise ValueError(f"choose_option requires exactly 4 options, got {len(options)}")
    resolved = resolve_provider(provider)
    user_text = templates.choose_user.format(
        threat_description=threat_description, options=render_options(options)
    )
    answer = resolved.complete([("system", templates.choose_system), ("user", user_text)])
    index = parse_choice(answer)
    if index is None:
        raise UnparseableChoice(f"provider output names no option: {answer[:80]!r}")
    return index
