"""Length-instructed benchmark construction.

The target length of a prompt is the shortest reference generation's word
count, and that shortest generation is the baseline the model under test
is compared against.  Ties between reference models go to the
lexicographically smallest model label.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .datamodel import BenchmarkEntry, ReferenceGeneration, ValidationError
from .lift import render_template
from .wordcount import count_words

logger = logging.getLogger(__name__)

DEFAULT_FACTORS = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)

_UNIT = r"(?:words?|sentences?|paragraphs?|characters?|chars?|lines?|bullet points?|tokens?)"
_UNIT_ONE = r"(?:word|sentence|paragraph|character|line|token)"
_NUM = r"(?:\d+|one|two|three|four|five|six|seven|eight|nine|ten|twenty|fifty|hundred)"
_CONSTRAINT_PATTERNS = [
    re.compile(p, re.IGNORECASE)
    for p in (
        rf"\b(?:less|fewer|no more|not more|shorter)\s+than\s+{_NUM}\s+{_UNIT}\b",
        rf"\b(?:at most|up to|maximum of|max(?:imum)?|limit(?:ed)? to|within|under)\s+{_NUM}\s+{_UNIT}\b",
        rf"\b{_NUM}\s+{_UNIT}\s+(?:or less|or fewer|max(?:imum)?|at most|limit)\b",
        rf"\b(?:in|using|with|use)\s+(?:exactly\s+|only\s+|about\s+|around\s+)?{_NUM}\s+{_UNIT}\b",
        rf"\b{_UNIT}\s+(?:limit|count)\s*(?:of|:)?\s*{_NUM}\b",
        rf"\b{_NUM}[- ]{_UNIT_ONE}\s+(?:limit|maximum|summary|description|essay|paragraph|story|poem|answer|response)\b",
    )
]


class BenchmarkError(ValidationError):
    """Inputs cannot form a benchmark (e.g. prompts without references)."""


def group_references(refs: Iterable[ReferenceGeneration]) -> dict[str, list[tuple[int, ReferenceGeneration]]]:
    """Map prompt id -> [(word count, reference)], sorted by (count, label)."""
    grouped: dict[str, list[tuple[int, ReferenceGeneration]]] = defaultdict(list)
    for ref in refs:
        grouped[ref.prompt_id].append((count_words(ref.response), ref))
    for rows in grouped.values():
        rows.sort(key=lambda r: (r[0], r[1].model_label))
    return dict(grouped)


def detect_preexisting_constraint(prompt: str) -> bool:
    """Heuristic: does *prompt* already state its own length limit?

    Matches a number next to a unit such as words or sentences together
    with a bounding phrase ("less than", "at most", "in N words", ...).
    False positives are expected; pass an explicit exclusion list instead
    when that matters.
    """
    return any(p.search(prompt) for p in _CONSTRAINT_PATTERNS)


def auto_exclusions(prompts: Mapping[str, str]) -> set[str]:
    return {pid for pid, text in prompts.items() if detect_preexisting_constraint(text)}


def _check_refs(ids: Iterable[str], grouped: Mapping[str, list], k: int = 1) -> None:
    missing = sorted(pid for pid in ids if len(grouped.get(pid, ())) < k)
    if missing:
        what = "no reference generations" if k == 1 else f"fewer than {k} reference generations"
        raise BenchmarkError(f"{len(missing)} prompt(s) have {what}: {', '.join(missing)}")


def build_benchmark(
    prompts: Mapping[str, str],
    refs: Iterable[ReferenceGeneration],
    exclusions: Iterable[str] = (),
) -> list[BenchmarkEntry]:
    """One entry per non-excluded prompt, ordered by prompt id."""
    excluded = set(exclusions)
    grouped = group_references(refs)
    stray = sorted(set(grouped) - set(prompts))
    if stray:
        logger.warning("ignoring references for %d unknown prompt id(s)", len(stray))
    ids = sorted(pid for pid in prompts if pid not in excluded)
    _check_refs(ids, grouped)
    entries = []
    for pid in ids:
        length, best = grouped[pid][0]
        entries.append(_entry(pid, prompts[pid], max(length, 1), best))
    return entries


def build_multi_constraint(
    prompts: Mapping[str, str],
    refs: Iterable[ReferenceGeneration],
    k: int,
    exclusions: Iterable[str] = (),
) -> list[BenchmarkEntry]:
    """k entries per prompt, one per reference length.

    The k shortest references (by word count, then label) each contribute
    their length as a constraint.  Entry ids are ``<prompt_id>#c<j>`` with
    j = 1..k in ascending constraint order; the baseline of each entry is
    the shortest reference, which complies with every constraint.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    excluded = set(exclusions)
    grouped = group_references(refs)
    ids = sorted(pid for pid in prompts if pid not in excluded)
    _check_refs(ids, grouped, k)
    entries = []
    for pid in ids:
        chosen = grouped[pid][:k]
        for j, (length, _) in enumerate(chosen, 1):
            target = max(length, 1)
            baseline = _shortest_compliant(chosen, target)
            entries.append(_entry(f"{pid}#c{j}", prompts[pid], target, baseline))
    return entries


def _shortest_compliant(rows: Sequence[tuple[int, ReferenceGeneration]], target: int) -> ReferenceGeneration | None:
    for length, ref in rows:
        if length <= target:
            return ref
    return None


def _entry(entry_id: str, prompt: str, target: int, baseline: ReferenceGeneration | None) -> BenchmarkEntry:
    return BenchmarkEntry(
        id=entry_id,
        original_prompt=prompt,
        li_prompt=render_template(prompt, target),
        target_len=target,
        baseline_response=baseline.response if baseline else None,
        baseline_source=baseline.model_label if baseline else None,
    )


def scale_target(target_len: int, factor: float) -> int:
    """``max(1, round_half_up(factor * target_len))``, computed in decimal."""
    scaled = (Decimal(str(factor)) * target_len).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return max(1, int(scaled))


def prompt_id_of(entry_id: str) -> str:
    """Strip the ``#c<j>`` suffix of multi-constraint entries."""
    return re.sub(r"#c\d+$", "", entry_id)


def scale_benchmark(
    bench: Sequence[BenchmarkEntry],
    factor: float,
    refs: Iterable[ReferenceGeneration] | None = None,
) -> list[BenchmarkEntry]:
    """Shrink every target by *factor* and re-render the instruction.

    The baseline is refilled with the shortest reference (from *refs*, or
    the entry's current baseline when no references are given) that still
    complies with the scaled target; otherwise the entry becomes
    baseline-less.
    """
    if not 0 < factor <= 1:
        raise ValueError(f"scale factor must be in (0, 1], got {factor}")
    grouped = group_references(refs) if refs is not None else None
    out = []
    for e in bench:
        target = scale_target(e.target_len, factor)
        if grouped is not None:
            candidates = grouped.get(prompt_id_of(e.id), [])
        elif e.baseline_response is not None:
            candidates = [(count_words(e.baseline_response), ReferenceGeneration("", e.baseline_source or "", e.baseline_response))]
        else:
            candidates = []
        out.append(_entry(e.id, e.original_prompt, target, _shortest_compliant(candidates, target)))
    return out


def parse_factors(factors: str | Sequence[float] | None) -> tuple[float, ...]:
    """Parse ``"0.9,0.8"`` (or a sequence) into validated scale factors."""
    if factors is None:
        return DEFAULT_FACTORS
    values = [float(x) for x in factors.split(",")] if isinstance(factors, str) else [float(x) for x in factors]
    if not values:
        raise ValueError("at least one scale factor is required")
    for v in values:
        if not 0 < v <= 1:
            raise ValueError(f"scale factor must be in (0, 1], got {v}")
    return tuple(values)


def multi_length_entries(prompt: str, limits: Sequence[int], prompt_id: str = "prompt") -> list[BenchmarkEntry]:
    """Baseline-less entries asking the same prompt under several limits."""
    return [
        BenchmarkEntry(
            id=f"{prompt_id}#L{limit:05d}",
            original_prompt=prompt,
            li_prompt=render_template(prompt, limit),
            target_len=limit,
            baseline_response=None,
            baseline_source=None,
        )
        for limit in limits
    ]
