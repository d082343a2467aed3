"""Pairwise judging behind a hard length gate.

A candidate that exceeds its word limit loses to the baseline without the
judge being consulted.  Compliant candidates are compared against the
baseline on the *original* prompt; the length instruction is never shown
to the judge.
"""

from __future__ import annotations

import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .datamodel import BenchmarkEntry, GenerationRecord, Verdict
from .genclient import ChatClient, ConfigError, EndpointConfig, GenClientError
from .wordcount import count_words

logger = logging.getLogger(__name__)

FIRST, SECOND, TIE = "first", "second", "tie"
TIE_POLICIES = ("half_win", "drop")
PLACEHOLDERS = ("{instruction}", "{response_a}", "{response_b}")

DEFAULT_TEMPLATE = """\
You are a helpful assistant that evaluates the quality of responses to an instruction.

Select the response that answers the instruction better. Judge helpfulness, accuracy and \
clarity. Do not let the order in which the responses appear, or their length, influence \
your decision.

## Instruction

{instruction}

## Response A

{response_a}

## Response B

{response_b}

## Verdict

Reply with a single letter and nothing else: "A" if Response A is better, "B" if Response B \
is better.
"""

_PLACEHOLDER_RE = re.compile(r"\{(instruction|response_a|response_b)\}")
_OUTPUT_RE = re.compile(r"\boutput\s*(?::\s*\(?\s*([ab])\s*\)?|\(\s*([ab])\s*\))(?![a-z])", re.IGNORECASE)
_VERDICT_RE = re.compile(
    r"\b(?:[Vv]erdict|[Aa]nswer|[Ww]inner|[Bb]etter response(?: is)?)\s*[:\-]?\s*\(?\s*(?:[Rr]esponse\s+)?([AB])\b"
    r"|\b[Rr]esponse ([AB]) is better\b"
)
_BARE = {
    "a": FIRST, "b": SECOND, "m": FIRST, "M": SECOND,
    "tie": TIE, "c": TIE, "draw": TIE,
}


def render_judge_prompt(template: str, instruction: str, response_a: str, response_b: str) -> str:
    """Fill the three placeholders in one pass (texts may contain braces)."""
    values = {"instruction": instruction, "response_a": response_a, "response_b": response_b}
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template)


def parse_preference(raw_reply: str) -> str:
    """Extract ``first``/``second``/``tie`` from a judge reply.

    Accepted forms, in order: ``Output (a)`` / ``Output: B``; a labelled
    verdict such as ``Verdict: A``; or the whole reply being one marker
    (``A``, ``B``, ``[[A]]``, ``(b)``, the ranking markers ``m`` = first and
    ``M`` = second, or ``tie``).  Anything else is a tie, logged as a
    warning.
    """
    m = _OUTPUT_RE.search(raw_reply)
    if m:
        return FIRST if (m.group(1) or m.group(2)).lower() == "a" else SECOND
    m = _VERDICT_RE.search(raw_reply)
    if m:
        return FIRST if (m.group(1) or m.group(2)) == "A" else SECOND
    bare = raw_reply.strip().strip("[]()*\"'`.").strip()
    if bare in ("m", "M"):
        return _BARE[bare]
    if bare.lower() in _BARE:
        return _BARE[bare.lower()]
    logger.warning("unparseable judge reply treated as tie: %r", raw_reply[:200])
    return TIE


@dataclass(frozen=True)
class PairwiseResult:
    preferred: str
    raw_reply: str


class PairwiseJudge(Protocol):
    calls: int

    def compare(self, instruction: str, response_a: str, response_b: str) -> PairwiseResult: ...


class LLMJudge:
    """Judge that asks a chat model to pick between two responses."""

    def __init__(self, client: ChatClient, template: str = DEFAULT_TEMPLATE):
        missing = [p for p in PLACEHOLDERS if p not in template]
        if missing:
            raise ConfigError(f"judge template is missing placeholder(s): {', '.join(missing)}")
        self.client = client
        self.template = template
        self.calls = 0
        self.unparseable = 0
        self._lock = threading.Lock()

    def compare(self, instruction: str, response_a: str, response_b: str) -> PairwiseResult:
        prompt = render_judge_prompt(self.template, instruction, response_a, response_b)
        with self._lock:
            self.calls += 1
        reply = self.client.complete([{"role": "user", "content": prompt}])
        preferred = parse_preference(reply)
        if preferred == TIE and not _is_explicit_tie(reply):
            with self._lock:
                self.unparseable += 1
        return PairwiseResult(preferred, reply)


def _is_explicit_tie(reply: str) -> bool:
    return reply.strip().strip("[]()*\"'`.").strip().lower() in ("tie", "c", "draw")


Rule = Callable[[str, str], str]


def prefer_longer(a: str, b: str) -> str:
    ca, cb = count_words(a), count_words(b)
    return FIRST if ca > cb else SECOND if cb > ca else TIE


def prefer_shorter(a: str, b: str) -> str:
    ca, cb = count_words(a), count_words(b)
    return FIRST if ca < cb else SECOND if cb < ca else TIE


def prefer_lexicographic(a: str, b: str) -> str:
    """Prefer the lexicographically smaller text."""
    return FIRST if a < b else SECOND if b < a else TIE


def prefer_first(a: str, b: str) -> str:
    return FIRST


def prefer_second(a: str, b: str) -> str:
    return SECOND


MOCK_RULES: dict[str, Rule] = {
    "prefer-longer": prefer_longer,
    "prefer-shorter": prefer_shorter,
    "prefer-lexicographic": prefer_lexicographic,
    "prefer-first": prefer_first,
    "prefer-second": prefer_second,
}


@dataclass
class MockJudge:
    """Offline judge whose preference is a pure function of the two texts."""

    rule: Rule
    calls: int = 0
    seen_prompts: list[str] = field(default_factory=list)
    template: str = DEFAULT_TEMPLATE
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def compare(self, instruction: str, response_a: str, response_b: str) -> PairwiseResult:
        prompt = render_judge_prompt(self.template, instruction, response_a, response_b)
        with self._lock:
            self.calls += 1
            self.seen_prompts.append(prompt)
        preferred = self.rule(response_a, response_b)
        return PairwiseResult(preferred, {FIRST: "A", SECOND: "B", TIE: "tie"}[preferred])


def mock_judge(rule: Rule | str) -> MockJudge:
    if isinstance(rule, str):
        try:
            rule = MOCK_RULES[rule]
        except KeyError:
            raise ValueError(f"unknown mock judge rule {rule!r}; choose from {sorted(MOCK_RULES)}") from None
    return MockJudge(rule)


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: EndpointConfig | None = None
    prompt_template: str = DEFAULT_TEMPLATE
    both_orders: bool = True
    tie_policy: str = "half_win"

    def __post_init__(self) -> None:
        missing = [p for p in PLACEHOLDERS if p not in self.prompt_template]
        if missing:
            raise ConfigError(f"judge template is missing placeholder(s): {', '.join(missing)}")
        if self.tie_policy not in TIE_POLICIES:
            raise ConfigError(f"tie_policy must be one of {TIE_POLICIES}, got {self.tie_policy!r}")


def gate_and_judge(
    entry: BenchmarkEntry,
    gen: GenerationRecord,
    judge: PairwiseJudge,
    both_orders: bool = True,
) -> Verdict:
    """Decide one comparison between the candidate and the entry's baseline."""
    if gen.entry_id != entry.id:
        raise ValueError(f"generation {gen.entry_id!r} does not belong to entry {entry.id!r}")
    if not entry.has_baseline:
        raise ValueError(f"entry {entry.id!r} has no baseline and cannot be judged")
    if gen.violation:
        return Verdict(entry.id, "baseline_win", gated=True, judge_raw=[])

    exchanges = []
    try:
        forward = judge.compare(entry.original_prompt, gen.response, entry.baseline_response)
        exchanges.append({"order": "candidate_first", "reply": forward.raw_reply, "preferred": forward.preferred})
        first = {FIRST: "candidate_win", SECOND: "baseline_win", TIE: "tie"}[forward.preferred]
        if not both_orders:
            return Verdict(entry.id, first, gated=False, judge_raw=exchanges)
        backward = judge.compare(entry.original_prompt, entry.baseline_response, gen.response)
        exchanges.append({"order": "baseline_first", "reply": backward.raw_reply, "preferred": backward.preferred})
    except GenClientError as exc:
        logger.error("judge failed for %s: %s", entry.id, exc)
        return Verdict(entry.id, "baseline_win", gated=False, judge_raw=exchanges, error=str(exc))
    second = {FIRST: "baseline_win", SECOND: "candidate_win", TIE: "tie"}[backward.preferred]
    return Verdict(entry.id, first if first == second else "tie", gated=False, judge_raw=exchanges)
