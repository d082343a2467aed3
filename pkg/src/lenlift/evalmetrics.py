"""Violation rate, gated win rate and the scale sweep.

Percentages are reported to one decimal place (half-up).  Failed
generations count as violations and losses and are tallied separately in
``EvalSummary.failures``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Sequence

from .benchbuild import scale_benchmark
from .datamodel import BenchmarkEntry, EvalSummary, GenerationRecord, ReferenceGeneration, Verdict, to_dict
from .judge import TIE_POLICIES, PairwiseJudge, gate_and_judge


class MetricsError(ValueError):
    pass


def round1(x: float) -> float:
    """Round to one decimal, halves away from zero."""
    return float(Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def violation_rate(gens: Sequence[GenerationRecord]) -> float:
    if not gens:
        raise MetricsError("violation rate of an empty run is undefined")
    return 100.0 * sum(g.violation for g in gens) / len(gens)


def win_rate(verdicts: Sequence[Verdict], tie_policy: str = "half_win") -> float:
    """Percentage of comparisons the candidate won.

    ``half_win`` counts a tie as half a win over all verdicts; ``drop``
    removes ties from both numerator and denominator.  Gated losses are
    ordinary losses under both policies.
    """
    if tie_policy not in TIE_POLICIES:
        raise MetricsError(f"unknown tie policy {tie_policy!r}")
    if not verdicts:
        raise MetricsError("win rate of an empty run is undefined")
    wins = sum(v.outcome == "candidate_win" for v in verdicts)
    ties = sum(v.outcome == "tie" for v in verdicts)
    if tie_policy == "half_win":
        return 100.0 * (wins + 0.5 * ties) / len(verdicts)
    decided = len(verdicts) - ties
    if decided == 0:
        raise MetricsError("no decidable comparisons")
    return 100.0 * wins / decided


def outcome_rates(verdicts: Sequence[Verdict]) -> dict[str, float]:
    n = len(verdicts)
    if not n:
        raise MetricsError("no verdicts")
    return {
        key: 100.0 * sum(v.outcome == key for v in verdicts) / n
        for key in ("candidate_win", "baseline_win", "tie")
    }


def mean_words(gens: Sequence[GenerationRecord]) -> float:
    if not gens:
        raise MetricsError("mean length of an empty run is undefined")
    return sum(g.word_count for g in gens) / len(gens)


def summarize(
    gens: Sequence[GenerationRecord],
    verdicts: Sequence[Verdict] | None = None,
    *,
    scale: float = 1.0,
    tie_policy: str = "half_win",
) -> EvalSummary:
    """Aggregate one run.  ``win_rate`` is ``None`` without verdicts."""
    wr = round1(win_rate(verdicts, tie_policy)) if verdicts else None
    return EvalSummary(
        n=len(gens),
        violation_rate=round1(violation_rate(gens)),
        win_rate=wr,
        mean_words=round1(mean_words(gens)),
        scale=scale,
        failures=sum(g.failed for g in gens),
    )


def join(bench: Sequence[BenchmarkEntry], gens: Sequence[GenerationRecord]) -> list[tuple[BenchmarkEntry, GenerationRecord]]:
    """Pair generations with their entries, in benchmark order."""
    by_id = {g.entry_id: g for g in gens}
    known = {e.id for e in bench}
    unknown = sorted(set(by_id) - known)
    if unknown:
        raise MetricsError(f"generation(s) for unknown entry id(s): {', '.join(unknown[:5])}")
    missing = [e.id for e in bench if e.id not in by_id]
    if missing:
        raise MetricsError(f"{len(missing)} entry id(s) have no generation: {', '.join(missing[:5])}")
    return [(e, by_id[e.id]) for e in bench]


def judge_run(
    bench: Sequence[BenchmarkEntry],
    gens: Sequence[GenerationRecord],
    judge: PairwiseJudge,
    *,
    both_orders: bool = True,
    concurrency: int = 1,
) -> list[Verdict]:
    """Verdicts for every entry that has a baseline, in benchmark order."""
    pairs = [(e, g) for e, g in join(bench, gens) if e.has_baseline]

    def one(pair: tuple[BenchmarkEntry, GenerationRecord]) -> Verdict:
        return gate_and_judge(pair[0], pair[1], judge, both_orders)

    if concurrency <= 1:
        return [one(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, pairs))


def needs_judge(bench: Sequence[BenchmarkEntry], gens: Sequence[GenerationRecord]) -> bool:
    """True if some compliant generation must be compared to a baseline."""
    return any(e.has_baseline and not g.violation for e, g in join(bench, gens))


def evaluate(
    bench: Sequence[BenchmarkEntry],
    gens: Sequence[GenerationRecord],
    judge: PairwiseJudge | None = None,
    *,
    both_orders: bool = True,
    tie_policy: str = "half_win",
    scale: float = 1.0,
    concurrency: int = 1,
) -> tuple[list[Verdict], EvalSummary]:
    """Judge (when possible) and summarize one run.

    Without a judge, only gated verdicts can be decided; if any compliant
    entry would need judging a ``MetricsError`` is raised.
    """
    joined = join(bench, gens)
    if judge is None:
        if needs_judge(bench, gens):
            raise MetricsError("a judge is required: some compliant generations have baselines")
        verdicts = [gate_and_judge(e, g, _NoJudge(), both_orders) for e, g in joined if e.has_baseline]
    else:
        verdicts = judge_run(bench, gens, judge, both_orders=both_orders, concurrency=concurrency)
    ordered = [g for _, g in joined]
    return verdicts, summarize(ordered, verdicts, scale=scale, tie_policy=tie_policy)


class _NoJudge:
    calls = 0

    def compare(self, instruction, response_a, response_b):
        raise AssertionError("judge invoked for a gated entry")


@dataclass
class SweepResult:
    points: list[tuple[float, EvalSummary]] = field(default_factory=list)
    label: str | None = None

    def to_json(self) -> dict:
        doc: dict = {}
        if self.label is not None:
            doc["label"] = self.label
        doc["points"] = [to_dict(s) for _, s in self.points]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SweepResult":
        try:
            points = [(float(p["scale"]), EvalSummary(**p)) for p in doc["points"]]
        except (KeyError, TypeError) as exc:
            raise MetricsError(f"malformed sweep document: {exc}") from exc
        return cls(points, doc.get("label"))


Generate = Callable[[Sequence[BenchmarkEntry]], Sequence[GenerationRecord]]


def run_sweep(
    bench: Sequence[BenchmarkEntry],
    factors: Sequence[float],
    generate: Generate,
    judge: PairwiseJudge | None = None,
    *,
    refs: Sequence[ReferenceGeneration] | None = None,
    both_orders: bool = True,
    tie_policy: str = "half_win",
    label: str | None = None,
    on_stage: Callable[[float, list[BenchmarkEntry], list[GenerationRecord], list[Verdict]], None] | None = None,
) -> SweepResult:
    """Scale, generate and summarize at each factor, largest factor first.

    Win rates are computed only when a judge is given and the scaled
    benchmark still has baselines; violation rates always.
    """
    ordered = sorted(set(float(f) for f in factors), reverse=True)
    if not ordered:
        raise MetricsError("no scale factors")
    result = SweepResult(label=label)
    for factor in ordered:
        scaled = scale_benchmark(bench, factor, refs)
        gens = list(generate(scaled))
        joined = join(scaled, gens)
        gens = [g for _, g in joined]
        verdicts: list[Verdict] = []
        if judge is not None and any(e.has_baseline for e in scaled):
            verdicts = judge_run(scaled, gens, judge, both_orders=both_orders)
        summary = summarize(gens, verdicts or None, scale=factor, tie_policy=tie_policy)
        result.points.append((factor, summary))
        if on_stage is not None:
            on_stage(factor, scaled, gens, verdicts)
    return result
