"""Length-instruction augmentation of preference data.

Each triple whose two responses differ by at least ``threshold`` words
yields two length-instructed pairs: one whose limit both responses meet
(the original preference stands), and one whose limit falls between the
two lengths, so that only the shorter response complies.  When the
chosen response is the longer one, that second pair swaps winner and
loser.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .datamodel import AugmentedPair, PreferenceTriple
from .wordcount import count_words

TEMPLATE = "Answer the following instruction using <MAX_LEN> words or less.\n\n<ORIGINAL_INSTRUCTION>"
DEFAULT_THRESHOLD = 10

# sampler(low, high) -> integer uniformly drawn from [low, high)
Sampler = Callable[[int, int], int]


@dataclass(frozen=True)
class LiftConfig:
    seed: int
    threshold_T: int = DEFAULT_THRESHOLD
    template: str = TEMPLATE

    def __post_init__(self) -> None:
        if self.threshold_T < 1:
            raise ValueError(f"threshold must be >= 1, got {self.threshold_T}")
        for placeholder in ("<MAX_LEN>", "<ORIGINAL_INSTRUCTION>"):
            if placeholder not in self.template:
                raise ValueError(f"template is missing the {placeholder} placeholder")


@dataclass
class AugmentationStats:
    n_input: int = 0
    n_filtered_close: int = 0
    n_chosen_longer: int = 0
    n_chosen_shorter: int = 0
    n_output: int = 0
    n_flipped: int = 0


def render_template(prompt: str, max_len: int, template: str = TEMPLATE) -> str:
    """Prefix *prompt* with the instruction to answer in *max_len* words or less."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    return template.replace("<MAX_LEN>", str(max_len), 1).replace("<ORIGINAL_INSTRUCTION>", prompt, 1)


def triple_sampler(seed: int, triple_id: str) -> Sampler:
    """Integer sampler keyed on (seed, triple id), independent of dataset order."""
    digest = hashlib.sha256(f"{seed}\x00{triple_id}".encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    return rng.randrange


def augment_triple(
    t: PreferenceTriple, cfg: LiftConfig, sampler: Sampler | None = None
) -> list[AugmentedPair]:
    """Return the two augmented pairs for *t*, or ``[]`` if it is filtered.

    A triple is filtered when its responses differ by fewer than
    ``cfg.threshold_T`` words, or when no positive limit separates them
    (only possible for a zero-word response with ``threshold_T == 1``).
    """
    if sampler is None:
        sampler = triple_sampler(cfg.seed, t.id)
    lw = count_words(t.chosen)
    ll = count_words(t.rejected)
    if abs(lw - ll) < cfg.threshold_T:
        return []
    shorter, longer = min(lw, ll), max(lw, ll)
    low = max(shorter, 1)
    if low >= longer:
        return []
    slack_len = longer + cfg.threshold_T
    binding_len = sampler(low, longer)
    if not low <= binding_len < longer:
        raise ValueError(f"sampler returned {binding_len}, outside [{low}, {longer})")

    def pair(max_len: int, winner: str, loser: str, flipped: bool, tag: str) -> AugmentedPair:
        return AugmentedPair(
            source_id=t.id,
            li_prompt=render_template(t.prompt, max_len, cfg.template),
            max_len=max_len,
            winner=winner,
            loser=loser,
            flipped=flipped,
            case_tag=tag,
        )

    if lw > ll:
        return [
            pair(slack_len, t.chosen, t.rejected, False, "longer-chosen/slack"),
            pair(binding_len, t.rejected, t.chosen, True, "longer-chosen/binding"),
        ]
    return [
        pair(slack_len, t.chosen, t.rejected, False, "shorter-chosen/slack"),
        pair(binding_len, t.chosen, t.rejected, False, "shorter-chosen/binding"),
    ]


def augment_dataset(
    triples: Iterable[PreferenceTriple], cfg: LiftConfig
) -> tuple[list[AugmentedPair], AugmentationStats]:
    """Augment every triple in order and tally what happened to each."""
    stats = AugmentationStats()
    out: list[AugmentedPair] = []
    for t in triples:
        stats.n_input += 1
        pairs = augment_triple(t, cfg)
        if not pairs:
            stats.n_filtered_close += 1
            continue
        if pairs[0].case_tag.startswith("longer"):
            stats.n_chosen_longer += 1
        else:
            stats.n_chosen_shorter += 1
        stats.n_flipped += sum(p.flipped for p in pairs)
        out.extend(pairs)
    stats.n_output = len(out)
    return out, stats


def as_triples(pairs: Sequence[AugmentedPair]) -> list[PreferenceTriple]:
    """Convert augmented pairs to preference triples for training files.

    Ids are ``<source_id>#lift-<k>`` with k counting pairs per source.
    """
    out = []
    counter: dict[str, int] = {}
    for p in pairs:
        k = counter.get(p.source_id, 0)
        counter[p.source_id] = k + 1
        out.append(PreferenceTriple(f"{p.source_id}#lift-{k}", p.li_prompt, p.winner, p.loser))
    return out


def training_union(
    original: Sequence[PreferenceTriple], pairs: Sequence[AugmentedPair]
) -> list[PreferenceTriple]:
    """The original triples followed by the augmented ones, no deduplication."""
    return [*original, *as_triples(pairs)]
