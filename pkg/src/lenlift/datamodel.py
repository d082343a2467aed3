"""Record types and their JSONL interchange format.

Every pipeline stage reads and writes one JSON object per line.  Output is
canonical: keys in schema order, compact separators, UTF-8 kept verbatim,
so equal datasets are equal bytes.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence, TypeVar

logger = logging.getLogger(__name__)

CASE_TAGS = (
    "longer-chosen/slack",
    "longer-chosen/binding",
    "shorter-chosen/slack",
    "shorter-chosen/binding",
)
OUTCOMES = ("candidate_win", "baseline_win", "tie")


class ValidationError(ValueError):
    """A record or file does not match its schema."""


@dataclass(frozen=True)
class PreferenceTriple:
    id: str
    prompt: str
    chosen: str
    rejected: str


@dataclass(frozen=True)
class AugmentedPair:
    source_id: str
    li_prompt: str
    max_len: int
    winner: str
    loser: str
    flipped: bool
    case_tag: str


@dataclass(frozen=True)
class BenchmarkEntry:
    """One length-instructed prompt with its compliant baseline.

    ``baseline_response`` and ``baseline_source`` are ``None`` for
    baseline-less entries produced by scaling; those are only usable for
    violation rates.
    """

    id: str
    original_prompt: str
    li_prompt: str
    target_len: int
    baseline_response: str | None
    baseline_source: str | None

    @property
    def has_baseline(self) -> bool:
        return self.baseline_response is not None


@dataclass(frozen=True)
class ReferenceGeneration:
    prompt_id: str
    model_label: str
    response: str


@dataclass(frozen=True)
class GenerationRecord:
    """A model output for one benchmark entry.

    Failed generations keep the pipeline total: they carry ``failed=True``,
    an empty response and ``violation=True``.
    """

    entry_id: str
    model_label: str
    response: str
    word_count: int
    violation: bool
    failed: bool = False
    error: str | None = None


@dataclass(frozen=True)
class Verdict:
    entry_id: str
    outcome: str
    gated: bool
    judge_raw: list = field(default_factory=list)
    error: str | None = None


@dataclass(frozen=True)
class EvalSummary:
    n: int
    violation_rate: float
    win_rate: float | None
    mean_words: float
    scale: float = 1.0
    failures: int = 0


# Optional keys are written only when they differ from their default, so
# ordinary records carry exactly the documented schema.
_OPTIONAL = {
    GenerationRecord: ("failed", "error"),
    Verdict: ("error",),
}

_FIELD_TYPES: dict[type, dict[str, tuple[type, ...]]] = {
    PreferenceTriple: {"id": (str,), "prompt": (str,), "chosen": (str,), "rejected": (str,)},
    AugmentedPair: {
        "source_id": (str,),
        "li_prompt": (str,),
        "max_len": (int,),
        "winner": (str,),
        "loser": (str,),
        "flipped": (bool,),
        "case_tag": (str,),
    },
    BenchmarkEntry: {
        "id": (str,),
        "original_prompt": (str,),
        "li_prompt": (str,),
        "target_len": (int,),
        "baseline_response": (str, type(None)),
        "baseline_source": (str, type(None)),
    },
    ReferenceGeneration: {"prompt_id": (str,), "model_label": (str,), "response": (str,)},
    GenerationRecord: {
        "entry_id": (str,),
        "model_label": (str,),
        "response": (str,),
        "word_count": (int,),
        "violation": (bool,),
        "failed": (bool,),
        "error": (str, type(None)),
    },
    Verdict: {
        "entry_id": (str,),
        "outcome": (str,),
        "gated": (bool,),
        "judge_raw": (list,),
        "error": (str, type(None)),
    },
}

R = TypeVar("R")


def to_dict(record: Any) -> dict[str, Any]:
    """Schema-ordered dict for *record*, omitting defaulted optional keys."""
    out: dict[str, Any] = {}
    optional = _OPTIONAL.get(type(record), ())
    for f in dataclasses.fields(record):
        value = getattr(record, f.name)
        if f.name in optional and value == f.default:
            continue
        out[f.name] = value
    return out


def dumps(obj: Any) -> str:
    """Canonical single-line JSON."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = to_dict(obj)
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def _check_type(value: Any, types: tuple[type, ...]) -> bool:
    # bool is an int subclass; never accept it for int fields
    if isinstance(value, bool) and bool not in types:
        return False
    return isinstance(value, types)


def from_dict(cls: type[R], data: Any, *, where: str = "record") -> R:
    """Validate *data* against the schema of *cls* and build the record."""
    if not isinstance(data, dict):
        raise ValidationError(f"{where}: expected a JSON object")
    types = _FIELD_TYPES[cls]
    optional = set(_OPTIONAL.get(cls, ()))
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            if f.name in optional or f.name == "judge_raw":
                continue
            raise ValidationError(f"{where}: missing field {f.name}")
        value = data[f.name]
        if not _check_type(value, types[f.name]):
            raise ValidationError(f"{where}: field {f.name} has invalid type {type(value).__name__}")
        kwargs[f.name] = value
    unknown = set(data) - set(types)
    if unknown:
        raise ValidationError(f"{where}: unknown field {sorted(unknown)[0]}")
    record = cls(**kwargs)
    _check_values(record, where)
    return record


def _check_values(record: Any, where: str) -> None:
    if isinstance(record, PreferenceTriple):
        for name in ("id", "prompt", "chosen", "rejected"):
            if not getattr(record, name):
                raise ValidationError(f"{where}: field {name} is empty")
    elif isinstance(record, AugmentedPair):
        if record.max_len < 1:
            raise ValidationError(f"{where}: field max_len must be positive")
        if record.case_tag not in CASE_TAGS:
            raise ValidationError(f"{where}: field case_tag has unknown value {record.case_tag!r}")
    elif isinstance(record, BenchmarkEntry):
        if record.target_len < 1:
            raise ValidationError(f"{where}: field target_len must be positive")
        if (record.baseline_response is None) != (record.baseline_source is None):
            raise ValidationError(f"{where}: baseline_response and baseline_source must both be set or both null")
    elif isinstance(record, ReferenceGeneration):
        if not record.response:
            raise ValidationError(f"{where}: field response is empty")
    elif isinstance(record, GenerationRecord):
        if record.word_count < 0:
            raise ValidationError(f"{where}: field word_count is negative")
    elif isinstance(record, Verdict):
        if record.outcome not in OUTCOMES:
            raise ValidationError(f"{where}: field outcome has unknown value {record.outcome!r}")
        if record.gated and record.outcome != "baseline_win":
            raise ValidationError(f"{where}: gated verdict must be baseline_win")


def read_jsonl(path: str | Path) -> list[tuple[int, Any]]:
    """Parse a JSONL file into ``(line_number, object)`` pairs.

    Blank lines are skipped.  An empty file logs a warning.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not rows:
        logger.warning("%s: no records", path)
    return rows


def load_records(path: str | Path, cls: type[R]) -> list[R]:
    """Load and validate every line of *path* as a *cls* record."""
    return [from_dict(cls, obj, where=f"line {lineno}") for lineno, obj in read_jsonl(path)]


def load_triples(path: str | Path) -> list[PreferenceTriple]:
    """Load preference triples; rows without ``id`` get ``row-NNNNNN``."""
    triples = []
    seen: dict[str, int] = {}
    for index, (lineno, obj) in enumerate(read_jsonl(path)):
        if isinstance(obj, dict) and "id" not in obj:
            obj = {"id": default_id(index), **obj}
        triple = from_dict(PreferenceTriple, obj, where=f"line {lineno}")
        if triple.id in seen:
            raise ValidationError(
                f"line {lineno}: duplicate id {triple.id!r} (first seen on line {seen[triple.id]})"
            )
        seen[triple.id] = lineno
        triples.append(triple)
    return triples


def load_prompts(path: str | Path) -> dict[str, str]:
    """Load ``{"id", "prompt"}`` lines into an ordered id -> text map."""
    prompts: dict[str, str] = {}
    for index, (lineno, obj) in enumerate(read_jsonl(path)):
        if not isinstance(obj, dict):
            raise ValidationError(f"line {lineno}: expected a JSON object")
        pid = obj.get("id", default_id(index))
        text = obj.get("prompt", obj.get("instruction"))
        if text is None:
            raise ValidationError(f"line {lineno}: missing field prompt")
        if not isinstance(pid, str) or not isinstance(text, str) or not text:
            raise ValidationError(f"line {lineno}: id and prompt must be non-empty strings")
        if pid in prompts:
            raise ValidationError(f"line {lineno}: duplicate id {pid!r}")
        prompts[pid] = text
    return prompts


def default_id(index: int) -> str:
    return f"row-{index:06d}"


def write_jsonl(records: Iterable[Any], path: str | Path) -> None:
    """Write records canonically, one per line, newline-terminated."""
    path = Path(path)
    payload = "".join(dumps(r) + "\n" for r in records)
    try:
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"{path}: cannot write ({exc.strerror or exc})") from exc


def write_json(obj: Any, path: str | Path) -> None:
    """Write a single canonical JSON document (pretty, sorted as given)."""
    path = Path(path)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = to_dict(obj)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"{path}: cannot write ({exc.strerror or exc})") from exc


def index_by_id(entries: Sequence[BenchmarkEntry]) -> dict[str, BenchmarkEntry]:
    return {e.id: e for e in entries}
