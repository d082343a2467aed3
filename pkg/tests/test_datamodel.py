import json
import logging

import pytest

from lenlift.datamodel import (
    AugmentedPair,
    BenchmarkEntry,
    EvalSummary,
    GenerationRecord,
    PreferenceTriple,
    ReferenceGeneration,
    ValidationError,
    Verdict,
    dumps,
    from_dict,
    load_prompts,
    load_records,
    load_triples,
    to_dict,
    write_jsonl,
)

SAMPLES = [
    PreferenceTriple("t1", "Why?", "Because.", "No idea, really."),
    AugmentedPair("t1", "Answer ... \n\nWhy?", 12, "a", "b", True, "longer-chosen/binding"),
    BenchmarkEntry("p1", "Why?", "li", 7, "short", "model-a"),
    BenchmarkEntry("p2", "Why?", "li", 7, None, None),
    ReferenceGeneration("p1", "model-a", "résumé — ok"),
    GenerationRecord("p1", "m", "x", 1, False),
    GenerationRecord("p1", "m", "", 0, True, failed=True, error="boom"),
    Verdict("p1", "tie", False, [{"order": "candidate_first", "reply": "A"}]),
]


@pytest.mark.parametrize("record", SAMPLES, ids=lambda r: type(r).__name__)
def test_round_trip(record):
    line = dumps(record)
    assert "\n" not in line
    assert from_dict(type(record), json.loads(line)) == record
    assert dumps(from_dict(type(record), json.loads(line))) == line


def test_field_order_and_optional_keys():
    assert list(to_dict(SAMPLES[5])) == ["entry_id", "model_label", "response", "word_count", "violation"]
    assert to_dict(SAMPLES[6])["failed"] is True
    assert dumps(SAMPLES[0]) == '{"id":"t1","prompt":"Why?","chosen":"Because.","rejected":"No idea, really."}'


def test_non_ascii_kept_verbatim():
    assert "résumé — ok" in dumps(SAMPLES[4])


def test_embedded_newline_escaped(tmp_path):
    t = PreferenceTriple("t", "line one\nline two", "a", "b")
    path = tmp_path / "x.jsonl"
    write_jsonl([t, t.__class__("u", "p", "c", "d")], path)
    assert path.read_text(encoding="utf-8").count("\n") == 2
    assert load_triples(path)[0].prompt == "line one\nline two"


def test_missing_field_names_line(tmp_path):
    path = tmp_path / "t.jsonl"
    rows = [{"id": f"t{i}", "prompt": "p", "chosen": "c", "rejected": "r"} for i in range(5)]
    del rows[4]["chosen"]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    with pytest.raises(ValidationError, match="line 5: missing field chosen"):
        load_triples(path)


def test_bad_types_and_values():
    with pytest.raises(ValidationError, match="target_len"):
        from_dict(BenchmarkEntry, {"id": "x", "original_prompt": "p", "li_prompt": "l", "target_len": True,
                                   "baseline_response": None, "baseline_source": None})
    with pytest.raises(ValidationError, match="outcome"):
        from_dict(Verdict, {"entry_id": "x", "outcome": "win", "gated": False})
    with pytest.raises(ValidationError, match="gated"):
        from_dict(Verdict, {"entry_id": "x", "outcome": "tie", "gated": True})
    with pytest.raises(ValidationError, match="both"):
        from_dict(BenchmarkEntry, {"id": "x", "original_prompt": "p", "li_prompt": "l", "target_len": 3,
                                   "baseline_response": "b", "baseline_source": None})
    with pytest.raises(ValidationError, match="unknown field"):
        from_dict(ReferenceGeneration, {"prompt_id": "p", "model_label": "m", "response": "r", "extra": 1})


def test_invalid_json_line(tmp_path):
    path = tmp_path / "g.jsonl"
    path.write_text('{"entry_id": "a"}\n{oops\n')
    with pytest.raises(ValidationError, match="line 2: invalid JSON"):
        load_records(path, GenerationRecord)


def test_empty_file_warns(tmp_path, caplog):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with caplog.at_level(logging.WARNING):
        assert load_triples(path) == []
    assert "no records" in caplog.text


def test_triples_default_ids_and_duplicates(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text('{"prompt":"p","chosen":"c","rejected":"r"}\n{"prompt":"q","chosen":"c","rejected":"r"}\n')
    assert [t.id for t in load_triples(path)] == ["row-000000", "row-000001"]
    path.write_text('{"id":"a","prompt":"p","chosen":"c","rejected":"r"}\n{"id":"a","prompt":"q","chosen":"c","rejected":"r"}\n')
    with pytest.raises(ValidationError, match="duplicate id"):
        load_triples(path)


def test_prompts_accept_instruction_key(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text('{"id":"a","instruction":"Say hi."}\n{"id":"b","prompt":"Bye."}\n')
    assert load_prompts(path) == {"a": "Say hi.", "b": "Bye."}


def test_serialization_is_deterministic(tmp_path):
    write_jsonl(SAMPLES[:3], tmp_path / "a.jsonl")
    write_jsonl(SAMPLES[:3], tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_summary_dict():
    s = EvalSummary(n=10, violation_rate=35.0, win_rate=None, mean_words=12.5)
    assert to_dict(s) == {"n": 10, "violation_rate": 35.0, "win_rate": None, "mean_words": 12.5,
                          "scale": 1.0, "failures": 0}
