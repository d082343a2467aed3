"""Rebuild the offline replay fixture (bench, cache, expected values).

The cache holds one recorded generation per entry and the two judge
replies for each compliant entry, keyed exactly as the client keys live
requests.  Expected values in ``fixture.json`` are worked out by hand
from the table below, not by running the evaluator.

    python tests/data/replay/make_replay.py
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

from lenlift.datamodel import BenchmarkEntry, write_jsonl
from lenlift.genclient import EndpointConfig, ResponseCache, cache_key
from lenlift.judge import DEFAULT_TEMPLATE, render_judge_prompt
from lenlift.lift import render_template

HERE = Path(__file__).resolve().parent

GEN = {"base_url": "http://replay.invalid/v1", "model_name": "recorded-model"}
JUDGE = {"base_url": "http://replay.invalid/v1", "model_name": "recorded-judge", "temperature": 0.0,
         "top_p": 1.0, "max_tokens": 32}

# id, target, baseline words, candidate words, judge reply (candidate first), judge reply (baseline first)
ROWS = [
    ("r01", 10, 7, 8, "A", "B"),                         # win
    ("r02", 6, 6, 5, "B", "A"),                          # loss
    ("r03", 12, 10, 14, None, None),                     # violation
    ("r04", 3, 2, 3, "A", "A"),                          # disagreement -> tie
    ("r05", 25, 20, 20, "Output (a)", "Output (b)"),     # win
    ("r06", 9, 9, 9, "B", "B"),                          # disagreement -> tie
    ("r07", 30, 28, 31, None, None),                     # violation
    ("r08", 4, 4, 1, "A", "B"),                          # win
    ("r09", 2, 1, 7, None, None),                        # violation
    ("r10", 15, 11, 13, "Verdict: B", "Verdict: A"),     # loss
]

# violations 3/10; 3 wins + 2 ties of 10 verdicts; words 8+5+14+3+20+9+31+1+7+13 = 111
EXPECTED = {"violation_rate": 30.0, "win_rate": 40.0, "win_rate_drop": 37.5, "mean_words": 11.1,
            "judge_calls": 14, "network_calls": 0}

VOCAB = ("river stone light garden window paper silver morning quiet letter "
         "forest candle bridge winter music simple careful honest bright gentle").split()


def text(n: int, offset: int) -> str:
    words = [VOCAB[(offset + i) % len(VOCAB)] for i in range(n)]
    return (" ".join(words).capitalize() + ".") if words else ""


def main() -> None:
    cache_dir = HERE / "cache"
    shutil.rmtree(cache_dir, ignore_errors=True)
    cache = ResponseCache(cache_dir)
    gen_cfg, judge_cfg = EndpointConfig(**GEN), EndpointConfig(**JUDGE)

    def record(cfg: EndpointConfig, prompt: str, reply: str) -> None:
        body = cfg.request_body([{"role": "user", "content": prompt}])
        raw = {"choices": [{"index": 0, "message": {"role": "assistant", "content": reply}}]}
        cache.put(cache_key(cfg, body), body, reply, raw)

    bench = []
    for k, (eid, target, base_n, cand_n, fwd, bwd) in enumerate(ROWS):
        prompt = f"Write a short note about item {eid}."
        baseline, candidate = text(base_n, k), text(cand_n, k + 7)
        entry = BenchmarkEntry(eid, prompt, render_template(prompt, target), target, baseline, "reference-model")
        bench.append(entry)
        record(gen_cfg, entry.li_prompt, candidate)
        if fwd is not None:
            record(judge_cfg, render_judge_prompt(DEFAULT_TEMPLATE, prompt, candidate, baseline), fwd)
            record(judge_cfg, render_judge_prompt(DEFAULT_TEMPLATE, prompt, baseline, candidate), bwd)
    write_jsonl(bench, HERE / "bench.jsonl")
    (HERE / "judge_template.txt").write_text(DEFAULT_TEMPLATE, encoding="utf-8")
    doc = {"generation": GEN, "judge": JUDGE, "expected": EXPECTED}
    (HERE / "fixture.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(bench)} entries, {sum(1 for _ in cache_dir.rglob('*.json'))} cache files")


if __name__ == "__main__":
    main()
