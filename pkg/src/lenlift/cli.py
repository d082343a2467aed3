"""``lenlift`` command line.

Option values resolve as: command-line flag, then ``--config`` JSON file
(keys are flag names, with dashes or underscores), then environment
variable ``LENLIFT_<NAME>``, then the built-in default.  Every subcommand
that writes files also writes ``<output>.manifest.json`` describing the
run.  Exit status: 0 ok, 1 invalid input or configuration, 2 transport
failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .benchbuild import (
    DEFAULT_FACTORS,
    auto_exclusions,
    build_benchmark,
    build_multi_constraint,
    multi_length_entries,
    parse_factors,
    scale_benchmark,
)
from .datamodel import (
    BenchmarkEntry,
    GenerationRecord,
    ReferenceGeneration,
    ValidationError,
    Verdict,
    load_prompts,
    load_records,
    load_triples,
    write_json,
    write_jsonl,
)
from .evalmetrics import MetricsError, SweepResult, evaluate, needs_judge, run_sweep
from .genclient import ChatClient, ConfigError, EndpointConfig, GenClientError, generate_over_benchmark
from .judge import DEFAULT_TEMPLATE, MOCK_RULES, JudgeConfig, LLMJudge, mock_judge
from .lift import LiftConfig, augment_dataset, training_union
from .report import write_report
from .wordcount import count_words, tokenize

logger = logging.getLogger("lenlift")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
DEFAULT_CACHE_DIR = ".lenlift-cache"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class _Options:
    """Registers options with a default of ``None`` and remembers the real defaults."""

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.defaults: dict[str, Any] = {}
        parser.set_defaults(_defaults=self.defaults)

    def add(self, *flags: str, default: Any = None, help: str = "", **kw) -> None:
        action = kw.get("action")
        if action == "store_true":
            default = False if default is None else default
        shown = "" if default is None else f" (default: {default})"
        dest = self.parser.add_argument(*flags, default=None, help=help + shown, **kw).dest
        self.defaults[dest] = default


def _endpoint_options(o: _Options, prefix: str = "") -> None:
    p = f"--{prefix}" if prefix else "--"
    what = "judge" if prefix else "generation"
    o.add(f"{p}model" if prefix else "--model", help=f"{what} model name sent in the request body")
    o.add(f"{p}url" if prefix else "--base-url", help=f"{what} API base URL (chat-completions compatible)")
    o.add(f"{p}key-env", help=f"environment variable holding the {what} API key (omit for unauthenticated endpoints)")
    o.add(f"{p}temperature", type=float, default=0.0 if prefix else 0.7, help=f"{what} sampling temperature")
    o.add(f"{p}top-p", type=float, default=1.0 if prefix else 0.9, help=f"{what} nucleus sampling top_p")
    o.add(f"{p}max-tokens", type=int, default=32 if prefix else 2048, help=f"{what} max_tokens")
    o.add(f"{p}timeout", type=float, default=120.0, help=f"{what} request timeout in seconds")
    o.add(f"{p}max-retries", type=int, default=3, help=f"{what} retries on timeouts, 429 and 5xx")


def _judge_options(o: _Options) -> None:
    _endpoint_options(o, "judge-")
    o.add("--judge-template", help="file with a judge prompt using {instruction}, {response_a}, {response_b}")
    o.add("--single-order", action="store_true", help="judge each pair once instead of in both orders")
    o.add("--tie-policy", choices=("half_win", "drop"), default="half_win", help="how ties enter the win rate")
    o.add("--mock-judge", choices=sorted(MOCK_RULES), help="offline deterministic judge, for testing")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lenlift", description="Length-instructed benchmarks, LIFT augmentation and evaluation.")
    parser.add_argument("--version", action="version", version=f"lenlift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name: str, help: str, func: Callable) -> _Options:
        sp = sub.add_parser(name, help=help, description=help)
        sp.set_defaults(_func=func)
        o = _Options(sp)
        o.add("--config", help="JSON file with option values (flags override it)")
        o.add("-v", "--verbose", action="store_true", help="log progress to stderr")
        return o

    o = command("count", "Print the word count of a text.", cmd_count)
    o.add("--text", help="text to count")
    o.add("--file", help="read the text from this file ('-' for stdin)")
    o.add("--tokens", action="store_true", help="also print the tokens as JSON")

    o = command("augment", "Augment preference triples with length instructions.", cmd_augment)
    o.add("--in", dest="in_path", help="input triples JSONL {id,prompt,chosen,rejected}")
    o.add("--out", help="output augmented pairs JSONL")
    o.add("--threshold", type=int, default=10, help="minimum word-count difference between responses")
    o.add("--seed", type=int, help="random seed (required)")
    o.add("--emit-union", help="also write original + augmented triples to this JSONL")

    o = command("build-bench", "Build a length-instructed benchmark from prompts and reference generations.", cmd_build_bench)
    o.add("--prompts", help="prompts JSONL {id,prompt}")
    o.add("--refs", help="reference generations JSONL {prompt_id,model_label,response}")
    o.add("--exclude", help="file with prompt ids to exclude, one per line")
    o.add("--auto-exclude", action="store_true", help="exclude prompts that already state a length limit")
    o.add("--multi", type=int, help="emit k constraints per prompt from the k shortest references")
    o.add("--out", help="output benchmark JSONL")

    o = command("scale-bench", "Scale every target length of a benchmark by a factor.", cmd_scale_bench)
    o.add("--in", dest="in_path", help="input benchmark JSONL")
    o.add("--factor", type=float, help="scale factor in (0, 1]")
    o.add("--refs", help="reference generations used to refill baselines")
    o.add("--out", help="output benchmark JSONL")

    o = command("generate", "Generate responses for a benchmark (or reference generations for prompts).", cmd_generate)
    o.add("--bench", help="benchmark JSONL; the length-instructed prompts are sent")
    o.add("--prompts", help="prompts JSONL; original prompts are sent and reference generations written")
    o.add("--prompt", help="single prompt, asked under each of --limits")
    o.add("--limits", help="comma-separated word limits for --prompt, e.g. 20,40,80")
    o.add("--out", help="output JSONL")
    o.add("--model-label", help="label stored with each generation (default: the model name)")
    _endpoint_options(o)
    o.add("--concurrency", type=int, default=4, help="maximum requests in flight")
    o.add("--cache-dir", default=DEFAULT_CACHE_DIR, help="response cache directory")

    o = command("evaluate", "Gate and judge generations against the benchmark baselines.", cmd_evaluate)
    o.add("--bench", help="benchmark JSONL")
    o.add("--gens", help="generations JSONL")
    o.add("--out", help="output verdicts JSONL")
    o.add("--summary", help="write the summary JSON here (always printed to stdout)")
    _judge_options(o)
    o.add("--concurrency", type=int, default=4, help="maximum judge requests in flight")
    o.add("--cache-dir", default=DEFAULT_CACHE_DIR, help="response cache directory")

    o = command("sweep", "Measure violation (and win) rates while shrinking every limit.", cmd_sweep)
    o.add("--bench", help="benchmark JSONL")
    o.add("--refs", help="reference generations used to refill baselines at each scale")
    o.add("--factors", default=",".join(f"{f:g}" for f in DEFAULT_FACTORS), help="comma-separated scale factors")
    o.add("--label", help="series label for reports (default: the model label)")
    o.add("--out", help="output sweep JSON")
    o.add("--work-dir", help="also write each scaled benchmark, generations and verdicts here")
    o.add("--model-label", help="label stored with each generation (default: the model name)")
    _endpoint_options(o)
    _judge_options(o)
    o.add("--concurrency", type=int, default=4, help="maximum requests in flight")
    o.add("--cache-dir", default=DEFAULT_CACHE_DIR, help="response cache directory")

    o = command("report", "Write scatter/sweep tables and charts.", cmd_report)
    o.add("--bench", help="benchmark JSONL")
    o.add("--gens", help="generations JSONL")
    o.add("--verdicts", help="verdicts JSONL (adds the win rate to summary.json)")
    o.add("--sweep", action="append", help="sweep JSON from `lenlift sweep`; repeat for several series")
    o.add("--tie-policy", choices=("half_win", "drop"), default="half_win", help="how ties enter the win rate")
    o.add("--no-png", action="store_true", help="skip the matplotlib PNG figures")
    o.add("--out-dir", help="output directory")
    return parser


# --- option resolution -----------------------------------------------------

def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    config: dict[str, Any] = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
        config.setdefault("in_path", config.pop("in", None))
    for dest, default in args._defaults.items():
        if getattr(args, dest) is not None:
            continue
        name = "in" if dest == "in_path" else dest
        env = os.environ.get(f"LENLIFT_{name.upper()}")
        if config.get(dest) is not None:
            value = config[dest]
        elif env is not None:
            value = _coerce(env, default)
        else:
            value = default
        setattr(args, dest, value)
    return args


def _coerce(raw: str, default: Any) -> Any:
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n) in (None, "")]
    if missing:
        flags = ", ".join("--" + ("in" if n == "in_path" else n.replace("_", "-")) for n in missing)
        raise ConfigError(f"missing required option(s): {flags}")


def _digest(path: str | None) -> str | None:
    if not path or path == "-" or not Path(path).is_file():
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(args: argparse.Namespace, started: str, output: str | Path, inputs: Sequence[str | None]) -> None:
    config = {k: v for k, v in vars(args).items() if not k.startswith("_")}
    doc = {
        "command": args.command,
        "config": config,
        "inputs": {p: _digest(p) for p in inputs if p},
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "started": started,
        "finished": _now(),
    }
    write_json(doc, f"{output}.manifest.json" if not Path(output).is_dir() else Path(output) / "manifest.json")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _print_json(obj: Any) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2))


def _endpoint(args: argparse.Namespace, prefix: str = "") -> EndpointConfig:
    if prefix:
        model, url, key = args.judge_model, args.judge_url, args.judge_key_env
    else:
        model, url, key = args.model, args.base_url, args.key_env
    g = lambda name: getattr(args, f"{prefix}{name}")  # noqa: E731
    if not url:
        raise ConfigError(f"--{prefix.replace('_', '-')}{'url' if prefix else 'base-url'} is required")
    if not model:
        raise ConfigError(f"--{prefix.replace('_', '-')}model is required")
    return EndpointConfig(
        base_url=url,
        model_name=model,
        api_key_env=key,
        temperature=g("temperature"),
        top_p=g("top_p"),
        max_tokens=g("max_tokens"),
        timeout=g("timeout"),
        max_retries=g("max_retries"),
    )


def _judge(args: argparse.Namespace, required: bool):
    """Build the judge from flags, or return None when none is configured."""
    template = DEFAULT_TEMPLATE
    if args.judge_template:
        template = Path(args.judge_template).read_text(encoding="utf-8")
    JudgeConfig(prompt_template=template, both_orders=not args.single_order, tie_policy=args.tie_policy)
    if args.mock_judge:
        j = mock_judge(args.mock_judge)
        j.template = template
        return j
    if not args.judge_url:
        if required:
            raise ConfigError("a judge is required: pass --judge-url and --judge-model (or --mock-judge)")
        return None
    return LLMJudge(ChatClient(_endpoint(args, "judge_"), args.cache_dir), template)


# --- subcommands -----------------------------------------------------------

def cmd_count(args: argparse.Namespace) -> int:
    if args.text is not None:
        text = args.text
    elif args.file == "-" or (args.file is None and not sys.stdin.isatty()):
        text = sys.stdin.read()
    elif args.file:
        text = Path(args.file).read_text(encoding="utf-8")
    else:
        raise ConfigError("pass --text or --file")
    print(count_words(text))
    if args.tokens:
        print(json.dumps(tokenize(text), ensure_ascii=False))
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    _require(args, "in_path", "out")
    if args.seed is None:
        raise ConfigError("--seed is required for augment")
    started = _now()
    triples = load_triples(args.in_path)
    cfg = LiftConfig(seed=args.seed, threshold_T=args.threshold)
    pairs, stats = augment_dataset(triples, cfg)
    write_jsonl(pairs, args.out)
    if args.emit_union:
        write_jsonl(training_union(triples, pairs), args.emit_union)
    _print_json(asdict(stats))
    _manifest(args, started, args.out, [args.in_path])
    return EXIT_OK


def cmd_build_bench(args: argparse.Namespace) -> int:
    _require(args, "prompts", "refs", "out")
    if args.exclude and args.auto_exclude:
        raise ConfigError("--exclude and --auto-exclude are mutually exclusive")
    started = _now()
    prompts = load_prompts(args.prompts)
    refs = load_records(args.refs, ReferenceGeneration)
    if args.exclude:
        excluded = {line.strip() for line in Path(args.exclude).read_text(encoding="utf-8").splitlines() if line.strip()}
    elif args.auto_exclude:
        excluded = auto_exclusions(prompts)
    else:
        excluded = set()
    unknown = sorted(excluded - set(prompts))
    if unknown:
        logger.warning("exclusion list names %d unknown prompt id(s)", len(unknown))
    if args.multi:
        bench = build_multi_constraint(prompts, refs, args.multi, excluded)
    else:
        bench = build_benchmark(prompts, refs, excluded)
    write_jsonl(bench, args.out)
    _print_json({"prompts": len(prompts), "excluded": sorted(excluded & set(prompts)), "entries": len(bench)})
    _manifest(args, started, args.out, [args.prompts, args.refs, args.exclude])
    return EXIT_OK


def cmd_scale_bench(args: argparse.Namespace) -> int:
    _require(args, "in_path", "factor", "out")
    started = _now()
    bench = load_records(args.in_path, BenchmarkEntry)
    refs = load_records(args.refs, ReferenceGeneration) if args.refs else None
    scaled = scale_benchmark(bench, args.factor, refs)
    write_jsonl(scaled, args.out)
    _print_json({"entries": len(scaled), "baseline_less": sum(not e.has_baseline for e in scaled)})
    _manifest(args, started, args.out, [args.in_path, args.refs])
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    _require(args, "out")
    sources = [bool(args.bench), bool(args.prompts), bool(args.prompt)]
    if sum(sources) != 1:
        raise ConfigError("pass exactly one of --bench, --prompts or --prompt")
    started = _now()
    cfg = _endpoint(args)
    label = args.model_label or cfg.model_name
    with ChatClient(cfg, args.cache_dir) as client:
        if args.prompts:
            prompts = load_prompts(args.prompts)
            entries = [BenchmarkEntry(pid, text, text, 1, None, None) for pid, text in prompts.items()]
            gens = generate_over_benchmark(client, entries, args.concurrency, model_label=label, use_li_prompt=False)
            refs = [ReferenceGeneration(g.entry_id, label, g.response) for g in gens if not g.failed]
            write_jsonl(refs, args.out)
            _print_json({"references": len(refs), "failures": len(gens) - len(refs)})
        else:
            if args.bench:
                bench = load_records(args.bench, BenchmarkEntry)
            else:
                _require(args, "limits")
                limits = [int(x) for x in args.limits.split(",")]
                if any(n < 1 for n in limits):
                    raise ConfigError("--limits must be positive integers")
                bench = multi_length_entries(args.prompt, limits)
            gens = generate_over_benchmark(client, bench, args.concurrency, model_label=label)
            write_jsonl(gens, args.out)
            _print_json({
                "generations": len(gens),
                "violations": sum(g.violation for g in gens),
                "failures": sum(g.failed for g in gens),
            })
    _manifest(args, started, args.out, [args.bench, args.prompts])
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    _require(args, "bench", "gens")
    started = _now()
    bench = load_records(args.bench, BenchmarkEntry)
    gens = load_records(args.gens, GenerationRecord)
    judge = _judge(args, required=needs_judge(bench, gens))
    verdicts, summary = evaluate(
        bench,
        gens,
        judge,
        both_orders=not args.single_order,
        tie_policy=args.tie_policy,
        concurrency=args.concurrency,
    )
    if args.out:
        write_jsonl(verdicts, args.out)
    if args.summary:
        write_json(summary, args.summary)
    _print_json(asdict(summary))
    output = args.out or args.summary
    if output:
        _manifest(args, started, output, [args.bench, args.gens, args.judge_template])
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    _require(args, "bench", "out")
    started = _now()
    bench = load_records(args.bench, BenchmarkEntry)
    refs = load_records(args.refs, ReferenceGeneration) if args.refs else None
    factors = parse_factors(args.factors)
    judge = _judge(args, required=False)
    cfg = _endpoint(args)
    label = args.model_label or cfg.model_name
    work = Path(args.work_dir) if args.work_dir else None

    def save(factor: float, scaled, gens, verdicts) -> None:
        if work is None:
            return
        tag = f"s{factor:g}"
        write_jsonl(scaled, work / f"bench_{tag}.jsonl")
        write_jsonl(gens, work / f"gens_{tag}.jsonl")
        if verdicts:
            write_jsonl(verdicts, work / f"verdicts_{tag}.jsonl")

    with ChatClient(cfg, args.cache_dir) as client:
        result = run_sweep(
            bench,
            factors,
            lambda b: generate_over_benchmark(client, b, args.concurrency, model_label=label),
            judge,
            refs=refs,
            both_orders=not args.single_order,
            tie_policy=args.tie_policy,
            label=args.label or label,
            on_stage=save,
        )
    write_json(result.to_json(), args.out)
    _print_json(result.to_json())
    _manifest(args, started, args.out, [args.bench, args.refs])
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    _require(args, "bench", "gens", "out_dir")
    started = _now()
    bench = load_records(args.bench, BenchmarkEntry)
    gens = load_records(args.gens, GenerationRecord)
    verdicts = load_records(args.verdicts, Verdict) if args.verdicts else None
    sweeps = []
    for path in args.sweep or ():
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{path}: cannot read sweep ({exc})") from exc
        sweep = SweepResult.from_json(doc)
        sweep.label = sweep.label or Path(path).stem
        sweeps.append(sweep)
    written = write_report(
        args.out_dir, bench, gens, verdicts, sweeps, tie_policy=args.tie_policy, png=not args.no_png
    )
    for p in written:
        print(p)
    _manifest(args, started, args.out_dir, [args.bench, args.gens, args.verdicts, *(args.sweep or ())])
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        args = _resolve(args)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args._func(args)
    except GenClientError as exc:
        print(f"lenlift: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, ValidationError, MetricsError, ValueError, OSError) as exc:
        print(f"lenlift: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
