"""Command-line interface: ``ppsynth eval | synth | diagnose``.

Exit codes:
    0  the reported program reaches the reliability threshold
    1  failure: bad input, syntax or semantic error, sampler failure
    2  the program ran but its score is below the threshold
    3  synthesis found no valid program within its budget
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .datasets import DatasetError, load_dataset
from .decoder import BuiltinGrammarSampler, DecoderConfig, GeneratorError, HttpGenerator, MockGenerator
from .diagnostics import DiagnosticsReport, Thresholds, diagnose
from .grammar import LexError, ParseError, parse, render, render_statement, tokenize
from .inference import PosteriorDraws, SamplerConfig, SamplerError, nuts_sample
from .ppl.model import BindError, bind
from .refine import RefineConfig, synthesize
from .semantics import validate_program

REPORT_VERSION = "1.0"
EXIT_OK, EXIT_FAILURE, EXIT_UNRELIABLE, EXIT_NO_MODEL = 0, 1, 2, 3
SYNTH_MAX_LEAPFROG = 150_000


class CommandError(Exception):
    """A pipeline failure with its class: input, syntax, semantic, init or sampler."""

    def __init__(self, failure: str, message: str, span=None):
        super().__init__(message)
        self.failure = failure
        self.span = span


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "NaN" if math.isnan(obj) else ("Infinity" if obj > 0 else "-Infinity")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _report(command: str, args, **fields) -> dict:
    out = {
        "schema_version": REPORT_VERSION,
        "command": command,
        "version": __version__,
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": args.seed,
    }
    out.update(fields)
    return _jsonable(out)


def load_report(text: str) -> dict:
    obj = json.loads(text)
    version = str(obj.get("schema_version", ""))
    if version.split(".")[0] != REPORT_VERSION.split(".")[0]:
        raise ValueError(f"unsupported report version {version!r}")
    return obj


def _emit(report: dict, out: Optional[str]) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _summary_table(rows: List[dict]) -> str:
    head = f"{'run':>5} {'score':>5} {'rhat_max':>9} {'ess_min':>8} {'div':>5} {'k_ok':>5} {'elpd':>16}"
    lines = [head]
    for row in rows:
        s = row.get("summary")
        if not s:
            lines.append(f"{row['label']:>5} {'-':>5} {row.get('failure', 'no valid model')}")
            continue
        ess_min = min(s["ess_bulk_min"], s["ess_tail_min"])
        lines.append(
            f"{row['label']:>5} {s['score']:>5} {s['rhat_max']:>9.3f} {ess_min:>8.0f} {s['divergences']:>5}"
            f" {s['k_good_fraction']:>5.2f} {s['elpd']:>8.2f} ± {s['elpd_se']:<5.2f}"
        )
    return "\n".join(lines)


def _thresholds(args) -> Thresholds:
    return Thresholds(zeta=args.zeta)


def _sampler(args, max_leapfrog=None) -> SamplerConfig:
    budget = args.max_leapfrog if args.max_leapfrog is not None else max_leapfrog
    return SamplerConfig(
        chains=args.chains, draws=args.draws, tune=args.tune, seed=args.seed,
        max_leapfrog=budget if budget and budget > 0 else None,
    )


def _load_dataset(source: str):
    try:
        return load_dataset(source)
    except DatasetError as exc:
        raise CommandError("input", str(exc)) from exc


def _span_text(tokens, span) -> str:
    start, stop = span
    if start >= len(tokens):
        return "end of input"
    return " ".join(t.text for t in tokens[start:max(stop, start + 1)])


def _check_program(text: str):
    """Parse and validate; raises CommandError naming the failing stage."""
    try:
        program = parse(text)
    except LexError as exc:
        raise CommandError("syntax", f"lexical error: {exc}") from exc
    except ParseError as exc:
        raise CommandError("syntax", str(exc), (exc.position, exc.position + 1)) from exc
    for report in validate_program(program):
        if not report.valid:
            stmt = report.statement
            where = ""
            if stmt is not None and report.violating_span is not None:
                # spans index the source token stream
                where = f" at '{_span_text(tokenize(text), report.violating_span)}' in '{render_statement(stmt)}'"
            raise CommandError(
                "semantic", f"{report.failed_check} failed{where}: {report.message}", report.violating_span
            )
    if not program.likelihood_stmts:
        raise CommandError("semantic", "the likelihood block is empty")
    return program


def evaluate_text(text: str, dataset, sampler: SamplerConfig, thresholds: Thresholds):
    program = _check_program(text)
    try:
        model = bind(program, dataset)
    except BindError as exc:
        raise CommandError("semantic", f"{exc.kind}: {exc}") from exc
    try:
        draws = nuts_sample(model, sampler)
    except SamplerError as exc:
        raise CommandError(exc.kind, str(exc)) from exc
    return program, draws, diagnose(draws, thresholds)


def _exit_for(report: DiagnosticsReport) -> int:
    return EXIT_OK if report.valid else EXIT_UNRELIABLE


def cmd_eval(args) -> int:
    dataset = _load_dataset(args.dataset)
    try:
        text = Path(args.model).read_text(encoding="utf-8")
    except OSError as exc:
        raise CommandError("input", f"cannot read model file: {exc}") from exc
    program, draws, report = evaluate_text(text, dataset, _sampler(args), _thresholds(args))
    if args.dump:
        Path(args.dump).write_text(draws.dumps(), encoding="utf-8")
    _emit(
        _report(
            "eval", args,
            dataset=dataset.name,
            program=render(program),
            sampler=_sampler(args).__dict__,
            diagnostics=report.to_json(),
            summary=report.summary(),
            failure=None,
        ),
        args.out,
    )
    _log(_summary_table([{"label": "eval", "summary": report.summary()}]))
    return _exit_for(report)


def _generator(args):
    if args.generator == "builtin":
        return BuiltinGrammarSampler(temperature=args.temperature)
    if args.generator == "mock":
        return MockGenerator.from_file(args.mock_script) if args.mock_script else MockGenerator()
    if not args.endpoint:
        raise CommandError("input", "--generator http needs --endpoint")
    try:
        return HttpGenerator.from_env(args.endpoint, args.api_key_env, temperature=args.temperature)
    except GeneratorError as exc:
        raise CommandError("input", str(exc)) from exc


def _alpha(args) -> int:
    return args.alpha if args.alpha is not None else min(2, args.r_max)


def _synth_one(args, dataset, seed: int):
    config = RefineConfig(
        r_max=args.r_max, alpha=_alpha(args), beta=args.beta,
        thresholds=_thresholds(args),
        sampler=replace(_sampler(args, SYNTH_MAX_LEAPFROG), seed=seed),
        decoder=DecoderConfig(temperature=args.temperature),
        seed=seed,
    )

    def progress(a):
        status = a.failure or f"score {a.score}"
        _log(f"[seed {seed}] attempt {a.index}: {status} -> {a.action}")

    return synthesize(dataset, _generator(args), config, on_attempt=progress if args.verbose else None)


def _path_with_suffix(base: Optional[str], suffix: str, seed: int, multi: bool) -> Optional[str]:
    if not base:
        return None
    p = Path(base)
    stem = f"{p.stem}_seed{seed}" if multi else p.stem
    return str(p.with_name(stem + suffix))


def cmd_synth(args) -> int:
    dataset = _load_dataset(args.dataset)
    seeds = [args.seed + i for i in range(max(1, args.seeds))]
    multi = len(seeds) > 1
    for base in (args.out, args.record):
        if base:
            Path(base).parent.mkdir(parents=True, exist_ok=True)
    runs, rows = [], []
    for seed in seeds:
        result = _synth_one(args, dataset, seed)
        record_path = _path_with_suffix(args.record, ".jsonl", seed, multi) or (
            _path_with_suffix(args.out, ".jsonl", seed, multi)
        )
        if record_path:
            result.record.write(record_path)
        program_text = render(result.best) if result.ok else None
        program_path = _path_with_suffix(args.out, ".ppl", seed, multi)
        if program_path and program_text:
            Path(program_path).write_text(program_text, encoding="utf-8")
        run = {
            "seed": seed,
            "status": "ok" if result.ok else "no-valid-model",
            "program": program_text,
            "program_path": program_path,
            "diagnostics": result.report.to_json() if result.ok else None,
            "summary": result.report.summary() if result.ok else None,
            "attempts": len(result.record),
            "valid_found": len(result.valid),
            "duplicates": result.record.duplicates,
            "run_record_path": record_path,
            "tokens": result.record.tokens(),
        }
        runs.append(run)
        rows.append({"label": str(seed), "summary": run["summary"]})
        if not result.ok:
            where = f"; attempts recorded in {record_path}" if record_path else ""
            _log(f"seed {seed}: no valid program within r_max={args.r_max}{where}")

    ok = [r for r in runs if r["status"] == "ok"]
    best = max(ok, key=lambda r: (_finite(r["summary"]["elpd"]), r["summary"]["score"])) if ok else None
    fields = dict(
        dataset=dataset.name,
        generator=args.generator,
        refine={"r_max": args.r_max, "alpha": _alpha(args), "beta": args.beta, "zeta": args.zeta},
        status="ok" if best else "no-valid-model",
        program=best["program"] if best else None,
        diagnostics=best["diagnostics"] if best else None,
        run_record_path=best["run_record_path"] if best else (runs[0]["run_record_path"] if runs else None),
        tokens={k: sum(r["tokens"][k] for r in runs) for k in ("generated", "retried")},
    )
    if multi:
        fields["runs"] = runs
    else:
        fields.update({k: runs[0][k] for k in ("attempts", "valid_found", "duplicates", "summary")})
    _emit(_report("synth", args, **fields), _path_with_suffix(args.out, ".json", args.seed, False))
    _log(_summary_table(rows))
    return EXIT_OK if best else EXIT_NO_MODEL


def _finite(v) -> float:
    v = float(v) if not isinstance(v, str) else math.nan
    return v if math.isfinite(v) else -math.inf


def cmd_diagnose(args) -> int:
    try:
        obj = json.loads(Path(args.draws).read_text(encoding="utf-8"))
        draws = PosteriorDraws.from_json(obj)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise CommandError("input", f"cannot load draws dump: {exc}") from exc
    try:
        report = diagnose(draws, _thresholds(args))
    except ValueError as exc:
        raise CommandError("input", str(exc)) from exc
    _emit(
        _report("diagnose", args, draws_path=str(args.draws), diagnostics=report.to_json(),
                summary=report.summary(), failure=None),
        args.out,
    )
    _log(_summary_table([{"label": "dump", "summary": report.summary()}]))
    return _exit_for(report)


def _common(p: argparse.ArgumentParser, sampler: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None, help="seed for all randomness (drawn and printed if absent)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--zeta", type=int, default=5, help="reliability score needed to count as valid")
    if sampler:
        p.add_argument("--chains", type=int, default=4)
        p.add_argument("--draws", type=int, default=1000)
        p.add_argument("--tune", type=int, default=1000)
        p.add_argument("--max-leapfrog", type=int, default=None,
                       help="leapfrog step budget per program across all chains (0 = unlimited)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppsynth", description="Synthesize and check probabilistic programs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="sample one model program and score it")
    p.add_argument("--model", required=True, help="model program file")
    p.add_argument("--dataset", required=True, help="builtin dataset name or dataset JSON file")
    p.add_argument("--dump", help="also write the posterior draws dump here")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="search for a reliable model program")
    p.add_argument("--dataset", required=True)
    p.add_argument("--generator", choices=("builtin", "http", "mock"), default="builtin")
    p.add_argument("--endpoint", help="chat completions URL for --generator http")
    p.add_argument("--api-key-env", help="environment variable holding the API key")
    p.add_argument("--mock-script", help="JSON list (or lines) of fragments for --generator mock")
    p.add_argument("--temperature", type=float, default=0.3)
    p.add_argument("--r-max", type=int, default=100)
    p.add_argument("--alpha", type=int, default=None,
                   help="likelihood resamples before prior resamples (default 2, capped at --r-max)")
    p.add_argument("--beta", type=int, default=4, help="valid programs to collect")
    p.add_argument("--record", help="run record JSONL path")
    p.add_argument("--seeds", type=int, default=1, help="run this many consecutive seeds")
    p.add_argument("--verbose", action="store_true", help="log every attempt")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("diagnose", help="recompute diagnostics from a draws dump")
    p.add_argument("draws", help="draws dump written by eval --dump")
    _common(p, sampler=False)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().generate_state(1)[0] >> 1)
        _log(f"seed: {args.seed}")
    if not 1 <= args.zeta <= 7:
        parser.error("--zeta must lie in 1..7")
    try:
        return args.func(args)
    except CommandError as exc:
        where = f" (tokens {exc.span[0]}..{exc.span[1]})" if exc.span else ""
        _log(f"error [{exc.failure}]{where}: {exc}")
        return EXIT_FAILURE
    except ValueError as exc:
        _log(f"error [input]: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
