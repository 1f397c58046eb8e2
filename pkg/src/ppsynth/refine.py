"""Search over model programs: generate, gate, evaluate, resample.

The loop keeps a prior block P and a likelihood block L. A candidate that
reaches the reliability threshold joins the valid set, and the next
candidate is generated from scratch. A candidate that misses it has its
likelihood redrawn for the first ``alpha`` failures of the run. After
that, the prior is redrawn and the likelihood is redrawn along with it.
Failures that never reach diagnostics (decoding, binding, sampling) use
the same budget. The run stops when ``beta`` valid programs have been
found or ``r_max`` candidates have been rejected, and returns the valid
program with the highest elpd.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .decoder import (
    DecodeError,
    DecoderConfig,
    DecodeStats,
    GeneratorError,
    data_decls_for,
    generate_likelihood,
    generate_prior,
)
from .decoder.generators import CandidateGenerator
from .diagnostics import DiagnosticsReport, Thresholds, diagnose
from .grammar import render
from .inference import SamplerConfig, SamplerError, nuts_sample
from .ppl import ast
from .ppl.model import BindError, Dataset, bind
from .semantics import program_is_valid

ACCEPT = "accept"
LIKELIHOOD_RESAMPLE = "likelihood-resample"
PRIOR_RESAMPLE = "prior-resample"
REGENERATE = "regenerate"


@dataclass
class RefineConfig:
    r_max: int = 100
    alpha: int = 2
    beta: int = 4
    thresholds: Thresholds = field(default_factory=Thresholds)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    seed: int = 0

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError("r_max must be at least 1")
        if not 0 <= self.alpha <= self.r_max:
            raise ValueError("alpha must lie in [0, r_max]")
        if self.beta < 1:
            raise ValueError("beta must be at least 1")
        if not 1 <= self.K <= 7:
            raise ValueError("the pass threshold zeta must lie in [1, 7]")

    @property
    def K(self) -> int:
        return self.thresholds.zeta


@dataclass
class Evaluation:
    """Outcome of running inference and diagnostics on one program."""

    report: Optional[DiagnosticsReport] = None
    failure: Optional[str] = None  # bind | init | sampler
    message: str = ""


Evaluator = Callable[[ast.ModelProgram, Dataset, SamplerConfig, Thresholds], Evaluation]


def evaluate_program(
    program: ast.ModelProgram, dataset: Dataset, sampler: SamplerConfig, thresholds: Thresholds
) -> Evaluation:
    try:
        model = bind(program, dataset)
    except BindError as exc:
        return Evaluation(failure="bind", message=f"{exc.kind}: {exc}")
    try:
        draws = nuts_sample(model, sampler)
    except SamplerError as exc:
        return Evaluation(failure=exc.kind, message=str(exc))
    try:
        report = diagnose(draws, thresholds)
    except ValueError as exc:
        return Evaluation(failure="sampler", message=str(exc))
    return Evaluation(report=report)


@dataclass
class Attempt:
    index: int
    origin: str  # how the candidate was built: initial, regenerate or a resample action
    program: Optional[str]
    phi: bool
    failure: Optional[str]
    message: str
    score: Optional[int]
    elpd: Optional[float]
    summary: Optional[dict]
    action: str
    r: int  # rejection counter after this attempt
    ell: int  # likelihood-resample counter after this attempt
    sampler_seed: Optional[int]
    tokens_generated: int
    tokens_discarded: int
    duplicate: bool

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        if out["summary"] is not None:
            out["summary"] = {k: _finite_or_str(v) for k, v in out["summary"].items()}
        out["elpd"] = _finite_or_str(self.elpd)
        return out


def _finite_or_str(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "NaN" if math.isnan(v) else ("Infinity" if v > 0 else "-Infinity")
    return v


@dataclass
class RunRecord:
    attempts: List[Attempt] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.attempts)

    @property
    def duplicates(self) -> int:
        return sum(a.duplicate for a in self.attempts)

    @property
    def actions(self) -> List[str]:
        return [a.action for a in self.attempts]

    def tokens(self) -> dict:
        return {
            "generated": sum(a.tokens_generated for a in self.attempts),
            "retried": sum(a.tokens_discarded for a in self.attempts),
        }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(a.to_json(), sort_keys=True) + "\n" for a in self.attempts)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


@dataclass
class ValidEntry:
    program: ast.ModelProgram
    report: DiagnosticsReport
    attempt: int


@dataclass
class SynthesisResult:
    best: Optional[ast.ModelProgram]
    report: Optional[DiagnosticsReport]
    record: RunRecord
    valid: List[ValidEntry]

    @property
    def ok(self) -> bool:
        return self.best is not None

    def __iter__(self):
        return iter((self.best, self.report, self.record))


def _elpd_key(entry: ValidEntry) -> float:
    e = float(entry.report.elpd)
    return e if math.isfinite(e) else -math.inf


def select_best(valid: List[ValidEntry]) -> ValidEntry:
    """Highest elpd; ties go to the higher score, then to the earlier find."""
    if not valid:
        raise ValueError("the valid set is empty")
    best = valid[0]
    for entry in valid[1:]:
        if (_elpd_key(entry), entry.report.score) > (_elpd_key(best), best.report.score):
            best = entry
    return best


def resample_likelihood(
    program: ast.ModelProgram, dataset: Dataset, generator: CandidateGenerator,
    config: Optional[DecoderConfig] = None, rng=None, stats: Optional[DecodeStats] = None,
) -> ast.ModelProgram:
    """Same data and prior blocks, freshly decoded likelihood block."""
    lik = generate_likelihood(dataset, program.prior_stmts, generator, config, rng=rng, stats=stats)
    return program.with_likelihood(lik)


def resample_prior(
    program: ast.ModelProgram, dataset: Dataset, generator: CandidateGenerator,
    config: Optional[DecoderConfig] = None, rng=None, stats: Optional[DecodeStats] = None,
) -> ast.ModelProgram:
    """Fresh prior block, then a likelihood decoded against it."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    prior = generate_prior(dataset, generator, config, rng=rng, stats=stats)
    lik = generate_likelihood(dataset, prior, generator, config, rng=rng, stats=stats)
    return ast.ModelProgram(program.data_decls, prior, lik)


def synthesize(
    dataset: Dataset,
    generator: CandidateGenerator,
    config: Optional[RefineConfig] = None,
    evaluator: Evaluator = evaluate_program,
    on_attempt: Optional[Callable[[Attempt], None]] = None,
) -> SynthesisResult:
    config = config or RefineConfig()
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    decode_rng = np.random.default_rng(seeds[0])
    sampler_rng = np.random.default_rng(seeds[1])
    data = data_decls_for(dataset)
    stats = DecodeStats()
    record = RunRecord()
    valid: List[ValidEntry] = []
    seen = set()
    prior: Optional[tuple] = None
    lik: Optional[tuple] = None
    origin = "initial"
    r = ell = 0

    while r < config.r_max and len(valid) < config.beta:
        before = (stats.tokens_generated, stats.tokens_discarded)
        failure, message, report, text, sampler_seed = None, "", None, None, None
        try:
            if prior is None:
                prior = generate_prior(dataset, generator, config.decoder, rng=decode_rng, stats=stats)
                lik = None
            if lik is None:
                lik = generate_likelihood(dataset, prior, generator, config.decoder, rng=decode_rng, stats=stats)
        except (DecodeError, GeneratorError) as exc:
            failure = getattr(exc, "kind", "generator")
            message = str(exc)
        phi = failure is None
        program = None
        if phi:
            program = ast.ModelProgram(data, prior, lik)
            text = render(program)
            phi = program_is_valid(program)
            if not phi:
                failure, message = "semantic", "program failed validation"
        if phi:
            sampler_seed = int(sampler_rng.integers(2**32))
            outcome = evaluator(program, dataset, replace(config.sampler, seed=sampler_seed), config.thresholds)
            report, failure, message = outcome.report, outcome.failure, outcome.message

        if not phi:
            action = REGENERATE
            r += 1
            prior = lik = None
        elif report is not None and report.score >= config.K:
            action = ACCEPT
            valid.append(ValidEntry(program, report, len(record)))
            prior = lik = None
        elif ell < config.alpha:
            action = LIKELIHOOD_RESAMPLE
            ell += 1
            r += 1
            lik = None
        else:
            action = PRIOR_RESAMPLE
            r += 1
            prior = lik = None

        attempt = Attempt(
            index=len(record),
            origin=origin,
            program=text,
            phi=phi,
            failure=failure,
            message=message,
            score=None if report is None else int(report.score),
            elpd=None if report is None else float(report.elpd),
            summary=None if report is None else report.summary(),
            action=action,
            r=r,
            ell=ell,
            sampler_seed=sampler_seed,
            tokens_generated=stats.tokens_generated - before[0],
            tokens_discarded=stats.tokens_discarded - before[1],
            duplicate=text is not None and text in seen,
        )
        if text is not None:
            seen.add(text)
        record.attempts.append(attempt)
        if on_attempt is not None:
            on_attempt(attempt)
        origin = "initial" if action == ACCEPT else action

    if not valid:
        return SynthesisResult(None, None, record, valid)
    best = select_best(valid)
    return SynthesisResult(best.program, best.report, record, valid)
