import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppsynth.datasets import load_dataset
from ppsynth.decoder import BuiltinGrammarSampler, MockGenerator
from ppsynth.diagnostics import DiagnosticsReport, Thresholds
from ppsynth.grammar import parse, render, render_statement
from ppsynth.ppl.ast import free_names, statement_exprs
from ppsynth.refine import (
    ACCEPT,
    LIKELIHOOD_RESAMPLE,
    PRIOR_RESAMPLE,
    REGENERATE,
    Evaluation,
    RefineConfig,
    ValidEntry,
    resample_likelihood,
    resample_prior,
    select_best,
    synthesize,
)
from ppsynth.semantics import program_is_valid

EIGHT = load_dataset("eight_schools")
P1 = "mu ~ Normal(0, 5); }"
P2 = "tau ~ HalfNormal(5); }"
L_NORMAL = "y ~ Normal(mu, sigma); }"
L_STUDENT = "y ~ StudentT(3, mu, sigma); }"
L_CAUCHY = "y ~ Cauchy(mu, sigma); }"
L_TAU = "y ~ Normal(0, tau); }"


def fake_report(score, elpd):
    indicators = tuple([True] * score + [False] * (7 - score))
    return DiagnosticsReport(
        ["x"], np.ones(1), np.ones(1), np.ones(1), np.ones(1), 0, elpd, 1.0, np.zeros(1),
        indicators, score, Thresholds(),
    )


class ScoreBook:
    """Evaluator that looks scores up by likelihood text; unknown programs score 0."""

    def __init__(self, scores, elpd=None):
        self.scores = scores
        self.elpd = elpd or {}
        self.seen = []

    def __call__(self, program, dataset, sampler, thresholds):
        text = render(program)
        self.seen.append((text, sampler.seed))
        key = " ".join(render_statement(s) for s in program.likelihood_stmts)
        return Evaluation(report=fake_report(self.scores.get(key, 0), self.elpd.get(key, -40.0)))


def trace(result):
    return [(a.action, a.r, a.ell) for a in result.record.attempts]


def test_immediate_acceptances():
    gen = MockGenerator([P1, L_NORMAL] * 4)
    book = ScoreBook({"y ~ Normal(mu, sigma);": 7})
    result = synthesize(EIGHT, gen, RefineConfig(), evaluator=book)
    assert trace(result) == [(ACCEPT, 0, 0)] * 4
    assert result.ok and len(result.valid) == 4
    assert render(result.best) == render(parse(book.seen[0][0]))
    assert result.record.duplicates == 3


def test_likelihood_then_prior_resample():
    gen = MockGenerator([P1, L_NORMAL, L_STUDENT, L_CAUCHY] + [P2, L_TAU] * 4)
    book = ScoreBook({"y ~ Normal(0, tau);": 6})
    result = synthesize(EIGHT, gen, RefineConfig(alpha=2, beta=4), evaluator=book)
    assert trace(result) == [
        (LIKELIHOOD_RESAMPLE, 1, 1),
        (LIKELIHOOD_RESAMPLE, 2, 2),
        (PRIOR_RESAMPLE, 3, 2),
        (ACCEPT, 3, 2),
        (ACCEPT, 3, 2),
        (ACCEPT, 3, 2),
        (ACCEPT, 3, 2),
    ]
    progs = [a.program for a in result.record.attempts]
    prior_of = lambda text: text.split("likelihood")[0]
    # likelihood resamples keep the prior block verbatim
    assert prior_of(progs[0]) == prior_of(progs[1]) == prior_of(progs[2])
    assert prior_of(progs[3]) != prior_of(progs[2])
    assert [a.origin for a in result.record.attempts[:4]] == [
        "initial", LIKELIHOOD_RESAMPLE, LIKELIHOOD_RESAMPLE, PRIOR_RESAMPLE,
    ]


def test_ell_is_never_reset():
    gen = MockGenerator([P1, L_NORMAL, L_STUDENT, L_CAUCHY, P2, L_TAU, P1, L_NORMAL, P1, L_CAUCHY])
    result = synthesize(EIGHT, gen, RefineConfig(r_max=5, alpha=2), evaluator=ScoreBook({}))
    assert [a for a, _, _ in trace(result)] == [
        LIKELIHOOD_RESAMPLE, LIKELIHOOD_RESAMPLE, PRIOR_RESAMPLE, PRIOR_RESAMPLE, PRIOR_RESAMPLE,
    ]
    assert not result.ok


def test_budget_exhaustion_with_hostile_generator():
    gen = MockGenerator()
    result = synthesize(EIGHT, gen, RefineConfig(r_max=100), evaluator=ScoreBook({}))
    assert len(result.record) == 100
    assert all(a.action == REGENERATE and not a.phi for a in result.record.attempts)
    assert result.record.attempts[-1].r == 100
    assert result.record.attempts[0].failure == "decode-retry-cap"
    assert not result.ok and result.best is None and result.valid == []


def test_record_jsonl(tmp_path):
    gen = MockGenerator([P1, L_NORMAL, L_STUDENT])
    result = synthesize(EIGHT, gen, RefineConfig(r_max=2), evaluator=ScoreBook({}))
    path = tmp_path / "run.jsonl"
    result.record.write(str(path))
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [l["action"] for l in lines] == [LIKELIHOOD_RESAMPLE, LIKELIHOOD_RESAMPLE]
    assert {"program", "phi", "failure", "score", "tokens_generated", "tokens_discarded"} <= set(lines[0])
    assert result.record.tokens()["generated"] > 0


def test_select_best():
    a, b = fake_report(6, -31.0), fake_report(6, -30.7)
    entries = [ValidEntry("A", a, 0), ValidEntry("B", b, 1)]
    assert select_best(entries).program == "B"
    tie = [ValidEntry("A", fake_report(6, -30.7), 0), ValidEntry("B", fake_report(7, -30.7), 1)]
    assert select_best(tie).program == "B"
    same = [ValidEntry("A", fake_report(7, -30.7), 0), ValidEntry("B", fake_report(7, -30.7), 1)]
    assert select_best(same).program == "A"
    with pytest.raises(ValueError):
        select_best([])


@given(st.lists(st.floats(-1e3, -1e-3), min_size=1, max_size=8), st.floats(0.01, 100))
def test_select_best_scale_invariant(elpds, c):
    entries = [ValidEntry(i, fake_report(7, e), i) for i, e in enumerate(elpds)]
    scaled = [ValidEntry(i, fake_report(7, e * c), i) for i, e in enumerate(elpds)]
    assert select_best(entries).program == select_best(scaled).program


def test_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(r_max=0)
    with pytest.raises(ValueError):
        RefineConfig(alpha=101)
    with pytest.raises(ValueError):
        RefineConfig(beta=0)
    with pytest.raises(ValueError):
        RefineConfig(thresholds=Thresholds(zeta=8))
    assert RefineConfig().K == 5


def test_resample_likelihood_preserves_prior():
    prog = parse(
        "model { data { y: vector[8]; sigma: vector[8]; } prior { mu ~ Normal(0, 5); tau ~ HalfNormal(5); } "
        "likelihood { y ~ Cauchy(mu, tau); } }"
    )
    gen = BuiltinGrammarSampler()
    a = resample_likelihood(prog, EIGHT, gen, rng=np.random.default_rng(4))
    b = resample_likelihood(prog, EIGHT, gen, rng=np.random.default_rng(4))
    assert a == b
    assert a.prior_stmts == prog.prior_stmts and a.data_decls == prog.data_decls
    assert program_is_valid(a)
    for seed in range(10):
        c = resample_likelihood(prog, EIGHT, gen, rng=np.random.default_rng(seed))
        names = {n for s in c.likelihood_stmts for n in _names(s)}
        assert names <= {"y", "sigma", "mu", "tau"}


def _names(stmt):
    for expr in statement_exprs(stmt):
        yield from (n.id for n in free_names(expr))


def test_resample_prior_redecodes_likelihood():
    prog = parse(
        "model { data { y: vector[8]; sigma: vector[8]; } prior { a ~ Normal(0, 5); b ~ HalfNormal(1); } "
        "likelihood { y ~ Normal(a, b); } }"
    )
    gen = MockGenerator(["c ~ Normal(0, 1); }", "y ~ Normal(c, sigma); }"])
    new = resample_prior(prog, EIGHT, gen)
    assert [s.target for s in new.prior_stmts] == ["c"]
    assert render_statement(new.likelihood_stmts[0]) == "y ~ Normal(c, sigma);"
    a = resample_prior(prog, EIGHT, BuiltinGrammarSampler(), rng=5)
    b = resample_prior(prog, EIGHT, BuiltinGrammarSampler(), rng=5)
    assert a == b and program_is_valid(a)


class RandomBook:
    def __init__(self, rng):
        self.rng = rng

    def __call__(self, program, dataset, sampler, thresholds):
        if self.rng.random() < 0.1:
            return Evaluation(failure="sampler", message="budget")
        return Evaluation(report=fake_report(int(self.rng.integers(0, 8)), float(self.rng.normal(-35, 3))))


@settings(max_examples=25)
@given(
    st.integers(0, 2**20), st.integers(1, 12), st.integers(0, 4), st.integers(1, 4), st.integers(1, 7),
)
def test_loop_invariants(seed, r_max, alpha, beta, zeta):
    alpha = min(alpha, r_max)
    config = RefineConfig(r_max=r_max, alpha=alpha, beta=beta, thresholds=Thresholds(zeta=zeta), seed=seed)
    result = synthesize(EIGHT, BuiltinGrammarSampler(), config, evaluator=RandomBook(np.random.default_rng(seed)))
    record = result.record.attempts
    rejected = [a for a in record if a.action != ACCEPT]
    assert len(rejected) <= r_max
    assert sum(a.action == LIKELIHOOD_RESAMPLE for a in record) <= alpha
    assert len(result.valid) <= beta
    assert all(e.report.score >= zeta and program_is_valid(e.program) for e in result.valid)
    assert all((a.action == ACCEPT) == (a.score is not None and a.score >= zeta) for a in record)
    if result.ok:
        assert all(float(e.report.elpd) <= float(result.report.elpd) for e in result.valid)
    # the run stops exactly when one of its two budgets is spent
    assert len(result.valid) == beta or (record and record[-1].r == r_max)


def test_replay_is_deterministic():
    config = RefineConfig(r_max=6, seed=3)
    runs = [
        synthesize(EIGHT, BuiltinGrammarSampler(), config, evaluator=RandomBook(np.random.default_rng(0)))
        for _ in range(2)
    ]
    assert runs[0].record.to_jsonl() == runs[1].record.to_jsonl()
