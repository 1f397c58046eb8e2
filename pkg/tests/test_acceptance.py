"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from ppsynth.cli import EXIT_NO_MODEL, EXIT_OK, main
from ppsynth.datasets import BUILTIN_NAMES, load_dataset
from ppsynth.decoder import BuiltinGrammarSampler, DecodeSession, MockGenerator, generate_program, sample_statement
from ppsynth.diagnostics import DiagnosticsReport, Thresholds, bfmi, ess, gpd_fit_k, psis_loo, reliability_score, split_rhat
from ppsynth.grammar import parse, render, render_statement
from ppsynth.inference import SamplerConfig, nuts_sample
from ppsynth.models import reference_source
from ppsynth.ppl.model import Dataset, bind
from ppsynth.refine import ACCEPT, LIKELIHOOD_RESAMPLE, PRIOR_RESAMPLE, REGENERATE, Evaluation, RefineConfig, synthesize
from ppsynth.semantics import program_is_valid, validate

pytestmark = pytest.mark.slow


def cli_report(argv, path):
    code = main(argv + ["--out", str(path)])
    return code, json.loads(path.read_text()) if path.exists() else None


def test_criterion_1_eight_schools(tmp_path, criterion):
    model = tmp_path / "eight_schools.ppl"
    model.write_text(reference_source("eight_schools"))
    start = time.perf_counter()
    code, report = cli_report(["eval", "--model", str(model), "--dataset", "eight_schools", "--seed", "0"],
                              tmp_path / "eval.json")
    elapsed = time.perf_counter() - start
    s = report["summary"]
    ok = (code == EXIT_OK and s["score"] == 7 and s["rhat_max"] <= 1.01 and s["divergences"] == 0
          and abs(s["elpd"] - (-30.70)) <= 1.5)
    criterion(1, "eight-schools reproduction", ok,
              f"score {s['score']}, rhat_max {s['rhat_max']:.4f}, divergences {s['divergences']}, "
              f"elpd {s['elpd']:.2f}, {elapsed:.0f}s")


def test_criterion_2_score_fidelity(criterion):
    start = time.perf_counter()
    indicators, score = reliability_score(
        rhat=4.13, ess_bulk=4.0, ess_tail=9.0, bfmi=[0.9], divergences=1634, elpd=-60.0, pareto_k=[0.2] * 11,
    )
    elapsed = time.perf_counter() - start
    criterion(2, "reliability score of the GP row", score == 3 and elapsed < 1e-3,
              f"indicators {indicators}, score {score}, {elapsed * 1e6:.0f}us")


def test_criterion_3_psis_loo_oracle(oracles, criterion):
    case = oracles["conjugate_loo"]
    y = np.asarray(case["y"])
    text = (
        f"model {{ data {{ y: vector[{len(y)}]; }} prior {{ theta ~ Normal({case['prior_mu']}, {case['prior_sd']}); }} "
        f"likelihood {{ y ~ Normal(theta, {case['sigma']}); }} }}"
    )
    model = bind(parse(text), Dataset("conjugate", {"y": y}))
    loo = psis_loo(nuts_sample(model, SamplerConfig(seed=0)).pointwise_loglik)
    gap = abs(loo.elpd - case["elpd_loo"])
    k_max = float(np.max(loo.pareto_k))
    criterion(3, "PSIS-LOO against exact conjugate LOO", gap <= 0.3 and k_max < 0.5,
              f"|diff| {gap:.3f}, max k {k_max:.3f}")


def test_criterion_4_diagnostic_oracles(criterion):
    rng = np.random.default_rng(0)
    offset = np.stack([rng.normal(0, 1e-3, 500), 10 + rng.normal(0, 1e-3, 500)])
    rhat = split_rhat(offset)
    iid = rng.normal(size=(4, 1000))
    bulk = ess(iid, "bulk")
    b = bfmi(np.array([[1.0, 2, 3, 4, 5], [1.0, 2, 3, 4, 5]]))
    k_hat = gpd_fit_k(stats.genpareto(0.5).rvs(size=1000, random_state=rng))
    ok = rhat > 1.05 and abs(bulk - iid.size) <= 0.1 * iid.size and np.allclose(b, 0.5) and abs(k_hat - 0.5) <= 0.1
    criterion(4, "diagnostic unit oracles", ok,
              f"rhat {rhat:.2f}, ess {bulk:.0f}/{iid.size}, bfmi {b[0]:.3f}, k {k_hat:.3f}")


ERROR_CLASSES = [
    ("std= parameter", "mu ~ Normal(0, std=10);", "phi3", (6, 7), "mu ~ Normal(0, 10);"),
    ("unknown distribution", "mu ~ ExtNormal(0);", "phi2", (2, 3), "mu ~ Normal(0, 10);"),
    ("unknown method", "b ~ random_coefs();", "phi2", (2, 3), "b ~ Normal(0, 10);"),
    ("unmatched brace", "mu ~ Normal{0, 1);", "phi1", (3, 4), "mu ~ Normal(0, 10);"),
]


def test_criterion_5_constrained_run_rate(criterion):
    start = time.perf_counter()
    failures = 0
    for name in BUILTIN_NAMES:
        ds = load_dataset(name)
        for seed in range(100):
            try:
                prog = generate_program(ds, BuiltinGrammarSampler(), rng=seed)
                reparsed = parse(render(prog))
                if not (reparsed == prog and program_is_valid(reparsed)):
                    failures += 1
                    continue
                bind(reparsed, ds)
            except Exception:
                failures += 1
    total = 100 * len(BUILTIN_NAMES)

    rejected = []
    for label, fragment, check, span, fixed in ERROR_CLASSES:
        report = validate(fragment)
        sess = DecodeSession.for_dataset(load_dataset("eight_schools"), rng=np.random.default_rng(0))
        sess.open_block("prior")
        stmt = sample_statement(sess, MockGenerator([fragment, fixed]))
        rejected.append(
            report.failed_check == check and report.violating_span == span
            and render_statement(stmt) == fixed and sess.stats.retries == 1
        )
    # a whole unconstrained program with an unmatched brace never reaches sampling
    try:
        parse("model { data { } prior { mu ~ Normal(0, 1); likelihood { y ~ Normal(mu, 1); } }")
        brace = False
    except Exception as exc:
        brace = getattr(exc, "position", None) is not None
    elapsed = time.perf_counter() - start
    ok = failures == 0 and all(rejected) and brace
    criterion(5, "constrained decoding run rate", ok,
              f"{total - failures}/{total} programs bind, {sum(rejected)}/{len(rejected)} error classes rejected, "
              f"{elapsed:.0f}s")


def _report(score, elpd):
    indicators = tuple([True] * score + [False] * (7 - score))
    one = np.ones(1)
    return DiagnosticsReport(["x"], one, one, one, one, 0, elpd, 1.0, np.zeros(1), indicators, score, Thresholds())


def _evaluator(scores):
    def evaluate(program, dataset, sampler, thresholds):
        key = " ".join(render_statement(s) for s in program.likelihood_stmts)
        return Evaluation(report=_report(scores.get(key, 0), -31.0))

    return evaluate


def _trace(result):
    return [(a.action, a.r, a.ell) for a in result.record.attempts]


def test_criterion_6_refinement_traces(tmp_path, criterion):
    prior, other_prior = "mu ~ Normal(0, 5); }", "tau ~ HalfNormal(5); }"
    lik = ["y ~ Normal(mu, sigma); }", "y ~ StudentT(3, mu, sigma); }", "y ~ Cauchy(mu, sigma); }"]
    eight = load_dataset("eight_schools")

    immediate = synthesize(eight, MockGenerator([prior, lik[0]] * 4), RefineConfig(),
                           evaluator=_evaluator({"y ~ Normal(mu, sigma);": 7}))
    first = _trace(immediate) == [(ACCEPT, 0, 0)] * 4 and len(immediate.valid) == 4

    script = [prior] + lik + [other_prior, "y ~ Normal(0, tau); }"] * 4
    resampled = synthesize(eight, MockGenerator(script), RefineConfig(alpha=2, beta=4),
                           evaluator=_evaluator({"y ~ Normal(0, tau);": 6}))
    second = _trace(resampled) == [
        (LIKELIHOOD_RESAMPLE, 1, 1), (LIKELIHOOD_RESAMPLE, 2, 2), (PRIOR_RESAMPLE, 3, 2),
    ] + [(ACCEPT, 3, 2)] * 4

    exhausted = synthesize(eight, MockGenerator(), RefineConfig(r_max=100), evaluator=_evaluator({}))
    code = main(["synth", "--dataset", "eight_schools", "--generator", "mock", "--r-max", "100", "--seed", "0",
                 "--out", str(tmp_path / "budget.json")])
    third = (
        len(exhausted.record) == 100 and not exhausted.ok
        and all(a.action == REGENERATE for a in exhausted.record.attempts) and code == EXIT_NO_MODEL
    )
    criterion(6, "refinement loop traces", first and second and third,
              f"immediate {first}, resample {second}, budget exit {code}")


def test_criterion_7_end_to_end_synthesis(tmp_path, criterion):
    valid, times, elpds = 0, [], []
    for seed in range(10):
        start = time.perf_counter()
        code, report = cli_report(
            ["synth", "--dataset", "eight_schools", "--generator", "builtin", "--seed", str(seed)],
            tmp_path / f"synth{seed}.json",
        )
        times.append(time.perf_counter() - start)
        if code == EXIT_OK and report["summary"]["score"] >= 5:
            valid += 1
            elpds.append(report["summary"]["elpd"])
        print(f"seed {seed}: exit {code}, {times[-1]:.0f}s, summary {report['summary']}")
    best = max(elpds) if elpds else -math.inf
    ok = valid >= 7 and max(times) < 600 and best >= -33
    criterion(7, "end-to-end synthesis on eight schools", ok,
              f"{valid}/10 valid, slowest {max(times):.0f}s, best elpd {best:.2f}")


def _without_timestamp(path):
    return "\n".join(line for line in path.read_text().splitlines() if '"created_at"' not in line)


def test_criterion_8_determinism(tmp_path, monkeypatch, criterion):
    model = tmp_path / "m.ppl"
    model.write_text(reference_source("eight_schools"))
    fast = ["--chains", "2", "--draws", "300", "--tune", "300", "--seed", "11"]
    commands = {
        "eval": ["eval", "--model", str(model), "--dataset", "eight_schools", "--dump", "draws.json"] + fast,
        "diagnose": ["diagnose", "draws.json", "--seed", "11"],
        "synth": ["synth", "--dataset", "eight_schools", "--r-max", "4", "--beta", "1"] + fast,
    }
    outputs = {}
    for run in ("a", "b"):
        workdir = tmp_path / run
        workdir.mkdir()
        monkeypatch.chdir(workdir)
        for name, argv in commands.items():
            main(argv + ["--out", f"{name}.json"])
        outputs[run] = {
            p.name: (_without_timestamp(p) if p.suffix == ".json" and p.name != "draws.json" else p.read_text())
            for p in sorted(workdir.iterdir())
        }
    same = outputs["a"] == outputs["b"] and len(outputs["a"]) >= 4
    criterion(8, "determinism under a fixed seed", same, f"{len(outputs['a'])} files compared")
