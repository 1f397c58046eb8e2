import json
import math

import numpy as np
import pytest

from ppsynth.datasets import load_dataset
from ppsynth.diagnostics import ess
from ppsynth.grammar import parse
from ppsynth.inference import (
    PhaseState,
    PosteriorDraws,
    SamplerConfig,
    SamplerError,
    adaptation_windows,
    hamiltonian,
    leapfrog,
    nuts_sample,
)
from ppsynth.models import reference_source
from ppsynth.ppl.model import Dataset, bind


def model_of(prior, likelihood, columns, decls=None):
    decls = decls or " ".join(f"{k}: vector[{len(v)}];" for k, v in columns.items())
    text = f"model {{ data {{ {decls} }} prior {{ {prior} }} likelihood {{ {likelihood} }} }}"
    return bind(parse(text), Dataset("d", {k: np.asarray(v, dtype=float) for k, v in columns.items()}))


def std_normal_grad(q):
    return -0.5 * float(q @ q), -q


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(chains=1)
    with pytest.raises(ValueError):
        SamplerConfig(draws=0)
    with pytest.raises(ValueError):
        SamplerConfig(target_accept=1.0)
    cfg = SamplerConfig()
    assert (cfg.chains, cfg.draws, cfg.tune, cfg.target_accept, cfg.max_treedepth) == (4, 1000, 1000, 0.8, 10)
    assert cfg.divergence_threshold == 1000.0


def test_leapfrog_energy_drift():
    inv = np.ones(1)
    q = np.array([1.0])
    logp, grad = std_normal_grad(q)
    state = PhaseState(q, np.array([0.5]), logp, grad)
    h0 = hamiltonian(state, inv)
    for _ in range(100):
        state = leapfrog(state, 0.01, inv, std_normal_grad)
    assert abs(hamiltonian(state, inv) - h0) < 1e-4


def test_leapfrog_reversible():
    inv = np.array([1.0, 0.5, 2.0])
    rng = np.random.default_rng(0)
    q0, p0 = rng.normal(size=3), rng.normal(size=3)
    logp, grad = std_normal_grad(q0)
    state = PhaseState(q0, p0, logp, grad)
    for _ in range(50):
        state = leapfrog(state, 0.1, inv, std_normal_grad)
    back = PhaseState(state.q, -state.p, state.logp, state.grad)
    for _ in range(50):
        back = leapfrog(back, 0.1, inv, std_normal_grad)
    assert np.max(np.abs(back.q - q0)) < 1e-8
    assert np.max(np.abs(-back.p - p0)) < 1e-8


def test_nonfinite_energy():
    state = PhaseState(np.zeros(1), np.zeros(1), -math.inf, np.zeros(1))
    assert hamiltonian(state, np.ones(1)) == math.inf
    nan_state = PhaseState(np.zeros(1), np.zeros(1), math.nan, np.zeros(1))
    assert hamiltonian(nan_state, np.ones(1)) == math.inf


def test_standard_normal_moments():
    model = model_of("x ~ Normal(0, 1);", "y ~ Normal(0, 1);", {"y": [0.0]})
    draws = nuts_sample(model, SamplerConfig(seed=1))
    x = draws.param("x")
    assert x.shape == (4, 1000)
    assert -0.1 <= x.mean() <= 0.1
    assert 0.9 <= x.std() <= 1.1
    assert not draws.divergent.any()


def test_conjugate_posterior_within_three_mcse(oracles):
    case = oracles["conjugate_loo"]
    y = np.asarray(case["y"])
    s, m0, sd0 = case["sigma"], case["prior_mu"], case["prior_sd"]
    model = model_of(f"theta ~ Normal({m0}, {sd0});", f"y ~ Normal(theta, {s});", {"y": y})
    draws = nuts_sample(model, SamplerConfig(seed=2))
    v = 1.0 / (1.0 / sd0**2 + len(y) / s**2)
    m = v * (m0 / sd0**2 + y.sum() / s**2)
    theta = draws.param("theta")
    n_eff = ess(theta, "bulk")
    assert abs(theta.mean() - m) <= 3 * math.sqrt(v / n_eff)
    assert abs(theta.var() - v) <= 3 * v * math.sqrt(2.0 / n_eff)


def test_seeded_reproducibility_and_shapes():
    model = model_of("mu ~ Normal(0, 5); s ~ HalfNormal(2);", "y ~ Normal(mu, s);", {"y": [1.0, 2.5, 0.3]})
    cfg = SamplerConfig(chains=2, draws=150, tune=150, seed=9)
    a, b = nuts_sample(model, cfg), nuts_sample(model, cfg)
    assert np.array_equal(a.draws, b.draws) and np.array_equal(a.energy, b.energy)
    assert a.energy.shape == (2, 150) and a.divergent.shape == (2, 150)
    assert a.pointwise_loglik.shape == (2, 150, 3)
    assert a.labels == ["mu", "s"]
    assert np.all(a.param("s") > 0)
    # independent chain streams
    assert not np.array_equal(a.draws[0], a.draws[1])
    c = nuts_sample(model, SamplerConfig(chains=2, draws=150, tune=150, seed=10))
    assert not np.array_equal(a.draws, c.draws)


def test_pointwise_loglik_consistent_with_model():
    model = model_of("mu ~ Normal(0, 5); s ~ HalfNormal(2);", "y ~ Normal(mu, s);", {"y": [1.0, 2.5, 0.3]})
    draws = nuts_sample(model, SamplerConfig(chains=2, draws=50, tune=100, seed=4))
    for c, i in [(0, 0), (1, 17), (0, 49)]:
        theta = model.unconstrain(draws.draws[c, i])
        np.testing.assert_allclose(model.pointwise_loglik(theta), draws.pointwise_loglik[c, i], rtol=1e-10)


def test_boundary_divergences_are_flagged():
    # the likelihood scale is not constrained positive, so trajectories fall into -inf regions
    model = model_of("x ~ Normal(0.3, 1);", "y ~ Normal(0, x);", {"y": [0.05, -0.02]})
    draws = nuts_sample(model, SamplerConfig(chains=2, draws=300, tune=300, seed=0))
    assert draws.divergent.any()


def test_init_failure():
    model = model_of("x ~ Normal(0, 1);", "y ~ Normal(0, -1 * exp(x));", {"y": [0.0]})
    with pytest.raises(SamplerError) as err:
        nuts_sample(model, SamplerConfig(chains=2, draws=10, tune=10))
    assert err.value.kind == "init"


def test_leapfrog_budget():
    model = model_of("x ~ Normal(0, 1);", "y ~ Normal(x, 1);", {"y": [0.0]})
    with pytest.raises(SamplerError) as err:
        nuts_sample(model, SamplerConfig(chains=2, draws=1000, tune=1000, max_leapfrog=500))
    assert err.value.kind == "sampler"


def test_adaptation_windows():
    windows = adaptation_windows(1000)
    assert windows[0][0] == 75 and windows[-1][1] == 950
    for (a, b), (c, d) in zip(windows, windows[1:]):
        assert b == c and d - c >= b - a
    assert adaptation_windows(20) == [] or adaptation_windows(20)[-1][1] <= 20


def test_dump_round_trip():
    model = model_of("mu ~ Normal(0, 5);", "y ~ Normal(mu, 1);", {"y": [1.0, 2.0]})
    draws = nuts_sample(model, SamplerConfig(chains=2, draws=20, tune=20, seed=3))
    back = PosteriorDraws.from_json(json.loads(draws.dumps()))
    assert back.labels == draws.labels
    for key in ("draws", "energy", "divergent", "pointwise_loglik"):
        assert np.array_equal(getattr(back, key), getattr(draws, key))
    bad = draws.to_json()
    bad["energy"] = bad["energy"][:1]
    with pytest.raises(ValueError):
        PosteriorDraws.from_json(bad)
    with pytest.raises(ValueError):
        PosteriorDraws.from_json({**draws.to_json(), "schema_version": "9.0"})


@pytest.mark.slow
def test_centered_eight_schools_diverges(eight_schools):
    model = bind(parse(reference_source("eight_schools_centered")), eight_schools)
    draws = nuts_sample(model, SamplerConfig(seed=0))
    assert draws.divergent.sum() > 0
