import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppsynth.datasets import load_dataset
from ppsynth.grammar import parse
from ppsynth.models import reference_source
from ppsynth.ppl.distributions import REGISTRY
from ppsynth.ppl.model import BindError, Dataset, bind

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def program(prior, likelihood, data="y: vector[1];"):
    return parse(f"model {{ data {{ {data} }} prior {{ {prior} }} likelihood {{ {likelihood} }} }}")


def test_registry_contents():
    normal = REGISTRY["Normal"]
    assert [(p.name, p.domain) for p in normal.params] == [("mu", "real"), ("sigma", "positive")]
    assert "ExtNormal" not in REGISTRY
    binomial = REGISTRY["Binomial"]
    assert not binomial.continuous and binomial.support == "nonneg-int"
    assert set(REGISTRY) >= {
        "Normal", "HalfNormal", "HalfCauchy", "Cauchy", "Exponential", "Uniform", "Beta",
        "Gamma", "LogNormal", "StudentT", "Binomial", "Poisson", "Bernoulli",
    }


def test_logp_matches_scipy_oracle(oracles):
    for case in oracles["logp"]:
        spec = REGISTRY[case["dist"]]
        lp, _ = spec.logp(np.float64(case["x"]), *map(np.float64, case["params"]))
        assert float(lp) == pytest.approx(case["logp"], rel=1e-12, abs=1e-12), case


# one valid parameter point generator per distribution: (x, params)
def _point(name, rng):
    pos = lambda: float(rng.uniform(0.3, 4.0))
    real = lambda: float(rng.normal(0, 2))
    unit = lambda: float(rng.uniform(0.05, 0.95))
    if name == "Normal":
        return real(), [real(), pos()]
    if name in ("HalfNormal", "HalfCauchy", "Exponential"):
        return pos(), [pos()]
    if name == "Cauchy":
        return real(), [real(), pos()]
    if name == "Uniform":
        lo = real()
        hi = lo + pos()
        return float(rng.uniform(lo, hi)), [lo, hi]
    if name == "Beta":
        return unit(), [pos(), pos()]
    if name in ("Gamma", "LogNormal"):
        return pos(), [pos() if name == "Gamma" else real(), pos()]
    if name == "StudentT":
        return real(), [pos(), real(), pos()]
    if name == "Binomial":
        n = int(rng.integers(1, 30))
        return int(rng.integers(0, n + 1)), [n, unit()]
    if name == "Poisson":
        return int(rng.integers(0, 15)), [pos()]
    if name == "Bernoulli":
        return int(rng.integers(0, 2)), [unit()]
    raise KeyError(name)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_distribution_gradients_match_finite_differences(name):
    spec = REGISTRY[name]
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    h = 1e-5
    for _ in range(100):
        x, params = _point(name, rng)
        args = [np.float64(x)] + [np.float64(p) for p in params]
        _, grads = spec.logp(*args)
        # discrete values and integer counts have no derivative
        slots = list(range(len(args))) if spec.continuous else list(range(1, len(args)))
        if name == "Binomial":
            slots = [2]
        for i in slots:
            g = grads[i]
            up, down = list(args), list(args)
            up[i] += h
            down[i] -= h
            fd = (float(spec.logp(*up)[0]) - float(spec.logp(*down)[0])) / (2 * h)
            assert float(g) == pytest.approx(fd, rel=1e-6, abs=1e-6), (name, i, args)


def test_standard_normal_twice():
    model = bind(program("mu ~ Normal(0, 1);", "y ~ Normal(mu, 1);"), Dataset("d", {"y": [0.0]}))
    lp, grad = model.logp_grad(np.zeros(1))
    assert lp == pytest.approx(-2 * LOG_SQRT_2PI, abs=1e-14)
    assert grad.tolist() == [0.0]


def test_bind_eight_schools(eight_schools):
    model = bind(parse(reference_source("eight_schools")), eight_schools)
    assert model.n_obs == 8
    assert model.dim == 10
    assert model.pointwise_loglik(np.zeros(model.dim)).shape == (8,)


def test_bind_errors():
    data = Dataset("d", {"y": [1.0]})
    with pytest.raises(BindError) as err:
        bind(program("mu ~ Normal(0, 1);", "y ~ Normal(mu, 1);", "y: vector[1]; z: vector[1];"), data)
    assert err.value.kind == "missing-column"
    with pytest.raises(BindError) as err:
        bind(program("k ~ Poisson(3);", "y ~ Normal(k, 1);"), data)
    assert err.value.kind == "discrete-prior"
    with pytest.raises(BindError) as err:
        bind(program("mu ~ Normal(0, 1);", "y ~ Normal(mu, 1);", "y: vector[3];"), data)
    assert err.value.kind == "length-mismatch"


def _finite_diff(model, theta, h=1e-5):
    out = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        out[i] = (model.logp(theta + e) - model.logp(theta - e)) / (2 * h)
    return out


def test_dugongs_gradient_matches_finite_differences():
    model = bind(parse(reference_source("dugongs")), load_dataset("dugongs"))
    rng = np.random.default_rng(3)
    for _ in range(5):
        theta = rng.uniform(-1, 1, size=model.dim)
        lp, grad = model.logp_grad(theta)
        assert np.isfinite(lp)
        np.testing.assert_allclose(grad, _finite_diff(model, theta), rtol=1e-6, atol=1e-6)


# every distribution reached through a bound model, parameters fed by priors
MODEL_CASES = {
    "Normal": ("x ~ Normal(a, exp(b));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "HalfNormal": ("x ~ HalfNormal(exp(a));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "HalfCauchy": ("x ~ HalfCauchy(exp(a));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "Cauchy": ("x ~ Cauchy(a, exp(b));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "Exponential": ("x ~ Exponential(exp(a));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "Uniform": ("x ~ Uniform(a, a + exp(b));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "Beta": ("x ~ Beta(exp(a), exp(b));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "Gamma": ("x ~ Gamma(exp(a), exp(b));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "LogNormal": ("x ~ LogNormal(a, exp(b));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "StudentT": ("x ~ StudentT(exp(a), b, exp(a));", "y ~ Normal(x, 1);", "y: vector[1];", {"y": [0.4]}),
    "Binomial": ("x = a;", "y ~ Binomial(n, invlogit(a + b));", "y: intvector[2]; n: intvector[2];",
                 {"y": [3, 5], "n": [10, 7]}),
    "Poisson": ("x = a;", "y ~ Poisson(exp(a - b));", "y: intvector[2];", {"y": [3, 0]}),
    "Bernoulli": ("x = a;", "y ~ Bernoulli(invlogit(a * b));", "y: intvector[2];", {"y": [1, 0]}),
}


@pytest.mark.parametrize("name", sorted(MODEL_CASES))
def test_bound_model_gradients(name):
    prior, lik, decls, cols = MODEL_CASES[name]
    cols = {k: np.asarray(v) for k, v in cols.items()}
    model = bind(program("a ~ Normal(0, 1); b ~ Normal(0, 1); " + prior, lik, decls), Dataset("d", cols))
    rng = np.random.default_rng(len(name))
    for _ in range(100):
        theta = rng.uniform(-1.5, 1.5, size=model.dim)
        lp, grad = model.logp_grad(theta)
        assert np.isfinite(lp)
        np.testing.assert_allclose(grad, _finite_diff(model, theta), rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("name", ["eight_schools", "eight_schools_centered", "dugongs", "surgical", "peregrine", "gp"])
def test_additivity(name):
    dataset = load_dataset(name.replace("_centered", ""))
    model = bind(parse(reference_source(name)), dataset)
    rng = np.random.default_rng(1)
    for _ in range(10):
        theta = rng.uniform(-1, 1, size=model.dim)
        ev = model.evaluate(theta)
        total = sum(ev.prior_terms) + ev.pointwise.sum() + ev.log_jacobian
        assert model.logp(theta) == pytest.approx(total, rel=1e-10, abs=1e-10)
        assert model.logp(theta) == model.logp(theta.copy())


def test_surgical_pointwise_nonpositive():
    model = bind(parse(reference_source("surgical")), load_dataset("surgical"))
    pw = model.pointwise_loglik(np.zeros(model.dim))
    assert pw.shape == (12,)
    assert np.all(np.isfinite(pw)) and np.all(pw <= 0)


def test_nonfinite_density_is_in_band():
    model = bind(program("s ~ Normal(0, 1);", "y ~ Normal(0, s);"), Dataset("d", {"y": [0.5]}))
    lp, grad = model.logp_grad(np.array([-1.0]))
    assert lp == -np.inf
    assert np.all(grad == 0)


@pytest.mark.parametrize("expr", ["2 / (1 - 1)", "0 / 0", "log(0) / 0", "2 / sigma0"])
def test_constant_division_by_zero_is_in_band(expr):
    prog = program(f"mu ~ Normal(0, 1); s = {expr};", "y ~ Normal(mu, s);", "y: vector[2]; sigma0: real;")
    m = bind(prog, Dataset("d", {"y": np.array([1.0, 2.0]), "sigma0": np.array(0.0)}))
    lp, grad = m.logp_grad(np.zeros(m.dim))
    assert lp == -math.inf and np.all(grad == 0)
    assert not np.any(np.isfinite(m.pointwise_loglik(np.zeros(m.dim))))


def test_transform_examples():
    model = bind(
        program("s ~ HalfNormal(1); p ~ Beta(2, 2); u ~ Uniform(-1, 3);", "y ~ Normal(0, s);"),
        Dataset("d", {"y": [0.5]}),
    )
    theta = model.transform(np.array([1.0, 0.5, 1.0]), "to-unconstrained")
    np.testing.assert_allclose(theta, [0.0, 0.0, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        model.transform(np.array([-1.0, 0.5, 0.0]), "to-unconstrained")


@given(st.lists(st.floats(-8, 8), min_size=4, max_size=4))
def test_transform_round_trip(values):
    model = bind(
        program("s ~ HalfNormal(1); p ~ Beta(2, 2); u ~ Uniform(-1, 3); m ~ Normal(0, 1);", "y ~ Normal(m, s);"),
        Dataset("d", {"y": [0.5]}),
    )
    theta = np.asarray(values)
    back = model.transform(model.transform(theta, "to-constrained"), "to-unconstrained")
    np.testing.assert_allclose(back, theta, atol=1e-12 * 8e3, rtol=1e-12 * 8e3)


def test_transform_round_trip_thousand_points():
    model = bind(
        program("s ~ HalfNormal(1); p ~ Beta(2, 2); u ~ Uniform(-1, 3); m ~ Normal(0, 1);", "y ~ Normal(m, s);"),
        Dataset("d", {"y": [0.5]}),
    )
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        theta = rng.uniform(-3, 3, size=4)
        back = model.transform(model.transform(theta, "to-constrained"), "to-unconstrained")
        worst = max(worst, float(np.max(np.abs(back - theta))))
    assert worst < 1e-12


@pytest.mark.parametrize("prior", ["x ~ Normal(0.5, 2);", "x ~ HalfNormal(1);", "x ~ Beta(2, 3);", "x ~ Uniform(-1, 2);", "x ~ Gamma(2, 1.5);"])
def test_jacobian_integrates_to_one(prior):
    model = bind(program(prior, "y ~ Normal(0, 1);"), Dataset("d", {"y": [0.0]}))
    grid = np.linspace(-40, 40, 16001)
    dens = np.array([math.exp(model.logp(np.array([u])) + LOG_SQRT_2PI) for u in grid])
    mass = np.trapezoid(dens, grid) if hasattr(np, "trapezoid") else np.trapz(dens, grid)
    assert mass == pytest.approx(1.0, abs=1e-3)
