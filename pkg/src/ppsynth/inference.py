"""No-U-Turn sampling over the unconstrained parameter space.

Trajectories grow by doubling in a random direction, samples are drawn
multinomially in proportion to exp(-H), and a tree stops growing when the
generalized no-U-turn criterion fails across the whole tree or across the
boundaries between its two halves. Warmup adapts the step size by dual
averaging and a diagonal inverse metric over expanding windows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .ppl.model import BoundModel

DUMP_FORMAT = "ppsynth-draws"
DUMP_VERSION = "1.0"


class SamplerError(RuntimeError):
    """Inference failure; ``kind`` is "init" or "sampler"."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    draws: int = 1000
    tune: int = 1000
    target_accept: float = 0.8
    max_treedepth: int = 10
    divergence_threshold: float = 1000.0
    seed: int = 0
    init_radius: float = 2.0
    init_attempts: int = 10
    max_leapfrog: Optional[int] = None  # total budget across chains; None = unlimited

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("at least 2 chains are needed for split R-hat")
        if self.draws < 1 or self.tune < 1:
            raise ValueError("draws and tune must be at least 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_treedepth < 1:
            raise ValueError("max_treedepth must be at least 1")


@dataclass
class PosteriorDraws:
    """Post-warmup draws, with arrays indexed [chain, iteration, ...]."""

    labels: List[str]
    draws: np.ndarray  # constrained values, (chains, draws, params)
    energy: np.ndarray  # (chains, draws)
    divergent: np.ndarray  # (chains, draws) bool
    pointwise_loglik: np.ndarray  # (chains, draws, observations)
    stats: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def param(self, label: str) -> np.ndarray:
        return self.draws[:, :, self.labels.index(label)]

    def to_json(self) -> dict:
        return {
            "format": DUMP_FORMAT,
            "schema_version": DUMP_VERSION,
            "layout": list(self.labels),
            "draws": self.draws.tolist(),
            "energy": self.energy.tolist(),
            "divergent": self.divergent.astype(bool).tolist(),
            "pointwise_loglik": self.pointwise_loglik.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PosteriorDraws":
        if not isinstance(obj, dict):
            raise ValueError("draws dump must be a JSON object")
        version = str(obj.get("schema_version", DUMP_VERSION))
        if version.split(".")[0] != DUMP_VERSION.split(".")[0]:
            raise ValueError(f"unsupported draws dump version {version}")
        missing = [k for k in ("layout", "draws", "energy", "divergent", "pointwise_loglik") if k not in obj]
        if missing:
            raise ValueError(f"draws dump lacks {', '.join(missing)}")
        try:
            draws = np.asarray(obj["draws"], dtype=float)
            energy = np.asarray(obj["energy"], dtype=float)
            divergent = np.asarray(obj["divergent"], dtype=bool)
            loglik = np.asarray(obj["pointwise_loglik"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"malformed draws dump: {exc}") from exc
        labels = [str(x) for x in obj["layout"]]
        if draws.ndim != 3 or energy.ndim != 2 or divergent.shape != energy.shape or loglik.ndim != 3:
            raise ValueError("draws dump arrays have inconsistent dimensions")
        if draws.shape[:2] != energy.shape or loglik.shape[:2] != energy.shape or draws.shape[2] != len(labels):
            raise ValueError("draws dump arrays have inconsistent dimensions")
        return cls(labels, draws, energy, divergent, loglik)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


# --- integrator -----------------------------------------------------------------


@dataclass
class PhaseState:
    q: np.ndarray
    p: np.ndarray
    logp: float
    grad: np.ndarray


def kinetic(p: np.ndarray, inv_metric: np.ndarray) -> float:
    return 0.5 * float(np.dot(p, inv_metric * p))


def hamiltonian(state: PhaseState, inv_metric: np.ndarray) -> float:
    h = -state.logp + kinetic(state.p, inv_metric)
    return h if h == h else math.inf


def leapfrog(state: PhaseState, step_size: float, inv_metric: np.ndarray, logp_grad) -> PhaseState:
    """One velocity-Verlet step; a negative step integrates backwards in time."""
    p = state.p + 0.5 * step_size * state.grad
    q = state.q + step_size * inv_metric * p
    logp, grad = logp_grad(q)
    p = p + 0.5 * step_size * grad
    return PhaseState(q, p, logp, grad)


# --- trajectory building ----------------------------------------------------------


class _Tree:
    __slots__ = (
        "left", "right", "p_sharp_left", "p_sharp_right", "rho", "log_w", "sample", "sample_h", "depth",
    )

    def outer(self, direction):
        return self.right if direction > 0 else self.left


def _no_u_turn(p_sharp_minus, p_sharp_plus, rho) -> bool:
    return float(np.dot(p_sharp_plus, rho)) > 0 and float(np.dot(p_sharp_minus, rho)) > 0


def _merged_ok(left: _Tree, right: _Tree, rho) -> bool:
    """No-U-turn checks over the merged tree and across the seam between halves."""
    if not _no_u_turn(left.p_sharp_left, right.p_sharp_right, rho):
        return False
    if not _no_u_turn(left.p_sharp_left, right.p_sharp_left, left.rho + right.left.p):
        return False
    return _no_u_turn(left.p_sharp_right, right.p_sharp_right, right.rho + left.right.p)


class _Transition:
    """Bookkeeping for one NUTS transition."""

    def __init__(self, sampler: "_ChainSampler", step: float):
        self.s = sampler
        self.step = step
        self.n_leapfrog = 0
        self.sum_accept = 0.0
        self.divergent = False

    def leaf(self, state: PhaseState, direction: int, h0: float) -> Optional[_Tree]:
        s = self.s
        s.count_leapfrog()
        new = leapfrog(state, direction * self.step, s.inv_metric, s.model_logp_grad)
        self.n_leapfrog += 1
        h = hamiltonian(new, s.inv_metric)
        if h - h0 > s.config.divergence_threshold or not math.isfinite(h):
            self.divergent = True
            return None
        self.sum_accept += math.exp(min(0.0, h0 - h))
        t = _Tree()
        t.left = t.right = new
        t.p_sharp_left = t.p_sharp_right = s.inv_metric * new.p
        t.rho = new.p.copy()
        t.log_w = h0 - h
        t.sample = new
        t.sample_h = h
        t.depth = 0
        return t

    def build(self, state: PhaseState, depth: int, direction: int, h0: float) -> Optional[_Tree]:
        if depth == 0:
            return self.leaf(state, direction, h0)
        first = self.build(state, depth - 1, direction, h0)
        if first is None:
            return None
        second = self.build(first.outer(direction), depth - 1, direction, h0)
        if second is None:
            return None
        left, right = (first, second) if direction > 0 else (second, first)
        t = _Tree()
        t.left, t.right = left.left, right.right
        t.p_sharp_left, t.p_sharp_right = left.p_sharp_left, right.p_sharp_right
        t.rho = left.rho + right.rho
        t.log_w = float(np.logaddexp(first.log_w, second.log_w))
        if math.log(self.s.rng.uniform()) < second.log_w - t.log_w:
            t.sample, t.sample_h = second.sample, second.sample_h
        else:
            t.sample, t.sample_h = first.sample, first.sample_h
        t.depth = depth
        if not _merged_ok(left, right, t.rho):
            return None
        return t


class _ChainSampler:
    def __init__(self, model: BoundModel, config: SamplerConfig, rng: np.random.Generator, budget: List[int]):
        self.model = model
        self.model_logp_grad = model._logp_grad
        self.config = config
        self.rng = rng
        self.budget = budget
        self.inv_metric = np.ones(model.dim)

    def count_leapfrog(self):
        if self.budget[0] is not None:
            self.budget[0] -= 1
            if self.budget[0] < 0:
                raise SamplerError("sampler", "leapfrog budget exhausted")

    def initial_point(self) -> PhaseState:
        cfg = self.config
        dim = self.model.dim
        for _ in range(cfg.init_attempts):
            q = self.rng.uniform(-cfg.init_radius, cfg.init_radius, size=dim)
            logp, grad = self.model_logp_grad(q)
            if math.isfinite(logp):
                return PhaseState(q, np.zeros(dim), logp, grad)
        raise SamplerError(
            "init", f"initial evaluation failed: no finite log density in {cfg.init_attempts} jittered starts"
        )

    def draw_momentum(self) -> np.ndarray:
        return self.rng.standard_normal(self.model.dim) / np.sqrt(self.inv_metric)

    def find_step_size(self, state: PhaseState, step: float) -> float:
        """Double or halve the step until one leapfrog crosses acceptance 0.8."""
        target = math.log(0.8)

        def delta(eps):
            z = PhaseState(state.q, self.draw_momentum(), state.logp, state.grad)
            h0 = hamiltonian(z, self.inv_metric)
            self.count_leapfrog()
            new = leapfrog(z, eps, self.inv_metric, self.model_logp_grad)
            d = h0 - hamiltonian(new, self.inv_metric)
            return d if d == d else -math.inf

        direction = 1 if delta(step) > target else -1
        for _ in range(100):
            d = delta(step)
            if direction == 1 and not d > target:
                break
            if direction == -1 and not d < target:
                break
            step = step * 2.0 if direction == 1 else step * 0.5
            if step > 1e7 or step < 1e-12:
                break
        return step

    def transition(self, state: PhaseState, step: float):
        """Returns (new state, energy, divergent, accept stat, tree depth, leapfrogs)."""
        p0 = self.draw_momentum()
        z0 = PhaseState(state.q, p0, state.logp, state.grad)
        h0 = hamiltonian(z0, self.inv_metric)
        tr = _Transition(self, step)
        tree = _Tree()
        tree.left = tree.right = tree.sample = z0
        tree.p_sharp_left = tree.p_sharp_right = self.inv_metric * p0
        tree.rho = p0.copy()
        tree.log_w = 0.0
        tree.sample_h = h0
        depth = 0
        while depth < self.config.max_treedepth:
            direction = 1 if self.rng.uniform() > 0.5 else -1
            sub = tr.build(tree.outer(direction), depth, direction, h0)
            if sub is None:
                break
            depth += 1
            if sub.log_w > tree.log_w or math.log(self.rng.uniform()) < sub.log_w - tree.log_w:
                tree.sample, tree.sample_h = sub.sample, sub.sample_h
            left, right = (tree, sub) if direction > 0 else (sub, tree)
            rho = left.rho + right.rho
            ok = _merged_ok(left, right, rho)
            merged = _Tree()
            merged.left, merged.right = left.left, right.right
            merged.p_sharp_left, merged.p_sharp_right = left.p_sharp_left, right.p_sharp_right
            merged.rho = rho
            merged.log_w = float(np.logaddexp(tree.log_w, sub.log_w))
            merged.sample, merged.sample_h = tree.sample, tree.sample_h
            tree = merged
            if not ok:
                break
        accept = tr.sum_accept / tr.n_leapfrog if tr.n_leapfrog else 0.0
        return tree.sample, tree.sample_h, tr.divergent, accept, depth, tr.n_leapfrog


class _DualAveraging:
    def __init__(self, step: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.restart(step)

    def restart(self, step: float):
        self.mu = math.log(10.0 * step)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept: float) -> float:
        self.counter += 1
        accept = min(1.0, accept)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = x_eta * x + (1.0 - x_eta) * self.x_bar
        return math.exp(x)

    def final(self) -> float:
        return math.exp(self.x_bar)


def adaptation_windows(tune: int, init_buffer=75, term_buffer=50, base_window=25):
    """End iterations (exclusive) of the metric adaptation windows."""
    if tune < 20:
        return []
    if init_buffer + term_buffer + base_window > tune:
        init_buffer = int(0.15 * tune)
        term_buffer = int(0.1 * tune)
        base_window = tune - init_buffer - term_buffer
    ends = []
    start = init_buffer
    size = base_window
    last = tune - term_buffer
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        ends.append((start, end))
        start = end
        size *= 2
    return ends


def _regularized_variance(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    var = samples.var(axis=0, ddof=1) if n > 1 else np.ones(samples.shape[1])
    return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def _run_chain(model: BoundModel, config: SamplerConfig, rng: np.random.Generator, budget: List[int]):
    sampler = _ChainSampler(model, config, rng, budget)
    state = sampler.initial_point()
    step = sampler.find_step_size(state, 1.0)
    adapt = _DualAveraging(step, config.target_accept)
    windows = adaptation_windows(config.tune)
    window_idx = 0
    window_samples: List[np.ndarray] = []

    for it in range(config.tune):
        state, _, _, accept, _, _ = sampler.transition(state, step)
        step = adapt.update(accept)
        if window_idx < len(windows):
            start, end = windows[window_idx]
            if start <= it < end:
                window_samples.append(state.q)
            if it + 1 == end:
                sampler.inv_metric = _regularized_variance(np.asarray(window_samples))
                window_samples = []
                window_idx += 1
                step = sampler.find_step_size(state, step)
                adapt.restart(step)
    step = adapt.final()

    n = config.draws
    raw = np.empty((n, model.dim))
    energy = np.empty(n)
    divergent = np.zeros(n, dtype=bool)
    accept_stat = np.empty(n)
    depth = np.empty(n, dtype=int)
    n_leap = np.empty(n, dtype=int)
    for i in range(n):
        state, h, div, acc, d, nl = sampler.transition(state, step)
        raw[i] = state.q
        energy[i] = h
        divergent[i] = div
        accept_stat[i] = acc
        depth[i] = d
        n_leap[i] = nl
    return raw, energy, divergent, accept_stat, depth, n_leap, step, sampler.inv_metric


def nuts_sample(model: BoundModel, config: SamplerConfig = SamplerConfig()) -> PosteriorDraws:
    """Run ``config.chains`` independent chains and collect post-warmup draws.

    Chains use independent generator streams spawned from ``config.seed`` and
    run one after another; results are ordered by chain index.
    """
    if model.dim < 1:
        raise SamplerError("init", "model has no free parameters")
    streams = np.random.SeedSequence(config.seed).spawn(config.chains)
    budget = [config.max_leapfrog]
    results = []
    with np.errstate(all="ignore"):
        for c in range(config.chains):
            results.append(_run_chain(model, config, np.random.default_rng(streams[c]), budget))

    chains, n, dim = config.chains, config.draws, model.dim
    draws = np.empty((chains, n, dim))
    loglik = np.empty((chains, n, model.n_obs))
    for c, res in enumerate(results):
        for i in range(n):
            ev = model.evaluate(res[0][i])
            draws[c, i] = model.flatten(ev.values)
            loglik[c, i] = ev.pointwise
    stats = {
        "accept_stat": np.stack([r[3] for r in results]),
        "tree_depth": np.stack([r[4] for r in results]),
        "n_leapfrog": np.stack([r[5] for r in results]),
        "step_size": np.array([r[6] for r in results]),
        "inv_metric": np.stack([r[7] for r in results]),
    }
    return PosteriorDraws(
        model.param_labels(),
        draws,
        np.stack([r[1] for r in results]),
        np.stack([r[2] for r in results]),
        loglik,
        stats,
    )
