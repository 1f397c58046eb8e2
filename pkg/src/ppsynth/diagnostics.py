"""Convergence diagnostics, PSIS-LOO and the seven-indicator reliability score."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.fft import next_fast_len
from scipy.special import logsumexp
from scipy.stats import norm, rankdata

from .inference import PosteriorDraws

REPORT_VERSION = "1.0"

INDICATOR_NAMES = (
    "rhat",
    "bfmi",
    "ess_bulk",
    "divergences",
    "ess_tail",
    "elpd_finite",
    "pareto_k",
)


@dataclass(frozen=True)
class Thresholds:
    alpha_R: float = 1.05
    beta_bulk: float = 400.0
    beta_tail: float = 100.0
    gamma_bfmi: float = 0.3
    k_threshold: float = 0.7
    epsilon: float = 0.2
    zeta: int = 5

    def to_json(self) -> dict:
        return dict(self.__dict__)


# --- split R-hat and ESS --------------------------------------------------------


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped [chain, iteration]")
    return x


def split_chains(x) -> np.ndarray:
    """Halve every chain; with an odd length the middle draw is dropped."""
    x = _as_chains(x)
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def rank_normalize(x) -> np.ndarray:
    """Pooled fractional ranks mapped through the standard normal quantile."""
    x = np.asarray(x, dtype=float)
    ranks = rankdata(x, method="average").reshape(x.shape)
    return norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _is_constant(x) -> bool:
    return bool(np.ptp(x) < np.finfo(float).eps * max(1.0, float(np.max(np.abs(x)))))


def basic_rhat(chains) -> float:
    """sqrt(var_plus / W) for already split chains."""
    chains = _as_chains(chains)
    n = chains.shape[1]
    w = chains.var(axis=1, ddof=1).mean()
    b = n * chains.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def split_rhat(x) -> float:
    """Rank-normalized split R-hat: the larger of the bulk and folded versions.

    Constant draws return 1.0; ``diagnose`` flags them.
    """
    x = _as_chains(x)
    if x.shape[0] < 2 or x.shape[1] < 4:
        raise ValueError("split R-hat needs at least 2 chains of 4 draws")
    if not np.all(np.isfinite(x)):
        return math.nan
    if _is_constant(x):
        return 1.0
    split = split_chains(x)
    bulk = basic_rhat(rank_normalize(split))
    folded = np.abs(split - np.median(split))
    tail = basic_rhat(rank_normalize(folded)) if not _is_constant(folded) else 1.0
    return max(bulk, tail)


def autocovariance(x) -> np.ndarray:
    """Biased autocovariance of each chain (row) via FFT."""
    x = _as_chains(x)
    n = x.shape[1]
    m = next_fast_len(2 * n)
    centered = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(centered, n=m, axis=1)
    return np.fft.irfft(f * np.conjugate(f), n=m, axis=1)[:, :n] / n


def ess_raw(chains) -> float:
    """ESS of already split chains, truncated by Geyer's initial monotone sequence."""
    chains = _as_chains(chains)
    m, n = chains.shape
    total = m * n
    if _is_constant(chains):
        return float(total)
    acov = autocovariance(chains)
    mean_var = acov[:, 0].mean() * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    rho = np.zeros(n)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    # enforce a monotone sequence of pair sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2.0
        t += 2
    tau = -1.0 + 2.0 * rho[: max_t + 1].sum() + rho[max_t + 1: max_t + 2].sum()
    # antithetic chains can give tau < 1; cap ESS at S * log10(S)
    tau = max(tau, 1.0 / math.log10(total))
    if np.isnan(rho).any():
        return math.nan
    return float(total / tau)


def ess(x, kind: str = "bulk") -> float:
    """Bulk ESS of rank-normalized split chains, or tail ESS at 5% and 95%."""
    x = _as_chains(x)
    if x.shape[0] < 2 or x.shape[1] < 4:
        raise ValueError("ESS needs at least 2 chains of 4 draws")
    if not np.all(np.isfinite(x)):
        return math.nan
    if _is_constant(x):
        return float(x.size)
    if kind == "bulk":
        return ess_raw(rank_normalize(split_chains(x)))
    if kind == "tail":
        out = []
        for q in (0.05, 0.95):
            indicator = (x <= np.quantile(x, q)).astype(float)
            out.append(ess_raw(split_chains(indicator)))
        return float(min(out))
    raise ValueError(f"unknown ESS kind {kind!r}")


def bfmi(energy) -> np.ndarray:
    """Per chain: mean squared successive energy difference over energy variance."""
    energy = _as_chains(energy)
    if energy.shape[1] < 2:
        raise ValueError("BFMI needs at least 2 iterations per chain")
    num = np.square(np.diff(energy, axis=1)).mean(axis=1)
    den = energy.var(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


# --- Pareto smoothing -------------------------------------------------------------


def gpd_fit(exceedances) -> Tuple[float, float]:
    """(k, sigma) of a generalized Pareto fit to sorted positive exceedances.

    Empirical-Bayes profile estimator (Zhang and Stephens) with a weak prior
    pulling k towards 0.5. Fewer than 5 values give k = inf.
    """
    x = np.sort(np.asarray(exceedances, dtype=float))
    n = x.size
    if n < 5:
        return math.inf, math.nan
    if x[-1] <= 0 or not np.all(np.isfinite(x)):
        return math.inf, math.nan
    if np.ptp(x) == 0:
        return 0.0, float(x[0]) if x[0] > 0 else math.nan
    prior_bs, prior_k = 3.0, 10.0
    m = 30 + int(n ** 0.5)
    b = 1.0 - np.sqrt(m / (np.arange(1, m + 1, dtype=float) - 0.5))
    b /= prior_bs * x[int(n / 4 + 0.5) - 1]
    b += 1.0 / x[-1]
    k = np.log1p(-b[:, None] * x).mean(axis=1)
    profile = n * (np.log(-(b / k)) - k - 1.0)
    weights = 1.0 / np.exp(profile - profile[:, None]).sum(axis=1)
    keep = weights >= 10 * np.finfo(float).eps
    weights, b = weights[keep], b[keep]
    weights /= weights.sum()
    b_post = float(np.sum(b * weights))
    k_post = float(np.log1p(-b_post * x).mean())
    sigma = -k_post / b_post
    k_post = (n * k_post + prior_k * 0.5) / (n + prior_k)
    return k_post, sigma


def gpd_fit_k(exceedances) -> float:
    return gpd_fit(exceedances)[0]


def gpd_quantile(probs, k: float, sigma: float) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if abs(k) < np.finfo(float).eps:
        return -sigma * np.log1p(-probs)
    return sigma * np.expm1(-k * np.log1p(-probs)) / k


def tail_size(n_samples: int) -> int:
    return int(math.ceil(min(0.2 * n_samples, 3.0 * math.sqrt(n_samples))))


def psis_smooth(log_weights) -> Tuple[np.ndarray, float]:
    """Pareto-smooth one vector of log weights; returns (normalized log weights, k)."""
    x = np.array(log_weights, dtype=float)
    x -= x.max()
    s = x.size
    order = np.argsort(x, kind="stable")
    m = tail_size(s)
    cutoff = max(x[order[-m - 1]], np.log(np.finfo(float).tiny)) if m < s else -math.inf
    tail = np.flatnonzero(x > cutoff)
    k = math.inf
    if tail.size >= 5:
        tail = tail[np.argsort(x[tail], kind="stable")]
        base = math.exp(cutoff)
        k, sigma = gpd_fit(np.exp(x[tail]) - base)
        if math.isfinite(k) and math.isfinite(sigma):
            probs = (np.arange(tail.size) + 0.5) / tail.size
            x[tail] = np.log(gpd_quantile(probs, k, sigma) + base)
            x[x > 0] = 0.0
    elif np.ptp(x) == 0:
        k = 0.0  # identical weights leave nothing to smooth
    x -= logsumexp(x)
    return x, k


@dataclass(frozen=True)
class LooResult:
    elpd: float
    se: float
    pareto_k: np.ndarray
    pointwise: np.ndarray


def psis_loo(pointwise_loglik) -> LooResult:
    """PSIS-LOO from a [draw, observation] (or [chain, draw, observation]) array."""
    ll = np.asarray(pointwise_loglik, dtype=float)
    if ll.ndim == 3:
        ll = ll.reshape(-1, ll.shape[-1])
    if ll.ndim != 2:
        raise ValueError("expected log-likelihood shaped [draw, observation]")
    n = ll.shape[1]
    elpd_i = np.empty(n)
    ks = np.empty(n)
    for i in range(n):
        col = ll[:, i]
        if not np.all(np.isfinite(col)):
            elpd_i[i] = math.nan
            ks[i] = math.inf
            continue
        lw, ks[i] = psis_smooth(-col)
        elpd_i[i] = logsumexp(lw + col)
    elpd = float(elpd_i.sum())
    if not math.isfinite(elpd):
        elpd = math.nan
    se = float(math.sqrt(n * elpd_i.var())) if n and math.isfinite(elpd) else math.nan
    return LooResult(elpd, se, ks, elpd_i)


# --- reliability score ---------------------------------------------------------


def _worst(values, fn) -> float:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0 or np.isnan(arr).any():
        return math.nan
    return float(fn(arr))


def reliability_score(
    rhat,
    ess_bulk,
    ess_tail,
    bfmi,
    divergences,
    elpd,
    pareto_k,
    thresholds: Thresholds = Thresholds(),
) -> Tuple[Tuple[bool, ...], int]:
    """The seven pass/fail indicators and their count.

    Array arguments are reduced to their worst value; a metric that could
    not be computed (NaN) fails its indicator.
    """
    t = thresholds
    k = np.asarray(pareto_k, dtype=float).ravel()
    k_ok = float(np.mean(k <= t.k_threshold)) if k.size else 0.0
    s = (
        _worst(rhat, np.max) <= t.alpha_R,
        _worst(bfmi, np.min) > t.gamma_bfmi,
        _worst(ess_bulk, np.min) >= t.beta_bulk,
        int(divergences) == 0,
        _worst(ess_tail, np.min) >= t.beta_tail,
        math.isfinite(float(elpd)),
        k_ok >= 1.0 - t.epsilon,
    )
    s = tuple(bool(v) for v in s)
    return s, int(sum(s))


# --- report ---------------------------------------------------------------------


def _enc(v: float):
    v = float(v)
    if math.isfinite(v):
        return v
    return "NaN" if math.isnan(v) else ("Infinity" if v > 0 else "-Infinity")


def _dec(v) -> float:
    if isinstance(v, str):
        return {"NaN": math.nan, "Infinity": math.inf, "-Infinity": -math.inf}[v]
    if v is None:
        return math.nan
    return float(v)


@dataclass
class DiagnosticsReport:
    labels: List[str]
    rhat: np.ndarray
    ess_bulk: np.ndarray
    ess_tail: np.ndarray
    bfmi: np.ndarray
    divergences: int
    elpd: float
    elpd_se: float
    pareto_k: np.ndarray
    indicators: Tuple[bool, ...]
    score: int
    thresholds: Thresholds = field(default_factory=Thresholds)
    flags: List[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.score >= self.thresholds.zeta

    def summary(self) -> Dict[str, float]:
        k = np.asarray(self.pareto_k)
        return {
            "score": self.score,
            "rhat_max": _worst(self.rhat, np.max),
            "ess_bulk_min": _worst(self.ess_bulk, np.min),
            "ess_tail_min": _worst(self.ess_tail, np.min),
            "bfmi_min": _worst(self.bfmi, np.min),
            "divergences": self.divergences,
            "k_good_fraction": float(np.mean(k <= self.thresholds.k_threshold)) if k.size else 0.0,
            "elpd": self.elpd,
            "elpd_se": self.elpd_se,
        }

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_VERSION,
            "rhat": {lab: _enc(v) for lab, v in zip(self.labels, self.rhat)},
            "ess_bulk": {lab: _enc(v) for lab, v in zip(self.labels, self.ess_bulk)},
            "ess_tail": {lab: _enc(v) for lab, v in zip(self.labels, self.ess_tail)},
            "bfmi": [_enc(v) for v in self.bfmi],
            "divergences": int(self.divergences),
            "elpd": _enc(self.elpd),
            "elpd_se": _enc(self.elpd_se),
            "pareto_k": [_enc(v) for v in self.pareto_k],
            "indicators": dict(zip(INDICATOR_NAMES, self.indicators)),
            "score": int(self.score),
            "thresholds": self.thresholds.to_json(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiagnosticsReport":
        version = str(obj.get("schema_version", ""))
        if version.split(".")[0] != REPORT_VERSION.split(".")[0]:
            raise ValueError(f"unsupported diagnostics report version {version!r}")
        labels = list(obj["rhat"])
        thresholds = Thresholds(**obj.get("thresholds", {}))
        indicators = tuple(bool(obj["indicators"][n]) for n in INDICATOR_NAMES)
        score = int(obj["score"])
        if score != sum(indicators):
            raise ValueError("score does not match indicators")
        return cls(
            labels,
            np.array([_dec(obj["rhat"][k]) for k in labels]),
            np.array([_dec(obj["ess_bulk"][k]) for k in labels]),
            np.array([_dec(obj["ess_tail"][k]) for k in labels]),
            np.array([_dec(v) for v in obj["bfmi"]]),
            int(obj["divergences"]),
            _dec(obj["elpd"]),
            _dec(obj["elpd_se"]),
            np.array([_dec(v) for v in obj["pareto_k"]]),
            indicators,
            score,
            thresholds,
            list(obj.get("flags", [])),
        )


def diagnose(draws: PosteriorDraws, thresholds: Thresholds = Thresholds()) -> DiagnosticsReport:
    """Every metric and the reliability score for one set of draws."""
    if draws.n_chains < 2:
        raise ValueError("diagnostics need at least 2 chains")
    if draws.n_draws < 4:
        raise ValueError("diagnostics need at least 4 draws per chain")
    flags: List[str] = []
    rhats, bulk, tail = [], [], []
    for j, lab in enumerate(draws.labels):
        x = draws.draws[:, :, j]
        if np.all(np.isfinite(x)) and _is_constant(x):
            flags.append(f"constant draws for {lab}")
        rhats.append(split_rhat(x))
        bulk.append(ess(x, "bulk"))
        tail.append(ess(x, "tail"))
    energy_bfmi = bfmi(draws.energy)
    if np.isnan(energy_bfmi).any():
        flags.append("zero energy variance in at least one chain")
    loo = psis_loo(draws.pointwise_loglik)
    if not math.isfinite(loo.elpd):
        flags.append("elpd is not finite")
    divergences = int(np.sum(draws.divergent))
    indicators, score = reliability_score(
        rhats, bulk, tail, energy_bfmi, divergences, loo.elpd, loo.pareto_k, thresholds
    )
    return DiagnosticsReport(
        list(draws.labels),
        np.array(rhats),
        np.array(bulk),
        np.array(tail),
        energy_bfmi,
        divergences,
        loo.elpd,
        loo.se,
        loo.pareto_k,
        indicators,
        score,
        thresholds,
        flags,
    )


def exact_score(report: DiagnosticsReport, thresholds: Optional[Thresholds] = None) -> int:
    """Recompute the score from the stored metrics."""
    return reliability_score(
        report.rhat,
        report.ess_bulk,
        report.ess_tail,
        report.bfmi,
        report.divergences,
        report.elpd,
        report.pareto_k,
        thresholds or report.thresholds,
    )[1]


__all__ = [
    "Thresholds", "split_rhat", "ess", "bfmi", "gpd_fit", "gpd_fit_k", "psis_smooth", "psis_loo",
    "reliability_score", "DiagnosticsReport", "diagnose", "exact_score", "LooResult",
]
