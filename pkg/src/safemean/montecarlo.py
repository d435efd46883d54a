"""Monte Carlo measurement of disappointment and conservatism probabilities,
rate fitting, large-deviation rates, and population variance-ratio curves.

Reproducibility contract: every trial draws from its own RNG substream keyed
by (master seed, trial index), so results are bit-identical regardless of
batching or worker-thread count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtri
from scipy.stats import binom

from .core import (
    DistributionSpec,
    LogNormal,
    Pareto,
    PointMass,
    Sample,
    ScaledBernoulli,
    UniformBounded,
    survival_probability,
    true_mean,
)
from .dual import solve_kl_dro_dual_batch
from .estimators import (
    EstimatorConfig,
    estimate,
    kl_disappointment_bound,
    truncation_constants,
)

__all__ = [
    "TrialReport",
    "RateFit",
    "draw_sample",
    "disappointment_probability",
    "conservatism_probability",
    "cramer_rate",
    "laplace_transform",
    "rate_fit",
    "variance_ratio_curve",
    "solve_population_dual",
    "pareto_variance_ratio_limit",
    "wilson_interval",
    "exact_bernoulli_event_probability",
    "reports_to_csv",
    "reports_to_json",
]

WILSON_Z = 1.959963984540054  # 97.5% normal quantile
CSV_HEADER = "estimator,n,trials,hits,p_hat,ci_lo,ci_hi,bound,seed"


@dataclass(frozen=True)
class TrialReport:
    """Empirical probability estimate for one (estimator, n) cell."""

    estimator_id: str
    n: int
    trials: int
    hits: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    bound: Optional[float]
    seed: int


@dataclass(frozen=True)
class RateFit:
    """Least-squares decay fit of log p against log n (log-log) or n (log-linear)."""

    points: tuple
    slope: float
    intercept: float
    r_squared: float
    axis: str


def wilson_interval(hits: int, trials: int):
    """95% Wilson score interval, with the rule-of-three 3/trials cap at zero hits."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (0 <= hits <= trials):
        raise ValueError("hits must lie in [0, trials]")
    if hits == 0:
        return 0.0, min(1.0, 3.0 / trials)
    if hits == trials:
        return max(0.0, 1.0 - 3.0 / trials), 1.0
    p = hits / trials
    z2 = WILSON_Z**2
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = WILSON_Z * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def _draw_matrix(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws; one row of a trial batch."""
    u = rng.random(n)
    if isinstance(spec, Pareto):
        return spec.scale * (1.0 - u) ** (-1.0 / spec.shape)
    if isinstance(spec, LogNormal):
        u = np.clip(u, 1e-16, 1.0 - 1e-16)
        return np.exp(spec.mu + spec.sigma * ndtri(u))
    if isinstance(spec, ScaledBernoulli):
        return np.where(u < spec.p, spec.high, 0.0)
    if isinstance(spec, PointMass):
        return np.full(n, spec.value)
    if isinstance(spec, UniformBounded):
        return spec.lo + (spec.hi - spec.lo) * u
    raise TypeError(f"unsupported distribution spec {spec!r}")


def draw_sample(spec: DistributionSpec, n: int, seed: int, stream: int = 0) -> Sample:
    """n i.i.d. draws; deterministic in (spec, n, seed, stream)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return Sample(_draw_matrix(spec, n, _trial_rng(seed, stream)))


def _estimate_batch(cfg: EstimatorConfig, X: np.ndarray) -> np.ndarray:
    """Row-wise estimator values for a (batch, n) matrix of samples."""
    n = X.shape[1]
    kind = cfg.kind
    if kind == "mean":
        return X.mean(axis=1) - cfg.delta
    if kind == "wasserstein":
        return np.maximum(X.mean(axis=1) - cfg.resolve_radius(n), 0.0)
    if kind == "trunc":
        lam = cfg.resolve_lambda(n)
        r = lam / n
        _, c_a = truncation_constants(cfg.a, cfg.A)
        return np.minimum(X, r ** (-1.0 / cfg.a)).mean(axis=1) - c_a * r ** ((cfg.a - 1.0) / cfg.a)
    if kind == "varreg":
        r = cfg.resolve_lambda(n) / n
        return X.mean(axis=1) - math.sqrt(2.0 * r) * X.std(axis=1)
    if kind == "tv":
        r = cfg.resolve_lambda(n) / n
        removal = math.sqrt(r / 2.0)
        if removal > 1.0:
            raise ValueError("sqrt(r/2) exceeds 1")
        S = np.sort(X, axis=1)[:, ::-1]
        atoms = int(math.floor(removal * n))
        removed = S[:, :atoms].sum(axis=1) / n if atoms > 0 else np.zeros(X.shape[0])
        frac = removal - atoms / n
        if atoms < n and frac > 0.0:
            removed = removed + frac * S[:, atoms]
        return X.mean(axis=1) - removed
    if kind == "kl":
        r = cfg.resolve_radius(n)
        if r == 0.0:
            return X.mean(axis=1)
        return solve_kl_dro_dual_batch(X, r)
    raise ValueError(f"unknown estimator kind {kind!r}")


def _fill_bound(cfg: EstimatorConfig, event: str, n: int, spec: DistributionSpec, b: float):
    if event == "disappointment":
        if cfg.kind == "kl":
            lam = cfg.resolve_lambda(n)
            if lam > 1.0 and n >= 2:
                return kl_disappointment_bound(n, lam)
            return None
        if cfg.kind == "trunc":
            return math.exp(-cfg.resolve_lambda(n))
        return None
    if cfg.kind == "varreg":
        r = cfg.resolve_lambda(n) / n
        return n * survival_probability(spec, b * math.sqrt(n / (2.0 * r)))
    return None


def _run_event_trials(
    spec: DistributionSpec,
    cfg: EstimatorConfig,
    n: int,
    trials: int,
    seed: int,
    event: str,
    b: float,
    threads: int,
    batch_size: Optional[int] = None,
) -> int:
    mu = true_mean(spec)
    if batch_size is None:
        batch_size = max(1, min(4096, 4_000_000 // max(n, 1)))
    starts = list(range(0, trials, batch_size))

    def run_chunk(start: int) -> int:
        count = min(batch_size, trials - start)
        X = np.empty((count, n))
        for j in range(count):
            X[j] = _draw_matrix(spec, n, _trial_rng(seed, start + j))
        values = _estimate_batch(cfg, X)
        if event == "disappointment":
            return int(np.sum(values > mu))
        return int(np.sum(values < mu - b))

    if threads <= 1 or len(starts) == 1:
        return sum(run_chunk(s0) for s0 in starts)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return sum(pool.map(run_chunk, starts))


def disappointment_probability(
    spec: DistributionSpec,
    cfg: EstimatorConfig,
    n: int,
    trials: int,
    seed: int,
    threads: int = 1,
) -> TrialReport:
    """Monte Carlo estimate of P[estimate > true mean] (strict: ties are safe)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hits = _run_event_trials(spec, cfg, n, trials, seed, "disappointment", 0.0, threads)
    lo, hi = wilson_interval(hits, trials)
    return TrialReport(
        cfg.kind, n, trials, hits, hits / trials, lo, hi,
        _fill_bound(cfg, "disappointment", n, spec, 0.0), seed,
    )


def conservatism_probability(
    spec: DistributionSpec,
    cfg: EstimatorConfig,
    b: float,
    n: int,
    trials: int,
    seed: int,
    threads: int = 1,
) -> TrialReport:
    """Monte Carlo estimate of P[estimate < true mean - b]."""
    if b <= 0:
        raise ValueError("b must be positive")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hits = _run_event_trials(spec, cfg, n, trials, seed, "conservatism", b, threads)
    lo, hi = wilson_interval(hits, trials)
    return TrialReport(
        cfg.kind, n, trials, hits, hits / trials, lo, hi,
        _fill_bound(cfg, "conservatism", n, spec, b), seed,
    )


def exact_bernoulli_event_probability(
    spec: ScaledBernoulli, cfg: EstimatorConfig, n: int, event: str, b: float = 0.0
) -> float:
    """Exact event probability for two-point samples by binomial enumeration.

    A size-n sample from a scaled Bernoulli is determined by its count of
    high values, so P[event] = sum over k of Binom(n, p) pmf(k) * 1{event at k}.
    Useful where the event is far too rare for Monte Carlo.
    """
    mu = true_mean(spec)
    pmf = binom.pmf(np.arange(n + 1), n, spec.p)
    total = 0.0
    for k in range(n + 1):
        values = np.concatenate([np.zeros(n - k), np.full(k, spec.high)])
        est = estimate(cfg, Sample(values)).value
        hit = est > mu if event == "disappointment" else est < mu - b
        if hit:
            total += float(pmf[k])
    return total


# ---------------------------------------------------------------------------
# Large-deviation rate of the sample-mean left tail
# ---------------------------------------------------------------------------


def laplace_transform(spec: DistributionSpec, s: float) -> float:
    """E[exp(-s z)] for s >= 0; adaptive quadrature for the continuous tails."""
    if s < 0:
        raise ValueError("s must be non-negative")
    if s == 0:
        return 1.0
    if isinstance(spec, PointMass):
        return math.exp(-s * spec.value)
    if isinstance(spec, ScaledBernoulli):
        return (1.0 - spec.p) + spec.p * math.exp(-s * spec.high)
    if isinstance(spec, UniformBounded):
        return (math.exp(-s * spec.lo) - math.exp(-s * spec.hi)) / (s * (spec.hi - spec.lo))
    if isinstance(spec, Pareto):
        rho, xm = spec.shape, spec.scale
        val, _ = quad(
            lambda u: math.exp(-s * u) * rho * xm**rho * u ** (-rho - 1.0),
            xm, np.inf, epsabs=1e-14, epsrel=1e-11, limit=400,
        )
        return val
    if isinstance(spec, LogNormal):
        # integrate in standard-normal space for stable tails
        val, _ = quad(
            lambda y: math.exp(-s * math.exp(spec.mu + spec.sigma * y))
            * math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi),
            -np.inf, np.inf, epsabs=1e-14, epsrel=1e-11, limit=400,
        )
        return val
    raise TypeError(f"unsupported distribution spec {spec!r}")


def _golden_max_scalar(f, lo: float, hi: float, tol: float = 1e-11, max_iter: int = 300):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
    x = 0.5 * (a + b)
    return x, f(x)


def cramer_rate(spec: DistributionSpec, b: float) -> float:
    """Left-tail large-deviation exponent sup_{s>0} (b - mu) s - log E[exp(-s z)].

    Zero at b = 0; positive for b in (0, mu]; +inf when the event
    mean < mu - b is impossible (b beyond mu minus the support minimum).
    The concave objective is maximized by golden section inside a doubling
    bracket; a saturating objective (e.g. an atom at zero as s -> inf) is
    detected and its limit value returned.
    """
    if b < 0:
        raise ValueError("b must be non-negative")
    if b == 0.0:
        return 0.0
    mu = true_mean(spec)

    def f(s: float) -> float:
        transform = laplace_transform(spec, s)
        if transform <= 0.0:
            return math.inf
        return (b - mu) * s - math.log(transform)

    h = 1.0 / max(mu, 1e-12)
    f_prev, f_cur = f(0.5 * h), f(h)
    expansions = 0
    while f_cur >= f_prev:
        gain = f_cur - f_prev
        if gain < 1e-12 * max(1.0, abs(f_cur)):
            return max(f_cur, 0.0)  # saturated (e.g. -log P[z = 0])
        h *= 2.0
        f_prev, f_cur = f_cur, f(h)
        expansions += 1
        if expansions > 120 or f_cur > 1e6:
            return math.inf  # event is impossible; rate grows without bound
    _, best = _golden_max_scalar(f, 0.0, h)
    return max(best, 0.0)


# ---------------------------------------------------------------------------
# Decay-rate fitting
# ---------------------------------------------------------------------------


def rate_fit(points: Sequence, axis: str = "log-log") -> RateFit:
    """Least squares of log p against log n (axis="log-log") or n (axis="log-linear").

    Points with p_hat <= 0 are dropped; at least 3 positive points required.
    """
    if axis not in ("log-log", "log-linear"):
        raise ValueError(f"unknown axis {axis!r}")
    kept = [(float(n), float(p)) for n, p in points if p > 0.0]
    if len(kept) < 3:
        raise ValueError(f"need at least 3 points with positive p_hat, got {len(kept)}")
    x = np.array([math.log(n) if axis == "log-log" else n for n, _ in kept])
    y = np.array([math.log(p) for _, p in kept])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return RateFit(tuple(kept), float(slope), float(intercept), r2, axis)


# ---------------------------------------------------------------------------
# Population dual and the variance-ratio curve
# ---------------------------------------------------------------------------


def _population_expect(spec: DistributionSpec, atilde: float, g) -> float:
    """E[g(atilde * z)] under the population law, by adaptive quadrature."""
    if isinstance(spec, PointMass):
        return float(g(atilde * spec.value))
    if isinstance(spec, ScaledBernoulli):
        return (1.0 - spec.p) * float(g(0.0)) + spec.p * float(g(atilde * spec.high))
    if isinstance(spec, UniformBounded):
        width = spec.hi - spec.lo
        val, _ = quad(
            lambda u: float(g(atilde * u)) / width, spec.lo, spec.hi,
            epsabs=1e-15, epsrel=1e-11, limit=200,
        )
        return val
    if isinstance(spec, Pareto):
        rho = spec.shape
        a = atilde * spec.scale

        # log substitution z = a e^y resolves the heavy-tail boundary layer;
        # beyond y ~ 700 the e^{-rho y} weight has underflowed to zero, so the
        # argument can be clamped without changing the integral
        def integrand(y):
            weight = rho * math.exp(-rho * min(y, 700.0)) if y < 1e6 else 0.0
            if weight == 0.0:
                return 0.0
            return float(g(a * math.exp(min(y, 700.0)))) * weight
        ystar = max(0.0, -math.log(a)) if a > 0 else 0.0
        total = 0.0
        lo = 0.0
        if ystar > 0.0:
            total += quad(integrand, 0.0, ystar, epsabs=1e-15, epsrel=1e-11, limit=300)[0]
            lo = ystar
        total += quad(integrand, lo, np.inf, epsabs=1e-15, epsrel=1e-11, limit=300)[0]
        return total
    if isinstance(spec, LogNormal):

        def integrand(y):
            weight = math.exp(-0.5 * min(y * y, 1400.0)) / math.sqrt(2.0 * math.pi)
            if weight == 0.0:
                return 0.0
            return float(g(atilde * math.exp(min(spec.mu + spec.sigma * y, 700.0)))) * weight

        val, _ = quad(integrand, -np.inf, np.inf, epsabs=1e-15, epsrel=1e-11, limit=300)
        return val
    raise TypeError(f"unsupported distribution spec {spec!r}")


def _population_radius(spec: DistributionSpec, atilde: float) -> float:
    """r(atilde) = E log(1 + atilde z) + log E 1/(1 + atilde z); nondecreasing in atilde."""
    e_log = _population_expect(spec, atilde, np.log1p)
    e_inv = _population_expect(spec, atilde, lambda z: 1.0 / (1.0 + z))
    return e_log + math.log(e_inv)


def solve_population_dual(spec: DistributionSpec, r: float, max_atilde: float = 1e12) -> float:
    """Reciprocal dual variable atilde = 1/alpha at population level for radius r."""
    if r <= 0:
        raise ValueError("radius must be positive")
    lo, hi = 1e-14, 1.0
    while _population_radius(spec, hi) < r:
        hi *= 4.0
        if hi > max_atilde:
            raise ValueError(f"radius {r!r} too large: population dual bracket not found")
    for _ in range(90):
        mid = math.sqrt(lo * hi)
        if _population_radius(spec, mid) < r:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def variance_ratio_curve(spec: DistributionSpec, r_grid: Sequence[float]):
    """For each radius: variance of the log likelihood ratio of the population
    worst case, divided by the radius.

    The log ratio is log((alpha + z)/nu), whose variance equals
    V[log(1 + z/alpha)], computed by quadrature at the population dual point.
    """
    out = []
    for r in r_grid:
        if r <= 0:
            raise ValueError("radii must be positive")
        if isinstance(spec, PointMass):
            out.append((float(r), 0.0))
            continue
        atilde = solve_population_dual(spec, r)
        e1 = _population_expect(spec, atilde, np.log1p)
        e2 = _population_expect(spec, atilde, lambda z: np.log1p(z) ** 2)
        out.append((float(r), (e2 - e1 * e1) / r))
    return out


def pareto_variance_ratio_limit(rho: float) -> float:
    """Small-radius limit of the variance ratio for a Pareto tail index in (1, 2).

    Exact value 2 (psi(rho) + euler_gamma) / (rho - 1), where psi is the
    digamma function; it tends to 2 as rho -> 2, matching the bounded case.
    """
    if not (1.0 < rho < 2.0):
        raise ValueError("closed-form limit requires rho in (1, 2)")
    from scipy.special import digamma

    return 2.0 * (float(digamma(rho)) + np.euler_gamma) / (rho - 1.0)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def reports_to_csv(reports: Sequence[TrialReport], header_lines: Sequence[str] = ()) -> str:
    """CSV document with optional '#' metadata lines; deterministic given inputs."""
    lines = [f"# {text}" for text in header_lines]
    lines.append(CSV_HEADER)
    for rep in reports:
        lines.append(
            ",".join(
                [
                    rep.estimator_id,
                    str(rep.n),
                    str(rep.trials),
                    str(rep.hits),
                    _fmt(rep.p_hat),
                    _fmt(rep.ci_lo),
                    _fmt(rep.ci_hi),
                    _fmt(rep.bound) if rep.bound is not None else "",
                    str(rep.seed),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Sequence[TrialReport], meta: Optional[dict] = None) -> str:
    doc = {"reports": [asdict(r) for r in reports]}
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=2, sort_keys=True)
