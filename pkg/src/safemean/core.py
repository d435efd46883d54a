"""Core domain types: samples, discrete distributions, radius schedules,
and parametric generative models.

Everything here is immutable after construction and safe to share across
threads; all operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Sample",
    "DiscreteDistribution",
    "RadiusSchedule",
    "Pareto",
    "LogNormal",
    "ScaledBernoulli",
    "PointMass",
    "UniformBounded",
    "DistributionSpec",
    "EstimateResult",
    "sample_mean",
    "sample_variance",
    "true_mean",
    "true_variance",
    "survival_probability",
    "read_sample_file",
]

_WEIGHT_SUM_TOL = 1e-12


class Sample:
    """A finite multiset of non-negative observations.

    Values are stored sorted ascending (canonical form). Duplicates are
    retained so empirical weights stay uniform 1/n.
    """

    __slots__ = ("_values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("sample values must be one-dimensional")
        if arr.size < 1:
            raise ValueError("sample must contain at least one observation")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sample values must be finite")
        if np.any(arr < 0):
            raise ValueError("sample values must be non-negative")
        arr = np.sort(arr)
        arr.flags.writeable = False
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n(self) -> int:
        return self._values.size

    def min(self) -> float:
        return float(self._values[0])

    def max(self) -> float:
        return float(self._values[-1])

    def weighted_support(self):
        """Distinct values with empirical weights (multiplicities / n)."""
        vals, counts = np.unique(self._values, return_counts=True)
        return vals, counts / self._values.size

    def __len__(self):
        return self._values.size

    def __repr__(self):
        return f"Sample(n={self.n}, min={self.min():g}, max={self.max():g})"


def sample_mean(s: Sample) -> float:
    """Empirical mean (1/n) * sum of observations."""
    return float(np.mean(s.values))


def sample_variance(s: Sample) -> float:
    """Empirical variance with the 1/n divisor (no Bessel correction)."""
    return float(np.var(s.values))


class DiscreteDistribution:
    """Finite support points with probability weights.

    Support must be strictly increasing and non-negative; weights must be
    non-negative and sum to one within 1e-12.
    """

    __slots__ = ("_support", "_weights")

    def __init__(self, support, weights):
        sup = np.asarray(support, dtype=float)
        wts = np.asarray(weights, dtype=float)
        if sup.shape != wts.shape or sup.ndim != 1 or sup.size == 0:
            raise ValueError("support and weights must be matching 1-d arrays")
        if np.any(sup < 0) or not np.all(np.isfinite(sup)):
            raise ValueError("support points must be finite and non-negative")
        if np.any(np.diff(sup) <= 0):
            raise ValueError("support points must be strictly increasing")
        if np.any(wts < -_WEIGHT_SUM_TOL):
            raise ValueError("weights must be non-negative")
        total = float(wts.sum())
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1 within {_WEIGHT_SUM_TOL}")
        wts = np.maximum(wts, 0.0)
        sup.flags.writeable = False
        wts.flags.writeable = False
        self._support = sup
        self._weights = wts

    @property
    def support(self) -> np.ndarray:
        return self._support

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def mean(self) -> float:
        return float(np.dot(self._support, self._weights))

    def weight_at(self, point: float) -> float:
        idx = np.searchsorted(self._support, point)
        if idx < self._support.size and self._support[idx] == point:
            return float(self._weights[idx])
        return 0.0

    def __repr__(self):
        return f"DiscreteDistribution(m={self._support.size}, mean={self.mean():g})"


@dataclass(frozen=True)
class RadiusSchedule:
    """Disappointment-exponent schedule n -> lambda(n), with radius r(n) = lambda(n)/n.

    Supported kinds: "const-lambda", "logn", "loglogn", "power" (lambda = c * n^beta
    with beta in (0,1)), and "const-radius" (lambda = r * n).
    """

    kind: str
    c: float
    beta: float = 0.0

    _KINDS = ("const-lambda", "logn", "loglogn", "power", "const-radius")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.c <= 0:
            raise ValueError("schedule coefficient must be positive")
        if self.kind == "power" and not (0.0 < self.beta < 1.0):
            raise ValueError("power schedule requires beta in (0, 1)")

    def lam(self, n: int) -> float:
        """lambda(n); must be positive for every valid n."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "const-lambda":
            return self.c
        if self.kind == "logn":
            if n < 2:
                raise ValueError("logn schedule requires n >= 2")
            return self.c * math.log(n)
        if self.kind == "loglogn":
            if n < 3:
                raise ValueError("loglogn schedule requires n >= 3")
            return self.c * math.log(math.log(n))
        if self.kind == "power":
            return self.c * n**self.beta
        return self.c * n  # const-radius

    def radius(self, n: int) -> float:
        return self.lam(n) / n

    @staticmethod
    def constant_lambda(value: float) -> "RadiusSchedule":
        return RadiusSchedule("const-lambda", value)

    @staticmethod
    def log_n(c: float = 1.0) -> "RadiusSchedule":
        return RadiusSchedule("logn", c)

    @staticmethod
    def log_log_n(c: float = 1.0) -> "RadiusSchedule":
        return RadiusSchedule("loglogn", c)

    @staticmethod
    def power(c: float, beta: float) -> "RadiusSchedule":
        return RadiusSchedule("power", c, beta)

    @staticmethod
    def constant_radius(r: float) -> "RadiusSchedule":
        return RadiusSchedule("const-radius", r)


@dataclass(frozen=True)
class Pareto:
    """Pareto tail: P[z > u] = (scale/u)^shape for u >= scale; finite mean needs shape > 1."""

    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if self.shape <= 1.0:
            raise ValueError("Pareto shape must exceed 1 for a finite mean")
        if self.scale <= 0.0:
            raise ValueError("Pareto scale must be positive")


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("LogNormal sigma must be positive")


@dataclass(frozen=True)
class ScaledBernoulli:
    """Takes value `high` with probability p, else 0."""

    p: float
    high: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("Bernoulli probability must lie in [0, 1]")
        if self.high < 0.0:
            raise ValueError("Bernoulli high value must be non-negative")


@dataclass(frozen=True)
class PointMass:
    value: float

    def __post_init__(self):
        if self.value < 0.0 or not math.isfinite(self.value):
            raise ValueError("point mass must be a finite non-negative value")


@dataclass(frozen=True)
class UniformBounded:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo < 0.0 or self.hi <= self.lo:
            raise ValueError("uniform bounds require 0 <= lo < hi")


DistributionSpec = Union[Pareto, LogNormal, ScaledBernoulli, PointMass, UniformBounded]


def true_mean(spec: DistributionSpec) -> float:
    """Closed-form population mean of a generative model."""
    if isinstance(spec, Pareto):
        return spec.shape * spec.scale / (spec.shape - 1.0)
    if isinstance(spec, LogNormal):
        return math.exp(spec.mu + 0.5 * spec.sigma**2)
    if isinstance(spec, ScaledBernoulli):
        return spec.p * spec.high
    if isinstance(spec, PointMass):
        return spec.value
    if isinstance(spec, UniformBounded):
        return 0.5 * (spec.lo + spec.hi)
    raise TypeError(f"unsupported distribution spec {spec!r}")


def true_variance(spec: DistributionSpec) -> float:
    """Closed-form population variance; inf when the second moment diverges."""
    if isinstance(spec, Pareto):
        if spec.shape <= 2.0:
            return math.inf
        m = true_mean(spec)
        second = spec.shape * spec.scale**2 / (spec.shape - 2.0)
        return second - m * m
    if isinstance(spec, LogNormal):
        s2 = spec.sigma**2
        return (math.exp(s2) - 1.0) * math.exp(2.0 * spec.mu + s2)
    if isinstance(spec, ScaledBernoulli):
        return spec.p * (1.0 - spec.p) * spec.high**2
    if isinstance(spec, PointMass):
        return 0.0
    if isinstance(spec, UniformBounded):
        return (spec.hi - spec.lo) ** 2 / 12.0
    raise TypeError(f"unsupported distribution spec {spec!r}")


def survival_probability(spec: DistributionSpec, u: float) -> float:
    """P[z > u] for the generative model."""
    if u < 0:
        return 1.0
    if isinstance(spec, Pareto):
        if u < spec.scale:
            return 1.0
        return (spec.scale / u) ** spec.shape
    if isinstance(spec, LogNormal):
        if u <= 0:
            return 1.0
        z = (math.log(u) - spec.mu) / spec.sigma
        return 0.5 * math.erfc(z / math.sqrt(2.0))
    if isinstance(spec, ScaledBernoulli):
        return spec.p if u < spec.high else 0.0
    if isinstance(spec, PointMass):
        return 1.0 if u < spec.value else 0.0
    if isinstance(spec, UniformBounded):
        if u <= spec.lo:
            return 1.0
        if u >= spec.hi:
            return 0.0
        return (spec.hi - u) / (spec.hi - spec.lo)
    raise TypeError(f"unsupported distribution spec {spec!r}")


@dataclass(frozen=True)
class EstimateResult:
    """An estimator output: the value, a tag, and optional solver diagnostics."""

    value: float
    estimator_id: str
    diagnostics: dict = field(default_factory=dict)


class SampleFileError(ValueError):
    """Malformed sample input file; carries the offending 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def read_sample_file(path) -> Sample:
    """Read one non-negative decimal value per line.

    Blank lines are skipped. Negative values, NaN, infinities, and anything
    unparsable raise SampleFileError with the 1-based line number.
    """
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                x = float(text)
            except ValueError:
                raise SampleFileError(lineno, f"cannot parse {text!r} as a decimal value") from None
            if math.isnan(x):
                raise SampleFileError(lineno, "NaN is not a valid observation")
            if math.isinf(x):
                raise SampleFileError(lineno, "infinite values are not valid observations")
            if x < 0:
                raise SampleFileError(lineno, f"negative value {x!r} is not a valid observation")
            values.append(x)
    if not values:
        raise SampleFileError(0, "file contains no observations")
    return Sample(values)
