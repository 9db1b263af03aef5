"""Random streams and exact log-densities for the distribution families used by the samplers.

Everything here works in log space. A density of zero is represented by
``-inf``; callers never see ``nan`` for points outside a support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

Rng = np.random.Generator


class InvalidParameterError(ValueError):
    """Raised when a distribution parameter lies outside its domain."""


def make_rng(seed: int) -> Rng:
    """Seedable stream backed by PCG64.

    Two streams built from the same seed produce identical draws.
    """
    if seed < 0 or seed >= 2**64:
        raise InvalidParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, n: int) -> list[Rng]:
    """Derive ``n`` independent substreams from one parent seed.

    Substream ``i`` is ``SeedSequence(seed).spawn(n)[i]``; the rule only depends
    on ``(seed, i)``, so substream ``i`` is the same whatever ``n`` is.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidParameterError(msg)


def log_pdf_normal(x, mu=0.0, sigma=1.0):
    _require(sigma > 0, f"sigma must be positive, got {sigma}")
    z = (x - mu) / sigma
    return -0.5 * z * z - LOG_SQRT_2PI - math.log(sigma)


def log_pmf_poisson(k: int, lam: float) -> float:
    _require(k >= 0, f"k must be non-negative, got {k}")
    _require(lam > 0, f"lambda must be positive, got {lam}")
    return k * math.log(lam) - lam - math.lgamma(k + 1)


def log_pmf_geometric(k: int, p: float) -> float:
    """Geometric mass on {0, 1, 2, ...} with success probability ``p``."""
    _require(k >= 0, f"k must be non-negative, got {k}")
    _require(0 < p <= 1, f"p must lie in (0, 1], got {p}")
    if p == 1.0:
        return 0.0 if k == 0 else -math.inf
    return math.log(p) + k * math.log1p(-p)


def log_beta_function(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def log_pdf_beta(x: float, a: float, b: float, strict: bool = False) -> float:
    """Beta log-density.

    Points on or outside ``[0, 1]`` give ``-inf`` so that proposals landing on
    the boundary are simply rejected. Pass ``strict=True`` to raise instead.
    """
    _require(a > 0 and b > 0, f"beta shapes must be positive, got ({a}, {b})")
    if not 0.0 < x < 1.0:
        if strict:
            raise InvalidParameterError(f"x must lie in (0, 1), got {x}")
        return -math.inf
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - log_beta_function(a, b)


# Distribution descriptors. Each knows how to draw and how to evaluate itself.

@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        _require(self.lo < self.hi, f"uniform needs lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng: Rng) -> float:
        return float(rng.uniform(self.lo, self.hi))

    def log_pdf(self, x: float) -> float:
        if self.lo <= x < self.hi:
            return -math.log(self.hi - self.lo)
        return -math.inf


@dataclass(frozen=True)
class Normal:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        _require(self.sigma > 0, f"sigma must be positive, got {self.sigma}")

    def sample(self, rng: Rng) -> float:
        return float(rng.normal(self.mu, self.sigma))

    def log_pdf(self, x: float) -> float:
        return log_pdf_normal(x, self.mu, self.sigma)


@dataclass(frozen=True)
class LogNormal:
    """exp(N(mu, sigma^2)); ``mu`` and ``sigma`` live on the log scale."""

    mu: float
    sigma: float

    def __post_init__(self):
        _require(self.sigma > 0, f"sigma must be positive, got {self.sigma}")

    def sample(self, rng: Rng) -> float:
        z = rng.normal(self.mu, self.sigma)
        # overflow gives inf, which the kernels then report as a non-finite proposal
        return math.exp(z) if z < 709.0 else math.inf

    def log_pdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        lx = math.log(x)
        return log_pdf_normal(lx, self.mu, self.sigma) - lx


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        _require(self.a > 0 and self.b > 0, f"beta shapes must be positive, got ({self.a}, {self.b})")

    def sample(self, rng: Rng) -> float:
        return float(rng.beta(self.a, self.b))

    def log_pdf(self, x: float) -> float:
        return log_pdf_beta(x, self.a, self.b)


Distribution = Union[Uniform, Normal, LogNormal, Beta]


def sample(dist: Distribution, rng: Rng) -> float:
    return dist.sample(rng)


def logsumexp(values: Union[Sequence[float], np.ndarray]) -> float:
    """log(sum(exp(values))) that returns -inf when every term is -inf."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return -math.inf
    m = np.max(v)
    if m == -math.inf:
        return -math.inf
    if m == math.inf:
        return math.inf
    return float(m + math.log(np.sum(np.exp(v - m))))
