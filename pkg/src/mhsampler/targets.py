"""Target distributions: the unnormalized log-densities every kernel samples from."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .stochastic import (
    LOG_SQRT_2PI,
    InvalidParameterError,
    log_pdf_beta,
    make_rng,
)

# |sin| below this is treated as an exact zero of the toy target, so the
# floating-point images of its zeros (pi/2, pi, ...) get density 0.
SIN_ZERO_TOL = 1e-12

MIXTURE_DATA_SEED = 20150701
MIXTURE_DATA_SIZE = 123
MIXTURE_DATA_FILE = "mixture_poisson123.txt"


@dataclass(frozen=True)
class TargetModel:
    """Unnormalized log-density on R^d, with an optional gradient.

    ``log_density`` takes a 1-d float array of length ``dimension`` and returns
    a float, ``-inf`` where the density vanishes.
    """

    dimension: int
    log_density: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    description: str = ""
    coord_names: tuple = field(default=())

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidParameterError("dimension must be positive")
        if not self.coord_names:
            names = ("x",) if self.dimension == 1 else tuple(f"x{i}" for i in range(self.dimension))
            object.__setattr__(self, "coord_names", names)

    @property
    def has_gradient(self) -> bool:
        return self.gradient is not None

    def shifted(self, c: float) -> "TargetModel":
        """Same target with ``c`` added to the log-density (a rescaling of pi~)."""
        base = self.log_density
        return replace(self, log_density=lambda x: base(x) + c)


# --- toy target ------------------------------------------------------------

def _toy_scalar(x: float) -> float:
    s1 = math.sin(x)
    s2 = math.sin(2.0 * x)
    if abs(s1) < SIN_ZERO_TOL or abs(s2) < SIN_ZERO_TOL:
        return -math.inf
    return 2.0 * math.log(abs(s1)) + 2.0 * math.log(abs(s2)) - 0.5 * x * x - LOG_SQRT_2PI


def toy_sin_log_target(x):
    """log of sin^2(x) sin^2(2x) phi(x); accepts a float or an array."""
    if np.ndim(x) == 0:
        return _toy_scalar(float(x))
    x = np.asarray(x, dtype=float)
    s1 = np.abs(np.sin(x))
    s2 = np.abs(np.sin(2.0 * x))
    zero = (s1 < SIN_ZERO_TOL) | (s2 < SIN_ZERO_TOL)
    with np.errstate(divide="ignore"):
        out = 2.0 * np.log(s1) + 2.0 * np.log(s2) - 0.5 * x * x - LOG_SQRT_2PI
    return np.where(zero, -np.inf, out)


def toy_sin_target() -> TargetModel:
    return TargetModel(
        dimension=1,
        log_density=lambda x: _toy_scalar(x[0]),
        description="sin^2(x) sin^2(2x) phi(x) on R; zeros at multiples of pi/2",
    )


# --- Gaussian oracle target ------------------------------------------------

def gaussian_target(d: int) -> TargetModel:
    """Standard d-dimensional normal, normalizing constant dropped (log_density(0) = 0)."""
    if d < 1:
        raise InvalidParameterError("d must be positive")
    return TargetModel(
        dimension=d,
        log_density=lambda x: -0.5 * float(np.dot(x, x)),
        gradient=lambda x: -np.asarray(x, dtype=float),
        description=f"standard normal on R^{d}",
    )


# --- finite-state targets --------------------------------------------------

def discrete_target(weights: Sequence[float] | np.ndarray) -> TargetModel:
    """Target on the integer grid spanned by an array of nonnegative weights.

    A 1-d table gives a chain on {0, ..., K-1}; an n-d table gives one on the
    product grid. Positions off the grid or with weight 0 have density 0.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise InvalidParameterError("weights must be nonnegative and not all zero")
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    shape = w.shape

    def log_density(x):
        idx = []
        for xi, n in zip(x, shape):
            k = int(round(xi))
            if k != xi or not 0 <= k < n:
                return -math.inf
            idx.append(k)
        return float(logw[tuple(idx)])

    return TargetModel(
        dimension=w.ndim,
        log_density=log_density,
        description=f"finite-state target on grid {shape}",
    )


# --- Poisson / Geometric mixture -------------------------------------------

@dataclass(frozen=True)
class MixtureData:
    observations: tuple

    def __post_init__(self):
        obs = tuple(int(v) for v in self.observations)
        if not obs:
            raise InvalidParameterError("mixture data needs at least one observation")
        if any(v < 0 for v in obs):
            raise InvalidParameterError("observations must be nonnegative integers")
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return len(self.observations)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.observations, dtype=float)


def generate_mixture_dataset(seed: int = MIXTURE_DATA_SEED, n: int = MIXTURE_DATA_SIZE,
                             lam: float = 1.0) -> MixtureData:
    """Poisson(lam) draws used to build the shipped dataset."""
    return MixtureData(tuple(make_rng(seed).poisson(lam, size=n)))


LGSS_DATA_FILE = "lgss_T20.txt"


def read_values(path, integer: bool = False) -> list:
    """One value per line; blank lines and ``#`` comments are skipped."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(int(text) if integer else float(text))
            except ValueError:
                raise InvalidParameterError(f"{path}:{lineno}: cannot parse {text!r}") from None
    return values


def load_mixture_data(path=None) -> MixtureData:
    """Load a dataset file; defaults to the 123-observation file shipped with the package."""
    if path is None:
        with resources.as_file(resources.files("mhsampler.data") / MIXTURE_DATA_FILE) as p:
            return MixtureData(tuple(read_values(p, integer=True)))
    return MixtureData(tuple(read_values(Path(path), integer=True)))


def load_lgss_observations(path=None) -> list:
    """Real-valued observations; defaults to the shipped 20-step LGSS series."""
    if path is None:
        with resources.as_file(resources.files("mhsampler.data") / LGSS_DATA_FILE) as p:
            return read_values(p)
    return read_values(Path(path))


def _mixture_terms(data: MixtureData):
    x = data.as_array()
    lgam = np.array([math.lgamma(v + 1.0) for v in x])
    return x, lgam


def mixture_log_likelihood(data: MixtureData, lam: float, alpha: float, _cache=None) -> float:
    """Sum over observations of log{alpha Pois(x; lam) + (1 - alpha) Geo(x; 1/(1+lam))}."""
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must lie in [0, 1], got {alpha}")
    x, lgam = _cache if _cache is not None else _mixture_terms(data)
    log_lam = math.log(lam)
    log_pois = x * log_lam - lam - lgam
    # geometric with success probability 1/(1+lam): lam^x (1+lam)^(-x-1)
    log_geo = x * log_lam - (x + 1.0) * math.log1p(lam)
    with np.errstate(divide="ignore"):
        la = math.log(alpha) if alpha > 0 else -math.inf
        l1a = math.log1p(-alpha) if alpha < 1 else -math.inf
        return float(np.sum(np.logaddexp(la + log_pois, l1a + log_geo)))


def mixture_log_posterior(data: MixtureData, lam: float, alpha: float, a0: float = 0.5,
                          _cache=None) -> float:
    """Log-likelihood plus the 1/lambda and Beta(a0, a0) prior terms, unnormalized.

    Out-of-support parameters give ``-inf``.
    """
    if not lam > 0 or not 0.0 < alpha < 1.0:
        return -math.inf
    return (mixture_log_likelihood(data, lam, alpha, _cache)
            - math.log(lam) + log_pdf_beta(alpha, a0, a0))


def mixture_target(data: MixtureData, a0: float = 0.5) -> TargetModel:
    """Posterior of (lambda, alpha) as a 2-d target."""
    cache = _mixture_terms(data)
    return TargetModel(
        dimension=2,
        log_density=lambda p: mixture_log_posterior(data, p[0], p[1], a0, cache),
        description=f"Poisson/Geometric mixture posterior, n={data.n}",
        coord_names=("lambda", "alpha"),
    )


# --- quadrature ------------------------------------------------------------

def simpson(values: np.ndarray, lo: float, hi: float) -> float:
    """Composite Simpson rule on a uniform grid with an odd number of points."""
    n = len(values)
    if n < 3 or n % 2 == 0:
        raise InvalidParameterError("Simpson's rule needs an odd number (>= 3) of points")
    h = (hi - lo) / (n - 1)
    return float(h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum()
                            + 2.0 * values[2:-1:2].sum()))


def normalize_by_quadrature(target, lo: float = -5.0, hi: float = 5.0, n_points: int = 4001) -> float:
    """Integral of exp(log_density) over [lo, hi].

    ``target`` is a 1-d :class:`TargetModel` or a vectorized log-density
    callable. Even ``n_points`` are bumped by one to suit Simpson's rule;
    ``-inf`` grid points contribute zero.
    """
    if not lo < hi:
        raise InvalidParameterError("need lo < hi")
    if n_points < 100:
        raise InvalidParameterError("n_points must be at least 100")
    if isinstance(target, TargetModel):
        if target.dimension != 1:
            raise InvalidParameterError("quadrature only handles 1-d targets")
        f = lambda g: np.array([target.log_density(np.array([v])) for v in g])
    else:
        f = target
    if n_points % 2 == 0:
        n_points += 1
    grid = np.linspace(lo, hi, n_points)
    vals = np.exp(np.asarray(f(grid), dtype=float))
    vals[~np.isfinite(vals)] = 0.0
    return simpson(vals, lo, hi)
