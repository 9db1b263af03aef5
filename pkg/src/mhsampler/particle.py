"""Bootstrap particle filter, exact Kalman likelihood, and particle marginal MH."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import (
    ChainState,
    ProposalKernel,
    _check_finite,
    _move,
    accept_draw,
    log_acceptance_ratio,
)
from .stochastic import InvalidParameterError, Rng, logsumexp

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class FilterCollapseError(RuntimeError):
    """Every particle got zero weight at some step."""

    def __init__(self, step: int):
        super().__init__(f"all particle weights are zero at step {step}")
        self.step = step


@dataclass(frozen=True)
class HmmModel:
    """State-space model with latent x_0..x_T and observations y_1..y_T.

    Samplers are vectorized over particles:
    ``init_sampler(rng, n)`` draws x_0, ``transition_sampler(x, t, rng)``
    moves every particle from time t-1 to t, ``emission_log_density(y, x, t)``
    returns log q_t(y_t | x_t) for every particle.
    """

    init_sampler: Callable
    transition_sampler: Callable
    emission_log_density: Callable
    init_log_density: Optional[Callable] = None
    transition_log_density: Optional[Callable] = None
    theta: tuple = ()


@dataclass
class ParticleSystem:
    particles: np.ndarray
    log_weights: np.ndarray
    log_likelihood_acc: float = 0.0
    step_index: int = 0

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - np.max(self.log_weights))
        return w / w.sum()


@dataclass
class FilterResult:
    log_likelihood: float
    system: ParticleSystem
    path: Optional[np.ndarray] = None


def systematic_resample(weights, rng: Rng) -> np.ndarray:
    """Ancestor indices by systematic resampling (one uniform per call)."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    if n < 1:
        raise ValueError("need at least one weight")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
    return _systematic(w, rng, np.arange(n) / n)


def _systematic(w, rng, offsets):
    # w may be unnormalized; the grid is scaled to its total instead
    n = len(w)
    cs = w.cumsum()
    u = offsets + rng.random() / n
    u *= cs[-1]
    idx = cs.searchsorted(u, side="right")
    if idx[-1] >= n:
        np.minimum(idx, n - 1, out=idx)
    return idx


def bootstrap_filter(model: HmmModel, observations: Sequence[float], n_particles: int,
                     rng: Rng, return_path: bool = False) -> FilterResult:
    """Bootstrap filter with systematic resampling at every step.

    The returned log-likelihood is the log of an unbiased estimate of
    p(y_1:T | theta). With ``return_path`` one latent trajectory x_0:T is
    traced back from a particle drawn by its final weight.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be at least 1")
    ys = list(observations)
    if not ys:
        raise ValueError("need at least one observation")
    N = n_particles
    log_n = math.log(N)
    offsets = np.arange(N) / N
    x = np.asarray(model.init_sampler(rng, N))
    history, ancestry = ([x], []) if return_path else (None, None)
    ll = 0.0
    T = len(ys)
    for t, y in enumerate(ys, 1):
        x = np.asarray(model.transition_sampler(x, t, rng))
        logw = np.asarray(model.emission_log_density(y, x, t), dtype=float)
        m = logw.max()
        if m == -math.inf:
            raise FilterCollapseError(t)
        w = logw - m
        np.exp(w, out=w)
        total = w.sum()
        ll += m + math.log(total) - log_n
        if return_path:
            history.append(x)
        if t < T:
            a = _systematic(w, rng, offsets)
            x = x[a]
            if return_path:
                ancestry.append(a)
    logw = logw - (m + math.log(total))
    system = ParticleSystem(x, logw, ll, T)
    path = None
    if return_path:
        w = system.weights
        k = int(min(np.searchsorted(np.cumsum(w), rng.random(), side="right"), N - 1))
        path = [history[T][k]]
        for t in range(T - 1, 0, -1):
            k = int(ancestry[t - 1][k])
            path.append(history[t][k])
        # x_0 particles were not resampled before the first propagation
        path.append(history[0][k])
        path = np.asarray(path[::-1])
    return FilterResult(ll, system, path)


# --- linear-Gaussian state-space model ---------------------------------------

@dataclass(frozen=True)
class LgssParams:
    """x_0 ~ N(m0, v0); x_t = a x_{t-1} + N(0, q); y_t = c x_t + N(0, r)."""

    a: float = 0.9
    q: float = 1.0
    c: float = 1.0
    r: float = 1.0
    m0: float = 0.0
    v0: float = 1.0

    def __post_init__(self):
        for name in ("q", "r", "v0"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"variance {name} must be positive, got {getattr(self, name)}")


def kalman_loglik(params: LgssParams, observations: Sequence[float]) -> float:
    """Exact log p(y_1:T) by the predict/update recursion."""
    return _kalman(params.a, params.q, params.c, params.r, params.m0, params.v0, observations)


def _kalman(a, q, c, r, m, v, observations) -> float:
    if isinstance(observations, np.ndarray):
        observations = observations.tolist()
    ll = 0.0
    for y in observations:
        m = a * m
        v = a * a * v + q
        s = c * c * v + r
        e = y - c * m
        ll -= 0.5 * (LOG_2PI + math.log(s) + e * e / s)
        k = v * c / s
        m += k * e
        v *= 1.0 - k * c
    return ll


def lgss_model(params: LgssParams) -> HmmModel:
    a, q, c, r = params.a, params.q, params.c, params.r
    sq, sr = math.sqrt(q), math.sqrt(r)
    log_norm_r = 0.5 * (LOG_2PI + math.log(r))

    def init_sampler(rng, n):
        return params.m0 + math.sqrt(params.v0) * rng.standard_normal(n)

    half_prec = -0.5 / r

    def transition_sampler(x, t, rng):
        z = rng.standard_normal(x.shape)
        z *= sq
        z += a * x
        return z

    def emission(y, x, t):
        e = c * x
        e -= y
        e *= e
        e *= half_prec
        e -= log_norm_r
        return e

    def init_logpdf(x):
        z = (x - params.m0) / math.sqrt(params.v0)
        return -0.5 * z * z - 0.5 * (LOG_2PI + math.log(params.v0))

    def trans_logpdf(x_prev, x, t):
        z = (x - a * x_prev) / sq
        return -0.5 * z * z - 0.5 * (LOG_2PI + math.log(q))

    return HmmModel(init_sampler, transition_sampler, emission, init_logpdf, trans_logpdf,
                    theta=(a, q, c, r, params.m0, params.v0))


def simulate_lgss(params: LgssParams, T: int, rng: Rng) -> tuple:
    """Draw (x_0:T, y_1:T) from the model."""
    x = np.empty(T + 1)
    x[0] = params.m0 + math.sqrt(params.v0) * rng.standard_normal()
    y = np.empty(T)
    for t in range(1, T + 1):
        x[t] = params.a * x[t - 1] + math.sqrt(params.q) * rng.standard_normal()
        y[t - 1] = params.c * x[t] + math.sqrt(params.r) * rng.standard_normal()
    return x, y


# --- finite-state HMM --------------------------------------------------------

def discrete_hmm(init_probs, transition, emission) -> HmmModel:
    """HMM on states {0..K-1} with integer observations.

    ``transition[i, j]`` = P(x_t = j | x_{t-1} = i); ``emission[i, y]`` = P(y | x = i).
    """
    p0 = np.asarray(init_probs, dtype=float)
    P = np.asarray(transition, dtype=float)
    E = np.asarray(emission, dtype=float)
    cum0 = np.cumsum(p0)
    cumP = np.cumsum(P, axis=1)
    with np.errstate(divide="ignore"):
        logE = np.log(E)

    def init_sampler(rng, n):
        return np.minimum(np.searchsorted(cum0, rng.random(n), side="right"), len(p0) - 1)

    def transition_sampler(x, t, rng):
        u = rng.random(len(x))
        return np.minimum((u[:, None] >= cumP[x]).sum(axis=1), P.shape[1] - 1)

    def emission_logpdf(y, x, t):
        return logE[x, int(y)]

    return HmmModel(init_sampler, transition_sampler, emission_logpdf)


# --- particle marginal Metropolis-Hastings ---------------------------------

def pmcmc_step(state: ChainState, model_family: Callable, prior_log_density: Callable,
               proposal: ProposalKernel, n_particles: int, observations, rng: Rng,
               log_likelihood: Optional[Callable] = None, keep_path: bool = False):
    """One particle marginal MH step on theta.

    A bootstrap filter run at the proposed theta provides the likelihood
    estimate; the current estimate is recycled across rejections. A filter
    collapse counts as a zero estimate, so the move is rejected.
    ``log_likelihood(theta, rng)`` replaces the filter when given (an exact
    likelihood turns this into plain MH).
    """
    if state.cached_log_estimate is None:
        raise ValueError("pMCMC state has no cached estimate")
    x = state.position
    y = np.asarray(proposal.sample(x, rng), dtype=float)
    _check_finite(y, state)
    est, path = _pm_estimate(y, model_family, prior_log_density, n_particles, observations,
                             rng, log_likelihood, keep_path)
    if proposal.symmetric:
        log_r = log_acceptance_ratio(est, state.cached_log_estimate)
    else:
        log_r = log_acceptance_ratio(est, state.cached_log_estimate,
                                     proposal.log_density(y, x), proposal.log_density(x, y))
    return _move(state, y, est, accept_draw(rng, log_r), log_estimate=est, latent=path)


def _pm_estimate(theta, model_family, prior_log_density, n_particles, observations, rng,
                 log_likelihood=None, keep_path=False):
    lp = prior_log_density(theta)
    if lp == -math.inf:
        return -math.inf, None
    if log_likelihood is not None:
        return log_likelihood(theta, rng) + lp, None
    try:
        res = bootstrap_filter(model_family(theta), observations, n_particles, rng, keep_path)
    except FilterCollapseError as exc:
        logger.warning("particle filter collapsed at theta=%s (step %d); rejecting", theta, exc.step)
        return -math.inf, None
    except InvalidParameterError:
        return -math.inf, None
    return res.log_likelihood + lp, res.path


def initial_pmcmc_state(position, model_family, prior_log_density, n_particles, observations,
                        rng: Rng, log_likelihood=None, keep_path=False) -> ChainState:
    x = np.atleast_1d(np.asarray(position, dtype=float)).copy()
    est, path = _pm_estimate(x, model_family, prior_log_density, n_particles, observations,
                             rng, log_likelihood, keep_path)
    return ChainState(x, est, est, 0, path)


def emission_variance_family(base: LgssParams) -> Callable:
    """theta = (r,) -> LGSS model with emission variance r, other parameters fixed."""

    def family(theta):
        return lgss_model(replace(base, r=float(theta[0])))

    return family


def log_normal_prior(mu: float = 0.0, sigma: float = 1.0) -> Callable:
    """log r ~ N(mu, sigma^2), as a density on r > 0."""

    def prior(theta):
        r = float(theta[0])
        if r <= 0:
            return -math.inf
        lr = math.log(r)
        z = (lr - mu) / sigma
        return -0.5 * z * z - math.log(sigma) - 0.5 * LOG_2PI - lr

    return prior
