"""Markov transition kernels built on the Metropolis-Hastings accept/reject step.

Every kernel is a function ``(state, ..., rng) -> (new_state, accepted)``.
Acceptance is decided in log space with exactly one uniform draw per decision,
consumed even when the move is certain, so seeded trajectories do not depend
on how a ratio happens to come out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .stochastic import Beta, InvalidParameterError, LogNormal, Rng
from .targets import TargetModel


class KernelError(RuntimeError):
    """A transition could not be carried out (non-finite proposal, bad target value)."""


class UnsupportedKernelError(KernelError):
    """The kernel needs something the target does not provide, e.g. a gradient."""


class EstimatorError(KernelError):
    """A likelihood estimator broke its contract (negative or NaN estimate)."""


@dataclass
class ChainState:
    position: np.ndarray
    cached_log_target: float
    cached_log_estimate: Optional[float] = None
    iteration: int = 0
    latent: Optional[np.ndarray] = None


def initial_state(target: TargetModel, position) -> ChainState:
    x = np.atleast_1d(np.asarray(position, dtype=float)).copy()
    if x.shape != (target.dimension,):
        raise InvalidParameterError(
            f"start has shape {x.shape}, target dimension is {target.dimension}")
    return ChainState(x, target.log_density(x))


@dataclass(frozen=True)
class ProposalKernel:
    """Candidate generator q.

    ``sample(x, rng)`` draws y ~ q(.|x); ``log_density(x, y)`` is log q(y|x).
    For symmetric kernels the two densities cancel and are never evaluated.
    """

    sample: Callable[[np.ndarray, Rng], np.ndarray]
    log_density: Callable[[np.ndarray, np.ndarray], float]
    symmetric: bool = False
    name: str = ""


@dataclass(frozen=True)
class HmcSettings:
    step_size: float
    n_leapfrog: int
    mass_diagonal: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mass_diagonal, dtype=float))
        object.__setattr__(self, "mass_diagonal", m)
        if not self.step_size >= 0:
            raise InvalidParameterError("step_size must be nonnegative")
        if self.n_leapfrog < 1:
            raise InvalidParameterError("n_leapfrog must be at least 1")
        if np.any(m <= 0):
            raise InvalidParameterError("mass entries must be positive")


# --- acceptance -----------------------------------------------------------

def log_acceptance_ratio(log_new: float, log_old: float,
                         log_q_back: float = 0.0, log_q_fwd: float = 0.0) -> float:
    """log of [pi(y) q(x|y)] / [pi(x) q(y|x)] with the zero-density conventions.

    A zero-density candidate is never accepted; a candidate with positive
    density is always accepted from a zero-density state.
    """
    if math.isnan(log_new) or math.isnan(log_old):
        raise KernelError("target returned NaN")
    if log_new == -math.inf or log_q_back == -math.inf:
        return -math.inf
    if log_old == -math.inf:
        return math.inf
    return (log_new - log_old) + (log_q_back - log_q_fwd)


def acceptance_probability(log_ratio: float) -> float:
    return 1.0 if log_ratio >= 0 else math.exp(log_ratio)


def accept_draw(rng: Rng, log_ratio: float) -> bool:
    u = rng.random()
    log_u = math.log(u) if u > 0.0 else -math.inf
    return log_u < log_ratio


def _check_finite(y: np.ndarray, state: ChainState) -> None:
    if not all(map(math.isfinite, y.tolist())):
        raise KernelError(f"proposal produced a non-finite position at iteration {state.iteration + 1}")


def _move(state: ChainState, y, log_new, accepted: bool, log_estimate=None, latent=None):
    if accepted:
        return ChainState(y, log_new, log_estimate, state.iteration + 1, latent), True
    return ChainState(state.position, state.cached_log_target, state.cached_log_estimate,
                      state.iteration + 1, state.latent), False


# --- generic MH -----------------------------------------------------------

def mh_step(state: ChainState, target: TargetModel, proposal: ProposalKernel, rng: Rng):
    """One Metropolis-Hastings transition."""
    x = state.position
    y = np.asarray(proposal.sample(x, rng), dtype=float)
    _check_finite(y, state)
    log_new = target.log_density(y)
    if proposal.symmetric:
        log_r = log_acceptance_ratio(log_new, state.cached_log_target)
    else:
        log_r = log_acceptance_ratio(log_new, state.cached_log_target,
                                     proposal.log_density(y, x), proposal.log_density(x, y))
    return _move(state, y, log_new, accept_draw(rng, log_r))


def uniform_rw(scale) -> ProposalKernel:
    """y = x + U(-scale, scale), componentwise."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise InvalidParameterError("random-walk scale must be positive")

    if scale.ndim == 0:
        s = float(scale)

        def draw(x, rng):
            return x + rng.uniform(-s, s, size=x.shape)
    else:
        def draw(x, rng):
            return x + rng.uniform(-scale, scale, size=x.shape)

    def log_q(x, y):
        s = np.broadcast_to(scale, x.shape)
        if np.all(np.abs(y - x) < s):
            return -float(np.sum(np.log(2.0 * s)))
        return -math.inf

    return ProposalKernel(draw, log_q, symmetric=True, name="uniform-rw")


def gaussian_rw(scale) -> ProposalKernel:
    """y = x + scale * N(0, I)."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise InvalidParameterError("random-walk scale must be positive")

    if scale.ndim == 0:
        s = float(scale)

        def draw(x, rng):
            return x + s * rng.standard_normal(x.shape)
    else:
        def draw(x, rng):
            return x + scale * rng.standard_normal(x.shape)

    def log_q(x, y):
        s = np.broadcast_to(scale, x.shape)
        z = (y - x) / s
        return float(-0.5 * np.dot(z, z) - np.sum(np.log(s)) - 0.5 * x.size * math.log(2 * math.pi))

    return ProposalKernel(draw, log_q, symmetric=True, name="gaussian-rw")


def rwm_step(state: ChainState, target: TargetModel, scale, rng: Rng, perturbation: str = "uniform"):
    """Random-walk Metropolis; same arithmetic as :func:`mh_step` with a symmetric kernel."""
    kernels = {"uniform": uniform_rw, "gaussian": gaussian_rw}
    if perturbation not in kernels:
        raise InvalidParameterError(f"unknown perturbation {perturbation!r}")
    return mh_step(state, target, kernels[perturbation](scale), rng)


def nearest_neighbor_proposal(n_states: int) -> ProposalKernel:
    """+/-1 with probability 1/2 each on {0..n-1}; moves off the grid hit zero density."""

    def draw(x, rng):
        return x + (1.0 if rng.random() < 0.5 else -1.0)

    def log_q(x, y):
        return math.log(0.5) if abs(float(y[0] - x[0])) == 1.0 else -math.inf

    return ProposalKernel(draw, log_q, symmetric=True, name=f"nearest-neighbor({n_states})")


def log_normal_rw(sigma: float) -> ProposalKernel:
    """Multiplicative walk y = x exp(sigma Z) for positive parameters (Jacobian included)."""
    if sigma <= 0:
        raise InvalidParameterError("sigma must be positive")

    def draw(x, rng):
        return x * np.exp(sigma * rng.standard_normal(x.shape))

    def log_q(x, y):
        if np.any(y <= 0):
            return -math.inf
        ly = np.log(y)
        z = (ly - np.log(x)) / sigma
        return float(np.sum(-0.5 * z * z - ly) - x.size * (math.log(sigma) + 0.5 * math.log(2 * math.pi)))

    return ProposalKernel(draw, log_q, symmetric=False, name="log-normal-rw")


# --- Poisson/Geometric mixture moves ---------------------------------------

def _lambda_move_dist(lam: float, delta: float) -> LogNormal:
    ll = math.log(lam)
    return LogNormal(ll, math.sqrt(delta * (1.0 + ll * ll)))


def _alpha_move_dist(alpha: float, eps: float) -> Beta:
    return Beta(1.0 + eps * alpha, 1.0 + eps * (1.0 - alpha))


def lambda_move(delta: float) -> ProposalKernel:
    """lambda' ~ LN(log lambda, delta (1 + log^2 lambda)); density includes the 1/lambda' Jacobian."""
    if delta <= 0:
        raise InvalidParameterError("delta must be positive")
    return ProposalKernel(
        lambda x, rng: np.array([_lambda_move_dist(x[0], delta).sample(rng)]),
        lambda x, y: _lambda_move_dist(x[0], delta).log_pdf(y[0]),
        name="lambda-log-normal")


def alpha_move(eps: float) -> ProposalKernel:
    """alpha' ~ Beta(1 + eps alpha, 1 + eps (1 - alpha))."""
    if eps <= 0:
        raise InvalidParameterError("eps must be positive")
    return ProposalKernel(
        lambda x, rng: np.array([_alpha_move_dist(x[0], eps).sample(rng)]),
        lambda x, y: _alpha_move_dist(x[0], eps).log_pdf(y[0]),
        name="alpha-beta")


def mixture_joint_proposal(lam: float, alpha: float, eps: float, delta: float, rng: Rng):
    """Joint move on (lambda, alpha).

    Returns ``((lambda', alpha'), log_q_fwd, log_q_back)`` where log_q_fwd is
    log q(lambda', alpha' | lambda, alpha) and log_q_back the reverse, both
    including the log-normal Jacobian.
    """
    if not lam > 0 or not 0 < alpha < 1:
        raise InvalidParameterError("need lambda > 0 and 0 < alpha < 1")
    if eps <= 0 or delta <= 0:
        raise InvalidParameterError("eps and delta must be positive")
    lam_fwd = _lambda_move_dist(lam, delta)
    alp_fwd = _alpha_move_dist(alpha, eps)
    lam_new = lam_fwd.sample(rng)
    alp_new = alp_fwd.sample(rng)
    log_fwd = lam_fwd.log_pdf(lam_new) + alp_fwd.log_pdf(alp_new)
    if not 0.0 < alp_new < 1.0:
        # Beta draws can round onto the boundary; such a move is rejected anyway
        return (lam_new, alp_new), log_fwd, -math.inf
    log_back = (_lambda_move_dist(lam_new, delta).log_pdf(lam)
                + _alpha_move_dist(alp_new, eps).log_pdf(alpha))
    return (lam_new, alp_new), log_fwd, log_back


def mixture_joint_kernel(eps: float, delta: float) -> ProposalKernel:
    """The joint (lambda, alpha) move as a :class:`ProposalKernel` for :func:`mh_step`."""
    if eps <= 0 or delta <= 0:
        raise InvalidParameterError("eps and delta must be positive")

    def draw(x, rng):
        lam = _lambda_move_dist(x[0], delta).sample(rng)
        alp = _alpha_move_dist(x[1], eps).sample(rng)
        return np.array([lam, alp])

    def log_q(x, y):
        if not 0.0 < x[1] < 1.0:
            return -math.inf
        return (_lambda_move_dist(x[0], delta).log_pdf(y[0])
                + _alpha_move_dist(x[1], eps).log_pdf(y[1]))

    return ProposalKernel(draw, log_q, name="mixture-joint")


# --- Metropolis-within-Gibbs -----------------------------------------------

@dataclass(frozen=True)
class GibbsBlock:
    indices: tuple
    proposal: ProposalKernel
    name: str = ""


def _as_blocks(blocks) -> list:
    out = []
    for i, b in enumerate(blocks):
        if isinstance(b, GibbsBlock):
            out.append(b)
        elif isinstance(b, ProposalKernel):
            out.append(GibbsBlock((i,), b))
        else:
            idx, kernel = b
            out.append(GibbsBlock(tuple(np.atleast_1d(idx).tolist()), kernel))
    return out


def within_gibbs_step(state: ChainState, target: TargetModel, blocks: Sequence, rng: Rng):
    """Update each block in turn by an MH step against the joint target.

    ``blocks`` holds :class:`GibbsBlock` objects, ``(indices, kernel)`` pairs,
    or bare kernels (kernel ``i`` moves coordinate ``i``). Returns the new state
    and one accept flag per block.
    """
    flags = []
    x, log_x = state.position, state.cached_log_target
    for block in _as_blocks(blocks):
        idx = list(block.indices)
        xb = x[idx]
        yb = np.asarray(block.proposal.sample(xb, rng), dtype=float)
        _check_finite(yb, state)
        y = x.copy()
        y[idx] = yb
        log_new = target.log_density(y)
        if block.proposal.symmetric:
            log_r = log_acceptance_ratio(log_new, log_x)
        else:
            log_r = log_acceptance_ratio(log_new, log_x, block.proposal.log_density(yb, xb),
                                         block.proposal.log_density(xb, yb))
        accepted = accept_draw(rng, log_r)
        if accepted:
            x, log_x = y, log_new
        flags.append(accepted)
    return ChainState(x, log_x, state.cached_log_estimate, state.iteration + 1, state.latent), flags


def mixture_gibbs_blocks(eps: float, delta: float) -> list:
    """lambda then alpha, each with its own move."""
    return [GibbsBlock((0,), lambda_move(delta), "lambda"),
            GibbsBlock((1,), alpha_move(eps), "alpha")]


# --- MALA -----------------------------------------------------------------

def mala_step(state: ChainState, target: TargetModel, step: float, rng: Rng):
    """Langevin proposal N(x + (h/2) grad log pi(x), h I) with the full Hastings ratio."""
    if target.gradient is None:
        raise UnsupportedKernelError("MALA needs a target gradient")
    if step <= 0:
        raise InvalidParameterError("MALA step must be positive")
    x = state.position
    half = 0.5 * step
    mean_x = x + half * target.gradient(x)
    y = mean_x + math.sqrt(step) * rng.standard_normal(x.shape)
    _check_finite(y, state)
    log_new = target.log_density(y)
    if log_new == -math.inf:
        return _move(state, y, log_new, accept_draw(rng, -math.inf))
    mean_y = y + half * target.gradient(y)
    d_fwd = y - mean_x
    d_back = x - mean_y
    log_fwd = -float(np.dot(d_fwd, d_fwd)) / (2.0 * step)
    log_back = -float(np.dot(d_back, d_back)) / (2.0 * step)
    log_r = log_acceptance_ratio(log_new, state.cached_log_target, log_back, log_fwd)
    return _move(state, y, log_new, accept_draw(rng, log_r))


# --- HMC ------------------------------------------------------------------

def leapfrog(q, p, settings: HmcSettings, gradient):
    """Integrate Hamilton's equations for ``n_leapfrog`` steps.

    Returns ``(q, p, diverged)``; ``diverged`` is set as soon as the gradient
    or the state stops being finite.
    """
    eps = settings.step_size
    inv_mass = 1.0 / settings.mass_diagonal
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    g = gradient(q)
    for _ in range(settings.n_leapfrog):
        p = p + 0.5 * eps * g
        q = q + eps * inv_mass * p
        g = gradient(q)
        p = p + 0.5 * eps * g
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            return q, p, True
    return q, p, False


def kinetic_energy(p, mass_diagonal) -> float:
    return 0.5 * float(np.sum(p * p / mass_diagonal))


def hamiltonian(q, p, target: TargetModel, mass_diagonal) -> float:
    return -target.log_density(q) + kinetic_energy(p, mass_diagonal)


def hmc_step(state: ChainState, target: TargetModel, settings: HmcSettings, rng: Rng):
    if target.gradient is None:
        raise UnsupportedKernelError("HMC needs a target gradient")
    m = np.broadcast_to(settings.mass_diagonal, state.position.shape)
    p0 = np.sqrt(m) * rng.standard_normal(state.position.shape)
    q1, p1, diverged = leapfrog(state.position, p0, settings, target.gradient)
    if diverged:
        return _move(state, q1, -math.inf, accept_draw(rng, -math.inf))
    log_new = target.log_density(q1)
    # log_new - log_old + K0 - K1 = H(q0, p0) - H(q1, p1)
    log_r = log_acceptance_ratio(log_new, state.cached_log_target,
                                 kinetic_energy(p0, m), kinetic_energy(p1, m))
    return _move(state, q1, log_new, accept_draw(rng, log_r))


# --- pseudo-marginal --------------------------------------------------------

LogEstimator = Callable[[np.ndarray, Rng], float]


def linear_estimator(estimate: Callable[[np.ndarray, Rng], float]) -> LogEstimator:
    """Wrap an estimator returning a nonnegative value so it returns a log-estimate."""

    def log_estimate(theta, rng):
        v = float(estimate(theta, rng))
        if not v >= 0:
            raise EstimatorError(f"estimator returned {v}; estimates must be nonnegative")
        return math.log(v) if v > 0 else -math.inf

    return log_estimate


def initial_pm_state(position, log_estimator: LogEstimator, rng: Rng) -> ChainState:
    """Start a pseudo-marginal chain; the estimate at the start is drawn once here."""
    x = np.atleast_1d(np.asarray(position, dtype=float)).copy()
    est = _checked_estimate(log_estimator, x, rng)
    return ChainState(x, est, est, 0)


def _checked_estimate(log_estimator, theta, rng) -> float:
    est = float(log_estimator(theta, rng))
    if math.isnan(est) or est == math.inf:
        raise EstimatorError(f"estimator returned log-estimate {est}")
    return est


def pseudo_marginal_step(state: ChainState, log_estimator: LogEstimator,
                         proposal: ProposalKernel, rng: Rng):
    """MH with an unbiased estimate in place of the target.

    The estimate at the current point is never refreshed: it is carried in
    ``cached_log_estimate`` until a move is accepted.
    """
    if state.cached_log_estimate is None:
        raise KernelError("pseudo-marginal state has no cached estimate")
    x = state.position
    y = np.asarray(proposal.sample(x, rng), dtype=float)
    _check_finite(y, state)
    est = _checked_estimate(log_estimator, y, rng)
    if proposal.symmetric:
        log_r = log_acceptance_ratio(est, state.cached_log_estimate)
    else:
        log_r = log_acceptance_ratio(est, state.cached_log_estimate,
                                     proposal.log_density(y, x), proposal.log_density(x, y))
    return _move(state, y, est, accept_draw(rng, log_r), log_estimate=est)


# --- exact transition matrices on finite state spaces ------------------------

def mh_transition_matrix(log_pi, q) -> np.ndarray:
    """Transition matrix of MH on {0..n-1} with proposal matrix ``q``.

    Acceptance uses :func:`log_acceptance_ratio`, the same rule the sampling
    kernels apply.
    """
    log_pi = np.asarray(log_pi, dtype=float)
    q = np.asarray(q, dtype=float)
    n = len(log_pi)
    with np.errstate(divide="ignore"):
        log_q = np.log(q)
    P = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and q[i, j] > 0:
                r = log_acceptance_ratio(log_pi[j], log_pi[i], log_q[j, i], log_q[i, j])
                P[i, j] = q[i, j] * acceptance_probability(r)
        P[i, i] = 1.0 - P[i].sum()
    return P


def pseudo_marginal_transition_matrix(log_pi, q, noise_values, noise_probs) -> np.ndarray:
    """Exact kernel of pseudo-marginal MH when the estimate is pi_j * W, W discrete.

    The chain lives on pairs (state i, noise level k), flattened as
    ``i * K + k``. With a single noise level 1 this is an n x n matrix.
    """
    log_pi = np.asarray(log_pi, dtype=float)
    q = np.asarray(q, dtype=float)
    w = np.asarray(noise_values, dtype=float)
    pw = np.asarray(noise_probs, dtype=float)
    n, K = len(log_pi), len(w)
    with np.errstate(divide="ignore"):
        log_q = np.log(q)
        log_w = np.log(w)
    P = np.zeros((n * K, n * K))
    for i in range(n):
        for k in range(K):
            a = i * K + k
            for j in range(n):
                if i == j or q[i, j] == 0:
                    continue
                for k2 in range(K):
                    r = log_acceptance_ratio(log_pi[j] + log_w[k2], log_pi[i] + log_w[k],
                                             log_q[j, i], log_q[i, j])
                    P[a, j * K + k2] = q[i, j] * pw[k2] * acceptance_probability(r)
            P[a, a] += 1.0 - P[a].sum()
    return P


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Left eigenvector of ``P`` for eigenvalue 1, normalized to sum to one."""
    vals, vecs = np.linalg.eig(np.asarray(P).T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()
