"""Warm-up calibration of proposal scales with diminishing adaptation.

The log-scale of each adapted block follows a Robbins-Monro recursion

    log_scale += gamma_k * (window_accept_rate - target_rate),
    gamma_k = min(1, c / sqrt(k)),

evaluated once per window of steps. The schedule (c = 1, windows of 100
steps) is this package's own choice; any schedule with gamma_k -> 0 gives
diminishing adaptation. After warm-up the adaptor is frozen and the sampling
phase runs an ordinary Markov chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .kernels import ChainState
from .stochastic import Rng

REGULARIZER = 1e-6


class FrozenAdaptorError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScaleAdaptor:
    log_scale: np.ndarray
    target_rate: float = 0.25
    window: int = 100
    adaptation_count: int = 0
    frozen: bool = False
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "log_scale", np.atleast_1d(np.asarray(self.log_scale, dtype=float)))
        if not 0.0 < self.target_rate < 1.0:
            raise ValueError("target_rate must lie in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be positive")

    @classmethod
    def from_scale(cls, scale, **kwargs) -> "ScaleAdaptor":
        return cls(np.log(np.atleast_1d(np.asarray(scale, dtype=float))), **kwargs)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def step_size(self, k: int) -> float:
        """gamma_k for the k-th update (k >= 1)."""
        return min(1.0, self.gain / math.sqrt(k))


def adapt_scale(adaptor: ScaleAdaptor, window_accept_rate) -> ScaleAdaptor:
    if adaptor.frozen:
        raise FrozenAdaptorError("adaptor is frozen")
    rate = np.broadcast_to(np.asarray(window_accept_rate, dtype=float), adaptor.log_scale.shape)
    if np.any(rate < 0) or np.any(rate > 1):
        raise ValueError("window acceptance rate must lie in [0, 1]")
    k = adaptor.adaptation_count + 1
    new = adaptor.log_scale + adaptor.step_size(k) * (rate - adaptor.target_rate)
    return replace(adaptor, log_scale=new, adaptation_count=k)


def freeze(adaptor: ScaleAdaptor) -> ScaleAdaptor:
    return adaptor if adaptor.frozen else replace(adaptor, frozen=True)


@dataclass(frozen=True)
class CovarianceAccumulator:
    """Streaming mean and scatter matrix (Welford)."""

    mean: np.ndarray
    scatter: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, d: int) -> "CovarianceAccumulator":
        return cls(np.zeros(d), np.zeros((d, d)), 0)

    @property
    def dimension(self) -> int:
        return len(self.mean)

    def covariance(self) -> np.ndarray:
        """Sample covariance (n - 1 denominator) plus the regularizer."""
        d = self.dimension
        reg = REGULARIZER * np.eye(d)
        if self.count < 2:
            return reg
        return self.scatter / (self.count - 1) + reg

    def proposal_covariance(self, scale: float = None) -> np.ndarray:
        """Scaled empirical covariance; default scale 2.38^2 / d."""
        if scale is None:
            scale = 2.38 ** 2 / self.dimension
        d = self.dimension
        if self.count < 2:
            return REGULARIZER * np.eye(d)
        return scale * self.scatter / (self.count - 1) + REGULARIZER * np.eye(d)


def update_covariance(acc: CovarianceAccumulator, x) -> CovarianceAccumulator:
    x = np.asarray(x, dtype=float)
    if x.shape != acc.mean.shape:
        raise ValueError(f"point has shape {x.shape}, accumulator expects {acc.mean.shape}")
    n = acc.count + 1
    delta = x - acc.mean
    mean = acc.mean + delta / n
    scatter = acc.scatter + np.outer(delta, x - mean)
    scatter = 0.5 * (scatter + scatter.T)
    return CovarianceAccumulator(mean, scatter, n)


@dataclass
class WarmupResult:
    state: ChainState
    adaptor: ScaleAdaptor
    initial_scale: list
    window_rates: list = field(default_factory=list)
    scales: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    log_targets: list = field(default_factory=list)
    accept_flags: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "initial_scale": [float(s) for s in self.initial_scale],
            "final_scale": [float(s) for s in self.adaptor.scale],
            "target_rate": self.adaptor.target_rate,
            "window": self.adaptor.window,
            "windows": self.adaptor.adaptation_count,
            "window_rates": [[float(r) for r in np.atleast_1d(w)] for w in self.window_rates],
        }


def run_warmup(step: Callable, state: ChainState, adaptor: ScaleAdaptor, n_windows: int,
               rng: Rng) -> WarmupResult:
    """Adapt scales over ``n_windows`` windows, then freeze.

    ``step(state, scale, rng)`` performs one transition at the given scale
    vector and returns ``(state, accepted)``; ``accepted`` is a bool or one
    flag per adapted block.
    """
    result = WarmupResult(state, adaptor, list(adaptor.scale))
    for _ in range(n_windows):
        scale = adaptor.scale
        hits = np.zeros(adaptor.log_scale.shape)
        for _ in range(adaptor.window):
            state, acc = step(state, scale, rng)
            hits += np.asarray(acc, dtype=float)
            result.positions.append(state.position)
            result.log_targets.append(state.cached_log_target)
            result.accept_flags.append(acc)
        rate = hits / adaptor.window
        result.window_rates.append(rate)
        adaptor = adapt_scale(adaptor, rate)
        result.scales.append(adaptor.scale)
    result.state = state
    result.adaptor = freeze(adaptor)
    return result
