"""Run a transition function repeatedly and record the result as a Trace."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .diagnostics import Trace
from .kernels import ChainState, KernelError
from .stochastic import Rng


class ChainRuntimeError(RuntimeError):
    """A kernel failed mid-run; ``iteration`` is the 1-based step that failed."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


def sample_chain(step: Callable, state: ChainState, n_steps: int, rng: Rng,
                 kernel_label: str = "", seed=None, coord_names=(), block_names=()):
    """Apply ``step(state, rng) -> (state, accepted)`` ``n_steps`` times.

    ``accepted`` may be a list of per-block flags, in which case the trace
    keeps them and the row flag is "any block moved". Returns the final state
    and the trace.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    d = len(state.position)
    pos = np.empty((n_steps, d))
    logs = np.empty(n_steps)
    flags = []
    for t in range(n_steps):
        try:
            state, acc = step(state, rng)
        except (KernelError, ArithmeticError) as exc:
            raise ChainRuntimeError(t + 1, exc) from exc
        pos[t] = state.position
        logs[t] = state.cached_log_target
        flags.append(acc)
    block = None
    if flags and isinstance(flags[0], (list, tuple)):
        block = np.asarray(flags, dtype=bool)
        row = block.any(axis=1)
    else:
        row = np.asarray(flags, dtype=bool)
    trace = Trace(pos, row, logs, kernel_label, seed, tuple(coord_names), block, tuple(block_names))
    return state, trace
