"""Chain-quality measurements: acceptance, autocorrelation, ESS, MCSE, subsampling lag."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

FORMAT_VERSION = 1
DEFAULT_LAGS = (1, 5, 10, 50)
MIN_ESS_LENGTH = 10


class DegenerateSeriesError(ValueError):
    """The series has zero variance, so correlations are undefined."""


class SubsampleLagCapWarning(UserWarning):
    """No lag below the cap brought the autocorrelation under the threshold."""


@dataclass
class Trace:
    """A recorded chain: one row per transition."""

    positions: np.ndarray
    accept_flags: np.ndarray
    log_targets: np.ndarray
    kernel_label: str = ""
    seed: Optional[int] = None
    coord_names: tuple = ()
    block_flags: Optional[np.ndarray] = None
    block_names: tuple = ()

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim == 1:
            self.positions = self.positions[:, None]
        self.accept_flags = np.asarray(self.accept_flags, dtype=bool)
        self.log_targets = np.asarray(self.log_targets, dtype=float)
        T = len(self.positions)
        if T < 1:
            raise ValueError("a trace needs at least one row")
        if len(self.accept_flags) != T or len(self.log_targets) != T:
            raise ValueError("positions, accept flags and log targets must have equal length")
        if not self.coord_names:
            d = self.positions.shape[1]
            self.coord_names = ("x",) if d == 1 else tuple(f"x{i}" for i in range(d))
        if self.block_flags is not None:
            self.block_flags = np.asarray(self.block_flags, dtype=bool)
            if self.block_flags.shape[0] != T:
                raise ValueError("block flags must have one row per transition")
            if not self.block_names:
                self.block_names = tuple(f"b{i}" for i in range(self.block_flags.shape[1]))

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def column(self, name: str) -> np.ndarray:
        if name == "log_target":
            return self.log_targets
        try:
            return self.positions[:, self.coord_names.index(name)]
        except ValueError:
            raise KeyError(f"trace has no column {name!r}") from None


def default_burn_in(T: int) -> int:
    return T // 10


def empirical_mean(trace: Trace, h: Callable = lambda x: x[0], burn_in: int = 0) -> float:
    """Average of h over the post-burn-in rows."""
    T = len(trace)
    if not 0 <= burn_in < T:
        raise ValueError(f"burn_in={burn_in} leaves no samples out of {T}")
    return float(np.mean([h(x) for x in trace.positions[burn_in:]]))


def _centered(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("need a 1-d series of length >= 2")
    xc = x - x.mean()
    if not np.any(xc):
        raise DegenerateSeriesError("series has zero variance")
    return xc


def autocorr(series, lags: Sequence[int]) -> list:
    """Sample autocorrelation at each lag (lag 0 is exactly 1)."""
    xc = _centered(series)
    T = len(xc)
    denom = float(np.dot(xc, xc))
    out = []
    for k in lags:
        if not 0 <= k < T:
            raise ValueError(f"lag {k} must lie in [0, {T})")
        out.append(1.0 if k == 0 else float(np.dot(xc[:-k], xc[k:])) / denom)
    return out


def _acf_all(series) -> np.ndarray:
    """Autocorrelations at every lag 0..T-1 via FFT."""
    xc = _centered(series)
    T = len(xc)
    n = 1 << (2 * T - 1).bit_length()
    f = np.fft.rfft(xc, n)
    acov = np.fft.irfft(f * np.conj(f), n)[:T]
    rho = acov / acov[0]
    rho[0] = 1.0
    return rho


def effective_sample_size(series) -> tuple:
    """(ess, kappa) with kappa the integrated autocorrelation.

    The autocorrelation sum is truncated by Geyer's initial positive sequence:
    consecutive pairs rho(2k) + rho(2k+1) are added while they stay positive.
    kappa is clamped at 1 from below, so ess never exceeds the length.
    """
    x = np.asarray(series, dtype=float)
    T = len(x)
    if T < MIN_ESS_LENGTH:
        raise ValueError(f"need at least {MIN_ESS_LENGTH} values, got {T}")
    rho = _acf_all(x)
    total = 0.0
    k = 0
    while 2 * k + 1 < T:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        total += pair
        k += 1
    kappa = max(1.0, -1.0 + 2.0 * total)
    return T / kappa, kappa


def mc_standard_error(series) -> float:
    x = np.asarray(series, dtype=float)
    _, kappa = effective_sample_size(x)
    return math.sqrt(np.var(x, ddof=1) * kappa / len(x))


def _subsample_lag(series, threshold: float) -> tuple:
    rho = _acf_all(series)
    T = len(rho)
    cap = max(1, T // 10)
    for g in range(1, cap + 1):
        if abs(rho[g]) < threshold:
            return g, False
    return cap, True


def subsample_lag(series, threshold: float = 0.1) -> int:
    """Smallest lag G with |acf(G)| < threshold, capped at T/10 (with a warning)."""
    g, capped = _subsample_lag(series, threshold)
    if capped:
        warnings.warn(f"autocorrelation stays above {threshold} up to lag {g}; using the cap",
                      SubsampleLagCapWarning, stacklevel=2)
    return g


@dataclass
class DiagnosticsReport:
    kernel_label: str
    seed: Optional[int]
    n_samples: int
    burn_in_used: int
    columns: list
    acceptance_rate: float
    block_acceptance: Optional[dict]
    mean: list
    acf: dict
    ess: list
    ess_min: Optional[float]
    kappa: list
    mcse: list
    subsample_lag: list
    warnings: list = field(default_factory=list)
    warmup: Optional[dict] = None
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        d = asdict(self)
        ordered = {"format_version": d.pop("format_version")}
        ordered.update(d)
        return ordered

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def diagnose_trace(trace: Trace, lags: Sequence[int] = DEFAULT_LAGS,
                   burn_in: Optional[int] = None, threshold: float = 0.1) -> DiagnosticsReport:
    """Per-coordinate diagnostics on the post-burn-in part of a trace.

    Fields that cannot be computed (too few rows, constant column) are None
    and a note is added to ``warnings``.
    """
    T = len(trace)
    if burn_in is None:
        burn_in = default_burn_in(T)
    if not 0 <= burn_in < T:
        raise ValueError(f"burn_in={burn_in} leaves no samples out of {T}")
    notes = []
    window = trace.positions[burn_in:]
    n = len(window)
    means, ess, kappa, mcse, lagsG = [], [], [], [], []
    acf = {int(k): [] for k in lags}
    for j, name in enumerate(trace.coord_names):
        col = window[:, j]
        means.append(float(np.mean(col)))
        degenerate = n < 2 or not np.any(col - col.mean())
        if degenerate:
            notes.append(f"{name}: degenerate series (constant or too short)")
        for k in acf:
            acf[k].append(None if degenerate or k >= n else autocorr(col, [k])[0])
        if degenerate or n < MIN_ESS_LENGTH:
            if not degenerate:
                notes.append(f"{name}: fewer than {MIN_ESS_LENGTH} samples, ESS not computed")
            ess.append(None)
            kappa.append(None)
            mcse.append(None)
            lagsG.append(None)
            continue
        e, kap = effective_sample_size(col)
        ess.append(e)
        kappa.append(kap)
        mcse.append(math.sqrt(np.var(col, ddof=1) * kap / n))
        g, capped = _subsample_lag(col, threshold)
        if capped:
            notes.append(f"{name}: subsampling lag capped at {g}")
        lagsG.append(g)
    finite_ess = [e for e in ess if e is not None]
    block_acc = None
    if trace.block_flags is not None:
        block_acc = {b: float(np.mean(trace.block_flags[:, i])) for i, b in enumerate(trace.block_names)}
    return DiagnosticsReport(
        kernel_label=trace.kernel_label,
        seed=trace.seed,
        n_samples=T,
        burn_in_used=burn_in,
        columns=list(trace.coord_names),
        acceptance_rate=float(np.mean(trace.accept_flags)),
        block_acceptance=block_acc,
        mean=means,
        acf=acf,
        ess=ess,
        ess_min=min(finite_ess) if finite_ess else None,
        kappa=kappa,
        mcse=mcse,
        subsample_lag=lagsG,
        warnings=notes,
    )
