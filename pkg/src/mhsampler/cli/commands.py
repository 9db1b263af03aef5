"""Implementations behind the ``run``, ``diagnose``, ``hist`` and ``compare`` subcommands."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..adaptation import ScaleAdaptor, run_warmup
from ..chain import ChainRuntimeError, sample_chain
from ..diagnostics import DiagnosticsReport, Trace, default_burn_in, diagnose_trace, _jsonable
from ..kernels import (
    HmcSettings,
    KernelError,
    alpha_move,
    gaussian_rw,
    hmc_step,
    initial_pm_state,
    initial_state,
    lambda_move,
    log_normal_rw,
    mala_step,
    mh_step,
    mixture_joint_kernel,
    nearest_neighbor_proposal,
    pseudo_marginal_step,
    uniform_rw,
    within_gibbs_step,
    GibbsBlock,
)
from ..particle import (
    LgssParams,
    _kalman,
    emission_variance_family,
    initial_pmcmc_state,
    log_normal_prior,
    pmcmc_step,
)
from ..stochastic import make_rng, spawn_rngs
from ..targets import (
    TargetModel,
    discrete_target,
    gaussian_target,
    load_lgss_observations,
    load_mixture_data,
    mixture_target,
    normalize_by_quadrature,
    read_values,
    simpson,
    toy_sin_log_target,
    toy_sin_target,
)
from .config import ConfigError, ExperimentConfig
from .traceio import write_trace, read_trace, fmt


@dataclass
class Sampler:
    target: TargetModel
    make_step: Callable
    init_state: Callable
    label: str
    scale: Optional[np.ndarray] = None
    block_names: tuple = ()
    default_start: Optional[list] = None
    latent: bool = False


def _lgss_parts(cfg: ExperimentConfig):
    tp = cfg.target_params
    ys = load_lgss_observations(cfg.resolve(tp["data"]) if tp.get("data") else None)
    if not ys:
        raise ConfigError("observation file is empty")
    base = LgssParams(a=tp["a"], q=tp["q"], c=tp["c"], r=1.0, m0=tp["m0"], v0=tp["v0"])
    prior = log_normal_prior(tp["prior_mu"], tp["prior_sigma"])
    return base, ys, prior


def build_target(cfg: ExperimentConfig):
    """(target model, default start)."""
    name, tp = cfg.target, cfg.target_params
    if name == "toy-sin":
        return toy_sin_target(), [3.14]
    if name == "gaussian":
        return gaussian_target(tp["d"]), [0.0] * tp["d"]
    if name == "discrete":
        w = np.asarray(tp["weights"])
        return discrete_target(w), [float(np.flatnonzero(w > 0)[0])]
    if name == "mixture":
        data = load_mixture_data(cfg.resolve(tp["data"]) if tp.get("data") else None)
        return mixture_target(data), [float(np.mean(data.observations)), 0.5]
    if name == "lgss-hmm":
        base, ys, prior = _lgss_parts(cfg)

        def log_density(theta):
            r = float(theta[0])
            if r <= 0:
                return -math.inf
            return _kalman(base.a, base.q, base.c, r, base.m0, base.v0, ys) + prior(theta)

        target = TargetModel(1, log_density, description="LGSS emission-variance posterior",
                             coord_names=("r",))
        return target, [1.0]
    raise ConfigError(f"unknown target {name!r}")


def build_sampler(cfg: ExperimentConfig) -> Sampler:
    target, start = build_target(cfg)
    kp = cfg.kernel_params
    k = cfg.kernel
    discrete = cfg.target == "discrete"
    cache = {}

    def cached(factory):
        def make(scale):
            key = tuple(np.atleast_1d(scale).tolist())
            if key not in cache:
                cache[key] = factory(np.atleast_1d(np.asarray(scale, dtype=float)))
            return cache[key]
        return make

    def state0(rng):
        return initial_state(target, cfg.start if cfg.start is not None else start)

    def rw_kernel(s):
        if discrete:
            return nearest_neighbor_proposal(len(cfg.target_params["weights"]))
        s = s[0] if len(s) == 1 else s
        return (uniform_rw if kp["perturbation"] == "uniform" else gaussian_rw)(s)

    if k == "rwm":
        def factory(s):
            kern = rw_kernel(s)
            return lambda st, rng: mh_step(st, target, kern, rng)
        return Sampler(target, cached(factory), state0, f"rwm({kp['perturbation']})",
                       None if discrete else np.asarray(kp["scale"]), default_start=start)
    if k == "mh-joint-mixture":
        kern = mixture_joint_kernel(kp["eps"], kp["delta"])
        step = lambda st, rng: mh_step(st, target, kern, rng)
        return Sampler(target, lambda s: step, state0, "mh-joint-mixture", None, default_start=start)
    if k == "within-gibbs-mixture":
        def factory(s):
            blocks = [GibbsBlock((0,), lambda_move(s[0]), "lambda"),
                      GibbsBlock((1,), alpha_move(1.0 / s[1]), "alpha")]
            return lambda st, rng: within_gibbs_step(st, target, blocks, rng)
        return Sampler(target, cached(factory), state0, "within-gibbs-mixture",
                       np.array([kp["delta"], 1.0 / kp["eps"]]), ("lambda", "alpha"), start)
    if k == "mala":
        def factory(s):
            return lambda st, rng: mala_step(st, target, float(s[0]), rng)
        return Sampler(target, cached(factory), state0, "mala", np.array([kp["step"]]), default_start=start)
    if k == "hmc":
        mass = np.broadcast_to(np.asarray(kp["mass"]), (target.dimension,)).copy()

        def factory(s):
            settings = HmcSettings(float(s[0]), kp["n_leapfrog"], mass)
            return lambda st, rng: hmc_step(st, target, settings, rng)
        return Sampler(target, cached(factory), state0, "hmc", np.array([kp["step_size"]]), default_start=start)
    if k == "pseudo-marginal":
        lo, hi = math.log1p(-kp["noise"]) if kp["noise"] < 1 else -math.inf, math.log1p(kp["noise"])

        def log_estimator(theta, rng):
            return target.log_density(theta) + (lo if rng.random() < 0.5 else hi)

        def factory(s):
            kern = rw_kernel(s)
            return lambda st, rng: pseudo_marginal_step(st, log_estimator, kern, rng)

        def pm_state0(rng):
            return initial_pm_state(cfg.start if cfg.start is not None else start, log_estimator, rng)
        return Sampler(target, cached(factory), pm_state0, f"pseudo-marginal(noise={kp['noise']})",
                       None if discrete else np.asarray(kp["scale"]), default_start=start)
    if k == "pmcmc":
        base, ys, prior = _lgss_parts(cfg)
        family = emission_variance_family(base)
        n, keep = kp["particles"], kp["record_latent"]

        def factory(s):
            kern = log_normal_rw(float(s[0]))
            return lambda st, rng: pmcmc_step(st, family, prior, kern, n, ys, rng, keep_path=keep)

        def pm_state0(rng):
            return initial_pmcmc_state(cfg.start if cfg.start is not None else start, family, prior, n, ys,
                                       rng, keep_path=keep)
        return Sampler(target, cached(factory), pm_state0, f"pmcmc(N={n})", np.asarray(kp["scale"][:1]),
                       default_start=start, latent=keep)
    raise ConfigError(f"unknown kernel {k!r}")


@dataclass
class RunResult:
    trace: Trace
    report: DiagnosticsReport
    files: dict = field(default_factory=dict)


def _counted(step, offset=0):
    """Wrap a scale-taking step so kernel errors report their iteration."""
    count = [offset]

    def wrapped(state, scale, rng):
        count[0] += 1
        try:
            return step(scale)(state, rng)
        except (KernelError, ArithmeticError) as exc:
            raise ChainRuntimeError(count[0], exc) from exc
    return wrapped


def run_experiment(cfg: ExperimentConfig, replicate: Optional[int] = None, n_replicates: int = 1,
                   write: bool = True) -> RunResult:
    """Optional warm-up, then the sampling phase; writes trace, report (and warm-up) files."""
    if replicate is None:
        rng = make_rng(cfg.seed)
        prefix = cfg.output_prefix
    else:
        rng = spawn_rngs(cfg.seed, n_replicates)[replicate]
        prefix = f"{cfg.output_prefix}.r{replicate}"
    sampler = build_sampler(cfg)
    names = sampler.target.coord_names
    files = {}
    try:
        state = sampler.init_state(rng)
    except (KernelError, ArithmeticError) as exc:
        raise ChainRuntimeError(0, exc) from exc
    scale = sampler.scale
    warm = None
    if cfg.adapt is not None:
        if scale is None:
            raise ConfigError(f"kernel {cfg.kernel} on target {cfg.target} has no scale to adapt")
        adaptor = ScaleAdaptor.from_scale(scale, target_rate=cfg.adapt["target_rate"],
                                          window=cfg.adapt["window"])
        warm = run_warmup(_counted(sampler.make_step), state, adaptor, cfg.adapt["windows"], rng)
        state = warm.state
        scale = warm.adaptor.scale
    step = sampler.make_step(scale if scale is not None else np.ones(1))
    paths = []
    if sampler.latent:
        inner = step

        def step(st, r):
            st, acc = inner(st, r)
            paths.append(st.latent)
            return st, acc
    offset = 0 if warm is None else len(warm.positions)
    try:
        _, trace = sample_chain(step, state, cfg.chain_length, rng, sampler.label, cfg.seed,
                                names, sampler.block_names)
    except ChainRuntimeError as exc:
        raise ChainRuntimeError(offset + exc.iteration, exc.cause) from exc
    burn_in = cfg.burn_in if cfg.burn_in is not None else default_burn_in(cfg.chain_length)
    report = diagnose_trace(trace, cfg.lags, burn_in)
    if warm is not None:
        report.warmup = warm.summary()
    if write:
        Path(prefix).parent.mkdir(parents=True, exist_ok=True)
        files["trace"] = f"{prefix}.csv"
        write_trace(files["trace"], trace)
        if warm is not None:
            files["warmup"] = f"{prefix}.warmup.csv"
            flags = warm.accept_flags
            block = np.asarray(flags, dtype=bool) if flags and np.ndim(flags[0]) else None
            row = block.any(axis=1) if block is not None else np.asarray(flags, dtype=bool)
            wt = Trace(np.asarray(warm.positions), row, np.asarray(warm.log_targets), sampler.label,
                       cfg.seed, names, block, sampler.block_names if block is not None else ())
            write_trace(files["warmup"], wt)
        if paths:
            files["latent"] = f"{prefix}.latent.csv"
            write_latent(files["latent"], paths)
        files["report"] = f"{prefix}.report.json"
        Path(files["report"]).write_text(report.to_json())
    return RunResult(trace, report, files)


def write_latent(path, paths) -> None:
    """One row per iteration: the latent path x_0..x_T held by the chain (empty if none)."""
    width = max((len(p) for p in paths if p is not None), default=0)
    with open(path, "w") as fh:
        fh.write(",".join(["iteration"] + [f"x{t}" for t in range(width)]) + "\n")
        for i, p in enumerate(paths):
            vals = [] if p is None else [repr(float(v)) for v in p]
            fh.write(",".join([str(i)] + vals) + "\n")


def diagnose_file(trace_path, lags: Sequence[int], burn_in: Optional[int] = None) -> DiagnosticsReport:
    return diagnose_trace(read_trace(trace_path), lags, burn_in)


# --- histograms -------------------------------------------------------------

class EmptyHistogramError(ValueError):
    pass


REFERENCE_TARGETS = {
    # name -> (vectorized log-density, integration range for the normalizing constant)
    "toy-sin": (toy_sin_log_target, (-5.0, 5.0)),
    "gaussian": (lambda x: -0.5 * np.asarray(x) ** 2, (-10.0, 10.0)),
}


def reference_bin_densities(name: str, edges: np.ndarray, points_per_bin: int = 201) -> np.ndarray:
    """Average normalized target density over each bin (Simpson within the bin)."""
    if name not in REFERENCE_TARGETS:
        raise ValueError(f"no reference density for {name!r}; choose from {', '.join(REFERENCE_TARGETS)}")
    logf, (lo, hi) = REFERENCE_TARGETS[name]
    Z = normalize_by_quadrature(logf, lo, hi, 4001)
    out = np.empty(len(edges) - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        g = np.linspace(a, b, points_per_bin)
        v = np.exp(logf(g))
        out[i] = simpson(np.where(np.isfinite(v), v, 0.0), a, b) / (b - a) / Z
    return out


def histogram_table(values, bins: int, lo: float, hi: float, reference: Optional[str] = None) -> dict:
    """Bin table with densities normalized by the total sample count."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if not lo < hi:
        raise ValueError("need lo < hi")
    values = np.asarray(values, dtype=float)
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(values, edges)
    if counts.sum() == 0:
        raise EmptyHistogramError(f"no samples fall inside [{lo}, {hi}]")
    width = edges[1:] - edges[:-1]
    table = {
        "bin_lo": edges[:-1],
        "bin_hi": edges[1:],
        "center": 0.5 * (edges[:-1] + edges[1:]),
        "density": counts / (len(values) * width),
    }
    if reference is not None:
        table["reference"] = reference_bin_densities(reference, edges)
    return table


def tv_distance(table: dict) -> float:
    """Total variation between the empirical and reference bin masses."""
    width = table["bin_hi"] - table["bin_lo"]
    return 0.5 * float(np.sum(np.abs(table["density"] - table["reference"]) * width))


def write_table(path, table: dict) -> None:
    cols = list(table)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(table[cols[0]])):
            fh.write(",".join(fmt(float(table[c][i])) for c in cols) + "\n")


# --- comparison -------------------------------------------------------------

def compare_traces(traces: Sequence[Trace], column: str, burn_in: Optional[int] = None,
                   labels: Sequence[str] = ()) -> dict:
    """Per-trace mean/MCSE/ESS/acceptance and pairwise mean differences in combined-MCSE units."""
    if len(traces) < 2:
        raise ValueError("compare needs at least two traces")
    rows = []
    for i, tr in enumerate(traces):
        col = tr.column(column)
        b = default_burn_in(len(tr)) if burn_in is None else burn_in
        rep = diagnose_trace(Trace(col[:, None], tr.accept_flags, tr.log_targets, coord_names=(column,)),
                             (1,), b)
        rows.append({
            "trace": labels[i] if i < len(labels) else str(i),
            "mean": rep.mean[0],
            "mcse": rep.mcse[0],
            "ess": rep.ess[0],
            "acceptance_rate": rep.acceptance_rate,
        })
    pairs = []
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            a, b = rows[i], rows[j]
            diff = a["mean"] - b["mean"]
            z = None
            if a["mcse"] is not None and b["mcse"] is not None:
                se = math.hypot(a["mcse"], b["mcse"])
                z = abs(diff) / se if se > 0 else (0.0 if diff == 0 else None)
            pairs.append({"a": a["trace"], "b": b["trace"], "mean_difference": diff,
                          "combined_mcse_units": z})
    return {"column": column, "traces": rows, "pairs": pairs}


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2) + "\n"
