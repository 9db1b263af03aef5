"""Experiment configuration: flat ``section.key = value`` text files.

Example::

    # toy target, unit scale
    target.name = toy-sin
    kernel.name = rwm
    kernel.scale = 1.0
    chain.length = 10000
    chain.seed = 1
    chain.start = 3.14
    output.prefix = runs/toy

Keys
----
target.name         toy-sin | mixture | gaussian | lgss-hmm | discrete
target.data         data file (mixture: integers, lgss-hmm: reals); defaults
                    to the shipped files (123 counts, 20-step LGSS series)
target.d            dimension for gaussian
target.weights      comma-separated weights for discrete
target.a/q/c/m0/v0  fixed LGSS parameters (lgss-hmm samples the emission
                    variance r under a log-normal prior)
target.prior_mu, target.prior_sigma
kernel.name         rwm | mh-joint-mixture | within-gibbs-mixture | mala | hmc
                    | pseudo-marginal | pmcmc
kernel.scale        random-walk scale (rwm, pseudo-marginal, pmcmc)
kernel.perturbation uniform | gaussian (rwm, pseudo-marginal)
kernel.eps, kernel.delta    mixture moves
kernel.step         MALA step h
kernel.step_size, kernel.n_leapfrog, kernel.mass    HMC
kernel.noise        pseudo-marginal: estimate = target * W, W = 1 -/+ noise
kernel.particles    pmcmc particle count
kernel.record_latent  pmcmc: write the sampled latent paths
chain.length, chain.burn_in, chain.seed, chain.start
adapt.target_rate, adapt.windows, adapt.window   (warm-up; optional)
output.prefix, output.lags
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

TARGETS = ("toy-sin", "mixture", "gaussian", "lgss-hmm", "discrete")
KERNELS = ("rwm", "mh-joint-mixture", "within-gibbs-mixture", "mala", "hmc",
           "pseudo-marginal", "pmcmc")
GRADIENT_KERNELS = ("mala", "hmc")
GRADIENT_TARGETS = ("gaussian",)
MIXTURE_KERNELS = ("mh-joint-mixture", "within-gibbs-mixture")

KNOWN_KEYS = {
    "target": {"name", "data", "d", "weights", "a", "q", "c", "m0", "v0", "prior_mu", "prior_sigma"},
    "kernel": {"name", "scale", "perturbation", "eps", "delta", "step", "step_size", "n_leapfrog",
               "mass", "noise", "particles", "record_latent"},
    "chain": {"length", "burn_in", "seed", "start"},
    "adapt": {"target_rate", "windows", "window"},
    "output": {"prefix", "lags"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "config"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class ExperimentConfig:
    target: str
    kernel: str
    chain_length: int
    seed: int
    output_prefix: str
    burn_in: Optional[int] = None
    start: Optional[list] = None
    target_params: dict = field(default_factory=dict)
    kernel_params: dict = field(default_factory=dict)
    adapt: Optional[dict] = None
    lags: tuple = (1, 5, 10, 50)
    base_dir: Path = field(default_factory=Path)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def parse_pairs(text: str, source: str = "config") -> dict:
    """``{key: (value, line)}`` from ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, source)
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"key {key!r} needs a section (e.g. chain.length)", lineno, source)
        section, name = key.split(".", 1)
        if section not in KNOWN_KEYS or name not in KNOWN_KEYS[section]:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in out:
            raise ConfigError(f"duplicate key {key!r} (first on line {out[key][1]})", lineno, source)
        out[key] = (value, lineno)
    return out


class _Reader:
    def __init__(self, pairs, source):
        self.pairs = pairs
        self.source = source

    def line(self, key):
        return self.pairs[key][1] if key in self.pairs else None

    def raw(self, key, default=None, required=False):
        if key not in self.pairs:
            if required:
                raise ConfigError(f"missing required key {key!r}", None, self.source)
            return default
        return self.pairs[key][0]

    def _conv(self, key, conv, what, default, required):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            return conv(v)
        except ValueError:
            raise ConfigError(f"{key} must be {what}, got {v!r}", self.line(key), self.source) from None

    def int(self, key, default=None, required=False):
        return self._conv(key, int, "an integer", default, required)

    def float(self, key, default=None, required=False):
        return self._conv(key, float, "a number", default, required)

    def floats(self, key, default=None, required=False):
        return self._conv(key, lambda s: [float(x) for x in s.split(",")], "a comma-separated list of numbers",
                          default, required)

    def bool(self, key, default=False):
        v = self.raw(key)
        if v is None:
            return default
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be true or false, got {v!r}", self.line(key), self.source)

    def fail(self, key, message):
        raise ConfigError(message, self.line(key), self.source)


def load_config(path, env=None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, str(path)) from None
    return parse_config(text, source=str(path), base_dir=path.parent, env=env)


def parse_config(text: str, source: str = "config", base_dir: Path = Path("."), env=None) -> ExperimentConfig:
    env = os.environ if env is None else env
    r = _Reader(parse_pairs(text, source), source)

    target = r.raw("target.name", required=True)
    if target not in TARGETS:
        r.fail("target.name", f"unknown target {target!r}; choose from {', '.join(TARGETS)}")
    kernel = r.raw("kernel.name", required=True)
    if kernel not in KERNELS:
        r.fail("kernel.name", f"unknown kernel {kernel!r}; choose from {', '.join(KERNELS)}")

    T = r.int("chain.length", required=True)
    if T < 1:
        r.fail("chain.length", "chain.length must be at least 1")
    burn_in = r.int("chain.burn_in")
    if burn_in is not None and not 0 <= burn_in < T:
        r.fail("chain.burn_in", f"chain.burn_in must lie in [0, {T})")
    seed = r.int("chain.seed", default=0)
    if "MH_SEED" in env:
        try:
            seed = int(env["MH_SEED"])
        except ValueError:
            raise ConfigError(f"MH_SEED must be an integer, got {env['MH_SEED']!r}", None, "environment") from None
    if not 0 <= seed < 2**64:
        r.fail("chain.seed", "seed must be a 64-bit unsigned integer")
    start = r.floats("chain.start")

    tp = {}
    if target == "gaussian":
        tp["d"] = r.int("target.d", default=1)
        if tp["d"] < 1:
            r.fail("target.d", "target.d must be positive")
    elif target == "discrete":
        tp["weights"] = r.floats("target.weights", required=True)
        if any(w < 0 for w in tp["weights"]) or not any(w > 0 for w in tp["weights"]):
            r.fail("target.weights", "weights must be nonnegative and not all zero")
    elif target == "mixture":
        tp["data"] = r.raw("target.data")
    elif target == "lgss-hmm":
        tp["data"] = r.raw("target.data")
        for k, d in (("a", 0.9), ("q", 0.5), ("c", 1.0), ("m0", 0.0), ("v0", 1.0),
                     ("prior_mu", 0.0), ("prior_sigma", 1.0)):
            tp[k] = r.float(f"target.{k}", default=d)
        for k in ("q", "v0", "prior_sigma"):
            if tp[k] <= 0:
                r.fail(f"target.{k}", f"target.{k} must be positive")
    if "data" in tp and tp["data"] is not None:
        if not (base_dir / tp["data"]).exists() and not Path(tp["data"]).exists():
            r.fail("target.data", f"data file {tp['data']!r} does not exist")

    kp = {}
    if kernel in ("rwm", "pseudo-marginal", "pmcmc"):
        kp["scale"] = r.floats("kernel.scale", default=[1.0])
        if any(s <= 0 for s in kp["scale"]):
            r.fail("kernel.scale", "kernel.scale must be positive")
    if kernel in ("rwm", "pseudo-marginal"):
        kp["perturbation"] = r.raw("kernel.perturbation", default="uniform" if kernel == "rwm" else "gaussian")
        if kp["perturbation"] not in ("uniform", "gaussian"):
            r.fail("kernel.perturbation", "kernel.perturbation must be uniform or gaussian")
    if kernel in MIXTURE_KERNELS:
        kp["eps"] = r.float("kernel.eps", default=0.1)
        kp["delta"] = r.float("kernel.delta", default=0.1)
        for k in ("eps", "delta"):
            if kp[k] <= 0:
                r.fail(f"kernel.{k}", f"kernel.{k} must be positive")
        if target != "mixture":
            r.fail("kernel.name", f"kernel {kernel} only applies to the mixture target")
    if kernel == "mala":
        kp["step"] = r.float("kernel.step", default=0.5)
        if kp["step"] <= 0:
            r.fail("kernel.step", "kernel.step must be positive")
    if kernel == "hmc":
        kp["step_size"] = r.float("kernel.step_size", default=0.2)
        kp["n_leapfrog"] = r.int("kernel.n_leapfrog", default=10)
        kp["mass"] = r.floats("kernel.mass", default=[1.0])
        if kp["step_size"] <= 0 or kp["n_leapfrog"] < 1 or any(m <= 0 for m in kp["mass"]):
            r.fail("kernel.step_size", "HMC needs step_size > 0, n_leapfrog >= 1 and positive masses")
    if kernel in GRADIENT_KERNELS and target not in GRADIENT_TARGETS:
        r.fail("kernel.name", f"kernel {kernel} needs a gradient; target {target} has none")
    if kernel == "pseudo-marginal":
        kp["noise"] = r.float("kernel.noise", default=0.5)
        if not 0 <= kp["noise"] < 1:
            r.fail("kernel.noise", "kernel.noise must lie in [0, 1)")
    if kernel == "pmcmc":
        kp["particles"] = r.int("kernel.particles", default=200)
        kp["record_latent"] = r.bool("kernel.record_latent", default=False)
        if kp["particles"] < 1:
            r.fail("kernel.particles", "kernel.particles must be at least 1")
        if target != "lgss-hmm":
            r.fail("kernel.name", "pmcmc runs on the lgss-hmm target")

    adapt = None
    if any(k.startswith("adapt.") for k in r.pairs):
        adapt = {
            "target_rate": r.float("adapt.target_rate", default=0.25),
            "windows": r.int("adapt.windows", default=100),
            "window": r.int("adapt.window", default=100),
        }
        if not 0 < adapt["target_rate"] < 1:
            r.fail("adapt.target_rate", "adapt.target_rate must lie in (0, 1)")
        if adapt["windows"] < 1 or adapt["window"] < 1:
            r.fail("adapt.windows", "adapt.windows and adapt.window must be positive")
        if kernel == "mh-joint-mixture":
            first = min((k for k in r.pairs if k.startswith("adapt.")), key=r.line)
            r.fail(first, "adaptation is not available for mh-joint-mixture")

    lags = r.floats("output.lags", default=[1, 5, 10, 50])
    if any(l < 0 or l != int(l) for l in lags):
        r.fail("output.lags", "output.lags must be nonnegative integers")

    return ExperimentConfig(
        target=target, kernel=kernel, chain_length=T, seed=seed,
        output_prefix=r.raw("output.prefix", default="run"),
        burn_in=burn_in, start=start, target_params=tp, kernel_params=kp, adapt=adapt,
        lags=tuple(int(l) for l in lags), base_dir=base_dir,
    )
