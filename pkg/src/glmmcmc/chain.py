"""Chain runner: sampler registry, burn-in adaptation, thinning and labelled sample storage."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import bayes, conditional
from .conditional import HmcConfig, MalaConfig
from .diagnostics import HMC_TARGET, MALA_TARGET, adapt_step_size, summarize
from .distributions import split
from .errors import ModelError, UnsupportedModelError
from .model import BayesState, ConditionalTarget, Family


@dataclass(frozen=True)
class SamplerInfo:
    name: str
    bayesian: bool
    families: tuple
    binary_only: bool = False
    gradient: Optional[str] = None  # "mala" | "hmc"


SAMPLERS = {
    "mala": SamplerInfo("mala", False, tuple(Family), gradient="mala"),
    "hmc": SamplerInfo("hmc", False, tuple(Family), gradient="hmc"),
    "da": SamplerInfo("da", False, (Family.PROBIT,), binary_only=True),
    "pxda": SamplerInfo("pxda", False, (Family.PROBIT,), binary_only=True),
    "pgda": SamplerInfo("pgda", False, (Family.LOGISTIC,)),
    "fg": SamplerInfo("fg", True, (Family.PROBIT, Family.LOGISTIC)),
    "bg": SamplerInfo("bg", True, (Family.PROBIT, Family.LOGISTIC)),
    "haar": SamplerInfo("haar", True, (Family.PROBIT,), binary_only=True),
    "mala-gibbs": SamplerInfo("mala-gibbs", True, tuple(Family), gradient="mala"),
    "hmc-gibbs": SamplerInfo("hmc-gibbs", True, tuple(Family), gradient="hmc"),
}


def sampler_info(name, model=None):
    """Look up a sampler and, given a model, check that the pairing is supported."""
    try:
        info = SAMPLERS[name]
    except KeyError:
        raise ModelError(f"unknown sampler {name!r}; choose one of {', '.join(SAMPLERS)}") from None
    if model is not None:
        if model.family not in info.families:
            allowed = ", ".join(f.value for f in info.families)
            raise UnsupportedModelError(f"sampler {name!r} supports the {allowed} family, "
                                        f"not {model.family.value}")
        if info.binary_only and not model.is_binary:
            raise UnsupportedModelError(f"sampler {name!r} requires binary responses (trials = 1)")
    return info


@dataclass
class SamplerConfig:
    sampler: str
    n_iter: int
    burn_in: int = 0
    thin: int = 1
    step_size: float = 0.1
    n_leapfrog: int = 10
    mass: Any = 1.0
    adapt: bool = True
    target_accept: Optional[float] = None

    def __post_init__(self):
        sampler_info(self.sampler)
        if self.n_iter < 1 or self.burn_in < 0 or self.n_iter <= self.burn_in:
            raise ModelError(f"need N > B >= 0, got N={self.n_iter}, B={self.burn_in}")
        if self.thin < 1:
            raise ModelError(f"thin must be a positive integer, got {self.thin}")
        if not self.step_size > 0:
            raise ModelError(f"step size must be positive, got {self.step_size}")

    @property
    def n_kept(self):
        return (self.n_iter - self.burn_in) // self.thin

    def target_rate(self):
        if self.target_accept is not None:
            return self.target_accept
        return MALA_TARGET if SAMPLERS[self.sampler].gradient == "mala" else HMC_TARGET

    def kernel_config(self, eps):
        if SAMPLERS[self.sampler].gradient == "mala":
            return MalaConfig(eps)
        return HmcConfig(eps, self.n_leapfrog, self.mass)


@dataclass
class SampleMatrix:
    """Post-burn-in draws (rows) with coordinate names and provenance."""

    data: np.ndarray
    names: list
    burn_in: int
    thin: int
    n_iter: int
    sampler: str
    acceptance_rate: Optional[float] = None
    step_size: Optional[float] = None
    final: Any = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.data.shape[0]

    def column(self, name):
        return self.data[:, self.names.index(name)]

    def group(self, prefix):
        cols = [i for i, n in enumerate(self.names) if n.split(".", 1)[0] == prefix]
        return self.data[:, cols]

    def summary(self, max_lag=5):
        groups = None
        if any(n.startswith("beta.") for n in self.names):
            groups = {"u": ["u"], "beta,lambda": ["beta", "lambda"]}
        return summarize(self.data, self.names, max_lag, self.acceptance_rate, groups)


def coordinate_names(model, bayesian=True):
    names = [f"u.{i + 1}" for i in range(model.q)]
    if bayesian:
        names += [f"beta.{i}" for i in range(model.p)]
        names += [f"lambda.{j + 1}" for j in range(model.r)]
    return names


def _conditional_step(info, rng, target, u, eps, cfg, cache):
    if info.name == "da":
        return conditional.da_probit_step(rng, target, u), None
    if info.name == "pxda":
        return conditional.haar_pxda_probit_step(rng, target, u), None
    if info.name == "pgda":
        return conditional.pg_da_logistic_step(rng, target, u), None
    kcfg = cfg.kernel_config(eps)
    if info.gradient == "mala":
        out = conditional.mala_step(rng, target, u, kcfg, current=cache)
    else:
        out = conditional.hmc_step(rng, target, u, kcfg, current=cache)
    return out.state, out


_BAYES_STEPS = {
    ("fg", Family.PROBIT): bayes.probit_full_gibbs_step,
    ("bg", Family.PROBIT): bayes.probit_block_gibbs_step,
    ("haar", Family.PROBIT): bayes.probit_haar_pxda_step,
    ("fg", Family.LOGISTIC): bayes.logistic_full_gibbs_step,
    ("bg", Family.LOGISTIC): bayes.logistic_block_gibbs_step,
}


def _bayes_step(info, rng, model, prior, s, eps, cfg):
    if info.gradient == "mala":
        out = bayes.mala_within_gibbs_step(rng, model, prior, s, cfg.kernel_config(eps))
        return out.state, out
    if info.gradient == "hmc":
        out = bayes.hmc_within_gibbs_step(rng, model, prior, s, cfg.kernel_config(eps))
        return out.state, out
    return _BAYES_STEPS[(info.name, model.family)](rng, model, prior, s), None


def run_chain(rng, model, cfg, prior=None, target=None, init=None):
    """Run one chain and keep every ``thin``-th post-burn-in iterate.

    Conditional samplers need ``target`` (a ``ConditionalTarget``) and keep u only;
    Bayesian samplers need ``prior`` and keep (u, beta, lambda).  For gradient
    samplers with ``cfg.adapt`` the step size is tuned during burn-in and then frozen.
    """
    info = sampler_info(cfg.sampler, model)
    if info.bayesian:
        if prior is None:
            raise ModelError(f"sampler {cfg.sampler!r} needs a prior")
        prior.require_proper(model)
        state = init.copy() if isinstance(init, BayesState) else BayesState.initial(model)
        state.check(model)
    else:
        if not isinstance(target, ConditionalTarget):
            raise ModelError(f"sampler {cfg.sampler!r} needs a ConditionalTarget")
        state = model.check_u(np.zeros(model.q) if init is None else init).copy()
    names = coordinate_names(model, info.bayesian)
    out = np.empty((cfg.n_kept, len(names)))
    eps = cfg.step_size
    target_rate = cfg.target_rate() if info.gradient else None
    history = []
    n_accept = 0
    cache = None
    frozen_eps = None
    row = 0
    for it in range(cfg.n_iter):
        if it == cfg.burn_in:
            frozen_eps = eps
        if info.bayesian:
            state, outcome = _bayes_step(info, rng, model, prior, state, eps, cfg)
        else:
            state, outcome = _conditional_step(info, rng, target, state, eps, cfg, cache)
            if outcome is not None:
                cache = (outcome.log_density, outcome.grad)
        if outcome is not None:
            if it < cfg.burn_in:
                if cfg.adapt:
                    history.append(outcome.accept_prob)
                    eps = adapt_step_size(history, eps, target_rate)
            else:
                n_accept += outcome.accepted
        if it >= cfg.burn_in and (it - cfg.burn_in + 1) % cfg.thin == 0 and row < out.shape[0]:
            if info.bayesian:
                out[row, :model.q] = state.u
                out[row, model.q:model.q + model.p] = state.beta
                out[row, model.q + model.p:] = state.lam
            else:
                out[row] = state
            row += 1
    if frozen_eps is not None and eps != frozen_eps:
        raise RuntimeError("step size changed after burn-in")
    rate = n_accept / (cfg.n_iter - cfg.burn_in) if info.gradient else None
    return SampleMatrix(out, names, cfg.burn_in, cfg.thin, cfg.n_iter, cfg.sampler,
                        acceptance_rate=rate, step_size=eps if info.gradient else None,
                        final=state)


def run_chains(rng, model, cfg, n_chains, threads=1, **kwargs):
    """Independent chains on split RNG streams; results are ordered by chain index."""
    streams = split(rng, n_chains)
    if threads <= 1 or n_chains == 1:
        return [run_chain(s, model, cfg, **kwargs) for s in streams]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: run_chain(s, model, cfg, **kwargs), streams))
