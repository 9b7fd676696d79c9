"""Monte Carlo EM and Monte Carlo maximum likelihood for (beta, lambda) with G = D(lambda)^-1.

Both fitters draw u from f(u | beta, G, y) with one of the conditional kernels
and optimize over (beta, log lambda) by Nelder-Mead, so every proposal keeps G
positive definite.  Precisions can be held fixed with ``FitConfig.fixed_lam``.
"""
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, List, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .chain import SamplerConfig, run_chain, sampler_info
from .diagnostics import batch_means_cov
from .errors import FitError, ModelError
from .model import ConditionalTarget, family_loglik


@dataclass
class FitConfig:
    sampler: str = "mala"
    n_samples: int = 1000
    max_iter: int = 50
    tol: float = 1e-3
    consecutive: int = 3
    burn_frac: float = 0.1
    step_size: float = 0.5
    n_leapfrog: int = 10
    mass: Any = 1.0
    fixed_lam: bool = False
    min_importance_ess: float = 0.01  # fraction of N
    pilot_restarts: int = 0
    optimizer_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ModelError("n_samples must be at least 1")
        if not self.tol > 0:
            raise ModelError("tolerance must be positive")
        if self.max_iter < 0:
            raise ModelError("max_iter must be nonnegative")
        info = sampler_info(self.sampler)
        if info.bayesian:
            raise ModelError(f"fitters need a conditional sampler, not {self.sampler!r}")

    def sampler_config(self, step_size):
        burn = int(math.floor(self.burn_frac * self.n_samples))
        return SamplerConfig(self.sampler, self.n_samples + burn, burn, step_size=step_size,
                             n_leapfrog=self.n_leapfrog, mass=self.mass)


@dataclass
class FitResult:
    beta: np.ndarray
    lam: np.ndarray
    objective: float
    trajectory: List[tuple]
    n_iter: int
    converged: bool
    importance_ess: Optional[float] = None
    warnings: List[str] = field(default_factory=list)
    samples: Any = field(default=None, repr=False)

    @property
    def G(self):
        return np.diag(1.0 / np.asarray(self.lam))


class CompleteDataLikelihood:
    """log f(y, u | beta, lambda) evaluated over a fixed set of u draws (rows of ``U``)."""

    def __init__(self, model, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        self.model = model
        self.ZU = U @ model.Z.T
        self.ss = np.stack([model.block_sums(u) for u in U]) if U.shape[0] else np.zeros((0, model.r))
        self.q = np.asarray(model.blocks, dtype=float)

    def values(self, beta, lam):
        m = self.model
        gamma = self.ZU + m.X @ beta
        ll = family_loglik(m.family, m.y, m.trials, gamma)
        lam = np.asarray(lam, dtype=float)
        return ll + 0.5 * float(self.q @ np.log(lam)) - 0.5 * self.ss @ lam

    def mean(self, beta, lam):
        return float(np.mean(self.values(beta, lam)))


def estep_objective(model, U, beta, lam):
    """Monte Carlo Q-function: average of log f(y, u_j | beta, lambda) over the draws."""
    return CompleteDataLikelihood(model, U).mean(np.asarray(beta, float), lam)


class _Params:
    def __init__(self, p, lam0, fixed_lam):
        self.p = p
        self.lam0 = np.asarray(lam0, dtype=float)
        self.fixed = fixed_lam

    def pack(self, beta, lam):
        beta = np.asarray(beta, dtype=float)
        return beta.copy() if self.fixed else np.concatenate([beta, np.log(lam)])

    def unpack(self, theta):
        beta = theta[:self.p]
        lam = self.lam0 if self.fixed else np.exp(theta[self.p:])
        return beta, lam


def _validate_init(model, beta, lam):
    beta = model.check_beta(beta)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (model.r,) or np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        raise ModelError("initial lambda must hold one positive precision per block (G positive definite)")
    return beta, lam


def _maximize(fun, theta0, options, last):
    opts = {"xatol": 1e-7, "fatol": 1e-10, "maxiter": 4000 * max(1, theta0.size), "maxfev": 8000 * max(1, theta0.size)}
    opts.update(options)
    step = np.where(theta0 != 0, 0.1 * np.abs(theta0), 0.1)
    opts.setdefault("initial_simplex", np.vstack([theta0] + [theta0 + np.eye(theta0.size)[k] * step[k]
                                                             for k in range(theta0.size)]))
    with np.errstate(over="ignore", invalid="ignore"):
        res = minimize(lambda t: -fun(t), theta0, method="Nelder-Mead", options=opts)
    if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun) or not res.success:
        raise FitError(f"maximization failed: {res.message}", last=last)
    return res.x, -float(res.fun)


def _draw(rng, model, beta, lam, cfg, init_u, step_size):
    target = ConditionalTarget.from_precisions(model, beta, lam)
    return run_chain(rng, model, cfg.sampler_config(step_size), target=target, init=init_u)


def mcem_fit(rng, model, init, cfg):
    """Monte Carlo EM from ``init = (beta, lambda)``.

    Each iteration draws N post-burn-in u's from the current conditional (warm
    started at the previous final u), then maximizes the Monte Carlo Q-function.
    Stops after ``cfg.consecutive`` successive iterations whose max-norm change in
    (beta, log lambda) is below ``cfg.tol``.
    """
    beta, lam = _validate_init(model, *init)
    params = _Params(model.p, lam, cfg.fixed_lam)
    theta = params.pack(beta, lam)
    trajectory = [(beta.copy(), lam.copy())]
    u = np.zeros(model.q)
    eps = cfg.step_size
    streak = 0
    objective = math.nan
    samples = None
    it = 0
    for it in range(1, cfg.max_iter + 1):
        samples = _draw(rng, model, beta, lam, cfg, u, eps)
        u = samples.final
        if samples.step_size is not None:
            eps = samples.step_size
        cdl = CompleteDataLikelihood(model, samples.data)
        last = (beta.copy(), lam.copy())
        new_theta, objective = _maximize(lambda t: cdl.mean(*params.unpack(t)), theta,
                                         cfg.optimizer_options, last)
        change = float(np.max(np.abs(new_theta - theta))) if theta.size else 0.0
        theta = new_theta
        beta, lam = params.unpack(theta)
        beta, lam = beta.copy(), np.array(lam, dtype=float)
        trajectory.append((beta.copy(), lam.copy()))
        streak = streak + 1 if change < cfg.tol else 0
        if streak >= cfg.consecutive:
            return FitResult(beta, lam, objective, trajectory, it, True, samples=samples)
    return FitResult(beta, lam, objective, trajectory, it, False, samples=samples)


class ImportanceObjective:
    """log (1/N) sum_j f(y, u_j | theta) / f(y, u_j | theta0) for u_j drawn at the anchor theta0."""

    def __init__(self, model, U, beta0, lam0):
        self.cdl = CompleteDataLikelihood(model, U)
        self.base = self.cdl.values(np.asarray(beta0, float), lam0)
        self.n = self.base.shape[0]

    def log_weights(self, beta, lam):
        return self.cdl.values(np.asarray(beta, float), lam) - self.base

    def __call__(self, beta, lam):
        return float(logsumexp(self.log_weights(beta, lam)) - math.log(self.n))

    def importance_ess(self, beta, lam):
        lw = self.log_weights(beta, lam)
        w = np.exp(lw - lw.max())
        return float(w.sum() ** 2 / (w @ w))

    def mcse(self, beta, lam):
        """Delta-method standard error of the log objective using batch means of the ratios."""
        lw = self.log_weights(beta, lam)
        w = np.exp(lw - lw.max())
        return math.sqrt(float(batch_means_cov(w)[0, 0]) / self.n) / float(w.mean())


def mcml_fit(rng, model, anchor, cfg):
    """Monte Carlo maximum likelihood around ``anchor = (beta0, lambda0)``.

    One chain at the anchor, then the importance-weighted log-likelihood ratio is
    maximized.  If the importance ESS at the maximizer falls below
    ``cfg.min_importance_ess * N``, a warning is recorded; with
    ``cfg.pilot_restarts > 0`` the anchor moves to the maximizer and the run is repeated.
    With ``cfg.max_iter == 0`` no maximization happens and the anchor is reported.
    """
    beta0, lam0 = _validate_init(model, *anchor)
    params = _Params(model.p, lam0, cfg.fixed_lam)
    trajectory = [(beta0.copy(), lam0.copy())]
    notes = []
    u = np.zeros(model.q)
    eps = cfg.step_size
    for attempt in range(cfg.pilot_restarts + 1):
        samples = _draw(rng, model, beta0, lam0, cfg, u, eps)
        u = samples.final
        if samples.step_size is not None:
            eps = samples.step_size
        obj = ImportanceObjective(model, samples.data, beta0, lam0)
        if cfg.max_iter == 0:
            return FitResult(beta0, lam0, obj(beta0, lam0), trajectory, 0, True,
                             importance_ess=obj.importance_ess(beta0, lam0), samples=samples)
        theta0 = params.pack(beta0, lam0)
        options = dict(cfg.optimizer_options)
        theta, value = _maximize(lambda t: obj(*params.unpack(t)), theta0, options,
                                 (beta0.copy(), lam0.copy()))
        beta, lam = params.unpack(theta)
        beta, lam = beta.copy(), np.array(lam, dtype=float)
        trajectory.append((beta.copy(), lam.copy()))
        iess = obj.importance_ess(beta, lam)
        if iess >= cfg.min_importance_ess * obj.n:
            return FitResult(beta, lam, value, trajectory, attempt + 1, True,
                             importance_ess=iess, warnings=notes, samples=samples)
        msg = (f"importance ESS {iess:.1f} below floor {cfg.min_importance_ess * obj.n:.1f} "
               f"at pilot {attempt + 1}")
        notes.append(msg)
        beta0, lam0 = beta, lam
    warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    return FitResult(beta, lam, value, trajectory, cfg.pilot_restarts + 1, False,
                     importance_ess=iess, warnings=notes, samples=samples)
