"""Model data, priors and the log densities / gradients every sampler consumes.

Three families are supported, all with dispersion fixed at one:

* ``logistic``     binomial responses, logit link
* ``probit``       binomial responses, probit link
* ``poisson-log``  Poisson counts, log link

Log densities drop the same additive constants throughout (binomial
coefficients, ``log y!``, ``2*pi`` factors); samplers only use differences.
"""
import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, log_ndtr

from .errors import ModelError, NotPositiveDefiniteError

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class Family(str, enum.Enum):
    LOGISTIC = "logistic"
    PROBIT = "probit"
    POISSON_LOG = "poisson-log"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"poisson": cls.POISSON_LOG, "logit": cls.LOGISTIC}
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ModelError(f"unknown family {value!r}; expected one of {names}") from None


def inverse_mills(x):
    """phi(x) / Phi(x), stable far into both tails."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI - log_ndtr(x))


def family_terms(family, y, trials, gamma):
    """Log-likelihood (summed) and its derivative with respect to the linear predictor."""
    if family is Family.LOGISTIC:
        ll = np.sum(y * gamma - trials * np.logaddexp(0.0, gamma))
        d = y - trials * expit(gamma)
    elif family is Family.PROBIT:
        fail = trials - y
        ll = np.sum(y * log_ndtr(gamma) + fail * log_ndtr(-gamma))
        d = y * inverse_mills(gamma) - fail * inverse_mills(-gamma)
    else:
        mu = np.exp(gamma)
        ll = np.sum(y * gamma - mu)
        d = y - mu
    return float(ll), d


def family_loglik(family, y, trials, gamma):
    """Log-likelihood per row of ``gamma`` (shape (..., m)), constants dropped."""
    if family is Family.LOGISTIC:
        return np.sum(y * gamma - trials * np.logaddexp(0.0, gamma), axis=-1)
    if family is Family.PROBIT:
        return np.sum(y * log_ndtr(gamma) + (trials - y) * log_ndtr(-gamma), axis=-1)
    return np.sum(y * gamma - np.exp(gamma), axis=-1)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """GLMM data: responses, trials, fixed-effect design X (m x p), random-effect design Z (m x q).

    ``blocks`` lists the random-effect block sizes (q_1, ..., q_r); u is the
    concatenation of the blocks in that order.
    """

    family: Family
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    blocks: Sequence[int]
    trials: Optional[np.ndarray] = None

    def __post_init__(self):
        fam = Family.parse(self.family)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        m = y.shape[0]
        X = np.asarray(self.X, dtype=float)
        Z = np.asarray(self.Z, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Z.ndim == 1:
            Z = Z[:, None]
        if X.ndim != 2 or Z.ndim != 2:
            raise ModelError("X and Z must be 2-d matrices")
        if X.shape[0] != m or Z.shape[0] != m:
            raise ModelError(f"row counts differ: y has {m}, X has {X.shape[0]}, Z has {Z.shape[0]}")
        blocks = tuple(int(b) for b in self.blocks)
        if not blocks or min(blocks) < 1 or sum(blocks) != Z.shape[1]:
            raise ModelError(f"block sizes {blocks} must be positive and sum to q={Z.shape[1]}")
        if self.trials is None:
            trials = np.ones(m)
        else:
            trials = np.broadcast_to(np.asarray(self.trials, dtype=float), (m,)).copy()
        if np.any(y != np.round(y)) or np.any(y < 0):
            raise ModelError("responses must be nonnegative integers")
        if fam is not Family.POISSON_LOG:
            if np.any(trials < 1) or np.any(trials != np.round(trials)):
                raise ModelError("trials must be positive integers")
            if np.any(y > trials):
                raise ModelError("binomial responses must not exceed trials")
        for name, arr in (("y", y), ("X", X), ("Z", Z), ("trials", trials)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "blocks", blocks)

    @property
    def m(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return self.Z.shape[1]

    @property
    def r(self):
        return len(self.blocks)

    @property
    def is_binary(self):
        return bool(np.all(self.trials == 1))

    @cached_property
    def block_index(self):
        """Block id of every coordinate of u."""
        return np.repeat(np.arange(self.r), self.blocks)

    @cached_property
    def block_slices(self):
        edges = np.concatenate(([0], np.cumsum(self.blocks)))
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    @cached_property
    def kappa(self):
        """y - trials/2, the Polya-Gamma shift."""
        return self.y - 0.5 * self.trials

    @cached_property
    def E(self):
        """Stacked design [X Z]; rows e_i multiply eta = (beta, u)."""
        return np.hstack([self.X, self.Z])

    @cached_property
    def XtX(self):
        return self.X.T @ self.X

    @cached_property
    def ZtZ(self):
        return self.Z.T @ self.Z

    @cached_property
    def XtZ(self):
        return self.X.T @ self.Z

    @cached_property
    def EtE(self):
        return self.E.T @ self.E

    def linear_predictor(self, beta, u):
        return self.X @ beta + self.Z @ u

    def block_sums(self, u):
        """u_j^T u_j for every block."""
        return np.bincount(self.block_index, weights=u * u, minlength=self.r)

    def expand(self, lam):
        """D(lambda) diagonal: lambda_j repeated over block j."""
        return np.repeat(np.asarray(lam, dtype=float), self.blocks)

    def loglik(self, gamma):
        return family_terms(self.family, self.y, self.trials, gamma)[0]

    def check_beta(self, beta):
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.shape != (self.p,):
            raise ModelError(f"beta has length {beta.shape[0]}, expected p={self.p}")
        return beta

    def check_u(self, u):
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.shape != (self.q,):
            raise ModelError(f"u has length {u.shape[0]}, expected q={self.q}")
        return u


@dataclass(frozen=True, eq=False)
class ConditionalTarget:
    """The conditional density f(u | beta, G, y) for fixed beta and random-effect covariance G."""

    model: ModelSpec
    beta: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        beta = self.model.check_beta(self.beta)
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if G.shape != (self.model.q, self.model.q):
            raise ModelError(f"G has shape {G.shape}, expected ({self.model.q}, {self.model.q})")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "G", G)

    @classmethod
    def from_precisions(cls, model, beta, lam):
        """Target with G = D(lambda)^{-1}, i.e. block j has variance 1/lambda_j."""
        return cls(model, beta, np.diag(1.0 / model.expand(lam)))

    @cached_property
    def G_chol(self):
        try:
            return np.linalg.cholesky(self.G)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError("random-effect covariance G is not positive definite") from None

    @cached_property
    def G_inv(self):
        L_inv = np.linalg.inv(self.G_chol)
        return L_inv.T @ L_inv

    @cached_property
    def logdet_G(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.G_chol))))

    @cached_property
    def offset(self):
        return self.model.X @ self.beta

    @property
    def dim(self):
        return self.model.q

    def value_and_grad(self, u):
        model = self.model
        gamma = self.offset + model.Z @ u
        ll, d = family_terms(model.family, model.y, model.trials, gamma)
        Ginv_u = self.G_inv @ u
        value = ll - 0.5 * (float(u @ Ginv_u) + self.logdet_G)
        return value, model.Z.T @ d - Ginv_u

    def log_density(self, u):
        model = self.model
        gamma = self.offset + model.Z @ u
        return model.loglik(gamma) - 0.5 * (float(u @ self.G_inv @ u) + self.logdet_G)

    def grad_log_density(self, u):
        return self.value_and_grad(u)[1]


def log_conditional_u(target, u):
    """log f(u | y) up to an additive constant."""
    return target.log_density(target.model.check_u(u))


def grad_log_conditional_u(target, u):
    """Gradient of ``log_conditional_u`` in u."""
    return target.grad_log_density(target.model.check_u(u))


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """beta ~ N(mu0, Q^{-1}) (density exp(-(beta-mu0)^T Q (beta-mu0)/2)); lambda_j ~ Gamma(a_j, rate b_j)."""

    mu0: np.ndarray
    Q: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        p = mu0.shape[0]
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim == 0:
            Q = float(Q) * np.eye(p)
        if Q.shape != (p, p):
            raise ModelError(f"Q has shape {Q.shape}, expected ({p}, {p})")
        if not np.allclose(Q, Q.T):
            raise ModelError("Q must be symmetric")
        if p and np.linalg.eigvalsh(Q).min() < -1e-10 * max(1.0, np.abs(Q).max()):
            raise ModelError("Q must be positive semidefinite")
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape:
            raise ModelError("gamma shape and rate vectors differ in length")
        if np.any(a <= 0) or np.any(b < 0):
            raise ModelError("gamma hyperparameters need a_j > 0 and b_j >= 0")
        for name, arr in (("mu0", mu0), ("Q", Q), ("a", a), ("b", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def standard(cls, p, r, q_scale=0.001, a=0.01, b=0.01):
        """mu0 = 0, Q = q_scale * I, a_j = a, b_j = b."""
        return cls(np.zeros(p), q_scale * np.eye(p), np.full(r, a), np.full(r, b))

    @property
    def p(self):
        return self.mu0.shape[0]

    @property
    def r(self):
        return self.a.shape[0]

    @cached_property
    def Q_mu0(self):
        return self.Q @ self.mu0

    def check_against(self, model):
        if self.p != model.p or self.r != model.r:
            raise ModelError(f"prior dimensions (p={self.p}, r={self.r}) do not match model "
                             f"(p={model.p}, r={model.r})")

    def require_proper(self, model):
        """Samplers of the Bayesian module need Q positive definite and a_j, b_j > 0."""
        self.check_against(model)
        if np.any(self.b <= 0):
            raise ModelError("improper gamma prior: every b_j must be positive")
        if self.p:
            try:
                np.linalg.cholesky(self.Q)
            except np.linalg.LinAlgError:
                raise ModelError("improper beta prior: Q must be positive definite") from None


@dataclass(eq=False)
class BayesState:
    """Current (u, beta, lambda) of a Bayesian chain."""

    u: np.ndarray
    beta: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        self.lam = np.asarray(self.lam, dtype=float).reshape(-1)

    @classmethod
    def initial(cls, model, u=None, beta=None, lam=None):
        """Defaults: u = 0, beta = 0, lambda = 1."""
        return cls(
            np.zeros(model.q) if u is None else u,
            np.zeros(model.p) if beta is None else beta,
            np.ones(model.r) if lam is None else lam,
        )

    @property
    def zeta(self):
        """(u, beta) stacked in that order."""
        return np.concatenate([self.u, self.beta])

    @property
    def eta(self):
        """(beta, u) stacked in that order, matching E = [X Z]."""
        return np.concatenate([self.beta, self.u])

    def copy(self):
        return BayesState(self.u.copy(), self.beta.copy(), self.lam.copy())

    def check(self, model):
        model.check_u(self.u)
        model.check_beta(self.beta)
        if self.lam.shape != (model.r,):
            raise ModelError(f"lambda has length {self.lam.shape[0]}, expected r={model.r}")
        if np.any(self.lam <= 0):
            raise ModelError("precisions lambda_j must be positive")


def log_joint_bayes(model, prior, s):
    """log f(u, beta, lambda | y) up to an additive constant."""
    prior.check_against(model)
    s.check(model)
    ll = model.loglik(model.linear_predictor(s.beta, s.u))
    dev = s.beta - prior.mu0
    shape = prior.a - 1.0 + 0.5 * np.asarray(model.blocks)
    lam_terms = shape * np.log(s.lam) - (prior.b + 0.5 * model.block_sums(s.u)) * s.lam
    return ll - 0.5 * float(dev @ prior.Q @ dev) + float(np.sum(lam_terms))


def grad_log_joint_zeta(model, prior, s):
    """Gradient of the log joint in zeta = (u, beta) at fixed lambda, stacked (u-block, beta-block)."""
    prior.check_against(model)
    s.check(model)
    return ZetaTarget(model, prior, s.lam).grad_log_density(s.zeta)


@dataclass(frozen=True, eq=False)
class ZetaTarget:
    """f(zeta | lambda, y) for zeta = (u, beta); the target of MALA/HMC-within-Gibbs."""

    model: ModelSpec
    prior: PriorSpec
    lam: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "_d", self.model.expand(self.lam))

    @property
    def dim(self):
        return self.model.q + self.model.p

    def _split(self, zeta):
        q = self.model.q
        return zeta[:q], zeta[q:]

    def value_and_grad(self, zeta):
        model, prior = self.model, self.prior
        u, beta = self._split(zeta)
        gamma = model.X @ beta + model.Z @ u
        ll, d = family_terms(model.family, model.y, model.trials, gamma)
        dev = beta - prior.mu0
        Qdev = prior.Q @ dev
        du = self._d * u
        value = ll - 0.5 * float(dev @ Qdev) - 0.5 * float(u @ du)
        grad = np.concatenate([model.Z.T @ d - du, model.X.T @ d - Qdev])
        return value, grad

    def log_density(self, zeta):
        model, prior = self.model, self.prior
        u, beta = self._split(zeta)
        dev = beta - prior.mu0
        return (model.loglik(model.X @ beta + model.Z @ u)
                - 0.5 * float(dev @ prior.Q @ dev) - 0.5 * float(u @ (self._d * u)))

    def grad_log_density(self, zeta):
        return self.value_and_grad(zeta)[1]
