"""Kernels for the joint posterior f(u, beta, lambda | y).

Priors: beta ~ N(mu0, Q^{-1}) with Q positive definite, lambda_j ~ Gamma(a_j, b_j)
(rate), and u_j | lambda ~ N(0, I / lambda_j).  Each step function takes the
previous ``BayesState`` and returns the next one; the conditioning order of
every draw follows the corresponding algorithm exactly.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .conditional import hmc_step, mala_step
from .distributions import (
    cholesky,
    polya_gamma,
    precision_normal_from_cholesky,
    sample_omega,
    truncated_normal,
)
from .errors import UnsupportedModelError
from .model import BayesState, Family, ZetaTarget


@dataclass(frozen=True, eq=False)
class AugmentedDesign:
    """E = [X Z], theta = (Q mu0, 0) and A(lambda) = blockdiag(Q, D(lambda))."""

    model: object
    prior: object

    @cached_property
    def E(self):
        return self.model.E

    @cached_property
    def theta(self):
        return np.concatenate([self.prior.Q_mu0, np.zeros(self.model.q)])

    def A(self, lam):
        p, q = self.model.p, self.model.q
        out = np.zeros((p + q, p + q))
        out[:p, :p] = self.prior.Q
        idx = np.arange(p, p + q)
        out[idx, idx] = self.model.expand(lam)
        return out

    @cached_property
    def beta_chol(self):
        """Cholesky factor of X^T X + Q (the probit beta-conditional precision)."""
        return cholesky(self.model.XtX + self.prior.Q)


_designs = {}


def _design(model, prior):
    key = (id(model), id(prior))
    entry = _designs.get(key)
    if entry is None or entry.model is not model or entry.prior is not prior:
        prior.require_proper(model)
        entry = AugmentedDesign(model, prior)
        if len(_designs) > 64:
            _designs.clear()
        _designs[key] = entry
    return entry


def _require_binary_probit(model):
    if model.family is not Family.PROBIT or not model.is_binary:
        raise UnsupportedModelError("probit Gibbs samplers require the probit family with binary responses")


def _require_logistic(model):
    if model.family is not Family.LOGISTIC:
        raise UnsupportedModelError("Polya-Gamma Gibbs samplers require the logistic family")


def lambda_gibbs(rng, prior, u, blocks):
    """lambda_j ~ Gamma(a_j + q_j/2, rate b_j + u_j^T u_j / 2), independently over blocks."""
    blocks = np.asarray(blocks, dtype=int)
    idx = np.repeat(np.arange(blocks.shape[0]), blocks)
    ss = np.bincount(idx, weights=np.asarray(u) ** 2, minlength=blocks.shape[0])
    shape = prior.a + 0.5 * blocks
    rate = prior.b + 0.5 * ss
    return rng.gamma(shape, 1.0 / rate)


def _split_eta(model, eta):
    return eta[model.p:], eta[:model.p]


def probit_full_gibbs_step(rng, model, prior, s):
    """lambda | u;  v | beta, u;  u | lambda, v, beta;  beta | v, u  (in that order)."""
    _require_binary_probit(model)
    design = _design(model, prior)
    lam = lambda_gibbs(rng, prior, s.u, model.blocks)
    xb = model.X @ s.beta
    v = truncated_normal(rng, xb + model.Z @ s.u, model.y > 0)
    S_u = model.ZtZ + np.diag(model.expand(lam))
    u = precision_normal_from_cholesky(rng, cholesky(S_u), model.Z.T @ (v - xb))
    t_b = model.X.T @ v + prior.Q_mu0 - model.XtZ @ u
    beta = precision_normal_from_cholesky(rng, design.beta_chol, t_b)
    return BayesState(u, beta, lam)


def _probit_block_latents(rng, model, prior, s):
    lam = lambda_gibbs(rng, prior, s.u, model.blocks)
    v = truncated_normal(rng, model.X @ s.beta + model.Z @ s.u, model.y > 0)
    return lam, v


def probit_block_gibbs_step(rng, model, prior, s):
    """(lambda, v) | eta drawn independently, then eta = (beta, u) jointly."""
    _require_binary_probit(model)
    design = _design(model, prior)
    lam, v = _probit_block_latents(rng, model, prior, s)
    L = cholesky(model.EtE + design.A(lam))
    eta = precision_normal_from_cholesky(rng, L, design.E.T @ v + design.theta)
    u, beta = _split_eta(model, eta)
    return BayesState(u, beta, lam)


def probit_haar_pxda_step(rng, model, prior, s, h=None):
    """Block Gibbs with the Haar sandwich move v -> h v, h ~ omega*(h).

    omega*(h) is proportional to h^(m-1) exp{-(h^2 v^T E1 v - 2 h v^T E2)/2}
    with E1 = I - E S^-1 E^T, E2 = E S^-1 theta and S = E^T E + A(lambda).
    Passing ``h`` pins the group element.
    """
    _require_binary_probit(model)
    design = _design(model, prior)
    lam, v = _probit_block_latents(rng, model, prior, s)
    L = cholesky(model.EtE + design.A(lam))
    if h is None:
        h = 1.0
        if model.m:
            w1 = solve_triangular(L, design.E.T @ v, lower=True, check_finite=False)
            w_theta = solve_triangular(L, design.theta, lower=True, check_finite=False)
            quad = float(v @ v - w1 @ w1)
            lin = float(w1 @ w_theta)
            h = sample_omega(rng, model.m - 1, quad, lin)
    v_scaled = h * v
    eta = precision_normal_from_cholesky(rng, L, design.E.T @ v_scaled + design.theta)
    u, beta = _split_eta(model, eta)
    return BayesState(u, beta, lam)


def logistic_full_gibbs_step(rng, model, prior, s):
    """lambda | u;  w | beta, u;  u | lambda, beta, w;  beta | w, u  (in that order)."""
    _require_logistic(model)
    _design(model, prior)
    lam = lambda_gibbs(rng, prior, s.u, model.blocks)
    xb = model.X @ s.beta
    w = polya_gamma(rng, model.trials, xb + model.Z @ s.u)
    kappa = model.kappa
    Zw = model.Z * w[:, None]
    S_u = Zw.T @ model.Z + np.diag(model.expand(lam))
    u = precision_normal_from_cholesky(rng, cholesky(S_u), model.Z.T @ (kappa - w * xb))
    Xw = model.X * w[:, None]
    S_b = Xw.T @ model.X + prior.Q
    t_b = model.X.T @ (kappa - w * (model.Z @ u)) + prior.Q_mu0
    beta = precision_normal_from_cholesky(rng, cholesky(S_b), t_b)
    return BayesState(u, beta, lam)


def logistic_block_gibbs_step(rng, model, prior, s):
    """(lambda, w) | eta drawn independently, then eta = (beta, u) jointly."""
    _require_logistic(model)
    design = _design(model, prior)
    lam = lambda_gibbs(rng, prior, s.u, model.blocks)
    w = polya_gamma(rng, model.trials, model.X @ s.beta + model.Z @ s.u)
    E = design.E
    Ew = E * w[:, None]
    L = cholesky(Ew.T @ E + design.A(lam))
    eta = precision_normal_from_cholesky(rng, L, E.T @ model.kappa + design.theta)
    u, beta = _split_eta(model, eta)
    return BayesState(u, beta, lam)


def _gradient_within_gibbs(kernel, rng, model, prior, s, cfg):
    _design(model, prior)
    target = ZetaTarget(model, prior, s.lam)
    outcome = kernel(rng, target, s.zeta, cfg)
    zeta = outcome.state
    u, beta = zeta[:model.q], zeta[model.q:]
    lam = lambda_gibbs(rng, prior, u, model.blocks)
    outcome.state = BayesState(u.copy(), beta.copy(), lam)
    return outcome


def mala_within_gibbs_step(rng, model, prior, s, cfg):
    """MALA move on zeta = (u, beta) given lambda, then lambda | new u.

    Returns a ``KernelOutcome`` whose ``state`` is the new ``BayesState`` so the
    caller can track acceptance.
    """
    return _gradient_within_gibbs(mala_step, rng, model, prior, s, cfg)


def hmc_within_gibbs_step(rng, model, prior, s, cfg):
    """HMC move on zeta = (u, beta) given lambda (momentum of dimension p+q), then lambda | new u."""
    return _gradient_within_gibbs(hmc_step, rng, model, prior, s, cfg)
