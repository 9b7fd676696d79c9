"""One-step transition kernels for the random-effects conditional f(u | beta, G, y).

``mala_step``, ``leapfrog`` and ``hmc_step`` work with any target exposing
``value_and_grad(x)`` and ``dim``; the Bayesian module reuses them on
zeta = (u, beta).
"""
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .distributions import cholesky, precision_normal_from_cholesky, sample_omega, truncated_normal
from .distributions import polya_gamma
from .errors import ModelError, NumericalError, UnsupportedModelError
from .model import Family


@dataclass
class MalaConfig:
    step_size: float

    def __post_init__(self):
        if not self.step_size > 0:
            raise ModelError(f"MALA step size must be positive, got {self.step_size!r}")


class Mass:
    """Mass matrix M: scalar, diagonal (1-d) or dense (2-d) positive definite."""

    def __init__(self, M, dim):
        M = np.asarray(M, dtype=float)
        self.dim = dim
        if M.ndim == 0:
            M = np.full(dim, float(M))
        if M.ndim == 1:
            if M.shape != (dim,) or np.any(M <= 0):
                raise ModelError("diagonal mass must be positive with one entry per coordinate")
            self.diag = M
            self.matrix = None
        else:
            if M.shape != (dim, dim):
                raise ModelError(f"mass matrix has shape {M.shape}, expected ({dim}, {dim})")
            self.diag = None
            self.matrix = M
            self.chol = cholesky(M)

    def solve(self, rho):
        """M^{-1} rho."""
        if self.diag is not None:
            return rho / self.diag
        w = solve_triangular(self.chol, rho, lower=True, check_finite=False)
        return solve_triangular(self.chol, w, lower=True, trans="T", check_finite=False)

    def sample(self, rng):
        z = rng.standard_normal(self.dim)
        if self.diag is not None:
            return np.sqrt(self.diag) * z
        return self.chol @ z

    def kinetic(self, rho):
        return 0.5 * float(rho @ self.solve(rho))


@dataclass
class HmcConfig:
    step_size: float
    n_leapfrog: int = 10
    mass: Any = 1.0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ModelError(f"HMC step size must be positive, got {self.step_size!r}")
        if int(self.n_leapfrog) != self.n_leapfrog or self.n_leapfrog < 1:
            raise ModelError(f"leapfrog count must be a positive integer, got {self.n_leapfrog!r}")
        self.n_leapfrog = int(self.n_leapfrog)

    def mass_for(self, dim):
        cached = getattr(self, "_mass", None)
        if cached is None or cached.dim != dim:
            cached = Mass(self.mass, dim)
            self._mass = cached
        return cached


@dataclass
class KernelOutcome:
    """Result of one Metropolis-type step.

    ``accept_prob`` is the MH acceptance probability alpha; ``energy_error`` is
    H(proposal) - H(current) for HMC.  ``log_density``/``grad`` belong to the
    returned state and may be fed back as ``current`` to skip a re-evaluation.
    """

    state: Any
    accepted: bool
    accept_prob: float
    energy_error: Optional[float] = None
    log_density: Optional[float] = None
    grad: Optional[np.ndarray] = field(default=None, repr=False)
    momentum: Optional[np.ndarray] = field(default=None, repr=False)


def _checked_current(target, x, current):
    if current is None:
        logp, grad = target.value_and_grad(x)
    else:
        logp, grad = current
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size or not math.isfinite(logp):
        coord = int(bad[0]) if bad.size else None
        raise NumericalError(f"non-finite gradient at coordinate {coord} of the current state",
                             coordinate=coord)
    return logp, grad


def mala_step(rng, target, u, cfg, noise=None, current=None):
    """One MALA transition: Langevin proposal plus Metropolis-Hastings correction.

    ``noise`` overrides the N(0, I) innovation (used to pin the proposal in tests).
    """
    u = np.asarray(u, dtype=float)
    eps = cfg.step_size
    logp, grad = _checked_current(target, u, current)
    if noise is None:
        noise = rng.standard_normal(u.shape[0])
    prop = u + 0.5 * eps * grad + math.sqrt(eps) * noise
    with np.errstate(over="ignore", invalid="ignore"):
        logp_p, grad_p = target.value_and_grad(prop)
    if math.isfinite(logp_p) and np.all(np.isfinite(grad_p)):
        fwd = prop - u - 0.5 * eps * grad
        bwd = u - prop - 0.5 * eps * grad_p
        log_ratio = logp_p - logp - (float(bwd @ bwd) - float(fwd @ fwd)) / (2.0 * eps)
        alpha = 1.0 if log_ratio >= 0.0 else math.exp(log_ratio)
    else:
        alpha = 0.0
    delta = rng.random()
    if delta < alpha:
        return KernelOutcome(prop, True, alpha, log_density=logp_p, grad=grad_p)
    return KernelOutcome(u, False, alpha, log_density=logp, grad=grad)


def _as_mass(M, dim):
    return M if isinstance(M, Mass) else Mass(M, dim)


def _trajectory(target, u, rho, eps, mass, n_steps, grad):
    half = 0.5 * eps
    logp = None
    for _ in range(n_steps):
        rho = rho + half * grad
        u = u + eps * mass.solve(rho)
        with np.errstate(over="ignore", invalid="ignore"):
            logp, grad = target.value_and_grad(u)
        bad = np.flatnonzero(~np.isfinite(grad))
        if bad.size:
            raise NumericalError(f"non-finite gradient at coordinate {int(bad[0])} during leapfrog",
                                 coordinate=int(bad[0]))
        rho = rho + half * grad
    return u, rho, logp, grad


def leapfrog(target, u, rho, eps, M=1.0, n_steps=1):
    """Half momentum kick, full position drift, half momentum kick; repeated ``n_steps`` times."""
    u = np.asarray(u, dtype=float)
    rho = np.asarray(rho, dtype=float)
    mass = _as_mass(M, u.shape[0])
    _, grad = target.value_and_grad(u)
    u, rho, _, _ = _trajectory(target, u, rho, eps, mass, n_steps, grad)
    return u, rho


def hmc_step(rng, target, u, cfg, current=None):
    """One HMC transition: fresh momentum from N(0, M), L leapfrog steps, MH accept on the energy."""
    u = np.asarray(u, dtype=float)
    mass = cfg.mass_for(u.shape[0])
    logp, grad = _checked_current(target, u, current)
    rho0 = mass.sample(rng)
    h0 = -logp + mass.kinetic(rho0)
    try:
        prop, rho, logp_p, grad_p = _trajectory(target, u, rho0, cfg.step_size, mass,
                                                cfg.n_leapfrog, grad)
        h1 = -logp_p + mass.kinetic(rho)
        energy_error = h1 - h0
    except NumericalError:
        energy_error = math.inf
    if math.isfinite(energy_error):
        alpha = 1.0 if energy_error <= 0.0 else math.exp(-energy_error)
    else:
        alpha = 0.0
    delta = rng.random()
    if delta < alpha:
        return KernelOutcome(prop, True, alpha, energy_error, logp_p, grad_p, momentum=-rho)
    return KernelOutcome(u, False, alpha, energy_error, logp, grad, momentum=rho0)


class _ProbitWorkspace:
    """Cholesky factor of Z^T Z + G^{-1} and derived quantities for a fixed conditional target."""

    def __init__(self, target):
        model = target.model
        if model.family is not Family.PROBIT or not model.is_binary:
            raise UnsupportedModelError("probit data augmentation requires the probit family with binary "
                                        "responses (all trials equal to 1)")
        self.L = cholesky(model.ZtZ + target.G_inv)
        self.positive = model.y > 0
        self.offset = target.offset
        ZtXb = model.Z.T @ target.offset
        self.whitened_ZtXb = solve_triangular(self.L, ZtXb, lower=True, check_finite=False)


def _probit_workspace(target):
    ws = target.__dict__.get("_probit_ws")
    if ws is None:
        ws = _ProbitWorkspace(target)
        target.__dict__["_probit_ws"] = ws
    return ws


def _probit_u_draw(rng, target, ws, v):
    t = target.model.Z.T @ (v - ws.offset)
    return precision_normal_from_cholesky(rng, ws.L, t)


def da_probit_step(rng, target, u, return_latent=False):
    """Probit DA: v_i ~ TN(gamma_i, 1, y_i), then u | v ~ N((Z^T Z + G^-1)^-1 Z^T (v - X beta), ...)."""
    ws = _probit_workspace(target)
    model = target.model
    gamma = ws.offset + model.Z @ u
    v = truncated_normal(rng, gamma, ws.positive)
    new_u = _probit_u_draw(rng, target, ws, v)
    return (new_u, v) if return_latent else new_u


def haar_pxda_probit_step(rng, target, u, h=None, return_latent=False):
    """Probit Haar PX-DA: the DA step with v rescaled by h ~ omega(h) between the two draws.

    omega(h) is proportional to h^(m-1) exp{-(h^2 v^T Z1 v - 2 h v^T Z1 X beta)/2}
    with Z1 = I - Z (Z^T Z + G^-1)^-1 Z^T.  Passing ``h`` pins the group element.
    """
    ws = _probit_workspace(target)
    model = target.model
    gamma = ws.offset + model.Z @ u
    v = truncated_normal(rng, gamma, ws.positive)
    if h is None:
        h = 1.0
        if model.m:
            w1 = solve_triangular(ws.L, model.Z.T @ v, lower=True, check_finite=False)
            quad = float(v @ v - w1 @ w1)
            lin = float(v @ ws.offset - w1 @ ws.whitened_ZtXb)
            h = sample_omega(rng, model.m - 1, quad, lin)
    v_scaled = h * v
    new_u = _probit_u_draw(rng, target, ws, v_scaled)
    return (new_u, v_scaled, h) if return_latent else new_u


def pg_da_logistic_step(rng, target, u, return_latent=False):
    """Logistic Polya-Gamma DA: w_i ~ PG(l_i, gamma_i), then u | w ~ N(S^-1 t, S^-1)
    with S = Z^T W Z + G^-1 and t = Z^T kappa - Z^T W X beta, kappa = y - l/2."""
    model = target.model
    if model.family is not Family.LOGISTIC:
        raise UnsupportedModelError("Polya-Gamma data augmentation requires the logistic family")
    offset = target.offset
    gamma = offset + model.Z @ u
    w = polya_gamma(rng, model.trials, gamma)
    Zw = model.Z * w[:, None]
    S = Zw.T @ model.Z + target.G_inv
    t = model.Z.T @ (model.kappa - w * offset)
    new_u = precision_normal_from_cholesky(rng, cholesky(S), t)
    return (new_u, w) if return_latent else new_u
