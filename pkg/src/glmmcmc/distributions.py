"""Seeded random-variate generators used by every sampler.

Generators are ``numpy.random.Generator`` objects over the counter-based
Philox bit generator; ``split`` hands out statistically independent child
streams for parallel chains.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize_scalar

from . import ars
from ._backend import kernels
from .errors import ModelError, NotPositiveDefiniteError

POSITIVE = "positive"
NONPOSITIVE = "nonpositive"


def make_rng(seed):
    """Reproducible generator: identical seed and call sequence give identical draws."""
    return np.random.Generator(np.random.Philox(seed))


def split(rng, n):
    """``n`` independent child generators derived from ``rng``'s seed sequence."""
    return rng.spawn(n)


def sample_truncated_normal(rng, mu, sigma2, side):
    """One draw of N(mu, sigma2) restricted to (0, inf) (``side="positive"``) or (-inf, 0]."""
    if not sigma2 > 0:
        raise ModelError(f"variance must be positive, got {sigma2!r}")
    if side not in (POSITIVE, NONPOSITIVE):
        raise ModelError(f"side must be {POSITIVE!r} or {NONPOSITIVE!r}, got {side!r}")
    out = kernels.truncnorm_onesided(
        rng, np.array([mu], dtype=float), np.array([math.sqrt(sigma2)]),
        np.array([side == POSITIVE], dtype=np.uint8),
    )
    return float(out[0])


def truncated_normal(rng, mean, positive, sd=None):
    """Vector of independent one-sided truncated normals (unit variance by default).

    ``positive[i]`` selects the (0, inf) side; otherwise the draw lies in (-inf, 0].
    """
    mean = np.asarray(mean, dtype=float)
    if sd is None:
        sd = np.ones_like(mean)
    return kernels.truncnorm_onesided(rng, mean, sd, np.asarray(positive, dtype=np.uint8))


def sample_polya_gamma(rng, b, c):
    """One PG(b, c) draw for integer ``b >= 1`` (sum of ``b`` independent PG(1, c) draws)."""
    if int(b) != b or b < 1:
        raise ModelError(f"Polya-Gamma shape must be a positive integer, got {b!r}")
    if not math.isfinite(c):
        raise ModelError(f"Polya-Gamma tilt must be finite, got {c!r}")
    return float(kernels.polya_gamma(rng, np.array([int(b)]), np.array([float(c)]))[0])


def polya_gamma(rng, b, c):
    """Vectorized PG(b_i, c_i) draws."""
    b = np.asarray(b)
    if b.size and (b.min() < 1 or np.any(b != np.floor(b))):
        raise ModelError("Polya-Gamma shapes must be positive integers")
    return kernels.polya_gamma(rng, b.astype(np.int64), np.asarray(c, dtype=float))


def cholesky(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from None


def precision_normal_from_cholesky(rng, L, t):
    """Draw from N(S^{-1} t, S^{-1}) given the lower Cholesky factor L of S."""
    w = solve_triangular(L, t, lower=True, check_finite=False)
    z = rng.standard_normal(L.shape[0])
    return solve_triangular(L, w + z, lower=True, trans="T", check_finite=False)


def sample_precision_normal(rng, S, t):
    """Draw x ~ N(S^{-1} t, S^{-1}) without forming S^{-1}.

    Factor S = L L^T, solve L w = t, add z ~ N(0, I), solve L^T x = w + z.
    """
    S = np.asarray(S, dtype=float)
    t = np.asarray(t, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or t.shape != (S.shape[0],):
        raise ModelError(f"incompatible shapes S{S.shape}, t{t.shape}")
    return precision_normal_from_cholesky(rng, cholesky(S), t)


def sample_gamma(rng, a, b):
    """Gamma draw with shape ``a`` and rate ``b`` (mean a/b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ModelError("gamma shape and rate must be positive")
    out = rng.gamma(a, 1.0 / b)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LogConcaveDensity:
    """Univariate log-concave density known up to a constant.

    ``derivative`` defaults to a central difference; ``mode``/``scale`` hints
    skip the numerical search used to place the initial abscissae.
    """

    log_density: Callable[[float], float]
    lower: float = -math.inf
    upper: float = math.inf
    derivative: Optional[Callable[[float], float]] = None
    mode: Optional[float] = None
    scale: Optional[float] = None


def _numeric_derivative(f):
    def d(x):
        h = 1e-6 * (1.0 + abs(x))
        return (f(x + h) - f(x - h)) / (2.0 * h)
    return d


def _initial_abscissae(f, dens, deriv):
    lower, upper = dens.lower, dens.upper
    mode = dens.mode
    if mode is None:
        lo = lower if math.isfinite(lower) else -1e6
        hi = upper if math.isfinite(upper) else 1e6
        res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        mode = float(res.x)
    scale = dens.scale
    if scale is None:
        h = 1e-4 * (1.0 + abs(mode))
        if mode - h > lower and mode + h < upper:
            curv = -(f(mode + h) - 2.0 * f(mode) + f(mode - h)) / (h * h)
        else:
            curv = 0.0
        scale = 1.0 / math.sqrt(curv) if curv > 0 else 1.0
    if mode - scale * 1e-3 <= lower:
        pts = [lower + 0.5 * scale, lower + scale, lower + 2.0 * scale]
    else:
        left = mode - 2.0 * scale
        if left <= lower:
            left = 0.5 * (lower + mode)
        pts = [left, mode, mode + 2.0 * scale]
    if upper < math.inf:
        pts = [x if x < upper else 0.5 * (pts[0] + upper) for x in pts]
        pts = sorted(set(pts))
    # push outermost points until their tangents point into the mass
    step = 2.0 * scale
    for _ in range(60):
        if lower == -math.inf and deriv(pts[0]) <= 0.0:
            pts[0] -= step
            step *= 2.0
        elif upper == math.inf and deriv(pts[-1]) >= 0.0:
            pts[-1] += step
            step *= 2.0
        else:
            break
    return pts


def sample_log_concave(rng, density):
    """Exact draw from a log-concave density by adaptive rejection sampling.

    Raises ``EnvelopeViolation`` if the supplied density turns out not to be
    log-concave on its domain.
    """
    f = density.log_density
    deriv = density.derivative or _numeric_derivative(f)
    pts = _initial_abscissae(f, density, deriv)
    return ars.ars_sample(rng.random, f, deriv, pts, density.lower, density.upper)


def sample_omega(rng, k, a, b):
    """Draw h > 0 with density proportional to ``h**k * exp(-a h^2 / 2 + b h)`` (a > 0)."""
    if not a > 0:
        raise ModelError(f"quadratic coefficient must be positive, got {a!r}")
    return kernels.omega_draw(rng, float(k), float(a), float(b))
