"""Pure-Python reference kernels.

Same algorithms and the same uniform stream as the compiled ``_kernels``
extension: every variate is built from ``rng.random()`` so the two backends
produce identical draws for identical seeds.
"""
import math

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from . import ars

TAIL_SWITCH = 5.0
PG_TRUNC = 0.64
_HALF_PI = 0.5 * math.pi
_TWO_PI = 2.0 * math.pi


def _exponential(uniform):
    return -math.log(1.0 - uniform())


def _normal(uniform):
    r = math.sqrt(-2.0 * math.log(1.0 - uniform()))
    return r * math.cos(_TWO_PI * uniform())


def _std_normal_above(uniform, a):
    """Standard normal conditioned on Z >= a."""
    if a < TAIL_SWITCH:
        p = (1.0 - uniform()) * float(ndtr(-a))
        return -float(ndtri(p))
    # exponential proposal with the optimal rate, accept-reject
    rate = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a - math.log(1.0 - uniform()) / rate
        d = z - rate
        if uniform() < math.exp(-0.5 * d * d):
            return z


def truncnorm_onesided(rng, mean, sd, positive):
    mean = np.ascontiguousarray(mean, dtype=np.float64)
    sd = np.ascontiguousarray(sd, dtype=np.float64)
    positive = np.ascontiguousarray(positive, dtype=np.uint8)
    out = np.empty(mean.shape[0])
    uniform = rng.random
    for i in range(mean.shape[0]):
        mu = float(mean[i])
        s = float(sd[i])
        if positive[i]:
            x = mu + s * _std_normal_above(uniform, -mu / s)
            if x <= 0.0:
                x = 5e-324
        else:
            x = mu - s * _std_normal_above(uniform, mu / s)
            if x > 0.0:
                x = 0.0
        out[i] = x
    return out


def _pg_a(n, x):
    k = (n + 0.5) * math.pi
    if x > PG_TRUNC:
        return k * math.exp(-0.5 * k * k * x)
    if x > 0.0:
        e = -1.5 * (math.log(_HALF_PI) + math.log(x)) + math.log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x
        return math.exp(e)
    return 0.0


def _pg_texp_mass(z):
    t = PG_TRUNC
    fz = 0.125 * math.pi * math.pi + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    xb = x0 - z + float(log_ndtr(b))
    xa = x0 + z + float(log_ndtr(a))
    q_over_p = 4.0 / math.pi * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + q_over_p)


def _pg_trunc_invgauss(uniform, z):
    t = PG_TRUNC
    x = t + 1.0
    if 1.0 / t > z:
        alpha = 0.0
        while uniform() > alpha:
            e1 = _exponential(uniform)
            e2 = _exponential(uniform)
            while e1 * e1 > 2.0 * e2 / t:
                e1 = _exponential(uniform)
                e2 = _exponential(uniform)
            x = 1.0 + e1 * t
            x = t / (x * x)
            alpha = math.exp(-0.5 * z * z * x)
    else:
        mu = 1.0 / z
        while x > t:
            y = _normal(uniform)
            y = y * y
            half_mu = 0.5 * mu
            mu_y = mu * y
            x = mu + half_mu * mu_y - half_mu * math.sqrt(4.0 * mu_y + mu_y * mu_y)
            if uniform() > mu / (mu + x):
                x = mu * mu / x
    return x


def _pg1(uniform, c):
    """One PG(1, c) draw via the alternating-series (Jacobi) rejection sampler."""
    z = 0.5 * abs(c)
    fz = 0.125 * math.pi * math.pi + 0.5 * z * z
    p_texp = _pg_texp_mass(z)
    while True:
        if uniform() < p_texp:
            x = PG_TRUNC + _exponential(uniform) / fz
        else:
            x = _pg_trunc_invgauss(uniform, z)
        s = _pg_a(0, x)
        y = uniform() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s = s - _pg_a(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s = s + _pg_a(n, x)
                if y > s:
                    break


def polya_gamma(rng, b, c):
    b = np.ascontiguousarray(b, dtype=np.int64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    out = np.empty(c.shape[0])
    uniform = rng.random
    for i in range(c.shape[0]):
        acc = 0.0
        ci = float(c[i])
        for _ in range(int(b[i])):
            acc += _pg1(uniform, ci)
        out[i] = acc
    return out


def omega_draw(rng, k, a, b):
    k = float(k)
    a = float(a)
    b = float(b)
    return ars.ars_sample(
        rng.random,
        lambda h: ars.omega_log_density(h, k, a, b),
        lambda h: ars.omega_derivative(h, k, a, b),
        ars.omega_abscissae(k, a, b),
        0.0,
        math.inf,
    )
