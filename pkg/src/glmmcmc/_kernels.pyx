# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: one-sided truncated normal, Polya-Gamma and the ARS draw of
``h**k exp(-a h^2/2 + b h)``.

Each routine mirrors its counterpart in ``_kernels_py`` statement for statement
and draws uniforms straight from the generator's ``next_double`` so both
backends agree bit for bit.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport cos, exp, expm1, log, log1p, sqrt, fabs, INFINITY, M_PI
from numpy.random cimport bitgen_t
from scipy.special.cython_special cimport log_ndtr, ndtr, ndtri

import numpy as np
cimport numpy as cnp

from .errors import EnvelopeViolation

cnp.import_array()

cdef double TAIL_SWITCH = 5.0
cdef double PG_TRUNC = 0.64
DEF MAX_POINTS = 64
DEF MAX_ROUNDS = 10000


cdef inline bitgen_t* _bitgen(object rng) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


cdef inline double _unif(bitgen_t* bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef inline double _exponential(bitgen_t* bg) noexcept nogil:
    return -log(1.0 - _unif(bg))


cdef inline double _normal(bitgen_t* bg) noexcept nogil:
    cdef double r = sqrt(-2.0 * log(1.0 - _unif(bg)))
    return r * cos(2.0 * M_PI * _unif(bg))


cdef double _std_normal_above(bitgen_t* bg, double a) noexcept nogil:
    cdef double p, rate, z, d
    if a < TAIL_SWITCH:
        p = (1.0 - _unif(bg)) * ndtr(-a)
        return -ndtri(p)
    rate = 0.5 * (a + sqrt(a * a + 4.0))
    while True:
        z = a - log(1.0 - _unif(bg)) / rate
        d = z - rate
        if _unif(bg) < exp(-0.5 * d * d):
            return z


def truncnorm_onesided(rng, mean, sd, positive):
    cdef double[::1] mu = np.ascontiguousarray(mean, dtype=np.float64)
    cdef double[::1] s = np.ascontiguousarray(sd, dtype=np.float64)
    cdef unsigned char[::1] pos = np.ascontiguousarray(positive, dtype=np.uint8)
    cdef Py_ssize_t n = mu.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double x
    cdef bitgen_t* bg = _bitgen(rng)
    with rng.bit_generator.lock, nogil:
        for i in range(n):
            if pos[i]:
                x = mu[i] + s[i] * _std_normal_above(bg, -mu[i] / s[i])
                if x <= 0.0:
                    x = 5e-324
            else:
                x = mu[i] - s[i] * _std_normal_above(bg, mu[i] / s[i])
                if x > 0.0:
                    x = 0.0
            out[i] = x
    return out_arr


cdef inline double _pg_a(int n, double x) noexcept nogil:
    cdef double k = (n + 0.5) * M_PI
    cdef double e
    if x > PG_TRUNC:
        return k * exp(-0.5 * k * k * x)
    if x > 0.0:
        e = -1.5 * (log(0.5 * M_PI) + log(x)) + log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x
        return exp(e)
    return 0.0


cdef double _pg_texp_mass(double z) noexcept nogil:
    cdef double t = PG_TRUNC
    cdef double fz = 0.125 * M_PI * M_PI + 0.5 * z * z
    cdef double b = sqrt(1.0 / t) * (t * z - 1.0)
    cdef double a = -sqrt(1.0 / t) * (t * z + 1.0)
    cdef double x0 = log(fz) + fz * t
    cdef double xb = x0 - z + log_ndtr(b)
    cdef double xa = x0 + z + log_ndtr(a)
    cdef double q_over_p = 4.0 / M_PI * (exp(xb) + exp(xa))
    return 1.0 / (1.0 + q_over_p)


cdef double _pg_trunc_invgauss(bitgen_t* bg, double z) noexcept nogil:
    cdef double t = PG_TRUNC
    cdef double x = t + 1.0
    cdef double alpha, e1, e2, mu, y, half_mu, mu_y
    if 1.0 / t > z:
        alpha = 0.0
        while _unif(bg) > alpha:
            e1 = _exponential(bg)
            e2 = _exponential(bg)
            while e1 * e1 > 2.0 * e2 / t:
                e1 = _exponential(bg)
                e2 = _exponential(bg)
            x = 1.0 + e1 * t
            x = t / (x * x)
            alpha = exp(-0.5 * z * z * x)
    else:
        mu = 1.0 / z
        while x > t:
            y = _normal(bg)
            y = y * y
            half_mu = 0.5 * mu
            mu_y = mu * y
            x = mu + half_mu * mu_y - half_mu * sqrt(4.0 * mu_y + mu_y * mu_y)
            if _unif(bg) > mu / (mu + x):
                x = mu * mu / x
    return x


cdef double _pg1(bitgen_t* bg, double c) noexcept nogil:
    cdef double z = 0.5 * fabs(c)
    cdef double fz = 0.125 * M_PI * M_PI + 0.5 * z * z
    cdef double p_texp = _pg_texp_mass(z)
    cdef double x, s, y
    cdef int n
    while True:
        if _unif(bg) < p_texp:
            x = PG_TRUNC + _exponential(bg) / fz
        else:
            x = _pg_trunc_invgauss(bg, z)
        s = _pg_a(0, x)
        y = _unif(bg) * s
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
    cdef long long[::1] bb = np.ascontiguousarray(b, dtype=np.int64)
    cdef double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = cc.shape[0], i
    cdef long long j
    cdef double acc
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef bitgen_t* bg = _bitgen(rng)
    with rng.bit_generator.lock, nogil:
        for i in range(n):
            acc = 0.0
            for j in range(bb[i]):
                acc += _pg1(bg, cc[i])
            out[i] = acc
    return out_arr


cdef inline double _omega_h(double h, double k, double a, double b) noexcept nogil:
    return k * log(h) - 0.5 * a * h * h + b * h


cdef inline double _omega_d(double h, double k, double a, double b) noexcept nogil:
    return k / h - a * h + b


# status codes for the nogil ARS loop
DEF ARS_OK = 0
DEF ARS_VIOLATION = 1
DEF ARS_UNBOUNDED = 2
DEF ARS_NO_TERMINATION = 3


cdef int _omega_ars(bitgen_t* bg, double k, double a, double b, double* xs0,
                    double* result) noexcept nogil:
    cdef double xs[MAX_POINTS]
    cdef double hs[MAX_POINTS]
    cdef double ds[MAX_POINTS]
    cdef double zs[MAX_POINTS + 1]
    cdef double lm[MAX_POINTS]
    cdef double wt[MAX_POINTS]
    cdef int n = 3, i, j, kk, rnd
    cdef double dd, z, hmax, lmmax, total, u1, u2, v, target, acc
    cdef double s, lo, hi, uu, x, upper_hull, squeeze, hx, dx, base, ur, ul
    cdef double lower = 0.0, upper = INFINITY

    for i in range(3):
        xs[i] = xs0[i]
        hs[i] = _omega_h(xs[i], k, a, b)
        ds[i] = _omega_d(xs[i], k, a, b)
    for i in range(n - 1):
        if ds[i + 1] > ds[i] + 1e-8 * (1.0 + fabs(ds[i])):
            return ARS_VIOLATION

    for rnd in range(MAX_ROUNDS):
        zs[0] = lower
        for i in range(n - 1):
            dd = ds[i] - ds[i + 1]
            if dd > 0.0:
                z = (hs[i + 1] - hs[i] - xs[i + 1] * ds[i + 1] + xs[i] * ds[i]) / dd
                if z < xs[i]:
                    if z < xs[i] - 1e-7 * (1.0 + fabs(xs[i])):
                        return ARS_VIOLATION
                    z = xs[i]
                elif z > xs[i + 1]:
                    if z > xs[i + 1] + 1e-7 * (1.0 + fabs(xs[i + 1])):
                        return ARS_VIOLATION
                    z = xs[i + 1]
            else:
                z = 0.5 * (xs[i] + xs[i + 1])
            zs[i + 1] = z
        zs[n] = upper

        hmax = hs[0]
        for i in range(1, n):
            if hs[i] > hmax:
                hmax = hs[i]
        for i in range(n):
            base = hs[i] - hmax
            s = ds[i]
            lo = zs[i]
            hi = zs[i + 1]
            if not hi > lo:
                lm[i] = -INFINITY
            elif s > 0.0:
                if hi == INFINITY:
                    return ARS_UNBOUNDED
                ur = base + s * (hi - xs[i])
                if lo == -INFINITY:
                    lm[i] = ur - log(s)
                else:
                    lm[i] = ur + log(-expm1(-s * (hi - lo))) - log(s)
            elif s < 0.0:
                if lo == -INFINITY:
                    return ARS_UNBOUNDED
                ul = base + s * (lo - xs[i])
                if hi == INFINITY:
                    lm[i] = ul - log(-s)
                else:
                    lm[i] = ul + log(-expm1(s * (hi - lo))) - log(-s)
            else:
                if lo == -INFINITY or hi == INFINITY:
                    return ARS_UNBOUNDED
                lm[i] = base + log(hi - lo)
        lmmax = lm[0]
        for i in range(1, n):
            if lm[i] > lmmax:
                lmmax = lm[i]
        for i in range(n):
            wt[i] = exp(lm[i] - lmmax)
        total = 0.0
        for i in range(n):
            total += wt[i]

        u1 = _unif(bg)
        u2 = _unif(bg)
        v = _unif(bg)

        target = u1 * total
        acc = 0.0
        j = n - 1
        for i in range(n):
            acc += wt[i]
            if target < acc:
                j = i
                break

        s = ds[j]
        lo = zs[j]
        hi = zs[j + 1]
        uu = 1.0 - u2
        if s > 0.0:
            if lo == -INFINITY:
                x = hi + log(uu) / s
            elif s * (hi - lo) > 1.0:
                x = hi + log(uu + (1.0 - uu) * exp(-s * (hi - lo))) / s
            else:
                x = lo + log1p(u2 * expm1(s * (hi - lo))) / s
        elif s < 0.0:
            if hi == INFINITY:
                x = lo + log(uu) / s
            elif s * (hi - lo) < -1.0:
                x = lo + log(uu + (1.0 - uu) * exp(s * (hi - lo))) / s
            else:
                x = lo + log1p(u2 * expm1(s * (hi - lo))) / s
        else:
            x = lo + u2 * (hi - lo)
        if not (lower < x and x < upper):
            continue

        upper_hull = hs[j] + s * (x - xs[j])
        kk = 0
        while kk < n and xs[kk] <= x:
            kk += 1
        if 0 < kk and kk < n:
            squeeze = ((xs[kk] - x) * hs[kk - 1] + (x - xs[kk - 1]) * hs[kk]) / (xs[kk] - xs[kk - 1])
            if squeeze > upper_hull + 1e-7 * (1.0 + fabs(upper_hull)):
                result[0] = x
                return ARS_VIOLATION
            if v <= exp(squeeze - upper_hull):
                result[0] = x
                return ARS_OK

        hx = _omega_h(x, k, a, b)
        dx = _omega_d(x, k, a, b)
        if hx > upper_hull + 1e-7 * (1.0 + fabs(upper_hull)):
            result[0] = x
            return ARS_VIOLATION
        if n < MAX_POINTS and (kk == 0 or xs[kk - 1] != x):
            i = n
            while i > kk:
                xs[i] = xs[i - 1]
                hs[i] = hs[i - 1]
                ds[i] = ds[i - 1]
                i -= 1
            xs[kk] = x
            hs[kk] = hx
            ds[kk] = dx
            n += 1
        if v <= exp(hx - upper_hull):
            result[0] = x
            return ARS_OK
    return ARS_NO_TERMINATION


def omega_draw(rng, double k, double a, double b):
    from .ars import omega_abscissae
    init = omega_abscissae(k, a, b)
    cdef double xs0[3]
    xs0[0] = init[0]
    xs0[1] = init[1]
    xs0[2] = init[2]
    cdef double result = 0.0
    cdef int status
    cdef bitgen_t* bg = _bitgen(rng)
    with rng.bit_generator.lock, nogil:
        status = _omega_ars(bg, k, a, b, xs0, &result)
    if status == ARS_VIOLATION:
        raise EnvelopeViolation(f"log density is not concave (envelope check failed near x={result!r})")
    if status == ARS_UNBOUNDED:
        raise EnvelopeViolation("tangent envelope is not integrable on the support")
    if status == ARS_NO_TERMINATION:
        raise EnvelopeViolation("adaptive rejection sampling did not terminate")
    return result
