"""Adaptive rejection sampling (tangent envelope) for univariate log-concave densities.

The envelope is the piecewise-linear upper hull formed by tangents of the log
density at the current abscissae; the squeeze is the chord lower hull.  Every
rejected point at which the density was evaluated is added to the abscissae,
so the expected number of density evaluations per draw stays small.

The arithmetic here is mirrored operation for operation by the compiled
``omega_draw`` kernel so both backends consume the random stream identically.
"""
import bisect
import math

from .errors import EnvelopeViolation

MAX_POINTS = 64
MAX_ROUNDS = 10_000


def _hull_breaks(xs, hs, ds, lower, upper):
    zs = [lower]
    for i in range(len(xs) - 1):
        dd = ds[i] - ds[i + 1]
        if dd > 0.0:
            z = (hs[i + 1] - hs[i] - xs[i + 1] * ds[i + 1] + xs[i] * ds[i]) / dd
            if z < xs[i]:
                if z < xs[i] - 1e-7 * (1.0 + abs(xs[i])):
                    raise EnvelopeViolation("tangents intersect outside their bracket")
                z = xs[i]
            elif z > xs[i + 1]:
                if z > xs[i + 1] + 1e-7 * (1.0 + abs(xs[i + 1])):
                    raise EnvelopeViolation("tangents intersect outside their bracket")
                z = xs[i + 1]
        else:
            z = 0.5 * (xs[i] + xs[i + 1])
        zs.append(z)
    zs.append(upper)
    return zs


def _piece_log_mass(base, s, x0, lo, hi):
    if not hi > lo:
        return -math.inf
    if s > 0.0:
        if hi == math.inf:
            raise EnvelopeViolation("rightmost tangent has nonnegative slope on an unbounded domain")
        ur = base + s * (hi - x0)
        if lo == -math.inf:
            return ur - math.log(s)
        return ur + math.log(-math.expm1(-s * (hi - lo))) - math.log(s)
    if s < 0.0:
        if lo == -math.inf:
            raise EnvelopeViolation("leftmost tangent has nonpositive slope on an unbounded domain")
        ul = base + s * (lo - x0)
        if hi == math.inf:
            return ul - math.log(-s)
        return ul + math.log(-math.expm1(s * (hi - lo))) - math.log(-s)
    if lo == -math.inf or hi == math.inf:
        raise EnvelopeViolation("flat tangent on an unbounded piece")
    return base + math.log(hi - lo)


def ars_sample(uniform, log_density, derivative, abscissae, lower=-math.inf, upper=math.inf,
               max_points=MAX_POINTS):
    """Draw one variate from the density proportional to ``exp(log_density)``.

    Parameters
    ----------
    uniform : callable
        Zero-argument callable returning U[0, 1) variates (e.g. ``rng.random``).
    log_density, derivative : callable
        Log density up to a constant and its first derivative.
    abscissae : sequence of float
        Initial points, strictly inside ``(lower, upper)``.  On an unbounded
        side the outermost tangent must point into the mass (positive slope on
        the left, negative on the right).
    lower, upper : float
        Support bounds.
    """
    xs = sorted(float(x) for x in abscissae)
    hs = [log_density(x) for x in xs]
    ds = [derivative(x) for x in xs]
    for i in range(len(xs) - 1):
        if ds[i + 1] > ds[i] + 1e-8 * (1.0 + abs(ds[i])):
            raise EnvelopeViolation("derivative increases between initial abscissae")

    for _ in range(MAX_ROUNDS):
        n = len(xs)
        zs = _hull_breaks(xs, hs, ds, lower, upper)
        hmax = max(hs)
        lm = [_piece_log_mass(hs[i] - hmax, ds[i], xs[i], zs[i], zs[i + 1]) for i in range(n)]
        lmmax = max(lm)
        weights = [math.exp(v - lmmax) for v in lm]
        total = 0.0
        for w in weights:
            total += w

        u1 = uniform()
        u2 = uniform()
        v = uniform()

        target = u1 * total
        acc = 0.0
        j = n - 1
        for i in range(n):
            acc += weights[i]
            if target < acc:
                j = i
                break

        s = ds[j]
        lo = zs[j]
        hi = zs[j + 1]
        uu = 1.0 - u2
        if s > 0.0:
            if lo == -math.inf:
                x = hi + math.log(uu) / s
            elif s * (hi - lo) > 1.0:
                x = hi + math.log(uu + (1.0 - uu) * math.exp(-s * (hi - lo))) / s
            else:
                x = lo + math.log1p(u2 * math.expm1(s * (hi - lo))) / s
        elif s < 0.0:
            if hi == math.inf:
                x = lo + math.log(uu) / s
            elif s * (hi - lo) < -1.0:
                x = lo + math.log(uu + (1.0 - uu) * math.exp(s * (hi - lo))) / s
            else:
                x = lo + math.log1p(u2 * math.expm1(s * (hi - lo))) / s
        else:
            x = lo + u2 * (hi - lo)
        if not (lower < x < upper):
            continue

        upper_hull = hs[j] + s * (x - xs[j])
        k = bisect.bisect_right(xs, x)
        if 0 < k < n:
            squeeze = ((xs[k] - x) * hs[k - 1] + (x - xs[k - 1]) * hs[k]) / (xs[k] - xs[k - 1])
            if squeeze > upper_hull + 1e-7 * (1.0 + abs(upper_hull)):
                raise EnvelopeViolation(f"chord lies above the tangent envelope at x={x!r}")
            if v <= math.exp(squeeze - upper_hull):
                return x

        hx = log_density(x)
        dx = derivative(x)
        if hx > upper_hull + 1e-7 * (1.0 + abs(upper_hull)):
            raise EnvelopeViolation(f"log density exceeds the tangent envelope at x={x!r}")
        accept = v <= math.exp(hx - upper_hull)
        if n < max_points and (k == 0 or xs[k - 1] != x):
            xs.insert(k, x)
            hs.insert(k, hx)
            ds.insert(k, dx)
        if accept:
            return x
    raise EnvelopeViolation("adaptive rejection sampling did not terminate")


def omega_log_density(h, k, a, b):
    return k * math.log(h) - 0.5 * a * h * h + b * h


def omega_derivative(h, k, a, b):
    return k / h - a * h + b


def omega_abscissae(k, a, b):
    """Mode and mode +/- 2 approximate SDs of ``h**k * exp(-a h^2/2 + b h)`` on (0, inf)."""
    mode = 0.0
    if k > 0.0:
        disc = math.sqrt(b * b + 4.0 * a * k)
        if b >= 0.0:
            mode = (b + disc) / (2.0 * a)
        else:
            mode = 2.0 * k / (disc - b)
    if mode > 0.0 and k / mode / mode < math.inf:
        curvature = k / mode / mode + a
    else:
        mode = b / a if b > 0.0 else 0.0
        curvature = a
    sd = 1.0 / math.sqrt(curvature)
    if mode > 0.0:
        left = mode - 2.0 * sd
        if left <= 0.0:
            left = 0.5 * mode
        return [left, mode, mode + 2.0 * sd]
    return [0.5 * sd, sd, 2.0 * sd]
