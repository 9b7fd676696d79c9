"""Chain-quality statistics: autocorrelation, batch-means ESS and mESS, mean squared jumps.

Batch-means estimators use batch size floor(sqrt(N)) with overlapping batches.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import UndefinedStatisticError

MALA_TARGET = 0.55
HMC_TARGET = 0.70
MIN_ESS_LENGTH = 100


def _as_series(series):
    x = np.asarray(series, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise UndefinedStatisticError("series contains non-finite values")
    return x


def acf(series, k):
    """Lag-k sample autocorrelation with the biased 1/N denominator."""
    x = _as_series(series)
    n = x.shape[0]
    if k < 0 or n <= k:
        raise UndefinedStatisticError(f"lag {k} needs more than {k} observations, got {n}")
    xc = x - x.mean()
    c0 = float(xc @ xc)
    if c0 <= 0.0:
        raise UndefinedStatisticError("autocorrelation is undefined for a constant series")
    if k == 0:
        return 1.0
    return float(xc[:-k] @ xc[k:]) / c0


def acf_table(series, max_lag=5):
    return [acf(series, k) for k in range(1, max_lag + 1)]


def batch_size(n):
    return max(1, int(math.floor(math.sqrt(n))))


def batch_means_cov(chain, b=None):
    """Overlapping batch-means estimate of the asymptotic covariance Sigma_MC (N x d input)."""
    y = np.asarray(chain, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n = y.shape[0]
    if b is None:
        b = batch_size(n)
    if not 1 <= b < n:
        raise UndefinedStatisticError(f"batch size {b} invalid for {n} draws")
    csum = np.vstack([np.zeros(y.shape[1]), np.cumsum(y - y.mean(axis=0), axis=0)])
    means = (csum[b:] - csum[:-b]) / b
    n_batches = n - b + 1
    return n * b / ((n - b) * n_batches) * (means.T @ means)


def mcse(series):
    """Monte Carlo standard error of the sample mean via batch means."""
    x = _as_series(series)
    return math.sqrt(max(float(batch_means_cov(x)[0, 0]), 0.0) / x.shape[0])


def ess(series):
    """Effective sample size N * var / sigma^2_BM, capped at N."""
    x = _as_series(series)
    n = x.shape[0]
    if n < MIN_ESS_LENGTH:
        raise UndefinedStatisticError(f"ESS needs at least {MIN_ESS_LENGTH} draws, got {n}")
    var = float(np.var(x, ddof=1))
    if var <= 0.0:
        raise UndefinedStatisticError("ESS is undefined for a constant series")
    sigma2 = float(batch_means_cov(x)[0, 0])
    if sigma2 <= 0.0:
        return float(n)
    return min(float(n), n * var / sigma2)


def _logdet_pd(S, names, what):
    sign, logdet = np.linalg.slogdet(S)
    d = S.shape[0]
    cond_ok = sign > 0 and np.isfinite(logdet)
    if cond_ok:
        w = np.linalg.eigvalsh(S)
        cond_ok = w[0] > 1e-12 * w[-1]
    if not cond_ok:
        w, V = np.linalg.eigh(S)
        weak = V[:, 0]
        involved = [names[i] for i in np.flatnonzero(np.abs(weak) > 1e-3 / math.sqrt(d))]
        raise UndefinedStatisticError(
            f"{what} is singular; the deficient direction involves {', '.join(involved)}",
            coordinates=involved,
        )
    return logdet


def mess(chains, names=None):
    """Multivariate ESS N * (|Sigma| / |Sigma_MC|)^(1/d), capped at N."""
    y = np.asarray(chains, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, d = y.shape
    if names is None:
        names = [f"x{i + 1}" for i in range(d)]
    if n < MIN_ESS_LENGTH or n <= d:
        raise UndefinedStatisticError(f"mESS needs many more draws than coordinates (N={n}, d={d})")
    S = np.atleast_2d(np.cov(y, rowvar=False))
    ld = _logdet_pd(S, names, "sample covariance")
    ld_mc = _logdet_pd(batch_means_cov(y), names, "batch-means covariance")
    return min(float(n), n * math.exp((ld - ld_mc) / d))


def msj(chain, burn_in=0):
    """Mean squared Euclidean jump: sum over i = B+1..N-1 of |x_(i+1) - x_i|^2, divided by N - B.

    Rows are iterates 1..N; the last jump counted is N-1 -> N.
    """
    y = np.asarray(chain, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n = y.shape[0]
    if n <= burn_in + 1:
        raise UndefinedStatisticError(f"MSJ needs N > B + 1 (N={n}, B={burn_in})")
    jumps = np.diff(y[burn_in:], axis=0)
    return float(np.sum(jumps * jumps)) / (n - burn_in)


def adapt_step_size(history, eps, target, c=1.0, kappa=0.6):
    """Stochastic-approximation update eps * exp(c (alpha_hat - target) / n^kappa).

    ``history`` holds the acceptance probabilities (or 0/1 outcomes) seen so far;
    alpha_hat is the latest entry and n the number of entries.
    """
    n = len(history)
    if n == 0:
        return eps
    alpha_hat = float(history[-1])
    return eps * math.exp(c * (alpha_hat - target) / n ** kappa)


@dataclass
class ChainSummary:
    names: List[str]
    acf: Dict[str, List[float]]
    ess: Dict[str, float]
    mess: Dict[str, float]
    msj: Dict[str, float]
    acceptance_rate: Optional[float] = None
    n: int = 0
    notes: List[str] = field(default_factory=list)


def group_of(name):
    return name.split(".", 1)[0]


def _prefix_groups(names):
    groups = {}
    for j, name in enumerate(names):
        groups.setdefault(group_of(name), []).append(j)
    return groups


def summarize(samples, names, max_lag=5, acceptance_rate=None, mess_groups=None):
    """Per-coordinate ACF/ESS, MSJ per named group (u, beta, lambda) and mESS per group.

    ``mess_groups`` maps a label to a list of group prefixes pooled for mESS,
    e.g. ``{"u": ["u"], "beta,lambda": ["beta", "lambda"]}``; by default each
    prefix group gets its own mESS.
    """
    y = np.asarray(samples, dtype=float)
    out = ChainSummary(list(names), {}, {}, {}, {}, acceptance_rate, y.shape[0])
    for j, name in enumerate(names):
        try:
            out.acf[name] = acf_table(y[:, j], max_lag)
            out.ess[name] = ess(y[:, j])
        except UndefinedStatisticError as exc:
            out.notes.append(f"{name}: {exc}")
    groups = _prefix_groups(names)
    for g, cols in groups.items():
        out.msj[g] = msj(y[:, cols]) if y.shape[0] > 1 else float("nan")
    if mess_groups is None:
        mess_groups = {g: [g] for g in groups}
    for label, prefixes in mess_groups.items():
        cols = [j for g in prefixes for j in groups.get(g, [])]
        if not cols:
            continue
        try:
            out.mess[label] = mess(y[:, cols], [names[j] for j in cols])
        except UndefinedStatisticError as exc:
            out.notes.append(f"mESS({label}): {exc}")
    return out


def _fmt(v, spec):
    return "NA" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, spec)


def render_tables(summaries, coords=None, max_lag=5):
    """Text tables: ACF by lag, ESS/mESS, and MSJ, one column block per sampler.

    ``summaries`` maps a sampler label to its ``ChainSummary``.
    """
    labels = list(summaries)
    first = summaries[labels[0]]
    coords = coords or first.names
    lines = ["Autocorrelation by lag"]
    header = f"{'coordinate':<12}{'lag':>4}" + "".join(f"{lab:>12}" for lab in labels)
    lines.append(header)
    for name in coords:
        for k in range(max_lag):
            row = f"{name:<12}{k + 1:>4}"
            for lab in labels:
                vals = summaries[lab].acf.get(name)
                row += f"{_fmt(vals[k] if vals else None, '.3f'):>12}"
            lines.append(row)
    lines.append("")
    lines.append("Effective sample size")
    lines.append(f"{'coordinate':<16}" + "".join(f"{lab:>12}" for lab in labels))
    for name in coords:
        lines.append(f"{name:<16}" + "".join(f"{_fmt(summaries[lab].ess.get(name), '.0f'):>12}"
                                             for lab in labels))
    for g in first.mess:
        lines.append(f"{'mESS(' + g + ')':<16}" + "".join(
            f"{_fmt(summaries[lab].mess.get(g), '.0f'):>12}" for lab in labels))
    lines.append("")
    lines.append("Mean squared jump")
    lines.append(f"{'group':<16}" + "".join(f"{lab:>12}" for lab in labels))
    for g in first.msj:
        lines.append(f"{g:<16}" + "".join(f"{_fmt(summaries[lab].msj.get(g), '.4f'):>12}"
                                          for lab in labels))
    rates = [summaries[lab].acceptance_rate for lab in labels]
    if any(r is not None for r in rates):
        lines.append("")
        lines.append(f"{'acceptance':<16}" + "".join(f"{_fmt(r, '.3f'):>12}" for r in rates))
    return "\n".join(lines) + "\n"
