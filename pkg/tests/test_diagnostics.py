import math

import numpy as np
import pytest

from glmmcmc.diagnostics import (HMC_TARGET, MALA_TARGET, acf, acf_table, adapt_step_size, batch_means_cov,
                                 batch_size, ess, mcse, mess, msj, render_tables, summarize)
from glmmcmc.errors import UndefinedStatisticError


def ar1(rng, n, rho, d=1):
    x = np.empty((n, d))
    x[0] = rng.standard_normal(d) / math.sqrt(1 - rho * rho)
    e = rng.standard_normal((n, d))
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    return x if d > 1 else x[:, 0]


def naive_obm(x, b):
    n = len(x)
    means = np.array([x[j:j + b].mean() for j in range(n - b + 1)])
    return n * b / ((n - b) * (n - b + 1)) * np.sum((means - x.mean()) ** 2)


def test_acf_hand_values():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    # centred: -1.5 -0.5 0.5 1.5, c0 = 5, lag-1 sum = 0.75 - 0.25 + 0.75 = 1.25
    assert acf(x, 1) == pytest.approx(0.25)
    assert acf(x, 0) == 1.0
    assert acf([1.0, -1.0, 1.0, -1.0], 1) == pytest.approx(-0.75)


def test_acf_errors():
    with pytest.raises(UndefinedStatisticError):
        acf(np.ones(50), 1)
    with pytest.raises(UndefinedStatisticError):
        acf([1.0, 2.0], 2)
    with pytest.raises(UndefinedStatisticError):
        acf([1.0, np.nan, 2.0], 1)


def test_acf_ar1():
    x = ar1(np.random.default_rng(1), 100000, 0.7)
    lags = acf_table(x, 3)
    assert np.allclose(lags, [0.7, 0.49, 0.343], atol=0.02)


def test_batch_size_rule():
    assert [batch_size(n) for n in (1, 99, 100, 10 ** 5)] == [1, 9, 10, 316]


def test_batch_means_matches_naive_loop():
    x = np.random.default_rng(2).standard_normal(400)
    assert batch_means_cov(x)[0, 0] == pytest.approx(naive_obm(x, 20), rel=1e-12)
    assert batch_means_cov(x, 7)[0, 0] == pytest.approx(naive_obm(x, 7), rel=1e-12)


def test_ess_iid_and_ar1():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(50000)
    assert ess(x) > 0.85 * x.size
    assert ess(x) <= x.size
    rho = 0.5
    y = ar1(rng, 200000, rho)
    expected = y.size * (1 - rho) / (1 + rho)
    assert ess(y) == pytest.approx(expected, rel=0.1)


def test_ess_requires_length_and_variation():
    with pytest.raises(UndefinedStatisticError):
        ess(np.arange(99.0))
    with pytest.raises(UndefinedStatisticError):
        ess(np.zeros(500))


def test_mcse_ar1():
    rho = 0.8
    y = ar1(np.random.default_rng(4), 200000, rho)
    # asymptotic variance of the mean of an AR(1) with unit innovations
    sigma2 = 1 / (1 - rho) ** 2
    assert mcse(y) == pytest.approx(math.sqrt(sigma2 / y.size), rel=0.1)


def test_mess_iid_and_capped():
    x = np.random.default_rng(5).standard_normal((40000, 3))
    m = mess(x)
    assert 0.85 * x.shape[0] < m <= x.shape[0]


def test_mess_reduced_by_correlation():
    y = ar1(np.random.default_rng(6), 100000, 0.5, d=2)
    assert mess(y) == pytest.approx(y.shape[0] / 3, rel=0.1)


def test_mess_singular_names_coordinates():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1000, 3))
    x = np.column_stack([x, x[:, 0]])
    with pytest.raises(UndefinedStatisticError) as exc:
        mess(x, ["a", "b", "c", "d"])
    assert set(exc.value.coordinates) == {"a", "d"}


def test_msj_hand_values():
    chain = np.array([0.0, 1.0, 3.0, 6.0])
    assert msj(chain) == pytest.approx((1 + 4 + 9) / 4)
    assert msj(chain, burn_in=1) == pytest.approx((4 + 9) / 3)
    two = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 3.0]])
    assert msj(two) == pytest.approx((2 + 4) / 3)
    with pytest.raises(UndefinedStatisticError):
        msj(chain, burn_in=3)


def test_adapt_step_size_rule():
    assert adapt_step_size([], 0.3, 0.55) == 0.3
    assert adapt_step_size([0.55], 0.3, 0.55) == 0.3
    assert adapt_step_size([0.1, 1.0], 0.3, 0.55) == pytest.approx(0.3 * math.exp(0.45 / 2 ** 0.6))
    assert adapt_step_size([0.9, 0.0], 0.3, 0.55) < 0.3
    assert (MALA_TARGET, HMC_TARGET) == (0.55, 0.70)


def test_adaptation_drives_rate_to_target():
    # acceptance probability of a toy kernel falls with eps: alpha = exp(-eps)
    rng = np.random.default_rng(8)
    eps, hist = 3.0, []
    for _ in range(5000):
        hist.append(float(rng.random() < math.exp(-eps)))
        eps = adapt_step_size(hist, eps, 0.55)
    assert math.exp(-eps) == pytest.approx(0.55, abs=0.05)


def test_summary_and_tables():
    rng = np.random.default_rng(9)
    data = np.column_stack([rng.standard_normal((2000, 2)), ar1(rng, 2000, 0.9), rng.gamma(2.0, size=2000)])
    names = ["u.1", "u.2", "beta.0", "lambda.1"]
    s = summarize(data, names, acceptance_rate=0.61,
                  mess_groups={"u": ["u"], "beta,lambda": ["beta", "lambda"]})
    assert set(s.msj) == {"u", "beta", "lambda"}
    assert set(s.mess) == {"u", "beta,lambda"}
    assert s.ess["beta.0"] < s.ess["u.1"]
    text = render_tables({"A": s, "B": s})
    for token in ("Autocorrelation by lag", "Effective sample size", "mESS(u)", "Mean squared jump",
                  "acceptance", "0.610"):
        assert token in text
    assert len([ln for ln in text.splitlines() if ln.startswith("u.1")]) == 5 + 1


def test_summary_records_undefined_statistics():
    data = np.column_stack([np.zeros(200), np.random.default_rng(10).standard_normal(200)])
    s = summarize(data, ["u.1", "u.2"])
    assert "u.1" not in s.ess
    assert any("u.1" in note for note in s.notes)
    assert "NA" in render_tables({"x": s})
