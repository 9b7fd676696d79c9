import math

import numpy as np
import pytest
from scipy import stats

from glmmcmc.conditional import (HmcConfig, MalaConfig, da_probit_step, haar_pxda_probit_step,
                                 hmc_step, leapfrog, mala_step, pg_da_logistic_step)
from glmmcmc.diagnostics import mcse
from glmmcmc.distributions import make_rng
from glmmcmc.errors import ModelError, NumericalError, UnsupportedModelError
from glmmcmc.model import ConditionalTarget, ModelSpec

from oracles import fixture_model, quadrature_moments, scalar_log_density


def prior_only(q=1, G=None, family="probit"):
    model = ModelSpec(family, np.zeros(0), np.zeros((0, 1)), np.zeros((0, q)), [q])
    return ConditionalTarget(model, [0.0], np.eye(q) if G is None else G)


class Gaussian:
    """Standard normal target with the value_and_grad protocol."""

    dim = 1

    def value_and_grad(self, x):
        return -0.5 * float(x @ x), -x


class Flat:
    dim = 2

    def value_and_grad(self, x):
        return 0.0, np.zeros_like(x)


class BadGradient:
    dim = 3

    def value_and_grad(self, x):
        g = -x.copy()
        g[1] = np.nan
        return 0.0, g


def run(step, n, u0=0.0):
    u = np.array([u0])
    out = np.empty(n)
    for i in range(n):
        u = step(u)
        out[i] = u[0]
    return out


def test_mala_fixed_point_with_zero_noise():
    t = prior_only()
    out = mala_step(make_rng(0), t, np.zeros(1), MalaConfig(0.5), noise=np.zeros(1))
    assert out.accepted and out.accept_prob == 1.0
    assert np.array_equal(out.state, np.zeros(1))


def test_mala_gaussian_variance():
    rng = make_rng(1)
    t = prior_only()
    x = run(lambda u: mala_step(rng, t, u, MalaConfig(0.5)).state, 100000)
    assert abs(x.var() - 1.0) < 0.02


def test_mala_acceptance_bounds():
    rng = make_rng(2)
    target = fixture_model("logistic")
    u = np.zeros(1)
    for _ in range(2000):
        out = mala_step(rng, target, u, MalaConfig(3.0))
        assert 0.0 <= out.accept_prob <= 1.0
        u = out.state


def test_non_finite_gradient_reports_coordinate():
    with pytest.raises(NumericalError) as exc:
        mala_step(make_rng(0), BadGradient(), np.zeros(3), MalaConfig(0.1))
    assert exc.value.coordinate == 1
    with pytest.raises(NumericalError):
        hmc_step(make_rng(0), BadGradient(), np.zeros(3), HmcConfig(0.1, 2))
    with pytest.raises(NumericalError):
        leapfrog(BadGradient(), np.zeros(3), np.ones(3), 0.1)


def test_leapfrog_harmonic_oscillator():
    u, rho = leapfrog(Gaussian(), np.array([1.0]), np.array([0.0]), 0.01, 1.0, 100)
    assert abs(u[0] - math.cos(1.0)) < 1e-3
    assert abs(rho[0] + math.sin(1.0)) < 1e-3


@pytest.mark.parametrize("eps,L", [(0.1, 100), (0.05, 37), (0.01, 10)])
def test_leapfrog_reversibility(eps, L):
    target = fixture_model("poisson-log")
    u0, r0 = np.array([0.3]), np.array([-0.7])
    u1, r1 = leapfrog(target, u0, r0, eps, 1.0, L)
    u2, r2 = leapfrog(target, u1, -r1, eps, 1.0, L)
    assert max(abs(u2[0] - u0[0]), abs(-r2[0] - r0[0])) < 1e-10


def test_leapfrog_flat_target_is_constant_velocity():
    M = np.diag([2.0, 0.5])
    u, rho = leapfrog(Flat(), np.array([1.0, -1.0]), np.array([0.4, 0.2]), 0.1, M, 1)
    assert np.allclose(u, [1.0 + 0.1 * 0.2, -1.0 + 0.1 * 0.4])
    assert np.allclose(rho, [0.4, 0.2])


def test_hmc_small_step_accepts_everything():
    rng = make_rng(3)
    t = prior_only()
    u = np.zeros(1)
    acc = 0
    for _ in range(2000):
        out = hmc_step(rng, t, u, HmcConfig(1e-3, 1))
        acc += out.accepted
        u = out.state
    assert acc / 2000 > 0.999


def test_hmc_gaussian_variance():
    rng = make_rng(4)
    t = prior_only()
    x = run(lambda u: hmc_step(rng, t, u, HmcConfig(0.3, 5)).state, 30000)
    assert abs(x.var() - 1.0) < 4 * mcse((x - x.mean()) ** 2)


def test_hmc_momentum_negated_on_acceptance():
    rng = make_rng(5)
    out = hmc_step(rng, Gaussian(), np.array([0.5]), HmcConfig(0.01, 3))
    assert out.accepted
    # the stored momentum is already reversed, so integrating from it retraces the path
    u, _ = leapfrog(Gaussian(), out.state, out.momentum, 0.01, 1.0, 3)
    assert u[0] == pytest.approx(0.5, abs=1e-12)


def test_hmc_dense_mass_matrix():
    rng = make_rng(6)
    t = prior_only(q=2, G=np.array([[2.0, 0.6], [0.6, 1.0]]))
    cfg = HmcConfig(0.2, 8, np.array([[1.0, 0.3], [0.3, 2.0]]))
    u = np.zeros(2)
    xs = np.empty((20000, 2))
    for i in range(xs.shape[0]):
        u = hmc_step(rng, t, u, cfg).state
        xs[i] = u
    assert np.allclose(np.cov(xs.T), t.G, atol=0.12)


def test_config_validation():
    with pytest.raises(ModelError):
        MalaConfig(0.0)
    with pytest.raises(ModelError):
        HmcConfig(0.1, 0)
    with pytest.raises(ModelError):
        HmcConfig(0.1, 3, np.array([1.0, -1.0])).mass_for(2)


def test_da_without_data_draws_from_prior():
    rng = make_rng(7)
    G = np.array([[1.0, 0.5], [0.5, 2.0]])
    t = prior_only(q=2, G=G)
    xs = np.array([da_probit_step(rng, t, np.zeros(2)) for _ in range(40000)])
    assert np.allclose(xs.mean(0), 0, atol=0.03)
    assert np.allclose(np.cov(xs.T), G, atol=0.05)


def test_pgda_without_data_draws_from_prior():
    rng = make_rng(8)
    t = prior_only(q=1, G=np.array([[3.0]]), family="logistic")
    xs = np.array([pg_da_logistic_step(rng, t, np.zeros(1))[0] for _ in range(40000)])
    assert abs(xs.mean()) < 0.03
    assert abs(xs.var() - 3.0) < 0.1


def test_da_latents_positive_when_all_successes():
    model = ModelSpec("probit", [1, 1, 1], np.ones((3, 1)), np.ones((3, 1)), [1])
    t = ConditionalTarget(model, [-2.0], [[1.0]])
    rng = make_rng(9)
    u = np.zeros(1)
    for _ in range(500):
        u, v = da_probit_step(rng, t, u, return_latent=True)
        assert np.all(v > 0)


def test_pxda_identity_element_reduces_to_da():
    t = fixture_model("probit")
    for seed in range(5):
        a = da_probit_step(make_rng(seed), t, np.array([0.4]))
        b = haar_pxda_probit_step(make_rng(seed), t, np.array([0.4]), h=1.0)
        assert np.array_equal(a, b)


def test_pxda_group_density_half_normal_case():
    # beta = 0, m = 1, v^T Z1 v = 1  =>  omega(h) is half-normal
    model = ModelSpec("probit", [1], [[1.0]], [[1.0]], [1])
    t = ConditionalTarget(model, [0.0], [[1.0]])
    # with Z = 1 and G = 1, Z1 = 1 - 1/2 = 1/2, so v = sqrt(2) gives v^T Z1 v = 1
    from glmmcmc.distributions import sample_omega
    rng = make_rng(10)
    h = np.array([sample_omega(rng, t.model.m - 1, 1.0, 0.0) for _ in range(100000)])
    assert abs(h.mean() - 0.79788) < 4 * h.std() / math.sqrt(h.size)


def test_probit_da_requires_binary_probit():
    model = ModelSpec("probit", [1, 2], np.ones((2, 1)), np.ones((2, 1)), [1], trials=2)
    t = ConditionalTarget(model, [0.0], [[1.0]])
    with pytest.raises(UnsupportedModelError):
        da_probit_step(make_rng(0), t, np.zeros(1))
    t = fixture_model("logistic")
    with pytest.raises(UnsupportedModelError):
        haar_pxda_probit_step(make_rng(0), t, np.zeros(1))
    with pytest.raises(UnsupportedModelError):
        pg_da_logistic_step(make_rng(0), fixture_model("probit"), np.zeros(1))


def test_da_and_pxda_marginals_agree():
    t = fixture_model("probit")
    r1, r2 = make_rng(11), make_rng(12)
    a = run(lambda u: da_probit_step(r1, t, u), 100000)
    b = run(lambda u: haar_pxda_probit_step(r2, t, u), 100000)
    # thin to near-independence before the two-sample test
    assert stats.ks_2samp(a[::5], b[::5]).pvalue > 0.001
    assert abs(a.mean() - b.mean()) < 3 * math.hypot(mcse(a), mcse(b))


def test_pgda_symmetric_binomial_target_centred():
    # trials 2, y = 1 everywhere, beta = 0: the target is symmetric in u
    model = ModelSpec("logistic", [1, 1, 1, 1], np.ones((4, 1)), np.array([[1.0], [-1.0], [1.0], [-1.0]]),
                      [1], trials=2)
    t = ConditionalTarget(model, [0.0], [[1.0]])
    rng = make_rng(13)
    x = run(lambda u: pg_da_logistic_step(rng, t, u), 50000)
    assert abs(x.mean()) < 3 * mcse(x)


def test_pgda_binomial_trials_against_quadrature():
    # kappa = y - trials/2 matters here; the quadrature oracle arbitrates
    model = ModelSpec("logistic", [3, 0, 2, 4], np.ones((4, 1)), np.ones((4, 1)), [1], trials=4)
    t = ConditionalTarget(model, [0.2], [[1.2]])
    mean, var = quadrature_moments(scalar_log_density(t))
    rng = make_rng(14)
    x = run(lambda u: pg_da_logistic_step(rng, t, u), 50000)
    assert abs(x.mean() - mean) < 3 * mcse(x)
    assert abs(x.var() - var) < 3 * mcse((x - x.mean()) ** 2)
