import math

import numpy as np
import pytest
from scipy.stats import norm

from glmmcmc.errors import ModelError, NotPositiveDefiniteError
from glmmcmc.model import (BayesState, ConditionalTarget, Family, ModelSpec, PriorSpec, ZetaTarget,
                           grad_log_conditional_u, grad_log_joint_zeta, log_conditional_u,
                           log_joint_bayes)

from oracles import central_difference, naive_loglik, random_model, random_pd

FAMILIES = ["logistic", "probit", "poisson-log"]


def single(family, y):
    return ModelSpec(family, [y], [[1.0]], [[1.0]], [1])


def test_log_conditional_trivial_values():
    t = ConditionalTarget(single("logistic", 1), [0.0], [[1.0]])
    assert log_conditional_u(t, [0.0]) == pytest.approx(-math.log(2), abs=1e-12)
    t = ConditionalTarget(single("poisson-log", 2), [0.0], [[1.0]])
    assert log_conditional_u(t, [0.0]) == pytest.approx(-1.0, abs=1e-12)
    t = ConditionalTarget(single("probit", 1), [0.0], [[1.0]])
    assert log_conditional_u(t, [0.0]) == pytest.approx(-math.log(2), abs=1e-12)


def test_grad_conditional_trivial_values():
    t = ConditionalTarget(single("logistic", 1), [0.0], [[1.0]])
    assert grad_log_conditional_u(t, [0.0])[0] == pytest.approx(0.5)
    t = ConditionalTarget(single("poisson-log", 2), [0.0], [[1.0]])
    assert grad_log_conditional_u(t, [0.0])[0] == pytest.approx(1.0)
    t = ConditionalTarget(single("probit", 1), [0.0], [[1.0]])
    g = grad_log_conditional_u(t, [0.0])[0]
    assert g == pytest.approx(norm.pdf(0) / norm.cdf(0), rel=1e-12)
    fd = central_difference(lambda u: log_conditional_u(t, u), [0.0])[0]
    assert g == pytest.approx(0.79788, abs=1e-5)
    assert fd == pytest.approx(g, rel=1e-6)


def test_log_joint_trivial_values():
    m = single("logistic", 1)
    prior = PriorSpec([0.0], 0.0, [1.0], [0.0])
    s = BayesState([0.0], [0.0], [1.0])
    assert log_joint_bayes(m, prior, s) == pytest.approx(-math.log(2))
    prior = PriorSpec([0.0], 1.0, [1.0], [1.0])
    assert log_joint_bayes(m, prior, s) == pytest.approx(-1.6931, abs=1e-4)


@pytest.mark.parametrize("family", FAMILIES)
def test_log_joint_matches_naive_sum(family):
    rng = np.random.default_rng(11)
    model = random_model(rng, family, trials=2 if family != "poisson-log" else 1)
    prior = PriorSpec(rng.standard_normal(2), random_pd(rng, 2), [0.7, 2.0], [1.3, 0.4])
    for _ in range(5):
        s = BayesState(rng.standard_normal(5), rng.standard_normal(2), rng.uniform(0.2, 3.0, 2))
        gamma = model.X @ s.beta + model.Z @ s.u
        naive = naive_loglik(family, model.y, model.trials, gamma)
        dev = s.beta - prior.mu0
        naive -= 0.5 * dev @ prior.Q @ dev
        for j, sl in enumerate([slice(0, 2), slice(2, 5)]):
            qj = sl.stop - sl.start
            uj = s.u[sl]
            naive += (prior.a[j] - 1 + qj / 2) * math.log(s.lam[j]) - (prior.b[j] + uj @ uj / 2) * s.lam[j]
        assert log_joint_bayes(model, prior, s) == pytest.approx(naive, rel=1e-10)


@pytest.mark.parametrize("family", FAMILIES)
def test_conditional_gradient_matches_finite_differences(family):
    rng = np.random.default_rng(5)
    model = random_model(rng, family, trials=3 if family != "poisson-log" else 1)
    target = ConditionalTarget(model, rng.standard_normal(2) * 0.3, random_pd(rng, 5))
    for _ in range(10):
        u = rng.standard_normal(5) * 0.5
        g = grad_log_conditional_u(target, u)
        fd = central_difference(lambda v: log_conditional_u(target, v), u)
        assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-5


@pytest.mark.parametrize("family", FAMILIES)
def test_zeta_gradient_matches_finite_differences(family):
    rng = np.random.default_rng(6)
    model = random_model(rng, family)
    prior = PriorSpec(rng.standard_normal(2), random_pd(rng, 2), [1.0, 2.0], [1.0, 0.5])
    for _ in range(10):
        s = BayesState(rng.standard_normal(5) * 0.5, rng.standard_normal(2) * 0.3, rng.uniform(0.5, 2, 2))
        g = grad_log_joint_zeta(model, prior, s)

        def f(z):
            return log_joint_bayes(model, prior, BayesState(z[:5], z[5:], s.lam))
        fd = central_difference(f, s.zeta)
        assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-5


def test_zeta_beta_block_trivial():
    m = single("logistic", 1)
    prior = PriorSpec([0.0], 0.0, [1.0], [1.0])
    g = grad_log_joint_zeta(m, prior, BayesState([0.0], [0.0], [1.0]))
    assert g[1] == pytest.approx(0.5)
    m = single("probit", 1)
    g = grad_log_joint_zeta(m, prior, BayesState([0.0], [0.0], [1.0]))
    assert g[1] == pytest.approx(0.79788, abs=1e-5)


@pytest.mark.parametrize("family", ["logistic", "poisson-log"])
def test_log_conditional_is_concave(family):
    rng = np.random.default_rng(8)
    for _ in range(5):
        model = random_model(rng, family, m=10, blocks=(1, 2))
        target = ConditionalTarget(model, rng.standard_normal(2) * 0.3, random_pd(rng, 3))
        u = rng.standard_normal(3) * 0.5
        H = np.column_stack([central_difference(lambda v: grad_log_conditional_u(target, v)[i], u)
                             for i in range(3)])
        assert np.linalg.eigvalsh(0.5 * (H + H.T)).max() < 0


def test_probit_gradient_finite_far_in_tails():
    model = ModelSpec("probit", [1, 0, 1, 0], np.ones((4, 1)), np.array([[1.0], [1.0], [-1.0], [-1.0]]), [1])
    for gamma in (-30.0, -8.5, 8.5, 30.0):
        t = ConditionalTarget(model, [0.0], [[1.0]])
        g = grad_log_conditional_u(t, [gamma])
        v = log_conditional_u(t, [gamma])
        assert np.all(np.isfinite(g)) and math.isfinite(v)


def test_block_permutation_invariance():
    rng = np.random.default_rng(3)
    model = random_model(rng, "logistic", blocks=(2, 3))
    perm = np.r_[2, 3, 4, 0, 1]
    permuted = ModelSpec("logistic", model.y, model.X, model.Z[:, perm], [3, 2], model.trials)
    prior = PriorSpec([0.0, 0.0], 0.5, [1.0, 2.0], [0.5, 1.5])
    prior_p = PriorSpec([0.0, 0.0], 0.5, [2.0, 1.0], [1.5, 0.5])
    s = BayesState(rng.standard_normal(5), rng.standard_normal(2), [0.7, 1.9])
    sp = BayesState(s.u[perm], s.beta, s.lam[::-1])
    assert log_joint_bayes(model, prior, s) == pytest.approx(log_joint_bayes(permuted, prior_p, sp), rel=1e-12)


def test_model_validation_errors():
    with pytest.raises(ModelError):
        ModelSpec("logistic", [2], [[1.0]], [[1.0]], [1])
    with pytest.raises(ModelError):
        ModelSpec("poisson-log", [-1], [[1.0]], [[1.0]], [1])
    with pytest.raises(ModelError):
        ModelSpec("probit", [1, 0], [[1.0]], [[1.0], [1.0]], [1])
    with pytest.raises(ModelError):
        ModelSpec("probit", [1], [[1.0]], [[1.0, 1.0]], [1])
    with pytest.raises(ModelError):
        Family.parse("gaussian")
    m = single("logistic", 1)
    with pytest.raises(ModelError):
        log_conditional_u(ConditionalTarget(m, [0.0], [[1.0]]), [0.0, 1.0])
    with pytest.raises(NotPositiveDefiniteError):
        log_conditional_u(ConditionalTarget(m, [0.0], [[-1.0]]), [0.0])
    with pytest.raises(ModelError):
        log_joint_bayes(m, PriorSpec([0.0], 1.0, [1.0], [1.0]), BayesState([0.0], [0.0], [0.0]))


def test_prior_validation():
    with pytest.raises(ModelError):
        PriorSpec([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], [1.0], [1.0])
    with pytest.raises(ModelError):
        PriorSpec([0.0], 1.0, [0.0], [1.0])
    m = single("probit", 1)
    with pytest.raises(ModelError):
        PriorSpec([0.0], 0.0, [1.0], [1.0]).require_proper(m)
    with pytest.raises(ModelError):
        PriorSpec([0.0], 1.0, [1.0], [0.0]).require_proper(m)


def test_zeta_target_agrees_with_log_joint_differences():
    rng = np.random.default_rng(2)
    model = random_model(rng, "probit")
    prior = PriorSpec.standard(2, 2)
    lam = np.array([0.8, 1.7])
    t = ZetaTarget(model, prior, lam)
    z1, z2 = rng.standard_normal(7), rng.standard_normal(7)
    d_target = t.log_density(z1) - t.log_density(z2)
    d_joint = (log_joint_bayes(model, prior, BayesState(z1[:5], z1[5:], lam))
               - log_joint_bayes(model, prior, BayesState(z2[:5], z2[5:], lam)))
    assert d_target == pytest.approx(d_joint, rel=1e-10)
