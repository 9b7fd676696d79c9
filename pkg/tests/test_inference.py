import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize, minimize_scalar

from glmmcmc.distributions import make_rng
from glmmcmc.errors import FitError, ModelError
from glmmcmc.inference import (CompleteDataLikelihood, FitConfig, ImportanceObjective, _maximize,
                               estep_objective, mcem_fit, mcml_fit)
from glmmcmc.simulate import simulate

from oracles import fixture_model, logistic_marginal_loglik, naive_loglik


@pytest.fixture(scope="module")
def grouped():
    """Logistic data with one-hot groups; the marginal likelihood factorizes into 1-D integrals."""
    ds, _ = simulate(make_rng(3), "logistic", 120, 1, [8], [-0.3], [1.0])
    model = ds.model("logistic")

    def marginal(theta):
        b, log_lam = theta
        g = math.exp(-log_lam)
        xb = model.X @ [b]
        total = 0.0
        for k in range(model.q):
            rows = model.Z[:, k] > 0

            def f(u):
                return math.exp(naive_loglik("logistic", model.y[rows], model.trials[rows], xb[rows] + u)
                                - 0.5 * u * u / g)
            total += math.log(quad(f, -30, 30, epsabs=1e-14, limit=200)[0]) - 0.5 * math.log(2 * math.pi * g)
        return total

    mle = minimize(lambda t: -marginal(t), [0.0, 0.0], method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-9}).x
    return model, mle


def test_complete_data_likelihood_matches_naive():
    rng = np.random.default_rng(1)
    ds, _ = simulate(make_rng(1), "poisson-log", 30, 3, [3, 2], [0.1, 0.2, -0.1], [1.0, 2.0])
    model = ds.model("poisson-log")
    U = rng.standard_normal((4, model.q))
    beta, lam = np.array([0.2, -0.1, 0.3]), np.array([0.7, 1.9])
    got = CompleteDataLikelihood(model, U).values(beta, lam)
    for j in range(4):
        gamma = model.X @ beta + model.Z @ U[j]
        lam_u = np.repeat(lam, model.blocks)
        expected = (naive_loglik("poisson-log", model.y, model.trials, gamma)
                    + 0.5 * np.sum(np.log(lam_u)) - 0.5 * np.sum(lam_u * U[j] ** 2))
        assert got[j] == pytest.approx(expected, rel=1e-12)
    assert estep_objective(model, U, beta, lam) == pytest.approx(got.mean())


def test_importance_objective_zero_at_anchor():
    t = fixture_model("logistic")
    U = np.random.default_rng(2).standard_normal((500, 1))
    obj = ImportanceObjective(t.model, U, [0.3], [1 / 1.5])
    assert obj([0.3], [1 / 1.5]) == 0.0
    assert obj.importance_ess([0.3], [1 / 1.5]) == pytest.approx(500.0)


def test_mcml_zero_iterations_reports_anchor():
    t = fixture_model("logistic")
    fit = mcml_fit(make_rng(3), t.model, ([0.3], [1 / 1.5]), FitConfig(sampler="pgda", n_samples=500, max_iter=0))
    assert fit.objective == 0.0
    assert fit.beta[0] == 0.3 and fit.n_iter == 0


def test_fixed_lambda_fitters_match_quadrature_mle():
    t = fixture_model("logistic")
    g = 1.5
    mle = minimize_scalar(lambda b: -logistic_marginal_loglik(t.model, [b], g), bounds=(-5, 5),
                          method="bounded", options={"xatol": 1e-10}).x
    assert mle == pytest.approx(1.27039, abs=1e-4)
    cfg = FitConfig(sampler="mala", n_samples=5000, max_iter=40, tol=1e-2, fixed_lam=True)
    em = mcem_fit(make_rng(4), t.model, ([0.3], [1 / g]), cfg)
    assert em.converged
    assert abs(em.beta[0] - mle) < 0.1
    assert em.lam[0] == 1 / g
    ml = mcml_fit(make_rng(5), t.model, ([0.3], [1 / g]),
                  FitConfig(sampler="pgda", n_samples=20000, fixed_lam=True))
    assert abs(ml.beta[0] - mle) < 0.1


def test_mcem_free_lambda_matches_quadrature(grouped):
    model, mle = grouped
    fit = mcem_fit(make_rng(6), model, ([0.0], [1.0]),
                   FitConfig(sampler="pgda", n_samples=1000, max_iter=40, tol=2e-2))
    assert fit.converged
    assert abs(fit.beta[0] - mle[0]) < 0.1
    assert abs(math.log(fit.lam[0]) - mle[1]) < 0.25
    assert len(fit.trajectory) == fit.n_iter + 1


def test_mcml_pilot_restarts_reanchor(grouped):
    model, mle = grouped
    cfg = FitConfig(sampler="pgda", n_samples=5000, pilot_restarts=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = mcml_fit(make_rng(7), model, ([0.0], [1.0]), cfg)
    assert fit.warnings and "importance ESS" in fit.warnings[0]
    assert len(fit.trajectory) >= 3
    assert abs(fit.beta[0] - mle[0]) < 0.15


def test_mcml_low_ess_warns_without_restarts(grouped):
    model, _ = grouped
    cfg = FitConfig(sampler="pgda", n_samples=500, min_importance_ess=0.99)
    with pytest.warns(RuntimeWarning, match="importance ESS"):
        fit = mcml_fit(make_rng(8), model, ([0.0], [1.0]), cfg)
    assert not fit.converged


def test_fit_config_and_init_validation():
    with pytest.raises(ModelError):
        FitConfig(sampler="bg")
    with pytest.raises(ModelError):
        FitConfig(n_samples=0)
    t = fixture_model("logistic")
    with pytest.raises(ModelError):
        mcem_fit(make_rng(0), t.model, ([0.0], [-1.0]), FitConfig(sampler="pgda"))
    with pytest.raises(ModelError):
        mcml_fit(make_rng(0), t.model, ([0.0, 1.0], [1.0]), FitConfig(sampler="pgda"))


def test_maximize_failure_carries_last_iterate():
    with pytest.raises(FitError) as exc:
        _maximize(lambda th: math.nan, np.zeros(2), {"maxiter": 5}, last="prev")
    assert exc.value.last == "prev"
