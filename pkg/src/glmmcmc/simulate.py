"""Synthetic GLMM data from the generative model: u ~ N(0, D(lambda)^-1), then y_i | u independent."""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from .errors import ModelError
from .model import Family, ModelSpec


@dataclass
class Dataset:
    """Tabular data: responses, trials, covariates (no intercept column) and integer group codes."""

    y: np.ndarray
    trials: np.ndarray
    covariates: np.ndarray
    groups: np.ndarray  # m x r, codes 0..q_j-1
    levels: list  # per factor, the label of each code

    @property
    def m(self):
        return self.y.shape[0]

    def design(self, intercept=True):
        cols = [np.ones(self.m)] if intercept else []
        cols += [self.covariates[:, k] for k in range(self.covariates.shape[1])]
        X = np.column_stack(cols) if cols else np.zeros((self.m, 0))
        blocks = [len(lv) for lv in self.levels]
        Z = np.zeros((self.m, sum(blocks)))
        start = 0
        for j, qj in enumerate(blocks):
            Z[np.arange(self.m), start + self.groups[:, j]] = 1.0
            start += qj
        return X, Z, blocks

    def model(self, family, intercept=True):
        X, Z, blocks = self.design(intercept)
        return ModelSpec(family, self.y, X, Z, blocks, self.trials)


def draw_responses(rng, family, gamma, trials):
    if family is Family.LOGISTIC:
        return rng.binomial(trials.astype(np.int64), expit(gamma)).astype(float)
    if family is Family.PROBIT:
        return rng.binomial(trials.astype(np.int64), ndtr(gamma)).astype(float)
    return rng.poisson(np.exp(gamma)).astype(float)


def simulate(rng, family, m, p, blocks, beta, lam, trials=1):
    """Simulate a dataset with an intercept plus p-1 N(0,1) covariates and balanced random groups.

    Returns ``(dataset, truth)`` where truth holds beta, lambda and the drawn u.
    """
    family = Family.parse(family)
    blocks = [int(b) for b in blocks]
    beta = np.asarray(beta, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if m < 1 or p < 1 or not blocks or min(blocks) < 1:
        raise ModelError("need m >= 1, p >= 1 (intercept included) and positive block sizes")
    if beta.shape != (p,):
        raise ModelError(f"beta has length {beta.shape[0]}, expected p={p}")
    if lam.shape != (len(blocks),) or np.any(lam <= 0):
        raise ModelError("lambda needs one positive precision per block")
    covariates = rng.standard_normal((m, p - 1))
    groups = np.column_stack([rng.permutation(np.arange(m) % qj) for qj in blocks])
    levels = [[str(k + 1) for k in range(qj)] for qj in blocks]
    u = rng.standard_normal(sum(blocks)) / np.sqrt(np.repeat(lam, blocks))
    trials = np.broadcast_to(np.asarray(trials, dtype=float), (m,)).copy()
    ds = Dataset(np.zeros(m), trials, covariates, groups, levels)
    X, Z, _ = ds.design()
    ds.y = draw_responses(rng, family, X @ beta + Z @ u, trials)
    return ds, {"family": family.value, "beta": beta.tolist(), "lambda": lam.tolist(), "u": u.tolist()}
