"""Mixture models with discrete hidden component labels.

Each model exposes the complete-data log joint ``log P(x_i, H_i=k | theta)``
and its hand-coded gradient, both written against :mod:`emlaplace.diffnum`
so they accept plain, complex-step and dual parameter vectors. The prior
``log P(theta)`` is kept separate and added once per dataset.

Parameters are unconstrained: Gaussian component means, and coin biases as
log-odds. Weights and variances are fixed hyperparameters.
"""

from __future__ import annotations

import math

import numpy as np

from . import diffnum as dn
from .errors import MStepError

LOG_2PI = math.log(2.0 * math.pi)

GAUSSIAN_MIXTURE = "gaussian-mixture"
COIN_MIXTURE = "coin-mixture"


class GaussianPrior:
    """Independent Gaussians on each unconstrained coordinate."""

    def __init__(self, mean, variance, size=None):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        variance = np.atleast_1d(np.asarray(variance, dtype=float))
        if size is not None:
            mean = np.broadcast_to(mean, (size,)).copy()
            variance = np.broadcast_to(variance, (size,)).copy()
        if mean.shape != variance.shape:
            raise ValueError("prior mean and variance lengths differ")
        if not np.all(np.isfinite(mean)):
            raise ValueError("prior means must be finite")
        if not np.all(variance > 0) or not np.all(np.isfinite(variance)):
            raise ValueError("prior variances must be positive and finite")
        self.mean = mean
        self.variance = variance

    def log_density(self, theta):
        d = theta - self.mean
        return (-0.5 * (LOG_2PI + np.log(self.variance)) - d * d / (2.0 * self.variance)).sum()

    def gradient(self, theta):
        return -(theta - self.mean) / self.variance

    def to_dict(self):
        return {"mean": self.mean.tolist(), "variance": self.variance.tolist()}


class MixtureModel:
    """Shared machinery for K-component mixtures with one parameter per component.

    ``prior=None`` is the improper flat prior: ``log P(theta) = 0``.
    """

    family: str

    def __init__(self, weights, prior=None):
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if w.ndim != 1 or w.size < 1:
            raise ValueError("need at least one component weight")
        if not np.all(w > 0):
            raise ValueError("component weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"component weights sum to {w.sum()!r}, not 1")
        self.weights = w
        self.log_weights = np.log(w)
        if prior is not None and prior.mean.shape != w.shape:
            prior = GaussianPrior(prior.mean, prior.variance, size=w.size)
        self.prior = prior

    @property
    def n_components(self):
        return self.weights.size

    @property
    def n_params(self):
        return self.weights.size

    def log_prior(self, theta):
        if self.prior is None:
            return 0.0
        return self.prior.log_density(theta)

    def prior_gradient(self, theta):
        if self.prior is None:
            return np.zeros(self.n_params)
        return self.prior.gradient(theta)

    def complete_data_grad(self, data, theta):
        """Gradient of each ``log P(x_i, H_i=k | theta)``, shape (N, K, n).

        Component k depends on parameter k only, so the tensor is zero
        off the (k, k) slots.
        """
        return self._slot_grad(data, theta)[:, :, None] * np.eye(self.n_params)[None, :, :]

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        return theta

    def describe(self):
        return {
            "family": self.family,
            "components": int(self.n_components),
            "weights": self.weights.tolist(),
            "prior": None if self.prior is None else self.prior.to_dict(),
        }


class GaussianMixture(MixtureModel):
    """1-D Gaussian components with fixed weights and variances; fits the means."""

    family = GAUSSIAN_MIXTURE

    def __init__(self, weights, variances, prior=None):
        super().__init__(weights, prior)
        var = np.atleast_1d(np.asarray(variances, dtype=float))
        if var.shape != self.weights.shape:
            raise ValueError("need one variance per component")
        if not np.all(var > 0):
            raise ValueError("variances must be positive")
        self.variances = var

    def check_data(self, data):
        x = np.asarray(data, dtype=float).reshape(-1)
        if x.size == 0:
            raise ValueError("dataset is empty")
        if not np.all(np.isfinite(x)):
            raise ValueError("observations must be finite")
        return x

    def complete_data_log_joint(self, data, theta):
        x = np.asarray(data, dtype=float)[:, None]
        d = x - theta[None, :]
        const = self.log_weights - 0.5 * (LOG_2PI + np.log(self.variances))
        return const - d * d / (2.0 * self.variances)

    def _slot_grad(self, data, theta):
        x = np.asarray(data, dtype=float)[:, None]
        return (x - theta[None, :]) / self.variances

    def m_step(self, data, resp):
        x = np.asarray(data, dtype=float)
        num = resp.T @ x / self.variances
        den = resp.sum(axis=0) / self.variances
        if self.prior is not None:
            num = num + self.prior.mean / self.prior.variance
            den = den + 1.0 / self.prior.variance
        elif np.any(den <= 0):
            k = int(np.flatnonzero(den <= 0)[0])
            raise MStepError(f"component {k} has no responsibility mass and the prior is flat")
        return num / den

    def default_init(self, data):
        x = self.check_data(data)
        levels = np.arange(1, self.n_components + 1) / (self.n_components + 1)
        return np.quantile(x, levels)

    def describe(self):
        d = super().describe()
        d["variances"] = self.variances.tolist()
        return d


class CoinMixture(MixtureModel):
    """Mixture of coins with fixed weights; fits each coin's log-odds.

    Records are ``(successes, trials)`` pairs. The likelihood is that of
    the observed flip sequence, without a binomial coefficient.
    """

    family = COIN_MIXTURE

    newton_max_iter = 100

    def check_data(self, data):
        arr = np.asarray(data)
        if arr.size == 0:
            raise ValueError("dataset is empty")
        arr = arr.reshape(-1, 2)
        if not np.all(np.isfinite(arr.astype(float))) or not np.all(arr == np.round(arr)):
            raise ValueError("successes and trials must be integers")
        s, t = arr[:, 0], arr[:, 1]
        if np.any(t < 1):
            raise ValueError("trials must be >= 1")
        if np.any(s < 0) or np.any(s > t):
            raise ValueError("need 0 <= successes <= trials")
        return arr.astype(float)

    def complete_data_log_joint(self, data, theta):
        s = data[:, 0][:, None]
        f = (data[:, 1] - data[:, 0])[:, None]
        z = theta[None, :]
        return self.log_weights + s * dn.log_logistic(z) + f * dn.log_logistic(-z)

    def _slot_grad(self, data, theta):
        s = data[:, 0][:, None]
        t = data[:, 1][:, None]
        return s - t * dn.logistic(theta[None, :])

    def m_step(self, data, resp):
        succ = resp.T @ data[:, 0]
        trials = resp.T @ data[:, 1]
        return np.array([self._maximize_component(k, succ[k], trials[k])
                         for k in range(self.n_components)])

    def _maximize_component(self, k, succ, trials):
        """Newton ascent on the concave per-component auxiliary, with step guards."""
        fail = trials - succ
        if self.prior is None:
            m, inv_v = 0.0, 0.0
            if succ <= 0 or fail <= 0:
                raise MStepError(f"component {k}: maximizer is at infinite log-odds "
                                 "(all-success or all-failure mass with a flat prior)")
        else:
            m, inv_v = self.prior.mean[k], 1.0 / self.prior.variance[k]

        def objective(z):
            return (succ * dn.log_logistic(z) + fail * dn.log_logistic(-z)
                    - 0.5 * inv_v * (z - m) ** 2)

        z = math.log((succ + 0.5) / (fail + 0.5))
        f = objective(z)
        for _ in range(self.newton_max_iter):
            p = 1.0 / (1.0 + math.exp(-z))
            grad = succ - trials * p - inv_v * (z - m)
            hess = -trials * p * (1.0 - p) - inv_v
            step = -grad / hess
            step = max(-5.0, min(5.0, step))
            for _ in range(60):
                z_new = z + step
                f_new = objective(z_new)
                if f_new >= f - 1e-15 * abs(f):
                    break
                step *= 0.5
            z, f = z_new, f_new
            if abs(step) <= 1e-13 * max(1.0, abs(z)):
                return z
        raise MStepError(f"component {k}: Newton iteration did not converge in "
                         f"{self.newton_max_iter} iterations")

    def default_init(self, data):
        K = self.n_components
        return np.linspace(-1.0, 1.0, K) if K > 1 else np.zeros(1)


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)
