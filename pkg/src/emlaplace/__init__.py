"""EM fitting and Laplace approximations for latent-variable mixture models."""

from .diffnum import Dual, DiffStrategy, directional_derivative
from .em import EmConfig, EmTrace, auxiliary, divergence, e_step, em_fit, em_step, log_joint, m_step
from .laplace import LaplacePosterior, grad_log_joint, hessian, hvp, laplace_posterior
from .models import CoinMixture, GaussianMixture, GaussianPrior

__all__ = [
    "CoinMixture", "DiffStrategy", "Dual", "EmConfig", "EmTrace", "GaussianMixture",
    "GaussianPrior", "LaplacePosterior", "auxiliary", "directional_derivative", "divergence",
    "e_step", "em_fit", "em_step", "grad_log_joint", "hessian", "hvp", "laplace_posterior",
    "log_joint", "m_step",
]
