"""Gradient, Hessian and Laplace posterior of ``log P(X, theta)`` at an EM mode.

The gradient is the posterior-weighted complete-data gradient. Because the
responsibilities are recomputed from the same (possibly dual or complex)
``theta``, a directional derivative of :func:`grad_log_joint` yields exact
Hessian-vector products, including the part that flows through the hidden
posterior. The Hessian is assembled one column at a time from those
products.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from . import diffnum as dn
from .em import e_step, log_joint
from .errors import (AsymmetryError, DimensionError, NonFiniteError,
                     NotAtModeError, NotPositiveDefiniteError)

MODE_GRAD_TOL = 1e-6
ASYMMETRY_TOL = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


def grad_log_joint(model, data, theta):
    data = model.check_data(data)
    resp = e_step(model, data, theta)
    g = model.complete_data_grad(data, theta)
    return (resp[:, :, None] * g).sum(axis=(0, 1)) + model.prior_gradient(theta)


def hvp(model, data, theta, v, strategy: dn.DiffStrategy | None = None):
    theta = model.check_theta(theta)
    v = np.asarray(v, dtype=float)
    if v.shape != theta.shape:
        raise DimensionError(f"direction has shape {v.shape}, expected {theta.shape}")
    data = model.check_data(data)
    return dn.directional_derivative(lambda t: grad_log_joint(model, data, t), theta, v, strategy)


def hessian(model, data, theta, strategy: dn.DiffStrategy | None = None, threads: int | None = 1):
    """Hessian of the log joint, one HVP per unit vector, then symmetrized.

    Columns are independent; with ``threads > 1`` they are computed
    concurrently and joined in order, so the result does not depend on the
    thread count.
    """
    theta = model.check_theta(theta)
    data = model.check_data(data)
    n = theta.size
    basis = np.eye(n)

    def column(i):
        return hvp(model, data, theta, basis[i], strategy)

    if threads is not None and threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=min(threads, n)) as pool:
            cols = list(pool.map(column, range(n)))
    else:
        cols = [column(i) for i in range(n)]
    lam = np.column_stack(cols)

    scale = 1.0 + np.max(np.abs(lam))
    asym = np.max(np.abs(lam - lam.T))
    if asym > ASYMMETRY_TOL * scale:
        raise AsymmetryError(f"Hessian asymmetry {asym:.3g} exceeds {ASYMMETRY_TOL:g} x {scale:.3g}; "
                             "gradient and log joint are inconsistent")
    return 0.5 * (lam + lam.T)


@dataclass
class LaplacePosterior:
    mean: np.ndarray
    hessian: np.ndarray
    covariance: np.ndarray
    log_det_neg_lambda: float
    log_joint_at_mode: float
    log_evidence: float
    grad_norm: float


def _cholesky(a):
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(
            f"saddle or degenerate mode: -Hessian is not positive definite (pivot {info - 1})",
            pivot=info - 1)
    if info < 0:
        raise ValueError(f"dpotrf argument {-info} invalid")
    return c


def laplace_posterior(model, data, theta_hat, strategy: dn.DiffStrategy | None = None,
                      threads: int | None = 1, grad_tol: float = MODE_GRAD_TOL) -> LaplacePosterior:
    theta_hat = model.check_theta(theta_hat)
    data = model.check_data(data)
    g = np.asarray(grad_log_joint(model, data, theta_hat), dtype=float)
    gnorm = float(np.max(np.abs(g)))
    if not gnorm <= grad_tol:
        raise NotAtModeError(f"not at mode: gradient max-norm {gnorm:.3g} > {grad_tol:g}")

    lam = hessian(model, data, theta_hat, strategy, threads)
    neg = -lam
    chol = _cholesky(neg)
    n = theta_hat.size
    inv_chol = lapack.dtrtri(chol, lower=1)[0]
    cov = inv_chol.T @ inv_chol
    cov = 0.5 * (cov + cov.T)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    lj = float(log_joint(model, data, theta_hat))
    evidence = lj + 0.5 * n * LOG_2PI - 0.5 * logdet
    for name, arr in (("covariance", cov), ("log evidence", evidence)):
        bad = np.flatnonzero(~np.isfinite(np.ravel(arr)))
        if bad.size:
            raise NonFiniteError(f"non-finite {name}", index=int(bad[0]))
    return LaplacePosterior(theta_hat, lam, cov, logdet, lj, evidence, gnorm)
