"""Brute-force reference computations for cross-checking the production paths.

Nothing here calls the model's likelihood code: the per-record,
per-component log joints are transcribed again from the model
hyperparameters, marginals are summed in extended precision, and
derivatives are taken by finite differences. :func:`run_checks` bundles
the comparisons used by ``emlaplace check``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit, log_expit, logsumexp, softmax

from .errors import EmLaplaceError, NonFiniteError, QuadratureError

EPS = np.finfo(float).eps
GRAD_STEP = EPS ** (1.0 / 3.0)
HESS_STEP = EPS ** 0.25


class OracleError(EmLaplaceError):
    pass


def _family(model):
    return model.family


def _records(model, data):
    if _family(model) == "coin-mixture":
        return np.asarray(data, dtype=float).reshape(-1, 2)
    return np.asarray(data, dtype=float).reshape(-1)


def component_log_joints(model, data, theta):
    """Array (N, K) of ``log w_k + log P(x_i | k, theta)``, float64."""
    theta = np.asarray(theta, dtype=float)
    d = _records(model, data)
    logw = np.log(model.weights)
    if _family(model) == "gaussian-mixture":
        var = model.variances
        return (logw - 0.5 * np.log(2 * np.pi * var)
                - (d[:, None] - theta[None, :]) ** 2 / (2 * var))
    s, t = d[:, 0:1], d[:, 1:2]
    return logw + s * log_expit(theta[None, :]) + (t - s) * log_expit(-theta[None, :])


def _log_prior(model, theta):
    if model.prior is None:
        return 0.0
    m, v = model.prior.mean, model.prior.variance
    return float(np.sum(-0.5 * np.log(2 * np.pi * v) - (theta - m) ** 2 / (2 * v)))


def responsibilities(model, data, theta):
    return softmax(component_log_joints(model, data, theta), axis=1)


def _complete_grad_slots(model, data, theta):
    d = _records(model, data)
    if _family(model) == "gaussian-mixture":
        return (d[:, None] - theta[None, :]) / model.variances
    return d[:, 0:1] - d[:, 1:2] * expit(theta[None, :])


def _complete_curv_slots(model, data, theta):
    d = _records(model, data)
    if _family(model) == "gaussian-mixture":
        return np.broadcast_to(-1.0 / model.variances, (d.shape[0], theta.size))
    p = expit(theta[None, :])
    return -d[:, 1:2] * p * (1 - p)


def marginal_by_enumeration(model, data, theta, dps=40):
    """``log P(X, theta)`` by summing component probabilities directly.

    Accumulation is in ``dps``-digit arithmetic; no log-sum-exp.
    """
    theta = np.asarray(theta, dtype=float)
    lp = component_log_joints(model, data, theta)
    with mpmath.workdps(dps):
        total = mpmath.mpf(0)
        for i, row in enumerate(lp):
            s = mpmath.fsum(mpmath.exp(mpmath.mpf(float(v))) for v in row)
            if s == 0 or not mpmath.isfinite(s):
                raise OracleError(f"record {i}: marginal probability is {s}")
            total += mpmath.log(s)
        out = float(total) + _log_prior(model, theta)
    if not math.isfinite(out):
        raise OracleError("marginal overflowed")
    return out


def _check_finite(v, what):
    if not np.isfinite(v):
        raise NonFiniteError(f"non-finite {what} on the difference stencil")
    return v


def fd_gradient(f, theta, step=None):
    theta = np.asarray(theta, dtype=float)
    base = GRAD_STEP if step is None else step
    g = np.empty(theta.size)
    for i in range(theta.size):
        h = base * max(1.0, abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        h = tp[i] - tm[i]
        g[i] = (_check_finite(f(tp), "f") - _check_finite(f(tm), "f")) / h
    return g


def fd_jacobian(f, theta, step=None):
    """Central-difference Jacobian of a vector function; column j is d f / d theta_j."""
    theta = np.asarray(theta, dtype=float)
    base = GRAD_STEP if step is None else step
    cols = []
    for j in range(theta.size):
        h = base * max(1.0, abs(theta[j]))
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        fp, fm = np.asarray(f(tp)), np.asarray(f(tm))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NonFiniteError("non-finite value on the difference stencil")
        cols.append((fp - fm) / (tp[j] - tm[j]))
    return np.stack(cols, axis=-1)


def fd_hessian(f, theta, step=None):
    """Second-order central stencil on ``f`` itself, symmetrized."""
    theta = np.asarray(theta, dtype=float)
    base = HESS_STEP if step is None else step
    n = theta.size
    h = base * np.maximum(1.0, np.abs(theta))
    f0 = _check_finite(f(theta), "f")

    def at(*moves):
        t = theta.copy()
        for i, s in moves:
            t[i] += s * h[i]
        return _check_finite(f(t), "f")

    H = np.empty((n, n))
    for i in range(n):
        H[i, i] = (at((i, 1)) - 2 * f0 + at((i, -1))) / h[i] ** 2
        for j in range(i):
            H[i, j] = (at((i, 1), (j, 1)) - at((i, 1), (j, -1))
                       - at((i, -1), (j, 1)) + at((i, -1), (j, -1))) / (4 * h[i] * h[j])
            H[j, i] = H[i, j]
    return H


def hessian_decomposition(model, data, theta, step=None):
    """Split the Hessian into the auxiliary's Hessian and the posterior-derivative term.

    ``aux`` uses closed-form second derivatives of the complete-data log
    joint (plus the prior's). ``extra[i, j] = sum_{n,k} d_j r_nk * d_i log P(x_n, k)``
    with ``d_j r`` taken by central differences of the responsibilities.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    r = responsibilities(model, data, theta)
    curv = (r * _complete_curv_slots(model, data, theta)).sum(axis=0)
    aux = np.diag(curv)
    if model.prior is not None:
        aux = aux - np.diag(1.0 / model.prior.variance)

    dr = fd_jacobian(lambda t: responsibilities(model, data, t), theta, step)  # (N, K, n)
    grad_slots = _complete_grad_slots(model, data, theta)                   # (N, K)
    extra = np.zeros((n, n))
    for i in range(n):
        # d_i log P(x_n, k) is nonzero only for k == i
        extra[i, :] = (dr[:, i, :] * grad_slots[:, i:i + 1]).sum(axis=0)
    return aux, extra


@dataclass(frozen=True)
class GridSpec:
    center: tuple
    half_width: tuple
    points: int = 100_001


def default_grid(model, data, mode, points=None, n_sd=10.0):
    """Grid of +-``n_sd`` prior standard deviations around ``mode``.

    With a flat prior the width comes from the curvature of the log joint
    at the mode instead.
    """
    mode = np.asarray(mode, dtype=float)
    if model.prior is not None:
        sd = np.sqrt(model.prior.variance)
    else:
        H = fd_hessian(lambda t: marginal_fast(model, data, t), mode)
        sd = np.sqrt(np.diag(np.linalg.inv(-H)))
    if points is None:
        points = 100_001 if mode.size == 1 else 1001
    return GridSpec(tuple(mode.tolist()), tuple((n_sd * sd).tolist()), points)


def marginal_fast(model, data, theta):
    lp = component_log_joints(model, data, theta)
    return float(logsumexp(lp, axis=1).sum()) + _log_prior(model, np.asarray(theta, float))


def _grid_log_joint(model, data, thetas):
    """Log joint at each row of ``thetas`` (M, n), vectorized over the grid."""
    d = _records(model, data)
    logw = np.log(model.weights)
    out = np.empty(thetas.shape[0])
    chunk = max(1, 2_000_000 // (d.shape[0] * thetas.shape[1]))
    for a in range(0, thetas.shape[0], chunk):
        th = thetas[a:a + chunk][:, None, :]  # (m, 1, K)
        if _family(model) == "gaussian-mixture":
            lp = (logw - 0.5 * np.log(2 * np.pi * model.variances)
                  - (d[None, :, None] - th) ** 2 / (2 * model.variances))
        else:
            s = d[None, :, 0:1]
            f = d[None, :, 1:2] - s
            lp = logw + s * log_expit(th) + f * log_expit(-th)
        val = logsumexp(lp, axis=2).sum(axis=1)
        if model.prior is not None:
            m, v = model.prior.mean, model.prior.variance
            val = val + np.sum(-0.5 * np.log(2 * np.pi * v) - (th[:, 0, :] - m) ** 2 / (2 * v), axis=1)
        out[a:a + chunk] = val
    return out


def _log_trapezoid(logf, axes):
    m = np.max(logf)
    vals = np.exp(logf - m)
    for ax in reversed(axes):
        vals = trapezoid(vals, ax, axis=-1)
    if not vals > 0:
        return -np.inf
    return m + math.log(vals)


def quadrature_evidence(model, data, grid: GridSpec, tol=1e-4):
    """log of the trapezoid integral of ``exp(log P(X, theta))`` over ``grid``.

    Raises :class:`QuadratureError` when the estimate from every other grid
    point differs by more than ``tol`` (in log units).
    """
    n = model.n_params
    if n > 2:
        raise OracleError("quadrature oracle supports at most 2 parameters")
    if len(grid.center) != n or len(grid.half_width) != n:
        raise OracleError("grid dimension does not match the model")
    if grid.points < 3 or grid.points % 2 == 0:
        raise QuadratureError("grid needs an odd number of points >= 3")
    axes = [np.linspace(c - w, c + w, grid.points) for c, w in zip(grid.center, grid.half_width)]
    mesh = np.meshgrid(*axes, indexing="ij")
    thetas = np.stack([m.ravel() for m in mesh], axis=1)
    logf = _grid_log_joint(model, data, thetas).reshape((grid.points,) * n)

    full = _log_trapezoid(logf, axes)
    half_idx = (slice(None, None, 2),) * n
    half = _log_trapezoid(logf[half_idx], [a[::2] for a in axes])
    diff = abs(full - half) if np.isfinite(full) and np.isfinite(half) else np.inf
    if diff > tol:
        raise QuadratureError(f"grid too coarse: half-resolution estimate differs by {diff:.3g}")
    return float(full)


def rel_error(a, ref):
    """Max-norm error scaled by ``max(1, max|ref|)``."""
    a, ref = np.asarray(a, dtype=float), np.asarray(ref, dtype=float)
    return float(np.max(np.abs(a - ref)) / max(1.0, float(np.max(np.abs(ref)))))


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float | None  # None: reported for information only

    @property
    def passed(self):
        if self.tolerance is None:
            return True
        return bool(np.isfinite(self.residual) and self.residual <= self.tolerance)

    def to_dict(self):
        return {"name": self.name, "residual": self.residual,
                "tolerance": self.tolerance, "passed": self.passed}


def run_checks(model, data, theta, strategy=None, quadrature=False, perturb_grad=0.0,
               laplace_evidence=None, threads=1):
    """Compare the production paths against the oracles at ``theta``.

    ``perturb_grad`` is added to the production gradient before it is
    compared; it exists to confirm that the check can fail.
    """
    from . import em, laplace

    theta = np.asarray(theta, dtype=float)
    data = model.check_data(data)
    results = []

    lj = float(em.log_joint(model, data, theta))
    results.append(CheckResult("marginal-enumeration",
                               abs(lj - marginal_by_enumeration(model, data, theta)), 1e-10))

    g = np.asarray(laplace.grad_log_joint(model, data, theta), float) + perturb_grad
    g_ref = fd_gradient(lambda t: float(em.log_joint(model, data, t)), theta)
    results.append(CheckResult("gradient-identity", rel_error(g, g_ref), 1e-6))

    results.append(CheckResult(
        "divergence-grad-theta",
        float(np.max(np.abs(fd_gradient(lambda t: em.divergence(model, data, theta, t), theta)))),
        1e-6))
    results.append(CheckResult(
        "auxiliary-grad-theta-prime",
        float(np.max(np.abs(fd_gradient(lambda t: em.auxiliary(model, data, t, theta), theta)))),
        1e-6))
    results.append(CheckResult(
        "divergence-grad-theta-prime",
        float(np.max(np.abs(fd_gradient(lambda t: em.divergence(model, data, t, theta), theta)))),
        1e-6))

    H = laplace.hessian(model, data, theta, strategy, threads)
    H_fd = fd_hessian(lambda t: float(em.log_joint(model, data, t)), theta)
    results.append(CheckResult("hessian-vs-fd", rel_error(H, H_fd), 1e-5))

    aux, extra = hessian_decomposition(model, data, theta)
    results.append(CheckResult("hessian-decomposition", rel_error(aux + extra, H), 1e-5))
    results.append(CheckResult("extra-term-norm", float(np.max(np.abs(extra))), None))

    if quadrature:
        q = quadrature_evidence(model, data, default_grid(model, data, theta))
        results.append(CheckResult("quadrature-log-evidence", q, None))
        if laplace_evidence is not None:
            results.append(CheckResult("laplace-vs-quadrature",
                                       abs(laplace_evidence - q) / abs(q), 0.02))
    return results
