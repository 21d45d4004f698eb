"""EM fitting to the MAP mode of ``log P(X, theta)``.

``e_step``, ``log_joint`` are generic over the scalar realization of
``theta`` (see :mod:`emlaplace.diffnum`); everything else works on plain
floats.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import diffnum as dn
from .errors import EmFitError, EmLaplaceError, EStepError

log = logging.getLogger(__name__)

LOGLIK_TOL = "loglik-tol"
PARAM_TOL = "param-tol"
MAX_ITERS = "max-iters"

MONOTONE_SLACK = 1e-10


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 1000
    tol_loglik: float = 1e-13
    tol_param: float = 1e-8

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not (self.tol_loglik > 0 and self.tol_param > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class EmTrace:
    """Iterates ``(index, theta, log_joint)`` starting from the initial point."""

    iterates: list = field(default_factory=list)
    converged: bool = False
    reason: str | None = None

    @property
    def theta(self):
        return self.iterates[-1][1]

    @property
    def log_joint(self):
        return self.iterates[-1][2]

    @property
    def n_iter(self):
        return self.iterates[-1][0]

    def increases(self):
        lj = np.array([it[2] for it in self.iterates])
        return np.diff(lj)


def _component_terms(model, data, theta):
    data = model.check_data(data)
    logp = model.complete_data_log_joint(data, theta)
    vals = dn.value(logp)
    dead = np.flatnonzero(np.all(np.isneginf(vals), axis=1) | np.any(np.isnan(vals), axis=1))
    if dead.size:
        i = int(dead[0])
        raise EStepError(f"record {i}: every component likelihood underflowed", record=i)
    return logp


def e_step(model, data, theta):
    """Responsibilities ``P(H_i = k | x_i, theta)``, shape (N, K).

    Rows are normalized in log space, so they sum to one in the value part
    for any realization of ``theta``.
    """
    logp = _component_terms(model, data, theta)
    return dn.exp(logp - dn.logsumexp(logp, axis=1, keepdims=True))


def log_responsibilities(model, data, theta):
    logp = _component_terms(model, data, theta)
    return logp - dn.logsumexp(logp, axis=1, keepdims=True)


def m_step(model, data, resp):
    resp = np.asarray(resp, dtype=float)
    return np.asarray(model.m_step(model.check_data(data), resp), dtype=float)


def em_step(model, data, theta):
    theta = model.check_theta(theta)
    return m_step(model, data, e_step(model, data, theta))


def log_joint(model, data, theta):
    """``log P(X, theta)``: per-record log-sum-exp over components plus the log prior."""
    logp = _component_terms(model, data, theta)
    return dn.logsumexp(logp, axis=1).sum() + model.log_prior(theta)


def _xlogx_weighted(resp, log_target):
    # 0 * log 0 := 0
    return np.where(resp > 0, resp * log_target, 0.0).sum()


def auxiliary(model, data, theta_prime, theta):
    """EM auxiliary ``A(theta', theta)`` by enumeration over each record's components."""
    theta_prime = model.check_theta(theta_prime)
    theta = model.check_theta(theta)
    log_r = log_responsibilities(model, data, theta_prime)
    r = np.exp(log_r)
    logp = model.complete_data_log_joint(model.check_data(data), theta)
    safe = np.where(r > 0, logp - log_r, 0.0)
    return float((r * safe).sum() + model.log_prior(theta))


def divergence(model, data, theta_prime, theta):
    """KL divergence between the hidden posteriors at ``theta'`` and ``theta``, summed over records."""
    theta_prime = model.check_theta(theta_prime)
    theta = model.check_theta(theta)
    log_rp = log_responsibilities(model, data, theta_prime)
    log_r = log_responsibilities(model, data, theta)
    rp = np.exp(log_rp)
    return float(_xlogx_weighted(rp, np.where(rp > 0, log_rp - log_r, 0.0)))


def em_fit(model, data, theta0, config: EmConfig | None = None) -> EmTrace:
    config = config or EmConfig()
    data = model.check_data(data)
    theta = model.check_theta(theta0).copy()
    trace = EmTrace()
    try:
        lj = float(log_joint(model, data, theta))
    except EmLaplaceError as exc:
        raise EmFitError(f"initial point: {exc}", trace) from exc
    trace.iterates.append((0, theta, lj))

    for it in range(1, config.max_iters + 1):
        try:
            new = em_step(model, data, theta)
            new_lj = float(log_joint(model, data, new))
        except EmLaplaceError as exc:
            raise EmFitError(f"iteration {it}: {exc}", trace) from exc
        if new_lj < lj - MONOTONE_SLACK:
            log.warning("log joint decreased by %.3g at iteration %d", lj - new_lj, it)
        trace.iterates.append((it, new, new_lj))
        step = float(np.max(np.abs(new - theta)))
        gain = new_lj - lj
        theta, lj = new, new_lj
        if step < config.tol_param:
            trace.converged, trace.reason = True, PARAM_TOL
            return trace
        if gain < config.tol_loglik:
            trace.converged, trace.reason = True, LOGLIK_TOL
            return trace

    trace.reason = MAX_ITERS
    return trace
