"""Generic scalars and directional derivatives.

Model code in this package is written once against a small set of
operations (arithmetic, :func:`exp`, :func:`log`, :func:`log1p`,
:func:`sqrt`, :func:`logsumexp`) and is then evaluated with one of three
scalar realizations:

* plain ``float`` numpy arrays,
* ``complex`` numpy arrays carrying a tiny imaginary perturbation
  (complex-step differentiation),
* :class:`Dual` arrays carrying a value and a tangent (forward mode).

Any branching inside model code must look at :func:`value` only, so all
three realizations follow the same control flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, DomainError, NonFiniteError

EPS = np.finfo(float).eps

DUAL = "dual"
COMPLEX_STEP = "complex-step"
CENTRAL_DIFFERENCE = "central-difference"

_KINDS = (DUAL, COMPLEX_STEP, CENTRAL_DIFFERENCE)


class Dual:
    """Array of dual numbers ``value + tangent * eps`` with ``eps**2 = 0``.

    ``value`` and ``tangent`` are float arrays of the same shape; numpy
    broadcasting and basic indexing apply to both.
    """

    __slots__ = ("value", "tangent")
    # numpy defers binary operators to our reflected methods
    __array_ufunc__ = None

    def __init__(self, value, tangent=0.0):
        v = np.asarray(value, dtype=float)
        t = np.asarray(tangent, dtype=float)
        if t.shape != v.shape:
            v, t = np.broadcast_arrays(v, t)
            v, t = v.copy(), t.copy()
        self.value = v
        self.tangent = t

    def __repr__(self):
        return f"Dual({self.value!r}, {self.tangent!r})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __getitem__(self, idx):
        return Dual(self.value[idx], self.tangent[idx])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def reshape(self, *shape):
        return Dual(self.value.reshape(*shape), self.tangent.reshape(*shape))

    def squeeze(self, axis=None):
        return Dual(np.squeeze(self.value, axis=axis), np.squeeze(self.tangent, axis=axis))

    def sum(self, axis=None, keepdims=False):
        return Dual(self.value.sum(axis=axis, keepdims=keepdims),
                    self.tangent.sum(axis=axis, keepdims=keepdims))

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pos__(self):
        return self

    def __add__(self, other):
        v, t = _parts(other)
        return Dual(self.value + v, self.tangent + t)

    __radd__ = __add__

    def __sub__(self, other):
        v, t = _parts(other)
        return Dual(self.value - v, self.tangent - t)

    def __rsub__(self, other):
        v, t = _parts(other)
        return Dual(v - self.value, t - self.tangent)

    def __mul__(self, other):
        v, t = _parts(other)
        return Dual(self.value * v, self.value * t + self.tangent * v)

    __rmul__ = __mul__

    def __truediv__(self, other):
        v, t = _parts(other)
        q = self.value / v
        return Dual(q, (self.tangent - q * t) / v)

    def __rtruediv__(self, other):
        v, t = _parts(other)
        q = v / self.value
        return Dual(q, (t - q * self.tangent) / self.value)

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("Dual exponents are not supported")
        if p == 2:
            return self * self
        return Dual(self.value ** p, p * self.value ** (p - 1) * self.tangent)

    # comparisons see the value part only
    def __lt__(self, other):
        return self.value < value(other)

    def __le__(self, other):
        return self.value <= value(other)

    def __gt__(self, other):
        return self.value > value(other)

    def __ge__(self, other):
        return self.value >= value(other)


def _parts(x):
    if isinstance(x, Dual):
        return x.value, x.tangent
    if np.iscomplexobj(x):
        raise TypeError("cannot mix Dual and complex scalars")
    return np.asarray(x, dtype=float), 0.0


def value(x):
    """Real value part of any scalar realization, as a float array."""
    if isinstance(x, Dual):
        return x.value
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return x.real
    return x.astype(float, copy=False)


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.value)
        return Dual(e, e * x.tangent)
    return np.exp(x)


def _check_positive(x, name):
    if np.any(value(x) <= 0):
        raise DomainError(f"{name} of non-positive value")


def log(x):
    _check_positive(x, "log")
    if isinstance(x, Dual):
        return Dual(np.log(x.value), x.tangent / x.value)
    return np.log(x)


def log1p(x):
    if np.any(value(x) <= -1):
        raise DomainError("log1p of value <= -1")
    if isinstance(x, Dual):
        return Dual(np.log1p(x.value), x.tangent / (1.0 + x.value))
    return np.log1p(x)


def sqrt(x):
    _check_positive(x, "sqrt")
    if isinstance(x, Dual):
        r = np.sqrt(x.value)
        return Dual(r, 0.5 * x.tangent / r)
    return np.sqrt(x)


def logsumexp(x, axis=-1, keepdims=False):
    """log(sum(exp(x))) along ``axis``, shifted by the value-part maximum.

    The shift is a constant, so tangents and imaginary parts pass through
    exactly. A zero sum raises :class:`DomainError`.
    """
    m = np.max(value(x), axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = log(exp(x - m).sum(axis=axis, keepdims=True)) + m
    if keepdims:
        return out
    return out.squeeze(axis) if isinstance(out, Dual) else np.squeeze(out, axis=axis)


def log_logistic(z):
    """log(1 / (1 + exp(-z))), analytic and branch-free for |z| <= 700."""
    return -log1p(exp(-z))


def logistic(z):
    return 1.0 / (1.0 + exp(-z))


@dataclass(frozen=True)
class DiffStrategy:
    """How :func:`directional_derivative` differentiates.

    ``step`` is the complex-step size, or the relative base step for
    central differences (scaled by ``max(1, |x|)``). It is ignored for
    dual numbers.
    """

    kind: str = DUAL
    step: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {_KINDS}")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")

    @property
    def effective_step(self):
        if self.step is not None:
            return self.step
        if self.kind == COMPLEX_STEP:
            return 1e-20
        if self.kind == CENTRAL_DIFFERENCE:
            return EPS ** (1.0 / 3.0)
        return None

    @classmethod
    def from_name(cls, name, step=None):
        aliases = {"dual": DUAL, "complex": COMPLEX_STEP, "complex-step": COMPLEX_STEP,
                   "fd": CENTRAL_DIFFERENCE, "central-difference": CENTRAL_DIFFERENCE}
        try:
            return cls(aliases[name], step)
        except KeyError:
            raise ValueError(f"unknown strategy {name!r}") from None


def directional_derivative(f: Callable, x, v, strategy: DiffStrategy | None = None) -> np.ndarray:
    """Return ``d/da f(x + a v)`` at ``a = 0``.

    ``f`` maps a 1-D parameter array (of any scalar realization) to a 1-D
    array of the same realization.
    """
    strategy = strategy or DiffStrategy()
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.ndim != 1 or x.shape != v.shape:
        raise DimensionError(f"x has shape {x.shape} but direction has shape {v.shape}")

    if strategy.kind == DUAL:
        out = f(Dual(x, v))
        d = out.tangent if isinstance(out, Dual) else np.zeros(np.shape(out))
    elif strategy.kind == COMPLEX_STEP:
        h = strategy.effective_step
        out = f(x + 1j * h * v)
        d = np.imag(out) / h
    else:
        vmax = np.max(np.abs(v)) if v.size else 0.0
        if vmax == 0.0:
            d = np.zeros(np.shape(value(f(x))))
        else:
            # step along a, scaled so each coordinate moves by ~base*max(1,|x_i|)
            h = strategy.effective_step * max(1.0, float(np.max(np.abs(x[v != 0])))) / vmax
            d = (value(f(x + h * v)) - value(f(x - h * v))) / (2.0 * h)

    d = np.atleast_1d(np.asarray(d, dtype=float))
    bad = np.flatnonzero(~np.isfinite(d))
    if bad.size:
        raise NonFiniteError(f"non-finite derivative in component {bad[0]}", index=int(bad[0]))
    return d
