"""N-functions and the linear limit case ``phi(t) = t``.

All methods accept scalars or numpy arrays of nonnegative arguments.
Values that overflow float64 come back as ``+inf``, never NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, NumericalError, ParameterError

__all__ = [
    "NFunction",
    "Linear",
    "ExpMinus",
    "ExpSquare",
    "Power",
    "RawPower",
    "Custom",
    "parse_phi",
]

_SERIES_CUTOFF = 0.1
# 1/k! for k = 2..11 (enough for t < 0.1), used for exp(t) - t - 1 near zero
_INV_FACT = [1.0 / math.factorial(k) for k in range(2, 12)]


def _check(t, what="t"):
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"{what} must be nonnegative, got {t!r}")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


class NFunction:
    """Base class. Subclasses implement the ``_value``/``_deriv``/``_deriv2`` kernels."""

    kind: str = "abstract"

    def eval(self, t):
        arr = _check(t)
        with np.errstate(over="ignore", invalid="ignore"):
            return _out(self._value(arr), t)

    __call__ = eval

    def deriv(self, t):
        arr = _check(t)
        with np.errstate(over="ignore", invalid="ignore"):
            return _out(self._deriv(arr), t)

    def deriv2(self, t):
        arr = _check(t)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return _out(self._deriv2(arr), t)

    def inverse(self, y):
        arr = _check(y, "y")
        if arr.ndim == 0:
            return self._inverse_scalar(float(arr))
        return np.vectorize(self._inverse_scalar, otypes=[float])(arr)

    def _inverse_scalar(self, y: float) -> float:
        return _newton_inverse(self, y)

    def __repr__(self):
        return f"{type(self).__name__}()"


class Linear(NFunction):
    """The limit case ``t``. Not an N-function proper (linear growth)."""

    kind = "linear"

    def _value(self, t):
        return t.copy()

    def _deriv(self, t):
        return np.ones_like(t)

    def _deriv2(self, t):
        return np.zeros_like(t)

    def _inverse_scalar(self, y):
        return y


class ExpMinus(NFunction):
    """``exp(t) - t - 1``."""

    kind = "exp1"

    def _value(self, t):
        out = np.expm1(t)
        out -= t
        small = t < _SERIES_CUTOFF
        if small.any():
            ts = t[small] if out.ndim else np.asarray(t)
            # Horner in place: ts^2 (1/2! + ts (1/3! + ...))
            acc = ts * _INV_FACT[-1]
            for c in _INV_FACT[-2::-1]:
                acc += c
                acc *= ts
            acc *= ts
            if out.ndim:
                out[small] = acc
            else:
                out = acc
        return out

    def _deriv(self, t):
        return np.expm1(t)

    def _deriv2(self, t):
        return np.exp(t)

    def _inverse_scalar(self, y):
        if y == 0.0:
            return 0.0
        if math.isinf(y):
            return math.inf
        # phi(log1p(y) + 1) >= y, so the root lies in [0, log1p(y) + 1]
        hi = math.log1p(y) + 1.0
        return _newton_inverse(self, y, start=min(max(y, math.log1p(y)), hi), hi=hi)


class ExpSquare(NFunction):
    """``exp(t^2) - 1``; overflows to ``inf`` beyond ``t ~ 26.64``."""

    kind = "exp2"

    def _value(self, t):
        return np.expm1(t * t)

    def _deriv(self, t):
        return 2.0 * t * np.exp(t * t)

    def _deriv2(self, t):
        t2 = t * t
        return (2.0 + 4.0 * t2) * np.exp(t2)

    def _inverse_scalar(self, y):
        return math.sqrt(math.log1p(y))


@dataclass(frozen=True)
class RawPower(NFunction):
    """``t^p`` for ``p > 1``."""

    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ParameterError(f"power exponent must exceed 1, got {self.p}")

    kind = "rawpower"

    @property
    def coef(self) -> float:
        return 1.0

    def _value(self, t):
        return self.coef * t ** self.p

    def _deriv(self, t):
        return self.coef * self.p * t ** (self.p - 1)

    def _deriv2(self, t):
        return self.coef * self.p * (self.p - 1) * t ** (self.p - 2)

    def _inverse_scalar(self, y):
        return (y / self.coef) ** (1.0 / self.p)

    def __repr__(self):
        return f"{type(self).__name__}(p={self.p!r})"


@dataclass(frozen=True)
class Power(RawPower):
    """``((p-1)^(p-1) / p^p) t^p``, the normalization under which the
    transport distance agrees with its L^p-type counterpart."""

    kind = "power"

    @property
    def coef(self) -> float:
        p = self.p
        return math.exp((p - 1) * math.log(p - 1) - p * math.log(p))


class Custom(NFunction):
    """User-supplied N-function.

    ``value``, ``deriv`` and ``deriv2`` must accept numpy arrays. Without an
    ``inverse`` the safeguarded Newton inverse is used.
    """

    kind = "custom"

    def __init__(self, value: Callable, deriv: Callable, deriv2: Callable,
                 inverse: Callable | None = None, name: str = "custom"):
        self._v, self._d, self._d2, self._inv = value, deriv, deriv2, inverse
        self.name = name

    def _value(self, t):
        return np.asarray(self._v(t), dtype=np.float64)

    def _deriv(self, t):
        return np.asarray(self._d(t), dtype=np.float64)

    def _deriv2(self, t):
        return np.asarray(self._d2(t), dtype=np.float64)

    def _inverse_scalar(self, y):
        if self._inv is not None:
            return float(self._inv(y))
        return _newton_inverse(self, y)

    def __repr__(self):
        return f"Custom({self.name!r})"


def _newton_inverse(phi: NFunction, y: float, start: float | None = None,
                    hi: float | None = None, rtol: float = 1e-15, max_iter: int = 200) -> float:
    """Solve ``phi(t) = y`` for increasing convex ``phi`` by Newton with a bisection fallback."""
    if y == 0.0:
        return 0.0
    if math.isinf(y):
        return math.inf
    lo = 0.0
    if hi is None:
        hi = max(1.0, y)
        while phi.eval(hi) < y:
            lo, hi = hi, 2.0 * hi
            if hi > 1e300:
                raise NumericalError(f"cannot bracket inverse of {phi!r} at y={y!r}")
    t = min(max(start if start is not None else 0.5 * (lo + hi), lo), hi)
    for _ in range(max_iter):
        f = phi.eval(t) - y
        if f == 0.0:
            return t
        if f > 0:
            hi = t
        else:
            lo = t
        d = phi.deriv(t)
        step_ok = d > 0 and math.isfinite(f)
        nt = t - f / d if step_ok else 0.5 * (lo + hi)
        if not (lo < nt < hi):
            nt = 0.5 * (lo + hi)
        if abs(nt - t) <= rtol * abs(nt) or hi - lo <= rtol * hi:
            return nt
        t = nt
    return t


def parse_phi(spec: str) -> NFunction:
    """CLI names: ``linear``, ``exp1``, ``exp2``, ``power:<p>``, ``rawpower:<p>``."""
    name, _, arg = spec.strip().partition(":")
    name = name.lower()
    simple = {"linear": Linear, "exp1": ExpMinus, "exp2": ExpSquare}
    if name in simple:
        if arg:
            raise ParameterError(f"phi {name!r} takes no argument")
        return simple[name]()
    if name in ("power", "rawpower"):
        try:
            p = float(arg)
        except ValueError:
            raise ParameterError(f"phi {spec!r}: expected {name}:<p>") from None
        return Power(p) if name == "power" else RawPower(p)
    raise ParameterError(f"unknown phi {spec!r}; expected linear, exp1, exp2, power:<p>, rawpower:<p>")
