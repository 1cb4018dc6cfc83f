"""Second-order forward-mode jets.

A :class:`Jet2` carries the value, gradient and Hessian of a scalar field at a
point.  Arithmetic and the elementary functions below propagate all three
exactly (up to roundoff).  Every Hessian update is written as a sum of
symmetric terms, so the Hessians stay bitwise symmetric.

The module-level functions (``sin``, ``exp``, ...) dispatch on their argument:
plain numbers go through :mod:`math`, jets through the chain rule.  Values are
always computed with the same ``math`` call in both modes, so a jet's value
matches plain evaluation bit for bit.
"""

import math

import numpy as np

from .errors import DomainError

__all__ = [
    "Jet2", "jet_eval", "variables", "sin", "cos", "tan", "atan", "atan2",
    "exp", "log", "sqrt", "fabs", "power", "value_of",
]


def _finite(x, what):
    if not math.isfinite(x):
        raise DomainError(f"non-finite result in {what}")
    return x


class Jet2:
    """Value, gradient and Hessian of a scalar at a point.

    ``hess`` may be ``None`` for first-order-only propagation (used internally
    by the vector-field evaluators, which never need second derivatives).
    """

    __slots__ = ("value", "grad", "hess")
    __array_priority__ = 1000

    def __init__(self, value, grad, hess=None):
        self.value = float(value)
        self.grad = grad
        self.hess = hess

    # construction -------------------------------------------------------
    @classmethod
    def variable(cls, value, index, n, order=2):
        g = np.zeros(n)
        g[index] = 1.0
        return cls(value, g, np.zeros((n, n)) if order >= 2 else None)

    @classmethod
    def constant(cls, value, n, order=2):
        return cls(value, np.zeros(n), np.zeros((n, n)) if order >= 2 else None)

    @property
    def n(self):
        return self.grad.shape[0]

    @property
    def order(self):
        return 1 if self.hess is None else 2

    def __repr__(self):
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"

    def _lift(self, other):
        if isinstance(other, Jet2):
            return other
        return Jet2(other, np.zeros_like(self.grad),
                    None if self.hess is None else np.zeros_like(self.hess))

    def chain(self, f0, f1, f2):
        """Compose with a scalar function whose value/derivatives at self.value are given."""
        g = f1 * self.grad
        h = None
        if self.hess is not None:
            h = f1 * self.hess + f2 * np.outer(self.grad, self.grad)
        return Jet2(f0, g, h)

    # arithmetic ---------------------------------------------------------
    def __neg__(self):
        return Jet2(-self.value, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(self.value + other, self.grad, self.hess)
        h = None if self.hess is None or other.hess is None else self.hess + other.hess
        return Jet2(self.value + other.value, self.grad + other.grad, h)

    def __radd__(self, other):
        return Jet2(other + self.value, self.grad, self.hess)

    def __sub__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(self.value - other, self.grad, self.hess)
        h = None if self.hess is None or other.hess is None else self.hess - other.hess
        return Jet2(self.value - other.value, self.grad - other.grad, h)

    def __rsub__(self, other):
        return Jet2(other - self.value, -self.grad,
                    None if self.hess is None else -self.hess)

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(self.value * other, self.grad * other,
                        None if self.hess is None else self.hess * other)
        a, b = self, other
        g = a.value * b.grad + b.value * a.grad
        h = None
        if a.hess is not None and b.hess is not None:
            h = (a.value * b.hess + b.value * a.hess
                 + (np.outer(a.grad, b.grad) + np.outer(b.grad, a.grad)))
        return Jet2(a.value * b.value, g, h)

    def __rmul__(self, other):
        return Jet2(other * self.value, other * self.grad,
                    None if self.hess is None else other * self.hess)

    def __truediv__(self, other):
        b = self._lift(other)
        if b.value == 0.0:
            raise DomainError("division by zero")
        a = self
        q = _finite(a.value / b.value, "division")
        g = (a.grad - q * b.grad) / b.value
        h = None
        if a.hess is not None and b.hess is not None:
            h = (a.hess - q * b.hess - (np.outer(b.grad, g) + np.outer(g, b.grad))) / b.value
        return Jet2(q, g, h)

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(self._lift(other), self)


def value_of(x):
    return x.value if isinstance(x, Jet2) else float(x)


# elementary functions -------------------------------------------------------

def sin(x):
    if isinstance(x, Jet2):
        s, c = math.sin(x.value), math.cos(x.value)
        return x.chain(s, c, -s)
    return math.sin(x)


def cos(x):
    if isinstance(x, Jet2):
        s, c = math.sin(x.value), math.cos(x.value)
        return x.chain(c, -s, -c)
    return math.cos(x)


def tan(x):
    v = x.value if isinstance(x, Jet2) else x
    if math.cos(v) == 0.0:
        raise DomainError("tan pole")
    t = _finite(math.tan(v), "tan")
    if isinstance(x, Jet2):
        sec2 = 1.0 + t * t
        return x.chain(t, sec2, 2.0 * t * sec2)
    return t


def atan(x):
    if isinstance(x, Jet2):
        v = x.value
        d = 1.0 / (1.0 + v * v)
        return x.chain(math.atan(v), d, -2.0 * v * d * d)
    return math.atan(x)


def atan2(y, x):
    """Angle of (x, y); jets supported in either argument."""
    if not isinstance(y, Jet2) and not isinstance(x, Jet2):
        if x == 0.0 and y == 0.0:
            raise DomainError("atan2 at the origin")
        return math.atan2(y, x)
    yj = y if isinstance(y, Jet2) else x._lift(y)
    xj = x if isinstance(x, Jet2) else y._lift(x)
    r2 = xj * xj + yj * yj
    if r2.value == 0.0:
        raise DomainError("atan2 at the origin")
    # d atan2 = (x dy - y dx) / r^2; the Hessian is the symmetric part of its gradient
    theta = math.atan2(yj.value, xj.value)
    g = (xj.value * yj.grad - yj.value * xj.grad) / r2.value
    h = None
    if xj.hess is not None and yj.hess is not None:
        num_h = (np.outer(xj.grad, yj.grad) + xj.value * yj.hess
                 - np.outer(yj.grad, xj.grad) - yj.value * xj.hess)
        num_h = 0.5 * (num_h + num_h.T)
        h = (num_h - 0.5 * (np.outer(r2.grad, g) + np.outer(g, r2.grad))) / r2.value
    return Jet2(theta, g, h)


def exp(x):
    v = x.value if isinstance(x, Jet2) else x
    try:
        e = math.exp(v)
    except OverflowError:
        raise DomainError("exp overflow") from None
    if isinstance(x, Jet2):
        return x.chain(e, e, e)
    return e


def log(x):
    v = x.value if isinstance(x, Jet2) else x
    if not v > 0.0:
        raise DomainError("log of non-positive value")
    if isinstance(x, Jet2):
        return x.chain(math.log(v), 1.0 / v, -1.0 / (v * v))
    return math.log(v)


def sqrt(x):
    v = x.value if isinstance(x, Jet2) else x
    if v < 0.0:
        raise DomainError("sqrt of negative value")
    if isinstance(x, Jet2):
        if v == 0.0:
            raise DomainError("sqrt is not differentiable at 0")
        s = math.sqrt(v)
        return x.chain(s, 0.5 / s, -0.25 / (s * v))
    return math.sqrt(v)


def fabs(x):
    if isinstance(x, Jet2):
        if x.value == 0.0:
            raise DomainError("abs is not differentiable at 0")
        sg = 1.0 if x.value > 0.0 else -1.0
        return x.chain(abs(x.value), sg, 0.0)
    return abs(x)


def _int_exponent(e):
    if isinstance(e, Jet2):
        return None
    f = float(e)
    if f.is_integer() and abs(f) <= 1024:
        return int(f)
    return None


def power(x, e):
    """x ** e with integer exponents allowed for any base, real ones for x > 0."""
    if isinstance(e, Jet2) and not np.any(e.grad) and (e.hess is None or not np.any(e.hess)):
        e = e.value
    k = _int_exponent(e)
    if not isinstance(x, Jet2):
        if isinstance(e, Jet2):
            return power(e._lift(x), e)
        if k is not None:
            if x == 0.0 and k < 0:
                raise DomainError("zero to a negative power")
            try:
                return _finite(float(x) ** k, "power")
            except OverflowError:
                raise DomainError("power overflow") from None
        if not x > 0.0:
            raise DomainError("non-positive base with real exponent")
        try:
            return _finite(float(x) ** e, "power")
        except OverflowError:
            raise DomainError("power overflow") from None
    v = x.value
    if isinstance(e, Jet2):
        if not v > 0.0:
            raise DomainError("non-positive base with variable exponent")
        w = e * log(x)
        out = exp(w)
        out.value = _finite(v ** e.value, "power")
        return out
    if k is not None:
        if k == 0:
            return x.chain(1.0, 0.0, 0.0)
        if v == 0.0 and k < 2:
            if k < 0:
                raise DomainError("zero to a negative power")
            return x.chain(0.0, 1.0 if k == 1 else 0.0, 0.0)
        try:
            f0 = _finite(v ** k, "power")
            f1 = _finite(k * v ** (k - 1), "power")
            f2 = _finite(k * (k - 1) * v ** (k - 2), "power") if k != 1 else 0.0
        except (OverflowError, ZeroDivisionError):
            raise DomainError("power overflow") from None
        return x.chain(f0, f1, f2)
    if not v > 0.0:
        raise DomainError("non-positive base with real exponent")
    e = float(e)
    return x.chain(_finite(v ** e, "power"), e * v ** (e - 1.0), e * (e - 1.0) * v ** (e - 2.0))


def variables(p, order=2):
    """Seed jets for the coordinates of ``p``."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    return [Jet2.variable(p[i], i, n, order) for i in range(n)]


def jet_eval(field, p, order=2):
    """Evaluate ``field`` (a callable of n coordinate arguments) as a jet at ``p``.

    Constant results are promoted to jets with zero derivatives.
    """
    xs = variables(p, order)
    out = field(*xs)
    if not isinstance(out, Jet2):
        out = Jet2.constant(out, len(xs), order)
    return out
