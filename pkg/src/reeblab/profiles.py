"""Scalar profile functions usable inside system expressions.

Both profiles are derivatives f' of the smoothing functions used by the trap
chart and by the even-order desingularization.  They accept numbers or jets.
"""

import math

from . import jets
from .errors import DomainError


def smoothstep5(s):
    """C^2 ramp 0 -> 1 on [0, 1]."""
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def trap_fprime(t, eps, k=1):
    """t^(-2k) for |t| <= eps/2, 1 for |t| >= eps, C^2 blend in between."""
    v = jets.value_of(t)
    a = abs(v)
    if a >= eps:
        return 1.0 if not isinstance(t, jets.Jet2) else t.chain(1.0, 0.0, 0.0)
    if v == 0.0:
        raise DomainError("trap profile is singular at t = 0")
    inner = jets.power(t, -2 * k)
    if a <= 0.5 * eps:
        return inner
    s = (jets.fabs(t) - 0.5 * eps) / (0.5 * eps)
    S = smoothstep5(s)
    return (1.0 - S) * inner + S


def desing_coeffs(k):
    c = k * (k + 1) / 2.0
    b = -k * (k + 2.0)
    return 1.0 - b - c, b, c


def desing_fprime(z, eps, k=1):
    """z^(-2k) for |z| >= eps, an even positive quartic inside (C^2 matched)."""
    v = jets.value_of(z)
    if abs(v) >= eps:
        return jets.power(z, -2 * k)
    a, b, c = desing_coeffs(k)
    s = z / eps
    s2 = s * s
    return eps ** (-2 * k) * (a + b * s2 + c * s2 * s2)


def make_profile(kind, eps, k=1):
    eps = float(eps)
    k = int(k)
    if not eps > 0.0 or not math.isfinite(eps):
        raise ValueError("profile eps must be positive")
    if k < 1:
        raise ValueError("profile k must be >= 1")
    if kind == "trap":
        fn = lambda t: trap_fprime(t, eps, k)  # noqa: E731
    elif kind == "desingularize":
        fn = lambda z: desing_fprime(z, eps, k)  # noqa: E731
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    fn.kind, fn.eps, fn.k = kind, eps, k
    return fn
