import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reeblab import jets
from reeblab.errors import DomainError
from reeblab.jets import Jet2


def fd_grad_hess(f, p, h=1e-4):
    p = np.asarray(p, dtype=float)
    n = len(p)
    g = np.zeros(n)
    H = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g[i] = (f(*(p + e)) - f(*(p - e))) / (2 * h)
        for j in range(n):
            d = np.zeros(n)
            d[j] = h
            H[i, j] = (f(*(p + e + d)) - f(*(p + e - d)) - f(*(p - e + d))
                       + f(*(p - e - d))) / (4 * h * h)
    return g, H


def test_product_of_sines_exact():
    x, y = jets.variables([0.3, 1.1])
    f = jets.sin(x) * jets.cos(y)
    assert f.value == pytest.approx(math.sin(0.3) * math.cos(1.1), abs=1e-15)
    assert np.allclose(f.grad, [math.cos(0.3) * math.cos(1.1), -math.sin(0.3) * math.sin(1.1)],
                       atol=1e-15)
    H = [[-math.sin(0.3) * math.cos(1.1), -math.cos(0.3) * math.sin(1.1)],
         [-math.cos(0.3) * math.sin(1.1), -math.sin(0.3) * math.cos(1.1)]]
    assert np.allclose(f.hess, H, atol=1e-15)


@pytest.mark.parametrize("fn, p", [
    (lambda x, y: jets.atan2(y, x), (0.7, -0.4)),
    (lambda x, y: jets.exp(x * y) / (1 + x * x), (0.2, 0.9)),
    (lambda x, y: jets.sqrt(x * x + y * y + 1), (1.5, -2.0)),
    (lambda x, y: jets.log(x) * jets.tan(y), (2.0, 0.3)),
    (lambda x, y: jets.power(x, 2.5) - jets.power(y, -3), (1.3, 0.8)),
    (lambda x, y: jets.atan(x - y) * jets.fabs(y), (0.1, -0.5)),
    (lambda x, y: jets.power(x, y), (1.7, 0.6)),
])
def test_against_finite_differences(fn, p):
    j = jets.jet_eval(fn, p)
    g, H = fd_grad_hess(lambda a, b: jets.value_of(fn(a, b)), p)
    assert np.allclose(j.grad, g, rtol=1e-7, atol=1e-8)
    assert np.allclose(j.hess, H, rtol=1e-5, atol=1e-6)
    assert np.allclose(j.hess, j.hess.T, atol=1e-14)


def test_first_order_mode_skips_hessian():
    xs = jets.variables([0.5, 0.2], order=1)
    f = jets.sin(xs[0]) * xs[1] + 3.0
    assert f.hess is None
    assert np.allclose(f.grad, [math.cos(0.5) * 0.2, math.sin(0.5)])


@pytest.mark.parametrize("fn, p", [
    (lambda x: x / (x - x), [1.0]),
    (lambda x: jets.log(x - 1.0), [1.0]),
    (lambda x: jets.sqrt(x), [0.0]),
    (lambda x: jets.fabs(x), [0.0]),
    (lambda x: jets.exp(x), [1000.0]),
    (lambda x: jets.power(x, -1), [0.0]),
    (lambda x: jets.power(x, 0.5), [-1.0]),
])
def test_domain_errors(fn, p):
    with pytest.raises(DomainError):
        jets.jet_eval(fn, p)


def test_plain_numbers_pass_through():
    assert jets.sin(0.5) == math.sin(0.5)
    assert jets.power(2.0, 10) == 1024.0
    assert jets.value_of(Jet2.constant(3.0, 2)) == 3.0


small = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(small, small, small)
def test_product_rule(a, b, c):
    x, y, z = jets.variables([a, b, c])
    f = jets.sin(x) + y * z
    g = jets.cos(y) * x + z
    fg = f * g
    assert np.allclose(fg.grad, f.value * g.grad + g.value * f.grad, atol=1e-12)
    expect = (f.value * g.hess + g.value * f.hess + np.outer(f.grad, g.grad)
              + np.outer(g.grad, f.grad))
    assert np.allclose(fg.hess, expect, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(small, small)
def test_chain_rule_exp_log(a, b):
    x, y = jets.variables([a, b])
    inner = x * x + y * y + 1.0
    f = jets.log(jets.exp(inner))
    assert np.allclose(f.grad, inner.grad, atol=1e-12)
    assert np.allclose(f.hess, inner.hess, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.1, max_value=3.0), st.integers(min_value=-4, max_value=5))
def test_integer_power_matches_repeated_product(a, k):
    (x,) = jets.variables([a])
    p = jets.power(x, k)
    q = Jet2.constant(1.0, 1)
    for _ in range(abs(k)):
        q = q * x
    if k < 0:
        q = 1.0 / q
    assert p.value == pytest.approx(q.value, rel=1e-12)
    assert p.grad[0] == pytest.approx(q.grad[0], rel=1e-10, abs=1e-12)
    assert p.hess[0, 0] == pytest.approx(q.hess[0, 0], rel=1e-9, abs=1e-12)
