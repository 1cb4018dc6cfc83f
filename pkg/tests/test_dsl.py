import math

import numpy as np
import pytest

from reeblab import dsl, jets
from reeblab.errors import CriticalMismatchError, DomainError, ParseError, PositionedError
from reeblab.gallery import corpus_files
from reeblab.system import dump_system, load_system, parse_system, structure_key

from fuzzing import fuzz_corpus, mutate


def test_product_of_calls():
    t = dsl.parse_expr("sin(phi)*cos(x)")
    assert t.kind == "bin" and t.value == "*"
    assert [c.kind for c in t.children] == ["call", "call"]
    assert [c.value for c in t.children] == ["sin", "cos"]


def test_nested_evaluation():
    t = dsl.parse_expr("1/2*(Pr^2 - (Pa/r)^2)")
    assert dsl.eval_ast(t, {"Pr": 2.0, "Pa": 0.0, "r": 1.0}) == 2.0
    assert dsl.eval_ast(dsl.parse_expr("x^2+y"), {"x": 3.0, "y": 1.0}) == 10.0


def test_unclosed_call_position():
    with pytest.raises(ParseError) as info:
        dsl.parse_expr("sin(")
    assert (info.value.line, info.value.column) == (1, 5)
    assert "expression" in info.value.expected


@pytest.mark.parametrize("text, col", [("x +* y", 4), ("2x", 2), ("sin x", 5), ("a $ b", 3),
                                       ("(x", 3), ("foo(x)", 1)])
def test_error_columns(text, col):
    with pytest.raises(ParseError) as info:
        dsl.parse_expr(text)
    assert info.value.column == col


def test_precedence():
    assert dsl.eval_ast(dsl.parse_expr("-x^2"), {"x": 3.0}) == -9.0
    assert dsl.eval_ast(dsl.parse_expr("2^3^2"), {}) == 512.0
    assert dsl.eval_ast(dsl.parse_expr("8/2/2"), {}) == 2.0
    assert dsl.eval_ast(dsl.parse_expr("2*pi"), {}) == 2 * math.pi


def test_domain_error_points_at_division():
    text = "1 + 1/sin(x)"
    with pytest.raises(DomainError) as info:
        dsl.eval_ast(dsl.parse_expr(text), {"x": 0.0})
    s, e = info.value.span
    assert text[s:e] == "1/sin(x)"


def test_log_tan_witness_jet():
    j = dsl.eval_ast(dsl.parse_expr("log(tan(x/2))"), {"x": math.pi / 2}, mode="jet2")
    assert abs(j.value) <= 1e-15
    assert j.grad[0] == pytest.approx(1.0, abs=1e-14)


def test_oneform_terms():
    terms = dsl.parse_oneform("sin(phi)*d(x)/sin(x)^1 + cos(phi)*d(y)", critical="sin(x)")
    assert len(terms) == 2
    assert (terms[0].coord, terms[0].m, terms[1].coord, terms[1].m) == ("x", 1, "y", 0)
    smooth = dsl.parse_oneform("d(z) + x*d(y)")
    assert [t.m for t in smooth] == [0, 0]
    assert [t.coord for t in smooth] == ["z", "y"]


def test_oneform_critical_mismatch():
    with pytest.raises(CriticalMismatchError):
        dsl.parse_oneform("d(x)/y^1", critical="sin(x)")


@pytest.mark.parametrize("text", ["d(x)/sin(x)^1.5", "x*y", "d(x)*d(y)", "x/d(y)"])
def test_oneform_rejects(text):
    with pytest.raises(ParseError):
        dsl.parse_oneform(text, critical="sin(x)")


def test_pretty_roundtrip_on_random_asts():
    rng = np.random.default_rng(5)
    leaves = ["x", "y", "2", "0.5", "pi", "1e-3"]
    ops = ["+", "-", "*", "/", "^"]

    def build(depth):
        if depth == 0 or rng.random() < 0.3:
            return str(rng.choice(leaves))
        r = rng.random()
        if r < 0.2:
            return f"-{build(depth - 1)}"
        if r < 0.35:
            return f"{rng.choice(dsl.BUILTIN_FUNCTIONS)}({build(depth - 1)})"
        return f"({build(depth - 1)}){rng.choice(ops)}({build(depth - 1)})"

    for _ in range(300):
        t = dsl.parse_expr(build(4))
        again = dsl.parse_expr(dsl.pretty(t))
        assert again.same(t)


@pytest.mark.parametrize("path", corpus_files(), ids=lambda p: p.stem)
def test_corpus_roundtrip(path):
    spec = load_system(path)
    again = parse_system(dump_system(spec))
    assert structure_key(again) == structure_key(spec)
    for node in [spec.critical] + list(spec.alpha or ()):
        if node is not None:
            assert dsl.parse_expr(dsl.pretty(node), spec.functions).same(node)


def test_compiled_matches_interpreted_bitwise():
    rng = np.random.default_rng(2)
    texts = ["sin(phi)*sin(x)^2 + cos(phi)", "sqrt(1 + x^2)/(2 + cos(y))",
             "exp(-x*y)*atan(x - y) - log(2 + sin(x))", "x^-3 + abs(y)^0.5"]
    for text in texts:
        t = dsl.parse_expr(text)
        coords = ["x", "y", "phi"]
        f = dsl.compile_ast(t, coords)
        for p in rng.uniform(0.1, 2.0, (50, 3)):
            pt = dict(zip(coords, p))
            assert f(*p) == dsl.eval_ast(t, pt)
            a = f(*jets.variables(p))
            b = dsl.eval_ast(t, pt, mode="jet2")
            assert a.value == b.value
            assert np.array_equal(a.grad, b.grad) and np.array_equal(a.hess, b.hess)


def test_expression_fuzz_is_positioned():
    rng = np.random.default_rng(9)
    seeds = ["sin(phi)*d(x)/sin(x)^1 + cos(phi)*d(y)", "-y1*d(x1)/x1^1 + 1/2*d(y1)",
             "1/2*(Pr^2 - (Pa/r)^2)", "exp(-x*y)*atan(x - y)"]
    for _ in range(500):
        text = mutate(seeds[int(rng.integers(0, len(seeds)))], rng)
        try:
            dsl.parse_oneform(text, critical="sin(x)")
        except PositionedError as e:
            assert e.line >= 1 and e.column >= 1


def test_corpus_fuzz_has_no_crashes():
    accepted, positioned, crashes = fuzz_corpus(300, seed=1)
    assert crashes == []
    assert positioned > 0
