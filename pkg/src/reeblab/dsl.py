"""Expression and one-form grammar.

Scalar expressions::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so ``-x^2`` is
``-(x^2)``.  One-forms are sums of ``coef*d(coord)`` and
``coef*d(coord)/crit^INT`` terms.
"""

import math
import re
from dataclasses import dataclass, field

from . import jets
from .errors import CriticalMismatchError, DomainError, ParseError

BUILTIN_FUNCTIONS = ("sin", "cos", "tan", "atan", "exp", "log", "sqrt", "abs")
CONSTANTS = {"pi": math.pi}

_FUNC_IMPL = {
    "sin": jets.sin, "cos": jets.cos, "tan": jets.tan, "atan": jets.atan,
    "exp": jets.exp, "log": jets.log, "sqrt": jets.sqrt, "abs": jets.fabs,
}

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


@dataclass(frozen=True, eq=False)
class Node:
    kind: str                      # num | var | neg | bin | call | diff
    value: object = None           # float for num, name for var/call/diff, op for bin
    children: tuple = ()
    span: tuple = field(default=(0, 0))

    def key(self):
        """Structure without spans, for equality checks."""
        return (self.kind, self.value, tuple(c.key() for c in self.children))

    def same(self, other):
        return self.key() == other.key()

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def __repr__(self):
        return f"Node({pretty(self)!r})"


def free_vars(node):
    return sorted({n.value for n in node.walk() if n.kind == "var"} - set(CONSTANTS))


def functions_used(node):
    return sorted({n.value for n in node.walk() if n.kind == "call"})


# positions -------------------------------------------------------------------

def line_col(text, offset):
    offset = max(0, min(offset, len(text)))
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


# tokenizer -------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str   # num | ident | op | end
    text: str
    start: int
    end: int


def tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            line, col = line_col(text, pos)
            raise ParseError(f"unexpected character {text[pos]!r}", line, col,
                             (pos, pos + 1), expected=("expression",))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), m.start(), m.end()))
        pos = m.end()
    tokens.append(Token("end", "", len(text), len(text)))
    return tokens


# parser ----------------------------------------------------------------------

class _Parser:
    def __init__(self, text, functions=(), allow_diff=False):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.functions = set(BUILTIN_FUNCTIONS) | set(functions)
        self.allow_diff = allow_diff

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, message, expected, tok=None, cls=ParseError):
        tok = tok or self.tok
        line, col = line_col(self.text, tok.start)
        span = (tok.start, max(tok.end, tok.start))
        raise cls(message, line, col, span, expected=expected)

    def expect_op(self, op):
        if self.tok.kind == "op" and self.tok.text == op:
            t = self.tok
            self.i += 1
            return t
        found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
        self.error(f"unexpected {found}", (repr(op),))

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}", ("operator", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            rhs = self.term()
            node = Node("bin", op, (node, rhs), (node.span[0], rhs.span[1]))
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            rhs = self.unary()
            node = Node("bin", op, (node, rhs), (node.span[0], rhs.span[1]))
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            start = self.tok.start
            self.i += 1
            child = self.unary()
            return Node("neg", None, (child,), (start, child.span[1]))
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.i += 1
            exponent = self.unary()
            return Node("bin", "^", (base, exponent), (base.span[0], exponent.span[1]))
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            v = float(t.text)
            if not math.isfinite(v):
                self.error("numeric literal is not finite", ("finite number",), t)
            return Node("num", v, (), (t.start, t.end))
        if t.kind == "ident":
            self.i += 1
            nxt = self.tok
            if nxt.kind == "op" and nxt.text == "(":
                if t.text == "d" and self.allow_diff:
                    self.i += 1
                    c = self.tok
                    if c.kind != "ident":
                        self.error("d() takes a coordinate name", ("coordinate",))
                    self.i += 1
                    close = self.expect_op(")")
                    return Node("diff", c.text, (), (t.start, close.end))
                if t.text not in self.functions:
                    self.error(f"unknown function {t.text!r}",
                               tuple(sorted(self.functions)), t)
                self.i += 1
                arg = self.expr()
                close = self.expect_op(")")
                return Node("call", t.text, (arg,), (t.start, close.end))
            return Node("var", t.text, (), (t.start, t.end))
        if t.kind == "op" and t.text == "(":
            self.i += 1
            inner = self.expr()
            self.expect_op(")")
            return inner
        found = "end of input" if t.kind == "end" else repr(t.text)
        self.error(f"unexpected {found}", ("expression",))


def parse_expr(text, functions=()):
    """Parse a scalar expression; ``functions`` names extra callable profiles."""
    if not isinstance(text, str):
        raise ParseError("expression must be a string", 1, 1, (0, 0), expected=("string",))
    return _Parser(text, functions).parse()


# pretty printing -------------------------------------------------------------

def _fmt_num(v):
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(node):
    if node.kind == "bin":
        return _PREC[node.value]
    if node.kind == "neg":
        return _PREC["neg"]
    if node.kind == "num" and node.value < 0:
        return _PREC["neg"]
    return 5


def pretty(node):
    k = node.kind
    if k == "num":
        return _fmt_num(node.value)
    if k == "var":
        return node.value
    if k == "diff":
        return f"d({node.value})"
    if k == "call":
        return f"{node.value}({pretty(node.children[0])})"
    if k == "neg":
        c = node.children[0]
        s = pretty(c)
        return "-" + (f"({s})" if _prec(c) < _PREC["neg"] else s)
    op = node.value
    a, b = node.children
    p = _PREC[op]
    sa, sb = pretty(a), pretty(b)
    if op == "^":
        if _prec(a) <= p:
            sa = f"({sa})"
        if _prec(b) < _PREC["neg"]:
            sb = f"({sb})"
        return f"{sa}^{sb}"
    if _prec(a) < p:
        sa = f"({sa})"
    if _prec(b) <= p:
        sb = f"({sb})"
    return f"{sa} {op} {sb}" if p == 1 else f"{sa}*{sb}" if op == "*" else f"{sa}/{sb}"


# evaluation ------------------------------------------------------------------

def _div(a, b):
    if isinstance(a, jets.Jet2) or isinstance(b, jets.Jet2):
        return a / b
    if b == 0.0:
        raise DomainError("division by zero")
    q = a / b
    if not math.isfinite(q):
        raise DomainError("non-finite result in division")
    return q


_pow = jets.power


def _mul(a, b):
    return a * b


def eval_ast(node, point, mode="value", params=None, functions=None):
    """Evaluate ``node`` with coordinates bound by ``point`` (a name -> value mapping).

    In ``"jet2"`` mode every coordinate in ``point`` is seeded as a jet variable
    in mapping order and a :class:`~reeblab.jets.Jet2` is returned.  Parameters
    are plain constants in both modes.
    """
    if mode not in ("value", "jet2"):
        raise ValueError(f"unknown mode {mode!r}")
    env = dict(CONSTANTS)
    env.update(params or {})
    names = list(point)
    if mode == "jet2":
        xs = jets.variables([point[n] for n in names])
        env.update(zip(names, xs))
    else:
        env.update({n: float(point[n]) for n in names})
    funcs = dict(_FUNC_IMPL)
    funcs.update(functions or {})
    out = _eval(node, env, funcs)
    if mode == "jet2" and not isinstance(out, jets.Jet2):
        out = jets.Jet2.constant(out, len(names))
    return out


def _eval(node, env, funcs):
    k = node.kind
    if k == "num":
        return node.value
    if k == "var":
        try:
            return env[node.value]
        except KeyError:
            raise DomainError(f"unbound variable {node.value!r}", node.span) from None
    try:
        if k == "neg":
            return -_eval(node.children[0], env, funcs)
        if k == "call":
            arg = _eval(node.children[0], env, funcs)
            return funcs[node.value](arg)
        if k == "bin":
            a = _eval(node.children[0], env, funcs)
            b = _eval(node.children[1], env, funcs)
            op = node.value
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                return _div(a, b)
            return _pow(a, b)
    except DomainError as e:
        if e.span is None:
            e.span = node.span
        raise
    raise ValueError(f"cannot evaluate node kind {k!r}")


def to_python(node, argmap, params=None):
    """Python source for ``node``; ``argmap`` maps coordinate names to argument names."""
    params = params or {}

    def emit(n):
        k = n.kind
        if k == "num":
            return repr(n.value)
        if k == "var":
            if n.value in argmap:
                return argmap[n.value]
            if n.value in params:
                return repr(float(params[n.value]))
            if n.value in CONSTANTS:
                return repr(CONSTANTS[n.value])
            raise DomainError(f"unbound variable {n.value!r}", n.span)
        if k == "neg":
            return f"(-{emit(n.children[0])})"
        if k == "call":
            return f"_f_{n.value}({emit(n.children[0])})"
        if k == "bin":
            a, b = emit(n.children[0]), emit(n.children[1])
            op = n.value
            if op in "+-*":
                return f"({a} {op} {b})"
            if op == "/":
                return f"_div({a}, {b})"
            return f"_pow({a}, {b})"
        raise ValueError(f"cannot compile node kind {k!r}")

    return emit(node)


def compile_ast(node, coords, params=None, functions=None):
    """Compile to a callable of the coordinates (numbers or jets, positionally).

    The compiled function performs the same operations in the same order as
    :func:`eval_ast`, so both agree bitwise.
    """
    argmap = {c: f"_x{i}" for i, c in enumerate(coords)}
    src = to_python(node, argmap, params)
    ns = {"_div": _div, "_pow": _pow}
    funcs = dict(_FUNC_IMPL)
    funcs.update(functions or {})
    for name, fn in funcs.items():
        ns[f"_f_{name}"] = fn
    code = f"lambda {', '.join(argmap.values())}: {src}"
    fn = eval(compile(code, "<reeblab-expr>", "eval"), ns)
    fn.source = pretty(node)
    return fn


def substitute(node, mapping):
    """Replace variables by ASTs (exact composition)."""
    if node.kind == "var" and node.value in mapping:
        return mapping[node.value]
    if not node.children:
        return node
    return Node(node.kind, node.value,
                tuple(substitute(c, mapping) for c in node.children), node.span)


def num(v):
    return Node("num", float(v))


def var(name):
    return Node("var", name)


# one-forms -------------------------------------------------------------------

@dataclass(frozen=True)
class OneFormTerm:
    coef: Node
    coord: str
    m: int = 0                 # 0 for smooth terms
    base: Node = None          # denominator base of singular terms
    span: tuple = (0, 0)

    @property
    def singular(self):
        return self.m > 0


def _contains_diff(node):
    return any(n.kind == "diff" for n in node.walk())


def _signed_terms(node, sign=1):
    if node.kind == "bin" and node.value in "+-" and _contains_diff(node):
        left = _signed_terms(node.children[0], sign)
        right = _signed_terms(node.children[1], sign if node.value == "+" else -sign)
        return left + right
    if node.kind == "neg" and _contains_diff(node):
        return _signed_terms(node.children[0], -sign)
    return [(sign, node)]


def parse_oneform(text, critical=None, functions=()):
    """Parse ``coef*d(c) [/ crit^INT]`` sums into :class:`OneFormTerm` records.

    ``critical`` (an AST or expression text) is the declared critical function;
    singular denominators must match it structurally.
    """
    if isinstance(critical, str):
        critical = parse_expr(critical, functions)
    p = _Parser(text, functions, allow_diff=True)
    tree = p.parse()
    terms = []
    shape = ("<expr>*d(<coord>)", "<expr>*d(<coord>)/<crit>^<int>")

    def bad(node, msg):
        line, col = line_col(text, node.span[0])
        raise ParseError(msg, line, col, node.span, expected=shape)

    for sign, t in _signed_terms(tree):
        whole = t
        m, base = 0, None
        if t.kind == "bin" and t.value == "/" and _contains_diff(t.children[0]):
            den = t.children[1]
            if _contains_diff(den):
                bad(den, "d() may not appear in a denominator")
            if not (den.kind == "bin" and den.value == "^"
                    and den.children[1].kind == "num"):
                bad(den, "singular denominator must be <crit>^<int>")
            e = den.children[1].value
            if not (float(e).is_integer() and e >= 1):
                bad(den.children[1], "singular order must be a positive integer")
            m, base = int(e), den.children[0]
            t = t.children[0]
        while t.kind == "neg":
            sign, t = -sign, t.children[0]
        if t.kind == "diff":
            coef, d = num(1.0), t
        elif t.kind == "bin" and t.value == "*" and t.children[1].kind == "diff":
            coef, d = t.children[0], t.children[1]
            if _contains_diff(coef):
                bad(coef, "coefficient may not contain d()")
        else:
            if not _contains_diff(t):
                bad(t, "term has no d(<coord>) factor")
            bad(t, "malformed one-form term")
        if sign < 0:
            coef = Node("neg", None, (coef,), coef.span)
        if base is not None and critical is not None and not base.same(critical):
            line, col = line_col(text, base.span[0])
            raise CriticalMismatchError(
                f"singular denominator {pretty(base)!r} differs from the critical "
                f"function {pretty(critical)!r}", line, col, base.span,
                expected=(pretty(critical),))
        if base is not None and critical is None:
            line, col = line_col(text, base.span[0])
            raise CriticalMismatchError("singular term but no critical function declared",
                                        line, col, base.span)
        terms.append(OneFormTerm(coef, d.value, m, base, whole.span))
    return terms


def pretty_oneform(terms):
    parts = []
    for t in terms:
        s = f"{_paren_coef(t.coef)}*d({t.coord})"
        if t.singular:
            b = pretty(t.base)
            if _prec(t.base) <= _PREC["^"]:
                b = f"({b})"
            s += f"/{b}^{t.m}"
        parts.append(s)
    return " + ".join(parts)


def _paren_coef(c):
    s = pretty(c)
    return f"({s})" if _prec(c) < _PREC["*"] else s
