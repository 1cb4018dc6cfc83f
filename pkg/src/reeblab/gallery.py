"""Built-in systems and the three-body coordinate pipeline.

Every builtin is rendered from a TOML template and then parsed, so the DSL
and the schema are exercised by the gallery itself.  The rendered defaults
are shipped in ``gallery_files/`` as the parser corpus.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from string import Template

import numpy as np

from . import dsl, jets
from .errors import CollisionError, DomainError, ParamError, UnknownSystemError

DEFAULT_MU = 0.0122771
GALLERY_DIR = Path(__file__).with_name("gallery_files")

# ----------------------------------------------------------------------------
# three-body Hamiltonians, composed from the Cartesian one
# ----------------------------------------------------------------------------

H_CARTESIAN = ("1/2*(p1^2 + p2^2) - (1 - mu)/sqrt((q1 - mu)^2 + q2^2)"
               " - mu/sqrt((q1 + 1 - mu)^2 + q2^2) + p1*q2 - p2*q1")

_POLAR_SUBS = {
    "q1": "r*cos(th)",
    "q2": "r*sin(th)",
    "p1": "Pr*cos(th) - Pa/r*sin(th)",
    "p2": "Pr*sin(th) + Pa/r*cos(th)",
}


def _strip_spans(node):
    return dsl.Node(node.kind, node.value, tuple(_strip_spans(c) for c in node.children))


def polar_hamiltonian_ast():
    cart = dsl.parse_expr(H_CARTESIAN)
    subs = {k: _strip_spans(dsl.parse_expr(v)) for k, v in _POLAR_SUBS.items()}
    return dsl.substitute(cart, subs)


def mcgehee_hamiltonian_ast():
    return dsl.substitute(polar_hamiltonian_ast(), {"r": _strip_spans(dsl.parse_expr("2/x^2"))})


# ----------------------------------------------------------------------------
# templates
# ----------------------------------------------------------------------------

_PERIODIC = '''
[[coordinates]]
name = "$name"
periodic = true
period = "2*pi"
'''

TEMPLATES = {}

TEMPLATES["s1_b"] = '''spec_version = 1
name = "s1_b"
description = "circle with the b-contact form d(phi)/sin(phi)"
critical = "sin(phi)"
order = 1

[[coordinates]]
name = "phi"
periodic = true
period = "2*pi"

[form]
alpha = "1*d(phi)/sin(phi)^1"

[[witness]]
name = "log_tan"
expr = "log(abs(tan(phi/2)))"
rate = "1"
'''

TEMPLATES["t3_bm"] = '''spec_version = 1
name = "t3_bm"
description = "3-torus with a b^m-contact form, m = $m"
critical = "sin(x)"
order = $m

[[coordinates]]
name = "x"
periodic = true
period = "2*pi"

[[coordinates]]
name = "y"
periodic = true
period = "2*pi"

[[coordinates]]
name = "phi"
periodic = true
period = "2*pi"

[form]
alpha = "sin(phi)*d(x)/sin(x)^$m + cos(phi)*d(y)"

[[witness]]
name = "log_tan"
expr = "log(abs(tan(x/2)))"
rate = "sin(phi)*sin(x)^$m1"

[sampling]
off_z_min = 0.05
'''

TEMPLATES["s3_b"] = '''spec_version = 1
name = "s3_b"
description = "unit 3-sphere in R^4 with the b-contact form induced by a Liouville field"
critical = "x1"
order = 1

[[coordinates]]
name = "x1"
range = [-1.05, 1.05]

[[coordinates]]
name = "y1"
range = [-1.05, 1.05]

[[coordinates]]
name = "x2"
range = [-1.05, 1.05]

[[coordinates]]
name = "y2"
range = [-1.05, 1.05]

[form]
decomposition = "-y1*d(x1)/x1^1 + 1/2*d(y1) - 1/2*y2*d(x2) + 1/2*x2*d(y2)"

[hamiltonian]
H = "x1^2 + y1^2 + x2^2 + y2^2"
energy = 1
omega = [{i = "x1", j = "y1", coef = "1/x1"}, {i = "x2", j = "y2", coef = "1"}]
liouville = {x1 = "1/2*x1", y1 = "y1", x2 = "1/2*x2", y2 = "1/2*y2"}

[[witness]]
name = "y1"
expr = "y1"
rate = "2*x1^2/(1 + y1^2)"

[sampling]
off_z_min = 0.05
'''

TEMPLATES["s2s1"] = '''spec_version = 1
name = "s2s1"
description = "S^2 x S^1 minus the poles; the Reeb field vanishes on Z"
critical = "sin(phi)"
order = 1

[[coordinates]]
name = "h"
range = [-0.95, 0.95]

[[coordinates]]
name = "th"
periodic = true
period = "2*pi"

[[coordinates]]
name = "phi"
periodic = true
period = "2*pi"

[form]
alpha = "1*d(phi)/sin(phi)^1 + h*d(th)"

[[witness]]
name = "log_tan"
expr = "log(abs(tan(phi/2)))"
rate = "1"

[sampling]
off_z_min = 0.05

[expect]
reeb_zero_on_z = true
'''

TEMPLATES["trap_chart"] = '''spec_version = 1
name = "trap_chart"
description = "b^$m-contact trap chart around the critical sphere, eps = $eps"
critical = "t"
order = $m

[[coordinates]]
name = "t"
range = [$tlo, $thi]

[[coordinates]]
name = "xi"
range = [-1.0, 1.0]

[[coordinates]]
name = "th"
periodic = true
period = "2*pi"

[form]
alpha = "2*xi*exp(2*t)*fp(t)*d(t) + exp(2*t)*d(xi) + exp(2*t)*d(th)"
decomposition = "2*xi*exp(2*t)*d(t)/t^$m + exp(2*t)*d(xi) + exp(2*t)*d(th)"
valid_within = $half

[profiles.fp]
kind = "trap"
eps = $eps
k = $k

[sampling]
off_z_min = $zmin
'''

TEMPLATES["rpc3bp_cartesian"] = '''spec_version = 1
name = "rpc3bp_cartesian"
description = "restricted planar circular three-body problem, rotating frame, energy level c"
$coords
[params]
mu = $mu

[hamiltonian]
H = "$H"
energy = $c
omega = [{i = "q1", j = "p1", coef = "1"}, {i = "q2", j = "p2", coef = "1"}]
liouville = {p1 = "p1", p2 = "p2"}

[sampling]
require = ["sqrt((q1 - mu)^2 + q2^2) - 0.2", "sqrt((q1 + 1 - mu)^2 + q2^2) - 0.2"]
'''

TEMPLATES["rpc3bp_polar"] = '''spec_version = 1
name = "rpc3bp_polar"
description = "three-body problem in polar coordinates (composed from the Cartesian H)"

[[coordinates]]
name = "r"
range = [2.0, 6.0]
''' + _PERIODIC.replace("$name", "th") + '''
[[coordinates]]
name = "Pr"
range = [-2.0, 2.0]

[[coordinates]]
name = "Pa"
range = [-3.0, 3.0]

[params]
mu = $mu

[hamiltonian]
H = "$H"
energy = $c
omega = [{i = "r", j = "Pr", coef = "1"}, {i = "th", j = "Pa", coef = "1"}]
liouville = {Pr = "Pr", Pa = "Pa"}
'''

_MCGEHEE = '''spec_version = 1
name = "$name"
description = "$desc"
critical = "x"
order = 3

[[coordinates]]
name = "x"
range = [0.0, $xmax]
''' + _PERIODIC.replace("$name", "th") + '''
[[coordinates]]
name = "Pr"
range = [-2.0, 2.0]

[[coordinates]]
name = "Pa"
range = [-3.0, 3.0]

[params]
mu = $mu

[form]
decomposition = "4*Pr*d(x)/x^3 - Pa*d(th)"

[hamiltonian]
H = "$H"
H_on_Z = "1/2*Pr^2 - Pa"
energy = $c
omega = [{i = "x", j = "Pr", coef = "-4/x^3"}, {i = "th", j = "Pa", coef = "1"}]
liouville = {Pr = "Pr", Pa = "Pa"}

[sampling]
off_z_min = 0.05
'''

TEMPLATES["rpc3bp_mcgehee"] = _MCGEHEE
TEMPLATES["rpc3bp_infinity_cylinder"] = _MCGEHEE

TEMPLATES["darboux"] = '''spec_version = 1
name = "darboux"
description = "standard contact form on R^3"

[[coordinates]]
name = "x"

[[coordinates]]
name = "y"

[[coordinates]]
name = "z"

[form]
alpha = "d(z) + x*d(y)"
'''

TEMPLATES["symplectization"] = '''spec_version = 1
name = "symplectization_$inner"
description = "symplectization of $inner with omega = d(exp(s)*alpha)"
$coords
[[coordinates]]
name = "s"
range = [-1.0, 1.0]

[symplectization]
inner = "$inner"
params = $iparams
'''

DEFAULTS = {
    "s1_b": {},
    "t3_bm": {"m": 1},
    "s3_b": {},
    "s2s1": {},
    "trap_chart": {"eps": 0.1, "k": 1},
    "rpc3bp_cartesian": {"mu": DEFAULT_MU, "c": 1.0},
    "rpc3bp_polar": {"mu": DEFAULT_MU, "c": 1.0},
    "rpc3bp_mcgehee": {"mu": DEFAULT_MU, "c": 1.0},
    "rpc3bp_infinity_cylinder": {"mu": DEFAULT_MU, "c": 1.0},
    "darboux": {},
    "symplectization": {"inner": "t3_bm", "inner_params": {"m": 1}},
}

NAMES = tuple(DEFAULTS)

# files in the on-disk corpus: file stem -> (builtin name, params)
CORPUS = {
    "s1_b": ("s1_b", {}),
    "t3_b1": ("t3_bm", {"m": 1}),
    "t3_b2": ("t3_bm", {"m": 2}),
    "s3_b": ("s3_b", {}),
    "s2s1": ("s2s1", {}),
    "trap_chart": ("trap_chart", {}),
    "rpc3bp_cartesian": ("rpc3bp_cartesian", {}),
    "rpc3bp_polar": ("rpc3bp_polar", {}),
    "rpc3bp_mcgehee": ("rpc3bp_mcgehee", {}),
    "rpc3bp_infinity_cylinder": ("rpc3bp_infinity_cylinder", {}),
    "darboux": ("darboux", {}),
    "symplectization_t3": ("symplectization", {}),
}


def _fmt(v):
    return repr(float(v))


def _coords_block(names, ranges):
    out = []
    for n, (lo, hi) in zip(names, ranges):
        out.append(f'\n[[coordinates]]\nname = "{n}"\nrange = [{_fmt(lo)}, {_fmt(hi)}]\n')
    return "".join(out)


def _check_params(name, params):
    allowed = set(DEFAULTS[name])
    for k in params:
        if k not in allowed:
            raise ParamError(f"{name} takes no parameter {k!r} (allowed: {sorted(allowed)})")
    p = dict(DEFAULTS[name])
    p.update(params)
    if "m" in p:
        m = p["m"]
        if isinstance(m, bool) or not float(m).is_integer() or m < 1:
            raise ParamError(f"m must be an integer >= 1, got {m!r}")
        p["m"] = int(m)
    if "k" in p:
        k = p["k"]
        if isinstance(k, bool) or not float(k).is_integer() or k < 1:
            raise ParamError(f"k must be an integer >= 1, got {k!r}")
        p["k"] = int(k)
    if "mu" in p:
        mu = float(p["mu"])
        if not 0.0 <= mu <= 0.5:
            raise ParamError(f"mu must lie in [0, 1/2], got {mu!r}")
        p["mu"] = mu
    if "c" in p:
        c = float(p["c"])
        if not (c > 0.0 and math.isfinite(c)):
            raise ParamError(f"energy c must be positive, got {c!r}")
        p["c"] = c
    if "eps" in p:
        eps = float(p["eps"])
        if not (eps > 0.0 and math.isfinite(eps)):
            raise ParamError(f"eps must be positive, got {eps!r}")
        p["eps"] = eps
    if "inner" in p:
        if p["inner"] not in DEFAULTS or p["inner"] == "symplectization":
            raise ParamError(f"cannot symplectize {p['inner']!r}")
        p["inner_params"] = dict(p.get("inner_params") or {})
    return p


def render(name, params=None):
    """TOML text of builtin ``name`` with ``params``."""
    if name not in TEMPLATES:
        raise UnknownSystemError(f"unknown system {name!r}; known: {', '.join(NAMES)}")
    p = _check_params(name, dict(params or {}))
    t = Template(TEMPLATES[name])
    if name == "t3_bm":
        return t.substitute(m=p["m"], m1=p["m"] - 1)
    if name == "trap_chart":
        eps, k = p["eps"], p["k"]
        return t.substitute(m=2 * k, k=k, eps=_fmt(eps), half=_fmt(eps / 2), tlo=_fmt(-2 * eps),
                            thi=_fmt(2 * eps), zmin=_fmt(eps / 50))
    if name == "rpc3bp_cartesian":
        coords = _coords_block(["q1", "q2", "p1", "p2"], [(-2.5, 2.5)] * 2 + [(-2.5, 2.5)] * 2)
        return t.substitute(coords=coords, mu=_fmt(p["mu"]), c=_fmt(p["c"]),
                            H=dsl.pretty(dsl.parse_expr(H_CARTESIAN)))
    if name == "rpc3bp_polar":
        return t.substitute(mu=_fmt(p["mu"]), c=_fmt(p["c"]), H=dsl.pretty(polar_hamiltonian_ast()))
    if name in ("rpc3bp_mcgehee", "rpc3bp_infinity_cylinder"):
        cyl = name == "rpc3bp_infinity_cylinder"
        desc = ("McGehee chart near the infinity cylinder" if cyl else
                "three-body problem in McGehee coordinates r = 2/x^2 (b^3-symplectic)")
        return t.substitute(name=name, desc=desc, xmax="0.3" if cyl else "1.0",
                            mu=_fmt(p["mu"]), c=_fmt(p["c"]),
                            H=dsl.pretty(mcgehee_hamiltonian_ast()))
    if name == "symplectization":
        inner = builtin(p["inner"], p["inner_params"])
        coords = []
        for c in inner.coords:
            if c.periodic:
                coords.append(f'\n[[coordinates]]\nname = "{c.name}"\nperiodic = true\n'
                              f'period = {_fmt(c.period)}\n')
            else:
                coords.append(f'\n[[coordinates]]\nname = "{c.name}"\n'
                              f'range = [{_fmt(c.range[0])}, {_fmt(c.range[1])}]\n')
        ip = "{" + ", ".join(f"{k} = {v!r}" for k, v in sorted(p["inner_params"].items())) + "}"
        return t.substitute(inner=p["inner"], coords="".join(coords), iparams=ip)
    return t.substitute()


def _freeze(params):
    items = []
    for k, v in sorted((params or {}).items()):
        if isinstance(v, dict):
            v = _freeze(v)
        items.append((k, v))
    return tuple(items)


def _thaw(frozen):
    return {k: (_thaw(v) if isinstance(v, tuple) else v) for k, v in frozen}


@lru_cache(maxsize=64)
def _builtin_cached(name, frozen):
    from .system import parse_system
    text = render(name, _thaw(frozen))
    return parse_system(text, path=f"<builtin {name}>", resolver=builtin)


def builtin(name, params=None, **kwargs):
    """Construct builtin system ``name``; parameters may be given as a dict or keywords."""
    if name not in TEMPLATES:
        if name in CORPUS:
            base, extra = CORPUS[name]
            merged = dict(extra)
            merged.update(params or {})
            merged.update(kwargs)
            return builtin(base, merged)
        raise UnknownSystemError(f"unknown system {name!r}; known: {', '.join(NAMES)}")
    p = dict(params or {})
    p.update(kwargs)
    _check_params(name, p)
    return _builtin_cached(name, _freeze(p))


def corpus_files():
    return sorted(GALLERY_DIR.glob("*.toml"))


def write_corpus(directory=GALLERY_DIR):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for stem, (name, params) in CORPUS.items():
        (directory / f"{stem}.toml").write_text(render(name, params), encoding="utf-8")


# ----------------------------------------------------------------------------
# coordinate transforms
# ----------------------------------------------------------------------------

def _cart_to_polar(q1, q2, p1, p2):
    r = jets.sqrt(q1 * q1 + q2 * q2)
    th = jets.atan2(q2, q1)
    Pr = (q1 * p1 + q2 * p2) / r
    Pa = q1 * p2 - q2 * p1
    return r, th, Pr, Pa


def _polar_to_cart(r, th, Pr, Pa):
    c, s = jets.cos(th), jets.sin(th)
    return r * c, r * s, Pr * c - Pa / r * s, Pr * s + Pa / r * c


def _polar_to_mcgehee(r, th, Pr, Pa):
    if jets.value_of(r) <= 0.0:
        raise DomainError("r must be positive")
    return jets.sqrt(2.0 / r), th, Pr, Pa


def _mcgehee_to_polar(x, th, Pr, Pa):
    if jets.value_of(x) <= 0.0:
        raise DomainError("x must be positive")
    return 2.0 / (x * x), th, Pr, Pa


def _omega_canonical(a, b):
    """Matrix of da_1 ^ db_1 + da_2 ^ db_2 type forms given index pairs."""
    def fn(p):
        W = np.zeros((4, 4))
        for i, j in zip(a, b):
            W[i, j] = 1.0
            W[j, i] = -1.0
        return W
    return fn


def _omega_mcgehee(p):
    x = p[0]
    W = np.zeros((4, 4))
    W[0, 2] = -4.0 / x ** 3
    W[2, 0] = -W[0, 2]
    W[1, 3] = 1.0
    W[3, 1] = -1.0
    return W


@dataclass(frozen=True)
class TransformSpec:
    name: str
    source: tuple
    target: tuple
    forward: object
    inverse: object
    omega_source: object
    omega_target: object

    def apply(self, point, direction="forward"):
        f = self.forward if direction == "forward" else self.inverse
        return np.array([jets.value_of(v) for v in f(*[float(x) for x in point])])

    def jacobian(self, point, direction="forward"):
        f = self.forward if direction == "forward" else self.inverse
        xs = jets.variables(point, 1)
        return np.array([v.grad if isinstance(v, jets.Jet2) else np.zeros(len(xs))
                         for v in f(*xs)])

    def canonicity_residual(self, point):
        """sup |J^T omega_target(F(p)) J - omega_source(p)|."""
        p = np.asarray(point, dtype=float)
        J = self.jacobian(p)
        q = self.apply(p)
        pull = J.T @ self.omega_target(q) @ J
        return float(np.max(np.abs(pull - self.omega_source(p))))


_CART = ("q1", "q2", "p1", "p2")
_POLAR = ("r", "th", "Pr", "Pa")
_MCG = ("x", "th", "Pr", "Pa")


def _compose(f, g):
    return lambda *a: g(*f(*a))


TRANSFORMS = {
    "cartesian_to_polar": TransformSpec(
        "cartesian_to_polar", _CART, _POLAR, _cart_to_polar, _polar_to_cart,
        _omega_canonical((0, 1), (2, 3)), _omega_canonical((0, 1), (2, 3))),
    "polar_to_mcgehee": TransformSpec(
        "polar_to_mcgehee", _POLAR, _MCG, _polar_to_mcgehee, _mcgehee_to_polar,
        _omega_canonical((0, 1), (2, 3)), _omega_mcgehee),
    "cartesian_to_mcgehee": TransformSpec(
        "cartesian_to_mcgehee", _CART, _MCG, _compose(_cart_to_polar, _polar_to_mcgehee),
        _compose(_mcgehee_to_polar, _polar_to_cart),
        _omega_canonical((0, 1), (2, 3)), _omega_mcgehee),
}


def transform(point, spec, direction="forward"):
    if isinstance(spec, str):
        spec = TRANSFORMS[spec]
    return spec.apply(point, direction)


def _to_cartesian(chart, state):
    state = np.asarray(state, dtype=float)
    if chart == "cartesian":
        return state
    if chart == "polar":
        if state[0] <= 0.0:
            raise DomainError("r must be positive")
        return TRANSFORMS["cartesian_to_polar"].apply(state, "inverse")
    if chart == "mcgehee":
        return TRANSFORMS["cartesian_to_mcgehee"].apply(state, "inverse")
    raise ValueError(f"unknown chart {chart!r}")


@lru_cache(maxsize=32)
def _cartesian_H(mu):
    return builtin("rpc3bp_cartesian", {"mu": mu}).f_H


def rpc3bp_hamiltonian(chart, state, mu=DEFAULT_MU):
    """H in the given chart, always evaluated as the Cartesian H of the mapped state."""
    if not 0.0 <= mu <= 0.5:
        raise ParamError("mu must lie in [0, 1/2]")
    state = np.asarray(state, dtype=float)
    if chart == "mcgehee" and state[0] == 0.0:
        return 0.5 * state[2] ** 2 - state[3]
    if chart == "mcgehee" and state[0] < 0.0:
        raise DomainError("x must be positive off the infinity set")
    q1, q2, p1, p2 = _to_cartesian(chart, state)
    d1 = math.hypot(q1 - mu, q2)
    d2 = math.hypot(q1 + 1.0 - mu, q2)
    if d1 < 1e-10 or (d2 < 1e-10):
        raise CollisionError(f"state collides with a primary (distances {d1:.3g}, {d2:.3g})")
    return float(_cartesian_H(float(mu))(q1, q2, p1, p2))


def infinity_cylinder_point(theta, Pr, c):
    if not c > 0:
        raise ParamError("c must be positive")
    return np.array([0.0, float(theta), float(Pr), 0.5 * Pr * Pr - c])


def cylinder_rotation_rate(Pr, c):
    """Angular speed of the Reeb flow on the infinity cylinder, 2/(Pr^2 + 2c)."""
    return 2.0 / (Pr * Pr + 2.0 * c)
