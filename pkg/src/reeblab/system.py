"""System definitions: the ``SystemSpec`` type and its TOML loader.

A system file looks like::

    spec_version = 1
    name = "t3_bm"
    critical = "sin(x)"
    order = 1

    [[coordinates]]
    name = "x"
    periodic = true
    period = "2*pi"

    [form]
    alpha = "sin(phi)*d(x)/sin(x)^1 + cos(phi)*d(y)"

See the README for every table and key.
"""

import hashlib
import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import dsl, jets
from .errors import (DomainError, ParseError, PositionedError,
                     SchemaError, ValidationError)
from .forms import SingularOneForm
from .profiles import make_profile

SPEC_VERSION = 1
DEFAULT_RANGE = (-1.0, 1.0)


@dataclass(frozen=True)
class Coordinate:
    name: str
    periodic: bool = False
    period: float = None
    range: tuple = DEFAULT_RANGE

    def box(self):
        if self.periodic:
            return (0.0, self.period)
        return self.range


@dataclass(frozen=True)
class Decomposition:
    """u * d(x_direction) / crit^m + sum_j beta_j d(x_j)."""
    u: dsl.Node
    direction: int
    beta: tuple
    valid_within: float = None


@dataclass(frozen=True)
class Hamiltonian:
    H: dsl.Node
    H_on_Z: dsl.Node = None
    energy: float = None
    omega: tuple = ()          # (i, j, coef Node) meaning coef * dx_i ^ dx_j
    liouville: tuple = None    # one Node per coordinate


@dataclass(frozen=True)
class Witness:
    name: str
    expr: dsl.Node
    rate: dsl.Node = None
    domain: str = "off_z"


@dataclass(frozen=True, eq=False)
class SystemSpec:
    name: str
    coords: tuple
    params: dict = field(default_factory=dict)
    critical: dsl.Node = None
    order: int = 0
    alpha: tuple = None                 # ambient coefficient ASTs, one per coordinate
    decomposition: Decomposition = None
    hamiltonian: Hamiltonian = None
    witnesses: tuple = ()
    profiles: dict = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    symplectization: object = None      # inner SystemSpec when this is a symplectization
    description: str = ""
    source: str = ""

    # basic facts -----------------------------------------------------------
    @property
    def dim(self):
        return len(self.coords)

    @property
    def names(self):
        return tuple(c.name for c in self.coords)

    @property
    def is_level_set(self):
        return self.hamiltonian is not None and self.hamiltonian.energy is not None

    @property
    def manifold_dim(self):
        return self.dim - 1 if self.is_level_set else self.dim

    @property
    def has_critical(self):
        return self.critical is not None

    @property
    def energy(self):
        return None if self.hamiltonian is None else self.hamiltonian.energy

    def index(self, name):
        return self.names.index(name)

    @cached_property
    def spec_hash(self):
        return hashlib.sha256(self.source.encode()).hexdigest()

    @cached_property
    def periods(self):
        return np.array([c.period if c.periodic else 0.0 for c in self.coords])

    # compiled fields -------------------------------------------------------
    @cached_property
    def functions(self):
        return {name: make_profile(**spec) for name, spec in self.profiles.items()}

    def compile(self, node):
        return dsl.compile_ast(node, self.names, self.params, self.functions)

    @cached_property
    def f_crit(self):
        return None if self.critical is None else self.compile(self.critical)

    @cached_property
    def f_alpha(self):
        return None if self.alpha is None else [self.compile(a) for a in self.alpha]

    @cached_property
    def singular_form(self):
        d = self.decomposition
        if d is None:
            return None
        return SingularOneForm(self.order, self.f_crit, self.compile(d.u), d.direction,
                               [self.compile(b) for b in d.beta], self.f_alpha)

    @cached_property
    def f_u(self):
        return None if self.decomposition is None else self.compile(self.decomposition.u)

    @cached_property
    def f_beta(self):
        if self.decomposition is None:
            return None
        return [self.compile(b) for b in self.decomposition.beta]

    @cached_property
    def f_H(self):
        return None if self.hamiltonian is None else self.compile(self.hamiltonian.H)

    @cached_property
    def f_H_on_Z(self):
        h = self.hamiltonian
        if h is None:
            return None
        return self.compile(h.H_on_Z if h.H_on_Z is not None else h.H)

    @cached_property
    def f_liouville(self):
        h = self.hamiltonian
        if h is None or h.liouville is None:
            return None
        return [self.compile(y) for y in h.liouville]

    @cached_property
    def f_omega(self):
        h = self.hamiltonian
        if h is None:
            return None
        return [(i, j, self.compile(c)) for i, j, c in h.omega]

    @cached_property
    def f_witnesses(self):
        out = {}
        for w in self.witnesses:
            out[w.name] = (self.compile(w.expr), None if w.rate is None else self.compile(w.rate))
        return out

    # pointwise helpers -------------------------------------------------------
    def z(self, p):
        if self.f_crit is None:
            return None
        return jets.value_of(self.f_crit(*p))

    def z_jet(self, p, order=1):
        return jets.jet_eval(self.f_crit, p, order)

    def H_jet(self, p, on_z=False, order=1):
        f = self.f_H_on_Z if on_z else self.f_H
        return jets.jet_eval(f, p, order)

    def decomposition_valid(self, p):
        d = self.decomposition
        if d is None:
            return False
        if d.valid_within is None:
            return True
        return abs(self.z(p)) <= d.valid_within

    def omega_matrix(self, p):
        W = np.zeros((self.dim, self.dim))
        for i, j, f in self.f_omega:
            c = jets.value_of(f(*p))
            W[i, j] += c
            W[j, i] -= c
        return W

    def wrap_delta(self, p, q):
        """q - p with periodic components reduced to (-period/2, period/2]."""
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        per = self.periods
        mask = per > 0
        d[mask] = d[mask] - per[mask] * np.round(d[mask] / per[mask])
        return d

    def distance(self, p, q):
        return float(np.linalg.norm(self.wrap_delta(p, q)))

    def wrap(self, p):
        p = np.array(p, dtype=float)
        per = self.periods
        mask = per > 0
        p[mask] = np.mod(p[mask], per[mask])
        return p

    def point(self, text_or_values):
        """Parse a point given as "a, b, c" (DSL expressions) or a sequence."""
        if isinstance(text_or_values, str):
            parts = [s for s in text_or_values.split(",")]
            vals = [float(dsl.eval_ast(dsl.parse_expr(s), {}, params=self.params))
                    for s in parts]
        else:
            vals = [float(v) for v in text_or_values]
        if len(vals) != self.dim:
            raise ValueError(f"{self.name} needs {self.dim} coordinates, got {len(vals)}")
        return np.array(vals)

    def __repr__(self):
        return f"SystemSpec({self.name!r}, coords={self.names})"


# ----------------------------------------------------------------------------
# loading
# ----------------------------------------------------------------------------

_TOML_POS = re.compile(r"line (\d+), column (\d+)")


def _offset_of(text, line, col):
    lines = text.split("\n")
    line = max(1, min(line, len(lines)))
    return sum(len(s) + 1 for s in lines[:line - 1]) + max(0, col - 1)


class _Locator:
    """Best-effort mapping from TOML key paths and string values to positions."""

    def __init__(self, source, path=None):
        self.source = source
        self.path = path

    def key(self, *keys):
        src = self.source
        offset = 0
        for k in keys:
            if isinstance(k, int):
                continue
            m = re.compile(r"(^|[\s{,.\[])" + re.escape(str(k)) + r"\s*[=\].]", re.M).search(src, offset)
            if m is None:
                break
            offset = m.start() + len(m.group(1))
        return offset

    def string(self, value, *keys):
        start = self.key(*keys)
        for q in ('"', "'"):
            i = self.source.find(q + value + q, start)
            if i >= 0:
                return i + 1
        i = self.source.find(value, start)
        return i if i >= 0 else start

    def error(self, cls, message, keys, offset=None, length=1):
        if offset is None:
            offset = self.key(*keys)
        line, col = dsl.line_col(self.source, offset)
        where = ".".join(str(k) for k in keys)
        msg = f"{where}: {message}" if where else message
        return cls(msg, line, col, (offset, offset + length), path=self.path)


def _fieldpath(keys):
    return ".".join(str(k) for k in keys)


class _Builder:
    def __init__(self, doc, source, path, resolver):
        self.doc = doc
        self.loc = _Locator(source, path)
        self.source = source
        self.path = path
        self.resolver = resolver
        self.names = ()
        self.params = {}
        self.function_names = ()
        self.critical = None

    # errors --------------------------------------------------------------
    def schema(self, message, *keys):
        return self.loc.error(SchemaError, message, keys)

    def invalid(self, message, *keys, offset=None, length=1):
        return self.loc.error(ValidationError, message, keys, offset, length)

    def require(self, table, key, *keys):
        if not isinstance(table, dict) or key not in table:
            raise self.loc.error(SchemaError, f"missing required key {key!r}", keys or (key,))
        return table[key]

    def _reposition(self, err, text, keys):
        base = self.loc.string(text, *keys)
        start = base + err.span[0]
        end = base + err.span[1]
        line, col = dsl.line_col(self.source, start)
        cls = type(err)
        new = cls.__new__(cls)
        msg = f"{_fieldpath(keys)}: {err.message}"
        if isinstance(err, ParseError):
            ParseError.__init__(new, msg, line, col, (start, end), (), self.path)
            new.expected = err.expected
        else:
            PositionedError.__init__(new, msg, line, col, (start, end), self.path)
        return new

    def expr(self, text, *keys):
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            return dsl.num(text)
        if not isinstance(text, str):
            raise self.invalid("expected an expression string", *keys)
        try:
            node = dsl.parse_expr(text, self.function_names)
        except ParseError as e:
            raise self._reposition(e, text, keys) from None
        self.check_names(node, text, keys)
        return node

    def oneform(self, text, *keys):
        if not isinstance(text, str):
            raise self.invalid("expected a one-form string", *keys)
        try:
            terms = dsl.parse_oneform(text, self.critical, self.function_names)
        except ParseError as e:
            raise self._reposition(e, text, keys) from None
        base = self.loc.string(text, *keys)
        for t in terms:
            if t.coord not in self.names:
                raise self.invalid(f"d({t.coord}) names an undeclared coordinate",
                                   *keys, offset=base + t.span[0], length=t.span[1] - t.span[0])
            self.check_names(t.coef, text, keys)
        return terms

    def check_names(self, node, text, keys):
        allowed = set(self.names) | set(self.params) | set(dsl.CONSTANTS)
        for n in node.walk():
            if n.kind == "var" and n.value not in allowed:
                base = self.loc.string(text, *keys)
                raise self.invalid(f"undeclared variable {n.value!r}", *keys,
                                   offset=base + n.span[0], length=max(1, n.span[1] - n.span[0]))

    def number(self, v, *keys, positive=False):
        if isinstance(v, bool):
            raise self.invalid("expected a number", *keys)
        if isinstance(v, str):
            node = self.expr(v, *keys)
            try:
                v = dsl.eval_ast(node, {}, params=self.params)
            except DomainError as e:
                raise self.invalid(f"cannot evaluate: {e}", *keys) from None
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise self.invalid("expected a finite number", *keys)
        if positive and not v > 0:
            raise self.invalid("must be positive", *keys)
        return float(v)

    # main ------------------------------------------------------------------
    def build(self):
        doc = self.doc
        if not isinstance(doc, dict):
            raise self.schema("document must be a table")
        ver = self.require(doc, "spec_version")
        if ver != SPEC_VERSION or isinstance(ver, bool):
            raise self.invalid(f"unsupported spec_version {ver!r} (expected {SPEC_VERSION})",
                               "spec_version")
        name = self.require(doc, "name")
        if not isinstance(name, str) or not name:
            raise self.invalid("name must be a non-empty string", "name")
        known = {"spec_version", "name", "description", "critical", "order", "coordinates",
                 "params", "form", "hamiltonian", "witness", "sampling", "profiles",
                 "expect", "symplectization"}
        for k in doc:
            if k not in known:
                raise self.invalid(f"unknown key {k!r}", k)

        params = {}
        raw_params = doc.get("params", {})
        if not isinstance(raw_params, dict):
            raise self.invalid("params must be a table", "params")
        self.params = {}
        for k, v in raw_params.items():
            params[k] = self.number(v, "params", k)
            self.params = dict(params)

        profiles = {}
        raw_prof = doc.get("profiles", {})
        if not isinstance(raw_prof, dict):
            raise self.invalid("profiles must be a table", "profiles")
        for pname, spec in raw_prof.items():
            if not isinstance(spec, dict):
                raise self.invalid("profile must be a table", "profiles", pname)
            kind = self.require(spec, "kind", "profiles", pname, "kind")
            if kind not in ("trap", "desingularize"):
                raise self.invalid(f"unknown profile kind {kind!r}", "profiles", pname, "kind")
            eps = self.number(self.require(spec, "eps", "profiles", pname, "eps"),
                              "profiles", pname, "eps", positive=True)
            k = spec.get("k", 1)
            if not isinstance(k, int) or isinstance(k, bool) or k < 1:
                raise self.invalid("k must be an integer >= 1", "profiles", pname, "k")
            if pname in dsl.BUILTIN_FUNCTIONS or pname in ("d", "pi"):
                raise self.invalid(f"profile name {pname!r} is reserved", "profiles", pname)
            profiles[pname] = {"kind": kind, "eps": eps, "k": k}
        self.function_names = tuple(profiles)

        coords = self.coordinates(doc)
        self.names = tuple(c.name for c in coords)
        for p in self.params:
            if p in self.names:
                raise self.invalid(f"parameter {p!r} shadows a coordinate", "params", p)

        critical, order = None, 0
        if "critical" in doc:
            critical = self.expr(doc["critical"], "critical")
            order = self.require(doc, "order", "order")
            if not isinstance(order, int) or isinstance(order, bool) or order < 1:
                raise self.invalid("order must be an integer >= 1", "order")
        elif "order" in doc:
            raise self.invalid("order given without a critical function", "order")
        self.critical = critical

        symp = None
        if "symplectization" in doc:
            symp = self.symplectization(doc["symplectization"], coords)

        alpha, decomp = self.form(doc.get("form"), order, symp)
        ham = self.hamiltonian(doc.get("hamiltonian"))
        if alpha is None and ham is not None and ham.liouville is not None and ham.omega:
            alpha = _contract_ast(ham.liouville, ham.omega, len(coords))
        if alpha is None and decomp is None and symp is None:
            raise self.schema("missing form data: need [form] alpha/decomposition or "
                              "[hamiltonian] omega with liouville", "form")

        witnesses = self.witnesses(doc.get("witness", []))
        sampling = self.sampling(doc.get("sampling", {}))
        expect = doc.get("expect", {})
        if not isinstance(expect, dict):
            raise self.invalid("expect must be a table", "expect")
        desc = doc.get("description", "")
        if not isinstance(desc, str):
            raise self.invalid("description must be a string", "description")

        spec = SystemSpec(name=name, coords=coords, params=params, critical=critical,
                          order=order, alpha=alpha, decomposition=decomp, hamiltonian=ham,
                          witnesses=witnesses, profiles=profiles, sampling=sampling,
                          expect=dict(expect), symplectization=symp, description=desc,
                          source=self.source)
        self.consistency(spec)
        return spec

    def coordinates(self, doc):
        raw = self.require(doc, "coordinates")
        if not isinstance(raw, list) or not raw:
            raise self.invalid("coordinates must be a non-empty array of tables", "coordinates")
        if len(raw) > 6:
            raise self.invalid("at most 6 coordinates are supported", "coordinates")
        coords = []
        seen = set()
        for i, c in enumerate(raw):
            if not isinstance(c, dict):
                raise self.invalid("coordinate entry must be a table", "coordinates", i)
            name = self.require(c, "name", "coordinates", i, "name")
            if not isinstance(name, str) or not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name):
                raise self.invalid(f"bad coordinate name {name!r}", "coordinates", i, "name")
            if name in dsl.BUILTIN_FUNCTIONS or name in dsl.CONSTANTS or name == "d":
                raise self.invalid(f"coordinate name {name!r} is reserved", "coordinates", name)
            if name in seen:
                raise self.invalid(f"duplicate coordinate {name!r}", "coordinates", name,
                                   offset=self.source.rfind(f'"{name}"') + 1)
            seen.add(name)
            periodic = c.get("periodic", False)
            if not isinstance(periodic, bool):
                raise self.invalid("periodic must be true or false", "coordinates", name)
            period = None
            if periodic:
                period = self.number(self.require(c, "period", "coordinates", name, "period"),
                                     "coordinates", name, "period", positive=True)
            rng = c.get("range", None)
            if rng is None:
                rng = (0.0, period) if periodic else DEFAULT_RANGE
            else:
                if not isinstance(rng, list) or len(rng) != 2:
                    raise self.invalid("range must be [lo, hi]", "coordinates", name, "range")
                rng = tuple(self.number(v, "coordinates", name, "range") for v in rng)
                if not rng[0] < rng[1]:
                    raise self.invalid("range needs lo < hi", "coordinates", name, "range")
            coords.append(Coordinate(name, periodic, period, tuple(rng)))
        return tuple(coords)

    def form(self, raw, order, symp):
        if raw is None:
            return None, None
        if not isinstance(raw, dict):
            raise self.invalid("form must be a table", "form")
        for k in raw:
            if k not in ("alpha", "decomposition", "valid_within"):
                raise self.invalid(f"unknown key {k!r}", "form", k)
        n = len(self.names)
        alpha = decomp = None
        alpha_terms = None
        if "alpha" in raw:
            alpha_terms = self.oneform(raw["alpha"], "form", "alpha")
            alpha = _assemble_ambient(alpha_terms, self.names)
        dec_text, dec_key = None, None
        if "decomposition" in raw:
            dec_text, dec_key = raw["decomposition"], "decomposition"
        elif alpha_terms is not None and any(t.singular for t in alpha_terms):
            dec_text, dec_key = raw["alpha"], "alpha"
        if dec_text is not None:
            terms = alpha_terms if dec_key == "alpha" else self.oneform(dec_text, "form", dec_key)
            sing = [t for t in terms if t.singular]
            if len(sing) != 1:
                raise self.invalid(f"decomposition needs exactly one singular term, found {len(sing)}",
                                   "form", dec_key)
            s = sing[0]
            if s.m != order:
                base = self.loc.string(dec_text, "form", dec_key)
                raise self.invalid(f"singular order {s.m} differs from declared order {order}",
                                   "form", dec_key, offset=base + s.span[0])
            beta = [[] for _ in range(n)]
            for t in terms:
                if not t.singular:
                    beta[self.names.index(t.coord)].append(t.coef)
            beta = tuple(_sum_nodes(b) for b in beta)
            vw = raw.get("valid_within")
            vw = None if vw is None else self.number(vw, "form", "valid_within", positive=True)
            decomp = Decomposition(s.coef, self.names.index(s.coord), beta, vw)
        elif "valid_within" in raw:
            raise self.invalid("valid_within without a decomposition", "form", "valid_within")
        return alpha, decomp

    def hamiltonian(self, raw):
        if raw is None:
            return None
        if not isinstance(raw, dict):
            raise self.invalid("hamiltonian must be a table", "hamiltonian")
        for k in raw:
            if k not in ("H", "H_on_Z", "energy", "omega", "liouville"):
                raise self.invalid(f"unknown key {k!r}", "hamiltonian", k)
        H = self.expr(self.require(raw, "H", "hamiltonian", "H"), "hamiltonian", "H")
        HZ = self.expr(raw["H_on_Z"], "hamiltonian", "H_on_Z") if "H_on_Z" in raw else None
        energy = self.number(raw["energy"], "hamiltonian", "energy") if "energy" in raw else None
        omega = []
        raw_omega = raw.get("omega", [])
        if not isinstance(raw_omega, list):
            raise self.invalid("omega must be an array of {i, j, coef} tables", "hamiltonian", "omega")
        for k, ent in enumerate(raw_omega):
            if not isinstance(ent, dict):
                raise self.invalid("omega entry must be a table", "hamiltonian", "omega")
            i = self.require(ent, "i", "hamiltonian", "omega", "i")
            j = self.require(ent, "j", "hamiltonian", "omega", "j")
            for c in (i, j):
                if c not in self.names:
                    raise self.invalid(f"omega references undeclared coordinate {c!r}",
                                       "hamiltonian", "omega", offset=self.loc.string(str(c), "omega"))
            if i == j:
                raise self.invalid("omega entry needs i != j", "hamiltonian", "omega")
            coef = self.expr(ent.get("coef", 1.0), "hamiltonian", "omega", "coef")
            omega.append((self.names.index(i), self.names.index(j), coef))
        liouville = None
        if "liouville" in raw:
            lv = raw["liouville"]
            if not isinstance(lv, dict):
                raise self.invalid("liouville must be a table", "hamiltonian", "liouville")
            comps = [dsl.num(0.0)] * len(self.names)
            for c, e in lv.items():
                if c not in self.names:
                    raise self.invalid(f"liouville references undeclared coordinate {c!r}",
                                       "hamiltonian", "liouville", c)
                comps[self.names.index(c)] = self.expr(e, "hamiltonian", "liouville", c)
            liouville = tuple(comps)
        return Hamiltonian(H, HZ, energy, tuple(omega), liouville)

    def witnesses(self, raw):
        if not isinstance(raw, list):
            raise self.invalid("witness must be an array of tables", "witness")
        out = []
        for k, w in enumerate(raw):
            if not isinstance(w, dict):
                raise self.invalid("witness entry must be a table", "witness")
            name = self.require(w, "name", "witness", "name")
            expr = self.expr(self.require(w, "expr", "witness", "expr"), "witness", "expr")
            rate = self.expr(w["rate"], "witness", "rate") if "rate" in w else None
            domain = w.get("domain", "off_z")
            if domain not in ("off_z", "on_z", "all"):
                raise self.invalid(f"unknown witness domain {domain!r}", "witness", "domain")
            out.append(Witness(str(name), expr, rate, domain))
        return tuple(out)

    def sampling(self, raw):
        if not isinstance(raw, dict):
            raise self.invalid("sampling must be a table", "sampling")
        out = {}
        for k, v in raw.items():
            if k == "off_z_min":
                out[k] = self.number(v, "sampling", k)
            elif k == "require":
                if not isinstance(v, list):
                    raise self.invalid("require must be a list of expressions", "sampling", k)
                out[k] = tuple(self.expr(e, "sampling", "require") for e in v)
            else:
                raise self.invalid(f"unknown key {k!r}", "sampling", k)
        return out

    def symplectization(self, raw, coords):
        if not isinstance(raw, dict):
            raise self.invalid("symplectization must be a table", "symplectization")
        inner = self.require(raw, "inner", "symplectization", "inner")
        params = raw.get("params", {})
        if self.resolver is None:
            raise self.invalid("no resolver for the inner system", "symplectization", "inner")
        try:
            sys = self.resolver(inner, params)
        except Exception as e:  # noqa: BLE001 - rewrapped with position
            raise self.invalid(f"cannot resolve inner system {inner!r}: {e}",
                               "symplectization", "inner") from None
        want = tuple(sys.names) + ("s",)
        if tuple(c.name for c in coords) != want:
            raise self.invalid(f"coordinates must be {list(want)}", "coordinates")
        return sys

    # eager invariant checks -------------------------------------------------
    def consistency(self, spec):
        rng = np.random.default_rng(0)
        if spec.critical is not None:
            pts = _raw_samples(spec, rng, 40)
            on = []
            for p in pts:
                q = project(spec, p, on_z=True, use_energy=False)
                if q is not None:
                    on.append(q)
            for q in on[:20]:
                try:
                    g = spec.z_jet(q).grad
                except DomainError:
                    continue
                if not np.linalg.norm(g) > 1e-8:
                    raise self.invalid("critical function has a vanishing gradient on its zero set",
                                       "critical")
        sf = spec.singular_form
        if sf is not None and spec.alpha is not None:
            worst = 0.0
            for p in _raw_samples(spec, rng, 40):
                try:
                    z = spec.z(p)
                    if abs(z) < 1e-3 or not spec.decomposition_valid(p):
                        continue
                    worst = max(worst, sf.consistency(p))
                except DomainError:
                    continue
            if worst > 1e-10:
                raise self.invalid(f"decomposition disagrees with alpha (relative {worst:.3g})",
                                   "form", "decomposition")
        h = spec.hamiltonian
        if h is not None and h.liouville is not None and h.omega and spec.alpha is not None:
            direct = [spec.compile(a) for a in _contract_ast(h.liouville, h.omega, spec.dim)]
            worst = 0.0
            for p in _raw_samples(spec, rng, 20):
                try:
                    if spec.has_critical and abs(spec.z(p)) < 1e-3:
                        continue
                    a = np.array([jets.value_of(f(*p)) for f in spec.f_alpha])
                    b = np.array([jets.value_of(f(*p)) for f in direct])
                except DomainError:
                    continue
                worst = max(worst, float(np.max(np.abs(a - b))) / max(1.0, float(np.max(np.abs(b)))))
            if worst > 1e-10:
                raise self.invalid(f"alpha is not the contraction of liouville into omega "
                                   f"(relative {worst:.3g})", "form", "alpha")


def _sum_nodes(nodes):
    if not nodes:
        return dsl.num(0.0)
    out = nodes[0]
    for n in nodes[1:]:
        out = dsl.Node("bin", "+", (out, n), out.span)
    return out


def _assemble_ambient(terms, names):
    comps = [[] for _ in names]
    for t in terms:
        c = t.coef
        if t.singular:
            c = dsl.Node("bin", "/", (c, dsl.Node("bin", "^", (t.base, dsl.num(t.m)))), t.span)
        comps[names.index(t.coord)].append(c)
    return tuple(_sum_nodes(c) for c in comps)


def _contract_ast(Y, omega, n):
    """AST components of iota_Y omega for omega = sum coef dx_i ^ dx_j."""
    comps = [[] for _ in range(n)]

    def mul(a, b):
        return dsl.Node("bin", "*", (a, b))

    for i, j, c in omega:
        # iota_Y (c dx_i ^ dx_j) = c Y_i dx_j - c Y_j dx_i
        if not (Y[i].kind == "num" and Y[i].value == 0.0):
            comps[j].append(mul(c, Y[i]))
        if not (Y[j].kind == "num" and Y[j].value == 0.0):
            comps[i].append(dsl.Node("neg", None, (mul(c, Y[j]),)))
    return tuple(_sum_nodes(c) for c in comps)


def parse_system(doc, source="", path=None, resolver=None):
    """Validate a parsed TOML document (or TOML text) into a :class:`SystemSpec`."""
    if isinstance(doc, str):
        source = doc
        doc = load_toml(doc, path)
    if resolver is None:
        from .gallery import builtin as resolver
    return _Builder(doc, source, path, resolver).build()


def load_toml(text, path=None):
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        col = getattr(e, "colno", None)
        if line is None:
            m = _TOML_POS.search(str(e))
            line, col = (int(m.group(1)), int(m.group(2))) if m else (1, 1)
        off = _offset_of(text, line, col)
        msg = getattr(e, "msg", str(e).split(" (at")[0])
        raise ParseError(f"invalid TOML: {msg}", line, col, (off, off + 1),
                         expected=("TOML",), path=path) from None


def load_system(path, resolver=None):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_system(text, path=str(path), resolver=resolver)


# ----------------------------------------------------------------------------
# sampling
# ----------------------------------------------------------------------------

def _raw_samples(spec, rng, n):
    lo = np.array([c.box()[0] for c in spec.coords])
    hi = np.array([c.box()[1] for c in spec.coords])
    return lo + (hi - lo) * rng.random((n, spec.dim))


def _constraints(spec, on_z, use_energy, z_target=None):
    fs = []
    if on_z:
        fs.append((spec.f_crit, 0.0))
    elif z_target is not None:
        fs.append((spec.f_crit, float(z_target)))
    if use_energy and spec.is_level_set:
        fs.append((spec.f_H_on_Z if on_z else spec.f_H, spec.energy))
    return fs


def project(spec, p, on_z=False, use_energy=True, z_target=None, tol=1e-13, maxiter=50):
    """Minimum-norm Gauss-Newton projection onto {z = 0 or z_target} and/or {H = c}.

    Returns None when the iteration fails to converge.
    """
    fs = _constraints(spec, on_z, use_energy, z_target)
    p = np.array(p, dtype=float)
    if not fs:
        return p
    for _ in range(maxiter):
        try:
            js = [jets.jet_eval(f, p, 1) for f, _ in fs]
        except DomainError:
            return None
        F = np.array([j.value - c for j, (_, c) in zip(js, fs)])
        if np.max(np.abs(F)) <= tol * max(1.0, max(abs(c) for _, c in fs)):
            return p
        J = np.array([j.grad for j in js])
        step, *_ = np.linalg.lstsq(J, F, rcond=None)
        p = p - step
        if not np.all(np.isfinite(p)):
            return None
    return None


def _in_box(spec, p):
    for c, v in zip(spec.coords, p):
        if not c.periodic and not (c.range[0] <= v <= c.range[1]):
            return False
    return True


def _required_ok(spec, p):
    for node in spec.sampling.get("require", ()):
        try:
            if not jets.value_of(spec.compile(node)(*p)) > 0.0:
                return False
        except DomainError:
            return False
    return True


def sample_points(spec, rng, n, on_z=False, max_tries=None, off_z_min=None):
    """Random points of the manifold (off Z, or on Z when ``on_z``)."""
    if on_z and not spec.has_critical:
        return np.zeros((0, spec.dim))
    if off_z_min is None:
        off_z_min = spec.sampling.get("off_z_min", 1e-3)
    out = []
    tries = 0
    max_tries = max_tries or 200 * n
    while len(out) < n and tries < max_tries:
        batch = _raw_samples(spec, rng, max(8, n - len(out)))
        for p in batch:
            tries += 1
            q = project(spec, p, on_z=on_z)
            if q is None or not _in_box(spec, q):
                continue
            if spec.has_critical and not on_z:
                try:
                    z = spec.z(q)
                except DomainError:
                    continue
                if abs(z) < off_z_min:
                    continue
                if spec.decomposition is not None and spec.alpha is None \
                        and not spec.decomposition_valid(q):
                    continue
            if not _required_ok(spec, q):
                continue
            out.append(spec.wrap(q))
            if len(out) == n:
                break
    return np.array(out).reshape(-1, spec.dim)


# ----------------------------------------------------------------------------
# writing
# ----------------------------------------------------------------------------

def _q(s):
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _num(v):
    return repr(float(v))


def _oneform_text(comps, names):
    parts = []
    for c, name in zip(comps, names):
        if c.kind == "num" and c.value == 0.0:
            continue
        s = dsl.pretty(c)
        if dsl._prec(c) < dsl._PREC["*"]:
            s = f"({s})"
        parts.append(f"{s}*d({name})")
    return " + ".join(parts) if parts else "0*d(" + names[0] + ")"


def dump_system(spec):
    """TOML text that parses back to an equivalent :class:`SystemSpec`."""
    out = ["spec_version = 1", f"name = {_q(spec.name)}"]
    if spec.description:
        out.append(f"description = {_q(spec.description)}")
    if spec.critical is not None:
        out.append(f"critical = {_q(dsl.pretty(spec.critical))}")
        out.append(f"order = {spec.order}")
    for c in spec.coords:
        out += ["", "[[coordinates]]", f"name = {_q(c.name)}"]
        if c.periodic:
            out += ["periodic = true", f"period = {_num(c.period)}"]
        else:
            out.append(f"range = [{_num(c.range[0])}, {_num(c.range[1])}]")
    if spec.params:
        out += ["", "[params]"] + [f"{k} = {_num(v)}" for k, v in spec.params.items()]
    if spec.alpha is not None or spec.decomposition is not None:
        out += ["", "[form]"]
        if spec.alpha is not None:
            out.append(f"alpha = {_q(_oneform_text(spec.alpha, spec.names))}")
        d = spec.decomposition
        if d is not None:
            crit = dsl.pretty(spec.critical)
            if dsl._prec(spec.critical) <= dsl._PREC["^"]:
                crit = f"({crit})"
            u = dsl.pretty(d.u)
            if dsl._prec(d.u) < dsl._PREC["*"]:
                u = f"({u})"
            text = f"{u}*d({spec.names[d.direction]})/{crit}^{spec.order}"
            rest = [(b, nm) for b, nm in zip(d.beta, spec.names)
                    if not (b.kind == "num" and b.value == 0.0)]
            if rest:
                text += " + " + _oneform_text([b for b, _ in rest], [nm for _, nm in rest])
            out.append(f"decomposition = {_q(text)}")
            if d.valid_within is not None:
                out.append(f"valid_within = {_num(d.valid_within)}")
    h = spec.hamiltonian
    if h is not None:
        out += ["", "[hamiltonian]", f"H = {_q(dsl.pretty(h.H))}"]
        if h.H_on_Z is not None:
            out.append(f"H_on_Z = {_q(dsl.pretty(h.H_on_Z))}")
        if h.energy is not None:
            out.append(f"energy = {_num(h.energy)}")
        if h.omega:
            ents = [f"{{i = {_q(spec.names[i])}, j = {_q(spec.names[j])}, "
                    f"coef = {_q(dsl.pretty(c))}}}" for i, j, c in h.omega]
            out.append("omega = [" + ", ".join(ents) + "]")
        if h.liouville is not None:
            ents = [f"{nm} = {_q(dsl.pretty(y))}" for nm, y in zip(spec.names, h.liouville)
                    if not (y.kind == "num" and y.value == 0.0)]
            out.append("liouville = {" + ", ".join(ents) + "}")
    for w in spec.witnesses:
        out += ["", "[[witness]]", f"name = {_q(w.name)}", f"expr = {_q(dsl.pretty(w.expr))}"]
        if w.rate is not None:
            out.append(f"rate = {_q(dsl.pretty(w.rate))}")
        out.append(f"domain = {_q(w.domain)}")
    if spec.sampling:
        out += ["", "[sampling]"]
        if "off_z_min" in spec.sampling:
            out.append(f"off_z_min = {_num(spec.sampling['off_z_min'])}")
        if "require" in spec.sampling:
            out.append("require = [" + ", ".join(_q(dsl.pretty(e)) for e in spec.sampling["require"]) + "]")
    for name, prof in spec.profiles.items():
        out += ["", f"[profiles.{name}]", f"kind = {_q(prof['kind'])}",
                f"eps = {_num(prof['eps'])}", f"k = {int(prof['k'])}"]
    if spec.symplectization is not None:
        inner = spec.symplectization
        out += ["", "[symplectization]", f"inner = {_q(inner.name)}"]
        if inner.params:
            out.append("params = {" + ", ".join(f"{k} = {_num(v)}"
                                                for k, v in inner.params.items()) + "}")
    if spec.expect:
        out += ["", "[expect]"]
        for k, v in spec.expect.items():
            out.append(f"{k} = {str(v).lower() if isinstance(v, bool) else _num(v)}")
    return "\n".join(out) + "\n"


def structure_key(spec):
    """Span-free structural summary used to compare specs after a dump/parse cycle."""
    def k(node):
        return None if node is None else node.key()

    d = spec.decomposition
    h = spec.hamiltonian
    return (
        spec.name, spec.coords, tuple(sorted(spec.params.items())), k(spec.critical), spec.order,
        None if spec.alpha is None else tuple(k(a) for a in spec.alpha),
        None if d is None else (k(d.u), d.direction, tuple(k(b) for b in d.beta), d.valid_within),
        None if h is None else (k(h.H), k(h.H_on_Z), h.energy,
                                tuple((i, j, k(c)) for i, j, c in h.omega),
                                None if h.liouville is None else tuple(k(y) for y in h.liouville)),
        tuple((w.name, k(w.expr), k(w.rate), w.domain) for w in spec.witnesses),
        tuple(sorted((n, tuple(sorted(p.items()))) for n, p in spec.profiles.items())),
        None if spec.symplectization is None else structure_key(spec.symplectization),
    )
