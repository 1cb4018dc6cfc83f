"""Pointwise differential forms of degree <= 3 in dimension <= 6."""

from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import DimensionError, SingularPointError
from .jets import Jet2, value_of

MAX_DIM = 6
MAX_DEGREE = 3


@lru_cache(maxsize=None)
def basis(dim, degree):
    """Strictly increasing multi-indices in lexicographic order."""
    return tuple(combinations(range(dim), degree))


@lru_cache(maxsize=None)
def _index(dim, degree):
    return {I: k for k, I in enumerate(basis(dim, degree))}


def _perm_sign(seq):
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def _wedge_table(dim, k, l):
    out = _index(dim, k + l)
    table = []
    for a, I in enumerate(basis(dim, k)):
        for b, J in enumerate(basis(dim, l)):
            if set(I) & set(J):
                continue
            K = tuple(sorted(I + J))
            table.append((a, b, out[K], _perm_sign(I + J)))
    return tuple(table)


@lru_cache(maxsize=None)
def _contract_table(dim, k):
    out = _index(dim, k - 1)
    table = []
    for a, I in enumerate(basis(dim, k)):
        for pos, i in enumerate(I):
            rest = I[:pos] + I[pos + 1:]
            table.append((a, i, out[rest], -1 if pos % 2 else 1))
    return tuple(table)


def _check(dim, degree):
    if not 1 <= dim <= MAX_DIM:
        raise DimensionError(f"dimension {dim} outside 1..{MAX_DIM}")
    if not 0 <= degree <= MAX_DEGREE:
        raise DimensionError(f"degree {degree} outside 0..{MAX_DEGREE}")


class FormValue:
    """An alternating k-tensor at a point, stored over increasing multi-indices."""

    __slots__ = ("degree", "dim", "components")

    def __init__(self, degree, dim, components=None):
        _check(dim, degree)
        self.degree = degree
        self.dim = dim
        size = len(basis(dim, degree))
        if components is None:
            components = np.zeros(size)
        components = np.asarray(components, dtype=float).reshape(-1)
        if components.shape[0] != size:
            raise DimensionError(f"expected {size} components, got {components.shape[0]}")
        self.components = components

    @classmethod
    def from_dict(cls, degree, dim, entries):
        """Build from {multi-index: value}; unordered indices are sorted with sign."""
        f = cls(degree, dim)
        idx = _index(dim, degree)
        for I, v in entries.items():
            I = tuple(I) if degree != 1 or not np.isscalar(I) else (I,)
            if len(set(I)) != len(I):
                continue
            f.components[idx[tuple(sorted(I))]] += _perm_sign(I) * v
        return f

    def __getitem__(self, I):
        if np.isscalar(I):
            I = (I,)
        I = tuple(I)
        if len(set(I)) != len(I):
            return 0.0
        return _perm_sign(I) * self.components[_index(self.dim, self.degree)[tuple(sorted(I))]]

    def _same(self, other):
        if (self.degree, self.dim) != (other.degree, other.dim):
            raise DimensionError("forms of different degree or dimension")

    def __add__(self, other):
        self._same(other)
        return FormValue(self.degree, self.dim, self.components + other.components)

    def __sub__(self, other):
        self._same(other)
        return FormValue(self.degree, self.dim, self.components - other.components)

    def __neg__(self):
        return FormValue(self.degree, self.dim, -self.components)

    def __mul__(self, s):
        return FormValue(self.degree, self.dim, self.components * float(s))

    __rmul__ = __mul__

    def norm(self):
        return float(np.max(np.abs(self.components))) if self.components.size else 0.0

    def matrix(self):
        """Antisymmetric matrix of a 2-form (W[i, j] = a(e_i, e_j))."""
        if self.degree != 2:
            raise DimensionError("matrix() needs a 2-form")
        W = np.zeros((self.dim, self.dim))
        for k, (i, j) in enumerate(basis(self.dim, 2)):
            W[i, j] = self.components[k]
            W[j, i] = -self.components[k]
        return W

    def __call__(self, *vectors):
        """Evaluate on ``degree`` vectors."""
        if len(vectors) != self.degree:
            raise DimensionError(f"{self.degree}-form needs {self.degree} vectors")
        if self.degree == 0:
            return float(self.components[0])
        V = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
        if V.shape[0] != self.dim:
            raise DimensionError("vector dimension mismatch")
        total = 0.0
        for k, I in enumerate(basis(self.dim, self.degree)):
            c = self.components[k]
            if c != 0.0:
                total += c * np.linalg.det(V[list(I), :])
        return float(total)

    def __repr__(self):
        return f"FormValue(degree={self.degree}, dim={self.dim}, components={self.components!r})"


def zero(degree, dim):
    return FormValue(degree, dim)


def one_form(components):
    c = np.asarray(components, dtype=float)
    return FormValue(1, c.shape[0], c)


def coordinate_form(i, dim):
    c = np.zeros(dim)
    c[i] = 1.0
    return FormValue(1, dim, c)


def wedge(a, b):
    if a.dim != b.dim:
        raise DimensionError("wedge of forms in different dimensions")
    k, l = a.degree, b.degree
    if k + l > min(a.dim, MAX_DEGREE):
        raise DimensionError(f"degree {k + l} overflows dimension {a.dim}")
    out = np.zeros(len(basis(a.dim, k + l)))
    ac, bc = a.components, b.components
    for ia, ib, io, s in _wedge_table(a.dim, k, l):
        out[io] += s * ac[ia] * bc[ib]
    return FormValue(k + l, a.dim, out)


def contract(v, a):
    v = np.asarray(v, dtype=float)
    if v.shape[0] != a.dim:
        raise DimensionError("vector and form dimensions differ")
    if a.degree < 1:
        raise DimensionError("cannot contract a 0-form")
    out = np.zeros(len(basis(a.dim, a.degree - 1)))
    ac = a.components
    for ia, i, io, s in _contract_table(a.dim, a.degree):
        out[io] += s * v[i] * ac[ia]
    return FormValue(a.degree - 1, a.dim, out)


# exterior derivatives of jet-valued coefficient fields ------------------------

def d0(f):
    """Differential of a scalar jet as a 1-form."""
    return FormValue(1, f.grad.shape[0], f.grad)


def d1(components):
    """d of a 1-form given its coefficient jets: (dw)_ij = d_i w_j - d_j w_i."""
    comps = list(components)
    n = len(comps)
    grads = np.array([c.grad if isinstance(c, Jet2) else np.zeros(n) for c in comps])
    out = [grads[j, i] - grads[i, j] for i, j in basis(n, 2)]
    return FormValue(2, n, out)


def d1_jets(components):
    """Like :func:`d1` but returns first-order jets of the 2-form coefficients.

    Requires second-order coefficient jets.
    """
    comps = list(components)
    n = len(comps)
    out = []
    for i, j in basis(n, 2):
        wj, wi = comps[j], comps[i]
        out.append(Jet2(wj.grad[i] - wi.grad[j], wj.hess[i] - wi.hess[j]))
    return out


def d2(components, dim):
    """d of a 2-form given first-order jets of its coefficients."""
    idx = _index(dim, 2)
    out = []
    for i, j, k in basis(dim, 3):
        a_jk = components[idx[(j, k)]].grad[i]
        a_ik = components[idx[(i, k)]].grad[j]
        a_ij = components[idx[(i, j)]].grad[k]
        out.append(a_jk - a_ik + a_ij)
    return FormValue(3, dim, out)


def values(components):
    return np.array([value_of(c) for c in components])


class SingularOneForm:
    """u * d(x_j) / z^m + beta, with optional plain ambient coefficients.

    ``crit``, ``u`` and the entries of ``beta``/``ambient`` are callables taking
    the coordinates as separate arguments (numbers or jets).  ``direction`` is
    the index j of the coordinate differential in the singular term.
    """

    def __init__(self, m, crit, u, direction, beta, ambient=None, z_min=1e-8):
        if int(m) != m or m < 1:
            raise ValueError("singularity order must be an integer >= 1")
        self.m = int(m)
        self.crit = crit
        self.u = u
        self.direction = int(direction)
        self.beta = list(beta)
        self.ambient = None if ambient is None else list(ambient)
        self.dim = len(self.beta)
        self.z_min = z_min

    def _jets(self, p, order):
        from .jets import variables
        xs = variables(p, order)
        n = len(xs)

        def lift(v):
            return v if isinstance(v, Jet2) else Jet2.constant(v, n, order)

        z = lift(self.crit(*xs))
        u = lift(self.u(*xs))
        beta = [lift(b(*xs)) for b in self.beta]
        return z, u, beta

    def value(self, p):
        z, u, beta = self._jets(p, 1)
        if abs(z.value) <= self.z_min:
            raise SingularPointError(f"point within {self.z_min:g} of the critical set")
        comps = np.array([b.value for b in beta])
        comps[self.direction] += u.value / z.value ** self.m
        return FormValue(1, self.dim, comps)

    def differential(self, p, z_min=None):
        """(alpha, d alpha) at p off Z, evaluated literally from the decomposition."""
        z, u, beta = self._jets(p, 1)
        z_min = self.z_min if z_min is None else z_min
        if abs(z.value) <= z_min or z.value == 0.0:
            raise SingularPointError(f"point within {self.z_min:g} of the critical set")
        m, j = self.m, self.direction
        zm = z.value ** m
        alpha = np.array([b.value for b in beta])
        alpha[j] += u.value / zm
        if self.dim == 1:
            return FormValue(1, 1, alpha), FormValue(2, 1)
        ej = coordinate_form(j, self.dim)
        da = d1(beta)
        da = da + wedge(d0(u), ej) * (1.0 / zm)
        da = da - wedge(d0(z), ej) * (m * u.value / (zm * z.value))
        return FormValue(1, self.dim, alpha), da

    def ambient_value(self, p):
        if self.ambient is None:
            return None
        return one_form([value_of(a(*p)) for a in self.ambient])

    def consistency(self, p):
        """Relative mismatch between the decomposition and the ambient coefficients."""
        amb = self.ambient_value(p)
        if amb is None:
            return 0.0
        dec = self.value(p)
        scale = max(1.0, float(np.max(np.abs(amb.components))))
        return float(np.max(np.abs(dec.components - amb.components))) / scale
