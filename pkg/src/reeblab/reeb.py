"""Reeb fields on and off the critical set, and structural checks."""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import dsl, jets
from .errors import (DegenerateError, DegenerateThetaError, DimensionError, DomainError,
                     MissingDecompositionError, NearCriticalError, NotAlmostConvexError,
                     OddOrderError, OffLevelSetError)
from .forms import FormValue, basis, d0, d1, one_form, wedge

Z_MIN = 1e-8
LEVEL_TOL = 1e-9
ON_Z_TOL = 1e-12
THETA_MIN = 1e-12


@dataclass
class ReebSolution:
    vector: np.ndarray
    alpha_residual: float
    dalpha_residual: float
    conditioning: float
    on_z: bool = False
    constraint_residual: float = 0.0

    def as_dict(self):
        return {
            "vector": [float(v) for v in self.vector],
            "alpha_residual": self.alpha_residual,
            "dalpha_residual": self.dalpha_residual,
            "conditioning": self.conditioning,
            "on_z": self.on_z,
            "constraint_residual": self.constraint_residual,
        }


@dataclass
class ZFrameData:
    point: np.ndarray
    u: float
    du: FormValue
    beta: FormValue
    dbeta: FormValue
    theta: FormValue
    tangent: np.ndarray       # columns span T(Z) (intersected with the level set)
    theta_det: float
    degenerate: bool = False


# frames ----------------------------------------------------------------------

def complete_basis(normals, n):
    """Orthonormal completion of ``normals`` by largest-pivot Gram-Schmidt.

    Returns (Q_normals, T) where the columns of T are orthonormal, orthogonal
    to the normals, and oriented so that det[normals, T] > 0.
    """
    Q = []
    for v in normals:
        w = np.array(v, dtype=float)
        for q in Q:
            w = w - (q @ w) * q
        nv = math.sqrt(w @ w)
        if nv < 1e-14:
            raise DegenerateError("constraint gradients are linearly dependent")
        Q.append(w / nv)
    k = len(Q)
    T = []
    while len(Q) < n:
        Qm = np.array(Q).reshape(len(Q), n)
        W = np.eye(n) - Qm.T @ Qm          # row i: e_i minus its projection
        norms = np.sqrt(np.einsum("ij,ij->i", W, W))
        i = int(np.argmax(norms))
        w = W[i] / norms[i]
        # clean tiny roundoff so coordinate-aligned frames stay exact
        w[np.abs(w) < 1e-17] = 0.0
        Q.append(w)
        T.append(w)
    T = np.array(T).T.reshape(n, n - k)
    if T.shape[1] and np.linalg.det(np.column_stack(Q)) < 0:
        T[:, -1] = -T[:, -1]
    return np.array(Q[:k]).reshape(k, n), T


def _level_check(sys, p, on_z):
    if not sys.is_level_set:
        return None
    f = sys.f_H_on_Z if on_z else sys.f_H
    H = jets.jet_eval(f, p, 1)
    c = sys.energy
    if abs(H.value - c) > LEVEL_TOL * max(1.0, abs(c)):
        raise OffLevelSetError(f"|H(p) - c| = {abs(H.value - c):.3g} exceeds {LEVEL_TOL:g}")
    return H


def manifold_frame(sys, p):
    """Oriented orthonormal basis of the manifold's tangent space at p (off Z)."""
    if not sys.is_level_set:
        return np.eye(sys.dim)
    H = jets.jet_eval(sys.f_H, p, 1)
    _, T = complete_basis([H.grad], sys.dim)
    return T


def z_frame(sys, p):
    """Oriented orthonormal basis of T(Z) (inside the level set when applicable)."""
    normals = [sys.z_jet(p).grad]
    if sys.is_level_set:
        normals.append(jets.jet_eval(sys.f_H_on_Z, p, 1).grad)
    _, T = complete_basis(normals, sys.dim)
    return T


# alpha and d alpha -------------------------------------------------------------

def _check_off_z(sys, p, z_min):
    if sys.has_critical:
        z = sys.z(p)
        if abs(z) <= z_min:
            raise NearCriticalError(f"|z| = {abs(z):.3g} is inside the guard band {z_min:g}")


def alpha_dalpha(sys, p, z_min=Z_MIN):
    """(alpha, d alpha matrix) at a point off Z."""
    p = np.asarray(p, dtype=float)
    _check_off_z(sys, p, z_min)
    sf = sys.singular_form
    if sf is not None and (sys.alpha is None or sys.decomposition_valid(p)):
        a, da = sf.differential(p, z_min)
        return a.components, da.matrix()
    if sys.alpha is None:
        raise MissingDecompositionError("system has no ambient form data")
    xs = jets.variables(p, 1)
    comps = []
    for f in sys.f_alpha:
        c = f(*xs)
        if not isinstance(c, jets.Jet2):
            c = jets.Jet2.constant(c, len(xs), 1)
        comps.append(c)
    G = np.array([c.grad for c in comps])
    W = G.T - G
    return np.array([c.value for c in comps]), W


def _lstsq_refined(A, b):
    col = np.linalg.norm(A, axis=0)
    col[col == 0.0] = 1.0
    As = A / col
    U, S, Vt = np.linalg.svd(As, full_matrices=False)
    if S[-1] <= 1e-13 * S[0]:
        raise DegenerateError(f"Reeb system is rank deficient (s_min/s_max = {S[-1] / S[0]:.3g})")

    def solve(rhs):
        return Vt.T @ ((U.T @ rhs) / S)

    x = solve(b)
    x = x + solve(b - As @ x)
    return x / col, float(S[0] / S[-1])


def reeb_off_Z(sys, p, z_min=Z_MIN, fail_tol=1e-6, check_level=True):
    """Solve alpha(R) = 1, iota_R d alpha = 0 (on the level set when there is one).

    With ``check_level=False`` the level-set equations are applied at nearby
    points too, which gives the smooth extension used by the integrator.
    """
    p = np.asarray(p, dtype=float)
    if check_level:
        H = _level_check(sys, p, on_z=False)
    elif sys.is_level_set:
        H = jets.jet_eval(sys.f_H, p, 1)
    else:
        H = None
    alpha, W = alpha_dalpha(sys, p, z_min)
    n = sys.dim
    if H is None:
        A = np.vstack([W.T, alpha])
        b = np.zeros(n + 1)
        b[n] = 1.0
        R, cond = _lstsq_refined(A, b)
        da_res = float(np.max(np.abs(W.T @ R)))
        con_res = 0.0
    else:
        _, E = complete_basis([H.grad], n)
        A = np.vstack([(W @ E).T, alpha, H.grad])
        b = np.zeros(n + 1)
        b[n - 1] = 1.0
        R, cond = _lstsq_refined(A, b)
        da_res = float(np.max(np.abs(R @ W @ E)))
        con_res = abs(float(H.grad @ R))
    a_res = abs(float(alpha @ R) - 1.0)
    if a_res > fail_tol or da_res > fail_tol * max(1.0, float(np.max(np.abs(W)))):
        raise DegenerateError(f"alpha is not contact at p (residuals {a_res:.3g}, {da_res:.3g})")
    return ReebSolution(R, a_res, da_res, cond, False, con_res)


def reeb_field(sys, p, z_min=Z_MIN):
    """Reeb vector at p, using the on-Z solve when p lies on Z."""
    if sys.has_critical and abs(sys.z(p)) <= ON_Z_TOL:
        return reeb_on_Z(sys, p).vector
    return reeb_off_Z(sys, p, z_min).vector


# on Z ----------------------------------------------------------------------------

def decompose_on_Z(sys, p, strict=False, tol=ON_Z_TOL, check_level=True):
    p = np.asarray(p, dtype=float)
    if sys.decomposition is None:
        raise MissingDecompositionError(f"{sys.name} has no decomposition data")
    z = sys.z(p)
    if abs(z) > tol:
        raise ValueError(f"point is not on Z (|z| = {abs(z):.3g})")
    if check_level:
        _level_check(sys, p, on_z=True)
    xs = jets.variables(p, 1)
    n = len(xs)

    def lift(v):
        return v if isinstance(v, jets.Jet2) else jets.Jet2.constant(v, n, 1)

    u = lift(sys.f_u(*xs))
    beta = [lift(f(*xs)) for f in sys.f_beta]
    du = d0(u)
    bval = one_form([b.value for b in beta])
    db = d1(beta)
    if n == 1:
        theta = FormValue(2, 1)
    else:
        theta = db * u.value + wedge(bval, du)
    T = z_frame(sys, p)
    k = T.shape[1]
    if k == 0:
        det = 1.0
    elif k == 2:
        det = theta(T[:, 0], T[:, 1])
    else:
        M = T.T @ theta.matrix() @ T
        det = float(np.sqrt(abs(np.linalg.det(M))))
    degenerate = abs(det) < THETA_MIN
    if degenerate and strict:
        raise DegenerateThetaError(f"Theta is degenerate on T(Z) at p (|det| = {abs(det):.3g})")
    return ZFrameData(p, u.value, du, bval, db, theta, T, float(det), degenerate)


def reeb_on_Z(sys, p, tol=ON_Z_TOL, check_level=True):
    """Solve iota_R Theta = du on T(Z).

    ``tol`` bounds |z(p)|; flows along Z pass a looser value together with
    ``check_level=False`` so integration drift does not abort the solve.
    """
    fr = decompose_on_Z(sys, p, tol=tol, check_level=check_level)
    T = fr.tangent
    n = sys.dim
    if T.shape[1] == 0:
        return ReebSolution(np.zeros(n), None, 0.0, 1.0, True)
    if fr.degenerate:
        raise DegenerateThetaError(f"Theta is degenerate on T(Z) (det = {fr.theta_det:.3g})")
    M = T.T @ fr.theta.matrix() @ T          # M[k, l] = Theta(e_k, e_l)
    rhs = T.T @ fr.du.components
    a = np.linalg.solve(M.T, rhs)
    R = T @ a
    res = float(np.max(np.abs(M.T @ a - rhs)))
    cond = float(np.linalg.cond(M))
    return ReebSolution(R, None, res, cond, True)


def theta_residual(sys, p, R):
    """sup |iota_R Theta - du| on T(Z)."""
    fr = decompose_on_Z(sys, p)
    T = fr.tangent
    lhs = T.T @ (fr.theta.matrix().T @ R)
    return float(np.max(np.abs(lhs - T.T @ fr.du.components))) if T.shape[1] else 0.0


# contact condition -------------------------------------------------------------

def contact_coefficient(sys, p):
    """z^m * (alpha ^ (d alpha)^n) on an oriented orthonormal frame of the manifold.

    Works on Z through the decomposition; for 3-manifolds on Z it reduces to
    (d x_j ^ Theta)(frame).
    """
    p = np.asarray(p, dtype=float)
    nman = sys.manifold_dim
    if nman not in (1, 3):
        raise DimensionError("contact coefficient is implemented for 1- and 3-manifolds")
    on_z = sys.has_critical and abs(sys.z(p)) <= Z_MIN
    F = manifold_frame(sys, p) if not on_z else _frame_on_z_manifold(sys, p)
    n = sys.dim
    if on_z:
        fr = decompose_on_Z(sys, p, tol=Z_MIN)
        ej = np.zeros(n)
        ej[sys.decomposition.direction] = 1.0
        ej = one_form(ej)
        z = sys.z(p)
        zm = z ** sys.order
        if nman == 1:
            form = ej * fr.u + fr.beta * zm
            return form(F[:, 0])
        form = wedge(ej, fr.theta) + wedge(fr.beta, fr.dbeta) * zm
        return form(F[:, 0], F[:, 1], F[:, 2])
    alpha, W = alpha_dalpha(sys, p)
    zm = sys.z(p) ** sys.order if sys.has_critical else 1.0
    a = one_form(alpha)
    if nman == 1:
        return zm * a(F[:, 0])
    da = FormValue(2, n, [W[i, j] for i, j in basis(n, 2)])
    return zm * wedge(a, da)(F[:, 0], F[:, 1], F[:, 2])


def _frame_on_z_manifold(sys, p):
    if not sys.is_level_set:
        return np.eye(sys.dim)
    H = jets.jet_eval(sys.f_H_on_Z, p, 1)
    _, T = complete_basis([H.grad], sys.dim)
    return T


# Liouville level sets -------------------------------------------------------------

def liouville_level_set(omega, H, c, Y, p, tol=LEVEL_TOL):
    """(alpha_c at p, margin dH(Y)) for a Liouville field Y of omega on {H = c}.

    ``omega`` is a 2-form value (or antisymmetric matrix), ``H`` a callable of
    the coordinates, ``Y`` a vector.
    """
    p = np.asarray(p, dtype=float)
    Hj = jets.jet_eval(H, p, 1)
    if abs(Hj.value - c) > tol * max(1.0, abs(c)):
        raise OffLevelSetError(f"|H(p) - c| = {abs(Hj.value - c):.3g}")
    W = omega.matrix() if isinstance(omega, FormValue) else np.asarray(omega, dtype=float)
    Y = np.asarray(Y, dtype=float)
    alpha = one_form(Y @ W)
    return alpha, float(Hj.grad @ Y)


def liouville_margin(sys, p):
    """(alpha_c or None on Z, margin Y(H)) for a Hamiltonian system at p."""
    h = sys.hamiltonian
    if h is None or h.liouville is None:
        raise MissingDecompositionError(f"{sys.name} has no Liouville data")
    p = np.asarray(p, dtype=float)
    Y = np.array([jets.value_of(f(*p)) for f in sys.f_liouville])
    on_z = sys.has_critical and abs(sys.z(p)) <= Z_MIN
    if on_z:
        Hj = jets.jet_eval(sys.f_H_on_Z, p, 1)
        if abs(Hj.value - sys.energy) > LEVEL_TOL * max(1.0, abs(sys.energy)):
            raise OffLevelSetError("point is not on the level set")
        return None, float(Hj.grad @ Y)
    return liouville_level_set(sys.omega_matrix(p), sys.f_H, sys.energy, Y, p)


# R+-invariance -----------------------------------------------------------------

def sample_collar(sys, rng, n, delta, max_tries=None):
    from .system import _in_box, _raw_samples, project
    out = []
    tries = 0
    max_tries = max_tries or 100 * n
    while len(out) < n and tries < max_tries:
        for p in _raw_samples(sys, rng, max(8, n - len(out))):
            tries += 1
            target = rng.uniform(-delta, delta)
            if target == 0.0:
                continue
            q = project(sys, p, z_target=target)
            if q is None or not _in_box(sys, q):
                continue
            out.append(q)
            if len(out) == n:
                break
    return np.array(out).reshape(-1, sys.dim)


def collar_direction(sys, p):
    """Vector field v with dz(v) = 1, orthogonal to Z inside the manifold."""
    g = sys.z_jet(p).grad
    if sys.is_level_set:
        n = jets.jet_eval(sys.f_H, p, 1).grad
        n = n / np.linalg.norm(n)
        g = g - (n @ g) * n
    return g / (g @ g)


def r_plus_invariance_check(sys, delta=0.1, samples=200, seed=0, tol=1e-8):
    if sys.decomposition is None:
        raise MissingDecompositionError(f"{sys.name} has no decomposition data")
    rng = np.random.default_rng(seed)
    pts = sample_collar(sys, rng, samples, delta)
    sup_u = sup_b = 0.0
    used = 0
    for p in pts:
        try:
            xs = jets.variables(p, 1)
            u = sys.f_u(*xs)
            bs = [f(*xs) for f in sys.f_beta]
            v = collar_direction(sys, p)
        except DomainError:
            continue
        gu = u.grad if isinstance(u, jets.Jet2) else np.zeros(sys.dim)
        gb = np.array([b.grad if isinstance(b, jets.Jet2) else np.zeros(sys.dim) for b in bs])
        sup_u = max(sup_u, abs(float(gu @ v)))
        sup_b = max(sup_b, float(np.max(np.abs(gb @ v))))
        used += 1
    verdict = "invariant" if sup_u <= tol and sup_b <= tol else "not invariant"
    return {"sup_du_dz": sup_u, "sup_dbeta_dz": sup_b, "samples": used, "delta": delta,
            "tolerance": tol, "verdict": verdict}


# desingularization -------------------------------------------------------------------

def desingularize_even(sys, eps, profile_name="fe", check=True):
    """Smooth system replacing 1/z^(2k) in the singular term by the profile f_eps'(z)."""
    from .system import dump_system, parse_system
    if sys.decomposition is None:
        raise MissingDecompositionError(f"{sys.name} has no decomposition data")
    m = sys.order
    if m % 2:
        raise OddOrderError(f"order {m} is odd (folded case is not supported)")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if check:
        rep = r_plus_invariance_check(sys, delta=max(2 * eps, 0.1), samples=100)
        if rep["sup_dbeta_dz"] > rep["tolerance"]:
            raise NotAlmostConvexError(
                f"beta depends on the collar coordinate (sup {rep['sup_dbeta_dz']:.3g})")
    d = sys.decomposition
    names = sys.names
    j = d.direction
    prof = dsl.Node("call", profile_name, (sys.critical,))
    comps = list(d.beta)
    sing = dsl.Node("bin", "*", (d.u, prof))
    comps[j] = sing if _is_zero(comps[j]) else dsl.Node("bin", "+", (sing, comps[j]))
    profiles = dict(sys.profiles)
    profiles[profile_name] = {"kind": "desingularize", "eps": float(eps), "k": m // 2}
    smooth = dataclasses.replace(
        sys, name=f"{sys.name}_desing", critical=None, order=0, alpha=tuple(comps),
        decomposition=None, profiles=profiles, witnesses=(), expect={},
        description=f"smooth contact form from {sys.name}, eps = {eps!r}")
    text = dump_system(smooth)
    return parse_system(text)


def _is_zero(node):
    return node.kind == "num" and node.value == 0.0


# symplectization ---------------------------------------------------------------------

def symplectization_check(sys, p, s):
    """Hamiltonian field of H = e^s for d(e^s alpha) versus the Reeb lift (R, 0)."""
    p = np.asarray(p, dtype=float)
    R = reeb_off_Z(sys, p).vector
    alpha, W = alpha_dalpha(sys, p)
    n = sys.dim
    es = np.exp(s)
    Om = np.zeros((n + 1, n + 1))
    Om[:n, :n] = es * W
    Om[n, :n] = es * alpha
    Om[:n, n] = -es * alpha
    dH = np.zeros(n + 1)
    dH[n] = es
    if sys.is_level_set:
        # restrict to T(level set) x R and solve in that frame
        E = manifold_frame(sys, p)
        k = E.shape[1]
        B = np.zeros((n + 1, k + 1))
        B[:n, :k] = E
        B[n, k] = 1.0
        Mr = B.T @ Om @ B
        X = B @ np.linalg.solve(Mr.T / es, (B.T @ dH) / es)
    else:
        X = np.linalg.solve(Om.T / es, dH / es)
    lam = float(X[:n] @ R / (R @ R))
    lift = np.concatenate([R, [0.0]])
    resid = float(np.linalg.norm(X / lam - lift) / np.linalg.norm(R))
    return {"residual": resid, "lambda": lam, "dH_residual": abs(float(dH @ X)),
            "X_H": [float(v) for v in X]}
