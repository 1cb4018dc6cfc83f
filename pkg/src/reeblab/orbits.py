"""Zeros of the Reeb field on Z, periodic and singular orbits, certificates."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import flow, jets
from .errors import (DegenerateThetaError, DomainError, InconclusiveError, NewtonStallError,
                     NoReturnError, ReeblabError)
from .reeb import complete_basis, reeb_field, reeb_on_Z
from .system import project, sample_points

ZERO_TOL = 1e-10
DEDUP_TOL = 1e-6
CLOSURE_TOL = 1e-6
FD_STEP = 1e-6
MAX_NEWTON = 25


def _vec(v):
    return [float(x) for x in v]


# constraint handling -----------------------------------------------------------------

def _constraints(sys, on_z, extra=()):
    """List of (callable, target) pairs cutting out the relevant submanifold."""
    cons = []
    if on_z:
        cons.append((sys.f_crit, 0.0))
    if sys.is_level_set:
        cons.append((sys.f_H_on_Z if on_z else sys.f_H, sys.energy))
    cons.extend((f, 0.0) for f in extra)
    return cons


def _project(p, cons, tol=1e-13, maxiter=50):
    """Gauss-Newton minimum-norm projection onto the common zero set."""
    p = np.array(p, dtype=float)
    if not cons:
        return p
    for _ in range(maxiter):
        js = [jets.jet_eval(f, p, 1) for f, _ in cons]
        r = np.array([jets.value_of(j) - c for j, (_, c) in zip(js, cons)])
        if np.max(np.abs(r)) <= tol:
            return p
        G = np.array([j.grad if isinstance(j, jets.Jet2) else np.zeros(len(p)) for j in js])
        p = p - np.linalg.lstsq(G, r, rcond=None)[0]
    js = [jets.value_of(f(*p)) - c for f, c in cons]
    if max(abs(v) for v in js) > 1e-9:
        raise DomainError("projection onto the constraint set did not converge")
    return p


def _tangent(p, cons, n):
    normals = [jets.jet_eval(f, p, 1).grad for f, _ in cons]
    _, T = complete_basis(normals, n)
    return T


# zeros on Z -------------------------------------------------------------------------------

def _z_residual(sys, p):
    return reeb_on_Z(sys, p, tol=1e-9, check_level=False).vector


def _newton_zero(sys, p, cons, maxiter=40):
    try:
        p = _project(p, cons)
        R = _z_residual(sys, p)
    except (ReeblabError, np.linalg.LinAlgError):
        return None
    n = sys.dim
    for _ in range(maxiter):
        nr = float(np.linalg.norm(R))
        if nr <= ZERO_TOL:
            return p
        T = _tangent(p, cons, n)
        k = T.shape[1]
        if k == 0:
            return p
        F = T.T @ R
        J = np.zeros((k, k))
        h = 1e-7
        try:
            for c in range(k):
                qp = _project(p + h * T[:, c], cons)
                qm = _project(p - h * T[:, c], cons)
                J[:, c] = T.T @ (_z_residual(sys, qp) - _z_residual(sys, qm)) / (2 * h)
        except (ReeblabError, np.linalg.LinAlgError):
            return None
        step = -np.linalg.lstsq(J, F, rcond=1e-12)[0]
        lam = 1.0
        for _ in range(12):
            try:
                q = _project(p + lam * (T @ step), cons)
                Rq = _z_residual(sys, q)
            except (ReeblabError, np.linalg.LinAlgError):
                lam *= 0.5
                continue
            if np.linalg.norm(Rq) < nr or np.linalg.norm(Rq) <= ZERO_TOL:
                p, R = q, Rq
                break
            lam *= 0.5
        else:
            return None
    return p if float(np.linalg.norm(R)) <= ZERO_TOL else None


def _dedup(sys, points, tol=DEDUP_TOL):
    out = []
    for p in points:
        if all(sys.distance(p, q) > tol for q in out):
            out.append(p)
    return out


def _canonical(sys, p):
    """Wrap periodic coordinates into [0, period) and clean -0.0 and roundoff."""
    q = sys.wrap(p)
    per = sys.periods
    for i in range(len(q)):
        if per[i] > 0 and per[i] - q[i] < 1e-12:
            q[i] = 0.0
        if abs(q[i]) < 1e-14:
            q[i] = 0.0
    return q


def find_zeros_on_Z(sys, seeds):
    """Damped Newton on R|_Z = 0 from every seed; de-duplicated, lexicographically sorted."""
    cons = _constraints(sys, on_z=True)
    found = []
    for s in seeds:
        p = _newton_zero(sys, np.asarray(s, dtype=float), cons)
        if p is not None:
            found.append(_canonical(sys, p))
    found = _dedup(sys, found)
    found.sort(key=lambda q: tuple(np.round(q, 9)))
    return found


def z_seed_grid(sys, n=64, seed=0):
    """Deterministic random seeds on Z (and on the level set when there is one)."""
    rng = np.random.default_rng(seed)
    return sample_points(sys, rng, n, on_z=True)


def _clusters(sys, points, link):
    """Connected components under wrap-aware distance <= link."""
    n = len(points)
    label = list(range(n))

    def root(i):
        while label[i] != i:
            label[i] = label[label[i]]
            i = label[i]
        return i
    for i in range(n):
        for j in range(i + 1, n):
            if sys.distance(points[i], points[j]) <= link:
                label[root(i)] = root(j)
    groups = {}
    for i in range(n):
        groups.setdefault(root(i), []).append(points[i])
    return sorted(groups.values(), key=lambda g: tuple(np.round(g[0], 9)))


def zero_set_report(sys, seeds, link=None):
    """Zeros plus a verdict: isolated points, 1-parameter families, or R|_Z == 0.

    Families are detected by clustering zeros: a cluster that spreads along
    some coordinate by more than ``link`` is reported as a family.
    """
    seeds = [np.asarray(s, dtype=float) for s in seeds]
    zeros = find_zeros_on_Z(sys, seeds)
    vanishing = 0
    for s in seeds:
        try:
            if float(np.linalg.norm(_z_residual(sys, s))) <= ZERO_TOL:
                vanishing += 1
        except ReeblabError:
            pass
    if seeds and vanishing == len(seeds):
        return {"verdict": "degenerate-family", "zeros": [], "families": [],
                "note": "R vanishes at every seed on Z", "seeds": len(seeds),
                "all_zeros": [_vec(p) for p in seeds]}
    if link is None:
        spread = np.ptp(np.array(seeds), axis=0) if seeds else np.zeros(sys.dim)
        link = 0.5 * float(np.max(spread)) / max(1.0, len(seeds) ** (1.0 / max(1, sys.dim - 1)))
        link = max(link, 1e-3)
    groups = _clusters(sys, zeros, link) if zeros else []
    isolated, families = [], []
    for g in groups:
        if len(g) == 1:
            isolated.append(g[0])
            continue
        arr = np.array(g)
        span = np.array([max(sys.wrap_delta(g[0], q)[i] for q in g)
                         - min(sys.wrap_delta(g[0], q)[i] for q in g) for i in range(sys.dim)])
        fixed = {sys.names[i]: float(np.mean(arr[:, i])) for i in range(sys.dim)
                 if span[i] <= 1e-6}
        free = [sys.names[i] for i in range(sys.dim) if span[i] > 1e-6]
        families.append({"fixed": fixed, "free": free, "members": len(g)})
    families = _merge_families(sys, families)
    isolated = [p for p in isolated if not _absorb(sys, families, p)]
    verdict = "families" if families else "isolated"
    return {"verdict": verdict, "zeros": [_vec(p) for p in isolated], "families": families,
            "seeds": len(seeds), "all_zeros": [_vec(p) for p in zeros]}


def _absorb(sys, families, p):
    for fam in families:
        ok = True
        for k, v in fam["fixed"].items():
            i = sys.index(k)
            d = p[i] - v
            if sys.periods[i] > 0:
                d = _wrapped(d, sys.periods[i])
            ok = ok and abs(d) <= 1e-6
        if ok:
            fam["members"] += 1
            return True
    return False


def _wrapped(d, period):
    return d - period * round(d / period)


def _merge_families(sys, families):
    out = []
    per = dict(zip(sys.names, sys.periods))
    for fam in families:
        for other in out:
            if other["free"] != fam["free"] or set(other["fixed"]) != set(fam["fixed"]):
                continue
            close = True
            for k, v in fam["fixed"].items():
                d = other["fixed"][k] - v
                if per[k] > 0:
                    d -= per[k] * round(d / per[k])
                close = close and abs(d) <= 1e-6
            if close:
                other["members"] += fam["members"]
                break
        else:
            out.append(dict(fam))
    return out


# periodic orbits ------------------------------------------------------------------------

@dataclass
class PeriodicOrbitRecord:
    point: np.ndarray
    period: float
    closure_residual: float
    section: str
    iterations: int
    on_z: bool
    rotation_rate: float = None

    def as_dict(self):
        return {"point": _vec(self.point), "period": self.period,
                "closure_residual": self.closure_residual, "section": self.section,
                "iterations": self.iterations, "on_z": self.on_z}


def _field_for(sys, on_z):
    if on_z:
        return flow.z_flow(sys), None
    return flow.reeb_flow(sys), flow.guard_band(sys)


def first_return(sys, section, p, T_max, on_z=False, t_min=None, tol=1e-11):
    """(return time, return point) for the first section crossing after t_min."""
    f, guard = _field_for(sys, on_z)
    t_min = 1e-3 * T_max if t_min is None else t_min
    tr = flow.integrate(f, p, (0.0, T_max), rtol=tol, atol=tol * 1e-2, guard=guard,
                        section=section, event_t_min=t_min)
    if tr.reason != "event":
        raise NoReturnError(f"no return to {section.name} within t = {T_max:g} ({tr.reason})")
    return tr.events[-1]


def refine_periodic(sys, section, p_guess, T_guess, on_z=None, T_max=None, tol=1e-11):
    """Poincare-Newton shooting on the section displacement map."""
    p_guess = np.asarray(p_guess, dtype=float)
    if on_z is None:
        on_z = sys.has_critical and abs(sys.z(p_guess)) <= 1e-9
    T_max = 2.5 * T_guess if T_max is None else T_max
    t_min = 0.2 * T_guess
    cons = _constraints(sys, on_z, extra=(section.func,))
    p0 = _project(p_guess, cons)
    B = _tangent(p0, cons, sys.dim)
    k = B.shape[1]

    def point(s):
        return _project(p0 + B @ s, cons)

    def displacement(s):
        p = point(s)
        T, q = first_return(sys, section, p, T_max, on_z, t_min, tol)
        return p, T, q, sys.wrap_delta(p, q)

    s = np.zeros(k)
    p, T, q, d = displacement(s)
    res = float(np.linalg.norm(d))
    it = 0
    while res > 1e-10 and k > 0:
        it += 1
        if it > MAX_NEWTON:
            raise NewtonStallError(f"no convergence after {MAX_NEWTON} iterations "
                                   f"(closure {res:.3g})")
        D = B.T @ d
        J = np.zeros((k, k))
        for c in range(k):
            e = np.zeros(k)
            e[c] = FD_STEP
            J[:, c] = (B.T @ displacement(s + e)[3] - B.T @ displacement(s - e)[3]) / (2 * FD_STEP)
        U, S, Vt = np.linalg.svd(J)
        keep = S > 1e-6
        if not np.any(keep):
            break
        step = -(Vt[keep].T @ ((U[:, keep].T @ D) / S[keep]))
        lam, improved = 1.0, False
        for _ in range(8):
            try:
                cand = displacement(s + lam * step)
            except (NoReturnError, DomainError):
                lam *= 0.5
                continue
            r = float(np.linalg.norm(cand[3]))
            if r < res:
                s = s + lam * step
                p, T, q, d = cand
                res, improved = r, True
                break
            lam *= 0.5
        if not improved:
            break
    if res > CLOSURE_TOL:
        raise NewtonStallError(f"closure residual {res:.3g} exceeds {CLOSURE_TOL:g}")
    return PeriodicOrbitRecord(p, float(T), res, section.name, it, bool(on_z))


def revalidate(sys, rec, tol=1e-11):
    """Re-integrate one period from the representative point; closure distance."""
    f, guard = _field_for(sys, rec.on_z)
    tr = flow.integrate(f, rec.point, (0.0, rec.period), rtol=tol, atol=tol * 1e-2, guard=guard)
    return sys.distance(rec.point, tr.final)


def scan_periodic(sys, section, grid, T_max, on_z=False, threshold=1e-2, refine=True):
    """First-return displacement over a grid; local minima below threshold are refined.

    Grid points are projected onto the section first.  Returns one entry per
    candidate with the refined record (or the refinement error).
    """
    cons = _constraints(sys, on_z, extra=(section.func,))
    disp = []
    pts = []
    for g in grid:
        try:
            p = _project(np.asarray(g, dtype=float), cons)
            T, q = first_return(sys, section, p, T_max, on_z)
            disp.append(float(np.linalg.norm(sys.wrap_delta(p, q))))
            pts.append((p, T))
        except (NoReturnError, DomainError):
            disp.append(math.inf)
            pts.append((None, None))
    out = []
    for i, dv in enumerate(disp):
        if not dv < threshold:
            continue
        left = disp[i - 1] if i > 0 else math.inf
        right = disp[i + 1] if i + 1 < len(disp) else math.inf
        if not (dv <= left and dv <= right) and dv > CLOSURE_TOL:
            continue
        p, T = pts[i]
        entry = {"seed": _vec(p), "displacement": dv, "return_time": T}
        if refine:
            try:
                entry["record"] = refine_periodic(sys, section, p, T, on_z=on_z)
            except ReeblabError as e:
                entry["error"] = str(e)
        out.append(entry)
    return out


def distinct_records(sys, records, tol=1e-3):
    out = []
    for r in records:
        if all(sys.distance(r.point, q.point) >= tol for q in out):
            out.append(r)
    return out


def tangent_section(sys, p0, R0, name="tangent plane"):
    """Section through p0 orthogonal to R0 (periodic coordinates enter via sines)."""
    per = sys.periods
    p0 = np.asarray(p0, dtype=float)
    R0 = np.asarray(R0, dtype=float)

    def g(*xs):
        total = 0.0
        for i, x in enumerate(xs):
            if R0[i] == 0.0:
                continue
            if per[i] > 0:
                k = 2 * math.pi / per[i]
                d = jets.sin((x - p0[i]) * k) * (1.0 / k)
            else:
                d = x - p0[i]
            total = total + R0[i] * d
        return total

    def near(p):
        d = sys.wrap_delta(p0, p)
        mask = per > 0
        return bool(np.all(np.abs(d[mask]) < 0.25 * per[mask])) if np.any(mask) else True

    return flow.SectionSpec(g, "+", (near,) if np.any(per > 0) else (), name)


def periodic_from_seed(sys, p, T_guess=None, T_max=100.0, on_z=None):
    """Periodic orbit through (or near) p on the plane orthogonal to the field at p."""
    p = np.asarray(p, dtype=float)
    if on_z is None:
        on_z = sys.has_critical and abs(sys.z(p)) <= 1e-12
    R0 = (flow.z_flow(sys) if on_z else flow.reeb_flow(sys))(p)
    sec = tangent_section(sys, p, R0)
    if T_guess is None:
        T_guess, _ = first_return(sys, sec, p, T_max, on_z)
    return refine_periodic(sys, sec, p, T_guess, on_z=on_z)


# singular periodic orbits ---------------------------------------------------------------

@dataclass
class SingularOrbitRecord:
    seed: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray
    final_distance_plus: float
    final_distance_minus: float
    field_norm_plus: float
    field_norm_minus: float
    trace_field_norm_plus: float
    trace_field_norm_minus: float
    confirmed_plus: bool
    confirmed_minus: bool
    T_max: float
    policy: str = field(default="monotone distance over [T/10, T] and |R(p)| <= 1e-8")

    def as_dict(self):
        d = dict(self.__dict__)
        for k in ("seed", "p_plus", "p_minus"):
            d[k] = _vec(d[k])
        return d


def _limit(sys, p0, T, z_min, slack):
    f = flow.reeb_flow(sys, z_min=z_min)
    tr = flow.integrate(f, p0, (0.0, T), rtol=1e-10, atol=1e-12)
    final = tr.final
    try:
        seed = project(sys, final, on_z=True)
    except ReeblabError:
        seed = None
    if seed is None:
        return None, tr, "final state could not be projected to Z"
    zeros = find_zeros_on_Z(sys, [seed])
    if not zeros:
        return None, tr, "no zero of R on Z near the final state"
    cand = zeros[0]
    t_end = tr.t_end
    ts = np.abs(tr.times)
    window = ts >= abs(t_end) / 10.0
    dist = np.array([sys.distance(p, cand) for p in tr.states[window]])
    monotone = bool(np.all(np.diff(dist) <= slack))
    Rn = float(np.linalg.norm(reeb_on_Z(sys, cand, tol=1e-10).vector))
    return {"point": cand, "distance": float(dist[-1]) if dist.size else math.inf,
            "monotone": monotone, "field_norm": Rn,
            "z": abs(sys.z(cand)),
            "trace_norm": float(np.linalg.norm(tr.derivs[-1]))}, tr, None


def detect_singular_orbit(sys, p0, T_max=20.0, z_min=1e-15, slack=1e-12):
    """Certify that the orbit through p0 limits to zeros of R on Z in both time directions.

    The near-critical guard is off; convergence is declared when the distance to
    the candidate zero decreases monotonically over the last decade of time
    [T/10, T] (up to ``slack`` for roundoff), the final distance is <= 1e-3 and
    |R(p)| <= 1e-8 at the zero.
    """
    p0 = np.asarray(p0, dtype=float)
    res = {}
    for sign, key in ((1.0, "plus"), (-1.0, "minus")):
        lim, tr, why = _limit(sys, p0, sign * T_max, z_min, slack)
        if lim is None:
            raise InconclusiveError(f"{key} limit: {why}",
                                    {"direction": key, "t_end": tr.t_end,
                                     "final": _vec(tr.final), "reason": tr.reason})
        ok = (lim["distance"] <= 1e-3 and lim["monotone"] and lim["field_norm"] <= 1e-8
              and lim["z"] <= 1e-10)
        if not ok:
            raise InconclusiveError(f"{key} limit not certified",
                                    {"direction": key, **{k: (_vec(v) if k == "point" else v)
                                                          for k, v in lim.items()}})
        res[key] = lim
    return SingularOrbitRecord(
        p0, res["plus"]["point"], res["minus"]["point"],
        res["plus"]["distance"], res["minus"]["distance"],
        res["plus"]["field_norm"], res["minus"]["field_norm"],
        res["plus"]["trace_norm"], res["minus"]["trace_norm"],
        True, True, float(T_max))


# monotone witnesses -----------------------------------------------------------------

def _resolve_witness(sys, witness, expected_rate):
    if isinstance(witness, str):
        w, r = sys.f_witnesses[witness]
        return w, (r if expected_rate is None else expected_rate)
    return witness, expected_rate


def witness_check(sys, trace, witness, expected_rate=None, rate_tol=1e-8, use_rate=True):
    """Strict monotonicity of a witness along a trace, and its rate from the field.

    ``witness`` is a system witness name or a callable of the coordinates.  The
    rate is grad(w) . p'(t) with p'(t) the stored field values, not differences.
    """
    w, rate = _resolve_witness(sys, witness, expected_rate)
    if not use_rate:
        rate = None
    vals = np.array([float(jets.value_of(w(*p))) for p in trace.states])
    inc = np.diff(vals)
    if trace.times[-1] < trace.times[0]:
        inc = -inc
    sign = 0
    if inc.size:
        if np.all(inc > 0):
            sign = 1
        elif np.all(inc < 0):
            sign = -1
    max_res = 0.0
    if rate is not None:
        for p, v in zip(trace.states, trace.derivs):
            g = jets.jet_eval(w, p, 1).grad
            max_res = max(max_res, abs(float(g @ v) - float(jets.value_of(rate(*p)))))
    ok = sign != 0 and max_res <= rate_tol
    return {"monotone": sign != 0, "direction": sign,
            "min_increment": float(np.min(np.abs(inc))) if inc.size else 0.0,
            "max_rate_residual": max_res if rate is not None else None,
            "samples": int(len(vals)), "verdict": "pass" if ok else "fail"}


# trap diagnostics --------------------------------------------------------------------

def trap_closed_form(t, fp):
    """(R_t, R_xi, R_theta) from the trap formula with profile value fp = f'(t)."""
    e = math.exp(-2.0 * t)
    return np.array([0.0, e / fp, (fp - 1.0) / fp * e])


def trap_diagnostics(sys, ts, xi=0.0, th=0.0, tol=1e-10):
    """Per cylinder t = const: solved theta', xi' and the turning per unit xi."""
    fp = sys.functions["fp"]
    rows = []
    for t in ts:
        p = np.array([t, xi, th])
        R = reeb_field(sys, p)
        if t == 0.0:
            rows.append({"t": 0.0, "theta_rate": float(R[2]), "xi_rate": float(R[1]),
                         "dtheta_per_xi": None, "f_prime_minus_1": None,
                         "formula_error": float(np.max(np.abs(R - [0.0, 0.0, 1.0])))})
            continue
        f = float(jets.value_of(fp(t)))
        ref = trap_closed_form(t, f)
        err = float(np.max(np.abs(R - ref)) / max(1.0, float(np.max(np.abs(ref)))))
        rows.append({"t": float(t), "theta_rate": float(R[2]), "xi_rate": float(R[1]),
                     "dtheta_per_xi": float(R[2] / R[1]), "f_prime_minus_1": f - 1.0,
                     "formula_error": err})
    turning = [(r["dtheta_per_xi"], r["t"]) for r in rows if r["dtheta_per_xi"] is not None]
    worst = max(turning, default=(0.0, None))
    violated = any(abs(v) > 1e-9 for v, _ in turning)
    pos = sorted((r for r in rows if r["t"] > 0 and r["dtheta_per_xi"] is not None),
                 key=lambda r: r["t"])
    blowup = (len(pos) >= 2 and all(a["dtheta_per_xi"] >= b["dtheta_per_xi"]
                                     for a, b in zip(pos, pos[1:])))
    summary = {"max_dtheta_per_xi": worst[0], "at_t": worst[1],
               "entry_exit": "violated" if violated else "satisfied",
               "blowup_toward_Z": blowup,
               "formula_ok": all(r["formula_error"] <= tol for r in rows)}
    return rows, summary


def rotation_on_Z(sys, p):
    """Angular speed of the on-Z Reeb field (first periodic coordinate)."""
    try:
        R = reeb_on_Z(sys, p, tol=1e-9).vector
    except DegenerateThetaError:
        return 0.0
    per = sys.periods
    i = int(np.argmax(per > 0))
    return float(R[i])
