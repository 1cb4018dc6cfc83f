"""Adaptive Dormand-Prince 5(4) integration, dense output and section events."""

import math
from dataclasses import dataclass
from dataclasses import field as dataclass_field

import numpy as np

from . import jets
from .errors import (DegenerateError, DegenerateThetaError, DomainError, NearCriticalError,
                     OffLevelSetError, SingularPointError, StepFailureError)

RTOL = 1e-10
ATOL = 1e-12
H_MIN = 1e-14
SECTION_TOL = 1e-11

# Dormand-Prince coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4

REASONS = ("time-out", "event", "near-critical", "domain-error")


class _Guarded(Exception):
    """Internal: a stage left the admissible region."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


def _stage_eval(f, y):
    try:
        v = np.asarray(f(y), dtype=float)
    except (NearCriticalError, SingularPointError):
        raise _Guarded("near-critical")
    except (DomainError, OffLevelSetError, DegenerateThetaError, DegenerateError,
            OverflowError, ZeroDivisionError, ValueError):
        raise _Guarded("domain-error")
    if not np.all(np.isfinite(v)):
        raise _Guarded("domain-error")
    return v


def dp_step(f, t, y, h, k0=None):
    """One Dormand-Prince step.  Returns (y_new, error vector, last stage)."""
    k = [None] * 7
    k[0] = _stage_eval(f, y) if k0 is None else k0
    for i in range(1, 7):
        dy = sum(a * kj for a, kj in zip(_A[i], k[:i]))
        k[i] = _stage_eval(f, y + h * dy)
    K = np.array(k)
    y_new = y + h * (_B5 @ K)
    err = h * (_E @ K)
    return y_new, err, k[6]


@dataclass
class SectionSpec:
    """A scalar section g(p) = 0 crossed in the given direction.

    ``func`` takes the coordinates as separate arguments and must accept jets.
    ``filters`` are predicates on the crossing point; all must hold.
    """
    func: object
    direction: str = "+"
    filters: tuple = ()
    name: str = "section"

    def __post_init__(self):
        if self.direction not in ("+", "-", "both"):
            raise ValueError("direction must be '+', '-' or 'both'")

    def value(self, p):
        return float(jets.value_of(self.func(*p)))

    def values(self, points):
        return np.array([self.value(p) for p in points])

    def grad(self, p):
        j = jets.jet_eval(self.func, p, 1)
        return j.grad if isinstance(j, jets.Jet2) else np.zeros(len(p))

    def accepts(self, g0, g1):
        if self.direction == "+":
            return g0 < 0.0 <= g1
        if self.direction == "-":
            return g0 > 0.0 >= g1
        return (g0 < 0.0 <= g1) or (g0 > 0.0 >= g1)


@dataclass
class OrbitTrace:
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    step_sizes: np.ndarray
    local_errors: np.ndarray
    rejected: int
    reason: str
    rtol: float = RTOL
    atol: float = ATOL
    vector_field: object = dataclass_field(default=None, repr=False)
    events: list = dataclass_field(default_factory=list)

    def __post_init__(self):
        for name in ("times", "states", "derivs", "step_sizes", "local_errors"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t_end(self):
        return float(self.times[-1])

    @property
    def final(self):
        return self.states[-1].copy()

    @property
    def n_steps(self):
        return len(self.times) - 1

    def _segment(self, t):
        ts = self.times
        if ts[-1] >= ts[0]:
            i = int(np.searchsorted(ts, t, side="right")) - 1
        else:
            i = len(ts) - 1 - int(np.searchsorted(ts[::-1], t, side="left"))
        return min(max(i, 0), len(ts) - 2)

    def dense(self, t):
        """Cubic Hermite interpolant of the stored steps."""
        if len(self.times) == 1:
            return self.states[0].copy()
        i = self._segment(t)
        return _hermite(self.times[i], self.times[i + 1], self.states[i], self.states[i + 1],
                        self.derivs[i], self.derivs[i + 1], t)

    def dense_derivative(self, t):
        i = self._segment(t)
        return _hermite_dt(self.times[i], self.times[i + 1], self.states[i], self.states[i + 1],
                           self.derivs[i], self.derivs[i + 1], t)

    def exact(self, t):
        """State at t by a single Dormand-Prince step from the enclosing stored step."""
        i = self._segment(t)
        h = t - self.times[i]
        if h == 0.0:
            return self.states[i].copy()
        y, _, _ = dp_step(self.vector_field, self.times[i], self.states[i], h, self.derivs[i])
        return y


def _hermite(t0, t1, y0, y1, f0, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _hermite_dt(t0, t1, y0, y1, f0, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    d00 = 6 * s * s - 6 * s
    d10 = 3 * s * s - 4 * s + 1
    d01 = -d00
    d11 = 3 * s * s - 2 * s
    return (d00 * y0 + d01 * y1) / h + d10 * f0 + d11 * f1


def _err_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, direction, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    try:
        f1 = _stage_eval(f, y0 + direction * h0 * f0)
    except _Guarded:
        return h0
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate(field, p0, t_span, rtol=RTOL, atol=ATOL, tol=None, max_step=math.inf,
              guard=None, section=None, event_t_min=0.0, event_count=1,
              max_steps=200000, h0=None):
    """Integrate p' = field(p) over ``t_span`` = (t0, t1); t1 < t0 runs backward.

    ``tol`` sets rtol (and atol = rtol/100) in one go.  ``guard`` is an optional
    predicate; when it returns True at an accepted state the run stops with
    reason "near-critical".  With ``section`` the run stops at the
    ``event_count``-th accepted crossing at least ``event_t_min`` after t0.
    """
    if tol is not None:
        rtol, atol = float(tol), float(tol) / 100.0
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    t0, t1 = float(t_span[0]), float(t_span[1])
    direction = 1.0 if t1 >= t0 else -1.0
    y = np.array(p0, dtype=float)
    times, states, derivs, hs, errs = [t0], [y.copy()], [], [0.0], [0.0]
    rejected = 0
    reason = "time-out"
    events = []

    def finish(reason_):
        if len(derivs) < len(states):
            try:
                derivs.append(_stage_eval(field, states[-1]))
            except _Guarded:
                derivs.append(derivs[-1] if derivs else np.zeros_like(y))
        return OrbitTrace(np.array(times), np.array(states), np.array(derivs), np.array(hs),
                          np.array(errs), rejected, reason_, rtol, atol, field, events)

    if guard is not None and guard(y):
        return finish("near-critical")
    try:
        f0 = _stage_eval(field, y)
    except _Guarded as g:
        return finish(g.reason)
    derivs.append(f0)
    if t1 == t0:
        return finish("time-out")
    h = abs(h0) if h0 else _initial_step(field, t0, y, f0, direction, rtol, atol)
    h = min(h, max_step, abs(t1 - t0))
    t = t0
    steps = 0
    while direction * (t1 - t) > 0:
        steps += 1
        if steps > max_steps:
            break
        h = min(h, abs(t1 - t), max_step)
        last = abs(t1 - t) - h <= 1e-12 * max(1.0, abs(t))
        if last:
            h = abs(t1 - t)
        try:
            y_new, err, f_new = dp_step(field, t, y, direction * h, f0)
        except _Guarded as g:
            rejected += 1
            h *= 0.5
            if h < H_MIN:
                reason = g.reason
                return finish(reason)
            continue
        en = _err_norm(err, y, y_new, rtol, atol)
        if en > 1.0:
            rejected += 1
            h *= max(0.2, 0.9 * en ** -0.2)
            if h < H_MIN:
                raise StepFailureError(f"step size underflow at t = {t:.17g}", t, y.copy())
            continue
        t_new = t1 if last else t + direction * h
        times.append(t_new)
        states.append(y_new)
        derivs.append(f_new)
        hs.append(direction * h)
        errs.append(float(np.max(np.abs(err))))
        t_old, y_old, f_old = t, y, f0
        t, y, f0 = t_new, y_new, f_new
        factor = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
        h *= factor
        if section is not None:
            for hit in _step_crossings(field, section, t_old, y_old, f_old, t, y, f0):
                if direction * (hit[0] - t0) < event_t_min:
                    continue
                events.append(hit)
                if len(events) >= event_count:
                    tc, pc = hit
                    times[-1], states[-1] = tc, pc
                    hs[-1] = tc - t_old
                    try:
                        derivs[-1] = _stage_eval(field, pc)
                    except _Guarded:
                        pass
                    return finish("event")
        if guard is not None and guard(y):
            return finish("near-critical")
    return finish(reason)


SCAN_RESOLUTION = 0.25


def _step_crossings(field, section, ta, ya, fa, tb, yb, fb, nsub=4):
    """Accepted crossings inside one step, scanning the interpolant on sub-intervals.

    Long steps are cut so that no sub-interval moves the state by more than
    SCAN_RESOLUTION in any coordinate.
    """
    travel = float(np.max(np.abs(yb - ya))) if len(ya) else 0.0
    nsub = int(min(256, max(nsub, math.ceil(travel / SCAN_RESOLUTION))))
    ts = np.linspace(ta, tb, nsub + 1)
    ys = [ya] + [_hermite(ta, tb, ya, yb, fa, fb, t) for t in ts[1:-1]] + [yb]
    gs = section.values(ys)
    out = []
    for i in range(nsub):
        if section.accepts(gs[i], gs[i + 1]):
            hit = _refine_crossing(field, section, ta, ya, fa, tb, yb, fb, ts[i], ts[i + 1])
            if hit is not None:
                out.append(hit)
    return out


def _refine_crossing(field, section, ta, ya, fa, tb, yb, fb, lo=None, hi=None):
    """Bisection on the Hermite interpolant over [lo, hi], then Newton with exact re-stepping."""
    lo = ta if lo is None else lo
    hi = tb if hi is None else hi
    glo = section.value(_hermite(ta, tb, ya, yb, fa, fb, lo)) if lo != ta else section.value(ya)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        gm = section.value(_hermite(ta, tb, ya, yb, fa, fb, mid))
        if (gm < 0) == (glo < 0) and gm != 0.0:
            lo, glo = mid, gm
        else:
            hi = mid
        if abs(hi - lo) <= 1e-9 * max(1.0, abs(tb - ta)):
            break
    tc = 0.5 * (lo + hi)
    pc = None
    for _ in range(8):
        h = tc - ta
        try:
            pc = ya.copy() if h == 0.0 else dp_step(field, ta, ya, h, fa)[0]
            v = _stage_eval(field, pc)
        except _Guarded:
            return None
        g = section.value(pc)
        dg = float(section.grad(pc) @ v)
        if abs(g) <= SECTION_TOL or dg == 0.0:
            break
        step = g / dg
        tc = tc - step
        if abs(step) <= 1e-15 * max(1.0, abs(tc)):
            h = tc - ta
            pc = dp_step(field, ta, ya, h, fa)[0] if h != 0.0 else ya.copy()
            break
    if pc is None:
        return None
    for flt in section.filters:
        if not flt(pc):
            return None
    return float(tc), pc


def section_crossings(trace, section, t_min=None):
    """All crossings of ``section`` along a trace, refined to |g| <= 1e-11."""
    out = []
    ts, ys, fs = trace.times, trace.states, trace.derivs
    for i in range(len(ts) - 1):
        for hit in _step_crossings(trace.vector_field, section, ts[i], ys[i], fs[i],
                                   ts[i + 1], ys[i + 1], fs[i + 1]):
            if t_min is None or abs(hit[0] - ts[0]) >= t_min:
                out.append(hit)
    return out


def conservation_drift(trace, F):
    """max |F(p(t)) - F(p0)| over the stored states."""
    v0 = float(jets.value_of(F(*trace.states[0])))
    return max((abs(float(jets.value_of(F(*p))) - v0) for p in trace.states), default=0.0)


def reintegrate_step(trace, i, factor=0.5):
    """Re-run stored step i -> i+1 adaptively at ``factor`` times the tolerance."""
    tr = integrate(trace.vector_field, trace.states[i], (trace.times[i], trace.times[i + 1]),
                   rtol=trace.rtol * factor, atol=trace.atol * factor)
    return tr.final


# vector fields of systems -------------------------------------------------------------

def reeb_flow(sys, z_min=None):
    """Off-Z Reeb field of a system as a closure p -> R(p)."""
    from .reeb import Z_MIN, reeb_off_Z
    zm = Z_MIN if z_min is None else z_min

    def f(p):
        return reeb_off_Z(sys, p, zm, check_level=False).vector
    return f


def z_flow(sys, tol=1e-6):
    """Reeb field on Z (iota_R Theta = du) as a closure, tolerant to drift off Z."""
    from .reeb import reeb_on_Z

    def f(p):
        return reeb_on_Z(sys, p, tol=tol, check_level=False).vector
    return f


def hamiltonian_flow(sys):
    """X_H with iota_X omega = dH."""
    if sys.hamiltonian is None or not sys.hamiltonian.omega:
        raise ValueError(f"{sys.name} has no Hamiltonian data")

    def f(p):
        W = sys.omega_matrix(p)
        dH = sys.H_jet(p).grad
        return np.linalg.solve(W.T, dH)
    return f


def guard_band(sys, band=1e-6):
    """Predicate true when |z| <= band."""
    if not sys.has_critical:
        return None

    def g(p):
        return abs(sys.z(p)) <= band
    return g


def flow_system(sys, p0, t, kind="reeb", tol=None, rtol=RTOL, atol=ATOL, band=1e-6, **kw):
    """Integrate a system's Reeb or Hamiltonian flow from p0 for time t."""
    p0 = np.asarray(p0, dtype=float)
    if kind == "hamiltonian":
        return integrate(hamiltonian_flow(sys), p0, (0.0, t), rtol=rtol, atol=atol, tol=tol, **kw)
    if sys.has_critical and abs(sys.z(p0)) <= 1e-12:
        return integrate(z_flow(sys), p0, (0.0, t), rtol=rtol, atol=atol, tol=tol, **kw)
    guard = guard_band(sys, band) if band else None
    return integrate(reeb_flow(sys), p0, (0.0, t), rtol=rtol, atol=atol, tol=tol,
                     guard=guard, **kw)
