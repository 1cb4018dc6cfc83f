"""Batch verification of a system's structural invariants."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ReeblabError
from .reeb import (contact_coefficient, decompose_on_Z, liouville_margin, r_plus_invariance_check,
                   reeb_off_Z, reeb_on_Z, symplectization_check, theta_residual)
from .system import sample_points

ALPHA_TOL = 1e-9
DALPHA_TOL = 1e-8
THETA_TOL = 1e-8
TANGENCY_TOL = 1e-9
CONSISTENCY_TOL = 1e-10
COEFF_MIN = 1e-6
ZERO_TOL = 1e-10
SPREAD_MIN = 0.1


@dataclass
class CheckEntry:
    check: str
    samples: int
    worst: float
    tolerance: float
    verdict: str             # pass | fail | info
    comparison: str = "<="
    detail: dict = field(default_factory=dict)

    def as_dict(self):
        d = {"check": self.check, "samples": self.samples, "worst": _clean(self.worst),
             "tolerance": self.tolerance, "comparison": self.comparison,
             "verdict": self.verdict}
        if self.detail:
            d["detail"] = {k: _clean(v) for k, v in self.detail.items()}
        return d


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _entry(check, values, tol, comparison="<=", info=False, detail=None):
    values = [float(v) for v in values]
    if not values:
        return CheckEntry(check, 0, float("nan"), tol, "info" if info else "fail", comparison,
                          detail or {"note": "no samples"})
    if comparison == "<=":
        worst = max(values)
        ok = worst <= tol
    else:                                 # ">=": the smallest value must reach tol
        worst = min(values)
        ok = worst >= tol
    verdict = "info" if info else ("pass" if ok else "fail")
    return CheckEntry(check, len(values), worst, tol, verdict, comparison, detail or {})


def environment_stamp():
    return {"reeblab": __version__, "numpy": np.__version__, "float": "IEEE-754 binary64"}


@dataclass
class VerificationReport:
    system: str
    spec_hash: str
    seed: int
    entries: list
    environment: dict = field(default_factory=environment_stamp)

    @property
    def verdict(self):
        return "pass" if all(e.verdict != "fail" for e in self.entries) else "fail"

    @property
    def passed(self):
        return self.verdict == "pass"

    def as_dict(self, stamp=True):
        d = {"system": self.system, "spec_hash": self.spec_hash, "seed": self.seed,
             "entries": [e.as_dict() for e in self.entries], "verdict": self.verdict}
        if stamp:
            d["environment"] = self.environment
        return d

    def to_json(self, stamp=True):
        return json.dumps(self.as_dict(stamp), indent=2, sort_keys=True) + "\n"


def _off_z_checks(sys, rng, samples):
    pts = sample_points(sys, rng, samples)
    a_res, d_res, tang, coeffs, cons, margins = [], [], [], [], [], []
    failures = 0
    for p in pts:
        try:
            sol = reeb_off_Z(sys, p)
        except ReeblabError:
            failures += 1
            continue
        a_res.append(sol.alpha_residual)
        d_res.append(sol.dalpha_residual)
        if sys.is_level_set:
            tang.append(sol.constraint_residual)
        if sys.manifold_dim in (1, 3):
            coeffs.append(contact_coefficient(sys, p))
        if sys.alpha is not None and sys.singular_form is not None and sys.decomposition_valid(p):
            cons.append(sys.singular_form.consistency(p))
        if sys.is_level_set and sys.hamiltonian.liouville is not None:
            margins.append(liouville_margin(sys, p)[1])
    n = len(pts)
    out = [
        _entry("reeb_alpha_residual", a_res, ALPHA_TOL, detail={"solve_failures": failures}),
        _entry("reeb_dalpha_residual", d_res, DALPHA_TOL),
    ]
    if failures:
        out.append(CheckEntry("reeb_solve_failures", n, float(failures), 0.0, "fail"))
    if coeffs:
        signs = {int(np.sign(c)) for c in coeffs}
        e = _entry("contact_coefficient", [abs(c) for c in coeffs], COEFF_MIN, ">=",
                   detail={"sign": sorted(signs)[0] if len(signs) == 1 else 0,
                           "min": min(coeffs), "max": max(coeffs)})
        if len(signs) != 1:
            e.verdict = "fail"
        out.append(e)
    if cons:
        out.append(_entry("decomposition_consistency", cons, CONSISTENCY_TOL))
    if tang:
        out.append(_entry("level_set_tangency", tang, TANGENCY_TOL))
    if margins:
        out.append(_entry("liouville_margin", margins, 0.0, ">="))
        if min(margins) <= 0.0:
            out[-1].verdict = "fail"
    return out


def _on_z_checks(sys, rng, samples):
    if sys.decomposition is None or sys.manifold_dim != 3:
        return []
    try:
        pts = sample_points(sys, rng, samples, on_z=True)
    except ReeblabError:
        return [CheckEntry("on_z_sampling", 0, float("nan"), 0.0, "fail")]
    res, us, norms, dets = [], [], [], []
    for p in pts:
        fr = decompose_on_Z(sys, p)
        us.append(fr.u)
        dets.append(abs(fr.theta_det))
        R = reeb_on_Z(sys, p).vector
        norms.append(float(np.linalg.norm(R)))
        res.append(theta_residual(sys, p, R))
    out = [_entry("theta_residual", res, THETA_TOL),
           _entry("theta_nondegenerate", dets, 1e-12, ">=")]
    spread = (max(us) - min(us)) if us else 0.0
    out.append(CheckEntry("u_spread_on_z", len(us), spread, SPREAD_MIN, "info", ">="))
    if sys.expect.get("reeb_zero_on_z"):
        out.append(_entry("reeb_zero_on_z", norms, ZERO_TOL))
    return out


def _symplectization_checks(sys, rng, samples):
    inner = sys.symplectization
    pts = sample_points(inner, rng, samples)
    ss = rng.uniform(-1.0, 1.0, len(pts))
    res, dh = [], []
    for p, s in zip(pts, ss):
        r = symplectization_check(inner, p, s)
        res.append(r["residual"])
        dh.append(r["dH_residual"])
    return [_entry("symplectization_residual", res, 1e-9),
            _entry("symplectization_dH", dh, 1e-9)]


def verify_system(sys, seed=0, samples=1000, z_samples=200, collar_samples=100):
    """Run the invariant battery; deterministic for fixed (spec, seed)."""
    rng = np.random.default_rng(seed)
    if sys.symplectization is not None:
        entries = _symplectization_checks(sys, rng, samples)
    else:
        entries = _off_z_checks(sys, rng, samples)
        entries += _on_z_checks(sys, rng, z_samples)
        if sys.decomposition is not None and sys.has_critical:
            rep = r_plus_invariance_check(sys, samples=collar_samples, seed=seed)
            entries.append(CheckEntry(
                "r_plus_invariance", rep["samples"],
                max(rep["sup_du_dz"], rep["sup_dbeta_dz"]), rep["tolerance"], "info",
                detail={"verdict": rep["verdict"], "sup_du_dz": rep["sup_du_dz"],
                        "sup_dbeta_dz": rep["sup_dbeta_dz"]}))
    return VerificationReport(sys.name, sys.spec_hash, int(seed), entries)
