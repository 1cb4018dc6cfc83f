"""Command-line front end: verify | flow | hunt | trap | desingularize | transform-check."""

import argparse
import csv
import io
import json
import math
import os
import sys as _sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, dsl, flow, gallery, jets, orbits, reeb
from .errors import (PositionedError, ReeblabError, StepFailureError, UnknownSystemError)
from .system import load_system, project
from .verify import environment_stamp, verify_system

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# helpers --------------------------------------------------------------------------------

def threads():
    """Worker cap from REEBLAB_THREADS (default 1)."""
    raw = os.environ.get("REEBLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"REEBLAB_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"REEBLAB_THREADS must be a positive integer, got {raw!r}")
    return n


def ordered_map(fn, items):
    """Map with up to REEBLAB_THREADS workers; results keep input order."""
    items = list(items)
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def write_atomic(path, text):
    """Write text to path via a temporary file and rename; no partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def emit(text, out):
    if out:
        write_atomic(out, text)
    else:
        _sys.stdout.write(text)


def to_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return [float(v) for v in o]
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "as_dict"):
        return o.as_dict()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def parse_list(text):
    try:
        return [float(dsl.eval_ast(dsl.parse_expr(s), {})) for s in text.split(",")]
    except (ReeblabError, ValueError) as e:
        raise UsageError(f"bad number list {text!r}: {e}")


def system_params(args):
    params = {}
    for key in ("m", "k", "mu", "c", "eps"):
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    return params


def resolve_system(ref, params):
    """Builtin name (with params) or path to a system file."""
    path = Path(ref)
    if ref.endswith(".toml") or path.exists():
        if params:
            raise UsageError("parameter flags apply to builtin systems only")
        return load_system(path)
    if ref not in gallery.TEMPLATES and ref not in gallery.CORPUS:
        raise UnknownSystemError(f"unknown system {ref!r}; known: {', '.join(gallery.NAMES)}")
    allowed = set(gallery.DEFAULTS.get(ref, gallery.DEFAULTS.get(
        gallery.CORPUS.get(ref, (ref, {}))[0], {})))
    extra = set(params) - allowed
    if extra:
        raise UsageError(f"{ref} does not take {', '.join('--' + e for e in sorted(extra))}")
    return gallery.builtin(ref, params)


def parse_point(sys, text):
    try:
        return sys.point(text)
    except (ReeblabError, ValueError) as e:
        raise UsageError(f"bad point {text!r}: {e}")


def parse_points(sys, text):
    return [parse_point(sys, s) for s in text.split(";") if s.strip()]


# verify --------------------------------------------------------------------------------------

def cmd_verify(args):
    sys = resolve_system(args.system, system_params(args))
    rep = verify_system(sys, seed=args.seed, samples=args.samples, z_samples=args.z_samples)
    emit(rep.to_json(stamp=not args.no_stamp), args.out)
    print(f"{sys.name}: {rep.verdict}", file=_sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


# flow ------------------------------------------------------------------------------------------

def trace_csv(sys, tr):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *sys.names, "step"])
    for t, p, h in zip(tr.times, tr.states, tr.step_sizes):
        w.writerow([repr(float(t)), *(repr(float(v)) for v in p), repr(float(h))])
    return buf.getvalue()


def trace_json(sys, tr, meta):
    d = dict(meta)
    d.update({"system": sys.name, "coordinates": list(sys.names), "reason": tr.reason,
              "rejected": tr.rejected, "steps": tr.n_steps, "t_end": tr.t_end,
              "final": list(map(float, tr.final)), "times": tr.times,
              "states": [list(map(float, p)) for p in tr.states],
              "step_sizes": tr.step_sizes, "local_errors": tr.local_errors})
    return to_json(d)


def cmd_flow(args):
    sys = resolve_system(args.system, system_params(args))
    p0 = parse_point(sys, args.start)
    moved = 0.0
    if sys.is_level_set:
        on_z = sys.has_critical and abs(sys.z(p0)) <= 1e-12
        H = sys.f_H_on_Z if on_z else sys.f_H
        if abs(jets.value_of(H(*p0)) - sys.energy) > 1e-12:
            q = project(sys, p0, on_z=on_z)
            if q is None:
                raise UsageError("start point could not be moved onto the energy level")
            moved = sys.distance(p0, q)
            p0 = q
            print(f"start projected onto H = {sys.energy:g} (moved {moved:.3g})",
                  file=_sys.stderr)
    kind = "hamiltonian" if args.field == "hamiltonian" else "reeb"
    try:
        tr = flow.flow_system(sys, p0, args.time, kind=kind, rtol=args.tol, atol=args.tol / 100)
    except StepFailureError as e:
        state = ", ".join(repr(float(v)) for v in e.state)
        print(f"step failure at t = {e.t!r}: {e}\nlast state: {state}", file=_sys.stderr)
        return EXIT_FAIL
    meta = {"start": p0, "time": args.time, "tol": args.tol, "field": kind,
            "projected_by": moved}
    drift = None
    if sys.hamiltonian is not None:
        drift = flow.conservation_drift(tr, sys.f_H)
        meta["energy_drift"] = drift
    fmt = args.format or ("csv" if args.out and str(args.out).endswith(".csv") else "json")
    text = trace_csv(sys, tr) if fmt == "csv" else trace_json(sys, tr, meta)
    emit(text, args.out)
    final = ", ".join(f"{v:.12g}" for v in tr.final)
    print(f"termination: {tr.reason} at t = {tr.t_end:.12g}; final = ({final})", file=_sys.stderr)
    if drift is not None:
        print(f"conservation drift of H: {drift:.3g}", file=_sys.stderr)
    return EXIT_OK


# hunt ---------------------------------------------------------------------------------------------

def _hunt_periodic_one(sys, p, T_guess, T_max, on_z):
    try:
        rec = orbits.periodic_from_seed(sys, p, T_guess, T_max, on_z)
        out = rec.as_dict()
        out["revalidation"] = orbits.revalidate(sys, rec)
        if on_z and sys.is_level_set and "Pr" in sys.names and "th" in sys.names:
            pr = float(rec.point[sys.index("Pr")])
            out["expected_period"] = math.pi * (pr * pr + 2.0 * sys.energy)
            out["rotation_rate"] = orbits.rotation_on_Z(sys, rec.point)
        return {"seed": [float(v) for v in p], "record": out}
    except ReeblabError as e:
        return {"seed": [float(v) for v in p], "error": f"{type(e).__name__}: {e}"}


def cmd_hunt(args):
    sys = resolve_system(args.system, system_params(args))
    rng_seed = args.seed
    findings = []
    meta = {"system": sys.name, "mode": args.mode, "seed": rng_seed}
    if args.mode == "fixed":
        if sys.decomposition is None:
            raise UsageError(f"{sys.name} has no critical set decomposition")
        seeds = orbits.z_seed_grid(sys, args.grid, rng_seed)
        rep = orbits.zero_set_report(sys, seeds)
        for p in rep["all_zeros"]:
            R = reeb.reeb_on_Z(sys, np.array(p), tol=1e-9).vector
            findings.append({"point": p, "field_norm": float(np.linalg.norm(R)),
                             "z": abs(sys.z(np.array(p)))})
        meta["verdict"] = rep["verdict"]
        meta["families"] = rep["families"]
    elif args.mode == "periodic":
        if args.pr:
            if not (sys.is_level_set and "Pr" in sys.names):
                raise UsageError("--pr needs an RPC3BP McGehee system")
            seeds = [gallery.infinity_cylinder_point(0.0, v, sys.energy) for v in parse_list(args.pr)]
        elif args.start:
            seeds = parse_points(sys, args.start)
        else:
            seeds = list(orbits.z_seed_grid(sys, args.grid, rng_seed))
        on_z = [sys.has_critical and abs(sys.z(p)) <= 1e-12 for p in seeds]
        findings = ordered_map(
            lambda a: _hunt_periodic_one(sys, a[0], args.period, args.tmax, a[1]),
            list(zip(seeds, on_z)))
    else:
        if not args.start:
            raise UsageError("singular mode needs --from")
        for p in parse_points(sys, args.start):
            try:
                rec = orbits.detect_singular_orbit(sys, p, args.tmax)
                findings.append({"seed": p, "record": rec.as_dict()})
            except ReeblabError as e:
                findings.append({"seed": p, "error": f"{type(e).__name__}: {e}",
                                 "diagnostics": getattr(e, "diagnostics", None)})
    meta["findings"] = findings
    emit(to_json(meta), args.out)
    print(f"{len(findings)} finding(s)", file=_sys.stderr)
    return EXIT_OK


# trap ---------------------------------------------------------------------------------------------

def cmd_trap(args):
    if not args.eps > 0:
        raise UsageError("--eps must be positive")
    sys = gallery.builtin("trap_chart", {"eps": args.eps, "k": args.k})
    ts = parse_list(args.grid) if args.grid else list(np.linspace(0.0, 2 * args.eps, 9)[1:])
    rows, summary = orbits.trap_diagnostics(sys, ts)
    if (args.format or "csv") == "json":
        text = to_json({"eps": args.eps, "k": args.k, "rows": rows, "summary": summary})
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "theta_rate", "xi_rate", "dtheta_per_xi", "f_prime_minus_1",
                    "formula_error"])
        for r in rows:
            w.writerow([repr(r[k]) if r[k] is not None else "" for k in
                        ("t", "theta_rate", "xi_rate", "dtheta_per_xi", "f_prime_minus_1",
                         "formula_error")])
        text = buf.getvalue()
    emit(text, args.out)
    flag = "entry-exit violated" if summary["entry_exit"] == "violated" else "entry-exit holds"
    print(f"{flag}; max dtheta per unit xi = {summary['max_dtheta_per_xi']:.6g} "
          f"at t = {summary['at_t']}; profile k = {args.k}", file=_sys.stderr)
    return EXIT_OK


# desingularize ------------------------------------------------------------------------------------

def cmd_desingularize(args):
    sys = resolve_system(args.system, {} if args.m is None else {"m": args.m})
    smooth = reeb.desingularize_even(sys, args.eps)
    from .system import dump_system, sample_points
    rng = np.random.default_rng(args.seed)
    worst, n = 0.0, 0
    for p in sample_points(sys, rng, args.samples, off_z_min=args.eps * 1.01):
        d = float(np.max(np.abs(reeb.reeb_off_Z(sys, p).vector
                                - reeb.reeb_off_Z(smooth, p).vector)))
        worst = max(worst, d)
        n += 1
    emit(dump_system(smooth), args.out)
    report = {"system": sys.name, "eps": args.eps, "outside_collar_samples": n,
              "outside_collar_max_difference": worst, "tolerance": 1e-12,
              "verdict": "pass" if worst <= 1e-12 else "fail"}
    print(to_json(report), end="", file=_sys.stderr)
    return EXIT_OK if worst <= 1e-12 else EXIT_FAIL


# transform-check -------------------------------------------------------------------------------

def _random_cartesian(rng, mu):
    while True:
        q = rng.uniform(-3.0, 3.0, 2)
        r = math.hypot(*q)
        if r < 0.3:
            continue
        if math.hypot(q[0] - mu, q[1]) < 0.2 or math.hypot(q[0] + 1 - mu, q[1]) < 0.2:
            continue
        return np.concatenate([q, rng.uniform(-2.0, 2.0, 2)])


def transform_report(samples=100, seed=0, mu=gallery.DEFAULT_MU):
    rng = np.random.default_rng(seed)
    pts = [_random_cartesian(rng, mu) for _ in range(samples)]
    entries = []
    for name, spec in gallery.TRANSFORMS.items():
        src = pts
        if spec.source[0] == "r":
            src = [gallery.transform(p, "cartesian_to_polar") for p in pts]
        rt = max(float(np.max(np.abs(spec.apply(spec.apply(p), "inverse") - p))) for p in src)
        can = max(spec.canonicity_residual(p) for p in src)
        entries.append({"check": f"{name}_roundtrip", "worst": rt, "tolerance": 1e-12,
                        "verdict": "pass" if rt <= 1e-12 else "fail"})
        entries.append({"check": f"{name}_canonicity", "worst": can, "tolerance": 1e-9,
                        "verdict": "pass" if can <= 1e-9 else "fail"})
    hd = 0.0
    for p in pts:
        hc = gallery.rpc3bp_hamiltonian("cartesian", p, mu)
        hp = gallery.rpc3bp_hamiltonian("polar", gallery.transform(p, "cartesian_to_polar"), mu)
        hd = max(hd, abs(hc - hp))
    entries.append({"check": "hamiltonian_polar_vs_cartesian", "worst": hd, "tolerance": 1e-11,
                    "verdict": "pass" if hd <= 1e-11 else "fail"})
    verdict = "pass" if all(e["verdict"] == "pass" for e in entries) else "fail"
    return {"samples": samples, "seed": seed, "mu": mu, "entries": entries, "verdict": verdict}


def cmd_transform_check(args):
    mu = gallery.DEFAULT_MU if args.mu is None else args.mu
    rep = transform_report(args.samples, args.seed, mu)
    if not args.no_stamp:
        rep["environment"] = environment_stamp()
    emit(to_json(rep), args.out)
    return EXIT_OK if rep["verdict"] == "pass" else EXIT_FAIL


# parser ------------------------------------------------------------------------------------------------

def _common(p, tol_default=1e-10):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--tol", type=float, default=tol_default, help="relative tolerance")
    p.add_argument("--out", help="output file (written atomically); default stdout")
    p.add_argument("--format", choices=("json", "csv"), help="output format")


def _params(p):
    p.add_argument("--m", type=int, help="singularity order (t3_bm)")
    p.add_argument("--k", type=int, help="profile order (trap_chart)")
    p.add_argument("--mu", type=float, help="mass ratio (rpc3bp_*)")
    p.add_argument("--c", "--energy", dest="c", type=float, help="energy level (rpc3bp_*)")
    p.add_argument("--eps", type=float, help="trap width (trap_chart)")


def build_parser():
    ap = argparse.ArgumentParser(prog="reeblab", description=__doc__)
    ap.add_argument("--version", action="version", version=f"reeblab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the invariant battery on a system")
    p.add_argument("system", help="builtin name or path to a system file")
    _common(p)
    _params(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--z-samples", type=int, default=200)
    p.add_argument("--no-stamp", action="store_true", help="omit the environment stamp")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("flow", help="integrate a Reeb or Hamiltonian flow")
    p.add_argument("system")
    _common(p)
    _params(p)
    p.add_argument("--from", dest="start", required=True, help='start point, e.g. "pi/2,0,pi/2"')
    p.add_argument("--time", type=float, required=True, help="final time (negative: backward)")
    p.add_argument("--field", choices=("reeb", "hamiltonian"), default="reeb")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("hunt", help="search for zeros, periodic or singular orbits")
    p.add_argument("system")
    _common(p)
    _params(p)
    modes = p.add_subparsers(dest="mode", required=True)
    m = modes.add_parser("fixed", help="zeros of R on Z")
    m.add_argument("--grid", type=int, default=64, help="number of seeds on Z")
    m = modes.add_parser("periodic", help="periodic orbits by Poincare-Newton shooting")
    m.add_argument("--pr", help="comma list of P_r values on the infinity cylinder")
    m.add_argument("--from", dest="start", help='seed points separated by ";"')
    m.add_argument("--grid", type=int, default=10, help="number of random on-Z seeds")
    m.add_argument("--period", type=float, help="period guess (default: first return)")
    m.add_argument("--tmax", type=float, default=100.0)
    m = modes.add_parser("singular", help="orbits joining zeros of R on Z")
    m.add_argument("--from", dest="start", help='seed points separated by ";"')
    m.add_argument("--tmax", type=float, default=20.0)
    p.set_defaults(func=cmd_hunt)

    p = sub.add_parser("trap", help="trap chart diagnostics table")
    _common(p)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--grid", help="comma list of t values")
    p.set_defaults(func=cmd_trap)

    p = sub.add_parser("desingularize", help="write the smooth system for an even-order form")
    p.add_argument("system")
    _common(p)
    p.add_argument("--m", type=int, help="singularity order (t3_bm)")
    p.add_argument("--eps", type=float, required=True, help="collar width")
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_desingularize)

    p = sub.add_parser("transform-check", help="RPC3BP chart round trips and canonicity")
    _common(p)
    p.add_argument("--mu", type=float)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--no-stamp", action="store_true")
    p.set_defaults(func=cmd_transform_check)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except PositionedError as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_USAGE
    except (UsageError, UnknownSystemError) as e:
        print(f"error: {e.args[0] if e.args else e}", file=_sys.stderr)
        return EXIT_USAGE
    except (ReeblabError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=_sys.stderr)
        return EXIT_FAIL
    except OSError as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
