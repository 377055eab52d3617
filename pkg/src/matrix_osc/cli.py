"""Command-line front end.

Exit statuses: 0 success, 2 bad input, 3 numerical failure, 4 an example
disagrees with its expected qualitative outcome.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import criteria as cr
from .expr import EvalError, ExprError, depends_on_t, evaluate, parse
from .integrate import IntegrationError, IntegratorConfig, integrate_matrix_system, integrate_riccati, integrate_scalar_system
from .oscillation import check_prepared, classify_solution, detect_scalar_zeros, detect_zeros, verify_sign_identity
from .quadrature import QuadratureError
from .system import PRESETS, SystemError_, load_problem, preset

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def time_value(text: str) -> float:
    """A time given as a number or a constant expression such as 2*pi."""
    try:
        node = parse(text)
        if depends_on_t(node):
            raise argparse.ArgumentTypeError(f"{text!r} must not depend on t")
        value = float(evaluate(node, 0.0))
    except ExprError as exc:
        raise argparse.ArgumentTypeError(f"bad time {text!r}: {exc}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"time {text!r} is not finite")
    return value


def _parse_params(text: str | None) -> dict:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise InputError(f"bad parameter {item!r}; expected name=value")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise InputError(f"parameter {k.strip()} is not a number: {v!r}") from None
    return out


def _system(args, **overrides):
    params = _parse_params(getattr(args, "params", None))
    if getattr(args, "lam", None) is not None:
        params["lam"] = args.lam
    params.update(overrides)
    if args.problem:
        if params:
            raise InputError("--params/--lambda only apply to presets")
        return load_problem(args.problem)
    if not args.preset:
        raise InputError("give --problem FILE or --preset NAME")
    return preset(args.preset, **params)


def _cfg(args) -> IntegratorConfig:
    return IntegratorConfig(rtol=args.rtol, atol=args.atol)


def _horizon(args, cs, default_len=20.0) -> float:
    h = args.horizon if args.horizon is not None else cs.t0 + default_len
    if h <= cs.t0:
        raise InputError(f"horizon {h} must exceed t0 = {cs.t0}")
    return float(h)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_default)


def _default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _emit(args, name: str, obj) -> None:
    text = _dump(obj) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
    if args.json or not args.out:
        sys.stdout.write(text)


def random_prepared(rng, n: int):
    """Phi0 = I, Psi0 = Y0 with Y0 symmetric: prepared at t0."""
    out = []
    for _ in range(n):
        Y = rng.normal(size=(2, 2))
        out.append((np.eye(2), 0.5 * (Y + Y.T)))
    return out


def random_cone(rng, n: int, mode: str = "sign_pattern_plus"):
    """Phi0 = I, Psi0 = Y0 with Y0 in the invariant cone of the lemma."""
    sgn = 1.0 if mode == "sign_pattern_plus" else -1.0
    out = []
    for _ in range(n):
        y11, y22 = rng.uniform(0.1, 2.0, size=2)
        y12, y21 = rng.uniform(0.0, 1.0, size=2)
        out.append((np.eye(2), np.array([[y11, sgn * y12], [-sgn * y21, y22]])))
    return out


# --------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> int:
    cs = _system(args)
    horizon = _horizon(args, cs)
    rng = np.random.default_rng(args.seed)
    init = args.init or ("cone" if cs.name == "thm33_demo" else "prepared")
    starts = random_cone(rng, args.count) if init == "cone" else random_prepared(rng, args.count)
    out = Path(args.out) if args.out else None
    solutions = []
    for i, (Phi0, Psi0) in enumerate(starts):
        traj = integrate_matrix_system(cs, Phi0, Psi0, (cs.t0, horizon), _cfg(args))
        if traj.termination.status != "reached_end":
            raise IntegrationError(f"solution {i}: {traj.termination.status} at t = {traj.termination.t}: {traj.termination.reason}")
        cls = classify_solution(traj, horizon)
        prep = check_prepared(traj)
        rec = {
            "index": i,
            "Phi0": Phi0.tolist(),
            "Psi0": Psi0.tolist(),
            "classification": cls.to_dict(),
            "zeros": cls.zeros.to_dict()["zeros"],
            "prepared": prep.to_dict(),
            "nodes": traj.n_nodes,
        }
        solutions.append(rec)
        if out:
            out.mkdir(parents=True, exist_ok=True)
            traj.to_csv(out / f"trajectory_{i:02d}.csv")
            (out / f"zeros_{i:02d}.json").write_text(_dump(rec["zeros"]) + "\n", encoding="utf-8")
    summary = {
        "system": cs.name,
        "t0": cs.t0,
        "horizon": horizon,
        "init": init,
        "seed": args.seed,
        "count": args.count,
        "oscillatory": sum(s["classification"]["kind"] == "oscillatory_on" for s in solutions),
        "nonoscillatory": sum(s["classification"]["kind"] == "nonoscillatory_up_to" for s in solutions),
        "prepared": sum(s["prepared"]["is_prepared"] for s in solutions),
        "solutions": solutions,
    }
    _emit(args, "summary.json", summary)
    return EXIT_OK


def cmd_criteria(args) -> int:
    cs = _system(args)
    j = args.j
    reports = []
    wanted = [f for f in ("cond_I_ray", "cor31", "cor32", "thm31", "thm33", "thm34", "windows") if getattr(args, f)]
    if not wanted:
        wanted = ["cond_I_ray"]
    for what in wanted:
        if what == "cond_I_ray":
            reports.append(cr.check_condition_I(cs, j, (cs.t0, _horizon(args, cs, 50.0)), ray=True))
        elif what in ("cor31", "thm31"):
            reports.append(cr.theorem_verdict(cs, what, j=j, horizon=_horizon(args, cs, 50.0)))
        elif what == "cor32":
            if args.t1 is None or args.t2 is None:
                raise InputError("--cor32 needs --t1 and --t2")
            reports.append(cr.theorem_verdict(cs, "cor32", j=j, t1=args.t1, t2=args.t2))
        elif what == "thm33":
            reports.append(cr.theorem_verdict(cs, "thm33", horizon=_horizon(args, cs, 50.0), mode=args.mode))
        elif what == "thm34":
            reports.append(cr.theorem_verdict(cs, "thm34", j=j, horizon=_horizon(args, cs, 10.0)))
        elif what == "windows":
            reports.append(cr.find_oscillation_windows(cs, j, _horizon(args, cs, 8 * math.pi), min_gap=args.min_gap))
    _emit(args, "criteria.json", [r.to_dict() for r in reports])
    return EXIT_OK


def _floats(text, n, name):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"{name} must be {n} comma-separated numbers") from None
    if len(vals) != n:
        raise InputError(f"{name} must be {n} comma-separated numbers")
    return vals


def cmd_riccati(args) -> int:
    cs = _system(args)
    horizon = _horizon(args, cs)
    Y0 = np.array(_floats(args.y0, 4, "--y0")).reshape(2, 2)
    traj = integrate_riccati(cs, Y0, (cs.t0, horizon), _cfg(args))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        traj.to_csv(Path(args.out) / "riccati.csv")
    report = {
        "system": cs.name,
        "Y0": Y0.tolist(),
        "span": [cs.t0, horizon],
        "termination": traj.termination.to_dict(),
        "nodes": traj.n_nodes,
        "Y_end": traj.states[-1].reshape(2, 2).tolist(),
    }
    _emit(args, "riccati.json", report)
    return EXIT_OK if traj.termination.status in ("reached_end", "blow_up") else EXIT_NUMERIC


def cmd_sweep(args) -> int:
    if not args.param:
        raise InputError("sweep needs --param NAME")
    values = _sweep_values(args.values)
    rows = []
    rng_seed = args.seed
    for v in values:
        cs = _system(args, **{args.param: v})
        row = {"value": v}
        if args.t1 is not None and args.t2 is not None:
            rep = cr.check_condition_IV(cs, args.j, args.t1, args.t2)
            row.update(check="cond_IV", verdict=rep.verdict, margin=rep.margin)
        else:
            horizon = _horizon(args, cs, 50.0)
            rep = cr.check_condition_III(cs, args.j, horizon)
            row.update(check="cond_III", verdict=rep.verdict, margin=rep.margin)
        horizon = args.t2 if args.t2 is not None else _horizon(args, cs)
        Phi0, Psi0 = random_prepared(np.random.default_rng(rng_seed), 1)[0]
        traj = integrate_matrix_system(cs, Phi0, Psi0, (cs.t0, horizon), _cfg(args))
        lo = args.t1 if args.t1 is not None else cs.t0
        row["zeros"] = len(detect_zeros(traj, (lo, traj.span[1])))
        rows.append(row)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["value", "check", "verdict", "margin", "zeros"])
            w.writeheader()
            for r in rows:
                w.writerow({**r, "value": repr(r["value"]), "margin": repr(r["margin"])})
    _emit(args, "sweep.json", {"param": args.param, "rows": rows})
    return EXIT_OK


def _sweep_values(text):
    if not text:
        raise InputError("sweep needs --values (a,b,c or start:stop:count)")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InputError("range form is start:stop:count")
        try:
            a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise InputError("range form is start:stop:count") from None
        if n < 1:
            raise InputError("count must be positive")
        return [float(x) for x in np.linspace(a, b, n)]
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"bad --values {text!r}") from None


# --------------------------------------------------------------------------
# canned examples


def _expect(results, key, ok, detail):
    results.append({"check": key, "ok": bool(ok), "detail": detail})


def _example_remark34(args, results):
    cs = preset("remark34")
    traj = integrate_matrix_system(cs, np.zeros((2, 2)), np.eye(2), (0.0, 3 * math.pi + 0.5))
    zs = detect_zeros(traj)
    near = [min(abs(z - k * math.pi) for z in zs.times) if len(zs) else math.inf for k in (1, 2, 3)]
    _expect(results, "zeros at multiples of pi", max(near) < 1e-8, f"max distance {max(near):.3g}")
    eps = 0.1
    inner = detect_zeros(traj, (eps, math.pi - eps))
    _expect(results, "no zero on [eps, pi - eps]", len(inner) == 0, f"{len(inner)} zeros")
    full = cr.check_condition_IV(cs, 1, 0.0, math.pi)
    _expect(results, "IV holds on [0, pi]", full.holds and abs(full.margin) < 1e-9, f"margin {full.margin:.3g}")
    short = cr.check_condition_IV(cs, 1, eps, math.pi - eps)
    _expect(results, "IV fails on [eps, pi - eps]", not short.holds, f"margin {short.margin:.6g}")


def _example31(args, results):
    params = _parse_params(args.params)
    cs = preset("example31", **params)
    horizon = args.horizon if args.horizon is not None else 200.0
    I = cr.check_condition_I(cs, 1, (cs.t0, horizon), ray=True)
    _expect(results, "condition I", I.holds, I.notes)
    traj = integrate_scalar_system(cs, 1, 0.0, 1.0, (cs.t0, horizon))
    n = len(detect_scalar_zeros(traj, (cs.t0 + 1e-9, horizon)))
    _expect(results, "reduced scalar phi has >= 10 zeros", n >= 10, f"{n} zeros")
    counts = [len(detect_zeros(integrate_matrix_system(cs, P0, S0, (cs.t0, horizon)))) for P0, S0 in random_prepared(np.random.default_rng(args.seed), 5)]
    _expect(results, "prepared solutions have >= 5 zeros", min(counts) >= 5, f"zero counts {counts}")


def _example32(args, results):
    cs = preset("example32")
    horizon = 40 * math.pi
    I = cr.check_condition_I(cs, 1, (0.0, horizon))
    _expect(results, "condition I", I.holds, I.notes)
    III = cr.check_condition_III(cs, 1, horizon)
    _expect(results, "condition III supported", III.supported, III.notes)
    counts = [len(detect_zeros(integrate_matrix_system(cs, P0, S0, (0.0, horizon)))) for P0, S0 in random_prepared(np.random.default_rng(args.seed), 3)]
    _expect(results, "prepared solutions have >= 3 zeros", min(counts) >= 3, f"zero counts {counts}")


def _example33(args, results):
    lam = args.lam if args.lam is not None else math.pi / 2
    cs = preset("example33", lam=lam)
    ray = cr.check_condition_I(cs, 1, (0.0, 8 * math.pi), ray=True)
    _expect(results, "condition I fails on the ray", not ray.holds, ray.notes)
    IV = cr.check_condition_IV(cs, 1, 2 * math.pi, 3 * math.pi)
    _expect(results, "IV on [2pi, 3pi] matches 2 lambda - pi", abs(IV.margin - (2 * lam - math.pi)) < 1e-8, f"margin {IV.margin:.6g}")
    if lam >= math.pi / 2:
        win = cr.find_oscillation_windows(cs, 1, 8 * math.pi)
        _expect(results, "windows found", win.holds, f"{len(win.witnesses)} windows")
    big = preset("example33", lam=2.0)
    missing = []
    for P0, S0 in random_prepared(np.random.default_rng(args.seed), 3):
        traj = integrate_matrix_system(big, P0, S0, (0.0, 7 * math.pi))
        for m in (1, 2, 3):
            if not detect_zeros(traj, (2 * m * math.pi, (2 * m + 1) * math.pi)).zeros:
                missing.append(m)
    _expect(results, "lambda = 2: a zero in every window", not missing, f"windows without zeros: {missing}")


def _thm33(args, results):
    cs = preset("thm33_demo")
    rep = cr.theorem_verdict(cs, "thm33", horizon=50.0)
    _expect(results, "lemma conditions A and B", rep.holds, rep.notes)
    bad = []
    for P0, S0 in random_cone(np.random.default_rng(args.seed), 5):
        s = verify_sign_identity(integrate_matrix_system(cs, P0, S0, (0.0, 50.0)), "thm33")
        if not s.holds:
            bad.append(s.first_violation)
    _expect(results, "sign det Phi = sign det Psi", not bad, f"violations at {bad}")


def _thm34(args, results):
    cs = preset("thm34_demo")
    rep = cr.theorem_verdict(cs, "thm34", j=1, horizon=10.0)
    _expect(results, "conditions C, D1, D2", rep.holds, rep.notes)
    s = verify_sign_identity(integrate_matrix_system(cs, np.eye(2), np.diag([1.0, -1.0]), (0.0, 10.0)), "thm34")
    _expect(results, "sign det Phi = -sign det Psi", s.holds, s.detail)


EXAMPLES = {
    "example31": _example31,
    "example32": _example32,
    "example33": _example33,
    "remark34": _example_remark34,
    "thm33_demo": _thm33,
    "thm34_demo": _thm34,
}


def cmd_examples(args) -> int:
    if args.only and args.all:
        raise InputError("use either --only or --all")
    names = sorted(EXAMPLES) if (args.all or not args.only) else [args.only]
    for n in names:
        if n not in EXAMPLES:
            raise InputError(f"unknown example {n!r}; choose from {sorted(EXAMPLES)}")
    report = {}
    for n in names:
        results: list = []
        EXAMPLES[n](args, results)
        report[n] = {"ok": all(r["ok"] for r in results), "checks": results}
    _emit(args, "examples.json", report)
    failed = sorted(n for n, r in report.items() if not r["ok"])
    if failed:
        sys.stderr.write(f"examples disagree with the expected outcome: {', '.join(failed)}\n")
        return EXIT_MISMATCH
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matrix-osc", description="Oscillation of 2x2 linear matrix systems Phi' = P Phi + Q Psi, Psi' = R Phi + S Psi.")
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--problem", metavar="FILE", help="problem file (JSON)")
    src.add_argument("--preset", metavar="NAME", choices=sorted(PRESETS), help="built-in system")
    common.add_argument("--params", help="preset parameters, e.g. a1=1,alpha=2")
    common.add_argument("--lambda", dest="lam", type=time_value, help="lambda for example33")
    common.add_argument("--horizon", type=time_value)
    common.add_argument("--t1", type=time_value)
    common.add_argument("--t2", type=time_value)
    common.add_argument("--rtol", type=float, default=1e-9)
    common.add_argument("--atol", type=float, default=1e-12)
    common.add_argument("--out", metavar="DIR", help="write reports and CSVs here")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--json", action="store_true", help="also print the JSON report to stdout when --out is given")
    common.add_argument("-j", type=int, default=1, choices=(1, 2), help="index j of the reduced scalar system")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="integrate random solutions and find det Phi zeros")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--init", choices=("prepared", "cone"))
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("criteria", parents=[common], help="check the sufficient conditions")
    p.add_argument("--cond-I-ray", dest="cond_I_ray", action="store_true")
    p.add_argument("--cor31", action="store_true")
    p.add_argument("--cor32", action="store_true")
    p.add_argument("--thm31", action="store_true")
    p.add_argument("--thm33", action="store_true")
    p.add_argument("--thm34", action="store_true")
    p.add_argument("--windows", action="store_true")
    p.add_argument("--mode", choices=("sign_pattern_plus", "sign_pattern_minus"), default="sign_pattern_plus")
    p.add_argument("--min-gap", dest="min_gap", type=float, default=0.5)
    p.set_defaults(func=cmd_criteria)

    p = sub.add_parser("riccati", parents=[common], help="integrate the Riccati equation and report blow-up")
    p.add_argument("--y0", default="0,0,0,0", help="Y0 as y11,y12,y21,y22")
    p.set_defaults(func=cmd_riccati)

    p = sub.add_parser("examples", parents=[common], help="run the canned scenarios")
    p.add_argument("--only", metavar="NAME")
    p.add_argument("--all", action="store_true")
    p.set_defaults(func=cmd_examples)

    p = sub.add_parser("sweep", parents=[common], help="scan one named parameter")
    p.add_argument("--param", metavar="NAME")
    p.add_argument("--values", help="a,b,c or start:stop:count")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EvalError as exc:
        # coefficients that validated on sampled t but fail during a run
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (InputError, SystemError_, ExprError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (IntegrationError, QuadratureError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
