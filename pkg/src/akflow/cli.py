"""Command-line entry point ``akflow``.

Every subcommand writes a JSON report (CSV for trajectories) to ``--out`` or
stdout.  Exit status: 0 when every pass flag is true, 1 when a verification
fails, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import conventions as conv
from .errors import (AKFlowError, BlowUp, ConsistencyError, DomainError, EmptyCandidateSpace,
                     InconsistentDecomposition, InvalidFunction, PathThroughSingularity)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# failures of a computation on valid input; everything else raised by the modules is a config error
_VERIFICATION_ERRORS = (BlowUp, ConsistencyError, InconsistentDecomposition, AssertionError)


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("AKFLOW_SEED")
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"AKFLOW_SEED must be an integer, got {env!r}") from None


def parse_tolerances(items: list[str] | None) -> dict:
    out = {}
    for item in items or []:
        name, sep, val = item.partition("=")
        if not sep or not name:
            raise ConfigError(f"tolerance must look like name=value, got {item!r}")
        try:
            v = float(val)
        except ValueError:
            raise ConfigError(f"tolerance {name!r} is not a number") from None
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"tolerance {name!r} must be positive")
        out[name.strip()] = v
    return out


def _only(tols: dict, allowed: set) -> None:
    extra = set(tols) - allowed
    if extra:
        raise ConfigError(f"unknown tolerance names {sorted(extra)}; allowed: {sorted(allowed)}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _chart_from_args(args):
    from .charts import make_chart
    from .static import HoloFn, make_static_chart

    if args.h is not None:
        if args.chart not in (None, "static"):
            raise ConfigError("--h only applies to the static chart family")
        return make_static_chart(HoloFn.parse(args.h, exclusion_radius=args.delta))
    if args.chart is None:
        raise ConfigError("give --chart NAME or --h SPEC")
    spec = _chart_spec(args.chart)
    if spec is not None:
        if args.param:
            raise ConfigError("--param cannot be combined with a JSON chart spec")
        if not isinstance(spec, dict) or "chart" not in spec:
            raise ConfigError('chart spec must be {"chart": name, "params": {...}}')
        if not isinstance(spec.get("params", {}), dict):
            raise ConfigError("chart params must be an object")
        try:
            return make_chart(spec)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for chart {spec['chart']!r}: {exc}") from None
    params = {}
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param must look like key=value, got {item!r}")
        params[key.strip()] = _parse_value(val)
    try:
        return make_chart({"chart": args.chart, "params": params})
    except TypeError as exc:
        raise ConfigError(f"bad parameters for chart {args.chart!r}: {exc}") from None


def _chart_spec(text: str):
    """JSON chart spec given inline or as a file path; None for a bare family name."""
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"chart spec is not valid JSON: {exc}") from None
    if text.endswith(".json") or os.path.sep in text:
        try:
            with open(text, encoding="utf-8") as fh:
                return json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read chart spec: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"chart spec is not valid JSON: {exc}") from None
    return None


def _point(items: list[str]) -> np.ndarray:
    vals = [v for item in items for v in item.replace(",", " ").split()]
    try:
        p = np.array([float(v) for v in vals])
    except ValueError:
        raise ConfigError(f"--point needs four real numbers, got {items}") from None
    if p.shape != (4,):
        raise ConfigError(f"--point needs four real numbers, got {len(p)}")
    return p


def _space_from_args(args):
    from .homogeneous import make_space

    params = {}
    for key in ("a", "b"):
        val = getattr(args, key, None)
        if val is not None:
            params[key] = _rational_or_float(val)
    if params and args.space != "affine":
        raise ConfigError("--a/--b only apply to the affine space")
    return make_space(args.space, **params)


def _rational_or_float(text: str):
    from fractions import Fraction

    try:
        f = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None
    if "." in text or "e" in text.lower():
        v = float(text)
        return int(v) if v.is_integer() else v
    return f


def _complex(text: str) -> complex:
    """``"1+2j"`` or a real pair ``"1,0"``."""
    if "," in text:
        parts = text.split(",")
        if len(parts) != 2:
            raise ConfigError(f"expected re,im, got {text!r}")
        try:
            return complex(float(parts[0]), float(parts[1]))
        except ValueError:
            raise ConfigError(f"not a complex number: {text!r}") from None
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise ConfigError(f"not a complex number: {text!r}") from None


def _report(payload: dict, passed: bool) -> dict:
    payload = dict(payload)
    payload["pass"] = bool(passed)
    payload.setdefault("conventions", conv.ledger())
    return payload


# --------------------------------------------------------------------------
# subcommands

def cmd_invariants(args) -> int:
    from .invariants import DRIFT_TOL, curvature_packet, extract_invariants, flow_rhs

    tols = parse_tolerances(args.tol)
    _only(tols, {"drift"})
    chart = _chart_from_args(args)
    if args.point is not None:
        points = [_point(args.point)]
    else:
        rng = np.random.default_rng(resolve_seed(args.seed))
        points = list(chart.sample(rng, args.samples))
    drift = tols.get("drift", DRIFT_TOL)
    results, passed = [], True
    for p in points:
        inv = extract_invariants(chart, p, adapted=not args.unadapted, strict=False)
        worst = max(inv.residuals.values()) if inv.residuals else 0.0
        ok = worst <= drift
        passed &= ok
        entry = {"point": p.tolist(), "invariants": inv.to_json(), "max_residual": worst, "pass": ok,
                 "curvature": curvature_packet(chart, p).summary()}
        try:
            entry["flow_rhs"] = flow_rhs(chart, p).to_json()
        except ConsistencyError as exc:
            entry["flow_rhs_error"] = str(exc)
            passed = False
        results.append(entry)
    _write(_dump_json(_report({"chart": chart.name, "params": chart.params, "points": results,
                               "tolerances": {"drift": drift}}, passed)), args.out)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_static_verify(args) -> int:
    from .static import verify_static

    chart = _chart_from_args(args)
    report = verify_static(chart, n_samples=args.samples, seed=resolve_seed(args.seed),
                           tolerances=parse_tolerances(args.tol))
    _write(_dump_json(report.to_json()), args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_static_length(args) -> int:
    from .static import StaticChart, radial_length

    tols = parse_tolerances(args.tol)
    _only(tols, {"quad"})
    chart = _chart_from_args(args)
    if not isinstance(chart, StaticChart):
        raise ConfigError("static-length needs a static chart (--h)")
    tol = tols.get("quad", 1e-8)
    res = radial_length(chart, direction=_complex(args.direction), z2=_complex(args.z2), tol=tol)
    prof = [n for _, n in res.n_profile]
    increasing = all(b > a for a, b in zip(prof, prof[1:]))
    passed = math.isfinite(res.length) and res.error_estimate <= max(tol, 1e-6) and increasing
    payload = res.to_json()
    payload.update({"h": chart.h.to_json(), "direction": args.direction, "z2": args.z2,
                    "profile_increasing": increasing})
    _write(_dump_json(_report(payload, passed)), args.out)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_flow(args) -> int:
    from .homogeneous import integrate_flow

    if not (args.T > 0 and args.dt > 0):
        raise ConfigError("--T and --dt must be positive")
    tols = parse_tolerances(args.tol)
    _only(tols, {"j_squared", "d_omega"})
    space = _space_from_args(args)
    traj = integrate_flow(space, T=args.T, dt=args.dt, record_every=args.record_every)
    limits = {"j_squared": tols.get("j_squared", 1e-8), "d_omega": tols.get("d_omega", 1e-10)}
    passed = all(traj.checks[k] <= v for k, v in limits.items())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(traj.csv_header())
    writer.writerows(traj.csv_rows())
    _write(buf.getvalue(), args.out)
    if args.report:
        _write(_dump_json(_report({"space": space.to_json(), "T": args.T, "dt": traj.dt,
                                   "checks": traj.checks, "limits": limits,
                                   "invariant_drift": traj.invariant_drift()}, passed)), args.report)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_soliton_check(args) -> int:
    from .homogeneous import soliton_residual

    tols = parse_tolerances(args.tol)
    _only(tols, {"residual"})
    space = _space_from_args(args)
    mode = "gradient" if args.gradient else "static" if args.static else "general"
    cert = soliton_residual(space, mode=mode, tol=tols.get("residual", 1e-6))
    payload = cert.to_json()
    payload["space"] = space.to_json()
    _write(_dump_json(payload), args.out)
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_cartan(args) -> int:
    from .cartan import Tableau, cartan_test, cauchy_riemann_tableau

    if args.tableau is None and not args.cr:
        raise ConfigError("give --tableau FILE or --cr")
    if args.tableau is not None:
        try:
            with open(args.tableau, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read tableau: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"tableau is not valid JSON: {exc}") from None
        try:
            tab = Tableau.from_json(data)
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"malformed tableau: {exc}") from None
    else:
        tab = cauchy_riemann_tableau()
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    report = cartan_test(tab, seed=resolve_seed(args.seed), trials=args.trials)
    _write(_dump_json(_report({"tableau": tab.to_json(), "report": report.to_json()}, True)), args.out)
    return EXIT_OK


def run_selftest() -> dict:
    """Calibration constants, Kaehler reduction, CR tableau and the cross-engine check."""
    from .cartan import cartan_test, cauchy_riemann_tableau
    from .charts import darboux_chart, eval_structure, hyperbolic_product_chart, kodaira_thurston_chart
    from .homogeneous import as_float, invariant_geometry, make_space, soliton_residual
    from .invariants import curvature_packet, extract_invariants, flow_rhs, nijenhuis, tensor_norm
    from .static import HoloFn, make_static_chart, nijenhuis_profile_error

    checks = {}
    locked = {"RHO_TRACE_SIGN": 1.0, "NIJENHUIS_C": 1.0, "NIJENHUIS_TENSOR_C": 8.0 * math.sqrt(2.0),
              "RIC11_DISPLAY_SCALE": 0.25, "WPLUS_DISPLAY_SCALE": 4.0, "WMINUS_DISPLAY_SCALE": -4.0,
              "WPLUS_B_SIGN": -1.0}
    checks["constants_locked"] = max(abs(getattr(conv, k) - v) for k, v in locked.items())

    static = make_static_chart(HoloFn((1.0,)))
    p = np.array([0.3, -0.2, 0.1, 0.4])
    checks["nijenhuis_profile"] = nijenhuis_profile_error(static, p)

    dar = darboux_chart()
    q = np.array([0.1, 0.2, -0.3, 0.05])
    inv = extract_invariants(dar, q)
    pk = curvature_packet(dar, q)
    checks["scalar_identity"] = abs(pk.scal + 8 * inv.n_norm2 + 8 * inv.R)
    g, _, _ = eval_structure(dar, q)
    checks["nijenhuis_tensor_constant"] = abs(tensor_norm(nijenhuis(dar, q), g)
                                              - conv.NIJENHUIS_TENSOR_C * math.sqrt(inv.n_norm2))

    hyp = hyperbolic_product_chart()
    r = np.array([0.2, -0.1, 0.3, 0.25])
    g, omega, _ = eval_structure(hyp, r)
    rhs = flow_rhs(hyp, r)
    checks["kaehler_reduction"] = max(float(np.max(np.abs(rhs.dOmega - 2 * omega))),
                                      float(np.max(np.abs(rhs.dg - 2 * g))))
    cert = soliton_residual(make_space("hyperbolic_product"), mode="static")
    checks["kaehler_einstein_lambda"] = abs(cert.lam - 2.0) + cert.residual

    rep = cartan_test(cauchy_riemann_tableau())
    checks["cauchy_riemann"] = 0.0 if (rep.characters == [2, 0] and rep.prolongation_dim == 2
                                       and rep.involutive) else 1.0

    kt = kodaira_thurston_chart()
    geo = invariant_geometry(make_space("kodaira_thurston"))
    o = np.zeros(4)
    kpk = curvature_packet(kt, o)
    checks["cross_engine"] = max(float(np.max(np.abs(as_float(geo.nijenhuis) - nijenhuis(kt, o)))),
                                 float(np.max(np.abs(as_float(geo.ric) - kpk.ric))),
                                 float(np.max(np.abs(as_float(geo.rho) - kpk.rho))))
    limits = {"constants_locked": 0.0, "nijenhuis_profile": 1e-4, "scalar_identity": 1e-4,
              "nijenhuis_tensor_constant": 1e-4, "kaehler_reduction": 1e-4,
              "kaehler_einstein_lambda": 1e-4, "cauchy_riemann": 0.0, "cross_engine": 1e-6}
    results = {k: {"value": float(v), "limit": limits[k], "pass": bool(v <= limits[k])}
               for k, v in checks.items()}
    return _report({"checks": results}, all(r["pass"] for r in results.values()))


def cmd_selftest(args) -> int:
    report = run_selftest()
    _write(_dump_json(report), args.out)
    return EXIT_OK if report["pass"] else EXIT_FAIL


# --------------------------------------------------------------------------
# parser

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $AKFLOW_SEED or 0)")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE", help="tolerance override (repeatable)")


def _add_chart(p: argparse.ArgumentParser) -> None:
    p.add_argument("--chart", help="chart family name (flat, hyperbolic_product, kodaira_thurston, darboux, "
                                   "static), or a JSON spec inline or in a file")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="chart parameter (repeatable)")
    p.add_argument("--h", help='holomorphic function of a static chart, e.g. "num=[1,0.5];den=[1]"')
    p.add_argument("--delta", type=float, default=1e-2, help="exclusion radius around zeros/poles of h")


def _add_space(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", required=True,
                   choices=["abelian", "kodaira_thurston", "affine", "hyperbolic_product"])
    p.add_argument("--a", help="affine parameter a (rational or float)")
    p.add_argument("--b", help="affine parameter b (rational or float)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="akflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"akflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("invariants", help="second-order invariants at chart points")
    _add_common(p)
    _add_chart(p)
    p.add_argument("--point", nargs="+", metavar="X", help="x1,y1,x2,y2 (or four separate numbers)")
    p.add_argument("--samples", type=int, default=5)
    adapt = p.add_mutually_exclusive_group()
    adapt.add_argument("--adapted", dest="unadapted", action="store_false",
                       help="use N-adapted coframes where N != 0 (default)")
    adapt.add_argument("--unadapted", action="store_true", help="use the default unitary coframe")
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("static-verify", help="check the static conditions on a chart")
    _add_common(p)
    _add_chart(p)
    p.add_argument("--samples", type=int, default=50)
    p.set_defaults(func=cmd_static_verify)

    p = sub.add_parser("static-length", help="radial length to the unit circle on a static chart")
    _add_common(p)
    _add_chart(p)
    p.add_argument("--direction", "--dir", default="1", help='direction of the ray: "1+1j" or "re,im"')
    p.add_argument("--z2", default="0", help="fixed complex z2")
    p.set_defaults(func=cmd_static_length)

    p = sub.add_parser("flow", help="integrate the invariant flow on a homogeneous space (CSV)")
    _add_common(p)
    _add_space(p)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--report", help="also write a JSON summary here")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("soliton-check", help="fit the soliton equations on a homogeneous space")
    _add_common(p)
    _add_space(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--gradient", action="store_true")
    mode.add_argument("--static", action="store_true")
    p.set_defaults(func=cmd_soliton_check)

    p = sub.add_parser("cartan", help="Cartan characters and prolongation of a tableau")
    _add_common(p)
    p.add_argument("--tableau", help="JSON file with n, m and generators (rational strings)")
    p.add_argument("--cr", action="store_true", help="use the Cauchy-Riemann tableau")
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_cartan)

    p = sub.add_parser("selftest", help="convention and calibration self-test")
    _add_common(p)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VERIFICATION_ERRORS as exc:
        code, kind = EXIT_FAIL, "verification"
        err = exc
    except (ConfigError, ValueError, TypeError, KeyError, DomainError, InvalidFunction,
            PathThroughSingularity, EmptyCandidateSpace, AKFlowError) as exc:
        code, kind = EXIT_CONFIG, "configuration"
        err = exc
    diag = {"error": type(err).__name__, "kind": kind, "message": str(err),
            "conventions": conv.ledger(), "pass": False}
    if isinstance(err, BlowUp):
        diag["last_good_time"] = err.last_good_time
    _write(_dump_json(diag), getattr(args, "out", None) if code == EXIT_FAIL else None)
    return code


if __name__ == "__main__":
    sys.exit(main())
