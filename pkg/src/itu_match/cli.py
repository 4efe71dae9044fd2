"""Command-line front end.

Subcommands: ``solve``, ``solve-full``, ``estimate``, ``compstats``,
``search``, ``one-to-many``, ``simulate``.  Inputs are JSON (markets,
models, bundle economies) or CSV (samples); results are JSON with the
fully resolved configuration embedded, or CSV matrix exports with
``--format csv``.  Exit codes: 0 success, 2 validation error, 3 solver
non-convergence; errors are emitted as machine-readable JSON.

Randomness only enters ``simulate`` and is always seeded (default 0), so
identical inputs give byte-identical outputs on the same build.
"""

from __future__ import annotations

import argparse
import io
import json
import sys

import numpy as np

from . import __version__
from . import bargaining as bg
from . import compstats as cs
from . import equilibrium as eq
from . import estimation as est
from . import full_assignment as fa
from . import one_to_many as otm
from . import search as srch
from .errors import ConvergenceError, InitializationError, OptimizationError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _emit(payload: dict, output: str | None, fmt: str = "json") -> None:
    if fmt == "csv":
        text = _to_csv(payload)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _to_csv(payload: dict) -> str:
    """Matrix export: one ``# key`` section per array, scalars up front."""
    buf = io.StringIO()
    flat = {}

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k, v in sorted(obj.items()):
                walk(f"{prefix}.{k}" if prefix else k, v)
        else:
            flat[prefix] = obj

    walk("", payload)
    for key, val in flat.items():
        arr = np.asarray(val)
        if arr.dtype == object or arr.dtype.kind in "US":
            continue
        if arr.ndim == 0:
            buf.write(f"# {key}\n{arr.item()}\n")
        elif arr.ndim == 1:
            buf.write(f"# {key}\n" + ",".join(repr(float(x)) for x in arr) + "\n")
        elif arr.ndim == 2:
            buf.write(f"# {key}\n")
            for row in arr:
                buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"input file not found: {path}", field="input")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {path}: {exc}", field="input")


def _market_from_file(path: str, sigma_override: float | None) -> tuple[eq.Market, dict]:
    data = _load_json(path)
    market = eq.market_from_dict(data)
    if sigma_override is not None:
        market = eq.Market(
            men_types=market.men_types,
            women_types=market.women_types,
            n=market.n,
            m=market.m,
            tech=market.tech,
            sigma=sigma_override,
        )
    return market, data


def _matching_payload(outcome) -> dict:
    return {
        "mu_xy": outcome.matching.mu_xy,
        "mu_x0": outcome.matching.mu_x0,
        "mu_0y": outcome.matching.mu_0y,
        "U": outcome.U,
        "V": outcome.V,
        "W": outcome.W,
        "diagnostics": outcome.diagnostics,
    }


def _resolved_config(args, **extra) -> dict:
    cfg = {
        "command": args.command,
        "input": getattr(args, "input", None),
        "tol": getattr(args, "tol", None),
        "max_iter": getattr(args, "max_iter", None),
        "seed": getattr(args, "seed", None),
        "format": getattr(args, "format", "json"),
        "version": __version__,
    }
    cfg.update(extra)
    return cfg


def _cmd_solve(args) -> int:
    market, data = _market_from_file(args.input, args.sigma)
    if args.verify_only:
        prior = _load_json(args.verify_only)
        res = prior.get("result", prior)
        matching = eq.Matching(
            mu_xy=np.asarray(res["mu_xy"], dtype=float),
            mu_x0=np.asarray(res["mu_x0"], dtype=float),
            mu_0y=np.asarray(res["mu_0y"], dtype=float),
        )
        outcome = eq.EquilibriumOutcome(
            matching=matching,
            U=np.asarray(res["U"], dtype=float),
            V=np.asarray(res["V"], dtype=float),
            W=np.asarray(res["W"], dtype=float),
        )
        rep = eq.verify(market, outcome)
        _emit(
            {
                "config": _resolved_config(args, sigma=market.sigma, verify_only=args.verify_only),
                "verification": {
                    "accounting_x": rep.accounting_x,
                    "accounting_y": rep.accounting_y,
                    "feasibility": rep.feasibility,
                    "matching_function": rep.matching_function,
                    "interiority_min": rep.interiority_min,
                },
            },
            args.output,
            args.format,
        )
        return EXIT_OK
    if data.get("full_assignment"):
        return _run_full(args, market)
    solver = eq.solve_jacobi if args.solver == "jacobi" else eq.solve_ipfp
    outcome = solver(market, tol=args.tol, max_iter=args.max_iter)
    rep = eq.verify(market, outcome)
    _emit(
        {
            "config": _resolved_config(args, sigma=market.sigma, solver=args.solver),
            "result": _matching_payload(outcome),
            "verification": {
                "accounting_x": rep.accounting_x,
                "accounting_y": rep.accounting_y,
                "feasibility": rep.feasibility,
                "matching_function": rep.matching_function,
                "interiority_min": rep.interiority_min,
            },
        },
        args.output,
        args.format,
    )
    return EXIT_OK


def _run_full(args, market) -> int:
    pin_side, pin_idx = "x", 0
    if getattr(args, "pin", None):
        side, _, idx = args.pin.partition(":")
        if side not in ("x", "y") or not idx.isdigit():
            raise ValidationError("--pin must look like 'x:0' or 'y:2'", field="pin")
        pin_side, pin_idx = side, int(idx)
    matching, effects = fa.solve_full(
        market,
        tol=args.tol,
        max_iter=args.max_iter,
        pin=(pin_side, pin_idx),
        pin_value=getattr(args, "pin_value", 0.0),
    )
    _emit(
        {
            "config": _resolved_config(args, pin=f"{pin_side}:{pin_idx}", pin_value=getattr(args, "pin_value", 0.0)),
            "result": {
                "mu_xy": matching.mu_xy,
                "a": effects.a,
                "b": effects.b,
                "normalization": {
                    "side": effects.normalization[0],
                    "index": effects.normalization[1],
                    "value": effects.normalization[2],
                },
            },
        },
        args.output,
        args.format,
    )
    return EXIT_OK


def _cmd_solve_full(args) -> int:
    market, _ = _market_from_file(args.input, None)
    return _run_full(args, market)


def _model_from_file(path: str) -> est.ParametricModel:
    data = _load_json(path)
    try:
        men = [str(x) for x in data["men"]]
        women = [str(y) for y in data["women"]]
        fam = data["family"]
        kind = fam["type"]
    except (KeyError, TypeError) as exc:
        raise ValidationError("model file needs 'men', 'women' and a 'family' object", field="family") from exc
    if kind == "TU":
        return est.ParametricModel.tu(
            men, women, phi_basis=fam["phi"]["basis"], phi_base=fam["phi"].get("base", 0.0)
        )
    if kind == "LTU":
        return est.ParametricModel.ltu(
            men,
            women,
            phi_basis=fam["phi"]["basis"],
            lam=fam["lambda"],
            zeta=fam["zeta"],
            phi_base=fam["phi"].get("base", 0.0),
        )
    if kind == "ETU":
        return est.ParametricModel.etu(
            men,
            women,
            alpha_basis=fam["alpha"]["basis"],
            gamma_basis=fam["gamma"]["basis"],
            tau=fam["tau"],
            budget=fam["budget"],
            alpha_base=fam["alpha"].get("base", 0.0),
            gamma_base=fam["gamma"].get("base", 0.0),
        )
    raise ValidationError(f"family type {kind!r} is not estimable (TU, LTU or ETU)", field="family")


def _theta_from_arg(arg: str, model: est.ParametricModel) -> np.ndarray:
    try:
        raw = json.loads(arg)
    except json.JSONDecodeError:
        raw = _load_json(arg)
    if isinstance(raw, dict):
        raw = raw.get("theta", raw)
    theta = np.asarray(raw, dtype=float).reshape(-1)
    if theta.size != model.dim:
        raise ValidationError(f"theta must have length {model.dim}, got {theta.size}", field="theta")
    return theta


def _cmd_estimate(args) -> int:
    model = _model_from_file(args.model)
    sample, _, _ = est.read_sample_csv(args.input, model.x_labels, model.y_labels)
    init = _theta_from_arg(args.init, model) if args.init else None
    result = est.fit_mle(model, sample, init=init)
    diag = dict(result.diagnostics)
    diag.pop("loglik_trace", None)
    diag.pop("flat_vectors", None)
    _emit(
        {
            "config": _resolved_config(args, model=args.model),
            "result": {
                "lambda": result.lam_hat,
                "u": result.u_hat,
                "v": result.v_hat,
                "loglik": result.loglik,
                "variance": result.variance,
                "std_errors": np.sqrt(np.maximum(np.diag(result.variance), 0.0)),
                "diagnostics": diag,
            },
        },
        args.output,
        args.format,
    )
    return EXIT_OK


def _cmd_simulate(args) -> int:
    model = _model_from_file(args.model)
    theta = _theta_from_arg(args.theta, model)
    sample = est.sample_synthetic(model, theta, n_hat=args.n_households, seed=args.seed)
    lines = ["x,y,count"]
    counts_xy = np.rint(sample.pi_xy * sample.n_hat).astype(int)
    counts_x0 = np.rint(sample.pi_x0 * sample.n_hat).astype(int)
    counts_0y = np.rint(sample.pi_0y * sample.n_hat).astype(int)
    for i, x in enumerate(model.x_labels):
        for j, y in enumerate(model.y_labels):
            lines.append(f"{x},{y},{counts_xy[i, j]}")
    for i, x in enumerate(model.x_labels):
        lines.append(f"{x},0,{counts_x0[i]}")
    for j, y in enumerate(model.y_labels):
        lines.append(f"0,{y},{counts_0y[j]}")
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_compstats(args) -> int:
    market, data = _market_from_file(args.input, None)
    X, Y = market.shape
    delta_n = np.asarray(
        json.loads(args.delta_n) if args.delta_n else data.get("delta_n", np.zeros(X).tolist()), dtype=float
    )
    delta_m = np.asarray(
        json.loads(args.delta_m) if args.delta_m else data.get("delta_m", np.zeros(Y).tolist()), dtype=float
    )
    outcome = eq.solve_ipfp(market, tol=args.tol, max_iter=args.max_iter)
    result = cs.delta_matching(market, outcome, delta_n, delta_m)
    sym = cs.symmetry_diagnostic(market, outcome)
    _emit(
        {
            "config": _resolved_config(args, delta_n=delta_n, delta_m=delta_m),
            "result": {
                "delta_mu": result.delta_mu,
                "delta_U": result.delta_U,
                "delta_V": result.delta_V,
                "diagnostics": result.diagnostics,
                "symmetry": {
                    "du_dn": sym.du_dn,
                    "du_dm": sym.du_dm,
                    "dv_dn": sym.dv_dn,
                    "dv_dm": sym.dv_dm,
                    "cross_gap": sym.cross_gap,
                },
            },
        },
        args.output,
        args.format,
    )
    return EXIT_OK


def _cmd_search(args) -> int:
    market, _ = _market_from_file(args.input, None)
    params = srch.SearchParams(rho=args.rho, delta_destroy=args.delta, r=args.r)
    outcome = srch.solve_steady_state(market, params, tol=args.tol, max_iter=args.max_iter)
    diag = dict(outcome.diagnostics)
    diag.pop("residual_history", None)
    _emit(
        {
            "config": _resolved_config(args, rho=args.rho, delta=args.delta, r=args.r),
            "result": {
                "mu_xy": outcome.matching.mu_xy,
                "mu_x0": outcome.matching.mu_x0,
                "mu_0y": outcome.matching.mu_0y,
                "u": outcome.u,
                "v": outcome.v,
                "accept": outcome.accept.astype(int),
                "diagnostics": diag,
            },
        },
        args.output,
        args.format,
    )
    return EXIT_OK


def _parse_bundle_key(key: str) -> tuple[int, ...]:
    if not (key.startswith("b=[") and key.endswith("]")):
        raise ValidationError(f"bad bundle key {key!r}, expected like 'b=[2,0,1]'", field="phi")
    inner = key[3:-1].strip()
    if not inner:
        return ()
    try:
        return tuple(int(c.strip()) for c in inner.split(","))
    except ValueError:
        raise ValidationError(f"bad bundle key {key!r}", field="phi") from None


def _cmd_one_to_many(args) -> int:
    data = _load_json(args.input)
    try:
        workers = [(str(e["label"]), float(e["n"])) for e in data["workers"]]
        firms = [(str(e["label"]), float(e["m"])) for e in data["firms"]]
        phi_raw = data["phi"]
    except (KeyError, TypeError) as exc:
        raise ValidationError("economy file needs 'workers', 'firms' and 'phi'", field="workers") from exc
    values = {_parse_bundle_key(k): v for k, v in phi_raw.items()}
    table = otm.BundleTable(
        x_labels=tuple(x for x, _ in workers),
        y_labels=tuple(y for y, _ in firms),
        values=values,
    )
    n = np.array([v for _, v in workers])
    m = np.array([v for _, v in firms])
    result = otm.solve_experimental(
        table, n, m, max_bundle_size=args.max_bundle_size, tol=args.tol, max_iter=args.max_iter
    )
    payload = {
        "config": _resolved_config(args, max_bundle_size=args.max_bundle_size),
        "result": {
            "converged": result.converged,
            "experimental": True,
            "u": result.u,
            "v": result.v,
            "mu_x0": result.mu_x0,
            "mu_by": result.mu_by,
            "bundles": ["b=" + json.dumps(list(b)) for b in result.bundles],
            "residual": result.residual,
            "residual_history": list(result.residual_history),
            "diagnostics": result.diagnostics,
        },
    }
    _emit(payload, args.output, args.format)
    return EXIT_OK if result.converged else EXIT_CONVERGENCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itu-match",
        description="Equilibria of matching markets with imperfectly transferable utility",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_input=True):
        if need_input:
            p.add_argument("--input", required=True, help="input file (JSON unless noted)")
        p.add_argument("--output", help="write the result to this path as well as stdout")
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--max-iter", type=int, default=10_000, dest="max_iter")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("solve", help="partial-assignment equilibrium of a market file")
    common(p)
    p.add_argument("--sigma", type=float, default=None, help="override the market temperature")
    p.add_argument("--solver", choices=("ipfp", "jacobi"), default="ipfp")
    p.add_argument("--verify-only", help="recompute residuals of a previous result file")
    p.add_argument("--pin", help="full-assignment pin (side:index), with full_assignment inputs")
    p.add_argument("--pin-value", type=float, default=0.0, dest="pin_value")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("solve-full", help="full-assignment equilibrium (no singles)")
    common(p)
    p.add_argument("--pin", help="pin (side:index), e.g. x:0")
    p.add_argument("--pin-value", type=float, default=0.0, dest="pin_value")
    p.set_defaults(func=_cmd_solve_full)

    p = sub.add_parser("estimate", help="maximum-likelihood fit of a model to a CSV sample")
    common(p)
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--init", help="initial theta: JSON array or path")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("simulate", help="draw a synthetic CSV sample from a model")
    common(p, need_input=False)
    p.add_argument("--model", required=True)
    p.add_argument("--theta", required=True, help="true theta: JSON array or path")
    p.add_argument("--n-households", type=int, required=True, dest="n_households")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compstats", help="population comparative statics at equilibrium")
    common(p)
    p.add_argument("--delta-n", dest="delta_n", help="JSON array, defaults to input field or zeros")
    p.add_argument("--delta-m", dest="delta_m", help="JSON array, defaults to input field or zeros")
    p.set_defaults(func=_cmd_compstats)

    p = sub.add_parser("search", help="search-and-matching steady state")
    common(p)
    p.add_argument("--rho", type=float, required=True, help="meeting intensity")
    p.add_argument("--delta", type=float, required=True, help="match destruction intensity")
    p.add_argument("--r", type=float, required=True, help="discount rate")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("one-to-many", help="experimental one-to-many solver")
    common(p)
    p.add_argument("--max-bundle-size", type=int, default=3, dest="max_bundle_size")
    p.set_defaults(func=_cmd_one_to_many)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        _emit(
            {"error": {"type": "validation", "message": str(exc), "field": exc.field}},
            getattr(args, "output", None),
        )
        return EXIT_VALIDATION
    except (ConvergenceError, InitializationError, OptimizationError) as exc:
        payload = {"error": {"type": "convergence", "message": str(exc)}}
        if isinstance(exc, ConvergenceError):
            payload["error"]["residual"] = exc.residual
            if exc.history:
                payload["error"]["residual_trace"] = exc.history
        _emit(payload, getattr(args, "output", None))
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
