"""Batch command-line front end.

Subcommands: simulate | density | price | greeks | hedge | index | check.
Every run is a pure function of the JSON config file plus flag overrides
(flags win): identical inputs give byte-identical output bodies, with
wall-clock metadata confined to a sidecar file. Floats print with 17
significant digits so outputs round-trip exactly.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime
import io
import json
import math
import os
import sys

import numpy as np

from . import density as density_mod
from . import pathintegral as pi_mod
from . import pricing as pricing_mod
from . import risk as risk_mod
from .errors import NumericalError
from .mc import TimeGrid, _mean_and_se, export_paths_csv, fmt17, simulate_paths
from .models import load_model_config, model_hash
from .portfolio import DiscountCurve, load_curve

_FORMATS = ("csv", "json")
_DENSITY_METHODS = ("analytic", "fokker-planck", "path-integral")
_PRICE_METHODS = ("analytic", "pde", "green", "mc")


# ---------------------------------------------------------------------------
# Deterministic emitters


def _json_scalar(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return json.dumps(fmt17(x))
        return fmt17(x)
    if isinstance(x, str):
        return json.dumps(x)
    raise ValueError(f"cannot serialize {type(x).__name__} to JSON")


def emit_json(obj, indent: int = 0) -> str:
    """Render with sorted keys and 17-digit floats; no timestamps."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{inner}{json.dumps(str(k))}: {emit_json(obj[k], indent + 1)}"
                 for k in sorted(obj)]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        parts = [f"{inner}{emit_json(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    return _json_scalar(obj)


def _write_output(text: str, out: str | None, meta: dict) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    meta = dict(meta, created_utc=stamp)
    with open(out + ".meta.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(meta, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Config plumbing


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError("config root must be a JSON object")
    return doc


def _require(cfg: dict, key: str, caster, what: str):
    if key not in cfg:
        raise ValueError(f"config.{key} is required ({what})")
    try:
        return caster(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config.{key}: {exc}") from exc


def _resolve_seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _resolve_threads(args, cfg: dict) -> int:
    if args.threads is not None:
        return args.threads
    if "threads" in cfg:
        return int(cfg["threads"])
    env = os.environ.get("STOCHASTICA_THREADS")
    return int(env) if env else 1


def _resolve_format(args, cfg: dict, default: str) -> str:
    fmt = args.format or cfg.get("format") or default
    if fmt not in _FORMATS:
        raise ValueError(f"format must be one of {_FORMATS}")
    return fmt


def _curve_from_config(cfg: dict) -> DiscountCurve:
    doc = cfg.get("curve")
    if doc is None:
        raise ValueError("config.curve is required (a rate or a [{t, r}] list)")
    if isinstance(doc, (int, float)):
        return DiscountCurve.flat(float(doc))
    return load_curve(doc)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    model = load_model_config(_require(cfg, "model", dict, "model config"))
    S0 = _require(cfg, "S0", float, "initial state")
    grid = TimeGrid(t0=float(cfg.get("t0", 0.0)),
                    dt=_require(cfg, "dt", float, "step size"),
                    n_steps=_require(cfg, "n_steps", int, "step count"))
    n_paths = _require(cfg, "n_paths", int, "path count")
    seed = _resolve_seed(args, cfg)
    threads = _resolve_threads(args, cfg)
    fmt = _resolve_format(args, cfg, "csv")

    batch = simulate_paths(model, S0, grid, n_paths, seed, threads=threads)
    terminal = [_mean_and_se(batch.paths[:, -1, a]) for a in range(batch.dim)]

    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# seed = {seed}\n")
        buf.write(f"# model_hash = {batch.model_hash}\n")
        buf.write(f"# t0 = {fmt17(grid.t0)}\n")
        buf.write(f"# dt = {fmt17(grid.dt)}\n")
        buf.write(f"# n_steps = {grid.n_steps}\n")
        for a, (mean, se) in enumerate(terminal):
            buf.write(f"# terminal_mean_{a} = {fmt17(mean)}\n")
            buf.write(f"# terminal_se_{a} = {fmt17(se)}\n")
        export_paths_csv(batch, buf)
        text = buf.getvalue()
    else:
        doc = {
            "seed": seed, "model_hash": batch.model_hash,
            "grid": {"t0": grid.t0, "dt": grid.dt, "n_steps": grid.n_steps},
            "n_paths": n_paths,
            "terminal": {"mean": [m for m, _ in terminal],
                         "std_error": [s for _, s in terminal]},
        }
        if cfg.get("include_paths", False):
            doc["paths"] = batch.paths.tolist()
        text = emit_json(doc) + "\n"
    _write_output(text, args.out, {"command": "simulate", "seed": seed})
    return 0


# ---------------------------------------------------------------------------
# density


def _comparison_grid(model, S0: float, t: float, cfg: dict,
                     n_nodes: int, half_width: float) -> np.ndarray:
    explicit = cfg.get("grid")
    if explicit is not None:
        lo, hi = float(explicit["lo"]), float(explicit["hi"])
        n = int(explicit.get("n", n_nodes))
        if not hi > lo or n < 3:
            raise ValueError("grid needs lo < hi and n >= 3")
        return np.linspace(lo, hi, n)
    analytic = _analytic_density(model, S0, t)
    if analytic is None:
        raise ValueError(
            f"no closed-form domain rule for model kind {model.kind!r}; "
            "supply config.grid = {lo, hi, n}")
    return analytic.default_grid(n_nodes, half_width)


def _analytic_density(model, S0: float, t: float):
    params = model.config.get("params", {})
    try:
        if model.kind == "bm":
            return density_mod.density_bm(t, S0, float(params["mu"]),
                                          float(params["sigma"]))
        if model.kind == "gbm":
            return density_mod.density_gbm(t, S0, float(params["mu"]),
                                           float(params["sigma"]))
        if model.kind == "vasicek":
            return density_mod.density_vasicek(t, S0, float(params["a"]),
                                               float(params["b"]),
                                               float(params["sigma"]))
    except (KeyError, TypeError):
        return None
    return None


def _density_by_method(method: str, model, S0: float, t: float,
                       s: np.ndarray, n_steps: int, n_nodes: int,
                       half_width: float) -> np.ndarray:
    if method == "analytic":
        analytic = _analytic_density(model, S0, t)
        if analytic is None:
            raise ValueError(
                f"analytic density unavailable for model kind {model.kind!r}")
        return np.asarray(analytic(s), dtype=float)
    if method == "fokker-planck":
        result = density_mod.evolve_density(
            model, density_mod.PointMass(center=S0, t=0.0), t,
            n_steps=n_steps, n_nodes=n_nodes, half_width=half_width)
        return np.interp(s, result.s_values, result.p_values,
                         left=0.0, right=0.0)
    if method == "path-integral":
        kernel = pi_mod.one_step_kernel(model, 0.0, t / n_steps)
        start = density_mod.point_mass_on_grid(s, S0, 0.0)
        return pi_mod.propagate(kernel, start, n_steps).p_values
    raise ValueError(f"density method must be one of {_DENSITY_METHODS}")


def cmd_density(args) -> int:
    cfg = _load_config(args.config)
    model = load_model_config(_require(cfg, "model", dict, "model config"))
    S0 = _require(cfg, "S0", float, "initial state")
    t = _require(cfg, "t", float, "target time")
    if not t > 0:
        raise ValueError("config.t must be positive")
    methods = cfg.get("method", "analytic")
    if isinstance(methods, str):
        methods = [methods]
    if not methods or any(m not in _DENSITY_METHODS for m in methods):
        raise ValueError(f"method entries must come from {_DENSITY_METHODS}")
    res = cfg.get("resolution", {})
    n_nodes = int(res.get("n_nodes", 801))
    half_width = float(res.get("half_width", 8.0))
    n_steps = int(res.get("n_steps", 256))
    fmt = _resolve_format(args, cfg, "csv")

    s = _comparison_grid(model, S0, t, cfg, n_nodes, half_width)
    tables = {m: _density_by_method(m, model, S0, t, s, n_steps, n_nodes,
                                    half_width) for m in methods}
    w = density_mod.trapezoid_weights(s)
    l1 = {}
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            l1[f"{a}|{b}"] = float(np.sum(w * np.abs(tables[a] - tables[b])))

    mhash = model_hash(model)
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# t = {fmt17(t)}\n")
        buf.write(f"# model_hash = {mhash}\n")
        for key in sorted(l1):
            buf.write(f"# L1({key}) = {fmt17(l1[key])}\n")
        buf.write("S," + ",".join(m.replace("-", "_") for m in methods) + "\n")
        for i, sv in enumerate(s):
            row = ",".join(fmt17(tables[m][i]) for m in methods)
            buf.write(f"{fmt17(sv)},{row}\n")
        text = buf.getvalue()
    else:
        doc = {"t": t, "model_hash": mhash, "s": list(s),
               "densities": {m: list(tables[m]) for m in methods},
               "l1": l1}
        text = emit_json(doc) + "\n"
    _write_output(text, args.out, {"command": "density"})
    return 0


# ---------------------------------------------------------------------------
# price


def _scalar_sigma(model) -> float:
    params = model.config.get("params", {})
    sigma = params.get("sigma")
    if not isinstance(sigma, (int, float)):
        raise ValueError("this route needs a scalar volatility parameter")
    return float(sigma)


def _price_one(method: str, model, curve: DiscountCurve,
               payoff, S0: float, T: float, cfg: dict, seed: int,
               threads: int) -> dict:
    if method == "analytic":
        if payoff.kind not in ("call", "put"):
            raise ValueError("analytic pricing covers call and put payoffs only")
        if model.kind != "gbm":
            raise ValueError("analytic pricing needs proportional dynamics")
        if not curve.is_flat:
            raise ValueError("analytic pricing needs a flat curve")
        p = pricing_mod.BSParams(S=S0, K=payoff.strike, r=curve.rates[0],
                                 sigma=_scalar_sigma(model), t=T)
        return {"value": pricing_mod.bs_price(p, payoff.kind)}
    if method == "pde":
        if model.kind != "gbm":
            raise ValueError("the pde route prices proportional dynamics only")
        sub = cfg.get("pde", {})
        fn = pricing_mod.pv_pde(payoff, curve, _scalar_sigma(model), S0, T,
                                n_nodes=int(sub.get("n_nodes", 4097)),
                                n_steps=int(sub.get("n_steps", 512)),
                                half_width=float(sub.get("half_width", 8.0)))
        return {"value": float(fn(S0))}
    if method == "green":
        sub = cfg.get("green", {})
        dt = float(sub.get("dt", T / int(sub.get("n_steps", 256))))
        rn = model if model.risk_neutral \
            else pricing_mod.risk_neutralize(model, curve)
        green = pi_mod.greens_function(
            rn, curve, 0.0, S0, T, dt,
            n_nodes=int(sub.get("n_nodes", 801)),
            half_width=float(sub.get("half_width", 8.0)))
        return {"value": pricing_mod.pv_green(green, payoff),
                "mass": green.total_mass()}
    if method == "mc":
        sub = cfg.get("mc", {})
        dt = float(sub.get("dt", T / int(sub.get("n_steps", 64))))
        est = pricing_mod.pv_mc(model, curve, payoff, S0, T, dt,
                                int(sub.get("n_paths", 100000)), seed,
                                threads=threads,
                                exact_terminal=sub.get("exact_terminal"))
        return {"value": est.mean, "std_error": est.std_error,
                "n_paths": est.n_paths,
                "sampler": est.metadata.get("sampler", "")}
    raise ValueError(f"price method must be 'all' or one of {_PRICE_METHODS}")


def cmd_price(args) -> int:
    cfg = _load_config(args.config)
    model = load_model_config(_require(cfg, "model", dict, "model config"))
    curve = _curve_from_config(cfg)
    payoff = pricing_mod.payoff_from_config(
        _require(cfg, "payoff", dict, "payoff config"))
    S0 = _require(cfg, "S0", float, "spot")
    T = _require(cfg, "T", float, "horizon")
    seed = _resolve_seed(args, cfg)
    threads = _resolve_threads(args, cfg)
    fmt = _resolve_format(args, cfg, "json")
    method = cfg.get("method", "analytic")
    methods = list(_PRICE_METHODS) if method == "all" else [method]

    results = {m: _price_one(m, model, curve, payoff, S0, T, cfg, seed,
                             threads) for m in methods}
    agreement = {}
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            va, vb = results[a]["value"], results[b]["value"]
            gap = abs(va - vb)
            agreement[f"{a}|{b}"] = {
                "abs": gap,
                "rel": gap / max(abs(va), abs(vb), 1e-300)}

    doc = {"S0": S0, "T": T, "seed": seed, "model_hash": model_hash(model),
           "results": results}
    if len(methods) > 1:
        doc["agreement"] = agreement
    if fmt == "json":
        text = emit_json(doc) + "\n"
    else:
        buf = io.StringIO()
        buf.write(f"# model_hash = {doc['model_hash']}\n")
        buf.write("method,value,std_error\n")
        for m in methods:
            se = results[m].get("std_error", "")
            se_txt = fmt17(se) if se != "" else ""
            buf.write(f"{m},{fmt17(results[m]['value'])},{se_txt}\n")
        for key in sorted(agreement):
            buf.write(f"# gap({key}) = {fmt17(agreement[key]['abs'])}\n")
        text = buf.getvalue()
    _write_output(text, args.out, {"command": "price", "seed": seed})
    return 0


# ---------------------------------------------------------------------------
# greeks / hedge / index


def cmd_greeks(args) -> int:
    cfg = _load_config(args.config)
    p = pricing_mod.BSParams(S=_require(cfg, "S", float, "spot"),
                             K=_require(cfg, "K", float, "strike"),
                             r=_require(cfg, "r", float, "flat rate"),
                             sigma=_require(cfg, "sigma", float, "volatility"),
                             t=_require(cfg, "t", float, "expiry"))
    g = pricing_mod.bs_greeks(p)
    doc = {"inputs": {"S": p.S, "K": p.K, "r": p.r, "sigma": p.sigma, "t": p.t},
           "call": pricing_mod.bs_price(p, "call"),
           "put": pricing_mod.bs_price(p, "put"),
           "delta": g.delta, "kappa": g.kappa, "gamma": g.gamma,
           "degenerate": g.degenerate}
    fmt = _resolve_format(args, cfg, "json")
    if fmt == "json":
        text = emit_json(doc) + "\n"
    else:
        buf = io.StringIO()
        buf.write("quantity,value\n")
        for key in ("call", "put", "delta", "kappa", "gamma"):
            buf.write(f"{key},{fmt17(doc[key])}\n")
        buf.write(f"degenerate,{str(doc['degenerate']).lower()}\n")
        text = buf.getvalue()
    _write_output(text, args.out, {"command": "greeks"})
    return 0


def cmd_hedge(args) -> int:
    cfg = _load_config(args.config)
    rows = _require(cfg, "instruments", list, "instrument list")
    instruments = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ValueError(f"instruments[{i}] must be an object")
        try:
            instruments.append(risk_mod.Instrument(
                delta=float(row["delta"]), kappa=float(row["kappa"]),
                gamma=float(row["gamma"]), name=str(row.get("name", i))))
        except KeyError as missing:
            raise ValueError(
                f"instruments[{i}] missing key {missing.args[0]!r}") from None
    targets = cfg.get("targets", ["kappa"])
    report = risk_mod.neutralize(
        instruments, targets,
        normalization=cfg.get("normalization", "first"),
        values=cfg.get("values"))
    doc = risk_mod.hedge_report_doc(report)
    doc["names"] = [inst.name for inst in instruments]
    doc["targets"] = list(targets)
    fmt = _resolve_format(args, cfg, "json")
    if fmt == "json":
        text = emit_json(doc) + "\n"
    else:
        buf = io.StringIO()
        buf.write(f"# delta = {fmt17(report.delta)}\n")
        buf.write(f"# condition_number = {fmt17(report.condition_number)}\n")
        for t in sorted(report.residual_greeks):
            buf.write(f"# residual_{t} = {fmt17(report.residual_greeks[t])}\n")
        buf.write("name,alpha\n")
        for inst, alpha in zip(instruments, report.alphas):
            buf.write(f"{inst.name},{fmt17(alpha)}\n")
        text = buf.getvalue()
    _write_output(text, args.out, {"command": "hedge"})
    return 0


def cmd_index(args) -> int:
    cfg = _load_config(args.config)
    inputs = risk_mod.IndexInputs(
        prices=_require(cfg, "prices", list, "asset prices"),
        sigmas=_require(cfg, "sigmas", list, "asset volatilities"))
    result = risk_mod.index_weights(inputs)
    doc = {"weights": list(result.weights),
           "index_variance": result.index_variance,
           "degenerate": result.degenerate}
    fmt = _resolve_format(args, cfg, "json")
    if fmt == "json":
        text = emit_json(doc) + "\n"
    else:
        buf = io.StringIO()
        buf.write(f"# index_variance = {fmt17(result.index_variance)}\n")
        buf.write(f"# degenerate = {str(result.degenerate).lower()}\n")
        buf.write("asset,weight\n")
        for i, wv in enumerate(result.weights):
            buf.write(f"{i},{fmt17(wv)}\n")
        text = buf.getvalue()
    _write_output(text, args.out, {"command": "index"})
    return 0


# ---------------------------------------------------------------------------
# check


def _check_price_cell(K: float, sigma: float, T: float, seed: int,
                      threads: int) -> list[dict]:
    S0, r = 100.0, 0.05
    model = load_model_config({"type": "gbm",
                               "params": {"mu": r, "sigma": sigma}})
    curve = DiscountCurve.flat(r)
    payoff = pricing_mod.call_payoff(K)
    p = pricing_mod.BSParams(S=S0, K=K, r=r, sigma=sigma, t=T)
    ref = pricing_mod.bs_price(p, "call")
    label = f"K={K:g} sigma={sigma:g} T={T:g}"
    checks = []

    fn = pricing_mod.pv_pde(payoff, curve, sigma, S0, T)
    rel = abs(float(fn(S0)) - ref) / ref
    checks.append({"name": f"price pde vs analytic [{label}]",
                   "measure": rel, "limit": 1e-3, "passed": rel < 1e-3})

    rn = pricing_mod.risk_neutralize(model, curve)
    green = pi_mod.greens_function(rn, curve, 0.0, S0, T, T / 256)
    rel = abs(pricing_mod.pv_green(green, payoff) - ref) / ref
    checks.append({"name": f"price green vs analytic [{label}]",
                   "measure": rel, "limit": 1e-3, "passed": rel < 1e-3})

    est = pricing_mod.pv_mc(model, curve, payoff, S0, T, T / 64, 200000,
                            seed, threads=threads, exact_terminal=True)
    z = abs(est.mean - ref) / est.std_error
    checks.append({"name": f"price mc z-score [{label}]",
                   "measure": z, "limit": 4.0, "passed": z < 4.0})
    return checks


def _check_density(kind: str, method: str) -> dict:
    configs = {
        "bm": ({"type": "bm", "params": {"mu": 0.1, "sigma": 0.3}}, 0.0),
        "gbm": ({"type": "gbm", "params": {"mu": 0.05, "sigma": 0.2}}, 100.0),
        "vasicek": ({"type": "vasicek",
                     "params": {"a": 1.0, "b": 0.05, "sigma": 0.02}}, 0.03),
    }
    doc, S0 = configs[kind]
    model = load_model_config(doc)
    t = 1.0
    analytic = _analytic_density(model, S0, t)
    s = analytic.default_grid(801, 8.0)
    approx = _density_by_method(method, model, S0, t, s, 256, 801, 8.0)
    w = density_mod.trapezoid_weights(s)
    l1 = float(np.sum(w * np.abs(approx - analytic(s))))
    return {"name": f"density {method} vs analytic [{kind}]",
            "measure": l1, "limit": 5e-3, "passed": l1 < 5e-3}


def cmd_check(args) -> int:
    cfg = _load_config(args.config)
    seed = _resolve_seed(args, cfg)
    threads = _resolve_threads(args, cfg)
    fmt = _resolve_format(args, cfg, "json")

    checks = []
    for K, sigma, T in ((80.0, 0.4, 2.0), (100.0, 0.2, 1.0),
                        (120.0, 0.1, 0.25)):
        checks.extend(_check_price_cell(K, sigma, T, seed, threads))
    for kind in ("bm", "gbm", "vasicek"):
        checks.append(_check_density(kind, "fokker-planck"))
        checks.append(_check_density(kind, "path-integral"))

    ok = all(c["passed"] for c in checks)
    doc = {"passed": ok, "n_checks": len(checks), "checks": checks}
    if fmt == "json":
        text = emit_json(doc) + "\n"
    else:
        buf = io.StringIO()
        buf.write("name,measure,limit,passed\n")
        for c in checks:
            buf.write(f"{json.dumps(c['name'])},{fmt17(c['measure'])},"
                      f"{fmt17(c['limit'])},{str(c['passed']).lower()}\n")
        text = buf.getvalue()
    _write_output(text, args.out, {"command": "check", "seed": seed})
    if not ok:
        raise NumericalError(
            "cross-method agreement suite failed; see the report for the "
            "failing checks")
    return 0


# ---------------------------------------------------------------------------
# Entry point


_COMMANDS = {
    "simulate": cmd_simulate,
    "density": cmd_density,
    "price": cmd_price,
    "greeks": cmd_greeks,
    "hedge": cmd_hedge,
    "index": cmd_index,
    "check": cmd_check,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochastica",
        description="Simulate diffusions, evolve densities, price and hedge.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "sample Euler paths and summary statistics",
        "density": "tabulate a terminal density by one or more methods",
        "price": "value a payoff by analytic, pde, green or mc routes",
        "greeks": "closed-form call sensitivities",
        "hedge": "solve for sensitivity-neutral position sizes",
        "index": "variance-minimizing index weights",
        "check": "run the cross-method agreement suite",
    }
    for name, fn in _COMMANDS.items():
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="overrides config.seed")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=_FORMATS,
                        help="output format (default depends on command)")
        sp.add_argument("--threads", type=int,
                        help="worker cap; results do not depend on it")
        sp.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
