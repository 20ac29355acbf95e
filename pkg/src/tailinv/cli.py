"""Command-line front end.

Every command writes a JSON report (stdout by default) and, with
``--plot-data DIR``, CSV tables ready for plotting.  Exit codes: 0 success
(a Refuted verdict is a successful run), 1 invalid input, 2 computation
failure such as an infeasible contraction certificate.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import cancellation as canc
from . import counterexample as cx
from . import inverse as inv
from . import montecarlo as mc
from .forward import ProductLaw, WeightFamily, product_tail, weighted_sum_tail
from .io import dumps_report, read_json, write_batch, write_csv
from .measures import DiscreteMeasure, EvalSet, HomogeneousTailMeasure, MeasureError, make_discrete, quadrant_split, tail_eval

log = logging.getLogger("tailinv")

EXIT_OK, EXIT_INVALID, EXIT_COMPUTE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from e


# ---------------------------------------------------------------------------
# Command handlers: each returns a report dict; "tables" holds CSV data
# ---------------------------------------------------------------------------


def _verdict_report(v: canc.DeterminingVerdict, extra=None) -> dict:
    return {"command": "check", **v.to_dict(), **(extra or {})}


def cmd_check(args) -> dict:
    kw = {"theta_max": args.theta_max, "grid_step": args.step, "zero_tol": args.zero_tol}
    chosen = [x for x in (args.weights, args.family, args.law, args.uniform, args.rho) if x is not None]
    if len(chosen) != 1:
        raise UsageError("give exactly one of --weights, --family, --law, --uniform, --rho")
    if args.weights is not None:
        v = canc.check_scalar_determining(_floats(args.weights), args.alpha, **kw)
        src = {"weights": _floats(args.weights)}
    elif args.family is not None:
        fam = WeightFamily.from_dict(read_json(args.family))
        if fam.kind == "matrices":
            raise MeasureError("cancellation checks need scalar or diagonal families; use invert for matrices")
        if fam.kind == "scalars":
            v = canc.check_scalar_determining(fam, args.alpha, **kw)
        else:
            v = canc.check_diagonal_determining(fam, args.alpha, **kw)
        src = {"family": fam.to_dict()}
    elif args.law is not None:
        law = ProductLaw.from_dict(read_json(args.law))
        v = canc.check_product_determining(law, args.alpha, **kw)
        src = {"law": law.to_dict()}
    elif args.uniform is not None:
        a, b = _floats(args.uniform)
        v = canc.check_uniform_product(a, b, args.alpha, **kw)
        src = {"uniform": [a, b]}
    else:
        rho = DiscreteMeasure.from_dict(read_json(args.rho))
        K = tuple(int(k) for k in _floats(args.K)) if args.K else tuple(range(rho.dim))
        v = canc.check_measure_determining(rho, canc.CancellationTask(K, args.alpha), **kw)
        src = {"rho": rho.to_dict(), "K": list(K)}
    return _verdict_report(v, {"input": src, "alpha": args.alpha})


def cmd_mellin(args) -> dict:
    if (args.weights is None) == (args.rho is None):
        raise UsageError("give exactly one of --weights or --rho")
    if args.weights is not None:
        psi = [p for p in _floats(args.weights) if p != 0]
        rho = make_discrete(1, [((p,), 1.0) for p in psi])
    else:
        rho = DiscreteMeasure.from_dict(read_json(args.rho))
    split = quadrant_split(rho)
    if len(split.axes):
        raise MeasureError("rho charges the coordinate axes")
    d = rho.dim
    pattern = tuple(int(m) for m in _floats(args.pattern)) if args.pattern else (0,) * d
    if len(pattern) != d or any(m not in (0, 1) for m in pattern):
        raise UsageError(f"pattern must have {d} entries in {{0,1}}")
    if d != 1:
        raise UsageError("mellin profiles are emitted for one-dimensional frequencies only")
    task = canc.CancellationTask((args.j,), args.alpha)
    n = 2 * int(round(args.theta_max / args.step)) + 1
    thetas = np.linspace(-args.theta_max, args.theta_max, n)
    prof = canc.mellin_profile(split, task, args.j, pattern, thetas)
    absv = np.abs(prof.values)
    i = int(np.argmin(absv))
    return {
        "command": "mellin",
        "alpha": args.alpha,
        "j": args.j,
        "pattern": list(pattern),
        "theta_max": args.theta_max,
        "n_points": n,
        "min_abs_value": float(absv[i]),
        "min_location": float(thetas[i]),
        "tables": {"mellin": (["theta", "re", "im", "abs"], list(prof.rows()))},
    }


def _load_measure(path) -> HomogeneousTailMeasure:
    return HomogeneousTailMeasure.from_dict(read_json(path))


def _load_panel(path) -> list[EvalSet]:
    data = read_json(path)
    if isinstance(data, dict):
        data = [data]
    return [EvalSet.from_dict(x) for x in data]


def cmd_forward(args) -> dict:
    mu_Z = _load_measure(args.muZ)
    if (args.family is None) == (args.law is None):
        raise UsageError("give exactly one of --family or --law")
    if args.family is not None:
        fam = WeightFamily.from_dict(read_json(args.family))
        mu_X = weighted_sum_tail(mu_Z, fam)
    else:
        mu_X = product_tail(mu_Z, ProductLaw.from_dict(read_json(args.law)))
    if args.out:
        Path(args.out).write_text(json.dumps(mu_X.to_dict(), sort_keys=True, indent=2) + "\n")
    rep = {"command": "forward", "mu_X": mu_X.to_dict()}
    if args.panel:
        rep["panel"] = [{"set": A.to_dict(), "mu_Z": tail_eval(mu_Z, A), "mu_X": tail_eval(mu_X, A)} for A in _load_panel(args.panel)]
    return rep


def _precondition(arg):
    if arg in ("auto", "none"):
        return arg
    return np.asarray(read_json(arg), dtype=float)


def cmd_invert(args) -> dict:
    fam = WeightFamily.from_dict(read_json(args.family))
    mu_X = _load_measure(args.muX)
    sets = _load_panel(args.set)
    pre = _precondition(args.precondition)
    cert = inv.certify(fam, mu_X.alpha, None if isinstance(pre, str) else pre)
    rows = []
    for B in sets:
        res = inv.neumann_invert(mu_X, fam, B, args.tol, max_terms=args.max_terms, preconditioner=pre)
        rows.append({"set": B.to_dict(), **res.to_dict()})
    rep = {"command": "invert", "certificate": cert.to_dict(), "results": rows, "tol": args.tol}
    if len(rows) == 1:
        rep.update({k: rows[0][k] for k in ("value", "tail_bound", "terms_used", "partial")})
    return rep


def cmd_roundtrip(args) -> dict:
    mu_Z = _load_measure(args.muZ)
    fam = WeightFamily.from_dict(read_json(args.family))
    panel = _load_panel(args.panel)
    rows = inv.roundtrip_report(mu_Z, fam, panel, args.tol, max_terms=args.max_terms, preconditioner=_precondition(args.precondition))
    table = [r.to_dict() for r in rows]
    return {"command": "roundtrip", "rows": table, "all_pass": all(r.passed for r in rows), "tol": args.tol}


def _osc_params(args) -> cx.OscLawParams:
    return cx.OscLawParams(args.alpha, args.theta0, args.a, args.b, args.r)


def cmd_counterexample(args) -> dict:
    params = _osc_params(args)
    builders = {"single": cx.build_law, "symmetric": cx.symmetric_law, "flipped": cx.flipped_pair_law}
    law = builders[args.variant](params)
    base = law if isinstance(law, cx.OscillatingLaw) else law.positive_part
    sup, inf_ = cx.oscillation_certificate(base, args.windows)
    t, g = cx.oscillation_profile(base, args.windows)
    rep = {
        "command": "counterexample",
        "params": {"alpha": params.alpha, "theta0": params.theta0, "a": params.a, "b": params.b, "r": params.r, "variant": args.variant},
        "atom_at_one": base.atom_at_one,
        "amplitude": params.amplitude,
        "oscillation": {"sup": sup, "inf": inf_, "gap": sup - inf_, "non_rv": cx.is_non_rv(sup, inf_)},
        "tables": {"oscillation": (["lnx", "x^alpha_tail"], list(zip(t.tolist(), g.tolist())))},
    }
    if args.n:
        x = cx.sample(law, args.n, seed=args.seed, threads=args.threads)
        rep["n"], rep["seed"] = args.n, args.seed
        if args.out:
            with open(args.out, "w") as fh:
                fh.writelines(f"{v!r}\n" for v in x.tolist())
            rep["samples"] = str(args.out)
    return rep


def cmd_simulate(args) -> dict:
    cfg = read_json(args.config)
    if not isinstance(cfg, dict) or "law_Z" not in cfg:
        raise MeasureError("config needs a law_Z entry")
    n = int(cfg.get("n", 10_000))
    seed = int(cfg.get("seed", args.seed))
    law_Z = mc.law_from_dict(cfg["law_Z"])
    if "family" in cfg:
        batch = mc.simulate_weighted_sum(law_Z, WeightFamily.from_dict(cfg["family"]), n, seed, threads=args.threads)
    elif "law_A" in cfg:
        batch = mc.simulate_product(mc.law_from_dict(cfg["law_A"]), law_Z, n, seed, threads=args.threads)
    else:
        batch = mc.SampleBatch(law_Z.dim, mc._chunked(n, np.random.SeedSequence(seed), law_Z.draw), seed, {"kind": "raw", "law_Z": law_Z.to_dict()})
    if args.out:
        write_batch(args.out, batch)
    rep = {"command": "simulate", "n": n, "seed": seed, "dim": batch.dim, "provenance": batch.provenance}
    k = int(cfg.get("hill_k", mc.default_k(n)))
    try:
        rep["hill"] = mc.hill(batch, k).to_dict()
    except MeasureError as e:
        rep["hill"] = {"error": str(e)}
    mags = batch.magnitudes()
    th = cfg.get("thresholds")
    if th is None:
        lo, hi = np.quantile(mags, [0.9, 1 - 200 / n]) if n > 2000 else np.quantile(mags, [0.5, 0.9])
        th = np.geomspace(max(lo, 1e-300), max(hi / 2, lo * 1.01), 12).tolist()
    ratios = mc.tail_ratio(batch, th)
    rep["tail_ratios"] = [r.to_dict() for r in ratios]
    rep["tables"] = {"tail_ratio": (["s", "ratio", "sigma"], [(r.s, r.ratio, r.sigma) for r in ratios])}
    if batch.dim > 1 and cfg.get("spectral", True):
        try:
            rep["spectral"] = mc.empirical_spectral(batch, float(cfg.get("radius_quantile", 0.99)), seed=seed).to_dict()
        except MeasureError as e:
            rep["spectral"] = {"error": str(e)}
    return rep


def cmd_verify_system(args) -> dict:
    fx = cx.remark22_fixture(args.c1, args.c_minus1, args.alpha, args.theta0, args.a, args.b, variant=args.variant)
    rho = fx.perturbed(args.perturb) if args.perturb != 1.0 else fx.rho
    res = canc.system_residual(rho, fx.nu1, fx.nu2, fx.panel)
    return {
        "command": "verify-system",
        "variant": args.variant,
        "residual": res,
        "tv_difference": fx.tv_difference(),
        "perturb": args.perturb,
        "panel_size": len(fx.panel),
        "fixture": fx.meta,
    }


# ---------------------------------------------------------------------------


def emit_plot_data(report: dict, out_dir) -> list[Path]:
    """Write the report's tables as CSV files (one per table) into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (header, rows) in sorted(report.get("tables", {}).items()):
        p = out / f"{name}.csv"
        write_csv(p, header, rows)
        paths.append(p)
    return paths


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tailinv", description="Tail-measure maps, cancellation checks and inversion.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--report", help="JSON report path (default: stdout)")
        sp.add_argument("--plot-data", help="directory for CSV tables")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        return sp

    def grid(sp):
        sp.add_argument("--alpha", type=float, required=True)
        sp.add_argument("--theta-max", type=float, default=canc.THETA_MAX)
        sp.add_argument("--step", type=float, default=canc.GRID_STEP)
        sp.add_argument("--zero-tol", type=float, default=canc.ZERO_TOL)

    sp = common(sub.add_parser("check", help="decide a cancellation condition"))
    grid(sp)
    sp.add_argument("--weights", help="scalar weights, comma separated")
    sp.add_argument("--family", help="WeightFamily JSON (scalars or diag)")
    sp.add_argument("--law", help="atomic law of A as DiscreteMeasure JSON")
    sp.add_argument("--uniform", help="a,b for A ~ Uniform(a,b)")
    sp.add_argument("--rho", help="DiscreteMeasure JSON for the quadrant system")
    sp.add_argument("--K", help="coordinates to check (0-based, comma separated)")
    sp.set_defaults(handler=cmd_check)

    sp = common(sub.add_parser("mellin", help="Mellin profile of a signed sum"))
    grid(sp)
    sp.add_argument("--weights")
    sp.add_argument("--rho")
    sp.add_argument("--j", type=int, default=0)
    sp.add_argument("--pattern", help="sign exponents, comma separated")
    sp.set_defaults(handler=cmd_mellin)

    sp = common(sub.add_parser("forward", help="tail measure of a weighted sum or product"))
    sp.add_argument("--muZ", required=True)
    sp.add_argument("--family")
    sp.add_argument("--law")
    sp.add_argument("--panel")
    sp.add_argument("--out")
    sp.set_defaults(handler=cmd_forward)

    def inversion(sp):
        sp.add_argument("--family", required=True)
        sp.add_argument("--tol", type=float, default=1e-8)
        sp.add_argument("--max-terms", type=int, default=inv.MAX_TERMS)
        sp.add_argument("--precondition", default="none", help="auto, none, or a JSON matrix file")

    sp = common(sub.add_parser("invert", help="recover mu_Z from mu_X by the Neumann series"))
    inversion(sp)
    sp.add_argument("--muX", required=True)
    sp.add_argument("--set", required=True, help="EvalSet JSON (or a list of them)")
    sp.set_defaults(handler=cmd_invert)

    sp = common(sub.add_parser("roundtrip", help="forward map then inversion on a panel"))
    inversion(sp)
    sp.add_argument("--muZ", required=True)
    sp.add_argument("--panel", required=True)
    sp.set_defaults(handler=cmd_roundtrip)

    sp = common(sub.add_parser("counterexample", help="log-periodic law: tail, certificate, samples"))
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--theta0", type=float, required=True)
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--b", type=float, default=0.0)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--variant", choices=("single", "symmetric", "flipped"), default="single")
    sp.add_argument("--n", type=int, default=0)
    sp.add_argument("--windows", type=int, default=1)
    sp.add_argument("--out", help="samples CSV, one value per line")
    sp.set_defaults(handler=cmd_counterexample)

    sp = common(sub.add_parser("simulate", help="Monte Carlo batch from a JSON config"))
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="batch binary path")
    sp.set_defaults(handler=cmd_simulate)

    sp = common(sub.add_parser("verify-system", help="residual of the non-uniqueness fixture"))
    sp.add_argument("--c1", type=float, default=1.0)
    sp.add_argument("--c-minus1", type=float, default=1.0)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--theta0", type=float, default=1.0)
    sp.add_argument("--a", type=float, default=1.0)
    sp.add_argument("--b", type=float, default=0.0)
    sp.add_argument("--variant", choices=("sum", "difference"), default="sum")
    sp.add_argument("--perturb", type=float, default=1.0, help="factor on the second rho atom")
    sp.set_defaults(handler=cmd_verify_system)
    return p


def _write_meta(report_path: Path, argv, elapsed: float) -> None:
    meta = {
        "argv": list(argv),
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "elapsed_seconds": elapsed,
    }
    report_path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    t0 = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        report = args.handler(args)
    except (UsageError, ValueError, OSError, KeyError, TypeError) as e:
        print(f"tailinv: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (inv.InfeasibleError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as e:
        print(f"tailinv: computation failed: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    if args.plot_data:
        for path in emit_plot_data(report, args.plot_data):
            log.info("wrote %s", path)
    body = {k: v for k, v in report.items() if k != "tables"}
    text = dumps_report(body)
    if args.report:
        Path(args.report).write_text(text)
        _write_meta(Path(args.report), argv, time.perf_counter() - t0)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
