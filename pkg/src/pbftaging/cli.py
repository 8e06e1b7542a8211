"""Command-line front end.

Exit codes: 0 success, 1 validation or solver failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict, replace
from pathlib import Path

from . import checks
from .metrics import MetricsReport, evaluate
from .moea import GENE_NAMES, Bounds, ModelEvaluator, RunConfig, nsga2_run, random_search
from .params import Config, ParameterError, load_config, validate
from .sim import SimConfig, compare, run as run_simulation, write_trace_csv
from .steady import SolverError

SWEEPABLE = {
    "n_total": "n_total",
    "k_capacity": "k_capacity",
    "lambda": "lam",
    "mu_h": "mu_h",
    "xi": "xi",
    "mu_r": "mu_r",
    "beta_h": "beta_h",
    "beta_w": "beta_w",
}
INT_PARAMS = {"n_total", "k_capacity"}

SWEEP_HEADER = ["contrast_param", "contrast_value", "param", "value", *MetricsReport.field_names(), "error"]
FRONT_HEADER = [*GENE_NAMES, "total_cost", "t_resp", "rank", "crowding"]
HISTORY_HEADER = ["generation", "hv", "spacing", "best_scalarized"]


class UsageError(Exception):
    pass


def _num(x: float):
    """JSON-safe number: infinities become strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _dumps(obj) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return _num(o)

    return json.dumps(clean(obj), indent=2, sort_keys=False) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([_fmt(row.get(h, "")) for h in header])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _emit(args, name: str, text: str) -> None:
    if args.out:
        _write_atomic(Path(args.out) / name, text)
    else:
        sys.stdout.write(text)


def _fail(kind: str, message: str, **extra) -> int:
    sys.stdout.write(_dumps({"error": kind, "message": message, **extra}))
    return 1


def _violations_payload(result) -> list[dict]:
    return [{"name": v.name, "message": v.message} for v in result.violations]


def _load(args) -> Config:
    try:
        return load_config(args.config)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot read config: {exc}") from exc


def _parse_values(text: str, param: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad value list {text!r}") from exc
    if not vals:
        raise UsageError("empty value list")
    if param in INT_PARAMS:
        if any(not v.is_integer() for v in vals):
            raise UsageError(f"{param} takes integers")
        return [int(v) for v in vals]
    return vals


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    result = cfg.validate()
    if not result.ok:
        return _fail("validation", "invalid configuration", violations=_violations_payload(result))
    try:
        rep = evaluate(cfg.model, cfg.costs, cfg.weights)
    except (SolverError, ArithmeticError, ParameterError) as exc:
        return _fail("solver", str(exc))
    if args.format == "csv":
        _emit(args, "metrics.csv", _csv_text(MetricsReport.field_names(), [rep.to_dict()]))
    else:
        _emit(args, "metrics.json", _dumps(rep.to_dict()))
    return 0


def _sweep_rows(cfg: Config, param: str, values, contrast):
    rows = []
    contrast_name, contrast_values = contrast if contrast else ("", [None])
    for cv in contrast_values:
        base = cfg.model
        if contrast_name:
            base = replace(base, **{SWEEPABLE[contrast_name]: cv})
        for v in values:
            row = {"contrast_param": contrast_name, "contrast_value": "" if cv is None else cv, "param": param, "value": v}
            model = replace(base, **{SWEEPABLE[param]: v})
            check = validate(model, cfg.costs, cfg.weights)
            try:
                if not check.ok:
                    raise ParameterError(check)
                row.update(evaluate(model, cfg.costs, cfg.weights).to_dict())
                row["error"] = ""
            except (SolverError, ArithmeticError, ParameterError) as exc:
                row["error"] = str(exc)
            rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if args.param not in SWEEPABLE:
        raise UsageError(f"--param must be one of {sorted(SWEEPABLE)}")
    values = _parse_values(args.values, args.param) if args.values else list(range(10, 26))
    if not args.values and args.param != "n_total":
        raise UsageError("--values is required unless sweeping n_total")
    contrast = None
    if args.contrast:
        name, _, vals = args.contrast.partition("=")
        if name not in SWEEPABLE or not vals:
            raise UsageError("--contrast takes <name>=<v1,v2,...>")
        if name == args.param:
            raise UsageError("the contrast parameter must differ from the swept one")
        contrast = (name, _parse_values(vals, name))
    rows = _sweep_rows(cfg, args.param, values, contrast)
    if args.format == "json":
        _emit(args, "sweep.json", _dumps(rows))
    else:
        _emit(args, "sweep.csv", _csv_text(SWEEP_HEADER, rows))
    return 0


def cmd_optimize(args) -> int:
    cfg = _load(args)
    result = cfg.validate()
    if not result.ok:
        return _fail("validation", "invalid configuration", violations=_violations_payload(result))
    try:
        bounds = Bounds()
        if not bounds.low[0] > cfg.model.xi:
            return _fail("validation", "repair-rate lower bound must exceed the failure rate")
        run_cfg = RunConfig(pop_size=args.pop, generations=args.generations, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    evaluator = ModelEvaluator(cfg.model, cfg.costs, cfg.weights)
    res = nsga2_run(evaluator, bounds, run_cfg)
    baseline = random_search(ModelEvaluator(cfg.model, cfg.costs, cfg.weights), bounds, run_cfg.budget, args.seed)

    out = Path(args.out or ".")
    front = sorted(res.front.members, key=lambda ind: ind.objectives)
    _write_atomic(out / "front.csv", _csv_text(FRONT_HEADER, [ind.as_row() for ind in front]))
    _write_atomic(out / "history.csv", _csv_text(HISTORY_HEADER, [asdict(h) for h in res.history]))
    chosen = {
        "genes": dict(zip(GENE_NAMES, res.chosen.genes)),
        "total_cost": res.chosen.objectives[0],
        "t_resp": res.chosen.objectives[1],
        "scalarized": res.chosen.scalarized,
        "weights": asdict(cfg.weights),
        "n_total": cfg.model.n_total,
        "seed": args.seed,
        "pop_size": run_cfg.pop_size,
        "generations": run_cfg.generations,
        "evaluations": res.evaluations,
        "hv_initial": res.history[0].hv,
        "hv_final": res.history[-1].hv,
    }
    _write_atomic(out / "chosen.json", _dumps(chosen))
    comparison = {
        "budget": run_cfg.budget,
        "nsga2_best": res.chosen.scalarized,
        "random_best": baseline.scalarized,
        "random_genes": dict(zip(GENE_NAMES, baseline.genes)),
        "nsga2_not_worse": res.chosen.scalarized <= baseline.scalarized,
    }
    _write_atomic(out / "comparison.json", _dumps(comparison))
    sys.stdout.write(_dumps({"chosen": chosen, "comparison": comparison}))
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    result = cfg.validate()
    if not result.ok:
        return _fail("validation", "invalid configuration", violations=_violations_payload(result))
    sim_cfg = SimConfig(
        horizon=args.horizon,
        warmup=args.warmup,
        seed=args.seed,
        batch_count=args.batches,
        trace_limit=args.trace_limit if args.trace else 0,
    )
    try:
        sim_cfg.check()
    except ValueError as exc:
        return _fail("validation", str(exc))
    try:
        analytical = evaluate(cfg.model, cfg.costs, cfg.weights)
    except (SolverError, ArithmeticError, ParameterError) as exc:
        return _fail("solver", str(exc))
    run = run_simulation(cfg.model, sim_cfg)
    if args.trace:
        write_trace_csv(run.trace, args.trace)
    payload = {
        "simulation": run.report.to_dict(),
        "analytical": analytical.to_dict(),
        "comparison": compare(run.report, analytical).to_dict(),
    }
    _emit(args, "simulation.json", _dumps(payload))
    return 0


def cmd_validate(args) -> int:
    results = checks.run_checks(inject_fault=args.inject_fault)
    lines = []
    for r in results:
        lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    ok = all(r.passed for r in results)
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbftaging", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=1):
        p.add_argument("--config", help="JSON config; missing keys use the defaults")
        p.add_argument("--out", help="directory for output files (default: stdout)")
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("evaluate", help="solve the chain and print every metric")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="evaluate over a list of values of one parameter")
    common(p)
    p.add_argument("--param", default="n_total")
    p.add_argument("--values", help="comma list; defaults to 10..25 for n_total")
    p.add_argument("--contrast", help="<name>=<v1,v2,v3>: repeat the sweep for each value")
    p.set_defaults(func=cmd_sweep, format="csv")

    p = sub.add_parser("optimize", help="NSGA-II over (mu_r, beta_h, beta_w) plus a random baseline")
    common(p)
    p.add_argument("--pop", type=int, default=50)
    p.add_argument("--generations", type=int, default=200)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="discrete-event simulation checked against the chain")
    common(p)
    p.add_argument("--horizon", type=float, default=1e6, help="simulated ms")
    p.add_argument("--warmup", type=float, default=None, help="discarded ms (default horizon/10)")
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--trace", help="write an event trace CSV here")
    p.add_argument("--trace-limit", type=int, default=100_000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    common(p)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"pbftaging: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
