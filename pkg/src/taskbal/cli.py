"""Command-line interface: ``taskbal {plan,weights,metrics,bench}``.

Every subcommand writes a JSON artifact and a fixed-width text table into
the output directory (``--out``, else ``$TASKBAL_OUT``, else
``./taskbal-out``).  Exit status is 0 only when all artifacts were written;
failures print ``error [stage]: message`` and exit 1.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .core import (
    SCHEMA_VERSION,
    MeasurementMode,
    Strategy,
    WeightVector,
    dump_json,
    load_task_graph,
    load_validation_matrix,
    required_runs,
    validate_task_graph,
)
from .measure import measure
from .metrics import comparison_report, format_report, read_results_csv
from .weights import AlphaCoefficients, compute_weights, integrate

log = logging.getLogger("taskbal")

OUT_ENV = "TASKBAL_OUT"
DEFAULT_OUT = "taskbal-out"


class CliError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except CliError:
        raise
    except Exception as exc:
        stage = getattr(exc, "stage", name)
        cause = getattr(exc, "cause", exc)
        raise CliError(stage, f"{type(cause).__name__}: {cause}") from exc


def _temperature(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'auto', got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("temperature must be positive")
    return value


def _alpha(text: str) -> AlphaCoefficients:
    try:
        return AlphaCoefficients.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return p


def output_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    return Path(out)


def config_hash(args, files) -> str:
    """sha256 over effective arguments and the bytes of every input file."""
    h = hashlib.sha256()
    # Input files enter through their bytes, not their paths.
    settings = {k: (str(v) if not isinstance(v, (int, float, str, type(None))) else v)
                for k, v in sorted(vars(args).items())
                if k not in ("out", "func", "verbose") and not isinstance(v, Path)}
    h.update(json.dumps(settings, sort_keys=True).encode())
    for f in files:
        if f is not None:
            h.update(Path(f).read_bytes())
    return h.hexdigest()


def _write(outdir: Path, stem: str, payload: dict, text: str) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    jpath, tpath = outdir / f"{stem}.json", outdir / f"{stem}.txt"
    dump_json(payload, jpath)
    tpath.write_text(text)
    return [jpath, tpath]


def _header(args, chash: str) -> str:
    return f"config {chash[:12]}  seed {args.seed}\n"


def _envelope(args, chash: str, command: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "seed": args.seed,
            "config_hash": chash, "version": __version__}


# -- subcommands ---------------------------------------------------------------

def cmd_plan(args) -> list[Path]:
    from .bench.pipeline import cost_estimate

    graph = _stage("load", lambda: validate_task_graph(load_task_graph(args.graph), min_units=1))
    runs = required_runs(graph, args.mode)
    cost = _stage("plan", cost_estimate, graph.n, args.r_large, args.r_mini)
    chash = config_hash(args, [args.graph])
    payload = _envelope(args, chash, "plan")
    payload.update({
        "mode": MeasurementMode.parse(args.mode).value,
        "grouping_mode": graph.grouping_mode.value,
        "units": list(graph.units),
        "members": {u: list(graph.members[u]) for u in graph.units},
        "r_large": args.r_large,
        "r_mini": args.r_mini,
        "runs": [str(r) for r in runs],
        "cost_estimate": cost,
    })
    lines = [_header(args, chash).rstrip("\n"), f"{len(runs)} runs ({payload['mode']} mode, {graph.n} units)"]
    lines += [f"  {r}" for r in runs]
    lines.append(f"estimated preparation cost: {cost:.2f} x final training "
                 f"({args.r_large:g} + {graph.n} x {args.r_mini:g})")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    return _write(output_dir(args), "plan", payload, text)


def _strategy_fixture(path) -> tuple[WeightVector, WeightVector, WeightVector]:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {data.get('schema_version')}")
    units = tuple(data["units"])
    return (WeightVector(units, data["out"], Strategy.OUT),
            WeightVector(units, data["in"], Strategy.IN),
            WeightVector(units, data["diff"], Strategy.DIFF))


def _weights_table(vectors: dict[str, WeightVector]) -> str:
    units = next(iter(vectors.values())).units
    header = ["strategy"] + list(units)
    rows = [[name] + [f"{v:.4f}" for v in w.values] for name, w in vectors.items()]
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cmd_weights(args) -> list[Path]:
    outdir = output_dir(args)
    if args.strategies is not None:
        if args.matrix is not None:
            raise CliError("args", "--strategies and --matrix are mutually exclusive")
        out, inward, diff = _stage("load", _strategy_fixture, args.strategies)
        lam = _stage("weights", integrate, out, inward, diff, args.alpha)
        chash = config_hash(args, [args.strategies])
        payload = _envelope(args, chash, "weights")
        payload.update({"source": "strategies", "temperature": None,
                        "alpha": list(args.alpha.as_tuple()),
                        "out": out.to_json(), "in": inward.to_json(), "diff": diff.to_json(),
                        "integrated": lam.to_json()})
        text = _header(args, chash) + _weights_table(
            {"lambda_out": out, "lambda_in": inward, "lambda_D": diff, "lambda_int": lam})
        print(text, end="")
        return _write(outdir, "weights", payload, text)

    if args.matrix is None or args.graph is None:
        raise CliError("args", "weights needs --matrix and --graph (or --strategies)")
    graph = _stage("load", lambda: validate_task_graph(load_task_graph(args.graph)))
    matrix = _stage("load", load_validation_matrix, args.matrix)
    cm, dv = _stage("measure", measure, matrix, graph, args.mode)
    sw = _stage("weights", compute_weights, cm, dv, args.temperature, args.alpha)
    chash = config_hash(args, [args.graph, args.matrix])
    payload = _envelope(args, chash, "weights")
    payload.update({"source": "matrix", "mode": MeasurementMode.parse(args.mode).value,
                    "contribution": cm.to_json(), "difficulty": dv.to_json()})
    payload.update(sw.to_json())
    text = (_header(args, chash)
            + f"temperature {sw.temperature.value:.6g}"
            + ("" if sw.temperature_attainable else "  (weight range not attainable)") + "\n\n"
            + "contribution (row i -> column j)\n" + cm.to_table() + "\n"
            + "difficulty\n" + dv.to_table() + "\n"
            + _weights_table({"lambda_out": sw.out, "lambda_in": sw.inward, "lambda_D": sw.diff,
                              "lambda_int": sw.integrated}))
    print(text, end="")
    paths = _write(outdir, "weights", payload, text)
    dump_json(sw.integrated.to_json(), outdir / "lambda.json")
    return paths + [outdir / "lambda.json"]


def cmd_metrics(args) -> list[Path]:
    graph = _stage("load", lambda: validate_task_graph(load_task_graph(args.graph), min_units=1))
    results = _stage("load", read_results_csv, args.results)
    report = _stage("metrics", comparison_report, results, args.baseline, graph, args.zero_shot)
    chash = config_hash(args, [args.graph, args.results])
    payload = _envelope(args, chash, "metrics")
    payload.update(report)
    text = _header(args, chash) + format_report(report)
    print(text, end="")
    return _write(output_dir(args), "metrics", payload, text)


def _load_bench_config(path):
    from .bench.pipeline import RunPlan
    from .bench.synthetic import SuiteConfig, default_suite

    if path is None:
        return default_suite(), {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("bench config must be a JSON object")
    suite = SuiteConfig.from_json(data["suite"]) if "suite" in data else default_suite()
    plan = dict(data.get("plan", {}))
    unknown = set(plan) - set(RunPlan.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown plan fields {sorted(unknown)}")
    return suite, plan


def cmd_bench(args) -> list[Path]:
    from .bench.pipeline import RunPlan, run_full_pipeline

    suite, plan_fields = _stage("config", _load_bench_config, args.config)
    plan_fields.update({"seed": args.seed, "mode": args.mode})
    if args.r_large is not None:
        plan_fields["r_large"] = args.r_large
    if args.r_mini is not None:
        plan_fields["r_mini"] = args.r_mini
    plan = _stage("config", RunPlan, **plan_fields)
    report = _stage("pipeline", run_full_pipeline, suite, plan, args.alpha, args.temperature,
                    workers=args.workers)
    payload = report.to_json()
    payload["schema_version"] = SCHEMA_VERSION
    text = report.summary()
    print(text, end="")
    return _write(output_dir(args), "bench", payload, text)


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mode", choices=[m.value for m in MeasurementMode], default="standard")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="taskbal", description="Task balancing for multi-task instruction tuning.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", parents=[common], help="list preparation runs and their cost")
    sp.add_argument("--graph", type=_existing, required=True)
    sp.add_argument("--r-large", type=float, default=1.0)
    sp.add_argument("--r-mini", type=float, default=0.0625)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("weights", parents=[common], help="contribution, difficulty and task weights")
    sp.add_argument("--graph", type=_existing)
    sp.add_argument("--matrix", type=_existing)
    sp.add_argument("--strategies", type=_existing,
                    help="precomputed strategy rows (JSON with units/out/in/diff); skips measurement")
    sp.add_argument("--temperature", type=_temperature, default="auto")
    sp.add_argument("--alpha", type=_alpha, default=AlphaCoefficients())
    sp.set_defaults(func=cmd_weights)

    sp = sub.add_parser("metrics", parents=[common], help="overall improvement against a baseline")
    sp.add_argument("--graph", type=_existing, required=True)
    sp.add_argument("--results", type=_existing, required=True)
    sp.add_argument("--baseline", default=None, help="baseline method (default: STL, or EW with --zero-shot)")
    sp.add_argument("--zero-shot", action="store_true")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("bench", parents=[common], help="run the synthetic end-to-end pipeline")
    sp.add_argument("--config", type=_existing, help="JSON with optional 'suite' and 'plan' objects")
    sp.add_argument("--temperature", type=_temperature, default="auto")
    sp.add_argument("--alpha", type=_alpha, default=AlphaCoefficients())
    sp.add_argument("--r-large", type=float)
    sp.add_argument("--r-mini", type=float)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "metrics" and args.baseline is None:
        args.baseline = "EW" if args.zero_shot else "STL"
    try:
        written = args.func(args)
    except CliError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [write]: {exc}", file=sys.stderr)
        return 1
    for path in written:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
