"""Command-line front end.

Subcommands: synth-data, train, quantize, run, fixed-run, analyze, project,
bench.  Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .core import DivergenceError, TemplateSet, get_pattern, run
from .pso import PsoConfig, TrainingTask, accuracy_percent, objective

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("cennq")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(kind):
    def parse(text):
        return [kind(t) for t in text.split(",") if t.strip()]
    return parse


def _emit(rows, fmt, stream=None):
    stream = stream or sys.stdout
    if not rows:
        return
    if fmt == "json":
        json.dump(rows, stream, indent=2, default=_json_default)
        stream.write("\n")
    else:
        writer = csv.DictWriter(stream, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _write_rows(path: Path, rows, fmt):
    with open(path, "w", newline="") as fh:
        _emit(rows, fmt, fh)


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _load_task(args) -> TrainingTask:
    from .io import load_manifest

    if not args.manifest:
        raise UsageError("--manifest is required")
    path = Path(args.manifest)
    if not path.exists():
        raise DataError(f"manifest {path} does not exist")
    m = load_manifest(path)
    pattern = get_pattern(args.pattern) if getattr(args, "pattern", None) else m["pattern"]
    iters = getattr(args, "cenn_iterations", None) or m["iterations"]
    dt = getattr(args, "dt", None) or m["dt"]
    return TrainingTask(m["pairs"], pattern, iters, dt=dt,
                        init=getattr(args, "init", "input"), boundary=getattr(args, "boundary", "zero"))


def _pso_cfg(args, m=None) -> PsoConfig:
    return PsoConfig.for_range(args.m if m is None else m, iterations=args.pso_iterations,
                               swarm_size=args.swarm_size, seed=args.seed)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth_data(args):
    from .synth import write_dataset

    if args.size < 8:
        raise UsageError("--size must be at least 8")
    if args.count < 1:
        raise UsageError("--count must be positive")
    try:
        manifest = write_dataset(args.out, args.kind, args.size, args.count, args.noise_level,
                                 args.seed, args.cenn_iterations or 10, args.dt or 0.5)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    _emit([{"manifest": str(manifest), "pairs": args.count, "kind": args.kind}], args.format)


def cmd_train(args):
    from .io import save_template

    task = _load_task(args)
    out = _out_dir(args)
    t0 = time.perf_counter()
    from .experiment import train_template
    template, obj, history = train_template(task, _pso_cfg(args))
    save_template(out / "template.json", template)
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "best_objective"])
        w.writerows([i, h] for i, h in enumerate(history))
    _emit([{"objective": obj, "accuracy": accuracy_percent(obj, len(task.pairs)),
            "template": str(out / "template.json"), "wall_time": round(time.perf_counter() - t0, 3)}],
          args.format)


def cmd_quantize(args):
    from .experiment import sweep, train_template
    from .io import save_template

    task = _load_task(args)
    out = _out_dir(args)
    if args.template:
        template = _read_template(args.template)
        if template.pattern is None:
            template = TemplateSet(template.a, template.b, template.bias, template.dt, task.pattern)
        task = TrainingTask(task.pairs, template.pattern, task.iterations_per_eval, dt=template.dt,
                            init=task.init, boundary=task.boundary)
    else:
        template, _, _ = train_template(task, _pso_cfg(args))
        save_template(out / "template_float.json", template)

    for s in args.strategies:
        if s not in ("RAN", "PI", "WPI", "NN", "WNN"):
            raise UsageError(f"unknown strategy {s!r}")
    for b in args.batches:
        if b not in ("C", "L"):
            raise UsageError(f"unknown batch mode {b!r}")

    (out / "templates").mkdir(exist_ok=True)
    (out / "rounds").mkdir(exist_ok=True)
    report_csv = out / "report.csv"
    fields = ["strategy", "batch", "m", "objective", "accuracy", "rounds", "closed", "wall_time", "round_log"]
    fh = open(report_csv, "w", newline="")
    writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    fh.flush()
    records = []

    def on_row(row):
        tag = f"{row.label}_m{row.m}"
        save_template(out / "templates" / f"{tag}.json", row.template, shift_form=True)
        log_path = out / "rounds" / f"{tag}.csv"
        with open(log_path, "w", newline="") as lf:
            w = csv.writer(lf, lineterminator="\n")
            w.writerow(["round", "objective"])
            w.writerows(enumerate(row.round_objectives))
        rec = row.record()
        rec["round_log"] = str(log_path.relative_to(out))
        writer.writerow(rec)
        fh.flush()
        records.append(rec)
        log.info("%s m=%d objective=%.6f accuracy=%.2f%%", row.label, row.m, row.objective, row.accuracy)

    try:
        sweep(template, task, args.strategies, args.batches, args.m_values, args.pso_iterations,
              args.seed, args.swarm_size, on_row)
    finally:
        fh.close()
    report = {"environment": {"seed": args.seed, "version": __version__, "backend": backend_name()},
              "rows": records}
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    _emit(records, args.format)


def _read_template(path) -> TemplateSet:
    from .io import load_template

    p = Path(path)
    if not p.exists():
        raise DataError(f"template {p} does not exist")
    try:
        return load_template(p)
    except (KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot parse template {p}: {exc}") from exc


def _pairs_for_run(args):
    from .io import load_grid, load_manifest

    if args.manifest:
        return load_manifest(args.manifest)["pairs"]
    if not args.input:
        raise UsageError("give --manifest or --input")
    u = load_grid(args.input)
    y = load_grid(args.ideal) if args.ideal else None
    return [(u, y)]


def cmd_run(args):
    from .io import save_grid

    template = _read_template(args.template)
    pairs = _pairs_for_run(args)
    out = _out_dir(args)
    rows = []
    for n, (u, ideal) in enumerate(pairs):
        y = run(u, template, args.cenn_iterations or 10, args.init, args.boundary)
        save_grid(out / f"output_{n:03d}.pgm", y)
        row = {"pair": n, "objective": None, "accuracy": None}
        if ideal is not None:
            obj = objective(y, ideal)
            row.update(objective=obj, accuracy=accuracy_percent(obj))
        rows.append(row)
    _emit(rows, args.format)


def cmd_fixed_run(args):
    from .hwsim import build_stage_schedule, cycles_per_pixel, fixed_run
    from .io import save_grid

    template = _read_template(args.template)
    try:
        template.check_hardware()
        plan_a, plan_b = build_stage_schedule(template.a, template.b, args.shifters,
                                              args.sparsity, args.repetition)
    except ValueError as exc:
        raise DataError(f"template is not hardware-ready: {exc}") from exc
    pairs = _pairs_for_run(args)
    out = _out_dir(args)
    iters = args.cenn_iterations or 10
    rows = []
    for n, (u, ideal) in enumerate(pairs):
        res = fixed_run(u, template, iters, args.frac_bits, args.init, args.boundary)
        ref = run(u, template, iters, args.init, args.boundary)
        save_grid(out / f"fixed_output_{n:03d}.pgm", res.output)
        row = {"pair": n, "objective": None, "accuracy": None,
               "max_divergence_from_float": float(np.max(np.abs(res.output - ref))),
               "saturations": res.saturations}
        if ideal is not None:
            obj = objective(res.output, ideal)
            row.update(objective=obj, accuracy=accuracy_percent(obj))
        rows.append(row)
    cpp = cycles_per_pixel(plan_a, plan_b, args.overhead)
    (out / "schedule.txt").write_text(
        f"template A\n{plan_a.to_text()}\ntemplate B\n{plan_b.to_text()}\ncycles_per_pixel={cpp}\n")
    (out / "schedule.json").write_text(json.dumps(
        {"a": plan_a.to_dict(), "b": plan_b.to_dict(), "cycles_per_pixel": cpp}, indent=2) + "\n")
    for r in rows:
        r["cycles_per_pixel"] = cpp
    _emit(rows, args.format)


def cmd_analyze(args):
    from .hwsim import analyze_template
    from .quantizer import QuantSet, quantize_array

    if args.corpus:
        p = Path(args.corpus)
        if not p.exists():
            raise DataError(f"corpus {p} does not exist")
        doc = json.loads(p.read_text())
    else:
        with resources.files("cennq").joinpath("data/templates.json").open() as fh:
            doc = json.load(fh)
    entries = doc["templates"] if isinstance(doc, dict) else doc
    rows = []
    for e in entries:
        for which in ("a", "b"):
            t = np.asarray(e[which], dtype=float)
            if args.quantize_m is not None:
                t = quantize_array(t, QuantSet.symmetric(args.quantize_m))
            st = analyze_template(t)
            nz = t[t != 0]
            _, counts = np.unique(nz, return_counts=True) if nz.size else (None, np.array([], int))
            repeated = int(counts[counts > 1].sum()) if counts.size else 0
            rows.append({"template": e.get("name", ""), "which": which.upper(), "zero_count": st.zero_count,
                         "nonzero_count": st.nonzero_count, "distinct_nonzero": st.distinct_nonzero_count,
                         "max_repetition": st.max_repetition, "repeated_params": repeated})
    _emit(rows, args.format)
    if args.out:
        out = _out_dir(args)
        _write_rows(out / f"analysis.{args.format}", rows, args.format)
        hist = [{"count": k,
                 "templates_with_nonzero_count": sum(r["nonzero_count"] == k for r in rows),
                 "templates_with_repeated_params": sum(r["repeated_params"] == k for r in rows)}
                for k in range(10)]
        _write_rows(out / f"histogram.{args.format}", hist, args.format)


def cmd_project(args):
    from .hwproject import device_projection_rows, reference_configuration_rows

    baselines = None
    if args.baselines:
        p = Path(args.baselines)
        if not p.exists():
            raise DataError(f"baselines file {p} does not exist")
        baselines = {k: int(v) for k, v in json.loads(p.read_text()).items()}
    rows = reference_configuration_rows(args.m, args.overhead)
    dev_rows = device_projection_rows(args.m, baselines)
    _emit(rows, args.format)
    sys.stdout.write("\n")
    _emit(dev_rows, args.format)
    if args.out:
        out = _out_dir(args)
        _write_rows(out / f"project_xc4lx25.{args.format}", rows, args.format)
        _write_rows(out / f"project_devices.{args.format}", dev_rows, args.format)


def cmd_bench(args):
    from .bench import run_benchmark

    rows = run_benchmark(args.sizes, args.cenn_iterations or 20, args.repeats, args.seed)
    _emit(rows, args.format)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON file whose keys provide option defaults")
    common.add_argument("--out", default="cennq_out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    cenn = _Parser(add_help=False)
    cenn.add_argument("--cenn-iterations", type=int, help="Euler iterations per evaluation")
    cenn.add_argument("--dt", type=float, help="Euler step")
    cenn.add_argument("--init", choices=("input", "zero"), default="input")
    cenn.add_argument("--boundary", choices=("zero", "replicate"), default="zero")

    pso = _Parser(add_help=False)
    pso.add_argument("--manifest")
    pso.add_argument("--pattern")
    pso.add_argument("--pso-iterations", type=int, default=500)
    pso.add_argument("--swarm-size", type=int, default=10)
    pso.add_argument("--m", type=int, default=2, help="search box is [-2^m, 2^m]")

    runp = _Parser(add_help=False)
    runp.add_argument("--template", required=True)
    runp.add_argument("--manifest")
    runp.add_argument("--input")
    runp.add_argument("--ideal")

    parser = _Parser(prog="cennq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cennq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-data", parents=[common, cenn], help="generate synthetic image pairs")
    p.add_argument("--kind", choices=("noise", "edge", "detect"), default="noise")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--count", type=int, default=2)
    p.add_argument("--noise-level", type=float, default=0.1)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", parents=[common, cenn, pso], help="learn a template by PSO")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("quantize", parents=[common, cenn, pso], help="incremental quantization sweep")
    p.add_argument("--template", help="floating template; trained from the manifest if omitted")
    p.add_argument("--strategies", type=_csv_list(str), default=["RAN", "PI", "WPI", "NN", "WNN"])
    p.add_argument("--batches", type=_csv_list(str), default=["C", "L"])
    p.add_argument("--m-values", type=_csv_list(int), default=[0, 1, 2, 3, 4])
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("run", parents=[common, cenn, runp], help="process images with a template")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fixed-run", parents=[common, cenn, runp], help="bit-exact shift datapath run")
    p.add_argument("--frac-bits", type=int, default=12)
    p.add_argument("--shifters", type=int, choices=(1, 3, 9), default=1)
    p.add_argument("--sparsity", action="store_true")
    p.add_argument("--repetition", action="store_true")
    p.add_argument("--overhead", type=int, default=2)
    p.set_defaults(func=cmd_fixed_run)

    p = sub.add_parser("analyze", parents=[common], help="sparsity/repetition statistics of templates")
    p.add_argument("--corpus", help="JSON list of {name, a, b} templates")
    p.add_argument("--quantize-m", type=int, help="quantize with k=-m before counting")
    p.set_defaults(func=cmd_analyze, out=None)

    p = sub.add_parser("project", parents=[common], help="FPGA stage/speedup projection")
    p.add_argument("--m", type=int, default=5, help="shifter range S1(m)")
    p.add_argument("--overhead", type=int, default=2)
    p.add_argument("--baselines", help="JSON {device: baseline stage count}")
    p.set_defaults(func=cmd_project, out=None)

    p = sub.add_parser("bench", parents=[common, cenn], help="numba vs numpy kernel timings")
    p.add_argument("--sizes", type=_csv_list(int), default=[32, 128, 256])
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def _config_defaults(argv) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    path = Path(known.config)
    if not path.exists():
        raise DataError(f"config file {path} does not exist")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"cannot parse config {path}: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _config_defaults(argv)
        if defaults:
            for action in parser._subparsers._group_actions:
                for sp in action.choices.values():
                    known = {a.dest for a in sp._actions}
                    sp.set_defaults(**{k: v for k, v in defaults.items() if k in known})
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"cennq: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"cennq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError, KeyError) as exc:
        print(f"cennq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
