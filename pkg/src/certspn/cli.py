"""certspn command line.

Exit codes: 0 success, 1 usage error, 2 data or model error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from . import io
from .bench import run_benchmark, run_train_overhead, synthetic_table
from .dataset import DataError, load_csv, load_schema
from .learn import EXACT_REPLAY, INCREMENTAL, LearnConfig, train
from .spn import fmt_path, iter_nodes, log_likelihood, op_counts, validate
from .unlearn import UnlearnError, unlearn_batch
from .verify import VERIFY_CONFIG, check_revision, check_zero_cr

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_flags(p, seed_default=0):
    p.add_argument("--seed", type=int, default=seed_default, help="master seed")
    p.add_argument("--threshold", type=int, help="minimum rows before splitting (t)")
    p.add_argument("--k", type=int, help="clusters per data split")
    p.add_argument("--rdc-threshold", type=float, help="dependency threshold for variable splits")
    p.add_argument("--rdc-features", type=int, help="random features per variable")
    p.add_argument("--mode", choices=(INCREMENTAL, EXACT_REPLAY), help="leaf update mode on removal")


def _config(args, base: LearnConfig = LearnConfig()) -> LearnConfig:
    changes = {"master_seed": args.seed}
    for flag, name in (
        ("threshold", "threshold"),
        ("k", "k"),
        ("rdc_threshold", "rdc_threshold"),
        ("rdc_features", "rdc_features"),
        ("mode", "removal_mode"),
    ):
        v = getattr(args, flag, None)
        if v is not None:
            changes[name] = v
    try:
        return dataclasses.replace(base, **changes)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _data_flags(p, required=True):
    p.add_argument("--data", required=required, help="CSV file, one row per line")
    p.add_argument("--schema", required=required, help="schema JSON file")
    p.add_argument("--header", action="store_true", help="CSV starts with a header row")


def _load_data(args):
    return load_csv(args.data, load_schema(args.schema), header=args.header)


def _write_lines(path, records) -> None:
    io.atomic_write(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def _print_counts(spn) -> None:
    counts = op_counts(spn)
    nodes = sum(counts.values())
    print(f"nodes: {nodes}  " + "  ".join(f"{op}: {counts.get(op, 0)}" for op in ("CL", "NF", "SU", "SD", "SV")))


def cmd_train(args) -> int:
    config = _config(args)
    data = _load_data(args)
    t0 = time.perf_counter()
    spn = train(data, config)
    elapsed = time.perf_counter() - t0
    io.save(spn, args.out)
    print(f"trained on {data.n_rows} rows x {len(data.schema)} variables in {elapsed:.3f}s -> {args.out}")
    _print_counts(spn)
    return EXIT_OK


def _parse_rows(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"--rows must be integers, got {text!r}") from None


def cmd_unlearn(args) -> int:
    spn = io.load(args.model)
    rows = _parse_rows(args.rows)
    if not rows:
        print("warning: no rows given; model unchanged", file=sys.stderr)
    else:
        missing = [r for r in rows if not spn.dataset.has_row(r)]
        if missing:
            raise UnlearnError(f"rows not in the model's dataset: {', '.join(map(str, missing))}")
        t0 = time.perf_counter()
        outcome = unlearn_batch(spn, rows)
        elapsed = time.perf_counter() - t0
        print(f"removed {len(set(rows))} row(s) in {elapsed:.4f}s")
        if args.log:
            print(outcome.format_log())
    io.save(spn, args.out)
    _print_counts(spn)
    return EXIT_OK


def cmd_eval(args) -> int:
    spn = io.load(args.model)
    data = load_csv(args.data, spn.dataset.schema, header=args.header)
    ll = log_likelihood(spn, data.values)
    print(f"rows: {data.n_rows}  mean log-likelihood: {float(np.mean(ll)):.6f}")
    return EXIT_OK


def _bench_data(args):
    if args.synthetic:
        return synthetic_table(args.synthetic, seed=args.seed)
    if not (args.data and args.schema):
        raise UsageError("give --data and --schema, or --synthetic N")
    return _load_data(args)


def cmd_benchmark(args) -> int:
    data = _bench_data(args)
    config = _config(args)
    report = run_benchmark(data, config, args.sample, args.m, args.repeats, args.seed)
    print(report.table())
    if args.out:
        _write_lines(args.out, report.records())
    return EXIT_OK


def cmd_train_overhead(args) -> int:
    data = _bench_data(args)
    report = run_train_overhead(data, _config(args), args.repeats)
    print(report.table())
    if args.out:
        _write_lines(args.out, [{"record": "summary", "host": report.host, "config": report.config, **report.summary()}])
    return EXIT_OK


def cmd_verify_cr(args) -> int:
    config = _config(args, VERIFY_CONFIG)
    mode = args.mode or EXACT_REPLAY
    report = check_zero_cr(args.trials, config, mode, seed=args.seed, batch=args.batch, bundle_dir=args.bundles)
    print(f"mode: {mode}  trials: {report.trials}  passes: {report.passes}  failures: {len(report.failures)}")
    for op, n in sorted(report.ops.items()):
        print(f"  nodes {op}: {n}")
    for f in report.failures[:20]:
        print(f"  FAIL {f.family} data={f.fingerprint} seed={f.seed} rows={list(f.row_ids)}: {f.difference}")
    if args.out:
        _write_lines(args.out, [report.to_dict()])
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_verify_rev(args) -> int:
    config = _config(args, VERIFY_CONFIG)
    report = check_revision(config, seeds=args.seeds)
    print(f"datasets: {report.datasets}  checks: {report.checks}  mismatches: {len(report.mismatches)}")
    for (a, b), n in sorted(report.transitions.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        print(f"  {a.value} -> {b.value}: {n}")
    for a, b in report.missing_transitions:
        print(f"  NOT COVERED {a.value} -> {b.value}")
    for p in report.invalid[:20]:
        print(f"  INVALID {p}")
    for m in report.mismatches[:20]:
        print(f"  MISMATCH {m.family} seed={m.seed} row={m.row_id} at {m.path}: {m.old} predicted {m.predicted}, learner chose {m.actual} {m.detail}")
    if args.out:
        _write_lines(args.out, [report.to_dict()])
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_inspect(args) -> int:
    spn = io.load(args.model)
    print(f"rows: {spn.dataset.n_rows}  removed: {len(spn.dataset.removed)}  seed: {spn.config.master_seed}")
    _print_counts(spn)
    for node in iter_nodes(spn.root):
        st = node.state
        indent = "  " * len(st.path)
        extra = ""
        if node.child_counts:
            extra = f" counts={node.child_counts}"
        elif node.stats is not None:
            extra = f" stats={node.stats.to_dict() if hasattr(node.stats, 'counts') else node.stats.params()}"
        print(f"{indent}{fmt_path(st.path)} {node.kind} {st.op.value} scope={list(st.scope)} n={st.num_data}{extra}")
    problems = validate(spn)
    for p in problems:
        print(f"INVALID {p}")
    return EXIT_OK if not problems else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="certspn", description="Sum-product networks with exact row removal.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="learn a model from a CSV file")
    _data_flags(p)
    _config_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("unlearn", help="remove training rows from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--rows", required=True, help="row ids, comma or space separated")
    p.add_argument("--out", required=True)
    p.add_argument("--log", action="store_true", help="print the per-node action log")
    p.set_defaults(func=cmd_unlearn)

    p = sub.add_parser("eval", help="mean log-likelihood of a CSV under a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=cmd_eval)

    for name, func, help_ in (
        ("benchmark", cmd_benchmark, "time removals against retraining"),
        ("train-overhead", cmd_train_overhead, "time the state-recording learner against the stripped one"),
    ):
        p = sub.add_parser(name, help=help_)
        _data_flags(p, required=False)
        p.add_argument("--synthetic", type=int, metavar="N", help="use N rows of built-in synthetic data")
        _config_flags(p)
        p.add_argument("--repeats", type=int, default=10)
        if name == "benchmark":
            p.add_argument("--sample", type=int, default=1000, help="training sample size")
            p.add_argument("--m", type=int, default=100, help="removals per repeat")
        p.add_argument("--out", help="line-delimited JSON report")
        p.set_defaults(func=func)

    p = sub.add_parser("verify-cr", help="check removal against retraining on synthetic data")
    _config_flags(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--batch", type=int, default=1, help="rows removed per trial")
    p.add_argument("--bundles", help="directory for failure reproduction files")
    p.add_argument("--out", help="JSON report")
    p.set_defaults(func=cmd_verify_cr)

    p = sub.add_parser("verify-rev", help="check predicted against actual operations on small data")
    _config_flags(p)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--out", help="JSON report")
    p.set_defaults(func=cmd_verify_rev)

    p = sub.add_parser("inspect", help="print a model's tree")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"certspn: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, io.ModelFileError, UnlearnError, OSError) as e:
        print(f"certspn: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"certspn: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
