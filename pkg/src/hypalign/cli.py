"""Command-line entry point (``hypalign``).

Exit codes: 0 success, 2 validation or I/O error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import manifold, taxonomy
from .errors import ContractViolation, HypalignError, NonFiniteLossError, NumericError
from .features import SyntheticSpec, synthesize_dataset, write_jsonl
from .trainer import TrainConfig, dumps_report, run_experiment

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContractViolation(f"{path}:{exc.lineno}: {exc.msg}") from None


def read_annotations(path):
    """Label tuples from a JSON array of arrays or from JSON Lines.

    A JSON Lines record may be a bare array or an object with a ``labels``
    field (so feature-tree files double as annotation files).
    """
    with open(path) as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = None
    if isinstance(obj, list):
        return [tuple(a) for a in obj]
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ContractViolation(f"{path}:{lineno}: {exc.msg}") from None
        if isinstance(rec, dict):
            rec = rec.get("labels")
        if not isinstance(rec, list):
            raise ContractViolation(f"{path}:{lineno}: expected a label array")
        rows.append(tuple(rec))
    return rows


def cmd_solve_curvature(args):
    sol = manifold.solve_intermediate(args.c1, args.c2, args.r, tol=args.tol, c_min=args.c_min)
    _emit(sol.to_dict())


def cmd_make_synthetic(args):
    spec = SyntheticSpec.from_dict(_read_json(args.spec)) if args.spec else SyntheticSpec()
    write_jsonl(synthesize_dataset(spec), args.out)


def cmd_train(args):
    config = TrainConfig.load(args.config)
    try:
        report, _ = run_experiment(config, out_dir=args.out_dir)
    except NonFiniteLossError as exc:
        if exc.trace is not None:
            sys.stderr.write(json.dumps(exc.trace.to_dict(), sort_keys=True) + "\n")
        raise
    sys.stdout.write(dumps_report(report["run"]["metrics"]))


def cmd_eval(args):
    tax = taxonomy.load_taxonomy(args.taxonomy)
    preds = taxonomy.load_predictions(tax, args.predictions)
    _emit(taxonomy.metric_report(tax, preds, count=args.treecuts, seed=args.seed), args.out)


def cmd_taxonomy_build(args):
    tax = taxonomy.build_taxonomy(read_annotations(args.annotations))
    _emit(tax.to_json(), args.out)


def cmd_taxonomy_split(args):
    tax = taxonomy.load_taxonomy(args.taxonomy)
    base, novel = taxonomy.base_novel_split(tax, args.seed)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _emit(base.to_json(), os.path.join(args.out_dir, "base.json"))
        _emit(novel.to_json(), os.path.join(args.out_dir, "novel.json"))
    else:
        _emit({"base": base.to_json(), "novel": novel.to_json(), "seed": args.seed})


def build_parser():
    parser = argparse.ArgumentParser(prog="hypalign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-curvature", help="intermediate curvature and its implicit partials")
    p.add_argument("--c1", type=float, required=True)
    p.add_argument("--c2", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--c-min", type=float, default=manifold.C_MIN_DEFAULT)
    p.set_defaults(func=cmd_solve_curvature)

    p = sub.add_parser("make-synthetic", help="write a synthetic feature-tree JSON Lines file")
    p.add_argument("--spec", help="JSON file with SyntheticSpec fields (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("train", help="train, evaluate and write report.json + traces.jsonl")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="LA / HCA / MTA for a prediction file")
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--treecuts", type=int, default=taxonomy.DEFAULT_TREECUTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("taxonomy", help="taxonomy utilities")
    tsub = p.add_subparsers(dest="taxonomy_command", required=True)
    q = tsub.add_parser("build", help="build a taxonomy from per-sample label tuples")
    q.add_argument("--annotations", required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_taxonomy_build)
    q = tsub.add_parser("split", help="seeded base/novel leaf partition")
    q.add_argument("--taxonomy", required=True)
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--out-dir")
    q.set_defaults(func=cmd_taxonomy_split)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HypalignError, OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
