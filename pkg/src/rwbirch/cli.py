"""Command-line front end: ``rwbirch generate|walk|cluster|compare``.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation failure.
Flags may also come from a flat ``key = value`` file passed with
``--config``; keys are long flag names without the leading dashes and
explicit flags win.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .birch import BirchConfig, BirchError
from .dataset import (DatasetError, FeatureMatrix, SyntheticSpec, generate_synthetic, normalize,
                      paper_shape_specs, read_matrix, write_subset)
from .metrics import METRIC_NAMES
from .pipeline import Comparison, compare, run_baseline, run_improved
from .random_walk import WalkConfig, WalkError, extract_key_path
from .svg import line_svg, scatter_svg

class UsageError(Exception):
    pass


def _typed(kind, check, what):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} value: {text!r}") from None
        if not check(value):
            raise argparse.ArgumentTypeError(f"{text} is not {what}")
        return value
    return parse


pos_float = _typed(float, lambda v: v > 0 and np.isfinite(v), "a positive number")
nonneg_float = _typed(float, lambda v: v >= 0 and np.isfinite(v), "a non-negative number")
pos_int = _typed(int, lambda v: v >= 1, "a positive integer")
nonneg_int = _typed(int, lambda v: v >= 0, "a non-negative integer")
fraction = _typed(float, lambda v: 0 < v <= 1, "in (0, 1]")
seed_type = _typed(int, lambda v: 0 <= v < 2 ** 64, "an unsigned 64-bit integer")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=seed_type, default=0)
    p.add_argument("--config", type=Path, help="key = value file with flag defaults")


def _add_birch(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("BIRCH")
    g.add_argument("--threshold-t", type=pos_float, default=0.5)
    g.add_argument("--branching-b", type=_typed(int, lambda v: v >= 2, "an integer >= 2"), default=8)
    g.add_argument("--leaf-l", type=pos_int, default=8)
    g.add_argument("--min-points", type=pos_int, default=1)
    stop = g.add_mutually_exclusive_group()
    stop.add_argument("--clusters", type=pos_int, default=None, help="target cluster count (default 4)")
    stop.add_argument("--merge-distance", type=pos_float, default=None)


def _add_walk(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("random walk")
    g.add_argument("--lambda", dest="lambda_", type=pos_float, default=1.0)
    g.add_argument("--epsilon", type=pos_float, default=1e-4)
    g.add_argument("--tries", type=pos_int, default=100)
    g.add_argument("--walk-steps", type=pos_int, default=None)
    g.add_argument("--top-fraction", type=fraction, default=0.6)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwbirch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic labelled subsets")
    _add_common(g)
    g.add_argument("--clusters", type=pos_int, default=4)
    g.add_argument("--informative", type=pos_int, default=8)
    g.add_argument("--distractors", type=nonneg_int, default=0)
    g.add_argument("--points", type=pos_int, default=100, help="points per cluster")
    g.add_argument("--variance", type=float, default=0.35)
    g.add_argument("--outlier-fraction", type=float, default=0.0)
    g.add_argument("--id", default="synthetic", help="output file stem")
    g.add_argument("--paper-shape", action="store_true", help="write the 22 course-period subsets")
    g.add_argument("--scale", type=pos_float, default=1.0, help="row-count multiplier for --paper-shape")

    w = sub.add_parser("walk", help="extract the key path of a matrix CSV")
    w.add_argument("input", type=Path)
    _add_common(w)
    _add_walk(w)

    c = sub.add_parser("cluster", help="cluster one matrix CSV")
    c.add_argument("input", type=Path)
    _add_common(c)
    _add_birch(c)
    _add_walk(c)
    c.add_argument("--variant", choices=("baseline", "improved", "both"), default="improved")

    k = sub.add_parser("compare", help="baseline vs improved over a directory of matrix CSVs")
    k.add_argument("input", type=Path, nargs="?")
    _add_common(k)
    _add_birch(k)
    _add_walk(k)
    k.add_argument("--paper-shape", action="store_true", help="use generated course-period subsets")
    k.add_argument("--scale", type=pos_float, default=1.0)
    k.add_argument("--workers", type=pos_int, default=os.cpu_count() or 1)
    k.add_argument("--timings-inline", action="store_true",
                   help="also fill time_s in comparison.csv (makes it run-dependent)")
    return parser


BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
              "0": False, "false": False, "no": False, "off": False}


def read_config(path: Path) -> Dict[str, str]:
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return
    if not known.config.is_file():
        raise UsageError(f"config file {known.config} not found")
    values = read_config(known.config)
    if "lambda" in values:
        values["lambda_"] = values.pop("lambda")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if a in subparsers.choices), None)
    if command is None:
        return
    target = subparsers.choices[command]
    actions = {a.dest: a for a in target._actions}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in BOOL_WORDS:
                raise UsageError(f"config key {key!r}: expected a boolean, got {value!r}")
            defaults[key] = BOOL_WORDS[value.lower()]
        else:
            defaults[key] = value  # argparse runs string defaults through the flag's type
    # Config values land as defaults, so explicit flags still win.
    if "clusters" in defaults and "merge_distance" in defaults:
        raise UsageError("config sets both clusters and merge-distance")
    # A stopping rule given as a flag overrides the other rule from the file.
    if "--clusters" in argv:
        defaults.pop("merge_distance", None)
    if "--merge-distance" in argv:
        defaults.pop("clusters", None)
    target.set_defaults(**defaults)


def _validated(build):
    try:
        return build()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _birch_config(args) -> BirchConfig:
    def build():
        if args.merge_distance is None:
            target = args.clusters if args.clusters is not None else 4
            return BirchConfig(args.threshold_t, args.branching_b, args.leaf_l, args.min_points,
                               target_cluster_count=target)
        return BirchConfig(args.threshold_t, args.branching_b, args.leaf_l, args.min_points,
                           global_merge_distance=args.merge_distance)
    return _validated(build)


def _walk_config(args) -> WalkConfig:
    return _validated(lambda: WalkConfig(args.lambda_, args.epsilon, args.tries, args.seed, args.walk_steps))


def _read_input(path: Path) -> FeatureMatrix:
    return normalize(read_matrix(path))


def cmd_generate(args) -> int:
    if args.paper_shape:
        specs = paper_shape_specs(args.seed, args.clusters, args.scale)
    else:
        specs = [SyntheticSpec(args.clusters, args.informative, args.distractors, args.points,
                               args.variance, args.outlier_fraction, args.seed, subset=args.id)]
    for spec in specs:
        _validated(spec.validate)
    args.out.mkdir(parents=True, exist_ok=True)
    for spec in specs:
        m = normalize(generate_synthetic(spec))
        write_subset(m, args.out / f"{m.name}.csv")
        print(f"{m.name}: {m.n_rows} rows x {m.n_features} features")
    return 0


def cmd_walk(args) -> int:
    m = _read_input(args.input)
    path = extract_key_path(m, _walk_config(args), args.top_fraction)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"{args.input.stem}.keypath").write_text(path.to_text(), encoding="utf-8")
    print(" -> ".join(path.activities))
    return 0


def _plot(matrix: FeatureMatrix, labels: np.ndarray, title: str) -> str:
    x = matrix.rows[:, 0]
    y = matrix.rows[:, 1] if matrix.n_features > 1 else np.zeros(matrix.n_rows)
    ylabel = matrix.feature_names[1] if matrix.n_features > 1 else ""
    return scatter_svg(x, y, labels, title, matrix.feature_names[0], ylabel)


def cmd_cluster(args) -> int:
    m = _read_input(args.input)
    bcfg = _birch_config(args)
    variants = ("baseline", "improved") if args.variant == "both" else (args.variant,)
    args.out.mkdir(parents=True, exist_ok=True)
    stem = args.input.stem
    for v in variants:
        if v == "baseline":
            res, shown = run_baseline(m, bcfg), m
        else:
            res = run_improved(m, bcfg, _walk_config(args), args.top_fraction)
            shown = m.rows[:, [m.feature_names.index(a) for a in res.key_path.activities]]
            shown = FeatureMatrix(m.subset, res.key_path.activities, shown)
        labels = res.assignment.labels
        with open(args.out / f"{stem}.{v}.labels.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("row,label\n")
            fh.writelines(f"{i},{int(lab)}\n" for i, lab in enumerate(labels))
        report = res.model.report()
        if res.key_path is not None:
            report += f"key_path,{res.key_path.inline()}\n"
        if res.assignment.outlier_rows:
            report += f"outlier_rows,{len(res.assignment.outlier_rows)}\n"
        (args.out / f"{stem}.{v}.model.txt").write_text(report, encoding="utf-8")
        (args.out / f"{stem}.{v}.svg").write_text(
            _plot(shown, labels, f"{stem} {v}: {res.n_clusters} clusters"), encoding="utf-8")
        print(f"{stem} {v}: {res.n_clusters} clusters")
    return 0


def _write_compare(result: Comparison, out: Path, timings_inline: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(result.to_csv(include_times=timings_inline), encoding="utf-8")
    (out / "summary.csv").write_text(result.summary_csv(), encoding="utf-8")
    (out / "timings.csv").write_text(result.timings_csv(), encoding="utf-8")
    ok = [r for r in result.rows if r.ok and r.baseline.scores is not None]
    if ok:
        ids = [r.id for r in ok]
        for metric in METRIC_NAMES:
            series = {
                "BIRCH": [getattr(r.baseline.scores, metric) for r in ok],
                "BIRCH Improved": [getattr(r.improved.scores, metric) for r in ok],
            }
            (out / f"{metric}.svg").write_text(line_svg(ids, series, metric, metric), encoding="utf-8")


def cmd_compare(args) -> int:
    if args.paper_shape:
        matrices = []
        data_dir = args.out / "data"
        data_dir.mkdir(parents=True, exist_ok=True)
        for spec in paper_shape_specs(args.seed, args.clusters or 4, args.scale):
            m = normalize(generate_synthetic(spec))
            write_subset(m, data_dir / f"{m.name}.csv")
            matrices.append((m.name, m))
    else:
        if args.input is None or not args.input.is_dir():
            raise UsageError("compare needs an input directory of matrix CSVs or --paper-shape")
        files = sorted(args.input.glob("*.csv"))
        if not files:
            raise UsageError(f"no .csv files in {args.input}")
        matrices = [(f.stem, _read_input(f)) for f in files]

    result = compare(matrices, _birch_config(args), _walk_config(args), args.top_fraction,
                     workers=args.workers)
    _write_compare(result, args.out, args.timings_inline)
    for row in result.failed:
        print(f"{row.id}: FAILED {row.error}", file=sys.stderr)
    for metric, med, wins, total in result.summary():
        print(f"{metric}: improved wins {wins}/{total}, median delta {med:+.4f}")
    done = [r for r in result.rows if r.ok]
    if done:
        base = float(np.median([r.baseline.wall_time for r in done]))
        imp = float(np.median([r.improved.wall_time for r in done]))
        print(f"median time: baseline {base:.3f}s, improved {imp:.3f}s")
    return 1 if len(result.failed) == len(result.rows) else 0


COMMANDS = {"generate": cmd_generate, "walk": cmd_walk, "cluster": cmd_cluster, "compare": cmd_compare}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rwbirch: error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rwbirch: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, BirchError, WalkError, OSError) as exc:
        print(f"rwbirch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
