"""Command line entry point: gen, label, ingest, solve, train, eval, bench."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .bench import (
    HEURISTICS,
    MissingModelError,
    UnknownHeuristicError,
    UnknownMethodError,
    evaluate,
    make_heuristic,
    parse_method,
    run_bench,
    write_bench_csv,
)
from .bipartite import hungarian_ged, vj_ged
from .data import generate_synthetic, ingest_graph_dicts, label_manifest, load_manifest, save_manifest, split_dataset
from .errors import BudgetExceeded, GraphError, InfeasibleError
from .genn import FeatureConfig, GennModel
from .graph import VARIANTS, EditCostModel, load_graph
from .search import SearchLimits, astar_solve, beam_solve
from .training import TrainConfig, finetune_with_paths, regression_samples, train_regression

log = logging.getLogger("gedforge")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNKNOWN_METHOD = 3
EXIT_UNKNOWN_HEURISTIC = 4
EXIT_MISSING_MODEL = 5
EXIT_BAD_INPUT = 6
EXIT_BUDGET = 7
EXIT_INFEASIBLE = 8
EXIT_IO = 9

SOLVE_METHODS = ("astar", "beam", "hungarian", "vj")
DEFAULT_EVAL_METHODS = "genn-regression,astar-genn,astar-hungarian,hungarian,vj"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _cost(arg) -> EditCostModel:
    if arg is None:
        return EditCostModel.uniform_label()
    if arg in VARIANTS:
        return EditCostModel(arg)
    try:
        return EditCostModel.from_dict(json.loads(Path(arg).read_text()))
    except json.JSONDecodeError as exc:
        raise CliError(f"{arg}: malformed JSON: {exc}", EXIT_BAD_INPUT)
    except ValueError as exc:
        raise CliError(f"{arg}: {exc}", EXIT_BAD_INPUT)


def _model(path, required: bool):
    if path is None:
        if required:
            raise CliError("a model checkpoint (--model) is required", EXIT_MISSING_MODEL)
        return None
    if not Path(path).is_file():
        raise CliError(f"model checkpoint {path} not found", EXIT_MISSING_MODEL)
    try:
        return GennModel.load(path)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(f"{path}: unreadable model checkpoint: {exc}", EXIT_BAD_INPUT)


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ----------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    cost = _cost(args.cost)
    graphs = generate_synthetic(args.n, args.min_nodes, args.max_nodes, args.edge_prob, args.labels or None, args.seed)
    manifest = split_dataset(graphs, args.seed, cost)
    if args.label:
        label_manifest(manifest, args.max_states)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(manifest, out / "manifest.json")
    _print_json({"graphs": len(graphs), "pairs": len(manifest.pairs), "manifest": str(out / "manifest.json")})
    return EXIT_OK


def cmd_label(args) -> int:
    manifest = load_manifest(args.manifest)
    label_manifest(manifest, args.max_states, tuple(args.splits.split(",")))
    save_manifest(manifest, args.out or args.manifest)
    unlabeled = sum(p.ged is None for p in manifest.pairs)
    _print_json({"pairs": len(manifest.pairs), "unlabeled": unlabeled})
    return EXIT_OK


def cmd_ingest(args) -> int:
    records = []
    for f in args.inputs:
        text = Path(f).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            try:
                data = [json.loads(line) for line in text.splitlines() if line.strip()]
            except json.JSONDecodeError as exc:
                raise CliError(f"{f}: malformed JSON: {exc}", EXIT_BAD_INPUT)
        records.extend(data if isinstance(data, list) else [data])
    graphs = ingest_graph_dicts(records, args.edge_norm)
    manifest = split_dataset(graphs, args.seed, _cost(args.cost))
    manifest.edge_norm = args.edge_norm
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(manifest, out / "manifest.json")
    _print_json({"graphs": len(graphs), "pairs": len(manifest.pairs)})
    return EXIT_OK


def cmd_solve(args) -> int:
    if args.method not in SOLVE_METHODS:
        raise UnknownMethodError(f"unknown method {args.method!r}")
    searches = args.method in ("astar", "beam")
    if searches and args.heuristic not in HEURISTICS:
        raise UnknownHeuristicError(f"unknown heuristic {args.heuristic!r}")
    if args.method == "beam":
        spec = parse_method(f"beam{args.beam_width}-{args.heuristic}")
    else:
        spec = parse_method(f"astar-{args.heuristic}" if searches else args.method)
    cost = _cost(args.cost)
    model = _model(args.model, spec.needs_model)
    g1 = load_graph(args.g1, args.edge_norm)
    g2 = load_graph(args.g2, args.edge_norm)

    if spec.kind in ("hungarian", "vj"):
        t0 = time.perf_counter()
        res = (hungarian_ged if spec.kind == "hungarian" else vj_ged)(g1, g2, cost)
        dt = time.perf_counter() - t0
        out = {"ged": res.ged_upper, "path": res.path.to_json(), "tree_size": None, "time_s": dt, "optimal": False}
    else:
        heuristic = make_heuristic(spec.heuristic, model)
        limits = SearchLimits(max_states=args.max_states)
        t0 = time.perf_counter()
        if spec.kind == "astar":
            res = astar_solve(g1, g2, cost, heuristic, limits)
        else:
            res = beam_solve(g1, g2, cost, heuristic, args.beam_width, limits)
        dt = time.perf_counter() - t0
        out = {
            "ged": res.ged,
            "path": res.path.to_json(),
            "tree_size": res.stats.states_enqueued,
            "time_s": dt,
            "optimal": res.stats.optimal_found,
        }
    _print_json(out)
    return EXIT_OK


def _split_samples(manifest, rng):
    train = regression_samples(manifest.labeled("train"))
    val = regression_samples(manifest.labeled("val"))
    if not val and len(train) > 4:
        idx = rng.permutation(len(train))
        cut = max(1, len(train) // 5)
        val = [train[i] for i in idx[:cut]]
        train = [train[i] for i in idx[cut:]]
    return train, val


def _write_curve(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["stage", "epoch", "train_mse", "val_mse"], lineterminator="\n")
        w.writeheader()
        w.writerows(curve)


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    overrides = {k: getattr(args, k) for k in ("max_epochs", "batch_size", "patience", "finetune_pair_count", "finetune_epochs") if getattr(args, k) is not None}
    config = TrainConfig(seed=args.seed, **overrides)
    rng = np.random.default_rng(args.seed)
    train, val = _split_samples(manifest, rng)
    if not train:
        raise CliError("manifest has no labeled training pairs (run `gedforge label` first)", EXIT_BAD_INPUT)
    if args.stage == "regression":
        init = _model(args.init, False)
        model = init or GennModel.init(FeatureConfig.for_graphs(manifest.graphs), args.seed)
        model, curve = train_regression(model, train, val, config)
    else:
        model = _model(args.init, True)
        pairs = manifest.labeled("train")
        model, curve = finetune_with_paths(model, pairs, manifest.cost, config, val, train)
    model.save(args.out)
    curve_path = args.curve or str(Path(args.out).with_suffix(".curve.csv"))
    _write_curve(curve, curve_path)
    # both stages keep the best validation epoch, so report that one
    vals = [r["val_mse"] for r in curve if np.isfinite(r["val_mse"])]
    _print_json({"model": args.out, "curve": curve_path, "epochs": len(curve), "best_val_mse": min(vals) if vals else None})
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    specs = [parse_method(m) for m in args.methods.split(",") if m]
    model = _model(args.model, any(s.needs_model for s in specs))
    report = evaluate(manifest, [s.name for s in specs], model, args.split, 10, args.max_states)
    out = Path(args.out or Path(args.manifest).parent)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / "eval_report.csv", out / "eval_report.json")
    print(report.to_json())
    return EXIT_OK


def cmd_bench(args) -> int:
    manifest = load_manifest(args.manifest)
    methods = [m for m in args.methods.split(",") if m]
    specs = [parse_method(m) for m in methods]
    model = _model(args.model, any(s.needs_model for s in specs))
    pairs = [(manifest.graphs[p.i], manifest.graphs[p.j], p.ged) for p in manifest.pairs if p.split == args.split]
    if args.limit:
        pairs = pairs[: args.limit]
    rows = run_bench(pairs, methods, manifest.cost, model, args.max_states)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_bench_csv(rows, out / "bench.csv")
    _print_json({"rows": len(rows), "csv": str(out / "bench.csv")})
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gedforge", description="Graph edit distance solvers and a learned search heuristic.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", help="write a synthetic corpus and its split manifest")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--min-nodes", type=int, required=True)
    s.add_argument("--max-nodes", type=int, required=True)
    s.add_argument("--edge-prob", type=float, required=True)
    s.add_argument("--labels", type=int, default=0, help="label vocabulary size (0 = unlabeled)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--cost", help="cost model variant name or JSON file")
    s.add_argument("--label", action="store_true", help="also compute exact GED labels")
    s.add_argument("--max-states", type=int, default=2_000_000)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("label", help="compute exact GED labels for a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out")
    s.add_argument("--splits", default="train,val,test")
    s.add_argument("--max-states", type=int, default=2_000_000)
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("ingest", help="build a manifest from raw graph JSON files")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out", required=True)
    s.add_argument("--cost")
    s.add_argument("--edge-norm", type=float, default=1.0, help="divide edge weights by this once (300 for geometric data)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("solve", help="solve one pair")
    s.add_argument("--g1", required=True)
    s.add_argument("--g2", required=True)
    s.add_argument("--cost")
    s.add_argument("--method", default="astar", help="astar, beam, hungarian or vj")
    s.add_argument("--heuristic", default="hungarian", help="zero, hungarian or genn")
    s.add_argument("--model")
    s.add_argument("--beam-width", type=int, default=5)
    s.add_argument("--max-states", type=int, default=10_000_000)
    s.add_argument("--edge-norm", type=float, default=1.0)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("train", help="stage 1 regression or stage 2 finetuning")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--stage", choices=("regression", "finetune"), default="regression")
    s.add_argument("--init", help="starting checkpoint (required for finetune)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--curve", help="loss curve CSV (default: <out>.curve.csv)")
    s.add_argument("--max-epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--finetune-pair-count", type=int)
    s.add_argument("--finetune-epochs", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="write an EvalReport (CSV + JSON)")
    s.add_argument("--manifest", required=True)
    s.add_argument("--model")
    s.add_argument("--methods", default=DEFAULT_EVAL_METHODS)
    s.add_argument("--split", default="test")
    s.add_argument("--out")
    s.add_argument("--max-states", type=int, default=10_000_000)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="per-instance CSV over methods x pairs")
    s.add_argument("--manifest", required=True)
    s.add_argument("--methods", required=True, help="comma-separated, e.g. astar-zero,astar-hungarian,beam5-genn,vj")
    s.add_argument("--out", required=True)
    s.add_argument("--model")
    s.add_argument("--split", default="test")
    s.add_argument("--limit", type=int)
    s.add_argument("--max-states", type=int, default=10_000_000)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except UnknownMethodError as exc:
        code, msg = EXIT_UNKNOWN_METHOD, str(exc)
    except UnknownHeuristicError as exc:
        code, msg = EXIT_UNKNOWN_HEURISTIC, str(exc)
    except MissingModelError as exc:
        code, msg = EXIT_MISSING_MODEL, str(exc)
    except BudgetExceeded as exc:
        code, msg = EXIT_BUDGET, f"{exc} (best open bound {exc.bound})"
    except InfeasibleError as exc:
        code, msg = EXIT_INFEASIBLE, str(exc)
    except (GraphError, json.JSONDecodeError) as exc:
        code, msg = EXIT_BAD_INPUT, str(exc)
    except ValueError as exc:
        code, msg = EXIT_BAD_INPUT, str(exc)
    except OSError as exc:
        code, msg = EXIT_IO, str(exc)
    print(f"gedforge: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
