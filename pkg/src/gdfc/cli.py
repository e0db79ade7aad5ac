"""Command-line entry point: ``gdfc bench run|sweep|report|gradcheck``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from . import bench
from .data import fit_normalizer, apply_normalizer, load_dataset, prepare_datasets
from .gradcheck import run_gradcheck
from .trainer import TrainConfig

# TrainConfig fields exposed as flags; seed has its own flag shared by every verb
_SKIP = {"seed", "hidden_sizes", "divergence_abort", "keep_best"}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model config (unset flags keep the method defaults)")
    for f in fields(TrainConfig):
        if f.name in _SKIP:
            continue
        kind = {"int": int, "float": float, "str": str}.get(f.type if isinstance(f.type, str) else f.type.__name__, str)
        g.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None)
    g.add_argument("--hidden-sizes", type=lambda s: [int(v) for v in s.split(",")], default=None,
                   help="comma separated hidden layer widths; fnn uses the first")
    g.add_argument("--no-divergence-abort", dest="divergence_abort", action="store_false", default=None)
    g.add_argument("--keep-best", action="store_true", default=None)
    g.add_argument("--k", type=int, default=None, help="neighbours for knn")


def _config_overrides(args) -> dict:
    out = {}
    for f in fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "seed":
            out[f.name] = v
    if args.method == "fnn" and "hidden_sizes" in out:
        out["hidden"] = out.pop("hidden_sizes")[0]
    if args.k is not None:
        out["k"] = args.k
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", default=None, help="dataset directory (default $GDFC_DATA_DIR or ./datasets)")
    p.add_argument("--results-dir", default=None, help="results store (default $GDFC_RESULTS_DIR or ./results)")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)


def _row_line(row: bench.ResultRow) -> str:
    if not row.ok:
        return f"{row.dataset} {row.method} {row.config_hash} FAILED {row.error}"
    return (f"{row.dataset} {row.method} {row.config_hash} GA={row.mean_ga:.2f} "
            f"AvgFM={row.mean_avg_fm:.2f} time={row.wall_time:.1f}s")


def cmd_run(args) -> int:
    data = load_dataset(args.dataset, args.data_dir)
    cfg = bench.default_config(args.method, data.n_classes, **_config_overrides(args))
    store = bench.ResultStore(args.results_dir)
    row = bench.run_experiment(args.dataset, args.method, cfg, args.seed, data=data, store=store,
                               n_folds=args.folds, force=args.force, jobs=args.jobs)
    print(_row_line(row))
    return 0 if row.ok else 1


def cmd_sweep(args) -> int:
    grid = {}
    for item in args.grid:
        key, _, values = item.partition("=")
        if not values:
            raise SystemExit(f"bad --grid entry {item!r}; expected key=v1,v2,...")
        grid[key.strip()] = [_parse_value(v) for v in values.split(",")]
    if not grid:
        raise SystemExit("at least one --grid axis is required")
    data = load_dataset(args.dataset, args.data_dir)
    base = _config_overrides(args)
    if args.method == "gdfc":
        base = {"partition_dim": 2 * data.n_classes, "num_centroids": 2 * data.n_classes, **base}
    spec = bench.SweepSpec(args.dataset, args.method, grid, args.budget, args.seed, base, args.inner_folds, args.folds)
    row, grid_log = bench.run_sweep(spec, data=data, store=bench.ResultStore(args.results_dir), force=args.force,
                                    jobs=args.jobs)
    for entry in grid_log:
        score = "failed" if entry["inner_ga"] is None else f"{entry['inner_ga']:.2f}"
        print(f"  inner GA {score}  {json.dumps(entry['config'], sort_keys=True)}")
    print(_row_line(row))
    return 0 if row.ok else 1


def cmd_report(args) -> int:
    store = bench.ResultStore(args.results_dir)
    rows = store.rows()
    if not rows:
        print(f"no results in {store.root}", file=sys.stderr)
        return 1
    files = bench.emit_report(rows, args.out or store.root, cited=not args.no_cited)
    sys.stdout.write(files["report.txt"])
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(n_shapes=args.shapes, seed=args.seed)
    failed = [r for r in results if not r.passed]
    for r in results:
        if args.verbose or not r.passed:
            print(f"{'ok  ' if r.passed else 'FAIL'} sizes={r.layer_sizes} xi={r.xi} lam={r.lam} "
                  f"max_rel_err={r.max_rel_err:.2e}")
    print(f"gradcheck: {len(results) - len(failed)}/{len(results)} cases passed")
    return 1 if failed else 0


def cmd_prepare(args) -> int:
    for key, status in prepare_datasets(args.data_dir).items():
        print(f"{key:10s} {status}")
    return 0


def cmd_train(args) -> int:
    from .persist import save_model

    data = load_dataset(args.dataset, args.data_dir)
    data = apply_normalizer(data, fit_normalizer(data, "minmax"))
    cfg = bench.default_config(args.method, data.n_classes, **_config_overrides(args))
    if hasattr(cfg, "seed"):
        cfg = cfg.__class__.from_dict({**cfg.to_dict(), "seed": args.seed})
    model = bench.METHODS[args.method][1](data, cfg)
    save_model(model, args.out)
    acc = 100.0 * float((model.predict(data.features) == data.labels).mean())
    print(f"saved {args.method} model to {args.out} (training accuracy {acc:.2f}%)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdfc")
    parser.add_argument("-v", "--verbose", action="store_true")
    top = parser.add_subparsers(dest="group", required=True)
    benchp = top.add_parser("bench", help="experiments, sweeps and reports")
    sub = benchp.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="ten-fold CV of one config")
    p.add_argument("dataset")
    p.add_argument("method", choices=sorted(bench.METHODS))
    p.add_argument("--force", action="store_true", help="rerun even if the config hash is stored")
    _add_common(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid search with inner-CV selection")
    p.add_argument("dataset")
    p.add_argument("method", choices=sorted(bench.METHODS))
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                   help="grid axis; values may be multiples of the class count such as 2N")
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--inner-folds", type=int, default=3)
    p.add_argument("--force", action="store_true")
    _add_common(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="GA and Avg.FM tables from the results store")
    p.add_argument("--results-dir", default=None)
    p.add_argument("--out", default=None, help="directory for the report files (default: results dir)")
    p.add_argument("--no-cited", action="store_true", help="omit reference columns")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    p.add_argument("--shapes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("prepare-data", help="materialize the bundled and generated datasets")
    p.add_argument("--data-dir", default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fit on a whole dataset and save the model as JSON")
    p.add_argument("dataset")
    p.add_argument("method", choices=sorted(bench.METHODS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (KeyError, FileNotFoundError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
