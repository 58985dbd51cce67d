"""Command line entry point: ``tnnr {train,sweep,gen-data,predict}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
import argparse
import json
import logging
import sys

import numpy as np

from . import data as data_mod
from .errors import TnnrError
from .harness import (
    DEFAULT_GRID, SweepSpec, emit_report, evaluate_split, prepare_repeat, run_sweep, train_config,
)
from .inference import predict_many, write_predictions
from .tnn import TnnModel, load_model, save_model
from .training import train

log = logging.getLogger("tnnr")


class UsageFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageFailure(f"{self.prog}: error: {message}")


def _grid(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lambda grid {text!r}") from None


def _dims(text):
    try:
        dims = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad layer widths {text!r}") from None
    if not dims:
        raise argparse.ArgumentTypeError("need at least one hidden layer")
    return dims


def _add_data_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", help="synthetic key (tf, rcl, wsb) or CSV path")
    src.add_argument("--csv", help="CSV file, target in the last column")
    p.add_argument("--target", help="target column name (default: last column)")
    p.add_argument("--n", type=int, default=None, help="rows for synthetic data")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--regime", default="t80", type=str.upper, choices=["T80", "T30"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loop-types", default=None, help="subset of BCD, e.g. 'BC'")
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--hidden", type=_dims, default=(192, 192), help="hidden widths, e.g. 192,192")


def build_parser():
    parser = _Parser(prog="tnnr", description="Twin neural network regression on loops")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train one model at one loop weight")
    _add_data_args(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--repeat", type=int, default=0, help="repeat index selecting the split")
    p.add_argument("--out", help="model file (.npz)")
    p.add_argument("--trace", help="per-epoch trace CSV")

    p = sub.add_parser("sweep", help="repeated splits over a lambda grid")
    _add_data_args(p)
    p.add_argument("--lambda-grid", type=_grid, default=DEFAULT_GRID)
    p.add_argument("--repeats", type=int, default=25)
    p.add_argument("--selection", choices=["mean", "per_repeat"], default="mean")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--cache-dir", help="reuse finished cells stored here (resumable sweeps)")

    p = sub.add_parser("gen-data", help="write a synthetic data set as CSV")
    p.add_argument("key", type=str.upper, choices=list(data_mod.SYNTHETIC))
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="ensemble predictions from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--csv", required=True, help="query rows (features, optional target last)")
    p.add_argument("--out", required=True)
    return parser


def _spec_from(args, **extra):
    return SweepSpec(
        dataset=args.dataset or args.csv,
        regime=args.regime,
        base_seed=args.seed,
        loop_types=args.loop_types,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        hidden_dims=args.hidden,
        n_rows=args.n,
        data_seed=args.data_seed,
        target=args.target,
        **extra,
    )


def cmd_train(args):
    spec = _spec_from(args, lambda_grid=(args.lam,), n_repeats=1)
    ds, split, norm, X, seed = prepare_repeat(spec, args.repeat)
    model = TnnModel.create(ds.n_features, spec.hidden_dims, seed=seed)
    model, trace = train(model, split, X, ds.labels, train_config(spec, args.lam, seed))
    rmse = evaluate_split(model, split, X, ds.labels, spec.roles)
    if args.out:
        L = split.labelled_train
        save_model(model, args.out, norm=norm, anchors=(X[L], ds.labels[L]))
    if args.trace:
        trace.to_csv(args.trace)
    print(json.dumps({"lambda": args.lam, "repeat": args.repeat, "epochs": len(trace),
                      "best_epoch": trace.best_epoch, "rmse": rmse}, sort_keys=True))
    return 0


def cmd_sweep(args):
    spec = _spec_from(args, lambda_grid=args.lambda_grid, n_repeats=args.repeats,
                      selection=args.selection, workers=args.workers, cache_dir=args.cache_dir,
                      partial_path=args.out + ".partial.json")

    def progress(cell, done, total):
        log.info("cell %d/%d lambda=%g repeat=%d test=%.5g", done, total, cell.lam,
                 cell.repeat, cell.rmse["test"])

    report = run_sweep(spec, progress=progress)
    emit_report(report, args.format, args.out)
    print(json.dumps({"selected_lambda": report.selected_lambda, **report.headline}, sort_keys=True))
    return 0


def cmd_gen_data(args):
    ds = data_mod.generate(args.key, args.n, args.seed)
    ds.to_csv(args.out)
    return 0


def cmd_predict(args):
    model, norm, anchors = load_model(args.model)
    if anchors is None:
        raise TnnrError(f"{args.model} carries no anchors; save it with anchors to predict")
    d = model.feature_dim
    raw = data_mod.load_csv(args.csv, target=-1)
    if raw.n_features == d:
        q = raw.features
    elif raw.n_features + 1 == d:
        q = np.column_stack([raw.features, raw.labels])
    else:
        raise TnnrError(f"{args.csv}: expected {d} feature columns")
    if norm is not None:
        q = data_mod.apply_normalizer(norm, q)
    means, stds = predict_many(model, q, *anchors)
    write_predictions(args.out, means, stds, len(anchors[1]))
    return 0


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "gen-data": cmd_gen_data, "predict": cmd_predict}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageFailure as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (TnnrError, ValueError, KeyError, OSError) as exc:
        print(f"tnnr {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
