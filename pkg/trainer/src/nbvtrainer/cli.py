"""Command-line entry points: train, evaluate, export-fixture."""

import argparse
import sys

from .data import VARIANT_CHANNELS


def cmd_train(args):
    from .train import TrainConfig, train
    config = TrainConfig(dataset_dir=args.dataset, variant=args.variant,
                         learning_rate=args.lr, momentum=args.momentum,
                         epochs=args.epochs, batch_size=args.batch_size,
                         seed=args.seed)
    summary = train(config, args.out)
    print(f"trained {args.variant}: checkpoint epoch "
          f"{summary['checkpoint_epoch']} of {summary['epochs_run']} run, "
          f"val_loss={summary['val_loss']:.6f} "
          f"val_acc={summary['val_acc']:.4f}")
    print(f"weights: {summary['weights']}")
    return 0


def cmd_evaluate(args):
    from .evaluate import evaluate
    metrics, _ = evaluate(args.weights, args.dataset, args.split, args.out)
    for key in ("accuracy", "recall_up", "recall_down", "recall_left",
                "recall_right", "precision", "recall", "f1"):
        print(f"{key}: {metrics[key]:.4f}")
    return 0


def cmd_export_fixture(args):
    from .fixture import export_fixture
    path = export_fixture(args.weights, args.out, seed=args.seed)
    print(f"fixture: {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nbvtrain",
        description="train direction classifiers and export their weights")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train a classifier on a dataset")
    sp.add_argument("--dataset", required=True, help="dataset directory")
    sp.add_argument("--variant", required=True,
                    choices=sorted(VARIANT_CHANNELS))
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="report metrics on a split")
    sp.add_argument("--weights", required=True, help="EXHW weight file")
    sp.add_argument("--dataset", required=True, help="dataset directory")
    sp.add_argument("--split", default="test",
                    help="split name from splits.json, or 'all'")
    sp.add_argument("--out", help="directory for metrics/confusion CSVs")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("export-fixture",
                        help="write a forward-pass fixture for the weights")
    sp.add_argument("--weights", required=True, help="EXHW weight file")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=0,
                    help="seed for the sampled input tensor")
    sp.set_defaults(func=cmd_export_fixture)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
