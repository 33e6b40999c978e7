"""Command line: train a checkpoint, generate prediction files.

    citetrainer train    --data masked.jsonl --config cfg.yaml --out model.pt
    citetrainer generate --checkpoint model.pt --data masked_test.jsonl \
                         --out preds.jsonl

Reads the masked-example JSONL format; writes the shared prediction-record
JSONL format, so the output plugs straight into the evaluation toolkit.
"""

from __future__ import annotations

import argparse
import sys

from .config import TrainConfig
from .data import read_examples
from .generation import generate
from .training import load_checkpoint, train


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_yaml(args.config) if args.config else TrainConfig()
    if args.epochs:
        cfg.epochs = args.epochs
    history = train(args.data, cfg, args.out, device=args.device)
    for epoch, loss in enumerate(history, 1):
        print(f"epoch {epoch}: loss {loss:.6f}")
    return 0


def _cmd_generate(args) -> int:
    model, vocab, cfg = load_checkpoint(args.checkpoint, device=args.device)
    if args.num_return:
        cfg.num_return = args.num_return
    examples = list(read_examples(args.data))
    n = generate(model, vocab, examples, cfg, args.out, device=args.device)
    print(f"wrote {n} prediction records to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="citetrainer", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="train a toy checkpoint on a masked dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="YAML mirroring TrainConfig")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--out", required=True)
    p.add_argument("--device", default="cpu")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("generate", help="grouped-beam generation to prediction records")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--num-return", dest="num_return", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--device", default="cpu")
    p.set_defaults(handler=_cmd_generate)

    args = parser.parse_args(argv)
    return args.handler(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
