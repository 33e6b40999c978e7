"""Single command-line entry point for the whole pipeline.

    citeharness preprocess   raw records -> normalized contexts/papers/rejects
    citeharness split        deterministic train/test manifest
    citeharness build-masks  masked Base/Global/ablation inputs
    citeharness retrieve     BM25 baseline -> prediction records
    citeharness evaluate     R@k / EM / MRR report
    citeharness hallucinate  taxonomy breakdown at one or more k
    citeharness report       assemble tables from reports/breakdowns

Every subcommand writes its artifact plus a ``<artifact>.manifest.json``
recording the tool version, resolved configuration, and content hashes of
all inputs and outputs, so artifacts are reproducible byte-for-byte.
Exit codes: 1 usage, 2 I/O, 3 validation.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from . import bm25 as bm25_mod
from . import corpus as corpus_mod
from . import hallucination as hal_mod
from . import masking as mask_mod
from . import evaluation as eval_mod
from . import report as report_mod
from .jsonl import read_json, read_jsonl, write_json, write_jsonl


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(
    primary: str | Path,
    subcommand: str,
    config: dict[str, Any],
    inputs: Sequence[str | Path],
    outputs: Sequence[str | Path],
) -> None:
    manifest = {
        "tool": "citeharness",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    write_json(str(primary) + ".manifest.json", manifest)


def _load_config(path: str | None) -> dict[str, Any]:
    return read_json(path) if path else {}


def _pick(value: Any, cfg: dict[str, Any], key: str, default: Any = None) -> Any:
    if value is not None:
        return value
    return cfg.get(key, default)


def _load_gts(contexts_path: str) -> dict[str, Any]:
    return {
        c.context_id: c.ground_truth for c in corpus_mod.read_contexts(contexts_path)
    }


def _check_k(k: int) -> int:
    if not 1 <= k <= 100:
        raise ValueError(f"k must be in 1..100, got {k}")
    return k


# ---------------------------------------------------------------------------
# Subcommand handlers

def _cmd_preprocess(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    dataset = corpus_mod.Dataset.from_string(_pick(args.dataset, cfg, "dataset", "custom"))
    out_dir = Path(_pick(args.out_dir, cfg, "out_dir"))
    records = list(read_jsonl(args.records))
    if args.papers:
        records.extend(read_jsonl(args.papers))
    result = corpus_mod.ingest(records, dataset, mask_token=args.mask_token)
    contexts_path = out_dir / "contexts.jsonl"
    papers_path = out_dir / "papers.jsonl"
    rejects_path = out_dir / "rejects.jsonl"
    corpus_mod.write_contexts(contexts_path, result.contexts)
    corpus_mod.write_papers(papers_path, result.papers)
    corpus_mod.write_rejects(rejects_path, result.rejects)
    inputs = [args.records] + ([args.papers] if args.papers else [])
    _write_manifest(
        contexts_path,
        "preprocess",
        {"dataset": dataset.value, "mask_token": args.mask_token},
        inputs,
        [contexts_path, papers_path, rejects_path],
    )
    print(
        f"ingested={len(records)} kept={len(result.contexts)} "
        f"papers={len(result.papers)} rejected={len(result.rejects)}"
    )
    return 0


def _cmd_split(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    seed = int(_pick(args.seed, cfg, "seed", 42))
    ratio = _pick(args.ratio, cfg, "ratio", "4/5")
    val_ratio = _pick(args.val_ratio, cfg, "val_ratio", "0")
    ids = [c.context_id for c in corpus_mod.read_contexts(args.contexts)]
    manifest = corpus_mod.split(ids, seed=seed, ratio=Fraction(ratio), val_ratio=Fraction(val_ratio))
    corpus_mod.save_manifest(args.out, manifest)
    _write_manifest(
        args.out,
        "split",
        {"seed": seed, "ratio": str(manifest.ratio), "val_ratio": str(val_ratio)},
        [args.contexts],
        [args.out],
    )
    print(f"train={len(manifest.train_ids)} test={len(manifest.test_ids)} val={len(manifest.val_ids)}")
    return 0


def _scheme_config(args: argparse.Namespace, cfg: dict[str, Any], dataset) -> mask_mod.SchemeConfig:
    scheme = mask_mod.Scheme.from_string(_pick(args.scheme, cfg, "scheme", "base"))
    base = mask_mod.default_config(scheme, dataset)
    overrides = {
        "total_limit": _pick(args.total_limit, cfg, "total_limit", base.total_limit),
        "context_limit": _pick(args.context_limit, cfg, "context_limit", base.context_limit),
        "side_window": _pick(args.side_window, cfg, "side_window", base.side_window),
        "abstract_limit": _pick(args.abstract_limit, cfg, "abstract_limit", base.abstract_limit),
        "mask_token": _pick(args.mask_token, cfg, "mask_token", base.mask_token),
        "separator": _pick(args.separator, cfg, "separator", base.separator),
    }
    return mask_mod.SchemeConfig(
        scheme=scheme,
        total_limit=int(overrides["total_limit"]),
        context_limit=int(overrides["context_limit"]),
        side_window=int(overrides["side_window"]),
        abstract_limit=int(overrides["abstract_limit"]),
        mask_token=overrides["mask_token"],
        separator=overrides["separator"],
    )


def _cmd_build_masks(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    dataset = corpus_mod.Dataset.from_string(_pick(args.dataset, cfg, "dataset", "custom"))
    scheme_cfg = _scheme_config(args, cfg, dataset)
    contexts = list(corpus_mod.read_contexts(args.contexts))
    papers = list(corpus_mod.read_papers(args.papers)) if args.papers else []
    ids = None
    inputs = [args.contexts] + ([args.papers] if args.papers else [])
    if args.split:
        manifest = corpus_mod.load_manifest(args.split)
        part = args.part or "test"
        ids = {
            "train": manifest.train_ids,
            "test": manifest.test_ids,
            "val": manifest.val_ids,
        }[part]
        inputs.append(args.split)
    tok = (
        mask_mod.VocabTokenizer.from_file(args.vocab)
        if args.vocab
        else mask_mod.WhitespaceTokenizer()
    )
    if args.vocab:
        inputs.append(args.vocab)
    result = mask_mod.build_dataset(contexts, papers, scheme_cfg, tok, ids=ids)
    mask_mod.write_examples(args.out, result.examples)
    rejects_path = None
    if result.rejects:
        rejects_path = str(args.out) + ".rejects.jsonl"
        corpus_mod.write_rejects(rejects_path, result.rejects)
    _write_manifest(
        args.out,
        "build-masks",
        {"dataset": dataset.value, "scheme_config": scheme_cfg.to_dict(),
         "part": args.part, "counts": result.counts},
        inputs,
        [args.out] + ([rejects_path] if rejects_path else []),
    )
    print(" ".join(f"{k}={v}" for k, v in sorted(result.counts.items())))
    return 0


def _cmd_retrieve(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    k1 = float(_pick(args.k1, cfg, "k1", bm25_mod.DEFAULT_K1))
    b = float(_pick(args.b, cfg, "b", bm25_mod.DEFAULT_B))
    topk = _check_k(int(_pick(args.topk, cfg, "topk", 10)))
    examples = list(mask_mod.read_examples(args.masked))
    if args.scheme:
        scheme = mask_mod.Scheme.from_string(args.scheme)
        mismatched = [e.context_id for e in examples if e.scheme is not scheme]
        if mismatched:
            raise ValueError(
                f"{len(mismatched)} examples are not {scheme.value} scheme "
                f"(first: {mismatched[0]})"
            )
    contexts = list(corpus_mod.read_contexts(args.contexts))
    papers = list(corpus_mod.read_papers(args.papers))
    if args.doc_unit == "context":
        index = bm25_mod.build_context_index(contexts)
    else:
        pool = corpus_mod.build_pool(contexts, papers)
        index = bm25_mod.build_index(pool, papers)
    rankings = bm25_mod.batch_retrieve(
        examples, index, topk, k1=k1, b=b, mask_token=args.mask_token
    )
    write_jsonl(args.out, bm25_mod.rankings_to_records(rankings, index))
    _write_manifest(
        args.out,
        "retrieve",
        {"k1": k1, "b": b, "topk": topk, "scheme": args.scheme,
         "mask_token": args.mask_token, "candidates": index.N,
         "doc_unit": args.doc_unit},
        [args.masked, args.contexts, args.papers],
        [args.out],
    )
    print(f"queries={len(rankings)} candidates={index.N} topk={topk}")
    return 0


def _cmd_evaluate(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    k = _check_k(int(_pick(args.k, cfg, "k", 10)))
    gts = _load_gts(args.dataset)
    preds = list(eval_mod.read_predictions(args.preds))
    report = eval_mod.evaluate(preds, gts, k)
    doc: dict[str, Any] = {
        "kind": "ranking",
        "system": args.system,
        "dataset": args.dataset_name or "dataset",
    }
    doc.update(report.to_dict())
    if args.bootstrap:
        doc["bootstrap_ci"] = {
            name: list(interval)
            for name, interval in eval_mod.bootstrap_ci(
                report, resamples=args.bootstrap, seed=args.seed or 42
            ).items()
        }
    write_json(args.out, doc)
    _write_manifest(
        args.out,
        "evaluate",
        {"k": k, "system": args.system, "bootstrap": args.bootstrap},
        [args.preds, args.dataset],
        [args.out],
    )
    print(
        f"n={report.n} k={k} recall@k={float(report.recall_at_k):.4f} "
        f"em={float(report.exact_match):.4f} mrr={float(report.mrr):.4f}"
    )
    return 0


def _cmd_hallucinate(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    ks = [_check_k(int(k)) for k in (args.k or [3, 5, 10])]
    gts = _load_gts(args.dataset)
    contexts = list(corpus_mod.read_contexts(args.dataset))
    papers = list(corpus_mod.read_papers(args.papers)) if args.papers else []
    pool = corpus_mod.build_pool(contexts, papers)
    preds = list(eval_mod.read_predictions(args.preds))
    breakdowns = {}
    for k in ks:
        breakdowns[str(k)] = hal_mod.analyze(preds, gts, pool, k).to_dict()
    doc = {
        "kind": "hallucination",
        "system": args.system,
        "dataset": args.dataset_name or "dataset",
        "breakdowns": breakdowns,
    }
    write_json(args.out, doc)
    _write_manifest(
        args.out,
        "hallucinate",
        {"k": list(ks), "system": args.system},
        [args.preds, args.dataset] + ([args.papers] if args.papers else []),
        [args.out],
    )
    for k in ks:
        print(f"k={k} mahr={breakdowns[str(k)]['percent']['mahr']:.4f}%")
    return 0


def _cmd_report(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    inputs = [read_json(p) for p in args.inputs]
    text, machine = report_mod.build_report(inputs)
    out_text = Path(args.out)
    out_text.parent.mkdir(parents=True, exist_ok=True)
    out_text.write_text(text, encoding="utf-8")
    write_json(args.out_json or str(args.out) + ".json", machine)
    _write_manifest(
        args.out,
        "report",
        {"inputs": list(args.inputs)},
        list(args.inputs),
        [args.out, args.out_json or str(args.out) + ".json"],
    )
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# Parser wiring

def _build_parser() -> _Parser:
    parser = _Parser(prog="citeharness", description=__doc__)
    parser.add_argument("--version", action="version", version=f"citeharness {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    p = sub.add_parser("preprocess", parents=[], help="normalize raw records")
    p.add_argument("--records", required=True)
    p.add_argument("--papers")
    p.add_argument("--dataset")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--mask-token", dest="mask_token", default=corpus_mod.DEFAULT_MASK_TOKEN)
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_preprocess)

    p = sub.add_parser("split", help="deterministic train/test split")
    p.add_argument("--contexts", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio")
    p.add_argument("--val-ratio", dest="val_ratio")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_split)

    p = sub.add_parser("build-masks", help="masked model inputs under a scheme")
    p.add_argument("--contexts", required=True)
    p.add_argument("--papers")
    p.add_argument("--dataset")
    p.add_argument("--scheme")
    p.add_argument("--split")
    p.add_argument("--part", choices=["train", "test", "val"])
    p.add_argument("--total-limit", dest="total_limit", type=int)
    p.add_argument("--context-limit", dest="context_limit", type=int)
    p.add_argument("--side-window", dest="side_window", type=int)
    p.add_argument("--abstract-limit", dest="abstract_limit", type=int)
    p.add_argument("--mask-token", dest="mask_token")
    p.add_argument("--separator")
    p.add_argument("--vocab", help="vocabulary file for subword token counting")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_build_masks)

    p = sub.add_parser("retrieve", help="BM25 baseline over the citation pool")
    p.add_argument("--masked", required=True)
    p.add_argument("--contexts", required=True, help="normalized contexts (pool source)")
    p.add_argument("--papers", required=True)
    p.add_argument("--topk", type=int)
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--scheme", help="assert the masked file's scheme")
    p.add_argument("--mask-token", dest="mask_token", default=corpus_mod.DEFAULT_MASK_TOKEN)
    p.add_argument(
        "--doc-unit", dest="doc_unit", choices=["citation", "context"],
        default="citation", help="document unit: pool entries or training contexts",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_retrieve)

    p = sub.add_parser("evaluate", help="R@k / EM / MRR over a prediction file")
    p.add_argument("--preds", required=True)
    p.add_argument("--dataset", required=True, help="normalized contexts file with ground truths")
    p.add_argument("--k", type=int)
    p.add_argument("--system", default="system")
    p.add_argument("--dataset-name", dest="dataset_name")
    p.add_argument("--bootstrap", type=int, help="bootstrap resamples for CIs")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("hallucinate", help="hallucination taxonomy breakdown")
    p.add_argument("--preds", required=True)
    p.add_argument("--dataset", required=True, help="normalized contexts file (pool + truths)")
    p.add_argument("--papers")
    p.add_argument("--k", type=int, nargs="+")
    p.add_argument("--system", default="system")
    p.add_argument("--dataset-name", dest="dataset_name")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_hallucinate)

    p = sub.add_parser("report", help="tables from evaluation/hallucination JSONs")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-json", dest="out_json")
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "subcommand", None):
            raise UsageError(parser.format_usage())
        cfg = _load_config(getattr(args, "config", None))
        return args.handler(args, cfg)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"citeharness: i/o error: {exc}", file=sys.stderr)
        return 2
    except (
        ValueError,
        KeyError,
        corpus_mod.SchemaError,
        eval_mod.MissingGroundTruth,
        eval_mod.InconsistentK,
    ) as exc:
        print(f"citeharness: validation error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
