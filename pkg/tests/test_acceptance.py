"""Acceptance suite: one test per criterion, at its stated tolerance.

Two criteria depend on released artifacts (the real ACL-200 corpus and the
published generator's prediction files).  Neither can be redistributed
with this repository nor fetched in a sandboxed environment, so those
tests execute fully when the files are supplied locally and otherwise
skip with an explicit reason:

    CITEHARNESS_ACL200_DIR       dir with contexts.jsonl + papers.jsonl
                                 (normalized schema; optional split.json)
    CITEHARNESS_CITEBART_PREDS   prediction JSONL of the released model
"""

from __future__ import annotations

import os
import random
import time
from fractions import Fraction
from pathlib import Path

import pytest

from citeharness.bm25 import batch_retrieve, build_index, rankings_to_records
from citeharness.corpus import (
    Dataset,
    LocalContext,
    build_pool,
    ingest,
    read_contexts,
    read_papers,
    split,
    write_contexts,
    write_rejects,
)
from citeharness.evaluation import PredictionRecord, evaluate, read_predictions
from citeharness.grammar import normalize, parse
from citeharness.hallucination import analyze, classify
from citeharness.masking import Scheme, build, build_dataset, default_config

import synth
import test_evaluation as eval_oracle
import test_hallucination as hal_fixtures

ACL200_DIR = Path(os.environ.get("CITEHARNESS_ACL200_DIR", "data/acl200"))
CITEBART_PREDS = os.environ.get("CITEHARNESS_CITEBART_PREDS", "data/citebart_acl200_preds.jsonl")

WALL_CLOCK_LIMIT_S = 30 * 60


def _records_from_rows(rows: list[dict]) -> list[PredictionRecord]:
    return [PredictionRecord(r["context_id"], tuple(r["predictions"])) for r in rows]


def _run_bm25(contexts, papers, test_ids, k=10):
    """Full retrieval pipeline: pool -> index -> Base masks -> top-k -> report."""
    pool = build_pool(contexts, papers)
    index = build_index(pool, papers)
    cfg = default_config(Scheme.BASE, Dataset.ACL200)
    built = build_dataset(contexts, papers, cfg, ids=test_ids)
    rankings = batch_retrieve(built.examples, index, k)
    records = _records_from_rows(rankings_to_records(rankings, index))
    gts = {c.context_id: c.ground_truth for c in contexts}
    return evaluate(records, gts, k), index


def test_c1_bm25_acl200_reproduction():
    """BM25 on preprocessed ACL-200: R@10 within 0.05 of 0.194, MRR within 0.05 of 0.107."""
    start = time.monotonic()
    if not (ACL200_DIR / "contexts.jsonl").exists():
        # Stand-in at the real scale: wall clock and end-to-end retrieval
        # are still evidenced (contexts carry a topic signal, so a working
        # retriever must beat chance by a wide margin).
        contexts, papers = synth.make_contexts_and_papers(
            seed=1, n_contexts=63365, n_papers=5266, side_words=(40, 120),
            topic_signal=True,
        )
        manifest = split(contexts, seed=42, ratio=Fraction(4, 5))
        assert len(manifest.test_ids) == 12673
        report, index = _run_bm25(contexts, papers, set(manifest.test_ids))
        elapsed = time.monotonic() - start
        assert index.N == 5266
        assert report.n == 12673
        assert float(report.recall_at_k) > 0.9
        assert elapsed < WALL_CLOCK_LIMIT_S
        pytest.skip(
            "real ACL-200 corpus not redistributable/downloadable here; synthetic "
            f"stand-in at identical scale (12673 queries x 5266 docs) ran in "
            f"{elapsed:.0f}s with R@10={float(report.recall_at_k):.3f}"
        )
    contexts = list(read_contexts(ACL200_DIR / "contexts.jsonl"))
    papers = list(read_papers(ACL200_DIR / "papers.jsonl"))
    if (ACL200_DIR / "split.json").exists():
        from citeharness.corpus import load_manifest

        test_ids = set(load_manifest(ACL200_DIR / "split.json").test_ids)
    else:
        test_ids = set(split(contexts, seed=42, ratio=Fraction(4, 5)).test_ids)
    assert len(test_ids) == 12673, "expected the full preprocessed test split"
    report, index = _run_bm25(contexts, papers, test_ids)
    elapsed = time.monotonic() - start
    assert index.N == 5266, "expected the full unique-citation pool"
    assert abs(float(report.recall_at_k) - 0.194) <= 0.05
    assert abs(float(report.mrr) - 0.107) <= 0.05
    assert elapsed < WALL_CLOCK_LIMIT_S


def test_c2_metric_oracle_equivalence():
    """1,000 random prediction files, n <= 100: exact rational agreement, 0 mismatches."""
    rng = random.Random(20_24)
    mismatches = 0
    for _ in range(1000):
        n = rng.randint(1, 100)
        k = rng.randint(1, 10)
        preds, gts = eval_oracle._random_instance(rng, n, k)
        report = evaluate(preds, gts, k=k)
        r, em, mrr = eval_oracle.oracle_metrics(preds, gts, k)
        if (report.recall_at_k, report.exact_match, report.mrr) != (r, em, mrr):
            mismatches += 1
    assert mismatches == 0


def test_c3_mrr_fixture():
    """Ranks {1, 2, none, none} -> MRR exactly 0.375."""
    gts = {f"c{i}": parse("Smith, 2010") for i in range(4)}
    rows = [
        ["Smith, 2010"] + ["Other, 1999"] * 9,
        ["Other, 1999", "Smith, 2010"] + ["Other, 1999"] * 8,
        ["Other, 1999"] * 10,
        ["Other, 1999"] * 10,
    ]
    preds = [PredictionRecord(f"c{i}", tuple(row)) for i, row in enumerate(rows)]
    report = evaluate(preds, gts, k=10)
    assert report.mrr == Fraction(3, 8)
    assert float(report.mrr) == 0.375


def test_c4_hallucination_identities():
    """Decomposition identity and macro==micro: 0 violations over the property corpus."""
    violations = 0
    for seed in range(300):
        rng = random.Random(seed)
        n = rng.randint(1, 60)
        k = rng.randint(1, 10)
        preds, gts = hal_fixtures._random_file(rng, n=n, k=k)
        b = analyze(preds, gts, hal_fixtures.POOL, k=k)
        if b.mahr != b.mahr_partial + b.wrong_format_rate + b.other_hal_rate:
            violations += 1
        if b.mahr != b.mihr:
            violations += 1
        if sum(b.counts.values()) != k * b.n:
            violations += 1
    assert violations == 0


def test_c5_taxonomy_truth_table():
    """The 12-case hand-built classification table passes 12/12."""
    table = hal_fixtures.TRUTH_TABLE
    assert len(table) == 12
    passed = sum(
        1
        for pred, gt, expected in table
        if classify(pred, parse(gt), hal_fixtures.POOL) is expected
    )
    assert passed == 12


def test_c6_preprocessing_determinism_accounting(tmp_path):
    """5,000 planted-defect records: exact accounting, 100% repairs, identical bytes."""
    corpus = synth.make_planted_corpus(seed=2024, n_records=5000)
    results = []
    for run in ("a", "b"):
        result = ingest(corpus.records, Dataset.CUSTOM)
        write_contexts(tmp_path / f"{run}_contexts.jsonl", result.contexts)
        write_rejects(tmp_path / f"{run}_rejects.jsonl", result.rejects)
        results.append(result)
    first = results[0]

    assert len(first.contexts) + len(first.rejects) == len(corpus.records)

    kept = {c.context_id: c for c in first.contexts}
    rejected = {r.record.get("context_id"): r for r in first.rejects}
    repaired_correctly = 0
    for planted in corpus.planted:
        cid = planted.record["context_id"]
        if planted.outcome == "kept":
            ctx = kept[cid]
            ok = (
                ctx.left_text == planted.expected_left
                and ctx.right_text == planted.expected_right
                and ctx.ground_truth.surnames == planted.expected_surnames
                and ctx.ground_truth.year == planted.expected_year
            )
        else:
            ok = cid in rejected and rejected[cid].reason is planted.reason
        repaired_correctly += ok
    assert repaired_correctly == len(corpus.planted)

    assert (tmp_path / "a_contexts.jsonl").read_bytes() == (tmp_path / "b_contexts.jsonl").read_bytes()
    assert (tmp_path / "a_rejects.jsonl").read_bytes() == (tmp_path / "b_rejects.jsonl").read_bytes()


def test_c7_mask_window_conformance():
    """10,000 synthetic contexts: Global and Base windows hold their budgets."""
    rng = random.Random(7)
    base_cfg = default_config(Scheme.BASE, Dataset.ACL200)
    global_cfg = default_config(Scheme.GLOBAL, Dataset.ACL200)
    meta = synth.make_papers(rng, 1)[0]
    for i in range(10_000):
        n_left = rng.randint(0, 600)
        n_right = rng.randint(1, 600)
        ctx = LocalContext(
            context_id=f"c{i}",
            dataset=Dataset.ACL200,
            left_text=" ".join(f"l{j}" for j in range(n_left)),
            right_text=" ".join(f"r{j}" for j in range(n_right)),
            ground_truth=parse("Smith, 2010"),
        )
        g = build(ctx, meta, global_cfg)
        g_tokens = g.input_text.split()
        assert g.token_count <= 350
        assert g_tokens.count("</s>") == 2
        mask_pos = g_tokens.index("<mask>")
        assert mask_pos <= 50
        assert g_tokens.index("</s>") - mask_pos - 1 <= 50

        b = build(ctx, None, base_cfg)
        b_tokens = b.input_text.split()
        assert b.token_count <= 400
        assert len(b_tokens) == b.token_count
        if n_left >= 200 and n_right >= 199:
            pos = b_tokens.index("<mask>")
            assert len(b_tokens) == 400
            assert abs(pos - (len(b_tokens) - pos - 1)) <= 1


def test_c8_citebart_fixture_reproduction():
    """Released generator predictions on ACL-200: published R@10/MRR and MaHR values."""
    preds_path = Path(CITEBART_PREDS)
    if not preds_path.exists() or not (ACL200_DIR / "contexts.jsonl").exists():
        pytest.skip(
            "released CiteBART-Global ACL-200 prediction fixtures are not obtainable "
            "in this environment (hosted on an external drive; no general network "
            "egress); supply CITEHARNESS_CITEBART_PREDS and CITEHARNESS_ACL200_DIR "
            "to run"
        )
    contexts = list(read_contexts(ACL200_DIR / "contexts.jsonl"))
    papers = list(read_papers(ACL200_DIR / "papers.jsonl"))
    gts = {c.context_id: c.ground_truth for c in contexts}
    pool = build_pool(contexts, papers)
    preds = list(read_predictions(preds_path))
    report = evaluate(preds, gts, k=10)
    assert abs(float(report.recall_at_k) - 0.739) <= 1e-3
    assert abs(float(report.mrr) - 0.513) <= 1e-3
    breakdown = analyze(preds, gts, pool, k=3)
    assert abs(float(breakdown.mahr) * 100 - 4.12) <= 0.1
    assert abs(float(breakdown.mahr_partial) * 100 - 1.89) <= 0.1
