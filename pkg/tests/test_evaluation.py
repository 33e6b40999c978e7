"""Ranking metrics vs a brute-force oracle, plus the bootstrap."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from citeharness.evaluation import (
    EvalReport,
    InconsistentK,
    MissingGroundTruth,
    PredictionRecord,
    bootstrap_ci,
    bootstrap_samples,
    evaluate,
)
from citeharness.grammar import CitationToken, format_token, normalize, parse, try_parse


def oracle_metrics(preds: list[PredictionRecord], gts: dict, k: int):
    """Direct transcription of the metric definitions, independent loop.

    Recall@k: fraction of contexts whose truth appears in the top k.
    EM: fraction whose first prediction is the truth.
    MRR: mean over all contexts of 1/rank of the truth (0 when absent).
    """
    u = len(preds)
    hits = Fraction(0)
    em = Fraction(0)
    mrr = Fraction(0)
    for record in preds:
        gt_key = normalize(gts[record.context_id])
        rank = None
        for i in range(k):
            token = try_parse(record.predictions[i])
            if token is not None and normalize(token) == gt_key:
                rank = i + 1
                break
        if rank is not None:
            hits += 1
            mrr += Fraction(1, rank)
            if rank == 1:
                em += 1
    return hits / u, em / u, mrr / u


def _alpha(i: int) -> str:
    """Deterministic purely-alphabetic suffix for synthetic surnames."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    out = letters[i % 26]
    while i >= 26:
        i //= 26
        out += letters[i % 26]
    return out


def _gt(name: str = "Smith", year: int = 2010) -> CitationToken:
    return parse(f"{name}, {year}")


def _miss(i: int) -> str:
    return f"Nobody{_alpha(i)}, 1999"


class TestEvaluate:
    def test_all_rank_one(self):
        gts = {f"c{i}": _gt() for i in range(5)}
        preds = [
            PredictionRecord(f"c{i}", tuple(["Smith, 2010"] + [_miss(j) for j in range(9)]))
            for i in range(5)
        ]
        report = evaluate(preds, gts, k=10)
        assert report.recall_at_k == report.exact_match == report.mrr == 1

    def test_four_context_fixture(self):
        """Ranks {1, 2, none, none} at k=10: R=0.5, EM=0.25, MRR=0.375."""
        gts = {f"c{i}": _gt() for i in range(4)}
        rows = [
            ["Smith, 2010"] + [_miss(j) for j in range(9)],
            [_miss(0), "Smith, 2010"] + [_miss(j) for j in range(1, 9)],
            [_miss(j) for j in range(10)],
            [_miss(j) for j in range(10)],
        ]
        preds = [PredictionRecord(f"c{i}", tuple(row)) for i, row in enumerate(rows)]
        report = evaluate(preds, gts, k=10)
        assert report.recall_at_k == Fraction(1, 2)
        assert report.exact_match == Fraction(1, 4)
        assert report.mrr == Fraction(3, 8)
        assert float(report.mrr) == 0.375
        assert report.per_context_ranks == {"c0": 1, "c1": 2, "c2": None, "c3": None}

    def test_matching_is_by_normalized_key(self):
        gts = {"c0": parse("Petrović et al., 2010")}
        preds = [PredictionRecord("c0", ("Petrovic et al., 2010",))]
        assert evaluate(preds, gts, k=1).exact_match == 1

    def test_unparseable_never_matches(self):
        gts = {"c0": _gt()}
        preds = [PredictionRecord("c0", ("not a citation", "Smith 2010", "Smith, 2010"))]
        report = evaluate(preds, gts, k=3)
        assert report.per_context_ranks["c0"] == 3

    def test_duplicates_first_occurrence_ranks(self):
        gts = {"c0": _gt()}
        preds = [PredictionRecord("c0", (_miss(0), "Smith, 2010", "Smith, 2010"))]
        assert evaluate(preds, gts, k=3).mrr == Fraction(1, 2)

    def test_missing_ground_truth(self):
        with pytest.raises(MissingGroundTruth):
            evaluate([PredictionRecord("cX", ("Smith, 2010",))], {}, k=1)

    def test_inconsistent_k(self):
        gts = {"c0": _gt()}
        with pytest.raises(InconsistentK):
            evaluate([PredictionRecord("c0", ("Smith, 2010",))], gts, k=5)

    def test_report_invariants(self):
        preds, gts = _random_instance(random.Random(7), n=50, k=10)
        report = evaluate(preds, gts, k=10)
        assert report.exact_match <= report.mrr <= report.recall_at_k

    def test_permutation_invariance(self):
        preds, gts = _random_instance(random.Random(11), n=40, k=5)
        shuffled = list(preds)
        random.Random(0).shuffle(shuffled)
        a, b = evaluate(preds, gts, k=5), evaluate(shuffled, gts, k=5)
        assert (a.recall_at_k, a.exact_match, a.mrr) == (b.recall_at_k, b.exact_match, b.mrr)

    def test_prefix_coherence(self):
        preds, gts = _random_instance(random.Random(13), n=60, k=10)
        prev = Fraction(0)
        for j in range(1, 11):
            r = evaluate(preds, gts, k=j).recall_at_k
            assert r >= prev
            prev = r

    def test_mrr_stable_when_no_hits_beyond_k(self):
        # All hits planted at ranks <= 3; widening the cutoff changes nothing.
        gts = {f"c{i}": _gt() for i in range(6)}
        preds = []
        for i in range(6):
            row = [_miss(j) for j in range(10)]
            if i % 2 == 0:
                row[i % 3] = "Smith, 2010"
            preds.append(PredictionRecord(f"c{i}", tuple(row)))
        assert evaluate(preds, gts, k=3).mrr == evaluate(preds, gts, k=10).mrr


def _random_instance(rng: random.Random, n: int, k: int):
    """Random prediction lists with the truth planted at a random rank or absent."""
    gts = {}
    preds = []
    pool = [f"Author{_alpha(i)} et al., {1990 + i % 30}" for i in range(50)]
    for i in range(n):
        cid = f"c{i}"
        gt = parse(rng.choice(pool))
        gts[cid] = gt
        row = [rng.choice(pool + [f"Fake{_alpha(j)}, 2003" for j in range(20)]) for _ in range(k)]
        gt_key = normalize(gt)
        row = [p for p in row if normalize(parse(p)) != gt_key]
        while len(row) < k:
            row.append(f"Pad{_alpha(len(row))}, 1901")
        if rng.random() < 0.7:
            row[rng.randrange(k)] = format_token(gt)
        preds.append(PredictionRecord(cid, tuple(row[:k])))
    return preds, gts


class TestOracleEquivalence:
    def test_random_instances_match_oracle_exactly(self):
        rng = random.Random(101)
        for trial in range(100):
            n = rng.randint(1, 100)
            k = rng.randint(1, 10)
            preds, gts = _random_instance(rng, n, k)
            report = evaluate(preds, gts, k=k)
            r, em, mrr = oracle_metrics(preds, gts, k)
            assert (report.recall_at_k, report.exact_match, report.mrr) == (r, em, mrr)


class TestBootstrap:
    def _report(self, ranks: dict[str, int | None]) -> EvalReport:
        n = len(ranks)
        hits = sum(1 for r in ranks.values() if r is not None)
        em = sum(1 for r in ranks.values() if r == 1)
        mrr = sum(Fraction(1, r) for r in ranks.values() if r is not None)
        return EvalReport(
            n=n, k=10,
            recall_at_k=Fraction(hits, n),
            exact_match=Fraction(em, n),
            mrr=mrr / n,
            per_context_ranks=ranks,
        )

    def test_constant_outcomes_zero_width(self):
        report = self._report({f"c{i}": 1 for i in range(20)})
        ci = bootstrap_ci(report, resamples=500, seed=0)
        for lo, hi in ci.values():
            assert lo == hi

    def test_two_context_binomial_distribution(self):
        """Resampled EM over {hit@1, miss} follows Binomial(2, 1/2)/2 to 2%."""
        report = self._report({"c0": 1, "c1": None})
        samples = bootstrap_samples([1.0, 0.0], resamples=10_000, seed=42)
        freq = {v: (samples == v).mean() for v in (0.0, 0.5, 1.0)}
        assert sum(freq.values()) == 1.0
        assert freq[0.0] == pytest.approx(0.25, abs=0.02)
        assert freq[0.5] == pytest.approx(0.50, abs=0.02)
        assert freq[1.0] == pytest.approx(0.25, abs=0.02)
        ci = bootstrap_ci(report, resamples=10_000, seed=42)
        for lo, hi in ci.values():
            assert lo in (0.0, 0.5, 1.0) and hi in (0.0, 0.5, 1.0)

    def test_interval_covers_point_estimate(self):
        rng = random.Random(3)
        ranks = {f"c{i}": (1 if rng.random() < 0.3 else None) for i in range(1000)}
        report = self._report(ranks)
        ci = bootstrap_ci(report, resamples=2000, seed=9)
        lo, hi = ci["exact_match"]
        assert lo <= float(report.exact_match) <= hi
        assert lo <= 0.3 <= hi

    def test_deterministic_given_seed(self):
        report = self._report({f"c{i}": (i % 3 or None) for i in range(30)})
        assert bootstrap_ci(report, 500, seed=5) == bootstrap_ci(report, 500, seed=5)

    def test_resamples_floor(self):
        report = self._report({"c0": 1})
        with pytest.raises(ValueError):
            bootstrap_ci(report, resamples=10, seed=1)
