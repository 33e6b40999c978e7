"""Ranking metrics over prediction files: Recall@k, Exact Match, MRR.

A prediction matches its ground truth when their normalized citation keys
are equal; unparseable prediction strings never match (they matter to the
hallucination analysis, not here).  Aggregates are computed in exact
rational arithmetic so independent oracles can require equality, not
closeness.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .grammar import CitationToken, cached_try_parse, normalize
from .jsonl import read_jsonl, write_jsonl


class MissingGroundTruth(KeyError):
    """A prediction record has no ground truth for its context."""

    def __init__(self, context_id: str):
        super().__init__(context_id)
        self.context_id = context_id


class InconsistentK(ValueError):
    """A prediction record carries fewer predictions than the requested k."""


@dataclass(frozen=True)
class PredictionRecord:
    """Ranked citation strings generated for one context (index 0 = rank 1)."""

    context_id: str
    predictions: tuple[str, ...]

    @property
    def k(self) -> int:
        return len(self.predictions)

    def to_dict(self) -> dict[str, Any]:
        return {"context_id": self.context_id, "predictions": list(self.predictions)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PredictionRecord":
        preds = d["predictions"]
        if not isinstance(preds, (list, tuple)):
            raise ValueError("predictions must be a list")
        return cls(context_id=d["context_id"], predictions=tuple(preds))


def read_predictions(path: str | Path) -> Iterator[PredictionRecord]:
    for row in read_jsonl(path):
        yield PredictionRecord.from_dict(row)


def write_predictions(path: str | Path, records: Iterable[PredictionRecord]) -> int:
    return write_jsonl(path, (r.to_dict() for r in records))


@dataclass(frozen=True)
class EvalReport:
    n: int
    k: int
    recall_at_k: Fraction
    exact_match: Fraction
    mrr: Fraction
    per_context_ranks: dict[str, int | None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "k": self.k,
            "recall_at_k": float(self.recall_at_k),
            "exact_match": float(self.exact_match),
            "mrr": float(self.mrr),
            "exact": {
                "recall_at_k": str(self.recall_at_k),
                "exact_match": str(self.exact_match),
                "mrr": str(self.mrr),
            },
            "per_context_ranks": dict(self.per_context_ranks),
        }


def rank_of_truth(
    predictions: Iterable[str], gt: CitationToken, k: int | None = None
) -> int | None:
    """1-based rank of the first prediction matching the ground truth key."""
    gt_key = normalize(gt)
    for i, pred in enumerate(predictions):
        if k is not None and i >= k:
            break
        token = cached_try_parse(pred)
        if token is not None and normalize(token) == gt_key:
            return i + 1
    return None


def evaluate(
    preds: Iterable[PredictionRecord],
    gts: Mapping[str, CitationToken],
    k: int,
) -> EvalReport:
    """Aggregate ranking metrics at cutoff k.

    Records may carry more than k predictions (one generation run is scored
    at several cutoffs); only the first k count.  Fewer than k raises
    InconsistentK.  Contexts whose truth is absent from the top k contribute
    reciprocal rank 0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = 0
    hits = 0
    first_hits = 0
    rr_sum = Fraction(0)
    ranks: dict[str, int | None] = {}
    for record in preds:
        if record.context_id not in gts:
            raise MissingGroundTruth(record.context_id)
        if record.k < k:
            raise InconsistentK(
                f"context {record.context_id} has {record.k} predictions, need {k}"
            )
        rank = rank_of_truth(record.predictions, gts[record.context_id], k)
        ranks[record.context_id] = rank
        n += 1
        if rank is not None:
            hits += 1
            rr_sum += Fraction(1, rank)
            if rank == 1:
                first_hits += 1
    if n == 0:
        raise ValueError("no prediction records to evaluate")
    return EvalReport(
        n=n,
        k=k,
        recall_at_k=Fraction(hits, n),
        exact_match=Fraction(first_hits, n),
        mrr=rr_sum / n,
        per_context_ranks=ranks,
    )


def bootstrap_samples(
    values: Iterable[float], resamples: int, seed: int
) -> np.ndarray:
    """Percentile-bootstrap distribution of the mean of per-context values."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to resample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    return arr[idx].mean(axis=1)


def bootstrap_ci(
    report: EvalReport,
    resamples: int,
    seed: int,
    confidence: float = 0.95,
) -> dict[str, tuple[float, float]]:
    """Percentile bootstrap intervals over contexts for each metric.

    Interval endpoints are order statistics of the resampled means (no
    interpolation), so they are always values the statistic can take.
    """
    if resamples < 100:
        raise ValueError("resamples must be >= 100")
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    ranks = list(report.per_context_ranks.values())
    per_metric = {
        "recall_at_k": [1.0 if r is not None else 0.0 for r in ranks],
        "exact_match": [1.0 if r == 1 else 0.0 for r in ranks],
        "mrr": [1.0 / r if r is not None else 0.0 for r in ranks],
    }
    alpha = (1.0 - confidence) / 2.0
    out: dict[str, tuple[float, float]] = {}
    for name, values in per_metric.items():
        samples = bootstrap_samples(values, resamples, seed)
        lo = float(np.quantile(samples, alpha, method="lower"))
        hi = float(np.quantile(samples, 1.0 - alpha, method="higher"))
        out[name] = (lo, hi)
    return out
