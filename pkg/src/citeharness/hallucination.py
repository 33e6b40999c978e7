"""Hallucination taxonomy and the macro/micro hallucination rate family.

A generated citation is a hallucination when its normalized key is absent
from the dataset's citation pool.  Each of the k*n prediction positions
gets exactly one label via a fixed decision cascade:

    1. does not parse                      -> wrong-format
    2. key in pool                         -> in-pool (not a hallucination)
    3. all author names match, year wrong  -> all-names-GT
    4. some author name matches            -> one-name-GT (year irrelevant)
    5. year matches                        -> year-GT
    6. otherwise                           -> other-hal

Rates are exact fractions with denominator k*n, so the decomposition
MaHR = MaHR-partial + wrong-format + other-hal holds as an identity, and
MaHR equals MiHR whenever every context has exactly k predictions (both
are computed, by independent paths, and compared).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping

from .corpus import CitationPool
from .grammar import CitationToken, cached_try_parse, normalize, overlap
from .evaluation import InconsistentK, MissingGroundTruth, PredictionRecord, rank_of_truth


class HallucinationLabel(str, Enum):
    IN_POOL = "in_pool"
    WRONG_FORMAT = "wrong_format"
    ALL_NAMES_GT = "all_names_gt"
    ONE_NAME_GT = "one_name_gt"
    YEAR_GT = "year_gt"
    OTHER_HAL = "other_hal"


HALLUCINATION_LABELS = (
    HallucinationLabel.WRONG_FORMAT,
    HallucinationLabel.ALL_NAMES_GT,
    HallucinationLabel.ONE_NAME_GT,
    HallucinationLabel.YEAR_GT,
    HallucinationLabel.OTHER_HAL,
)

PARTIAL_LABELS = (
    HallucinationLabel.ALL_NAMES_GT,
    HallucinationLabel.ONE_NAME_GT,
    HallucinationLabel.YEAR_GT,
)


def classify(pred: str, gt: CitationToken, pool: CitationPool) -> HallucinationLabel:
    """Label one prediction against the ground truth and the pool."""
    token = cached_try_parse(pred)
    if token is None:
        return HallucinationLabel.WRONG_FORMAT
    if normalize(token) in pool:
        return HallucinationLabel.IN_POOL
    rep = overlap(token, gt)
    if rep.all_names and not rep.year:
        return HallucinationLabel.ALL_NAMES_GT
    if rep.one_name:
        return HallucinationLabel.ONE_NAME_GT
    if rep.year:
        return HallucinationLabel.YEAR_GT
    return HallucinationLabel.OTHER_HAL


class Condition(str, Enum):
    TOP_K_MATCH = "top_k_match"
    EXACT_MATCH = "exact_match"


@dataclass(frozen=True)
class HallucinationBreakdown:
    k: int
    n: int
    counts: dict[HallucinationLabel, int]
    mahr: Fraction
    mihr: Fraction
    mahr_partial: Fraction
    all_names_rate: Fraction
    one_name_rate: Fraction
    year_rate: Fraction
    wrong_format_rate: Fraction
    other_hal_rate: Fraction
    topk_match_mahr: Fraction | None
    exact_match_mahr: Fraction | None

    def to_dict(self) -> dict[str, Any]:
        def pct(v: Fraction | None) -> float | None:
            return None if v is None else float(v) * 100.0

        return {
            "k": self.k,
            "n": self.n,
            "counts": {label.value: self.counts[label] for label in HallucinationLabel},
            "percent": {
                "all_names_gt": pct(self.all_names_rate),
                "one_name_gt": pct(self.one_name_rate),
                "year_gt": pct(self.year_rate),
                "mahr_partial": pct(self.mahr_partial),
                "wrong_format": pct(self.wrong_format_rate),
                "other_hal": pct(self.other_hal_rate),
                "mahr": pct(self.mahr),
                "mihr": pct(self.mihr),
                "topk_match_mahr": pct(self.topk_match_mahr),
                "exact_match_mahr": pct(self.exact_match_mahr),
            },
        }


def _labels_for_record(
    record: PredictionRecord,
    gts: Mapping[str, CitationToken],
    pool: CitationPool,
    k: int,
) -> list[HallucinationLabel]:
    if record.context_id not in gts:
        raise MissingGroundTruth(record.context_id)
    if record.k < k:
        raise InconsistentK(
            f"context {record.context_id} has {record.k} predictions, need {k}"
        )
    gt = gts[record.context_id]
    return [classify(p, gt, pool) for p in record.predictions[:k]]


def analyze(
    preds: Iterable[PredictionRecord],
    gts: Mapping[str, CitationToken],
    pool: CitationPool,
    k: int,
) -> HallucinationBreakdown:
    """Aggregate label counts and all rates over k predictions per context."""
    if k < 1:
        raise ValueError("k must be >= 1")
    counts = {label: 0 for label in HallucinationLabel}
    per_context_hal: list[int] = []
    qual_topk_hal = qual_topk_n = 0
    qual_exact_hal = qual_exact_n = 0
    for record in preds:
        labels = _labels_for_record(record, gts, pool, k)
        hal = sum(1 for lab in labels if lab is not HallucinationLabel.IN_POOL)
        for lab in labels:
            counts[lab] += 1
        per_context_hal.append(hal)
        rank = rank_of_truth(record.predictions, gts[record.context_id], k)
        if rank is not None:
            qual_topk_hal += hal
            qual_topk_n += 1
            if rank == 1:
                qual_exact_hal += hal
                qual_exact_n += 1
    n = len(per_context_hal)
    if n == 0:
        raise ValueError("no prediction records to analyze")

    total = k * n
    rate = lambda label: Fraction(counts[label], total)  # noqa: E731
    hal_total = sum(counts[label] for label in HALLUCINATION_LABELS)
    mahr = Fraction(hal_total, total)
    # Independent micro path: mean of per-context hallucination fractions.
    mihr = sum(Fraction(h, k) for h in per_context_hal) / n
    assert mihr == mahr, "macro and micro hallucination rates must agree under uniform k"
    mahr_partial = sum((rate(label) for label in PARTIAL_LABELS), Fraction(0))

    return HallucinationBreakdown(
        k=k,
        n=n,
        counts=counts,
        mahr=mahr,
        mihr=mihr,
        mahr_partial=mahr_partial,
        all_names_rate=rate(HallucinationLabel.ALL_NAMES_GT),
        one_name_rate=rate(HallucinationLabel.ONE_NAME_GT),
        year_rate=rate(HallucinationLabel.YEAR_GT),
        wrong_format_rate=rate(HallucinationLabel.WRONG_FORMAT),
        other_hal_rate=rate(HallucinationLabel.OTHER_HAL),
        topk_match_mahr=Fraction(qual_topk_hal, k * qual_topk_n) if qual_topk_n else None,
        exact_match_mahr=Fraction(qual_exact_hal, k * qual_exact_n) if qual_exact_n else None,
    )


def conditioned_mahr(
    preds: Iterable[PredictionRecord],
    gts: Mapping[str, CitationToken],
    pool: CitationPool,
    k: int,
    condition: Condition,
    denominator: str = "qualifying",
) -> Fraction | None:
    """Hallucination rate restricted to contexts where the model found the truth.

    TOP_K_MATCH keeps contexts whose top-k contains the ground truth;
    EXACT_MATCH keeps those whose rank-1 prediction is the truth.  The
    denominator is k times the number of qualifying contexts (set
    ``denominator="all"`` for k*n instead).  Returns None when no context
    qualifies: the rate is undefined, not zero.
    """
    if denominator not in ("qualifying", "all"):
        raise ValueError("denominator must be 'qualifying' or 'all'")
    hal = 0
    qualifying = 0
    n = 0
    for record in preds:
        labels = _labels_for_record(record, gts, pool, k)
        n += 1
        rank = rank_of_truth(record.predictions, gts[record.context_id], k)
        if rank is None:
            continue
        if condition is Condition.EXACT_MATCH and rank != 1:
            continue
        qualifying += 1
        hal += sum(1 for lab in labels if lab is not HallucinationLabel.IN_POOL)
    if qualifying == 0:
        return None
    denom = k * (qualifying if denominator == "qualifying" else n)
    return Fraction(hal, denom)
