"""Okapi BM25 ranked retrieval over the citation pool.

One document per unique citation: the concatenated title and abstract of
the paper(s) the pool entry maps to.  Queries are masked inputs with the
mask token removed, so the baseline sees exactly the text a generator sees.
Scoring uses the standard Okapi form with idf = ln(1 + (N - df + 0.5) /
(df + 0.5)); parameters default to k1=1.2, b=0.75.

The scalar :func:`score` walks the postings directly; :func:`retrieve`
uses precomputed per-term weight arrays for speed.  The two paths are
held equal by tests.
"""

from __future__ import annotations

import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import CitationPool, PaperMeta
from .grammar import NormalizedKey, format_token
from .masking import MaskedExample

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


class EmptyPool(ValueError):
    """Cannot build an index over an empty citation pool."""


@dataclass(frozen=True)
class AnalyzerConfig:
    """Lowercase alphanumeric word segmentation; no stemming by default."""

    lowercase: bool = True
    token_pattern: str = r"[a-z0-9]+"

    def terms(self, text: str) -> list[str]:
        if self.lowercase:
            text = text.lower()
        return re.findall(self.token_pattern, text)


DEFAULT_ANALYZER = AnalyzerConfig()


@dataclass
class Index:
    """Inverted index over citation-pool documents.

    With the default ``doc_unit="citation"`` there is one document per pool
    entry and doc_ids is injective.  The alternative ``doc_unit="context"``
    indexes one document per training context; several documents may then
    share a citation key, and retrieval collapses to the best-scoring
    document per key.
    """

    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avg_doc_length: float
    doc_ids: list[NormalizedKey]
    N: int
    doc_labels: list[str]
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER
    doc_unit: str = "citation"
    _weights: dict[tuple[float, float], dict[str, tuple[np.ndarray, np.ndarray]]] = field(
        default_factory=dict, repr=False
    )

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.N - df + 0.5) / (df + 0.5))

    def term_weights(self, k1: float, b: float) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per-term (doc_ordinal array, precomputed BM25 weight array)."""
        cache_key = (k1, b)
        if cache_key not in self._weights:
            lengths = np.asarray(self.doc_lengths, dtype=np.float64)
            norm = k1 * (1.0 - b + b * lengths / self.avg_doc_length)
            table: dict[str, tuple[np.ndarray, np.ndarray]] = {}
            for term, posting in self.postings.items():
                idx = np.fromiter((d for d, _ in posting), dtype=np.int64, count=len(posting))
                tf = np.fromiter((t for _, t in posting), dtype=np.float64, count=len(posting))
                w = self.idf(term) * tf * (k1 + 1.0) / (tf + norm[idx])
                table[term] = (idx, w)
            self._weights[cache_key] = table
        return self._weights[cache_key]


@dataclass(frozen=True)
class Ranking:
    """Top-k retrieval result for one context."""

    context_id: str
    ranked: tuple[tuple[NormalizedKey, float], ...]
    k: int

    def prediction_strings(self, labels_by_key: dict[NormalizedKey, str]) -> list[str]:
        return [labels_by_key[key] for key, _ in self.ranked]


def build_index(
    pool: CitationPool,
    papers: Iterable[PaperMeta],
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
) -> Index:
    """Index with one document per pool entry (title + abstract text)."""
    if not pool.entries:
        raise EmptyPool("citation pool is empty")
    by_id = {p.paper_id: p for p in papers}
    keys = sorted(pool.entries)
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    doc_labels: list[str] = []
    for ordinal, key in enumerate(keys):
        paper_ids = pool.entries[key]
        if not paper_ids:
            raise ValueError(f"pool entry {key} maps to no paper")
        parts = []
        for pid in paper_ids:
            paper = by_id.get(pid)
            if paper is None:
                raise ValueError(f"pool entry {key} references unknown paper {pid}")
            parts.append(paper.title)
            if paper.abstract:
                parts.append(paper.abstract)
        terms = analyzer.terms(" ".join(parts))
        doc_lengths.append(len(terms))
        counts: dict[str, int] = {}
        for t in terms:
            counts[t] = counts.get(t, 0) + 1
        for t, c in counts.items():
            postings.setdefault(t, []).append((ordinal, c))
        token = by_id[paper_ids[0]].citation_token()
        doc_labels.append(format_token(token) if token is not None else "")
    n = len(keys)
    avg = sum(doc_lengths) / n
    return Index(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        doc_ids=keys,
        N=n,
        doc_labels=doc_labels,
        analyzer=analyzer,
    )


def build_context_index(
    contexts: Iterable,
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
) -> Index:
    """Alternative document unit: one document per training context.

    Document text is the context's own words; its key is the context's
    ground-truth citation, so retrieval recommends the citations of the
    most similar seen contexts.
    """
    from .grammar import normalize

    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    doc_ids: list[NormalizedKey] = []
    doc_labels: list[str] = []
    for ordinal, ctx in enumerate(contexts):
        terms = analyzer.terms(ctx.left_text + " " + ctx.right_text)
        doc_lengths.append(len(terms))
        counts: dict[str, int] = {}
        for t in terms:
            counts[t] = counts.get(t, 0) + 1
        for t, c in counts.items():
            postings.setdefault(t, []).append((ordinal, c))
        doc_ids.append(normalize(ctx.ground_truth))
        doc_labels.append(format_token(ctx.ground_truth))
    if not doc_ids:
        raise EmptyPool("no contexts to index")
    return Index(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths) / len(doc_ids),
        doc_ids=doc_ids,
        N=len(doc_ids),
        doc_labels=doc_labels,
        analyzer=analyzer,
        doc_unit="context",
    )


def score(
    query_terms: Sequence[str],
    doc_ordinal: int,
    idx: Index,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> float:
    """Okapi BM25 score of one document for a term sequence.

    Each query-term occurrence contributes; fully out-of-vocabulary
    queries score 0.
    """
    if not 0 <= doc_ordinal < idx.N:
        raise IndexError(f"doc ordinal {doc_ordinal} out of range")
    dl = idx.doc_lengths[doc_ordinal]
    norm = k1 * (1.0 - b + b * dl / idx.avg_doc_length)
    total = 0.0
    for term in query_terms:
        posting = idx.postings.get(term)
        if not posting:
            continue
        tf = 0
        for d, t in posting:
            if d == doc_ordinal:
                tf = t
                break
        if tf == 0:
            continue
        total += idx.idf(term) * tf * (k1 + 1.0) / (tf + norm)
    return total


def _query_terms(example: MaskedExample | str, idx: Index, mask_token: str) -> list[str]:
    text = example.input_text if isinstance(example, MaskedExample) else example
    if mask_token:
        text = text.replace(mask_token, " ")
    return idx.analyzer.terms(text)


def _score_vector(terms: Sequence[str], idx: Index, k1: float, b: float) -> np.ndarray:
    weights = idx.term_weights(k1, b)
    scores = np.zeros(idx.N, dtype=np.float64)
    counts: dict[str, int] = {}
    for t in terms:
        counts[t] = counts.get(t, 0) + 1
    for t in sorted(counts):
        entry = weights.get(t)
        if entry is None:
            continue
        doc_idx, w = entry
        scores[doc_idx] += counts[t] * w
    return scores


def retrieve(
    example: MaskedExample | str,
    idx: Index,
    k: int,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    mask_token: str = "<mask>",
) -> Ranking:
    """Top-k citations by BM25 score; ties broken by ascending doc ordinal.

    The ranking always carries min(k, N) entries, padding with zero-score
    documents in ordinal order when the query matches nothing.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = _query_terms(example, idx, mask_token)
    scores = _score_vector(terms, idx, k1, b)
    order = np.lexsort((np.arange(idx.N), -scores))
    if idx.doc_unit == "citation":
        chosen = order[: min(k, idx.N)]
        ranked = tuple((idx.doc_ids[i], float(scores[i])) for i in chosen)
    else:
        # Context documents: collapse to the best-scoring document per key.
        seen: set[NormalizedKey] = set()
        ranked_list: list[tuple[NormalizedKey, float]] = []
        for i in order:
            key = idx.doc_ids[i]
            if key in seen:
                continue
            seen.add(key)
            ranked_list.append((key, float(scores[i])))
            if len(ranked_list) == k:
                break
        ranked = tuple(ranked_list)
    cid = example.context_id if isinstance(example, MaskedExample) else ""
    return Ranking(context_id=cid, ranked=ranked, k=k)


def thread_cap() -> int:
    """Parallelism cap from CITEHARNESS_THREADS (default 1)."""
    raw = os.environ.get("CITEHARNESS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def batch_retrieve(
    examples: Sequence[MaskedExample],
    idx: Index,
    k: int,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    mask_token: str = "<mask>",
    threads: int | None = None,
) -> list[Ranking]:
    """retrieve() over many examples with a deterministic ordered merge."""
    idx.term_weights(k1, b)  # build the cache once, outside the pool
    threads = thread_cap() if threads is None else max(1, threads)

    def run(example: MaskedExample) -> Ranking:
        return retrieve(example, idx, k, k1=k1, b=b, mask_token=mask_token)

    if threads == 1:
        return [run(e) for e in examples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, examples))


def rankings_to_records(rankings: Iterable[Ranking], idx: Index) -> list[dict]:
    """PredictionRecord rows ({context_id, predictions}) for the shared format."""
    labels = dict(zip(idx.doc_ids, idx.doc_labels))
    return [
        {"context_id": r.context_id, "predictions": r.prediction_strings(labels)}
        for r in rankings
    ]
