"""Corpus ingestion, preprocessing repairs, splits, and the citation pool.

The raw benchmarks arrive as JSONL records (one per citation context, plus a
papers file).  Ingestion normalizes them into LocalContext/PaperMeta values,
applying the repairs the corpora are known to need: removal of non-target
citation markers, diacritic reconciliation against the in-context surface
form, and reordering of two-author citations to the order the context uses.
Records that cannot be repaired are routed to a rejects sink with a reason
code; nothing is dropped silently.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .grammar import (
    CitationToken,
    FormatError,
    NormalizedKey,
    canonicalize,
    fold_surname,
    format_token,
    normalize,
    parse,
)
from .jsonl import EncodingError, read_json, read_jsonl, write_json, write_jsonl

TARGET_MARKER = "TARGETCIT"
OTHER_MARKER = "OTHERCIT"
DEFAULT_MASK_TOKEN = "<mask>"


class Dataset(str, Enum):
    ACL200 = "acl200"
    PEERREAD = "peerread"
    REFSEER = "refseer"
    ARXIV = "arxiv"
    CUSTOM = "custom"

    @classmethod
    def from_string(cls, s: str) -> "Dataset":
        key = s.strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "acl200": cls.ACL200,
            "peerread": cls.PEERREAD,
            "fulltextpeerread": cls.PEERREAD,
            "refseer": cls.REFSEER,
            "arxiv": cls.ARXIV,
            "custom": cls.CUSTOM,
        }
        if key not in aliases:
            raise ValueError(f"unknown dataset {s!r}")
        return aliases[key]


class SchemaError(ValueError):
    """A record stream does not conform to the declared raw schema."""


class EmptyCorpus(ValueError):
    """An operation that needs at least one context received none."""


class RejectReason(str, Enum):
    SCHEMA_ERROR = "SCHEMA_ERROR"
    ENCODING_ERROR = "ENCODING_ERROR"
    EMPTY_AUTHOR = "EMPTY_AUTHOR"
    AUTHOR_MISMATCH = "AUTHOR_MISMATCH"
    BAD_FORMAT = "BAD_FORMAT"
    NO_TARGET_MARKER = "NO_TARGET_MARKER"
    MULTIPLE_TARGET_MARKERS = "MULTIPLE_TARGET_MARKERS"
    MASK_COLLISION = "MASK_COLLISION"
    DUPLICATE_ID = "DUPLICATE_ID"
    BAD_YEAR = "BAD_YEAR"
    EMPTY_TITLE = "EMPTY_TITLE"


@dataclass(frozen=True)
class Rejection:
    record: dict[str, Any]
    reason: RejectReason
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"record": self.record, "reason": self.reason.value}
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass(frozen=True)
class LocalContext:
    """One citation occurrence: the text around a single masked citation."""

    context_id: str
    dataset: Dataset
    left_text: str
    right_text: str
    ground_truth: CitationToken
    citing_paper_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "context_id": self.context_id,
            "dataset": self.dataset.value,
            "left_text": self.left_text,
            "right_text": self.right_text,
            "target_citation": format_token(self.ground_truth),
            "citing_paper_id": self.citing_paper_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LocalContext":
        return cls(
            context_id=d["context_id"],
            dataset=Dataset.from_string(d["dataset"]),
            left_text=d["left_text"],
            right_text=d["right_text"],
            ground_truth=parse(d["target_citation"]),
            citing_paper_id=d.get("citing_paper_id"),
        )


@dataclass(frozen=True)
class PaperMeta:
    """Metadata of one paper: what the Global scheme and the retriever see."""

    paper_id: str
    title: str
    abstract: str
    author_surnames: tuple[str, ...]
    year: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "paper_id": self.paper_id,
            "title": self.title,
            "abstract": self.abstract,
            "authors": list(self.author_surnames),
            "year": self.year,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PaperMeta":
        return cls(
            paper_id=d["paper_id"],
            title=d["title"],
            abstract=d.get("abstract", ""),
            author_surnames=tuple(d.get("authors", ())),
            year=int(d["year"]),
        )

    def citation_token(self) -> CitationToken | None:
        """The author-date token under which this paper would be cited."""
        if not self.author_surnames:
            return None
        if len(self.author_surnames) >= 3:
            t = CitationToken((self.author_surnames[0],), True, self.year, "")
        elif len(self.author_surnames) == 2:
            t = CitationToken(tuple(self.author_surnames), False, self.year, "")
        else:
            t = CitationToken((self.author_surnames[0],), False, self.year, "")
        return canonicalize(t)


@dataclass
class CitationPool:
    """All distinct normalized ground-truth citations of a dataset.

    This is the oracle set against which hallucination is judged: a
    generated citation whose key is absent from ``entries`` is hallucinated.
    """

    dataset: Dataset
    entries: dict[NormalizedKey, tuple[str, ...]]

    def __contains__(self, key: object) -> bool:
        if isinstance(key, CitationToken):
            key = normalize(key)
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SplitManifest:
    seed: int
    ratio: Fraction
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    val_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "seed": self.seed,
            "ratio": str(self.ratio),
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
        }
        if self.val_ids:
            out["val_ids"] = list(self.val_ids)
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SplitManifest":
        return cls(
            seed=int(d["seed"]),
            ratio=Fraction(d["ratio"]),
            train_ids=tuple(d["train_ids"]),
            test_ids=tuple(d["test_ids"]),
            val_ids=tuple(d.get("val_ids", ())),
        )


@dataclass
class IngestResult:
    contexts: list[LocalContext] = field(default_factory=list)
    papers: list[PaperMeta] = field(default_factory=list)
    rejects: list[Rejection] = field(default_factory=list)


_WS_MARKER_RE = re.compile(rf"(\s*){OTHER_MARKER}(\s*)")


def strip_other_citations(text: str, marker: str = OTHER_MARKER) -> str:
    """Remove non-target citation markers from raw context text.

    The marker is removed together with its adjacent whitespace; a single
    space is kept only when the marker had whitespace on both sides, so
    "technique of OTHERCIT." becomes "technique of." while
    "of OTHERCIT and" becomes "of and".
    """
    pattern = _WS_MARKER_RE if marker == OTHER_MARKER else re.compile(
        rf"(\s*){re.escape(marker)}(\s*)"
    )
    return pattern.sub(lambda m: " " if m.group(1) and m.group(2) else "", text)


def strip_nontarget_citations(ctx: LocalContext, marker: str = OTHER_MARKER) -> LocalContext:
    """LocalContext with all non-target citation markers removed."""
    left = strip_other_citations(ctx.left_text, marker)
    right = strip_other_citations(ctx.right_text, marker)
    if left == ctx.left_text and right == ctx.right_text:
        return ctx
    return replace(ctx, left_text=left, right_text=right)


_YEAR_TAIL_RE = re.compile(r"(?s)\s*(?P<authors>.*?)\s*,\s*(?P<year>\d{4})\s*")
_WORD_SPLIT_RE = re.compile(r"\s+")
_EDGE_PUNCT = "()[]{}<>,.;:!?\"" + "“”"


def _parse_failure_reason(gt: str) -> RejectReason:
    """Distinguish empty-author defects from other grammar failures."""
    if not gt.strip():
        return RejectReason.EMPTY_AUTHOR
    m = _YEAR_TAIL_RE.fullmatch(gt)
    if m is not None:
        authors = m.group("authors")
        if not authors or authors in ("et al.", "et al"):
            return RejectReason.EMPTY_AUTHOR
        if authors.startswith("and ") or authors.endswith(" and") or authors == "and":
            return RejectReason.EMPTY_AUTHOR
        if " and " in authors and any(not p.strip() for p in authors.split(" and ")):
            return RejectReason.EMPTY_AUTHOR
    return RejectReason.BAD_FORMAT


def _context_words(context_text: str) -> list[str]:
    words = []
    for w in _WORD_SPLIT_RE.split(context_text):
        w = w.strip(_EDGE_PUNCT)
        if w:
            words.append(w)
    return words


def _scan_surname(surname: str, words: list[str]) -> tuple[int | None, str | None]:
    """Locate a surname in the context and pick an adoptable surface form.

    Position is the first fold-equal occurrence (used for order checks).
    A surface form is adopted only when it differs beyond capitalization
    (diacritics, apostrophe mangles) and looks like a name, so ordinary
    lowercase words never overwrite the target's spelling.
    """
    folded = fold_surname(surname)
    span = len(surname.split(" "))
    position: int | None = None
    adopted: str | None = None
    for i in range(len(words) - span + 1):
        candidate = " ".join(words[i : i + span])
        if fold_surname(candidate) != folded:
            continue
        if position is None:
            position = i
        if (
            adopted is None
            and candidate != surname
            and candidate.casefold() != surname.casefold()
            and candidate[:1].isupper()
        ):
            adopted = candidate
        if position is not None and adopted is not None:
            break
    return position, adopted


def repair_citation(
    gt: str,
    context_text: str = "",
    alt: str | None = None,
) -> CitationToken | Rejection:
    """Parse and repair a raw target citation against its context.

    Repairs: (a) when the context spells a surname differently but
    fold-equivalently (diacritic conflicts), the context surface form wins;
    (b) two-author tokens are reordered to the order their surnames first
    appear in the context.  ``alt`` is an optional second source form (the
    benchmark's metadata column); a folded author set that disagrees with it
    is irreconcilable and rejected.
    """
    try:
        token = parse(gt)
    except FormatError:
        return Rejection({"target_citation": gt}, _parse_failure_reason(gt))

    if alt is not None:
        try:
            alt_token = parse(alt)
        except FormatError:
            alt_token = None
        if alt_token is not None:
            mine = {fold_surname(s) for s in token.surnames}
            theirs = {fold_surname(s) for s in alt_token.surnames}
            if mine != theirs:
                return Rejection(
                    {"target_citation": gt, "metadata_citation": alt},
                    RejectReason.AUTHOR_MISMATCH,
                    detail="folded author sets differ",
                )

    words = _context_words(context_text) if context_text else []
    surnames = list(token.surnames)
    positions: list[int | None] = [None] * len(surnames)
    if words:
        for i, s in enumerate(surnames):
            positions[i], adopted = _scan_surname(s, words)
            if adopted is not None:
                surnames[i] = adopted
        if (
            len(surnames) == 2
            and positions[0] is not None
            and positions[1] is not None
            and positions[1] < positions[0]
        ):
            surnames.reverse()

    if tuple(surnames) != token.surnames:
        token = CitationToken(tuple(surnames), token.et_al, token.year, gt)
    return token


def _utf8_clean(value: str) -> bool:
    try:
        value.encode("utf-8")
    except UnicodeEncodeError:
        return False
    return True


_CONTEXT_REQUIRED = ("context_id", "target_citation")
_PAPER_REQUIRED = ("paper_id", "title", "authors", "year")


def _reject(result: IngestResult, record: dict, reason: RejectReason, detail: str = "") -> None:
    result.rejects.append(Rejection(record, reason, detail))


def _ingest_context(
    record: dict[str, Any],
    dataset: Dataset,
    result: IngestResult,
    seen_ids: set[str],
    mask_token: str,
) -> None:
    for key in _CONTEXT_REQUIRED:
        if key not in record:
            _reject(result, record, RejectReason.SCHEMA_ERROR, f"missing {key}")
            return
    if "context" not in record and not ("left_text" in record and "right_text" in record):
        _reject(result, record, RejectReason.SCHEMA_ERROR, "missing context or left/right text")
        return

    cid = record["context_id"]
    if not isinstance(cid, str) or not cid:
        _reject(result, record, RejectReason.SCHEMA_ERROR, "context_id must be a non-empty string")
        return
    if cid in seen_ids:
        _reject(result, record, RejectReason.DUPLICATE_ID, cid)
        return

    if "context" in record:
        text = record["context"]
        if not isinstance(text, str):
            _reject(result, record, RejectReason.SCHEMA_ERROR, "context must be a string")
            return
        if text.count(TARGET_MARKER) == 0:
            _reject(result, record, RejectReason.NO_TARGET_MARKER)
            return
        if text.count(TARGET_MARKER) > 1:
            _reject(result, record, RejectReason.MULTIPLE_TARGET_MARKERS)
            return
        left, right = text.split(TARGET_MARKER)
    else:
        left, right = record["left_text"], record["right_text"]
        if not isinstance(left, str) or not isinstance(right, str):
            _reject(result, record, RejectReason.SCHEMA_ERROR, "left/right text must be strings")
            return
        if TARGET_MARKER in left or TARGET_MARKER in right:
            _reject(result, record, RejectReason.MULTIPLE_TARGET_MARKERS)
            return

    target = record["target_citation"]
    if not isinstance(target, str):
        _reject(result, record, RejectReason.SCHEMA_ERROR, "target_citation must be a string")
        return
    for value in (left, right, target):
        if not _utf8_clean(value):
            _reject(result, record, RejectReason.ENCODING_ERROR)
            return

    left = strip_other_citations(left)
    right = strip_other_citations(right)
    if mask_token and (mask_token in left or mask_token in right):
        _reject(result, record, RejectReason.MASK_COLLISION, mask_token)
        return

    repaired = repair_citation(target, left + " " + right, alt=record.get("metadata_citation"))
    if isinstance(repaired, Rejection):
        _reject(result, record, repaired.reason, repaired.detail)
        return

    seen_ids.add(cid)
    result.contexts.append(
        LocalContext(
            context_id=cid,
            dataset=dataset,
            left_text=left,
            right_text=right,
            ground_truth=repaired,
            citing_paper_id=record.get("citing_paper_id"),
        )
    )


def _ingest_paper(record: dict[str, Any], result: IngestResult, seen_ids: set[str]) -> None:
    for key in _PAPER_REQUIRED:
        if key not in record:
            _reject(result, record, RejectReason.SCHEMA_ERROR, f"missing {key}")
            return
    pid = record["paper_id"]
    if not isinstance(pid, str) or not pid:
        _reject(result, record, RejectReason.SCHEMA_ERROR, "paper_id must be a non-empty string")
        return
    if pid in seen_ids:
        _reject(result, record, RejectReason.DUPLICATE_ID, pid)
        return
    title = record["title"]
    if not isinstance(title, str) or not title.strip():
        _reject(result, record, RejectReason.EMPTY_TITLE)
        return
    try:
        year = int(record["year"])
    except (TypeError, ValueError):
        _reject(result, record, RejectReason.BAD_YEAR, repr(record["year"]))
        return
    if not 1800 <= year <= 2100:
        _reject(result, record, RejectReason.BAD_YEAR, str(year))
        return
    authors = record["authors"]
    if not isinstance(authors, (list, tuple)) or not all(isinstance(a, str) for a in authors):
        _reject(result, record, RejectReason.SCHEMA_ERROR, "authors must be a list of strings")
        return
    seen_ids.add(pid)
    result.papers.append(
        PaperMeta(
            paper_id=pid,
            title=title,
            abstract=record.get("abstract", "") or "",
            author_surnames=tuple(authors),
            year=year,
        )
    )


def ingest(
    records: Iterable[Mapping[str, Any]],
    dataset: Dataset,
    mask_token: str = DEFAULT_MASK_TOKEN,
) -> IngestResult:
    """Normalize a stream of raw records into contexts, papers, and rejects.

    Records carrying ``paper_id`` (and no context fields) are paper metadata;
    everything else is treated as a citation-context record.  Every record
    ends up in exactly one of the three output lists, so
    ``len(contexts) + len(papers) + len(rejects)`` equals the input count.
    """
    result = IngestResult()
    seen_context_ids: set[str] = set()
    seen_paper_ids: set[str] = set()
    for record in records:
        if not isinstance(record, Mapping):
            raise SchemaError(f"record is not an object: {record!r}")
        record = dict(record)
        if "paper_id" in record and "context_id" not in record and "context" not in record:
            _ingest_paper(record, result, seen_paper_ids)
        else:
            _ingest_context(record, dataset, result, seen_context_ids, mask_token)
    return result


def split(
    contexts: Sequence[LocalContext] | Sequence[str],
    seed: int,
    ratio: Fraction | float | str,
    val_ratio: Fraction | float | str = 0,
) -> SplitManifest:
    """Deterministic train/test split by shuffled context ids.

    The split unit is the context, not the paper: the published per-context
    split sizes are exact 4:1 ratios.  ``val_ratio`` > 0 carves a validation
    partition out of what would otherwise be test data.
    """
    ids = sorted(c.context_id if isinstance(c, LocalContext) else c for c in contexts)
    if not ids:
        raise EmptyCorpus("cannot split an empty corpus")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate context ids")
    ratio = Fraction(str(ratio)) if isinstance(ratio, float) else Fraction(ratio)
    val_ratio = Fraction(str(val_ratio)) if isinstance(val_ratio, float) else Fraction(val_ratio)
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0,1), got {ratio}")
    if val_ratio < 0 or ratio + val_ratio >= 1:
        raise ValueError("ratio + val_ratio must stay below 1")

    shuffled = ids[:]
    random.Random(seed).shuffle(shuffled)
    n = len(ids)
    n_train = int(math.floor(n * ratio + Fraction(1, 2)))
    n_val = int(math.floor(n * val_ratio + Fraction(1, 2))) if val_ratio else 0
    train = tuple(sorted(shuffled[:n_train]))
    val = tuple(sorted(shuffled[n_train : n_train + n_val]))
    test = tuple(sorted(shuffled[n_train + n_val :]))
    return SplitManifest(seed=seed, ratio=ratio, train_ids=train, test_ids=test, val_ids=val)


def build_pool(
    contexts: Iterable[LocalContext],
    papers: Iterable[PaperMeta] = (),
    dataset: Dataset | None = None,
) -> CitationPool:
    """Pool of distinct normalized ground-truth keys, linked to paper ids.

    Papers are linked by their derived author-date token, so a pool entry
    knows which paper(s) supply its title/abstract text for retrieval.
    """
    keys: set[NormalizedKey] = set()
    ds = dataset
    for ctx in contexts:
        keys.add(normalize(ctx.ground_truth))
        if ds is None:
            ds = ctx.dataset
    by_key: dict[NormalizedKey, list[str]] = {k: [] for k in keys}
    for paper in papers:
        token = paper.citation_token()
        if token is None:
            continue
        key = normalize(token)
        if key in by_key:
            by_key[key].append(paper.paper_id)
    entries = {k: tuple(sorted(ids)) for k, ids in by_key.items()}
    return CitationPool(dataset=ds or Dataset.CUSTOM, entries=entries)


# ---------------------------------------------------------------------------
# File interfaces

def write_contexts(path: str | Path, contexts: Iterable[LocalContext]) -> int:
    return write_jsonl(path, (c.to_dict() for c in contexts))


def read_contexts(path: str | Path) -> Iterator[LocalContext]:
    for row in read_jsonl(path):
        yield LocalContext.from_dict(row)


def write_papers(path: str | Path, papers: Iterable[PaperMeta]) -> int:
    return write_jsonl(path, (p.to_dict() for p in papers))


def read_papers(path: str | Path) -> Iterator[PaperMeta]:
    for row in read_jsonl(path):
        yield PaperMeta.from_dict(row)


def write_rejects(path: str | Path, rejects: Iterable[Rejection]) -> int:
    return write_jsonl(path, (r.to_dict() for r in rejects))


def save_manifest(path: str | Path, manifest: SplitManifest) -> None:
    write_json(path, manifest.to_dict())


def load_manifest(path: str | Path) -> SplitManifest:
    return SplitManifest.from_dict(read_json(path))


__all__ = [
    "Dataset",
    "LocalContext",
    "PaperMeta",
    "CitationPool",
    "SplitManifest",
    "IngestResult",
    "Rejection",
    "RejectReason",
    "SchemaError",
    "EncodingError",
    "EmptyCorpus",
    "ingest",
    "strip_other_citations",
    "strip_nontarget_citations",
    "repair_citation",
    "split",
    "build_pool",
    "write_contexts",
    "read_contexts",
    "write_papers",
    "read_papers",
    "write_rejects",
    "save_manifest",
    "load_manifest",
    "TARGET_MARKER",
    "OTHER_MARKER",
    "DEFAULT_MASK_TOKEN",
]
