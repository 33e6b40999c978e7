"""Model-ready masked examples under the Base/Global/ablation input schemes.

A masked example is the text a citation generator sees: the local context
with a single mask token where the citation was, optionally extended with
the citing paper's title and abstract behind separator tokens.  Token
budgets follow the published per-dataset limits; when a Global input runs
over budget the abstract is truncated first, then the title, and never the
context window, because the context dominates recommendation quality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .corpus import Dataset, LocalContext, PaperMeta, Rejection, RejectReason
from .grammar import format_token, normalize
from .jsonl import read_jsonl, write_jsonl

DEFAULT_SEPARATOR = "</s>"
DEFAULT_MASK = "<mask>"

# Published maximum token limits per dataset.
BASE_TOTAL_LIMITS: dict[Dataset, int] = {
    Dataset.ACL200: 400,
    Dataset.PEERREAD: 400,
    Dataset.REFSEER: 200,
    Dataset.ARXIV: 300,
    Dataset.CUSTOM: 400,
}
GLOBAL_TOTAL_LIMIT = 350
GLOBAL_CONTEXT_LIMIT = 100
GLOBAL_SIDE_WINDOW = 50
GLOBAL_ABSTRACT_LIMIT = 200


class Scheme(str, Enum):
    BASE = "base"
    GLOBAL = "global"
    NO_CONTEXT = "no_context"
    NO_TITLE = "no_title"
    NO_ABSTRACT = "no_abstract"
    ALL_INCLUDING = "all_including"

    @classmethod
    def from_string(cls, s: str) -> "Scheme":
        key = s.strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown scheme {s!r}") from None


GLOBAL_FAMILY = {
    Scheme.GLOBAL,
    Scheme.NO_CONTEXT,
    Scheme.NO_TITLE,
    Scheme.NO_ABSTRACT,
    Scheme.ALL_INCLUDING,
}


class MissingMeta(ValueError):
    """A Global-family scheme was asked to build without paper metadata."""


class EmptyContext(ValueError):
    """Base scheme with no context text on either side of the mask."""


class Tokenizer(Protocol):
    def tokenize(self, text: str) -> list[str]: ...
    def detokenize(self, tokens: Sequence[str]) -> str: ...


class WhitespaceTokenizer:
    """Default tokenizer: split on whitespace, join with single spaces."""

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)


class VocabTokenizer:
    """Greedy longest-match subword tokenizer driven by a vocabulary file.

    Used to approximate a pretrained model's token counts without depending
    on it: pieces after the first get a "##" continuation prefix.  Words
    with no matching piece are emitted verbatim so detokenize always
    restores the text up to whitespace normalization.
    """

    def __init__(self, vocab: Iterable[str]):
        self.vocab = {v for v in vocab if v}
        self.max_piece = max((len(v) for v in self.vocab), default=1)

    @classmethod
    def from_file(cls, path: str) -> "VocabTokenizer":
        with open(path, "r", encoding="utf-8") as f:
            return cls(line.strip() for line in f)

    def _split_word(self, word: str) -> list[str]:
        pieces: list[str] = []
        i = 0
        while i < len(word):
            end = min(len(word), i + self.max_piece)
            j = end
            while j > i and word[i:j] not in self.vocab:
                j -= 1
            if j == i:
                return [word]  # unmatched: keep the word whole, lossless
            pieces.append(word[i:j] if not pieces else "##" + word[i:j])
            i = j
        return pieces

    def tokenize(self, text: str) -> list[str]:
        out: list[str] = []
        for word in text.split():
            out.extend(self._split_word(word))
        return out

    def detokenize(self, tokens: Sequence[str]) -> str:
        words: list[str] = []
        for tok in tokens:
            if tok.startswith("##") and words:
                words[-1] += tok[2:]
            else:
                words.append(tok)
        return " ".join(words)


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme
    total_limit: int
    context_limit: int
    side_window: int
    abstract_limit: int
    mask_token: str = DEFAULT_MASK
    separator: str = DEFAULT_SEPARATOR

    def __post_init__(self) -> None:
        if not self.side_window * 2 <= self.context_limit <= self.total_limit:
            raise ValueError(
                f"need side_window*2 <= context_limit <= total_limit, got "
                f"{self.side_window}*2, {self.context_limit}, {self.total_limit}"
            )
        if self.abstract_limit > self.total_limit:
            raise ValueError("abstract_limit exceeds total_limit")

    def to_dict(self) -> dict[str, Any]:
        return {
            "scheme": self.scheme.value,
            "total_limit": self.total_limit,
            "context_limit": self.context_limit,
            "side_window": self.side_window,
            "abstract_limit": self.abstract_limit,
            "mask_token": self.mask_token,
            "separator": self.separator,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SchemeConfig":
        return cls(
            scheme=Scheme.from_string(d["scheme"]),
            total_limit=int(d["total_limit"]),
            context_limit=int(d["context_limit"]),
            side_window=int(d["side_window"]),
            abstract_limit=int(d["abstract_limit"]),
            mask_token=d.get("mask_token", DEFAULT_MASK),
            separator=d.get("separator", DEFAULT_SEPARATOR),
        )


def default_config(scheme: Scheme, dataset: Dataset = Dataset.CUSTOM) -> SchemeConfig:
    """Published per-dataset limits: Base varies per dataset, Global is fixed."""
    if scheme is Scheme.BASE:
        total = BASE_TOTAL_LIMITS[dataset]
        return SchemeConfig(
            scheme=scheme,
            total_limit=total,
            context_limit=total,
            side_window=total // 2,
            abstract_limit=total,
        )
    return SchemeConfig(
        scheme=scheme,
        total_limit=GLOBAL_TOTAL_LIMIT,
        context_limit=GLOBAL_CONTEXT_LIMIT,
        side_window=GLOBAL_SIDE_WINDOW,
        abstract_limit=GLOBAL_ABSTRACT_LIMIT,
    )


@dataclass(frozen=True)
class MaskedExample:
    context_id: str
    input_text: str
    target_text: str
    scheme: Scheme
    token_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "context_id": self.context_id,
            "scheme": self.scheme.value,
            "input_text": self.input_text,
            "target_text": self.target_text,
            "token_count": self.token_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MaskedExample":
        return cls(
            context_id=d["context_id"],
            input_text=d["input_text"],
            target_text=d["target_text"],
            scheme=Scheme.from_string(d["scheme"]),
            token_count=int(d.get("token_count", 0)),
        )


def _context_window(
    ctx: LocalContext, cfg: SchemeConfig, tok: Tokenizer
) -> tuple[list[str], int, int]:
    """Mask-centered token window: the mask counts against context_limit."""
    left = tok.tokenize(ctx.left_text)
    right = tok.tokenize(ctx.right_text)
    left_keep = min(len(left), cfg.side_window)
    right_keep = min(len(right), cfg.side_window, cfg.context_limit - 1 - left_keep)
    window = left[len(left) - left_keep :] + [cfg.mask_token] + right[:right_keep]
    return window, left_keep, right_keep


def build(
    ctx: LocalContext,
    meta: PaperMeta | None,
    cfg: SchemeConfig,
    tok: Tokenizer | None = None,
    cited_meta: PaperMeta | None = None,
) -> MaskedExample:
    """One model-ready input/target pair for a context under a scheme."""
    tok = tok or WhitespaceTokenizer()
    scheme = cfg.scheme
    if scheme in GLOBAL_FAMILY and meta is None:
        raise MissingMeta(f"{scheme.value} scheme needs the citing paper's metadata")
    if scheme is Scheme.ALL_INCLUDING and cited_meta is None:
        raise MissingMeta("all_including scheme needs the cited paper's metadata")

    if scheme is Scheme.NO_CONTEXT:
        window: list[str] = []
    else:
        window, _, _ = _context_window(ctx, cfg, tok)
        if scheme is Scheme.BASE and len(window) == 1:
            raise EmptyContext(f"context {ctx.context_id} has no text on either side")

    segments: list[list[str]] = [window] if window else []
    if scheme is not Scheme.BASE:
        assert meta is not None
        title = tok.tokenize(meta.title)
        abstract = tok.tokenize(meta.abstract)
        budget = cfg.total_limit - len(window)
        wants: list[tuple[list[str], int]] = []
        if scheme in (Scheme.GLOBAL, Scheme.NO_ABSTRACT, Scheme.NO_CONTEXT, Scheme.ALL_INCLUDING):
            wants.append((title, cfg.total_limit))
        if scheme in (Scheme.GLOBAL, Scheme.NO_TITLE, Scheme.NO_CONTEXT, Scheme.ALL_INCLUDING):
            wants.append((abstract, cfg.abstract_limit))
        if scheme is Scheme.ALL_INCLUDING:
            assert cited_meta is not None
            wants.append((tok.tokenize(cited_meta.title), cfg.total_limit))
            wants.append((tok.tokenize(cited_meta.abstract), cfg.abstract_limit))
        n_seps = len(wants) if window else max(len(wants) - 1, 0)
        budget -= n_seps
        for tokens, cap in wants:
            keep = min(len(tokens), cap, max(budget, 0))
            segments.append(tokens[:keep])
            budget -= keep

    pieces: list[str] = []
    for i, seg in enumerate(segments):
        if i > 0:
            pieces.append(cfg.separator)
        pieces.extend(seg)
    input_text = tok.detokenize(pieces)
    expected_masks = 0 if scheme is Scheme.NO_CONTEXT else 1
    if pieces.count(cfg.mask_token) != expected_masks:
        raise ValueError(
            f"context {ctx.context_id} text collides with mask token {cfg.mask_token!r}"
        )
    return MaskedExample(
        context_id=ctx.context_id,
        input_text=input_text,
        target_text=format_token(ctx.ground_truth),
        scheme=scheme,
        token_count=len(pieces),
    )


@dataclass
class BuildResult:
    examples: list[MaskedExample] = field(default_factory=list)
    rejects: list[Rejection] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    def manifest(self) -> dict[str, Any]:
        return dict(self.counts)


def build_dataset(
    contexts: Iterable[LocalContext],
    papers: Mapping[str, PaperMeta] | Iterable[PaperMeta],
    cfg: SchemeConfig,
    tok: Tokenizer | None = None,
    ids: Iterable[str] | None = None,
) -> BuildResult:
    """Apply build() across a corpus, in stable context_id order.

    ``ids`` restricts to one side of a split.  Per-context failures become
    rejects; the counts manifest records totals, truncations, and contexts
    whose mask could not sit centrally (one side ran out of text).
    """
    tok = tok or WhitespaceTokenizer()
    if not isinstance(papers, Mapping):
        papers = {p.paper_id: p for p in papers}
    wanted = set(ids) if ids is not None else None
    selected = sorted(
        (c for c in contexts if wanted is None or c.context_id in wanted),
        key=lambda c: c.context_id,
    )
    by_key: dict[Any, PaperMeta] = {}
    if cfg.scheme is Scheme.ALL_INCLUDING:
        for p in papers.values():
            t = p.citation_token()
            if t is not None:
                by_key.setdefault(normalize(t), p)

    result = BuildResult()
    counts = {"total": 0, "built": 0, "rejected": 0, "truncated": 0, "off_center": 0}
    for ctx in selected:
        counts["total"] += 1
        meta = papers.get(ctx.citing_paper_id) if ctx.citing_paper_id else None
        cited = by_key.get(normalize(ctx.ground_truth))
        try:
            example = build(ctx, meta, cfg, tok, cited_meta=cited)
        except (MissingMeta, EmptyContext) as exc:
            result.rejects.append(
                Rejection(
                    {"context_id": ctx.context_id},
                    RejectReason.SCHEMA_ERROR,
                    detail=str(exc),
                )
            )
            counts["rejected"] += 1
            continue
        if cfg.scheme is not Scheme.NO_CONTEXT:
            window, left_keep, right_keep = _context_window(ctx, cfg, tok)
            n_left = len(tok.tokenize(ctx.left_text))
            n_right = len(tok.tokenize(ctx.right_text))
            if left_keep < n_left or right_keep < n_right:
                counts["truncated"] += 1
            if abs(left_keep - right_keep) > 1:
                counts["off_center"] += 1
        result.examples.append(example)
        counts["built"] += 1
    counts[f"scheme:{cfg.scheme.value}"] = counts["built"]
    result.counts = counts
    return result


def write_examples(path: str, examples: Iterable[MaskedExample]) -> int:
    return write_jsonl(path, (e.to_dict() for e in examples))


def read_examples(path: str):
    for row in read_jsonl(path):
        yield MaskedExample.from_dict(row)
