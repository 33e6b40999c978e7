"""Parsing, normalization, and comparison of parenthetical author-date citations.

The accepted grammar (see docs/grammar.md for the railroad form):

    Citation : Single | Pair | EtAl
    Single   : Surname ", " Year
    Pair     : Surname " and " Surname ", " Year
    EtAl     : Surname " et al., " Year
    Year     : exactly four ASCII digits
    Surname  : letters (diacritics allowed), apostrophes, hyphens, periods,
               internal single spaces; at least one letter; must not embed
               the connective words "and" / "et" / "al"

Anything outside the grammar raises :class:`FormatError`.  Downstream, a
``FormatError`` is exactly what defines the wrong-format hallucination
class, so the parser is deliberately strict: it never guesses.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, replace
from functools import lru_cache

# Apostrophe-like characters seen in the corpora: ASCII, curly quotes,
# modifier letter, backtick, acute accent used as a LaTeX mangle ("Hern'andez").
APOSTROPHES = "'\u2019\u2018\u02bc\u0060\u00b4"

_HYPHENS = "\\-\u2010\u2011"
_LETTER = r"[^\W\d_]"
_SURNAME_CHAR = rf"(?:{_LETTER}|[{APOSTROPHES}{_HYPHENS}. ])"
_SURNAME_RE = re.compile(rf"{_SURNAME_CHAR}+")
_CITATION_RE = re.compile(r"(?s)(?P<authors>.+), (?P<year>\d{4})")
_ET_AL_SUFFIX = " et al."


class FormatError(ValueError):
    """The string does not conform to the author-date citation grammar."""

    def __init__(self, reason: str, text: str = ""):
        super().__init__(f"{reason}: {text!r}" if text else reason)
        self.reason = reason
        self.text = text


@dataclass(frozen=True)
class CitationToken:
    """A parsed parenthetical author-date citation."""

    surnames: tuple[str, ...]
    et_al: bool
    year: int
    raw: str

    def __post_init__(self) -> None:
        n = len(self.surnames)
        if self.et_al and n != 1:
            raise ValueError(f"et-al token must carry exactly the lead surname, got {n}")
        if not self.et_al and n not in (1, 2):
            raise ValueError(f"non-et-al token must carry 1 or 2 surnames, got {n}")
        if not 0 <= self.year <= 9999:
            raise ValueError(f"year out of 4-digit range: {self.year}")


@dataclass(frozen=True, order=True)
class NormalizedKey:
    """Case- and diacritic-insensitive comparison key for a citation token."""

    folded_surnames: tuple[str, ...]
    et_al: bool
    year: int


@dataclass(frozen=True)
class OverlapReport:
    """Name/year agreement between two citation tokens."""

    all_names: bool
    one_name: bool
    year: bool


def _valid_surname(s: str) -> bool:
    if not s or s != s.strip() or "  " in s:
        return False
    if _SURNAME_RE.fullmatch(s) is None:
        return False
    if not any(ch.isalpha() for ch in s):
        return False
    # Connectives inside a surname would make the grammar ambiguous.
    words = {w.rstrip(".").lower() for w in s.split(" ")}
    return words.isdisjoint({"and", "et", "al"})


def parse(s: str) -> CitationToken:
    """Parse a citation string, raising FormatError outside the grammar."""
    if not isinstance(s, str):
        raise FormatError("not a string")
    text = s.strip()
    if not text:
        raise FormatError("empty citation", s)
    m = _CITATION_RE.fullmatch(text)
    if m is None:
        raise FormatError("no ', YYYY' tail", s)
    authors = m.group("authors")
    year = int(m.group("year"))
    if authors.endswith(_ET_AL_SUFFIX):
        lead = authors[: -len(_ET_AL_SUFFIX)]
        if not _valid_surname(lead):
            raise FormatError("invalid et-al lead surname", s)
        return CitationToken((lead,), True, year, s)
    if " and " in authors:
        parts = authors.split(" and ")
        if len(parts) != 2 or not all(_valid_surname(p) for p in parts):
            raise FormatError("invalid author pair", s)
        return CitationToken((parts[0], parts[1]), False, year, s)
    if not _valid_surname(authors):
        raise FormatError("invalid surname", s)
    return CitationToken((authors,), False, year, s)


def try_parse(s: str) -> CitationToken | None:
    """parse() that returns None instead of raising."""
    try:
        return parse(s)
    except FormatError:
        return None


@lru_cache(maxsize=65536)
def cached_try_parse(s: str) -> CitationToken | None:
    """try_parse with memoization; generated top-k lists repeat strings a lot."""
    return try_parse(s)


def format_token(t: CitationToken) -> str:
    """Render a token in the canonical grammar (inverse of parse)."""
    if t.et_al:
        return f"{t.surnames[0]} et al., {t.year:04d}"
    if len(t.surnames) == 2:
        return f"{t.surnames[0]} and {t.surnames[1]}, {t.year:04d}"
    return f"{t.surnames[0]}, {t.year:04d}"


def canonicalize(t: CitationToken) -> CitationToken:
    """Token with raw replaced by its canonical rendering."""
    return replace(t, raw=format_token(t))


def fold_surname(s: str) -> str:
    """Lowercase, strip diacritics and apostrophe variants, collapse spaces.

    Apostrophes are removed outright rather than unified: the corpora carry
    LaTeX-mangled forms like "esc'arcega" for "escárcega", and removal makes
    both fold to the same key.
    """
    for ch in APOSTROPHES:
        s = s.replace(ch, "")
    s = unicodedata.normalize("NFKD", s)
    s = "".join(c for c in s if not unicodedata.combining(c))
    return re.sub(r" +", " ", s.casefold().strip())


def normalize(t: CitationToken) -> NormalizedKey:
    """Deterministic comparison key; equal tokens map to equal keys."""
    return NormalizedKey(tuple(fold_surname(s) for s in t.surnames), t.et_al, t.year)


def overlap(a: CitationToken, b: CitationToken) -> OverlapReport:
    """Name/year agreement used by the hallucination taxonomy.

    all_names needs equal folded surname lists and equal et-al flags;
    one_name is any surname-set intersection short of that (this is what
    lets "X et al., 2008" count as a name overlap with "X, 2006").
    """
    ka, kb = normalize(a), normalize(b)
    all_names = ka.folded_surnames == kb.folded_surnames and ka.et_al == kb.et_al
    one_name = not all_names and bool(set(ka.folded_surnames) & set(kb.folded_surnames))
    return OverlapReport(all_names=all_names, one_name=one_name, year=ka.year == kb.year)
