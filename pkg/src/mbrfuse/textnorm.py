"""Text normalization profiles.

Two families of normalization live here:

* ``iwslt-eval``: lowercase, strip punctuation, collapse whitespace. Both
  references and hypotheses go through this before any metric is computed.
* ``apc`` / ``aeb``: Arabic dialect normalization (digit mapping, an
  orthographic variant table, clitic splitting) followed by the eval steps.

Profiles are ordered lists of step identifiers, so custom pipelines can be
built with :class:`NormProfile` directly.
"""

from __future__ import annotations

import functools
import re
import string
import sys
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

STEP_LOWERCASE = "lowercase"
STEP_STRIP_PUNCT = "strip-punct"
STEP_COMPOUND_SPLIT = "compound-split"
STEP_ORTHO_MAP = "ortho-map"
STEP_NUMERAL_MAP = "numeral-map"
STEP_WHITESPACE = "whitespace-collapse"

KNOWN_STEPS = (
    STEP_LOWERCASE,
    STEP_STRIP_PUNCT,
    STEP_COMPOUND_SPLIT,
    STEP_ORTHO_MAP,
    STEP_NUMERAL_MAP,
    STEP_WHITESPACE,
)

DIALECTS = ("apc", "aeb")

# Eastern Arabic-Indic (U+0660..0669) and Extended Arabic-Indic (U+06F0..06F9).
ARABIC_DIGITS = {0x0660 + d: str(d) for d in range(10)}
ARABIC_DIGITS.update({0x06F0 + d: str(d) for d in range(10)})

DEFAULT_CLITICS = ("و", "ف", "ب", "ل", "ك")
DEFAULT_ARTICLE = "ال"


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class NormProfile:
    name: str
    steps: tuple[str, ...]

    def __post_init__(self):
        unknown = [s for s in self.steps if s not in KNOWN_STEPS]
        if unknown:
            raise NormalizationError(
                f"unknown normalization step(s) {unknown}; valid steps: {', '.join(KNOWN_STEPS)}"
            )
        if not self.steps and self.name != "none":
            raise NormalizationError(f"profile {self.name!r} has no steps")


@dataclass(frozen=True)
class NormalizedText:
    text: str
    profile: str

    def __str__(self):
        return self.text

    def split(self):
        return self.text.split()


# Dialect profiles strip punctuation before splitting clitics: deleting a
# character between a clitic and its host must not create a new split site
# on a second pass.
_DIALECT_STEPS = (
    STEP_NUMERAL_MAP,
    STEP_ORTHO_MAP,
    STEP_LOWERCASE,
    STEP_STRIP_PUNCT,
    STEP_COMPOUND_SPLIT,
    STEP_WHITESPACE,
)

PROFILES = {
    "iwslt-eval": NormProfile("iwslt-eval", (STEP_LOWERCASE, STEP_STRIP_PUNCT, STEP_WHITESPACE)),
    "apc": NormProfile("apc", _DIALECT_STEPS),
    "aeb": NormProfile("aeb", _DIALECT_STEPS),
    "none": NormProfile("none", ()),
}


def get_profile(name: str) -> NormProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise NormalizationError(
            f"unknown profile {name!r}; valid profiles: {', '.join(PROFILES)}"
        ) from None


# ---------------------------------------------------------------------------
# character tables


@functools.lru_cache(maxsize=None)
def _punct_table() -> dict[int, None]:
    table = {ord(c): None for c in string.punctuation}
    for cp in range(sys.maxunicode + 1):
        if unicodedata.category(chr(cp)).startswith("P"):
            table[cp] = None
    return table


@functools.lru_cache(maxsize=None)
def _lower_table() -> dict[int, str]:
    # Per code point, never longer than one character. U+0130 is the only
    # code point whose lowercase mapping expands; its base letter is kept.
    table = {}
    for cp in range(sys.maxunicode + 1):
        c = chr(cp)
        low = c.lower()
        if low != c:
            table[cp] = low[0]
    return table


def punctuation_chars() -> frozenset[str]:
    """The full set of characters removed by the ``strip-punct`` step."""
    return frozenset(chr(cp) for cp in _punct_table())


def lowercase(text: str) -> str:
    # Context-free on purpose (no Greek final-sigma rule) so the step is idempotent.
    return text.translate(_lower_table())


def strip_punct(text: str) -> str:
    return text.translate(_punct_table())


def collapse_whitespace(text: str) -> str:
    return " ".join(text.split())


def map_numerals(text: str) -> str:
    return text.translate(ARABIC_DIGITS)


# ---------------------------------------------------------------------------
# orthographic mapping


def _unescape(field_: str) -> str:
    return re.sub(r"\\u([0-9A-Fa-f]{4})", lambda m: chr(int(m.group(1), 16)), field_)


def parse_mapping(lines: Iterable[str]) -> tuple[tuple[str, str], ...]:
    """Parse a two-column TSV mapping table (pattern, replacement).

    Blank lines and lines starting with ``#`` are skipped. A missing or empty
    second column means the pattern is deleted.
    """
    rules = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) > 2:
            raise NormalizationError(f"mapping line {lineno}: expected 2 tab-separated columns, got {len(cols)}")
        pattern = _unescape(cols[0])
        replacement = _unescape(cols[1]) if len(cols) == 2 else ""
        if not pattern:
            raise NormalizationError(f"mapping line {lineno}: empty pattern")
        rules.append((pattern, replacement))
    return tuple(rules)


def load_mapping(path: str | Path | None = None) -> tuple[tuple[str, str], ...]:
    if path is None:
        text = resources.files("mbrfuse.data").joinpath("arabic_ortho.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_mapping(text.splitlines())


@functools.lru_cache(maxsize=None)
def default_mapping() -> tuple[tuple[str, str], ...]:
    return load_mapping()


def apply_mapping(text: str, mapping: Sequence[tuple[str, str]]) -> str:
    for pattern, replacement in mapping:
        text = text.replace(pattern, replacement)
    return text


# ---------------------------------------------------------------------------
# clitic splitting


def split_clitics(
    text: str,
    clitics: Sequence[str] = DEFAULT_CLITICS,
    article: str = DEFAULT_ARTICLE,
    min_stem: int = 2,
) -> str:
    """Split proclitics off article-bearing tokens.

    A token is split when it is one or more clitics followed by the article
    and a stem of at least ``min_stem`` characters, so ``والكتاب`` becomes
    ``و الكتاب`` while ``كتب`` is left alone. Clitics are matched longest first.
    Tokens are re-joined with single spaces.
    """
    ordered = sorted(clitics, key=len, reverse=True)
    out = []
    for token in text.split():
        pieces = []
        rest = token
        while True:
            for c in ordered:
                if rest.startswith(c) and _is_host(rest[len(c):], ordered, article, min_stem):
                    pieces.append(c)
                    rest = rest[len(c):]
                    break
            else:
                break
        pieces.append(rest)
        out.append(" ".join(pieces))
    return " ".join(out)


def _is_host(rest: str, clitics: Sequence[str], article: str, min_stem: int) -> bool:
    # rest must be (clitic)* article stem, with a stem of min_stem characters
    if rest.startswith(article) and len(rest) - len(article) >= min_stem:
        return True
    for c in clitics:
        if rest.startswith(c) and _is_host(rest[len(c):], clitics, article, min_stem):
            return True
    return False


# ---------------------------------------------------------------------------
# profiles


@dataclass
class Normalizer:
    """Applies profiles with a fixed orthographic table and clitic list."""

    mapping: Sequence[tuple[str, str]] = field(default_factory=default_mapping)
    clitics: Sequence[str] = DEFAULT_CLITICS
    article: str = DEFAULT_ARTICLE

    def step(self, name: str) -> Callable[[str], str]:
        if name == STEP_LOWERCASE:
            return lowercase
        if name == STEP_STRIP_PUNCT:
            return strip_punct
        if name == STEP_WHITESPACE:
            return collapse_whitespace
        if name == STEP_NUMERAL_MAP:
            return map_numerals
        if name == STEP_ORTHO_MAP:
            return lambda t: apply_mapping(t, self.mapping)
        if name == STEP_COMPOUND_SPLIT:
            return lambda t: split_clitics(t, self.clitics, self.article)
        raise NormalizationError(f"unknown normalization step {name!r}; valid steps: {', '.join(KNOWN_STEPS)}")

    def apply(self, text: str, profile: NormProfile | str) -> NormalizedText:
        if isinstance(profile, str):
            profile = get_profile(profile)
        for name in profile.steps:
            text = self.step(name)(text)
        return NormalizedText(text, profile.name)


@functools.lru_cache(maxsize=None)
def _default_normalizer() -> Normalizer:
    return Normalizer()


def apply_profile(text: str, profile: NormProfile | str, normalizer: Normalizer | None = None) -> NormalizedText:
    return (normalizer or _default_normalizer()).apply(text, profile)


def normalize_eval(text: str) -> NormalizedText:
    """Lowercase, drop punctuation, collapse whitespace.

    >>> normalize_eval("Hello, World!").text
    'hello world'
    """
    return apply_profile(text, PROFILES["iwslt-eval"])


def normalize_dialect(text: str, dialect: str, normalizer: Normalizer | None = None) -> NormalizedText:
    if dialect not in DIALECTS:
        raise NormalizationError(f"unknown dialect {dialect!r}; valid choices: {', '.join(DIALECTS)}")
    return apply_profile(text, PROFILES[dialect], normalizer)
