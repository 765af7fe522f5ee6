"""Referring-phrase tokenization and spatial term extraction."""

import re
from enum import Enum
from typing import FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

from rod_studio.config import SpatialVocabulary
from rod_studio.errors import EmptyPhrase

_TOKEN_RE = re.compile(r"[a-z0-9]+|[,;:.!?]")
_CLAUSE_MARKS = frozenset(",;:.!?")


class BaseKind(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"
    CENTER = "center"

    @property
    def axis(self) -> Optional[str]:
        if self in (BaseKind.LEFT, BaseKind.RIGHT):
            return "horizontal"
        if self in (BaseKind.TOP, BaseKind.BOTTOM):
            return "vertical"
        return None


class SpatialTerm(BaseModel):
    """A base kind, or a composite of one vertical and one horizontal kind.

    Composites are stored vertical-first, so "left top" and "top left" compare
    equal.
    """

    model_config = ConfigDict(frozen=True)

    parts: Tuple[BaseKind, ...]

    @field_validator("parts")
    @classmethod
    def _canonical_parts(cls, parts: Tuple[BaseKind, ...]) -> Tuple[BaseKind, ...]:
        if len(parts) == 1:
            return parts
        if len(parts) != 2:
            raise ValueError("a spatial term has one or two parts")
        axes = sorted(p.axis or "" for p in parts)
        if axes != ["horizontal", "vertical"]:
            raise ValueError(
                f"composite must pair a vertical and a horizontal kind: {parts}"
            )
        if parts[0].axis != "vertical":
            return (parts[1], parts[0])
        return parts

    @classmethod
    def base(cls, kind: BaseKind | str) -> "SpatialTerm":
        return cls(parts=(BaseKind(kind),))

    @classmethod
    def composite(cls, a: BaseKind | str, b: BaseKind | str) -> "SpatialTerm":
        return cls(parts=(BaseKind(a), BaseKind(b)))

    @property
    def is_composite(self) -> bool:
        return len(self.parts) == 2

    @property
    def label(self) -> str:
        return " ".join(p.value for p in self.parts)


class Phrase(BaseModel):
    model_config = ConfigDict(frozen=True)

    raw: str
    tokens: Tuple[str, ...]
    # token indices preceded by clause punctuation
    breaks: FrozenSet[int] = frozenset()


def tokenize(raw: str) -> Phrase:
    """Lowercase and split on anything that is not a letter or digit.

    Clause punctuation (``, ; : . ! ?``) is not a token but is remembered as a
    break, so words on either side of it never form a composite.
    """
    tokens: List[str] = []
    breaks = set()
    for piece in _TOKEN_RE.findall((raw or "").lower()):
        if piece in _CLAUSE_MARKS:
            breaks.add(len(tokens))
        else:
            tokens.append(piece)
    if not tokens:
        raise EmptyPhrase("phrase has no tokens", raw=raw)
    return Phrase(
        raw=raw,
        tokens=tuple(tokens),
        breaks=frozenset(b for b in breaks if 0 < b < len(tokens)),
    )


def _is_orthogonal(a: BaseKind, b: BaseKind) -> bool:
    return a.axis is not None and b.axis is not None and a.axis != b.axis


def extract_spatial_terms(
    phrase: Phrase, vocabulary: Optional[SpatialVocabulary] = None
) -> List[SpatialTerm]:
    """Spatial terms in document order, composites matched before single words."""
    vocab = vocabulary or SpatialVocabulary()
    kinds = [vocab.lookup(t) for t in phrase.tokens]
    terms: List[SpatialTerm] = []
    i = 0
    while i < len(kinds):
        kind = kinds[i]
        if kind is None:
            i += 1
            continue
        nxt = None
        if i + 1 < len(kinds) and i + 1 not in phrase.breaks:
            nxt = kinds[i + 1]
        if nxt is not None and _is_orthogonal(BaseKind(kind), BaseKind(nxt)):
            term = SpatialTerm.composite(kind, nxt)
            i += 2
        else:
            term = SpatialTerm.base(kind)
            i += 1
        if term not in terms:
            terms.append(term)
    return terms


def parse_terms(
    text: str, vocabulary: Optional[SpatialVocabulary] = None
) -> List[SpatialTerm]:
    """Convenience for callers holding raw text, e.g. ``"bottom left"``."""
    return extract_spatial_terms(tokenize(text), vocabulary)
