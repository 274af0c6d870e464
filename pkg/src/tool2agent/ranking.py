"""Scored result lists shared by the lexical, dense, and fusion stages."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

from .catalog import CatalogEntity, Kind, entity_key


@dataclass(frozen=True)
class ScoredEntity:
    entity_id: str
    kind: Kind
    score: float
    ordinal: int
    owner_agent_id: Optional[str] = None
    source_ranks: Optional[tuple[Optional[int], Optional[int]]] = None  # (lexical, dense), 1-based

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))

    @classmethod
    def of(cls, entity: CatalogEntity, score: float, ordinal: int, source_ranks=None) -> "ScoredEntity":
        return cls(entity.id, Kind(entity.kind), float(score), ordinal, entity.owner_agent_id, source_ranks)

    @property
    def key(self) -> str:
        return entity_key(self.kind, self.entity_id)

    def to_dict(self) -> dict:
        out = {"id": self.entity_id, "kind": self.kind.value, "score": self.score}
        if self.source_ranks is not None:
            out["lexical_rank"], out["dense_rank"] = self.source_ranks
        return out


class RankedList:
    """Entities ordered by descending score, ties broken by corpus ordinal.

    ``corpus`` fingerprints the entity list the scores were computed over, so
    lists from different corpora cannot be fused by accident.
    """

    __slots__ = ("items", "corpus")

    def __init__(self, items, corpus: str | None = None, check: bool = True):
        self.items = tuple(items)
        self.corpus = corpus
        if check:
            self._check()

    def _check(self):
        seen = set()
        prev = None
        for item in self.items:
            if not math.isfinite(item.score):
                raise ValueError(f"non-finite score for {item.key}")
            if item.key in seen:
                raise ValueError(f"duplicate entity {item.key} in ranked list")
            seen.add(item.key)
            if prev is not None and (item.score, -item.ordinal) > (prev.score, -prev.ordinal):
                raise ValueError(f"ranked list out of order at {item.key}")
            prev = item

    def __iter__(self) -> Iterator[ScoredEntity]:
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __eq__(self, other):
        if not isinstance(other, RankedList):
            return NotImplemented
        return self.items == other.items and self.corpus == other.corpus

    def __repr__(self):
        head = ", ".join(f"{e.key}={e.score:.4g}" for e in self.items[:5])
        more = "" if len(self.items) <= 5 else f", ... (+{len(self.items) - 5})"
        return f"RankedList([{head}{more}])"

    def head(self, n: int) -> "RankedList":
        return RankedList(self.items[:n], self.corpus, check=False)

    def keys(self) -> list[str]:
        return [e.key for e in self.items]


def sort_scored(items) -> list[ScoredEntity]:
    return sorted(items, key=lambda e: (-e.score, e.ordinal))
