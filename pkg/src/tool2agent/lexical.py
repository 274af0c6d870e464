"""Okapi BM25 over an entity corpus."""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .catalog import CatalogEntity, Kind
from .errors import EmptyCorpus, IndexFormatError, ParseError
from .ranking import RankedList, ScoredEntity

LEXICAL_FORMAT = "tool2agent.lexical"
LEXICAL_FORMAT_VERSION = 1

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

# Anything that is not a letter or digit separates tokens. ``[^\W_]`` is the
# unicode-aware "alphanumeric" class (``\w`` minus underscore).
_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def corpus_id(entities) -> str:
    """Fingerprint of an ordered entity corpus; two indexes fuse only if these match."""
    h = hashlib.sha256()
    for e in entities:
        h.update(e.key.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class LexicalIndex:
    entities: tuple[CatalogEntity, ...]
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: tuple[int, ...]
    avg_doc_length: float
    doc_count: int
    k1: float
    b: float

    @property
    def corpus_id(self) -> str:
        return corpus_id(self.entities)

    def idf(self, term: str) -> float:
        n = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.doc_count - n + 0.5) / (n + 0.5))


def build_lexical(entities, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> LexicalIndex:
    entities = tuple(entities)
    if not entities:
        raise EmptyCorpus("cannot build a lexical index over zero entities")
    if not k1 > 0:
        raise ValueError(f"k1 must be positive, got {k1}")
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must lie in [0, 1], got {b}")

    postings: dict[str, list[tuple[int, int]]] = {}
    lengths = []
    for ordinal, entity in enumerate(entities):
        tokens = tokenize(entity.indexable_text)
        lengths.append(len(tokens))
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((ordinal, tf))
    return LexicalIndex(
        entities=entities,
        postings=postings,
        doc_lengths=tuple(lengths),
        avg_doc_length=sum(lengths) / len(lengths),
        doc_count=len(entities),
        k1=float(k1),
        b=float(b),
    )


def bm25_scores(index: LexicalIndex, query: str) -> RankedList:
    """Score every entity sharing at least one term with ``query``.

    Repeated query terms contribute once per occurrence. Entities with no
    matching term are left out of the result.
    """
    scores: dict[int, float] = {}
    k1, b, avgdl = index.k1, index.b, index.avg_doc_length
    for term in tokenize(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for ordinal, tf in plist:
            if avgdl > 0:
                norm = 1.0 - b + b * index.doc_lengths[ordinal] / avgdl
            else:
                norm = 1.0
            scores[ordinal] = scores.get(ordinal, 0.0) + idf * tf * (k1 + 1.0) / (tf + k1 * norm)

    items = [
        ScoredEntity.of(index.entities[o], score, o)
        for o, score in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return RankedList(items, index.corpus_id)


# --- persistence -----------------------------------------------------------

def lexical_to_dict(index: LexicalIndex) -> dict:
    return {
        "format": LEXICAL_FORMAT,
        "version": LEXICAL_FORMAT_VERSION,
        "parameters": {"k1": index.k1, "b": index.b},
        "corpus_id": index.corpus_id,
        "entities": [
            {"kind": e.kind.value, "id": e.id, "text": e.indexable_text, "owner": e.owner_agent_id}
            for e in index.entities
        ],
        "doc_lengths": list(index.doc_lengths),
        "avg_doc_length": index.avg_doc_length,
        "postings": {t: [list(p) for p in plist] for t, plist in sorted(index.postings.items())},
    }


def lexical_from_dict(data: dict) -> LexicalIndex:
    if data.get("format") != LEXICAL_FORMAT:
        raise IndexFormatError(f"not a lexical index file (format={data.get('format')!r})")
    if data.get("version") != LEXICAL_FORMAT_VERSION:
        raise IndexFormatError(
            f"lexical index version {data.get('version')!r} != supported {LEXICAL_FORMAT_VERSION}"
        )
    entities = tuple(
        CatalogEntity(Kind(e["kind"]), e["id"], e["text"], e.get("owner")) for e in data["entities"]
    )
    index = LexicalIndex(
        entities=entities,
        postings={t: [(int(o), int(tf)) for o, tf in plist] for t, plist in data["postings"].items()},
        doc_lengths=tuple(int(n) for n in data["doc_lengths"]),
        avg_doc_length=float(data["avg_doc_length"]),
        doc_count=len(entities),
        k1=float(data["parameters"]["k1"]),
        b=float(data["parameters"]["b"]),
    )
    if index.corpus_id != data.get("corpus_id"):
        raise IndexFormatError("lexical index corpus fingerprint does not match its entity list")
    return index


def save_lexical(index: LexicalIndex, path) -> None:
    Path(path).write_text(json.dumps(lexical_to_dict(index), ensure_ascii=False), encoding="utf-8")


def load_lexical(path) -> LexicalIndex:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read lexical index: {exc}", str(path)) from exc
    return lexical_from_dict(data)
