"""Hybrid retrieval over the joint corpus and top-K agent selection.

``select_agents`` walks a fused ranking of tools and agents, maps every tool
to its owning agent, and keeps the first K distinct agents it meets.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .catalog import Catalog, Kind, Scope, to_entities
from .dense import DenseIndex, Embedder, build_dense, dense_scores
from .errors import ScopeMismatch, UnknownEntity, ValidationError
from .lexical import DEFAULT_B, DEFAULT_K1, LexicalIndex, bm25_scores, build_lexical
from .ranking import RankedList, ScoredEntity, sort_scored


class Fusion(str, enum.Enum):
    RRF = "rrf"
    WEIGHTED_SUM = "weighted_sum"
    DENSE_ONLY = "dense_only"
    LEXICAL_ONLY = "lexical_only"


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = 5
    top_n: Optional[int] = None  # None -> max(50, 10 * top_k)
    fusion: Fusion = Fusion.RRF
    rrf_constant: float = 60.0
    dense_weight: float = 0.5
    corpus_scope: Scope = Scope.JOINT

    def __post_init__(self):
        object.__setattr__(self, "fusion", Fusion(self.fusion))
        object.__setattr__(self, "corpus_scope", Scope(self.corpus_scope))
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.top_n is not None and self.top_n < self.top_k:
            raise ValueError(f"top_n ({self.top_n}) must be >= top_k ({self.top_k})")
        if not self.rrf_constant > 0:
            raise ValueError(f"rrf_constant must be positive, got {self.rrf_constant}")
        if not 0.0 <= self.dense_weight <= 1.0:
            raise ValueError(f"dense_weight must lie in [0, 1], got {self.dense_weight}")

    @property
    def effective_top_n(self) -> int:
        return self.top_n if self.top_n is not None else max(50, 10 * self.top_k)

    def replace(self, **changes) -> "RetrievalConfig":
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(changes)
        return RetrievalConfig(**data)

    def to_dict(self) -> dict:
        return {
            "top_k": self.top_k,
            "top_n": self.top_n,
            "effective_top_n": self.effective_top_n,
            "fusion": self.fusion.value,
            "rrf_constant": self.rrf_constant,
            "dense_weight": self.dense_weight,
            "corpus_scope": self.corpus_scope.value,
        }


def fuse(lexical: RankedList, dense: RankedList, config: RetrievalConfig) -> RankedList:
    if lexical.corpus is not None and dense.corpus is not None and lexical.corpus != dense.corpus:
        raise ScopeMismatch(f"lexical corpus {lexical.corpus} != dense corpus {dense.corpus}")
    corpus = lexical.corpus or dense.corpus
    if config.fusion is Fusion.DENSE_ONLY:
        return RankedList(dense.items, corpus, check=False)
    if config.fusion is Fusion.LEXICAL_ONLY:
        return RankedList(lexical.items, corpus, check=False)

    lex_rank = {e.key: r for r, e in enumerate(lexical, start=1)}
    dense_rank = {e.key: r for r, e in enumerate(dense, start=1)}
    proto: dict[str, ScoredEntity] = {}
    for e in (*lexical.items, *dense.items):
        proto.setdefault(e.key, e)

    if config.fusion is Fusion.RRF:
        c = config.rrf_constant
        score = {
            k: (1.0 / (c + lex_rank[k]) if k in lex_rank else 0.0)
            + (1.0 / (c + dense_rank[k]) if k in dense_rank else 0.0)
            for k in proto
        }
    else:
        w = config.dense_weight
        lex_norm = _min_max(lexical)
        dense_norm = _min_max(dense)
        score = {k: w * dense_norm.get(k, 0.0) + (1.0 - w) * lex_norm.get(k, 0.0) for k in proto}

    fused = [
        ScoredEntity(e.entity_id, e.kind, score[k], e.ordinal, e.owner_agent_id, (lex_rank.get(k), dense_rank.get(k)))
        for k, e in proto.items()
    ]
    return RankedList(sort_scored(fused), corpus, check=False)


def _min_max(ranked: RankedList) -> dict[str, float]:
    if not ranked.items:
        return {}
    scores = [e.score for e in ranked]
    lo, hi = min(scores), max(scores)
    if hi == lo:
        # a constant list carries no ordering signal; every member counts as top
        return {e.key: 1.0 for e in ranked}
    return {e.key: (e.score - lo) / (hi - lo) for e in ranked}


@dataclass(frozen=True, eq=False)
class Engine:
    """Catalog plus the indexes for one corpus scope. Immutable once built."""

    catalog: Catalog
    config: RetrievalConfig
    lexical: LexicalIndex
    dense: Optional[DenseIndex] = None
    embedder: Optional[Embedder] = None

    def __post_init__(self):
        if self.config.fusion is not Fusion.LEXICAL_ONLY and (self.dense is None or self.embedder is None):
            raise ValueError(f"fusion {self.config.fusion.value} needs a dense index and an embedder")
        if self.dense is not None and self.dense.corpus_id != self.lexical.corpus_id:
            raise ScopeMismatch("lexical and dense indexes cover different corpora")
        if self.dense is not None and self.embedder is not None:
            if self.dense.provider_fingerprint != self.embedder.fingerprint:
                raise ValueError(
                    f"dense index built with {self.dense.provider_fingerprint}, "
                    f"embedder is {self.embedder.fingerprint}"
                )

    @classmethod
    def build(cls, catalog: Catalog, config: RetrievalConfig, embedder: Embedder | None = None,
              k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> "Engine":
        entities = to_entities(catalog, config.corpus_scope)
        lexical = build_lexical(entities, k1, b)
        dense = build_dense(entities, embedder) if embedder is not None else None
        return cls(catalog, config, lexical, dense, embedder)

    def with_config(self, config: RetrievalConfig) -> "Engine":
        if config.corpus_scope is not self.config.corpus_scope:
            raise ScopeMismatch("cannot change corpus scope without re-indexing")
        return Engine(self.catalog, config, self.lexical, self.dense, self.embedder)

    def fingerprints(self) -> dict:
        return {
            "corpus_scope": self.config.corpus_scope.value,
            "corpus_id": self.lexical.corpus_id,
            "entities": self.lexical.doc_count,
            "provider_fingerprint": self.dense.provider_fingerprint if self.dense is not None else None,
            "bm25": {"k1": self.lexical.k1, "b": self.lexical.b},
            "retrieval": self.config.to_dict(),
        }


def rank(query_text: str, engine: Engine, config: RetrievalConfig | None = None) -> RankedList:
    """Full fused ranking (no truncation)."""
    config = config or engine.config
    lexical = bm25_scores(engine.lexical, query_text)
    if config.fusion is Fusion.LEXICAL_ONLY:
        dense = RankedList((), engine.lexical.corpus_id, check=False)
    else:
        dense = dense_scores(engine.dense, engine.embedder.embed(query_text))
    return fuse(lexical, dense, config)


def top_n(query_text: str, engine: Engine, config: RetrievalConfig | None = None) -> RankedList:
    config = config or engine.config
    return rank(query_text, engine, config).head(config.effective_top_n)


@dataclass
class AgentSelection:
    agents: list[str]
    supporting_entities: dict[str, list[ScoredEntity]] = field(default_factory=dict)
    exhausted_list: bool = False

    def to_dict(self, explain: bool = False) -> dict:
        if explain:
            supporting = {
                a: [{**e.to_dict(), "owner": a} for e in ents] for a, ents in self.supporting_entities.items()
            }
        else:
            supporting = {a: [e.key for e in ents] for a, ents in self.supporting_entities.items()}
        return {"agents": list(self.agents), "supporting": supporting, "exhausted": self.exhausted_list}


def select_agents(ranked: Iterable[ScoredEntity], catalog: Catalog, k: int) -> AgentSelection:
    """Walk ``ranked`` in order and collect the first ``k`` distinct owning agents.

    Agents map to themselves, owned tools to their owner; ownerless tools are
    skipped. ``exhausted_list`` is set when the walk runs off the end of
    ``ranked`` with fewer than ``k`` agents.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    items = list(ranked)
    agents: list[str] = []
    supporting: dict[str, list[ScoredEntity]] = {}
    i = 0
    while len(agents) < k and i < len(items):
        e = items[i]
        i += 1
        if e.kind is Kind.AGENT:
            if e.entity_id not in catalog.agent_ids:
                raise UnknownEntity(f"ranked agent {e.entity_id!r} is not in the catalog")
            a = e.entity_id
        else:
            if e.entity_id not in catalog.tool_ids:
                raise UnknownEntity(f"ranked tool {e.entity_id!r} is not in the catalog")
            a = catalog.owner_map.get(e.entity_id)
            if a is None:
                continue
        if a not in supporting:
            agents.append(a)
            supporting[a] = []
        supporting[a].append(e)
    return AgentSelection(agents, supporting, exhausted_list=len(agents) < k)


class QueryMode(str, enum.Enum):
    DIRECT = "direct"
    STEP_WISE = "step_wise"


@dataclass(frozen=True)
class QueryStep:
    step_index: int
    step_text: str


@dataclass(frozen=True)
class QuerySpec:
    mode: QueryMode
    question_id: str = ""
    direct_text: str = ""
    steps: tuple[QueryStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", QueryMode(self.mode))
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.mode is QueryMode.DIRECT:
            if self.steps:
                raise ValidationError("direct queries carry no steps", self.question_id)
        else:
            if not self.steps:
                raise ValidationError("step-wise query has no steps", self.question_id)
            indexes = [s.step_index for s in self.steps]
            if sorted(indexes) != list(range(1, len(indexes) + 1)):
                raise ValidationError(f"step indexes must be contiguous from 1, got {indexes}", self.question_id)

    @classmethod
    def direct(cls, text: str, question_id: str = "") -> "QuerySpec":
        return cls(QueryMode.DIRECT, question_id, text)

    @classmethod
    def step_wise(cls, texts, question_id: str = "") -> "QuerySpec":
        return cls(QueryMode.STEP_WISE, question_id, "", tuple(QueryStep(i, t) for i, t in enumerate(texts, 1)))


def run_query(query: QuerySpec, engine: Engine, k: int | None = None) -> list[AgentSelection]:
    """One selection for a direct query, or one per step (independently) for step-wise."""
    config = engine.config if k is None else engine.config.replace(top_k=_clamp_k(engine.config, k))
    if query.mode is QueryMode.DIRECT:
        texts = [query.direct_text]
    else:
        texts = [s.step_text for s in sorted(query.steps, key=lambda s: s.step_index)]
    return [select_agents(top_n(t, engine, config), engine.catalog, config.top_k) for t in texts]


def _clamp_k(config: RetrievalConfig, k: int) -> int:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if config.top_n is not None and k > config.top_n:
        raise ValueError(f"k={k} exceeds configured top_n={config.top_n}")
    return k


def agent_only_retrieve(query_text: str, engine: Engine, k: int) -> AgentSelection:
    if engine.config.corpus_scope is not Scope.AGENTS_ONLY:
        raise ScopeMismatch("agent-only retrieval needs an engine built over the agents_only scope")
    config = engine.config.replace(top_k=_clamp_k(engine.config, k))
    return select_agents(top_n(query_text, engine, config), engine.catalog, k)


def query_result_to_dict(query: QuerySpec, selections: list[AgentSelection], explain: bool = False) -> dict:
    if query.mode is QueryMode.DIRECT:
        indexes = [0]
    else:
        indexes = [s.step_index for s in sorted(query.steps, key=lambda s: s.step_index)]
    return {
        "question_id": query.question_id,
        "mode": query.mode.value,
        "steps": [{"step_index": i, **sel.to_dict(explain)} for i, sel in zip(indexes, selections)],
    }
