"""Joint tool/agent retrieval with owner traversal for routing queries to agents."""

from .catalog import (
    AgentRecord,
    Catalog,
    CatalogEntity,
    Kind,
    Scope,
    ToolRecord,
    entity_text,
    load_catalog,
    owner_of,
    save_catalog,
    to_entities,
)
from .dense import (
    DenseIndex,
    EmbeddingCache,
    EmbeddingProviderSpec,
    EmbeddingVector,
    Embedder,
    ProviderKind,
    build_dense,
    dense_scores,
    embed_batch,
    hash_embed,
)
from .evaluation import (
    BenchmarkQuestion,
    BenchmarkStep,
    EvalSettings,
    MetricReport,
    ap_at_k,
    emit_report,
    load_benchmark,
    ndcg_at_k,
    recall_at_k,
    run_evaluation,
)
from .lexical import LexicalIndex, bm25_scores, build_lexical, tokenize
from .ranking import RankedList, ScoredEntity
from .retrieval import (
    AgentSelection,
    Engine,
    Fusion,
    QueryMode,
    QuerySpec,
    QueryStep,
    RetrievalConfig,
    agent_only_retrieve,
    fuse,
    run_query,
    select_agents,
    top_n,
)

__version__ = "0.1.0"
