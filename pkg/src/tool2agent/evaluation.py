"""Benchmark loading, ranked-retrieval metrics, evaluation runs, and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .catalog import Catalog, Kind, Scope
from .dense import Embedder
from .errors import DanglingReference, EmptyRelevantSet, ParseError, Tool2AgentError, ValidationError
from .lexical import DEFAULT_B, DEFAULT_K1
from .retrieval import Engine, Fusion, QueryMode, RetrievalConfig, select_agents, top_n

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 3, 5, 10)


# --- metrics ---------------------------------------------------------------

def _check(relevant, k):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not relevant:
        raise EmptyRelevantSet("relevant set is empty")


def _hits(retrieved: Sequence[str], relevant, k: int) -> list[bool]:
    # a repeated id only counts the first time it appears
    seen = set()
    out = []
    for r in list(retrieved)[:k]:
        out.append(r in relevant and r not in seen)
        seen.add(r)
    return out


def recall_at_k(retrieved: Sequence[str], relevant, k: int) -> float:
    relevant = set(relevant)
    _check(relevant, k)
    return sum(_hits(retrieved, relevant, k)) / len(relevant)


def ap_at_k(retrieved: Sequence[str], relevant, k: int) -> float:
    """Average precision at ``k``, normalized by ``min(k, |relevant|)``."""
    relevant = set(relevant)
    _check(relevant, k)
    total = 0.0
    found = 0
    for i, hit in enumerate(_hits(retrieved, relevant, k), start=1):
        if hit:
            found += 1
            total += found / i
    return total / min(k, len(relevant))


def ndcg_at_k(retrieved: Sequence[str], relevant, k: int) -> float:
    relevant = set(relevant)
    _check(relevant, k)
    dcg = sum(1.0 / math.log2(i + 1) for i, hit in enumerate(_hits(retrieved, relevant, k), start=1) if hit)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg


# --- benchmark -------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkStep:
    step_index: int
    step_text: str
    relevant_agent_ids: frozenset[str]
    relevant_tool_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class BenchmarkQuestion:
    question_id: str
    question_text: str
    steps: tuple[BenchmarkStep, ...]

    @property
    def relevant_agent_ids(self) -> frozenset[str]:
        return frozenset().union(*(s.relevant_agent_ids for s in self.steps))

    @property
    def relevant_tool_ids(self) -> frozenset[str]:
        return frozenset().union(*(s.relevant_tool_ids for s in self.steps))


@dataclass(frozen=True)
class BenchmarkStats:
    questions: int
    steps: int
    avg_steps_per_question: float
    avg_relevant_agents_per_question: float
    avg_relevant_tools_per_question: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def benchmark_stats(questions: Sequence[BenchmarkQuestion]) -> BenchmarkStats:
    n = len(questions)
    if n == 0:
        return BenchmarkStats(0, 0, 0.0, 0.0, 0.0)
    steps = sum(len(q.steps) for q in questions)
    return BenchmarkStats(
        questions=n,
        steps=steps,
        avg_steps_per_question=steps / n,
        avg_relevant_agents_per_question=sum(len(q.relevant_agent_ids) for q in questions) / n,
        avg_relevant_tools_per_question=sum(len(q.relevant_tool_ids) for q in questions) / n,
    )


def load_benchmark(path, catalog: Catalog) -> list[BenchmarkQuestion]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read benchmark: {exc}", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from exc
    return benchmark_from_list(data, catalog)


def benchmark_from_list(data, catalog: Catalog) -> list[BenchmarkQuestion]:
    if not isinstance(data, list):
        raise ParseError("benchmark must be a JSON array", "top-level")
    questions = []
    seen = set()
    for qi, item in enumerate(data):
        locus = f"[{qi}]"
        if not isinstance(item, dict) or not isinstance(item.get("id"), str):
            raise ParseError("question needs a string 'id'", locus)
        qid = item["id"]
        if qid in seen:
            raise ValidationError("duplicate question id", qid)
        seen.add(qid)
        if not isinstance(item.get("question"), str):
            raise ParseError("question needs a string 'question'", f"{locus} id={qid!r}")
        raw_steps = item.get("steps")
        if not isinstance(raw_steps, list) or not raw_steps:
            raise ParseError("question needs a non-empty 'steps' array", f"{locus} id={qid!r}")
        steps = []
        for si, s in enumerate(raw_steps):
            slocus = f"{locus}.steps[{si}] id={qid!r}"
            if not isinstance(s, dict):
                raise ParseError("step must be an object", slocus)
            try:
                index = int(s["index"])
                text = s["text"]
                agents = frozenset(s.get("relevant_agents", []))
                tools = frozenset(s.get("relevant_tools", []))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad step record: {exc}", slocus) from exc
            if not isinstance(text, str):
                raise ParseError("step 'text' must be a string", slocus)
            if not agents:
                raise ValidationError(f"step {index} has no relevant agents", qid)
            for a in sorted(agents):
                if a not in catalog.agent_ids:
                    raise DanglingReference(f"step {index}: unknown agent {a!r}", qid)
            for t in sorted(tools):
                if t not in catalog.tool_ids:
                    raise DanglingReference(f"step {index}: unknown tool {t!r}", qid)
            steps.append(BenchmarkStep(index, text, agents, tools))
        steps.sort(key=lambda s: s.step_index)
        if [s.step_index for s in steps] != list(range(1, len(steps) + 1)):
            raise ValidationError("step indexes must be contiguous from 1", qid)
        questions.append(BenchmarkQuestion(qid, item["question"], tuple(steps)))
    return questions


def benchmark_to_list(questions: Iterable[BenchmarkQuestion]) -> list[dict]:
    return [
        {
            "id": q.question_id,
            "question": q.question_text,
            "steps": [
                {
                    "index": s.step_index,
                    "text": s.step_text,
                    "relevant_agents": sorted(s.relevant_agent_ids),
                    "relevant_tools": sorted(s.relevant_tool_ids),
                }
                for s in q.steps
            ],
        }
        for q in questions
    ]


# --- methods ---------------------------------------------------------------

@dataclass(frozen=True)
class Method:
    name: str
    scope: Scope
    fusion: Optional[Fusion]  # None -> use the configured fusion
    label: str

    @property
    def uses_embeddings(self) -> bool:
        return self.fusion is not Fusion.LEXICAL_ONLY


METHODS = {
    m.name: m
    for m in (
        Method("tool_to_agent", Scope.JOINT, None, "Tool-to-Agent Retrieval"),
        Method("agent_only", Scope.AGENTS_ONLY, None, "Agent-only retrieval (MCPZero-style stand-in)"),
        Method("tools_only", Scope.TOOLS_ONLY, None, "Tool-only retrieval"),
        Method("bm25_joint", Scope.JOINT, Fusion.LEXICAL_ONLY, "BM25 (joint corpus)"),
        Method("bm25_agents", Scope.AGENTS_ONLY, Fusion.LEXICAL_ONLY, "BM25 (agent corpus)"),
        Method("dense_joint", Scope.JOINT, Fusion.DENSE_ONLY, "Dense only (joint corpus)"),
    )
}
DEFAULT_METHODS = ("tool_to_agent", "agent_only", "bm25_joint", "bm25_agents")
NO_MODEL = "none"


@dataclass(frozen=True)
class EvalSettings:
    retrieval: RetrievalConfig = RetrievalConfig()
    ks: tuple[int, ...] = DEFAULT_KS
    query_mode: QueryMode = QueryMode.STEP_WISE
    attribution_k: int = 5
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    def __post_init__(self):
        object.__setattr__(self, "ks", tuple(sorted(set(int(k) for k in self.ks))))
        object.__setattr__(self, "query_mode", QueryMode(self.query_mode))
        if not self.ks or self.ks[0] < 1:
            raise ValueError("ks must be a non-empty set of positive integers")
        if self.attribution_k < 1:
            raise ValueError("attribution_k must be >= 1")

    @property
    def walk_k(self) -> int:
        return max(max(self.ks), self.attribution_k)


@dataclass
class MetricReport:
    method_name: str
    embedding_model: str
    per_k: dict[int, dict[str, float]]
    step_count: int
    agent_corpus_share_topk: float
    matched_tools_tracing_to_agents_share: float
    per_question: dict[int, dict[str, float]] = field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "method_name": self.method_name,
            "embedding_model": self.embedding_model,
            "per_k": {str(k): v for k, v in sorted(self.per_k.items())},
            "step_count": self.step_count,
            "agent_corpus_share_topk": self.agent_corpus_share_topk,
            "matched_tools_tracing_to_agents_share": self.matched_tools_tracing_to_agents_share,
            "per_question": {str(k): v for k, v in sorted(self.per_question.items())},
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            method_name=d["method_name"],
            embedding_model=d["embedding_model"],
            per_k={int(k): dict(v) for k, v in d["per_k"].items()},
            step_count=int(d["step_count"]),
            agent_corpus_share_topk=float(d["agent_corpus_share_topk"]),
            matched_tools_tracing_to_agents_share=float(d["matched_tools_tracing_to_agents_share"]),
            per_question={int(k): dict(v) for k, v in d.get("per_question", {}).items()},
            error=d.get("error"),
        )


@dataclass
class EvaluationResult:
    reports: list[MetricReport]
    step_log: list[dict]
    stats: BenchmarkStats


def run_evaluation(
    catalog: Catalog,
    benchmark: Sequence[BenchmarkQuestion],
    methods: Sequence[str] = DEFAULT_METHODS,
    embedders: Sequence[Embedder] = (),
    settings: EvalSettings = EvalSettings(),
) -> EvaluationResult:
    """Evaluate every method (x every embedder, when the method embeds).

    A failure inside one method/model pair is recorded on its report and the
    remaining pairs still run.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; known: {sorted(METHODS)}")
    if any(METHODS[m].uses_embeddings for m in methods) and not embedders:
        raise ValueError("dense methods requested but no embedding providers given")

    reports: list[MetricReport] = []
    log: list[dict] = []
    for name in methods:
        method = METHODS[name]
        for embedder in (embedders if method.uses_embeddings else [None]):
            model = embedder.fingerprint if embedder is not None else NO_MODEL
            try:
                records = _run_method(catalog, benchmark, method, embedder, settings, model)
            except Tool2AgentError as exc:
                logger.error("method %s / %s failed: %s", name, model, exc)
                reports.append(MetricReport(name, model, {}, 0, 0.0, 0.0, {}, f"{type(exc).__name__}: {exc}"))
                continue
            log.extend(records)
            reports.append(report_from_log(records, name, model, settings.ks))
    return EvaluationResult(reports, log, benchmark_stats(benchmark))


def _run_method(catalog, benchmark, method: Method, embedder, settings: EvalSettings, model: str) -> list[dict]:
    base = settings.retrieval
    config = base.replace(
        corpus_scope=method.scope,
        fusion=method.fusion or base.fusion,
        top_k=settings.walk_k,
        top_n=None if base.top_n is None else max(base.top_n, settings.walk_k),
    )
    engine = Engine.build(catalog, config, embedder if method.uses_embeddings else None, settings.k1, settings.b)

    records = []
    for q in benchmark:
        if settings.query_mode is QueryMode.STEP_WISE:
            units = [(s.step_index, s.step_text, s.relevant_agent_ids) for s in q.steps]
        else:
            units = [(0, q.question_text, q.relevant_agent_ids)]
        for step_index, text, relevant in units:
            ranked = top_n(text, engine)
            walk = select_agents(ranked, catalog, settings.walk_k)
            attribution = select_agents(ranked, catalog, settings.attribution_k)
            supporting = [
                {"id": e.entity_id, "kind": e.kind.value, "agent": agent}
                for agent, ents in attribution.supporting_entities.items()
                for e in ents
            ]
            records.append(
                {
                    "question_id": q.question_id,
                    "step_index": step_index,
                    "method": method.name,
                    "model": model,
                    "retrieved_agents": walk.agents,
                    "relevant_agents": sorted(relevant),
                    "supporting_kinds": [s["kind"] for s in supporting],
                    "supporting": supporting,
                }
            )
    return records


def _source_shares(records: Sequence[dict]) -> tuple[float, float]:
    """(share of walked supporting entities from the agent corpus,
    share of walked tools whose owner was also reached through its agent entry)."""
    n_total = n_agent = n_tools = n_tools_traced = 0
    for r in records:
        agents_hit = {s["agent"] for s in r["supporting"] if s["kind"] == Kind.AGENT.value}
        for s in r["supporting"]:
            n_total += 1
            if s["kind"] == Kind.AGENT.value:
                n_agent += 1
            else:
                n_tools += 1
                n_tools_traced += s["agent"] in agents_hit
    return (n_agent / n_total if n_total else 0.0, n_tools_traced / n_tools if n_tools else 0.0)


def report_from_log(records: Sequence[dict], method: str, model: str, ks: Sequence[int]) -> MetricReport:
    """Fold per-step log records into a report (macro-average over steps)."""
    per_k: dict[int, dict[str, float]] = {}
    per_question: dict[int, dict[str, float]] = {}
    for k in ks:
        rows = []
        by_question: dict[str, list[tuple[float, float, float]]] = {}
        for r in records:
            row = (
                recall_at_k(r["retrieved_agents"], r["relevant_agents"], k),
                ap_at_k(r["retrieved_agents"], r["relevant_agents"], k),
                ndcg_at_k(r["retrieved_agents"], r["relevant_agents"], k),
            )
            rows.append(row)
            by_question.setdefault(r["question_id"], []).append(row)
        per_k[k] = _mean_rows(rows)
        per_question[k] = _mean_rows([_mean_tuple(v) for v in by_question.values()])
    agent_share, traced_share = _source_shares(records)
    return MetricReport(method, model, per_k, len(records), agent_share, traced_share, per_question)


def _mean_tuple(rows):
    return tuple(statistics.fmean(col) for col in zip(*rows))


def _mean_rows(rows) -> dict[str, float]:
    if not rows:
        return {"recall": 0.0, "map": 0.0, "ndcg": 0.0}
    recall, ap, ndcg = _mean_tuple(rows)
    return {"recall": recall, "map": ap, "ndcg": ndcg}


def model_summary(reports: Sequence[MetricReport], k: int = 5) -> list[dict]:
    """Mean and population std-dev across embedding models, per method, at ``k``."""
    out = []
    methods = list(dict.fromkeys(r.method_name for r in reports))
    for m in methods:
        rows = [r for r in reports if r.method_name == m and r.error is None and k in r.per_k]
        if not rows:
            continue
        entry = {"method": m, "k": k, "models": len(rows)}
        for metric in ("recall", "map", "ndcg"):
            vals = [r.per_k[k][metric] for r in rows]
            entry[f"{metric}_mean"] = statistics.fmean(vals)
            entry[f"{metric}_std"] = statistics.pstdev(vals)
        out.append(entry)
    return out


# --- report output ---------------------------------------------------------

CSV_COLUMNS = (
    "method", "model", "K", "recall", "map", "ndcg",
    "agent_corpus_share_topk", "matched_tools_tracing_to_agents_share",
)


def render_report(reports: Sequence[MetricReport], fmt: str, metadata: dict | None = None) -> str:
    if not reports:
        raise ValueError("no reports to emit")
    if fmt == "json":
        payload = {"metadata": metadata or {}, "reports": [r.to_dict() for r in reports],
                   "model_summary": model_summary(reports)}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            for k, vals in sorted(r.per_k.items()):
                writer.writerow([
                    r.method_name, r.embedding_model, k,
                    f"{vals['recall']:.6f}", f"{vals['map']:.6f}", f"{vals['ndcg']:.6f}",
                    f"{r.agent_corpus_share_topk:.6f}", f"{r.matched_tools_tracing_to_agents_share:.6f}",
                ])
        return buf.getvalue()
    if fmt == "markdown_table":
        return _markdown(reports, metadata)
    raise ValueError(f"unknown report format {fmt!r}")


def _markdown(reports: Sequence[MetricReport], metadata: dict | None) -> str:
    ks = sorted({k for r in reports for k in r.per_k}) or list(DEFAULT_KS)
    header = (["Approach", "Model"] + [f"Recall@{k}" for k in ks] + [f"mAP@{k}" for k in ks]
              + [f"nDCG@{k}" for k in ks] + ["Agent share", "Traced tools"])
    lines = [
        "| | | " + " | ".join(["Recall"] + [""] * (len(ks) - 1) + ["mAP"] + [""] * (len(ks) - 1)
                              + ["nDCG"] + [""] * (len(ks) - 1)) + " | | |",
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] * len(header)) + "|",
    ]
    for r in reports:
        label = METHODS[r.method_name].label if r.method_name in METHODS else r.method_name
        if r.error:
            lines.append(f"| {label} | {r.embedding_model} | " + " | ".join(["n/a"] * (len(header) - 2)) + " |")
            continue
        cells = [label, r.embedding_model]
        for metric in ("recall", "map", "ndcg"):
            cells += [f"{r.per_k[k][metric]:.2f}" if k in r.per_k else "" for k in ks]
        cells += [f"{r.agent_corpus_share_topk:.2%}", f"{r.matched_tools_tracing_to_agents_share:.2%}"]
        lines.append("| " + " | ".join(cells) + " |")

    models = sorted({r.embedding_model for r in reports if r.embedding_model != NO_MODEL})
    names = {r.method_name for r in reports}
    if len(models) > 1 and {"tool_to_agent", "agent_only"} <= names and 5 in ks:
        lines += ["", "| Model | Recall@5 ours | Recall@5 agent-only | nDCG@5 ours | nDCG@5 agent-only "
                      "| mAP@5 ours | mAP@5 agent-only |", "|---|---|---|---|---|---|---|"]
        by = {(r.method_name, r.embedding_model): r for r in reports if r.error is None}
        for model in models:
            ours, base = by.get(("tool_to_agent", model)), by.get(("agent_only", model))
            if ours is None or base is None:
                continue
            cells = [model]
            for metric in ("recall", "ndcg", "map"):
                cells += [f"{ours.per_k[5][metric]:.2f}", f"{base.per_k[5][metric]:.2f}"]
            lines.append("| " + " | ".join(cells) + " |")
        lines += ["", "| Method | Models | Recall@5 mean (std) | nDCG@5 mean (std) | mAP@5 mean (std) |",
                  "|---|---|---|---|---|"]
        for s in model_summary(reports):
            lines.append(
                f"| {s['method']} | {s['models']} | {s['recall_mean']:.2f} ({s['recall_std']:.2f}) | "
                f"{s['ndcg_mean']:.2f} ({s['ndcg_std']:.2f}) | {s['map_mean']:.2f} ({s['map_std']:.2f}) |"
            )
    return "\n".join(lines) + "\n"


def emit_report(reports: Sequence[MetricReport], fmt: str, path, metadata: dict | None = None) -> Path:
    path = Path(path)
    text = render_report(reports, fmt, metadata)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def load_json_report(path) -> tuple[list[MetricReport], dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [MetricReport.from_dict(d) for d in data["reports"]], data.get("metadata", {})


def write_step_log(records: Iterable[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return path


def read_step_log(path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
