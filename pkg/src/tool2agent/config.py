"""Run configuration: one YAML (or JSON) file, overridable from the command line.

Example::

    catalog_path: data/catalog.json
    benchmark_path: data/benchmark.json
    cache_dir: .cache/embeddings
    output_dir: runs/hash512
    seed: 0
    providers:
      - kind: deterministic_hash
        model_name: hash
        dimension: 512
    retrieval:
      top_k: 5
      fusion: rrf
      rrf_constant: 60
      corpus_scope: joint
    bm25: {k1: 1.2, b: 0.75}
    evaluation:
      methods: [tool_to_agent, agent_only, bm25_joint, bm25_agents]
      ks: [1, 3, 5, 10]
      query_mode: step_wise
      attribution_k: 5

Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .catalog import DEFAULT_TEXT_TEMPLATE, Scope
from .dense import EmbeddingCache, EmbeddingProviderSpec, Embedder, ProviderKind
from .errors import ConfigError
from .evaluation import DEFAULT_KS, DEFAULT_METHODS, METHODS, EvalSettings
from .lexical import DEFAULT_B, DEFAULT_K1
from .retrieval import QueryMode, RetrievalConfig

_TOP_LEVEL = {
    "catalog_path", "benchmark_path", "providers", "retrieval", "cache_dir", "output_dir",
    "seed", "bm25", "evaluation", "index_scopes", "text_template",
}


@dataclass(frozen=True)
class RunConfig:
    catalog_path: Optional[Path] = None
    benchmark_path: Optional[Path] = None
    providers: tuple[EmbeddingProviderSpec, ...] = ()
    retrieval: RetrievalConfig = RetrievalConfig()
    cache_dir: Optional[Path] = None
    output_dir: Path = Path("runs/default")
    seed: int = 0
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    methods: tuple[str, ...] = DEFAULT_METHODS
    ks: tuple[int, ...] = DEFAULT_KS
    query_mode: QueryMode = QueryMode.STEP_WISE
    attribution_k: int = 5
    index_scopes: tuple[Scope, ...] = (Scope.JOINT, Scope.AGENTS_ONLY, Scope.TOOLS_ONLY)
    text_template: str = DEFAULT_TEXT_TEMPLATE
    source: Optional[Path] = field(default=None, compare=False)

    def eval_settings(self) -> EvalSettings:
        return EvalSettings(self.retrieval, self.ks, self.query_mode, self.attribution_k, self.k1, self.b)

    def embedders(self) -> list[Embedder]:
        cache = EmbeddingCache(self.cache_dir)
        return [Embedder(spec, cache) for spec in self.providers]

    def provider(self, name: str | None = None) -> EmbeddingProviderSpec:
        if not self.providers:
            raise ConfigError("no embedding providers configured")
        if name is None:
            return self.providers[0]
        for p in self.providers:
            if p.model_name == name or p.fingerprint == name:
                return p
        raise ConfigError(f"no provider named {name!r}")

    def to_dict(self) -> dict:
        """Canonical form; everything that influences results, nothing that doesn't."""
        return {
            "catalog_path": str(self.catalog_path) if self.catalog_path else None,
            "benchmark_path": str(self.benchmark_path) if self.benchmark_path else None,
            "providers": [_provider_dict(p) for p in self.providers],
            "retrieval": self.retrieval.to_dict(),
            "seed": self.seed,
            "bm25": {"k1": self.k1, "b": self.b},
            "evaluation": {
                "methods": list(self.methods),
                "ks": list(self.ks),
                "query_mode": self.query_mode.value,
                "attribution_k": self.attribution_k,
            },
            "index_scopes": [s.value for s in self.index_scopes],
            "text_template": self.text_template,
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def run_metadata(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "provider_fingerprints": [p.fingerprint for p in self.providers],
            "retrieval": self.retrieval.to_dict(),
            "bm25": {"k1": self.k1, "b": self.b},
            "text_template": self.text_template,
            "text_preprocessing": "none (raw text sent to the embedder for entities and queries)",
        }


def _provider_dict(p: EmbeddingProviderSpec) -> dict:
    d = {
        "kind": p.provider_kind.value, "model_name": p.model_name, "dimension": p.dimension,
        "batch_size": p.batch_size,
    }
    if p.provider_kind is ProviderKind.HTTP_API:
        d.update(endpoint=p.endpoint, credential_env_var=p.credential_env_var)
    else:
        d["seed"] = p.seed
    return d


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return config_from_dict(data, base_dir=path.parent, source=path)


def config_from_dict(data: dict, base_dir=Path("."), source=None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base_dir = Path(base_dir)

    def resolve(p):
        if p is None:
            return None
        p = Path(p).expanduser()
        return p if p.is_absolute() else base_dir / p

    try:
        seed = int(data.get("seed", 0))
        providers = []
        for raw in data.get("providers") or []:
            raw = dict(raw)
            kind = raw.get("kind", raw.get("provider_kind"))
            if kind == ProviderKind.DETERMINISTIC_HASH.value:
                raw.setdefault("seed", seed)
            providers.append(EmbeddingProviderSpec.from_dict(raw))
        retrieval = RetrievalConfig(**(data.get("retrieval") or {}))
        bm25 = data.get("bm25") or {}
        ev = dict(data.get("evaluation") or {})
        methods = tuple(ev.pop("methods", DEFAULT_METHODS))
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; known: {sorted(METHODS)}")
        ks = tuple(int(k) for k in ev.pop("ks", DEFAULT_KS))
        query_mode = QueryMode(ev.pop("query_mode", QueryMode.STEP_WISE.value))
        attribution_k = int(ev.pop("attribution_k", 5))
        if ev:
            raise ConfigError(f"unknown evaluation keys: {sorted(ev)}")
        scopes = tuple(Scope(s) for s in data.get("index_scopes", [s.value for s in Scope]))
        cfg = RunConfig(
            catalog_path=resolve(data.get("catalog_path")),
            benchmark_path=resolve(data.get("benchmark_path")),
            providers=tuple(providers),
            retrieval=retrieval,
            cache_dir=resolve(data.get("cache_dir")),
            output_dir=resolve(data.get("output_dir", "runs/default")),
            seed=seed,
            k1=float(bm25.get("k1", DEFAULT_K1)),
            b=float(bm25.get("b", DEFAULT_B)),
            methods=methods,
            ks=ks,
            query_mode=query_mode,
            attribution_k=attribution_k,
            index_scopes=scopes,
            text_template=data.get("text_template", DEFAULT_TEXT_TEMPLATE),
            source=source,
        )
        cfg.eval_settings()  # validates ks / attribution_k
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return cfg


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply command-line overrides; ``None`` values are ignored."""
    changes = {}
    retrieval_changes = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("top_k", "top_n", "fusion", "rrf_constant", "dense_weight", "corpus_scope"):
            retrieval_changes[key] = value
        elif key in ("catalog_path", "benchmark_path", "cache_dir", "output_dir"):
            changes[key] = Path(value)
        elif key == "seed":
            changes["seed"] = int(value)
            changes["providers"] = tuple(
                replace(p, seed=int(value)) if p.provider_kind is ProviderKind.DETERMINISTIC_HASH else p
                for p in cfg.providers
            )
        else:
            raise ConfigError(f"unknown override {key!r}")
    try:
        if retrieval_changes:
            changes["retrieval"] = cfg.retrieval.replace(**retrieval_changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return replace(cfg, **changes) if changes else cfg
