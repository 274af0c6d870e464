"""On-disk index bundle: lexical + dense indexes per scope and provider."""

from __future__ import annotations

import json
import re
from pathlib import Path

from .catalog import Catalog, Scope, to_entities
from .dense import Embedder, build_dense, load_dense, save_dense
from .errors import IndexFormatError
from .lexical import build_lexical, corpus_id, load_lexical, save_lexical
from .retrieval import Engine, Fusion, RetrievalConfig

BUNDLE_VERSION = 1
MANIFEST = "manifest.json"


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text)


def bundle_dir(output_dir) -> Path:
    return Path(output_dir) / "index"


def write_bundle(directory, catalog: Catalog, scopes, embedders: list[Embedder],
                 k1: float, b: float, metadata: dict | None = None) -> dict:
    """Build and persist every (scope, provider) index; returns the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"version": BUNDLE_VERSION, "metadata": metadata or {}, "scopes": {}}
    for scope in scopes:
        scope = Scope(scope)
        entities = to_entities(catalog, scope)
        if not entities:
            continue
        lexical = build_lexical(entities, k1, b)
        lex_file = f"lexical-{scope.value}.json"
        save_lexical(lexical, directory / lex_file)
        dense_files = {}
        for emb in embedders:
            dense = build_dense(entities, emb)
            name = f"dense-{scope.value}-{_slug(emb.fingerprint)}.npz"
            save_dense(dense, directory / name)
            dense_files[emb.fingerprint] = name
        manifest["scopes"][scope.value] = {
            "corpus_id": lexical.corpus_id,
            "entities": len(entities),
            "lexical": lex_file,
            "dense": dense_files,
        }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise IndexFormatError(f"no index bundle at {directory}; run the index command first")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("version") != BUNDLE_VERSION:
        raise IndexFormatError(f"bundle version {manifest.get('version')!r} != supported {BUNDLE_VERSION}")
    return manifest


def load_engine(directory, catalog: Catalog, config: RetrievalConfig, embedder: Embedder | None) -> Engine:
    directory = Path(directory)
    manifest = read_manifest(directory)
    entry = manifest["scopes"].get(config.corpus_scope.value)
    if entry is None:
        raise IndexFormatError(f"bundle has no index for scope {config.corpus_scope.value!r}")
    if entry["corpus_id"] != corpus_id(to_entities(catalog, config.corpus_scope)):
        raise IndexFormatError("index bundle is stale: catalog changed since indexing")
    lexical = load_lexical(directory / entry["lexical"])
    dense = None
    if config.fusion is not Fusion.LEXICAL_ONLY:
        if embedder is None:
            raise IndexFormatError("dense fusion requested but no embedding provider configured")
        name = entry["dense"].get(embedder.fingerprint)
        if name is None:
            raise IndexFormatError(f"bundle has no dense index for provider {embedder.fingerprint}")
        dense = load_dense(directory / name)
    return Engine(catalog, config, lexical, dense, embedder if dense is not None else None)
