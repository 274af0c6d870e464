"""Command-line entry point: ``tool2agent {index,query,eval,serve,convert}``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 provider error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bundle import bundle_dir, load_engine, write_bundle
from .catalog import Scope, load_catalog, save_catalog, to_entities
from .config import RunConfig, config_from_dict, load_config, with_overrides
from .convert import convert_annotations, convert_servers
from .dense import EmbeddingCache, Embedder
from .errors import ConfigError, DataError, ProviderError, ScopeMismatch
from .evaluation import (
    benchmark_to_list,
    emit_report,
    load_benchmark,
    render_report,
    run_evaluation,
    write_step_log,
)
from .retrieval import Fusion, QuerySpec, QueryStep, QueryMode, query_result_to_dict, run_query

logger = logging.getLogger("tool2agent")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PROVIDER = 0, 1, 2, 3

DEFAULT_CONFIG = {
    "providers": [{"kind": "deterministic_hash", "model_name": "hash", "dimension": 512}],
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", "-c", help="run config (YAML or JSON)")
    p.add_argument("--catalog", dest="catalog_path")
    p.add_argument("--benchmark", dest="benchmark_path")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--fusion", choices=[f.value for f in Fusion])
    p.add_argument("--scope", dest="corpus_scope", choices=[s.value for s in Scope])
    p.add_argument("--top-n", dest="top_n", type=int)
    p.add_argument("--rrf-constant", dest="rrf_constant", type=float)
    p.add_argument("--dense-weight", dest="dense_weight", type=float)
    p.add_argument("--provider", help="provider model_name or fingerprint (default: first configured)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tool2agent", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and persist lexical + dense indexes")
    _add_common(p)

    p = sub.add_parser("query", help="route a query (or a steps file) to agents")
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", help="direct query text")
    src.add_argument("--steps-file", help="JSON list of step strings or {question_id, steps}")
    p.add_argument("--k", dest="top_k", type=int)
    p.add_argument("--question-id", default="")
    p.add_argument("--explain", action="store_true", help="include supporting entities with kind and score")

    p = sub.add_parser("eval", help="run the benchmark and write reports")
    _add_common(p)

    p = sub.add_parser("serve", help="serve GET /route and /healthz")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    p = sub.add_parser("convert", help="convert LiveMCPBench exports into native schemas")
    conv = p.add_subparsers(dest="what", required=True)
    c = conv.add_parser("catalog")
    c.add_argument("--servers", required=True, help="LiveMCPBench server/tool listing (JSON)")
    c.add_argument("--out", required=True)
    c.add_argument("--include-schema", action="store_true", help="append parameter names to tool descriptions")
    c.add_argument("-v", "--verbose", action="store_true")
    c = conv.add_parser("benchmark")
    c.add_argument("--annotations", required=True, help="LiveMCPBench annotated questions (JSON)")
    c.add_argument("--catalog", required=True, help="native catalog produced by 'convert catalog'")
    c.add_argument("--out", required=True)
    c.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict(DEFAULT_CONFIG)
    overrides = {
        key: getattr(args, key, None)
        for key in ("catalog_path", "benchmark_path", "cache_dir", "output_dir", "seed", "fusion",
                    "corpus_scope", "top_n", "rrf_constant", "dense_weight", "top_k")
    }
    return with_overrides(cfg, **overrides)


def _require(path, what):
    if path is None:
        raise ConfigError(f"{what} is not configured")
    if not Path(path).exists():
        raise ConfigError(f"{what} {path} does not exist")


def _embedder(cfg: RunConfig, name: str | None) -> Embedder | None:
    if cfg.retrieval.fusion is Fusion.LEXICAL_ONLY and not cfg.providers:
        return None
    return Embedder(cfg.provider(name), EmbeddingCache(cfg.cache_dir))


def cmd_index(args) -> int:
    cfg = resolve_config(args)
    _require(cfg.catalog_path, "catalog_path")
    catalog = load_catalog(cfg.catalog_path, cfg.text_template)
    embedders = cfg.embedders()
    manifest = write_bundle(bundle_dir(cfg.output_dir), catalog, cfg.index_scopes, embedders,
                            cfg.k1, cfg.b, cfg.run_metadata())
    counts = {s.value: len(to_entities(catalog, s)) for s in Scope}
    print(f"agents={counts['agents_only']} tools={counts['tools_only']} joint={counts['joint']}")
    for scope, entry in manifest["scopes"].items():
        logger.info("indexed %s: %d entities, providers=%s", scope, entry["entities"], sorted(entry["dense"]))
    return EXIT_OK


def _read_steps(path: str, question_id: str) -> QuerySpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read steps file {path}: {exc}") from exc
    if isinstance(data, dict):
        question_id = data.get("question_id", question_id)
        data = data.get("steps", [])
    steps = []
    for i, s in enumerate(data, start=1):
        if isinstance(s, str):
            steps.append(QueryStep(i, s))
        elif isinstance(s, dict):
            steps.append(QueryStep(int(s.get("step_index", i)), s.get("step_text", s.get("text", ""))))
        else:
            raise DataError(f"unrecognized step entry #{i} in {path}")
    return QuerySpec(QueryMode.STEP_WISE, question_id, "", tuple(steps))


def _engine(cfg: RunConfig, provider: str | None):
    _require(cfg.catalog_path, "catalog_path")
    catalog = load_catalog(cfg.catalog_path, cfg.text_template)
    return load_engine(bundle_dir(cfg.output_dir), catalog, cfg.retrieval, _embedder(cfg, provider))


def cmd_query(args) -> int:
    cfg = resolve_config(args)
    engine = _engine(cfg, args.provider)
    if args.text is not None:
        spec = QuerySpec.direct(args.text, args.question_id)
    else:
        spec = _read_steps(args.steps_file, args.question_id)
    selections = run_query(spec, engine)
    out = query_result_to_dict(spec, selections, explain=args.explain)
    out["run"] = {**cfg.run_metadata(), "index": engine.fingerprints()}
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    _require(cfg.catalog_path, "catalog_path")
    _require(cfg.benchmark_path, "benchmark_path")
    catalog = load_catalog(cfg.catalog_path, cfg.text_template)
    benchmark = load_benchmark(cfg.benchmark_path, catalog)
    embedders = cfg.embedders()
    result = run_evaluation(catalog, benchmark, cfg.methods, embedders, cfg.eval_settings())

    metadata = {
        **cfg.run_metadata(),
        "catalog": {s.value: len(to_entities(catalog, s)) for s in Scope},
        "benchmark": result.stats.to_dict(),
    }
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(result.reports, "json", out / "report.json", metadata)
    emit_report(result.reports, "csv", out / "report.csv", metadata)
    emit_report(result.reports, "markdown_table", out / "report.md", metadata)
    write_step_log(result.step_log, out / "steps.jsonl")
    (out / "run_metadata.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    failed = [r for r in result.reports if r.error]
    for r in failed:
        print(f"warning: {r.method_name} / {r.embedding_model} failed: {r.error}", file=sys.stderr)
    sys.stdout.write(render_report(result.reports, "markdown_table", metadata))
    requests = sum(e.requests for e in embedders)
    logger.info("provider requests this run: %d", requests)
    if failed and len(failed) == len(result.reports):
        return EXIT_PROVIDER if any("Provider" in (r.error or "") or "Credential" in (r.error or "")
                                    for r in failed) else EXIT_DATA
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import make_server

    cfg = resolve_config(args)
    engine = _engine(cfg, args.provider)
    server = make_server(engine, args.host, args.port, cfg.run_metadata())
    print(f"serving on http://{args.host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_convert(args) -> int:
    def read(path):
        try:
            return json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc

    if args.what == "catalog":
        catalog = convert_servers(read(args.servers), include_schema=args.include_schema)
        save_catalog(catalog, args.out)
        print(f"agents={len(catalog.agents)} tools={len(catalog.tools)}")
    else:
        catalog = load_catalog(args.catalog)
        questions = convert_annotations(read(args.annotations), catalog)
        Path(args.out).write_text(json.dumps(benchmark_to_list(questions), indent=2, ensure_ascii=False) + "\n",
                                  encoding="utf-8")
        print(f"questions={len(questions)} steps={sum(len(q.steps) for q in questions)}")
    return EXIT_OK


COMMANDS = {"index": cmd_index, "query": cmd_query, "eval": cmd_eval, "serve": cmd_serve, "convert": cmd_convert}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (DataError, ScopeMismatch) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
