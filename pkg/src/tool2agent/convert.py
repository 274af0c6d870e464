"""Converters from LiveMCPBench-style exports into the native catalog/benchmark schemas.

The upstream files are not versioned, so both readers accept a few shapes:

servers: a list of server objects, or a mapping ``server name -> server``.
    A server has ``name`` (or ``server_name``, or a single key under
    ``mcpServers``), ``description``, and ``tools``. ``tools`` is a list of
    ``{name, description, inputSchema?}``, a mapping ``tool name -> description
    or object``, or a mapping ``server name -> {"tools": [...]}``.

annotations: a list of question objects with ``id``/``task_id``,
    ``question``/``Question``, and either ``steps`` (strings or objects with
    ``text`` plus optional ``tools``/``agents``/``servers``) or
    ``Annotator Metadata.Steps`` (a numbered multi-line string). Question-level
    tools come from ``tools`` or ``Annotator Metadata.Tools``. Steps without their
    own judgments inherit the question-level agents.
"""

from __future__ import annotations

import logging
import re
from typing import Any

from .catalog import AgentRecord, Catalog, ToolRecord
from .errors import ParseError
from .evaluation import BenchmarkQuestion, BenchmarkStep

logger = logging.getLogger(__name__)

TOOL_SEP = "::"


def _first(d: dict, *keys, default=None):
    for k in keys:
        if k in d and d[k] not in (None, ""):
            return d[k]
    return default


def _server_name(server: dict, fallback: str | None) -> str:
    name = _first(server, "name", "server_name", "id")
    if name is None and isinstance(server.get("mcpServers"), dict) and len(server["mcpServers"]) == 1:
        name = next(iter(server["mcpServers"]))
    if name is None:
        name = fallback
    if not name:
        raise ParseError("server without a name", repr(server)[:80])
    return str(name)


def _tool_items(raw, server_name: str) -> list[dict]:
    if raw is None:
        return []
    if isinstance(raw, dict):
        # {"server": {"tools": [...]}} wrapper
        if len(raw) == 1 and isinstance(next(iter(raw.values())), dict) and "tools" in next(iter(raw.values())):
            return _tool_items(next(iter(raw.values()))["tools"], server_name)
        items = []
        for name, v in raw.items():
            if isinstance(v, str):
                items.append({"name": name, "description": v})
            elif isinstance(v, dict):
                items.append({"name": name, **v})
            else:
                raise ParseError("unrecognized tool entry", f"{server_name}.{name}")
        return items
    if isinstance(raw, list):
        return [t for t in raw if isinstance(t, dict)]
    raise ParseError("unrecognized tools field", server_name)


def _schema_suffix(tool: dict) -> str:
    schema = _first(tool, "inputSchema", "input_schema", "parameters") or {}
    props = schema.get("properties") if isinstance(schema, dict) else None
    if not props:
        return ""
    return " Parameters: " + ", ".join(sorted(props)) + "."


def convert_servers(data: Any, include_schema: bool = False) -> Catalog:
    if isinstance(data, dict) and "servers" in data:
        data = data["servers"]
    if isinstance(data, dict):
        servers = [{"name": k, **v} if isinstance(v, dict) else {"name": k, "description": str(v)}
                   for k, v in data.items()]
    elif isinstance(data, list):
        servers = data
    else:
        raise ParseError("servers file must be a list or an object", "top-level")

    agents, tools = [], []
    for i, server in enumerate(servers):
        if not isinstance(server, dict):
            raise ParseError("server entry must be an object", f"[{i}]")
        name = _server_name(server, None)
        description = str(_first(server, "description", "summary", default="")).strip() or name
        meta = {k: v for k, v in server.items() if k in ("category", "mcpServers", "url")}
        agents.append(AgentRecord(name, name, description, meta))
        for tool in _tool_items(server.get("tools"), name):
            tname = _first(tool, "name", "tool_name")
            if not tname:
                raise ParseError("tool without a name", f"{name}")
            tdesc = str(_first(tool, "description", default="")).strip() or tname
            if include_schema:
                tdesc += _schema_suffix(tool)
            tmeta = {"input_schema": tool["inputSchema"]} if "inputSchema" in tool else {}
            tools.append(ToolRecord(f"{name}{TOOL_SEP}{tname}", tname, tdesc, name, tmeta))
    return Catalog.from_records(agents, tools)


_STEP_PREFIX = re.compile(r"^\s*(?:step\s*)?\d+\s*[.):-]\s*", re.IGNORECASE)


def _split_lines(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = _STEP_PREFIX.sub("", line).strip()
        if line:
            out.append(line)
    return out


class _Resolver:
    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.agent_by_name = {a.name.lower(): a.agent_id for a in catalog.agents}
        self.agent_by_name.update({a.agent_id.lower(): a.agent_id for a in catalog.agents})
        self.tools_by_name: dict[str, list[str]] = {}
        for t in catalog.tools:
            self.tools_by_name.setdefault(t.name.lower(), []).append(t.tool_id)

    def agent(self, ref: str) -> str | None:
        return self.agent_by_name.get(str(ref).strip().lower())

    def tools(self, ref: str) -> list[str]:
        ref = str(ref).strip()
        if ref in self.catalog.tool_ids:
            return [ref]
        for sep in (TOOL_SEP, "/", "."):
            if sep in ref:
                server, _, name = ref.partition(sep)
                agent = self.agent(server)
                if agent is not None:
                    tid = f"{agent}{TOOL_SEP}{name.strip()}"
                    if tid in self.catalog.tool_ids:
                        return [tid]
        return list(self.tools_by_name.get(ref.lower(), []))

    def judgments(self, tool_refs, agent_refs) -> tuple[set[str], set[str]]:
        tools, agents = set(), set()
        for ref in tool_refs:
            found = self.tools(ref)
            if not found:
                logger.warning("unresolved tool reference %r", ref)
            tools.update(found)
        for ref in agent_refs:
            a = self.agent(ref)
            if a is None:
                logger.warning("unresolved agent reference %r", ref)
            else:
                agents.add(a)
        agents.update(self.catalog.owner_map[t] for t in tools if t in self.catalog.owner_map)
        return tools, agents


def _as_list(value) -> list:
    if value is None:
        return []
    if isinstance(value, str):
        return _split_lines(value) if "\n" in value else [v.strip() for v in value.split(",") if v.strip()]
    return list(value)


def convert_annotations(data: Any, catalog: Catalog) -> list[BenchmarkQuestion]:
    if not isinstance(data, list):
        raise ParseError("annotations file must be a list", "top-level")
    resolver = _Resolver(catalog)
    out = []
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise ParseError("annotation entry must be an object", f"[{i}]")
        qid = str(_first(item, "id", "task_id", "question_id", default=i))
        question = _first(item, "question", "Question", "query")
        if not isinstance(question, str):
            raise ParseError("missing question text", f"[{i}] id={qid!r}")
        meta = item.get("Annotator Metadata") or {}
        raw_steps = _first(item, "steps", default=None)
        if raw_steps is None:
            raw_steps = meta.get("Steps")
        if isinstance(raw_steps, str):
            raw_steps = _split_lines(raw_steps)
        if not raw_steps:
            raise ParseError("question has no steps", f"[{i}] id={qid!r}")

        q_tools, q_agents = resolver.judgments(
            _as_list(_first(item, "tools", "relevant_tools", default=meta.get("Tools"))),
            _as_list(_first(item, "agents", "servers", "relevant_agents")),
        )
        steps = []
        for j, s in enumerate(raw_steps, start=1):
            if isinstance(s, str):
                text, tools, agents = s, set(), set()
            elif isinstance(s, dict):
                text = _first(s, "text", "step", "description", "query")
                tools, agents = resolver.judgments(
                    _as_list(_first(s, "tools", "relevant_tools")),
                    _as_list(_first(s, "agents", "servers", "relevant_agents")),
                )
            else:
                raise ParseError("unrecognized step entry", f"[{i}].steps[{j - 1}]")
            if not isinstance(text, str) or not text.strip():
                raise ParseError("step without text", f"[{i}].steps[{j - 1}]")
            if not agents:
                tools, agents = tools or q_tools, q_agents
            steps.append(BenchmarkStep(j, text.strip(), frozenset(agents), frozenset(tools)))
        if any(not s.relevant_agent_ids for s in steps):
            logger.warning("skipping question %s: a step has no resolvable agents", qid)
            continue
        out.append(BenchmarkQuestion(qid, question, tuple(steps)))
    return out
