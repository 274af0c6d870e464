"""Tool/agent catalog: records, validation, and the unified entity corpus.

The catalog is a bipartite graph. Agents (MCP servers) own tools; every
ownership edge runs tool -> agent. Both kinds are flattened into
``CatalogEntity`` objects that the indexes search over.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from pathlib import Path
from typing import Any, Mapping, Union

from .errors import ParseError, UnknownEntity, ValidationError

DEFAULT_TEXT_TEMPLATE = "{name}: {description}"


class Kind(str, enum.Enum):
    AGENT = "agent"
    TOOL = "tool"


class Scope(str, enum.Enum):
    JOINT = "joint"
    AGENTS_ONLY = "agents_only"
    TOOLS_ONLY = "tools_only"


@dataclass(frozen=True)
class AgentRecord:
    agent_id: str
    name: str
    description: str
    extra_metadata: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ToolRecord:
    tool_id: str
    name: str
    description: str
    owner_agent_id: str | None = None
    extra_metadata: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class CatalogEntity:
    kind: Kind
    id: str
    indexable_text: str
    owner_agent_id: str | None = None

    @property
    def key(self) -> str:
        """Namespaced identifier, unique across both corpora."""
        return entity_key(self.kind, self.id)


def entity_key(kind: Kind | str, entity_id: str) -> str:
    return f"{Kind(kind).value}/{entity_id}"


def entity_text(record: AgentRecord | ToolRecord, template: str = DEFAULT_TEXT_TEMPLATE) -> str:
    """Text that gets indexed for a record. Metadata is never included."""
    return template.format(name=record.name, description=record.description)


@dataclass(frozen=True)
class Catalog:
    agents: tuple[AgentRecord, ...]
    tools: tuple[ToolRecord, ...]
    owner_map: Mapping[str, str]
    text_template: str = DEFAULT_TEXT_TEMPLATE

    def __post_init__(self):
        _validate(self)

    @classmethod
    def from_records(cls, agents, tools, text_template=DEFAULT_TEXT_TEMPLATE) -> "Catalog":
        agents = tuple(agents)
        tools = tuple(tools)
        owner_map = {t.tool_id: t.owner_agent_id for t in tools if t.owner_agent_id is not None}
        return cls(agents, tools, MappingProxyType(owner_map), text_template)

    @cached_property
    def _agents_by_id(self) -> dict[str, AgentRecord]:
        return {a.agent_id: a for a in self.agents}

    @cached_property
    def _tools_by_id(self) -> dict[str, ToolRecord]:
        return {t.tool_id: t for t in self.tools}

    @property
    def agent_ids(self):
        return self._agents_by_id.keys()

    @property
    def tool_ids(self):
        return self._tools_by_id.keys()

    def agent(self, agent_id: str) -> AgentRecord:
        try:
            return self._agents_by_id[agent_id]
        except KeyError:
            raise UnknownEntity(f"no agent {agent_id!r} in catalog") from None

    def tool(self, tool_id: str) -> ToolRecord:
        try:
            return self._tools_by_id[tool_id]
        except KeyError:
            raise UnknownEntity(f"no tool {tool_id!r} in catalog") from None

    def edges(self) -> list[tuple[str, str]]:
        """Ownership edges as (tool key, agent key) pairs."""
        return [(entity_key(Kind.TOOL, t), entity_key(Kind.AGENT, a)) for t, a in self.owner_map.items()]


def _validate(catalog: Catalog) -> None:
    seen_agents: set[str] = set()
    for a in catalog.agents:
        if not isinstance(a.agent_id, str) or not a.agent_id:
            raise ValidationError("agent id must be a non-empty string", a.agent_id)
        if a.agent_id in seen_agents:
            raise ValidationError("duplicate agent id", a.agent_id)
        seen_agents.add(a.agent_id)
        _check_text(a.agent_id, a.name, a.description)

    seen_tools: set[str] = set()
    for t in catalog.tools:
        if not isinstance(t.tool_id, str) or not t.tool_id:
            raise ValidationError("tool id must be a non-empty string", t.tool_id)
        if t.tool_id in seen_tools:
            raise ValidationError("duplicate tool id", t.tool_id)
        seen_tools.add(t.tool_id)
        _check_text(t.tool_id, t.name, t.description)
        if t.owner_agent_id is not None and t.owner_agent_id not in seen_agents:
            raise ValidationError(f"owner {t.owner_agent_id!r} does not exist", t.tool_id)

    expected = {t.tool_id: t.owner_agent_id for t in catalog.tools if t.owner_agent_id is not None}
    if dict(catalog.owner_map) != expected:
        raise ValidationError("owner_map disagrees with tool owner fields")


def _check_text(record_id, name, description):
    if not isinstance(name, str) or not name.strip():
        raise ValidationError("name is empty", record_id)
    if not isinstance(description, str) or not description.strip():
        raise ValidationError("description is empty", record_id)


def to_entities(catalog: Catalog, scope: Scope | str = Scope.JOINT) -> list[CatalogEntity]:
    """Flatten the catalog into an ordered corpus: agents first, then tools."""
    scope = Scope(scope)
    out: list[CatalogEntity] = []
    if scope in (Scope.JOINT, Scope.AGENTS_ONLY):
        out.extend(
            CatalogEntity(Kind.AGENT, a.agent_id, entity_text(a, catalog.text_template))
            for a in catalog.agents
        )
    if scope in (Scope.JOINT, Scope.TOOLS_ONLY):
        out.extend(
            CatalogEntity(Kind.TOOL, t.tool_id, entity_text(t, catalog.text_template), t.owner_agent_id)
            for t in catalog.tools
        )
    return out


def owner_of(catalog: Catalog, entity: CatalogEntity) -> str | None:
    kind = Kind(entity.kind)
    if kind is Kind.AGENT:
        if entity.id not in catalog.agent_ids:
            raise UnknownEntity(f"no agent {entity.id!r} in catalog")
        return entity.id
    if entity.id not in catalog.tool_ids:
        raise UnknownEntity(f"no tool {entity.id!r} in catalog")
    return catalog.owner_map.get(entity.id)


# --- file format -----------------------------------------------------------

PathLike = Union[str, Path]


def load_catalog(path: PathLike, text_template: str = DEFAULT_TEXT_TEMPLATE) -> Catalog:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read catalog: {exc}", str(path)) from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from exc
    return catalog_from_dict(data, text_template=text_template)


def catalog_from_dict(data: Any, text_template: str = DEFAULT_TEXT_TEMPLATE) -> Catalog:
    if not isinstance(data, dict):
        raise ParseError("catalog must be a JSON object", "top-level")
    agents_raw = data.get("agents")
    tools_raw = data.get("tools", [])
    if not isinstance(agents_raw, list):
        raise ParseError("'agents' must be an array", "agents")
    if not isinstance(tools_raw, list):
        raise ParseError("'tools' must be an array", "tools")

    agents = []
    for i, item in enumerate(agents_raw):
        _require_fields(item, ("id", "name", "description"), f"agents[{i}]")
        agents.append(
            AgentRecord(item["id"], item["name"], item["description"], _metadata(item, f"agents[{i}]"))
        )
    tools = []
    for i, item in enumerate(tools_raw):
        _require_fields(item, ("id", "name", "description"), f"tools[{i}]")
        owner = item.get("owner")
        if owner is not None and not isinstance(owner, str):
            raise ParseError("'owner' must be a string or absent", f"tools[{i}] id={item['id']!r}")
        tools.append(
            ToolRecord(item["id"], item["name"], item["description"], owner, _metadata(item, f"tools[{i}]"))
        )
    return Catalog.from_records(agents, tools, text_template)


def _require_fields(item, names, locus):
    if not isinstance(item, dict):
        raise ParseError("record must be an object", locus)
    for name in names:
        if name not in item:
            raise ParseError(f"missing field {name!r}", f"{locus} id={item.get('id')!r}")
        if not isinstance(item[name], str):
            raise ParseError(f"field {name!r} must be a string", f"{locus} id={item.get('id')!r}")


def _metadata(item, locus):
    meta = item.get("metadata", {})
    if meta is None:
        return {}
    if not isinstance(meta, dict):
        raise ParseError("'metadata' must be an object", locus)
    return meta


def catalog_to_dict(catalog: Catalog) -> dict:
    agents = []
    for a in catalog.agents:
        rec = {"id": a.agent_id, "name": a.name, "description": a.description}
        if a.extra_metadata:
            rec["metadata"] = dict(a.extra_metadata)
        agents.append(rec)
    tools = []
    for t in catalog.tools:
        rec = {"id": t.tool_id, "name": t.name, "description": t.description}
        if t.owner_agent_id is not None:
            rec["owner"] = t.owner_agent_id
        if t.extra_metadata:
            rec["metadata"] = dict(t.extra_metadata)
        tools.append(rec)
    return {"agents": agents, "tools": tools}


def save_catalog(catalog: Catalog, path: PathLike) -> None:
    Path(path).write_text(
        json.dumps(catalog_to_dict(catalog), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
