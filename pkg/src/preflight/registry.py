"""Tool registries, task instances, and the task-suite file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterator, Sequence

PARAM_KINDS = ("positional_or_keyword", "keyword_only", "variadic_positional")


class SuiteError(Exception):
    """Base class for task-suite problems."""


class MalformedSuite(SuiteError):
    """The suite document is structurally invalid; carries every problem found."""

    def __init__(self, problems: Sequence[str]):
        self.problems = tuple(problems)
        super().__init__("; ".join(self.problems))


class DuplicateToolName(SuiteError):
    pass


class UnknownImplId(SuiteError):
    pass


@dataclass(frozen=True)
class ParamSpec:
    """One documented parameter of a tool signature."""

    name: str
    kind: str = "positional_or_keyword"
    required: bool = True
    doc: str = ""

    def __post_init__(self) -> None:
        if not self.name.isidentifier():
            raise ValueError(f"parameter name {self.name!r} is not an identifier")
        if self.kind not in PARAM_KINDS:
            raise ValueError(f"unknown parameter kind {self.kind!r}")


@dataclass(frozen=True)
class ToolSpec:
    """A documented tool: name, ordered parameters, doc text, and the id of
    the built-in implementation it dispatches to."""

    name: str
    params: tuple[ParamSpec, ...]
    doc: str = ""
    impl_id: str = ""

    def __post_init__(self) -> None:
        if not self.name.isidentifier():
            raise ValueError(f"tool name {self.name!r} is not an identifier")
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise ValueError(f"tool {self.name!r} has duplicate parameter names")
        variadics = [i for i, p in enumerate(self.params) if p.kind == "variadic_positional"]
        if len(variadics) > 1:
            raise ValueError(f"tool {self.name!r} has more than one variadic parameter")
        if variadics:
            # the variadic must come after every positional-or-keyword param
            after = self.params[variadics[0] + 1 :]
            if any(p.kind == "positional_or_keyword" for p in after):
                raise ValueError(f"tool {self.name!r}: variadic parameter is not last among positionals")
        seen_optional = {"positional_or_keyword": False, "keyword_only": False}
        for p in self.params:
            if p.kind not in seen_optional:
                continue
            if not p.required and not seen_optional[p.kind]:
                seen_optional[p.kind] = True
            elif p.required and seen_optional[p.kind]:
                raise ValueError(f"tool {self.name!r}: required parameter {p.name!r} follows an optional one")

    @property
    def positional_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.kind == "positional_or_keyword")

    @property
    def variadic_param(self) -> ParamSpec | None:
        for p in self.params:
            if p.kind == "variadic_positional":
                return p
        return None

    @property
    def keyword_only_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.kind == "keyword_only")

    @property
    def signature(self) -> str:
        """Rendered signature: positional-or-keyword params bare, a variadic
        with a star prefix, keyword-only params after a star separator."""
        parts = [p.name for p in self.positional_params]
        variadic = self.variadic_param
        if variadic is not None:
            parts.append("*" + variadic.name)
        kw_only = self.keyword_only_params
        if kw_only:
            if variadic is None:
                parts.append("*")
            parts.extend(p.name for p in kw_only)
        return f"{self.name}({', '.join(parts)})"


@dataclass(frozen=True)
class TaskInstance:
    """One task: an instruction, its tool registry, and the exact-match ground truth."""

    id: str
    family: str
    instruction: str
    tools: tuple[ToolSpec, ...]
    ground_truth: str
    max_rounds_default: int = 5

    def __post_init__(self) -> None:
        object.__setattr__(self, "tools", tuple(self.tools))
        if not self.tools:
            raise ValueError(f"task {self.id!r} has an empty tool list")
        if not self.ground_truth:
            raise ValueError(f"task {self.id!r} has an empty ground truth")
        names = [t.name for t in self.tools]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise DuplicateToolName(f"task {self.id!r} declares duplicate tool name(s): {', '.join(dupes)}")

    def tool(self, name: str) -> ToolSpec | None:
        for t in self.tools:
            if t.name == name:
                return t
        return None


@dataclass(frozen=True)
class TaskSuite:
    tasks: tuple[TaskInstance, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        ids = [t.id for t in self.tasks]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise MalformedSuite([f"duplicate task id(s): {', '.join(dupes)}"])

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[TaskInstance]:
        return iter(self.tasks)

    def get(self, task_id: str) -> TaskInstance:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)


def _decode_param(raw: dict, where: str, problems: list[str]) -> ParamSpec | None:
    name = raw.get("name")
    if not isinstance(name, str) or not name.isidentifier():
        problems.append(f"{where}: parameter name missing or not an identifier")
        return None
    kind = raw.get("kind", "positional_or_keyword")
    if kind not in PARAM_KINDS:
        problems.append(f"{where}: unknown parameter kind {kind!r}")
        return None
    return ParamSpec(name=name, kind=kind, required=bool(raw.get("required", True)), doc=str(raw.get("doc", "")))


def _decode_tool(raw: dict, where: str, problems: list[str]) -> ToolSpec | None:
    name = raw.get("name")
    if not isinstance(name, str) or not name.isidentifier():
        problems.append(f"{where}: tool name missing or not an identifier")
        return None
    params: list[ParamSpec] = []
    raw_params = raw.get("params", [])
    if not isinstance(raw_params, list):
        problems.append(f"{where}: tool {name!r} params must be a list")
        return None
    for i, p in enumerate(raw_params):
        if not isinstance(p, dict):
            problems.append(f"{where}: tool {name!r} param {i} is not an object")
            continue
        decoded = _decode_param(p, f"{where}.{name}", problems)
        if decoded is not None:
            params.append(decoded)
    try:
        return ToolSpec(
            name=name,
            params=tuple(params),
            doc=str(raw.get("doc", "")),
            impl_id=str(raw.get("impl_id", name)),
        )
    except ValueError as exc:
        problems.append(f"{where}: {exc}")
        return None


def load_suite(source: bytes | str | IO, known_impl_ids: set[str] | None = None) -> TaskSuite:
    """Load a task suite from UTF-8 JSON.

    Structural problems are aggregated into one MalformedSuite; duplicate tool
    names and unknown impl ids raise their dedicated errors. ``known_impl_ids``
    defaults to the sandbox's built-in implementation library.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedSuite([f"suite is not valid UTF-8: {exc}"]) from exc
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MalformedSuite([f"suite is not valid JSON: {exc}"]) from exc

    if not isinstance(doc, dict) or not isinstance(doc.get("tasks"), list):
        raise MalformedSuite(['suite must be an object with a "tasks" list'])

    if known_impl_ids is None:
        from . import sandbox  # deferred: sandbox imports actionlang, not registry internals

        known_impl_ids = set(sandbox.builtin_library())

    problems: list[str] = []
    tasks: list[TaskInstance] = []
    duplicate_tools: list[str] = []
    unknown_impls: list[str] = []
    for i, raw in enumerate(doc["tasks"]):
        where = f"tasks[{i}]"
        if not isinstance(raw, dict):
            problems.append(f"{where}: not an object")
            continue
        task_id = raw.get("id")
        if not isinstance(task_id, str) or not task_id:
            problems.append(f"{where}: missing task id")
            continue
        raw_tools = raw.get("tools")
        if not isinstance(raw_tools, list) or not raw_tools:
            problems.append(f"{where} ({task_id}): tools must be a non-empty list")
            continue
        tools = [t for t in (_decode_tool(r, where, problems) for r in raw_tools if isinstance(r, dict)) if t]
        if len(tools) != len(raw_tools):
            continue
        names = [t.name for t in tools]
        for n in sorted({n for n in names if names.count(n) > 1}):
            duplicate_tools.append(f"task {task_id!r}: tool name {n!r} declared more than once")
        for t in tools:
            if t.impl_id not in known_impl_ids:
                unknown_impls.append(f"task {task_id!r}: tool {t.name!r} binds unknown impl_id {t.impl_id!r}")
        if duplicate_tools or unknown_impls:
            continue
        ground_truth = raw.get("ground_truth")
        if not isinstance(ground_truth, str) or not ground_truth:
            problems.append(f"{where} ({task_id}): missing ground_truth")
            continue
        try:
            tasks.append(
                TaskInstance(
                    id=task_id,
                    family=str(raw.get("family", "")),
                    instruction=str(raw.get("instruction", "")),
                    tools=tuple(tools),
                    ground_truth=ground_truth,
                    max_rounds_default=int(raw.get("max_rounds_default", 5)),
                )
            )
        except (DuplicateToolName, ValueError) as exc:
            problems.append(f"{where}: {exc}")

    if duplicate_tools:
        raise DuplicateToolName("; ".join(duplicate_tools))
    if unknown_impls:
        raise UnknownImplId("; ".join(unknown_impls))
    if problems:
        raise MalformedSuite(problems)
    return TaskSuite(tasks=tuple(tasks))


def save_suite(suite: TaskSuite) -> str:
    """Serialize a suite back to its JSON document form (load/save round-trips)."""
    doc = {
        "tasks": [
            {
                "id": t.id,
                "family": t.family,
                "instruction": t.instruction,
                "ground_truth": t.ground_truth,
                "max_rounds_default": t.max_rounds_default,
                "tools": [
                    {
                        "name": tool.name,
                        "doc": tool.doc,
                        "impl_id": tool.impl_id,
                        "params": [
                            {"name": p.name, "kind": p.kind, "required": p.required, "doc": p.doc}
                            for p in tool.params
                        ],
                    }
                    for tool in t.tools
                ],
            }
            for t in suite.tasks
        ]
    }
    return json.dumps(doc, indent=2) + "\n"


def render_tool_docs(registry: Sequence[ToolSpec]) -> str:
    """Render the documentation block injected into prompts.

    Pure function of the registry: one entry per tool with its rendered
    signature followed by the doc text indented four spaces.
    """
    blocks = []
    for tool in registry:
        lines = [tool.signature]
        doc = tool.doc.strip()
        if doc:
            lines.extend("    " + line for line in doc.splitlines())
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)
