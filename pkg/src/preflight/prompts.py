"""Prompt templates as versioned assets with group-tagged system blocks.

Asset files interleave directive lines with verbatim block text:

    #[system core]          start a system block tagged core (never removable)
    #[system tool_choice]   start a removable rule-group block
    #[user]                 start the user template

A trailing ``extended`` word on a system directive marks rule blocks this
project maintains beyond the fixed baseline text; it does not affect
assembly. Ablation removes every block whose tag is in the removed set,
uniformly across templates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

TEMPLATE_IDS = ("rubric_gen", "scoring", "repair", "self_refine_critique", "self_rate", "grade_rate")
ABLATION_GROUPS = ("tool_choice", "output_contract", "call_signature", "data_provenance")
PLACEHOLDERS = (
    "instructions",
    "tool_docs",
    "rubric",
    "code",
    "current_candidate",
    "current_feedback",
    "critique",
)

_DIRECTIVE_RE = re.compile(r"^#\[(system|user)(?:\s+([a-z_]+))?(?:\s+(extended))?\]\s*$")
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class UnknownTemplate(Exception):
    pass


class MissingBinding(Exception):
    pass


class UnknownPlaceholder(Exception):
    pass


@dataclass(frozen=True)
class PromptBlock:
    tag: str  # "core" or one of ABLATION_GROUPS
    text: str
    extended: bool = False


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    system_blocks: tuple[PromptBlock, ...]
    user_template: str


@dataclass(frozen=True)
class AblationConfig:
    """Rule groups removed from the system prompts; core is never removable."""

    removed_groups: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "removed_groups", frozenset(self.removed_groups))
        unknown = self.removed_groups - set(ABLATION_GROUPS)
        if unknown:
            raise ValueError(f"unknown ablation group(s): {', '.join(sorted(unknown))}")


def _parse_asset(text: str, template_id: str) -> PromptTemplate:
    blocks: list[PromptBlock] = []
    user_lines: list[str] | None = None
    current: list[str] = []
    current_tag: str | None = None
    current_extended = False

    def flush() -> None:
        nonlocal current
        if current_tag is not None:
            blocks.append(PromptBlock(tag=current_tag, text="\n".join(current) + "\n", extended=current_extended))
        current = []

    lines = text.splitlines()
    in_user = False
    for line in lines:
        m = _DIRECTIVE_RE.match(line)
        if m:
            if in_user:
                raise ValueError(f"{template_id}: directives after #[user] are not allowed")
            flush()
            scope, tag, extended = m.groups()
            if scope == "user":
                in_user = True
                current_tag = None
                user_lines = []
            else:
                if tag is None or (tag != "core" and tag not in ABLATION_GROUPS):
                    raise ValueError(f"{template_id}: bad system block tag {tag!r}")
                current_tag = tag
                current_extended = extended is not None
            continue
        if in_user:
            assert user_lines is not None
            user_lines.append(line)
        elif current_tag is not None:
            current.append(line)
        elif line.strip():
            raise ValueError(f"{template_id}: content before the first directive")
    if not in_user:
        raise ValueError(f"{template_id}: asset has no #[user] section")
    flush()
    return PromptTemplate(id=template_id, system_blocks=tuple(blocks), user_template="\n".join(user_lines or []))


@lru_cache(maxsize=None)
def _load_cached(template_id: str, asset_dir: str | None) -> PromptTemplate:
    if asset_dir is not None:
        text = (Path(asset_dir) / f"{template_id}.txt").read_text(encoding="utf-8")
    else:
        text = resources.files("preflight.assets").joinpath(f"{template_id}.txt").read_text(encoding="utf-8")
    return _parse_asset(text, template_id)


def load_template(template_id: str, asset_dir: str | None = None) -> PromptTemplate:
    if template_id not in TEMPLATE_IDS:
        raise UnknownTemplate(template_id)
    return _load_cached(template_id, asset_dir)


def assemble(
    template_id: str,
    ablation: AblationConfig | None = None,
    asset_dir: str | None = None,
) -> tuple[str, str]:
    """Return (system text, user template) with removed groups' blocks dropped."""
    template = load_template(template_id, asset_dir)
    removed = ablation.removed_groups if ablation is not None else frozenset()
    system = "".join(b.text for b in template.system_blocks if b.tag == "core" or b.tag not in removed)
    return system, template.user_template


def substitute(user_template: str, bindings: Mapping[str, str]) -> str:
    """Single-pass placeholder substitution; bindings are inserted verbatim."""
    for name in _PLACEHOLDER_RE.findall(user_template):
        if name not in PLACEHOLDERS:
            raise UnknownPlaceholder(name)
        if name not in bindings:
            raise MissingBinding(name)

    def repl(match: re.Match) -> str:
        return bindings[match.group(1)]

    return _PLACEHOLDER_RE.sub(repl, user_template)


def task_context(instructions: str, tool_docs: str) -> str:
    """The task-presentation user message shared by every generator call."""
    return (
        "Solve the following task by writing a short program that calls the\n"
        "documented tools and prints the final answer.\n"
        "\n"
        "<task>\n"
        f"{instructions}\n"
        "</task>\n"
        "\n"
        "<available_tools>\n"
        f"{tool_docs}\n"
        "</available_tools>\n"
        "\n"
        "Respond with your reasoning followed by exactly one code block\n"
        "between an 'Action:' line and an 'End Action' line."
    )
