"""Rubric data model, the sectioned text format, and the fixed generic rubric."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

CATEGORIES = (
    "intent",
    "ordering_dataflow",
    "argument_format",
    "type_shape_contract",
    "execution_critical",
    "final_answer",
    "tool_choice",
)

SECTION_HEADERS = {
    "intent": "Intent:",
    "ordering_dataflow": "Ordering/dataflow checks:",
    "argument_format": "Argument/format checks:",
    "type_shape_contract": "Type/shape contract checks:",
    "execution_critical": "Execution-critical checks:",
    "final_answer": "Final-answer checks:",
    "tool_choice": "Tool-choice checks:",
}

ORIGINS = ("sample_dependent", "fixed", "static")


class NoRecognizableSections(Exception):
    pass


@dataclass(frozen=True)
class RubricItem:
    id: str
    category: str
    text: str


@dataclass(frozen=True)
class Rubric:
    items: tuple[RubricItem, ...]
    origin: str
    source_text: str
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def by_category(self, category: str) -> tuple[RubricItem, ...]:
        return tuple(item for item in self.items if item.category == category)


def _normalize_header(line: str) -> str:
    return " ".join(line.split()).lower()


_HEADER_LOOKUP = {_normalize_header(h): cat for cat, h in SECTION_HEADERS.items()}


def parse_rubric_text(text: str, origin: str = "sample_dependent") -> Rubric:
    """Parse the sectioned one-line-per-item rubric format.

    Section headers match case-insensitively with tolerant whitespace. Any
    token before the first '.' on a line is accepted as the item id. Lines
    that fit neither shape become warnings; headers that never appear yield
    empty categories plus a warning.
    """
    if origin not in ORIGINS:
        raise ValueError(f"unknown rubric origin {origin!r}")
    items: list[RubricItem] = []
    warnings: list[str] = []
    seen: set[str] = set()
    current: str | None = None
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        category = _HEADER_LOOKUP.get(_normalize_header(line))
        if category is not None:
            current = category
            seen.add(category)
            continue
        if current is None:
            warnings.append(f"line before any section header ignored: {line!r}")
            continue
        head, dot, rest = line.partition(".")
        item_id = head.strip()
        if not dot or not item_id or " " in item_id:
            warnings.append(f"unrecognized line in {current!r} section: {line!r}")
            continue
        items.append(RubricItem(id=item_id, category=current, text=rest.strip()))
    if not seen:
        raise NoRecognizableSections("no rubric section headers found")
    for category in CATEGORIES:
        if category not in seen:
            warnings.append(f"missing section: {SECTION_HEADERS[category]!r}")
    ordered = tuple(item for cat in CATEGORIES for item in items if item.category == cat)
    return Rubric(items=ordered, origin=origin, source_text=text, warnings=tuple(warnings))


def render_rubric(rubric: Rubric) -> str:
    """Render back to the sectioned format; parse(render(r)) preserves items."""
    lines = []
    for category in CATEGORIES:
        lines.append(SECTION_HEADERS[category])
        for item in rubric.by_category(category):
            lines.append(f"{item.id}. {item.text}")
    return "\n".join(lines) + "\n"


def _fixed_rubric_text() -> str:
    return resources.files("preflight.assets").joinpath("fixed_rubric.txt").read_text(encoding="utf-8")


def fixed_rubric() -> Rubric:
    """The task-independent rubric: one generic item per category.

    Identical (byte-for-byte source text) on every call.
    """
    return parse_rubric_text(_fixed_rubric_text(), origin="fixed")
