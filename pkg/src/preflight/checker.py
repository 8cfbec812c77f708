"""Static contract checker: format, syntax, and call-shape audits.

The checker is deliberately non-semantic. It audits response format, syntax,
and call shapes against documented signatures; it makes no judgment about
tool choice, argument values, ordering, or whether the final answer is right.
A program can be completely wrong and still score 10 here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .actionlang import (
    DoubleStar,
    Keyword,
    NoActionBlock,
    ParseError,
    Positional,
    Program,
    Span,
    Star,
    UnterminatedBlock,
    collect_call_sites,
    find_action_block,
    parse_program,
)
from .registry import ToolSpec

FORMAT_VIOLATION = "FORMAT_VIOLATION"
SYNTAX_ERROR = "SYNTAX_ERROR"
UNKNOWN_TOOL = "UNKNOWN_TOOL"
UNKNOWN_KWARG = "UNKNOWN_KWARG"
POSITIONAL_WHERE_KEYWORD_EXPECTED = "POSITIONAL_WHERE_KEYWORD_EXPECTED"
STAR_EXPANSION_NON_VARIADIC = "STAR_EXPANSION_NON_VARIADIC"
DOUBLESTAR_EXPANSION = "DOUBLESTAR_EXPANSION"
MISSING_REQUIRED_PARAM = "MISSING_REQUIRED_PARAM"
AMBIGUOUS_BINDING = "AMBIGUOUS_BINDING"

# Fixed penalty table; the score is 10 minus the penalty sum, floored at 1.
PENALTIES = {
    FORMAT_VIOLATION: 3,
    SYNTAX_ERROR: 9,
    UNKNOWN_TOOL: 3,
    UNKNOWN_KWARG: 2,
    POSITIONAL_WHERE_KEYWORD_EXPECTED: 2,
    STAR_EXPANSION_NON_VARIADIC: 2,
    DOUBLESTAR_EXPANSION: 2,
    MISSING_REQUIRED_PARAM: 2,
    AMBIGUOUS_BINDING: 1,
}

MAX_SCORE = 10
MIN_SCORE = 1

# Always-valid built-in emitter; not part of any registry.
EMITTER_NAME = "print"


@dataclass(frozen=True)
class CheckFinding:
    code: str
    message: str
    span: Span | None = None

    @property
    def penalty(self) -> int:
        return PENALTIES[self.code]

    def render(self) -> str:
        if self.span is not None:
            return f"{self.code} ({self.span.location()}): {self.message}"
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class StaticReport:
    score: int
    findings: tuple[CheckFinding, ...]

    def render_findings(self) -> str:
        return "\n".join(f.render() for f in self.findings)


def _score(findings: Sequence[CheckFinding]) -> int:
    return max(MIN_SCORE, min(MAX_SCORE, MAX_SCORE - sum(f.penalty for f in findings)))


def check_format(raw: str) -> list[CheckFinding]:
    """Response-format conformance of the Action:/End Action structure."""
    try:
        find_action_block(raw)
    except NoActionBlock:
        return [CheckFinding(FORMAT_VIOLATION, "no 'Action:' block found in the response")]
    except UnterminatedBlock:
        return [CheckFinding(FORMAT_VIOLATION, "'Action:' block is not terminated by 'End Action'")]
    return []


def check_calls(program: Program, registry: Sequence[ToolSpec]) -> list[CheckFinding]:
    """Call-shape conformance for every call site, in source order.

    At most one finding per violated rule per call site.
    """
    by_name = {tool.name: tool for tool in registry}
    findings: list[CheckFinding] = []

    for site in collect_call_sites(program):
        if site.callee == EMITTER_NAME:
            continue
        tool = by_name.get(site.callee)
        if tool is None:
            findings.append(CheckFinding(UNKNOWN_TOOL, f"call to undocumented tool {site.callee!r}", site.span))
            continue

        positional_params = tool.positional_params
        kw_only_params = tool.keyword_only_params
        param_names = {p.name for p in positional_params} | {p.name for p in kw_only_params}
        variadic = tool.variadic_param

        bound: set[str] = set()
        ambiguity: list[str] = []
        unknown_kwargs: list[str] = []
        overflow = 0
        has_star = False
        has_doublestar = False
        seen_keyword = False
        positional_after_keyword = False

        for arg in site.args:
            if isinstance(arg, Positional):
                if seen_keyword:
                    positional_after_keyword = True
                target = next((p.name for p in positional_params if p.name not in bound), None)
                if target is not None:
                    bound.add(target)
                elif variadic is not None:
                    pass  # absorbed by the variadic
                else:
                    overflow += 1
            elif isinstance(arg, Keyword):
                seen_keyword = True
                if arg.name not in param_names:
                    unknown_kwargs.append(arg.name)
                elif arg.name in bound:
                    ambiguity.append(f"parameter {arg.name!r} bound more than once")
                else:
                    bound.add(arg.name)
            elif isinstance(arg, Star):
                has_star = True
            elif isinstance(arg, DoubleStar):
                has_doublestar = True

        if positional_after_keyword:
            ambiguity.insert(0, "positional argument follows keyword argument")
        if ambiguity:
            findings.append(CheckFinding(AMBIGUOUS_BINDING, f"{site.callee}: " + "; ".join(ambiguity), site.span))
        if has_doublestar:
            findings.append(
                CheckFinding(DOUBLESTAR_EXPANSION, f"{site.callee}: keyword expansion (**...) in a tool call", site.span)
            )
        if has_star and variadic is None:
            findings.append(
                CheckFinding(
                    STAR_EXPANSION_NON_VARIADIC,
                    f"{site.callee}: star expansion into a non-variadic signature",
                    site.span,
                )
            )
        if unknown_kwargs:
            findings.append(
                CheckFinding(
                    UNKNOWN_KWARG,
                    f"{site.callee}: unknown keyword argument(s): {', '.join(unknown_kwargs)}",
                    site.span,
                )
            )
        if overflow:
            unbound_kw_only = [p.name for p in kw_only_params if p.name not in bound]
            if unbound_kw_only:
                # surplus positionals were evidently meant for keyword-only params
                for name in unbound_kw_only[:overflow]:
                    bound.add(name)
                findings.append(
                    CheckFinding(
                        POSITIONAL_WHERE_KEYWORD_EXPECTED,
                        f"{site.callee}: positional argument(s) supplied for keyword-only "
                        f"parameter(s): {', '.join(unbound_kw_only[:overflow])}",
                        site.span,
                    )
                )
                overflow -= min(overflow, len(unbound_kw_only))
            if overflow:
                findings.append(
                    CheckFinding(UNKNOWN_KWARG, f"{site.callee}: too many positional arguments", site.span)
                )
        # expansion or a misnamed keyword leaves the intended binding unknowable;
        # flag only the certain violations above
        if not has_star and not has_doublestar and not unknown_kwargs:
            missing = [p.name for p in (*positional_params, *kw_only_params) if p.required and p.name not in bound]
            if missing:
                findings.append(
                    CheckFinding(
                        MISSING_REQUIRED_PARAM,
                        f"{site.callee}: missing required parameter(s): {', '.join(missing)}",
                        site.span,
                    )
                )
    return findings


def static_score(raw: str, registry: Sequence[ToolSpec]) -> StaticReport:
    """Aggregate format, syntax, and call-shape findings into a 1..10 score."""
    findings = check_format(raw)
    if findings:
        return StaticReport(score=_score(findings), findings=tuple(findings))
    block = find_action_block(raw)
    try:
        program = parse_program(block.code)
    except ParseError as exc:
        findings.append(CheckFinding(SYNTAX_ERROR, exc.message, exc.span))
        return StaticReport(score=_score(findings), findings=tuple(findings))
    findings.extend(check_calls(program, registry))
    return StaticReport(score=_score(findings), findings=tuple(findings))
