"""Verifier-side protocol: parse structured scoring responses and enforce caps.

The caps are clamped locally rather than trusted to the scoring model, so the
band invariants hold regardless of model compliance; every adjustment is
recorded in the report's audit trail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .rubric import CATEGORIES

PASS = "PASS"
FAIL = "FAIL"

# Categories whose failures mark a candidate as carrying critical contract
# errors (capping at 7). Intent failures cap harder (4); tool_choice failures
# only block the all-pass promotion to 10.
CRITICAL_CATEGORIES = (
    "ordering_dataflow",
    "argument_format",
    "type_shape_contract",
    "execution_critical",
    "final_answer",
)

MAX_SCORE = 10


class ScoreParseError(Exception):
    pass


@dataclass(frozen=True)
class ItemVerdict:
    item_id: str
    verdict: str
    reason: str = ""


@dataclass(frozen=True)
class ScoreReport:
    score: int
    item_results: dict[str, tuple[ItemVerdict, ...]]
    critical_failures: tuple[str, ...] = ()
    revision_instructions: tuple[str, ...] = ()
    caps_applied: tuple[str, ...] = ()

    def verdicts(self) -> list[tuple[str, ItemVerdict]]:
        return [(cat, v) for cat in CATEGORIES for v in self.item_results.get(cat, ())]

    def fails(self, category: str) -> bool:
        return any(v.verdict == FAIL for v in self.item_results.get(category, ()))

    def all_pass(self) -> bool:
        return all(v.verdict == PASS for _, v in self.verdicts())


def _find_json_object(text: str) -> dict:
    text = text.strip()
    try:
        doc = json.loads(text)
        if isinstance(doc, dict):
            return doc
    except json.JSONDecodeError:
        pass
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        try:
            doc = json.loads(text[start : end + 1])
            if isinstance(doc, dict):
                return doc
        except json.JSONDecodeError:
            pass
    raise ScoreParseError("response does not contain a JSON object")


def _coerce_score(raw: object) -> int:
    if isinstance(raw, bool):
        raise ScoreParseError(f"score must be an integer, got {raw!r}")
    if isinstance(raw, (int, float)):
        value = int(round(raw))
    elif isinstance(raw, str):
        try:
            value = int(round(float(raw.strip())))
        except ValueError as exc:
            raise ScoreParseError(f"score is not numeric: {raw!r}") from exc
    else:
        raise ScoreParseError(f"score must be an integer, got {raw!r}")
    if not 1 <= value <= MAX_SCORE:
        raise ScoreParseError(f"score {value} outside 1..{MAX_SCORE}")
    return value


def _decode_item(raw: object, category: str) -> ItemVerdict:
    if not isinstance(raw, dict):
        raise ScoreParseError(f"item entry in {category!r} is not an object: {raw!r}")
    item_id = raw.get("item", raw.get("item_id", raw.get("id")))
    if not isinstance(item_id, str) or not item_id:
        raise ScoreParseError(f"item entry in {category!r} has no item id")
    verdict = raw.get("verdict", raw.get("result"))
    if not isinstance(verdict, str) or verdict.strip().upper() not in (PASS, FAIL):
        raise ScoreParseError(f"item {item_id!r} has no PASS/FAIL verdict")
    verdict = verdict.strip().upper()
    reason = raw.get("reason", raw.get("justification", ""))
    reason = reason.strip() if isinstance(reason, str) else ""
    if verdict == FAIL and not reason:
        reason = "(no reason given)"
    return ItemVerdict(item_id=item_id, verdict=verdict, reason=reason)


def _string_list(raw: object, name: str) -> tuple[str, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise ScoreParseError(f"{name} must be a list of strings")
    return tuple(raw)


def parse_score_response(text: str) -> ScoreReport:
    """Decode the scoring response object; missing optional lists default empty."""
    doc = _find_json_object(text)
    if "score" not in doc:
        raise ScoreParseError('response has no "score" field')
    score = _coerce_score(doc["score"])
    feedback = doc.get("feedback", {})
    if not isinstance(feedback, dict):
        raise ScoreParseError('"feedback" must be an object')
    raw_items = feedback.get("item_results", {})
    if not isinstance(raw_items, dict):
        raise ScoreParseError('"item_results" must be an object')
    item_results: dict[str, tuple[ItemVerdict, ...]] = {}
    for category in CATEGORIES:
        entries = raw_items.get(category, [])
        if not isinstance(entries, list):
            raise ScoreParseError(f"item_results[{category!r}] must be a list")
        item_results[category] = tuple(_decode_item(e, category) for e in entries)
    return ScoreReport(
        score=score,
        item_results=item_results,
        critical_failures=_string_list(feedback.get("critical_failures"), "critical_failures"),
        revision_instructions=_string_list(feedback.get("revision_instructions"), "revision_instructions"),
    )


def enforce_caps(report: ScoreReport) -> ScoreReport:
    """Apply the score gates deterministically.

    In order: an intent failure caps at 4; otherwise a critical failure (listed
    critical_failures or a FAIL in a critical category) caps at 7; a fully
    passing report with no critical failures is promoted to exactly 10, and 10
    is unreachable otherwise. Idempotent; each actual adjustment is appended
    to caps_applied.
    """
    score = report.score
    caps = list(report.caps_applied)
    if report.fails("intent"):
        if score > 4:
            caps.append(f"intent failure: score capped at 4 (was {score})")
            score = 4
    elif report.critical_failures or any(report.fails(c) for c in CRITICAL_CATEGORIES):
        if score > 7:
            caps.append(f"critical contract failure: score capped at 7 (was {score})")
            score = 7
    if report.all_pass() and not report.critical_failures:
        if score != MAX_SCORE:
            caps.append(f"all items pass with no critical failures: score set to 10 (was {score})")
            score = MAX_SCORE
    elif score == MAX_SCORE:
        caps.append("10 is reserved for fully passing reports: score capped at 9")
        score = MAX_SCORE - 1
    return replace(report, score=score, caps_applied=tuple(caps))


def normalized_confidence(report: ScoreReport) -> float:
    """Capped score divided by the maximum possible score."""
    return report.score / MAX_SCORE


def synthetic_failure_report(reason: str) -> ScoreReport:
    """Stand-in report when the verifier output stays unparseable after a re-ask."""
    return ScoreReport(
        score=1,
        item_results={cat: () for cat in CATEGORIES},
        critical_failures=(reason,),
        revision_instructions=(),
        caps_applied=("synthetic report: verifier output unparseable",),
    )


def render_report_feedback(report: ScoreReport) -> str:
    """Canonical JSON rendering of a report, used as repair-round feedback."""
    payload = {
        "score": report.score,
        "item_results": {
            cat: [
                {"item": v.item_id, "verdict": v.verdict, "reason": v.reason}
                for v in report.item_results.get(cat, ())
            ]
            for cat in CATEGORIES
        },
        "critical_failures": list(report.critical_failures),
        "revision_instructions": list(report.revision_instructions),
        "caps_applied": list(report.caps_applied),
    }
    return json.dumps(payload, indent=2)
