import itertools
import json

import pytest

from preflight.rubric import CATEGORIES
from preflight.verify import (
    ItemVerdict,
    ScoreParseError,
    ScoreReport,
    enforce_caps,
    normalized_confidence,
    parse_score_response,
    render_report_feedback,
    synthetic_failure_report,
)

from .conftest import scoring_response


def test_parse_b2_shape_with_intent_failures():
    text = scoring_response(
        5,
        fail_categories={"intent": [("A", "wrong first call"), ("B", "missing decode step")]},
        critical_failures=["ordering broken"],
        revision_instructions=["swap the two calls"],
    )
    report = parse_score_response(text)
    assert report.score == 5
    assert [v.verdict for v in report.item_results["intent"]] == ["PASS", "FAIL", "FAIL"]
    assert report.critical_failures == ("ordering broken",)
    assert report.revision_instructions == ("swap the two calls",)


def test_parse_all_pass():
    report = parse_score_response(scoring_response(10))
    assert report.score == 10
    assert report.critical_failures == ()
    assert report.all_pass()


def test_parse_tolerates_surrounding_prose():
    text = "Here is my verdict:\n" + scoring_response(7) + "\nDone."
    assert parse_score_response(text).score == 7


def test_parse_missing_score_fails():
    with pytest.raises(ScoreParseError):
        parse_score_response('{"grade": "A"}')


@pytest.mark.parametrize("raw", ["0", "11", "-3"])
def test_parse_out_of_range_score_fails(raw):
    with pytest.raises(ScoreParseError):
        parse_score_response('{"score": %s}' % raw)


def test_parse_score_coercion():
    assert parse_score_response('{"score": "7"}').score == 7
    assert parse_score_response('{"score": 7.0}').score == 7


def test_parse_not_json_fails():
    with pytest.raises(ScoreParseError):
        parse_score_response("no json here")


def test_parse_fail_without_reason_gets_placeholder():
    doc = {"score": 4, "feedback": {"item_results": {"intent": [{"item": "A", "verdict": "FAIL"}]}}}
    report = parse_score_response(json.dumps(doc))
    assert report.item_results["intent"][0].reason == "(no reason given)"


def _report(score, verdicts, critical=()):
    """verdicts: map category -> list of PASS/FAIL strings."""
    item_results = {
        category: tuple(
            ItemVerdict(item_id=f"{category}{i}", verdict=v, reason="r" if v == "FAIL" else "")
            for i, v in enumerate(verdicts.get(category, ()))
        )
        for category in CATEGORIES
    }
    return ScoreReport(score=score, item_results=item_results, critical_failures=tuple(critical))


def test_cap_all_pass_promotes_to_ten():
    capped = enforce_caps(_report(8, {c: ["PASS"] for c in CATEGORIES}))
    assert capped.score == 10
    assert capped.caps_applied


def test_cap_critical_failures_cap_at_seven():
    capped = enforce_caps(_report(9, {c: ["PASS"] for c in CATEGORIES}, critical=["stale session"]))
    assert capped.score == 7


def test_cap_intent_failure_caps_at_four():
    verdicts = {c: ["PASS"] for c in CATEGORIES}
    verdicts["intent"] = ["FAIL"]
    capped = enforce_caps(_report(6, verdicts))
    assert capped.score == 4


def test_cap_tool_choice_failure_blocks_ten_but_no_cap():
    verdicts = {c: ["PASS"] for c in CATEGORIES}
    verdicts["tool_choice"] = ["FAIL"]
    capped = enforce_caps(_report(9, verdicts))
    assert capped.score == 9


def test_cap_low_score_is_not_raised_by_cap_rules():
    verdicts = {c: ["PASS"] for c in CATEGORIES}
    verdicts["ordering_dataflow"] = ["FAIL"]
    capped = enforce_caps(_report(3, verdicts))
    assert capped.score == 3
    assert capped.caps_applied == ()


def test_caps_idempotent():
    for fail_category in ("argument_format", "tool_choice", "intent", None):
        for score in range(1, 11):
            for critical in ((), ("x",)):
                verdicts = {c: ["PASS"] for c in CATEGORIES}
                if fail_category is not None:
                    verdicts[fail_category] = ["FAIL"]
                once = enforce_caps(_report(score, verdicts, critical))
                assert enforce_caps(once) == once


def test_cap_ten_with_tool_choice_failure_drops_to_nine():
    verdicts = {c: ["PASS"] for c in CATEGORIES}
    verdicts["tool_choice"] = ["FAIL"]
    capped = enforce_caps(_report(10, verdicts))
    assert capped.score == 9
    assert capped.caps_applied


def _capped_score(score, pattern, critical=()):
    verdicts = {category: [("PASS" if bit else "FAIL")] for category, bit in zip(CATEGORIES, pattern)}
    return enforce_caps(_report(score, verdicts, critical)).score


def test_cap_monotone_over_all_patterns():
    """Flipping any FAIL to PASS never lowers the capped score (exhaustive)."""
    for score in range(1, 11):
        for pattern in itertools.product([0, 1], repeat=len(CATEGORIES)):
            base = _capped_score(score, pattern)
            for i, bit in enumerate(pattern):
                if bit == 0:
                    flipped = list(pattern)
                    flipped[i] = 1
                    assert _capped_score(score, tuple(flipped)) >= base


def test_early_stop_trigger_iff_all_pass_and_no_critical():
    for score in range(1, 11):
        for pattern in itertools.product([0, 1], repeat=len(CATEGORIES)):
            for critical in ((), ("c",)):
                capped = _capped_score(score, pattern, critical)
                should_be_ten = all(pattern) and not critical
                assert (capped == 10) == should_be_ten


def test_normalized_confidence():
    assert normalized_confidence(_report(10, {c: ["PASS"] for c in CATEGORIES})) == 1.0
    assert normalized_confidence(_report(5, {})) == 0.5
    assert normalized_confidence(_report(3, {})) == pytest.approx(0.3)


def test_synthetic_report_is_floor():
    report = synthetic_failure_report("unparseable verifier output")
    assert report.score == 1
    assert "unparseable verifier output" in report.critical_failures
    assert enforce_caps(report).score == 1


def test_render_feedback_is_parseable_json():
    report = enforce_caps(_report(6, {c: ["PASS"] for c in CATEGORIES}))
    doc = json.loads(render_report_feedback(report))
    assert doc["score"] == 10
    assert set(doc["item_results"]) == set(CATEGORIES)
