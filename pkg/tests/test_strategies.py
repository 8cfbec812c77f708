import math

import pytest

from preflight.modelio import ScriptExhausted
from preflight.sandbox import AttemptExhausted, AttemptGate
from preflight.strategies import (
    StrategyConfig,
    run_best_of_n,
    run_codeact,
    run_rubric_refine,
    run_self_debug,
    run_self_refine,
    run_strategy,
)

from .conftest import (
    REPAIRED_RESPONSE,
    ROUND0_RESPONSE,
    SAMPLE_RUBRIC_TEXT,
    ScriptBuilder,
    action_block,
    scoring_response,
    scripted_score_response,
)


class RecordingBackend:
    """Delegates to a playback backend while capturing every request."""

    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.inner.complete(request)


def _episode_call_total(episode):
    total = sum(c.usage.lm_calls for c in episode.candidates)
    if episode.rubric_usage is not None:
        total += episode.rubric_usage.lm_calls
    return total


def _assert_conservation(episode):
    totals = episode.totals
    assert totals.lm_calls == _episode_call_total(episode)
    tokens_in = sum(c.usage.tokens_in for c in episode.candidates)
    tokens_out = sum(c.usage.tokens_out for c in episode.candidates)
    wall = sum(c.usage.latency_ms for c in episode.candidates)
    if episode.rubric_usage is not None:
        tokens_in += episode.rubric_usage.tokens_in
        tokens_out += episode.rubric_usage.tokens_out
        wall += episode.rubric_usage.latency_ms
    assert totals.tokens_in == tokens_in
    assert totals.tokens_out == tokens_out
    assert totals.wall_ms == pytest.approx(wall)


# --- codeact -------------------------------------------------------------------


def test_codeact_success(decoder_task):
    backend = ScriptBuilder().generator(REPAIRED_RESPONSE).backend()
    episode = run_codeact(decoder_task, backend, StrategyConfig("codeact"))
    assert episode.success and episode.stop_reason == "single_pass"
    assert episode.execution is not None and episode.execution.final_value == "KMPP"
    assert episode.totals.lm_calls == 1
    _assert_conservation(episode)


def test_codeact_silent_wrong_answer(decoder_task):
    backend = ScriptBuilder().generator(ROUND0_RESPONSE).backend()
    episode = run_codeact(decoder_task, backend, StrategyConfig("codeact"))
    assert not episode.success
    assert episode.execution is not None and episode.execution.fault is None


def test_codeact_unparseable_skips_execution(decoder_task):
    backend = ScriptBuilder().generator("I refuse to write code today.").backend()
    episode = run_codeact(decoder_task, backend, StrategyConfig("codeact"))
    assert not episode.success
    assert episode.execution is None
    report = episode.candidates[0].static_report
    assert report is not None
    assert any(f.code == "FORMAT_VIOLATION" for f in report.findings)


def test_codeact_syntax_error_recorded(decoder_task):
    backend = ScriptBuilder().generator(action_block("x = = 3")).backend()
    episode = run_codeact(decoder_task, backend, StrategyConfig("codeact"))
    assert not episode.success and episode.execution is None
    report = episode.candidates[0].static_report
    assert any(f.code == "SYNTAX_ERROR" for f in report.findings)


# --- self refine -----------------------------------------------------------------


def test_self_refine_single_round_call_count(decoder_task):
    backend = (
        ScriptBuilder()
        .generator(ROUND0_RESPONSE)
        .verifier("The two calls are in the wrong order; decode the hex first.")
        .generator(REPAIRED_RESPONSE)
        .backend()
    )
    episode = run_self_refine(decoder_task, backend, StrategyConfig("self_refine", R=1))
    assert episode.totals.lm_calls == 3
    assert episode.totals.rounds_used == 1
    assert episode.success
    assert episode.chosen_round == episode.candidates[-1].round
    _assert_conservation(episode)


def test_self_refine_sentinel_stops_early(decoder_task):
    backend = ScriptBuilder().generator(REPAIRED_RESPONSE).verifier("NO ISSUES").backend()
    episode = run_self_refine(decoder_task, backend, StrategyConfig("self_refine", R=5))
    assert episode.totals.lm_calls == 2
    assert episode.stop_reason == "max_score"
    assert len(episode.candidates) == 1
    assert episode.success


def test_self_refine_full_budget_call_count(decoder_task):
    builder = ScriptBuilder().generator(ROUND0_RESPONSE)
    for _ in range(5):
        builder.verifier("Still looks off; reconsider the ordering.")
        builder.generator(ROUND0_RESPONSE)
    episode = run_self_refine(decoder_task, builder.backend(), StrategyConfig("self_refine", R=5))
    assert episode.totals.lm_calls == 1 + 2 * 5
    assert episode.stop_reason == "budget"
    assert episode.totals.rounds_used == 5
    assert len(episode.candidates) == 6
    _assert_conservation(episode)


def test_self_refine_sentinel_configurable_off(decoder_task):
    builder = ScriptBuilder().generator(ROUND0_RESPONSE)
    builder.verifier("NO ISSUES").generator(REPAIRED_RESPONSE)
    episode = run_self_refine(
        decoder_task, builder.backend(), StrategyConfig("self_refine", R=1, critique_sentinel=False)
    )
    assert episode.totals.lm_calls == 3


# --- self debug --------------------------------------------------------------------


def test_self_debug_clean_wrong_run_never_revises(decoder_task):
    backend = ScriptBuilder().generator(ROUND0_RESPONSE).backend()
    gate = AttemptGate("debug_loop")
    episode = run_self_debug(decoder_task, backend, StrategyConfig("self_debug", R=5), gate)
    assert gate.attempts_used[decoder_task.id] == 1
    assert len(episode.candidates) == 1
    assert not episode.success
    assert episode.execution is not None and episode.execution.fault is None


def test_self_debug_recovers_from_fault(decoder_task):
    faulty = action_block("ascii_message = rot13('4d4f5252')\nprint(ascii_message)")
    backend = ScriptBuilder().generator(faulty).generator(REPAIRED_RESPONSE).backend()
    gate = AttemptGate("debug_loop")
    episode = run_self_debug(decoder_task, backend, StrategyConfig("self_debug", R=5), gate)
    assert gate.attempts_used[decoder_task.id] == 2
    assert episode.success
    assert episode.totals.rounds_used == 2
    assert episode.candidates[0].execution.fault.kind == "UNKNOWN_TOOL"


def test_self_debug_budget_exhaustion(decoder_task):
    faulty = action_block("print(rot13('x'))")
    builder = ScriptBuilder()
    for _ in range(3):
        builder.generator(faulty)
    episode = run_self_debug(decoder_task, builder.backend(), StrategyConfig("self_debug", R=3))
    assert not episode.success
    assert episode.stop_reason == "budget"
    assert episode.totals.rounds_used == 3


def test_self_debug_requires_debug_gate(decoder_task):
    backend = ScriptBuilder().generator(ROUND0_RESPONSE).backend()
    with pytest.raises(ValueError):
        run_self_debug(decoder_task, backend, StrategyConfig("self_debug"), AttemptGate("single_attempt"))


# --- best of n ---------------------------------------------------------------------


def test_best_of_n_earliest_max_wins(decoder_task):
    builder = ScriptBuilder()
    for _ in range(3):
        builder.generator(REPAIRED_RESPONSE)
    for rating in ("6", "9", "9"):
        builder.verifier(rating)
    episode = run_best_of_n(decoder_task, builder.backend(), StrategyConfig("best_of_n", N=3, bon_scorer="self_rated"))
    assert episode.chosen_round == 2
    assert [c.selection_score for c in episode.candidates] == [6.0, 9.0, 9.0]
    assert episode.stop_reason == "selection"
    _assert_conservation(episode)


def test_best_of_n_static_prefers_clean_program(decoder_task):
    messy = action_block("caesar_decode(message='MORR', offset=2)\nprint('x')")
    builder = ScriptBuilder().generator(messy).generator(REPAIRED_RESPONSE)
    episode = run_best_of_n(decoder_task, builder.backend(), StrategyConfig("best_of_n", N=2, bon_scorer="static"))
    assert episode.chosen_round == 2
    assert episode.success
    assert episode.totals.lm_calls == 2  # no verifier calls for the static scorer
    assert episode.candidates[0].static_report is not None


def test_best_of_n_sample_rubric_call_counts(decoder_task):
    builder = ScriptBuilder().rubric_gen(SAMPLE_RUBRIC_TEXT)
    for _ in range(3):
        builder.generator(REPAIRED_RESPONSE)
    for score in (7, 8, 9):
        builder.verifier(scripted_score_response(score))
    episode = run_best_of_n(
        decoder_task, builder.backend(), StrategyConfig("best_of_n", N=3, bon_scorer="sample_rubric")
    )
    assert episode.totals.lm_calls == 1 + 3 + 3
    assert episode.totals.rubric_calls == 1
    assert episode.rubric is not None and episode.rubric.origin == "sample_dependent"
    assert episode.chosen_round == 3
    _assert_conservation(episode)


def test_best_of_n_fixed_rubric_uses_no_rubric_call(decoder_task):
    builder = ScriptBuilder()
    for _ in range(2):
        builder.generator(REPAIRED_RESPONSE)
    for score in (9, 8):
        builder.verifier(scripted_score_response(score))
    episode = run_best_of_n(
        decoder_task, builder.backend(), StrategyConfig("best_of_n", N=2, bon_scorer="fixed_rubric")
    )
    assert episode.totals.rubric_calls == 0
    assert episode.rubric is not None and episode.rubric.origin == "fixed"
    assert episode.chosen_round == 1


def test_best_of_n_logprob_scorer(decoder_task):
    builder = ScriptBuilder()
    for _ in range(2):
        builder.generator(REPAIRED_RESPONSE)
    builder.verifier("C", first_token_logprobs=(("C", math.log(0.9)),))
    builder.verifier("A", first_token_logprobs=(("A", math.log(0.8)), ("B", math.log(0.2))))
    episode = run_best_of_n(decoder_task, builder.backend(), StrategyConfig("best_of_n", N=2, bon_scorer="logprob"))
    expected_second = 0.8 * 1.0 + 0.2 * (1 - 1 / 19)
    assert episode.candidates[0].selection_score == pytest.approx(1 - 2 / 19)
    assert episode.candidates[1].selection_score == pytest.approx(expected_second)
    assert episode.chosen_round == 2


def test_best_of_n_only_selected_candidate_executes(decoder_task):
    builder = ScriptBuilder()
    for _ in range(3):
        builder.generator(REPAIRED_RESPONSE)
    for rating in ("5", "6", "7"):
        builder.verifier(rating)
    gate = AttemptGate("single_attempt")
    episode = run_best_of_n(
        decoder_task, builder.backend(), StrategyConfig("best_of_n", N=3, bon_scorer="self_rated"), gate
    )
    assert gate.attempts_used[decoder_task.id] == 1
    assert episode.candidates[0].execution is None


# --- rubric refine -------------------------------------------------------------------


def _refine_backend(scores, rubric_mode="fixed", generator_response=REPAIRED_RESPONSE):
    builder = ScriptBuilder()
    if rubric_mode == "sample":
        builder.rubric_gen(SAMPLE_RUBRIC_TEXT)
    for score in scores:
        builder.generator(generator_response)
        builder.verifier(scripted_score_response(score))
    return builder.backend()


def test_refine_immediate_max_score(decoder_task):
    config = StrategyConfig("fixed_rubric_refine")
    episode = run_rubric_refine(decoder_task, _refine_backend([10]), config, rubric_mode="fixed")
    assert episode.stop_reason == "max_score"
    assert episode.totals.rounds_used == 1
    assert episode.chosen_round == 1
    assert episode.success


def test_refine_patience_exhaustion(decoder_task):
    config = StrategyConfig("fixed_rubric_refine", P=2)
    episode = run_rubric_refine(decoder_task, _refine_backend([7, 7, 7]), config, rubric_mode="fixed")
    assert episode.stop_reason == "patience"
    assert episode.totals.rounds_used == 3
    assert episode.chosen_round == 1


def test_refine_worked_trajectory(decoder_task):
    builder = ScriptBuilder()
    builder.rubric_gen(SAMPLE_RUBRIC_TEXT)
    builder.generator(ROUND0_RESPONSE)
    builder.verifier(
        scoring_response(
            3,
            fail_categories={
                "intent": [("A", "the Caesar layer is decoded before the hex layer")],
                "ordering_dataflow": [
                    ("D1", "caesar_decode runs before convert_hex_to_ascii"),
                    ("D2", "convert_hex_to_ascii output never reaches the message argument"),
                ],
                "execution_critical": [("E1", "the hex input is not decoded first")],
                "final_answer": [("F1", "the printed value is not the decoded message")],
            },
            critical_failures=["operation order is reversed"],
            revision_instructions=["decode the hex input first, then apply caesar_decode with shift 2"],
        )
    )
    builder.generator(REPAIRED_RESPONSE)
    builder.verifier(scoring_response(10))
    config = StrategyConfig("rubric_refine")
    episode = run_rubric_refine(decoder_task, builder.backend(), config, rubric_mode="sample")
    assert episode.stop_reason == "max_score"
    assert episode.totals.rounds_used == 2
    assert episode.chosen_round == 2
    assert episode.execution is not None and episode.execution.final_value == "KMPP"
    assert episode.success
    assert episode.candidates[0].score_report.score == 3
    assert episode.totals.lm_calls == 1 + 2 + 2
    _assert_conservation(episode)


def test_refine_chooses_best_seen_candidate(decoder_task):
    # round 2 regresses and patience runs out; the executed candidate is round 1's
    builder = ScriptBuilder()
    builder.generator(REPAIRED_RESPONSE).verifier(scripted_score_response(8))
    builder.generator(ROUND0_RESPONSE).verifier(scripted_score_response(5))
    builder.generator(ROUND0_RESPONSE).verifier(scripted_score_response(5))
    config = StrategyConfig("fixed_rubric_refine", P=2)
    episode = run_rubric_refine(decoder_task, builder.backend(), config, rubric_mode="fixed")
    assert episode.chosen_round == 1
    assert episode.success  # the repaired round-1 candidate is the one executed


def test_refine_static_mode_uses_no_verifier_calls(decoder_task):
    messy = action_block("caesar_decode(message='MORR', offset=2)\nprint('x')")
    builder = ScriptBuilder().generator(messy).generator(REPAIRED_RESPONSE)
    config = StrategyConfig("static_refine", P=2)
    episode = run_rubric_refine(decoder_task, builder.backend(), config, rubric_mode="static")
    assert episode.totals.lm_calls == 2  # generators only
    assert episode.rubric is None
    assert episode.stop_reason == "max_score"
    assert episode.candidates[0].static_report is not None
    assert episode.candidates[0].selection_score == 8.0
    assert episode.success


def test_refine_sample_rubric_is_immutable_across_rounds(decoder_task):
    backend = RecordingBackend(_refine_backend([7, 7, 10], rubric_mode="sample"))
    config = StrategyConfig("rubric_refine", P=5)
    episode = run_rubric_refine(decoder_task, backend, config, rubric_mode="sample")
    assert episode.rubric is not None and episode.rubric.source_text == SAMPLE_RUBRIC_TEXT
    scoring_requests = [r for r in backend.requests if r.tag == "verifier"]
    assert len(scoring_requests) == 3
    for request in scoring_requests:
        assert SAMPLE_RUBRIC_TEXT.strip() in request.messages[-1].content


def test_refine_reasks_once_then_synthesizes(decoder_task):
    builder = ScriptBuilder()
    builder.generator(REPAIRED_RESPONSE)
    builder.verifier("not json at all")
    builder.verifier("still not json")
    builder.generator(REPAIRED_RESPONSE)
    builder.verifier(scripted_score_response(10))
    config = StrategyConfig("fixed_rubric_refine", P=2)
    episode = run_rubric_refine(decoder_task, builder.backend(), config, rubric_mode="fixed")
    first = episode.candidates[0]
    assert first.score_report.score == 1
    assert "unparseable verifier output" in first.score_report.critical_failures
    assert first.usage.lm_calls == 3  # generate + two scoring attempts
    assert episode.stop_reason == "max_score"
    assert episode.chosen_round == 2


def test_refine_round_one_generator_slots_are_empty(decoder_task):
    backend = RecordingBackend(_refine_backend([10], rubric_mode="fixed"))
    run_rubric_refine(decoder_task, backend, StrategyConfig("fixed_rubric_refine"), rubric_mode="fixed")
    first_generation = next(r for r in backend.requests if r.tag == "generator")
    repair_message = first_generation.messages[-1].content
    assert "Previous candidate:\n\n" in repair_message
    assert "Feedback:\n" in repair_message


def test_refine_feedback_carries_caps(decoder_task):
    builder = ScriptBuilder()
    builder.generator(ROUND0_RESPONSE)
    builder.verifier(scoring_response(9, fail_categories={"ordering_dataflow": [("D1", "wrong order")]}))
    builder.generator(REPAIRED_RESPONSE)
    builder.verifier(scoring_response(10))
    backend = RecordingBackend(builder.backend())
    config = StrategyConfig("fixed_rubric_refine")
    episode = run_rubric_refine(decoder_task, backend, config, rubric_mode="fixed")
    assert episode.candidates[0].score_report.score == 7  # capped from 9
    second_generation = [r for r in backend.requests if r.tag == "generator"][1]
    feedback = second_generation.messages[-1].content
    assert '"score": 7' in feedback


# --- dispatcher and gates --------------------------------------------------------------


def test_run_strategy_dispatches_every_method(decoder_task):
    backend = ScriptBuilder().generator(REPAIRED_RESPONSE).backend()
    episode = run_strategy(decoder_task, backend, StrategyConfig("codeact"))
    assert episode.method["method"] == "codeact"


def test_single_attempt_gate_shared_across_strategies(decoder_task):
    gate = AttemptGate("single_attempt")
    backend = ScriptBuilder().generator(REPAIRED_RESPONSE).generator(REPAIRED_RESPONSE).backend()
    run_codeact(decoder_task, backend, StrategyConfig("codeact"), gate)
    with pytest.raises(AttemptExhausted):
        run_codeact(decoder_task, backend, StrategyConfig("codeact"), gate)


def test_script_exhaustion_propagates(decoder_task):
    backend = ScriptBuilder().backend()
    with pytest.raises(ScriptExhausted):
        run_codeact(decoder_task, backend, StrategyConfig("codeact"))


def test_config_validation():
    with pytest.raises(ValueError):
        StrategyConfig("mystery_method")
    with pytest.raises(ValueError):
        StrategyConfig("best_of_n", bon_scorer="vibes")
    with pytest.raises(ValueError):
        StrategyConfig("codeact", R=0)
    assert StrategyConfig.from_label("best_of_n:sample_rubric").bon_scorer == "sample_rubric"
    with pytest.raises(ValueError):
        StrategyConfig.from_label("codeact:extra")


def test_labels():
    assert StrategyConfig("rubric_refine").label == "rubric_refine"
    assert StrategyConfig("best_of_n", bon_scorer="static").label == "best_of_n:static"
