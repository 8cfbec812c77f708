import json
from pathlib import Path

import pytest

from preflight import actionlang as al
from preflight import metrics
from preflight.harness import (
    RunPlan,
    read_episode_log,
    reference_programs,
    run_plan,
    write_episode_log,
)
from preflight.registry import load_suite, save_suite
from preflight.sandbox import judge, shadow_execute
from preflight.strategies import StrategyConfig

from .conftest import build_plan_script

FIXTURES = Path(__file__).parent.parent / "fixtures"


# --- mini suite -----------------------------------------------------------------


def test_mini_suite_shape(mini_suite):
    assert len(mini_suite) >= 12
    assert len({task.family for task in mini_suite}) >= 3


def test_mini_suite_includes_the_decoder_task(mini_suite):
    task = mini_suite.get("decoder_hex_caesar")
    assert task.ground_truth == "KMPP"
    assert {t.name for t in task.tools} == {"convert_hex_to_ascii", "caesar_decode"}
    assert "4d4f5252" in task.instruction


def test_every_reference_program_reaches_its_ground_truth(mini_suite):
    refs = reference_programs()
    for task in mini_suite:
        result = shadow_execute(al.parse_program(refs[task.id]), task)
        assert result.fault is None, (task.id, result.fault)
        assert judge(result, task), (task.id, result.final_value, task.ground_truth)


def test_mini_suite_round_trips_through_the_file_format(mini_suite):
    assert load_suite(save_suite(mini_suite)) == mini_suite


def test_shipped_suite_fixture_matches_builtin(mini_suite):
    assert load_suite((FIXTURES / "mini_suite.json").read_bytes()) == mini_suite


# --- run plans -------------------------------------------------------------------


def _two_method_plan(tmp_path, mini_suite, trials=2, shadow=False):
    configs = [StrategyConfig("codeact"), StrategyConfig("rubric_refine")]
    builder = build_plan_script(list(mini_suite), configs, trials)
    log_path = tmp_path / "episodes.jsonl"
    plan = RunPlan(suite=mini_suite, methods=configs, trials=trials, shadow_judge=shadow, log_path=str(log_path))
    return plan, builder, log_path


def test_run_plan_episode_counts(tmp_path, mini_suite):
    plan, builder, log_path = _two_method_plan(tmp_path, mini_suite)
    summary = run_plan(plan, builder.backend())
    assert summary.n_episodes == 2 * len(mini_suite) * 2
    records = read_episode_log(str(log_path))
    assert len(records) == summary.n_episodes
    combos = {(r["method"]["method"], r["trial"], r["task_id"]) for r in records}
    assert len(combos) == summary.n_episodes  # every triple exactly once


def test_run_plan_summary_matches_log_recount(tmp_path, mini_suite):
    plan, builder, log_path = _two_method_plan(tmp_path, mini_suite)
    summary = run_plan(plan, builder.backend())
    records = read_episode_log(str(log_path))
    for label, method_summary in summary.methods.items():
        by_trial = {}
        for record in records:
            if record["method"]["method"] == label:
                by_trial.setdefault(record["trial"], []).append(record["success"])
        rates = [sum(flags) / len(flags) for _, flags in sorted(by_trial.items())]
        assert method_summary.mean_success == pytest.approx(sum(rates) / len(rates))


def test_run_plan_without_shadow_blocks_budget_curves(tmp_path, mini_suite):
    plan, builder, log_path = _two_method_plan(tmp_path, mini_suite)
    run_plan(plan, builder.backend())
    with pytest.raises(metrics.MissingCandidateData):
        metrics.budget_curves(read_episode_log(str(log_path)))


def test_run_plan_with_shadow_enables_budget_curves(tmp_path, mini_suite):
    plan, builder, log_path = _two_method_plan(tmp_path, mini_suite, shadow=True)
    run_plan(plan, builder.backend())
    curves = metrics.budget_curves(read_episode_log(str(log_path)))
    points = curves.success_vs_r["rubric_refine"]
    assert points[-1].success_rate == 1.0


def test_worked_example_budget_curve_needs_the_second_round(tmp_path, mini_suite):
    """Truncating the worked decoder episode at round 1 loses the repair."""
    from preflight.modelio import PlaybackBackend

    log_path = tmp_path / "worked.jsonl"
    plan = RunPlan(
        suite=mini_suite,
        methods=[StrategyConfig("rubric_refine")],
        trials=1,
        shadow_judge=True,
        task_ids=["decoder_hex_caesar"],
        log_path=str(log_path),
    )
    backend = PlaybackBackend.from_jsonl(str(FIXTURES / "worked_decoder_script.jsonl"))
    run_plan(plan, backend)
    curves = metrics.budget_curves(read_episode_log(str(log_path)))
    points = curves.success_vs_r["rubric_refine"]
    assert [p.success_rate for p in points] == [0.0, 1.0]


def test_run_plan_is_deterministic(tmp_path, mini_suite):
    plan_a, builder, log_a = _two_method_plan(tmp_path, mini_suite)
    run_plan(plan_a, builder.backend())
    first = log_a.read_bytes()
    log_b = tmp_path / "episodes_b.jsonl"
    plan_b = RunPlan(suite=mini_suite, methods=plan_a.methods, trials=plan_a.trials, log_path=str(log_b))
    configs = [StrategyConfig("codeact"), StrategyConfig("rubric_refine")]
    run_plan(plan_b, build_plan_script(list(mini_suite), configs, 2).backend())
    assert first == log_b.read_bytes()


def test_run_plan_records_backend_failures_and_continues(tmp_path, mini_suite):
    configs = [StrategyConfig("codeact")]
    builder = build_plan_script(list(mini_suite)[:3], configs, 1)  # script covers 3 of 14 tasks
    log_path = tmp_path / "log.jsonl"
    plan = RunPlan(suite=mini_suite, methods=configs, trials=1, log_path=str(log_path))
    summary = run_plan(plan, builder.backend())
    assert summary.n_episodes == len(mini_suite)
    records = read_episode_log(str(log_path))
    failed = [r for r in records if r["error"]]
    assert len(failed) == len(mini_suite) - 3
    assert all(not r["success"] for r in failed)


def test_run_plan_task_filter(tmp_path, mini_suite):
    configs = [StrategyConfig("codeact")]
    task = mini_suite.get("decoder_hex_caesar")
    builder = build_plan_script([task], configs, 1)
    plan = RunPlan(suite=mini_suite, methods=configs, trials=1, task_ids=["decoder_hex_caesar"])
    summary = run_plan(plan, builder.backend())
    assert summary.n_episodes == 1
    with pytest.raises(KeyError):
        run_plan(
            RunPlan(suite=mini_suite, methods=configs, trials=1, task_ids=["no_such_task"]),
            builder.backend(),
        )


# --- log schema ---------------------------------------------------------------------


def test_log_reader_rejects_unknown_major_version(tmp_path):
    path = tmp_path / "log.jsonl"
    path.write_text(json.dumps({"schema_version": "2.0"}) + "\n")
    with pytest.raises(ValueError):
        read_episode_log(str(path))


def test_log_records_carry_schema_version(tmp_path, mini_suite, decoder_task):
    configs = [StrategyConfig("codeact")]
    builder = build_plan_script([decoder_task], configs, 1)
    log_path = tmp_path / "log.jsonl"
    plan = RunPlan(suite=mini_suite, methods=configs, trials=1, task_ids=[decoder_task.id], log_path=str(log_path))
    run_plan(plan, builder.backend())
    (record,) = read_episode_log(str(log_path))
    assert record["schema_version"] == "1.0"
    assert record["candidates"][0]["raw_text"]


def test_write_and_read_round_trip(tmp_path):
    records = [{"schema_version": "1.0", "task_id": "x", "trial": 1, "method": {"method": "codeact"}}]
    path = tmp_path / "roundtrip.jsonl"
    write_episode_log(str(path), records)
    assert read_episode_log(str(path)) == records
