"""Inference-time strategies over the generator/verifier roles.

Each runner produces one Episode per task: single-pass generation, free-form
critique refinement, execution-feedback debugging, best-of-N selection under
several scorers, and the rubric-guided repair loop with early stopping and
patience. All of them obey the single-attempt gate except the debug loop,
which is explicitly execution-based.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import actionlang as al
from . import prompts, verify
from .checker import StaticReport, static_score
from .modelio import (
    GradeParseFailure,
    Message,
    ModelRequest,
    ModelResponse,
    expected_grade_score,
)
from .registry import TaskInstance, render_tool_docs
from .rubric import NoRecognizableSections, Rubric, fixed_rubric, parse_rubric_text
from .sandbox import AttemptGate, ExecutionResult, environment_for, execute, judge

METHODS = (
    "codeact",
    "self_refine",
    "self_debug",
    "best_of_n",
    "fixed_rubric_refine",
    "rubric_refine",
    "static_refine",
)

BON_SCORERS = (
    "self_rated",
    "fixed_rubric",
    "sample_rubric",
    "logprob",
    "fixed_rubric_logprob",
    "sample_rubric_logprob",
    "static",
)

STOP_REASONS = ("max_score", "patience", "budget", "single_pass", "selection")

_REFINE_MODES = {"rubric_refine": "sample", "fixed_rubric_refine": "fixed", "static_refine": "static"}


@dataclass(frozen=True)
class StrategyConfig:
    method: str
    N: int = 5
    R: int = 5
    P: int = 2
    bon_scorer: str = "self_rated"
    ablation: prompts.AblationConfig = field(default_factory=prompts.AblationConfig)
    critique_sentinel: bool = True
    top_logprobs_k: int = 5
    asset_dir: str | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.bon_scorer not in BON_SCORERS:
            raise ValueError(f"unknown best-of-n scorer {self.bon_scorer!r}")
        if self.N < 1 or self.R < 1 or self.P < 1:
            raise ValueError("N, R, and P must all be >= 1")

    @property
    def label(self) -> str:
        if self.method == "best_of_n":
            return f"best_of_n:{self.bon_scorer}"
        return self.method

    def describe(self) -> dict:
        return {
            "method": self.label,
            "N": self.N,
            "R": self.R,
            "P": self.P,
            "bon_scorer": self.bon_scorer if self.method == "best_of_n" else None,
            "ablation": sorted(self.ablation.removed_groups),
        }

    @classmethod
    def from_label(cls, label: str, **overrides) -> "StrategyConfig":
        method, _, scorer = label.partition(":")
        if method == "best_of_n" and scorer:
            return cls(method=method, bon_scorer=scorer, **overrides)
        if scorer:
            raise ValueError(f"method {method!r} takes no scorer suffix")
        return cls(method=method, **overrides)


@dataclass
class CallUsage:
    lm_calls: int = 0
    tokens_in: int = 0
    tokens_out: int = 0
    latency_ms: float = 0.0

    def add(self, response: ModelResponse) -> None:
        self.lm_calls += 1
        self.tokens_in += response.usage.input_tokens
        self.tokens_out += response.usage.output_tokens
        self.latency_ms += response.latency_ms


@dataclass
class CandidateRecord:
    round: int
    raw_text: str
    code: str | None
    score_report: verify.ScoreReport | None = None
    static_report: StaticReport | None = None
    selection_score: float | None = None
    usage: CallUsage = field(default_factory=CallUsage)
    execution: ExecutionResult | None = None
    shadow_success: bool | None = None


@dataclass
class Totals:
    lm_calls: int = 0
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: float = 0.0
    rounds_used: int = 0
    rubric_calls: int = 0


@dataclass
class Episode:
    task_id: str
    trial: int
    method: dict
    rubric: Rubric | None
    candidates: list[CandidateRecord]
    chosen_round: int | None
    stop_reason: str
    execution: ExecutionResult | None
    success: bool
    totals: Totals
    rubric_usage: CallUsage | None = None
    error: str | None = None


# --- shared plumbing ----------------------------------------------------------


def _complete(backend, tag: str, messages: list[Message], usage: CallUsage | None = None, **kwargs) -> ModelResponse:
    response = backend.complete(ModelRequest(messages=tuple(messages), tag=tag, **kwargs))
    if usage is not None:
        usage.add(response)
    return response


def _generate(
    backend,
    task: TaskInstance,
    config: StrategyConfig,
    rubric_text: str = "",
    prev_candidate: str = "",
    prev_feedback: str = "",
    seed: int | None = None,
) -> ModelResponse:
    """One generator call. Round one leaves the candidate/feedback slots empty."""
    system, user_template = prompts.assemble("repair", config.ablation, config.asset_dir)
    user = prompts.substitute(
        user_template,
        {"rubric": rubric_text, "current_candidate": prev_candidate, "current_feedback": prev_feedback},
    )
    messages = [
        Message("system", system),
        Message("user", prompts.task_context(task.instruction, render_tool_docs(task.tools))),
        Message("user", user),
    ]
    return _complete(backend, "generator", messages, seed=seed)


def _verifier_messages(
    template_id: str, task: TaskInstance, config: StrategyConfig, bindings: dict[str, str]
) -> list[Message]:
    system, user_template = prompts.assemble(template_id, config.ablation, config.asset_dir)
    base = {"instructions": task.instruction, "tool_docs": render_tool_docs(task.tools)}
    return [Message("system", system), Message("user", prompts.substitute(user_template, {**base, **bindings}))]


def _extract_code(raw: str) -> str | None:
    try:
        return al.extract_action_block(raw)
    except (al.NoActionBlock, al.UnterminatedBlock):
        return None


def _parse_code(code: str | None) -> al.Program | None:
    if code is None:
        return None
    try:
        return al.parse_program(code)
    except al.ParseError:
        return None


def _new_candidate(round_index: int, response: ModelResponse) -> CandidateRecord:
    usage = CallUsage()
    usage.add(response)
    return CandidateRecord(round=round_index, raw_text=response.text, code=_extract_code(response.text), usage=usage)


def _score_with_verifier(
    backend, task: TaskInstance, config: StrategyConfig, rubric: Rubric, candidate: CandidateRecord
) -> verify.ScoreReport:
    """Score one candidate against the rubric; re-ask once on a parse failure."""
    bindings = {"rubric": rubric.source_text, "code": candidate.code if candidate.code is not None else candidate.raw_text}
    messages = _verifier_messages("scoring", task, config, bindings)
    response = _complete(backend, "verifier", messages, candidate.usage)
    try:
        report = verify.parse_score_response(response.text)
    except verify.ScoreParseError:
        retry = _complete(backend, "verifier", messages, candidate.usage)
        try:
            report = verify.parse_score_response(retry.text)
        except verify.ScoreParseError:
            report = verify.synthetic_failure_report("unparseable verifier output")
    return verify.enforce_caps(report)


def _execute_candidate(
    task: TaskInstance, candidate: CandidateRecord, gate: AttemptGate
) -> tuple[ExecutionResult | None, bool]:
    """Run the chosen candidate once; unparseable code skips execution."""
    program = _parse_code(candidate.code)
    if program is None:
        if candidate.static_report is None:
            candidate.static_report = static_score(candidate.raw_text, task.tools)
        return None, False
    result = execute(program, environment_for(task), gate, task.id)
    return result, judge(result, task)


def _totals(candidates: list[CandidateRecord], rubric_usage: CallUsage | None, rounds_used: int) -> Totals:
    totals = Totals(rounds_used=rounds_used)
    for candidate in candidates:
        totals.lm_calls += candidate.usage.lm_calls
        totals.tokens_in += candidate.usage.tokens_in
        totals.tokens_out += candidate.usage.tokens_out
        totals.wall_ms += candidate.usage.latency_ms
    if rubric_usage is not None:
        totals.lm_calls += rubric_usage.lm_calls
        totals.tokens_in += rubric_usage.tokens_in
        totals.tokens_out += rubric_usage.tokens_out
        totals.wall_ms += rubric_usage.latency_ms
        totals.rubric_calls = rubric_usage.lm_calls
    return totals


def _generate_rubric(backend, task: TaskInstance, config: StrategyConfig) -> tuple[Rubric, CallUsage]:
    usage = CallUsage()
    messages = _verifier_messages("rubric_gen", task, config, {})
    response = _complete(backend, "rubric_gen", messages, usage)
    try:
        rubric = parse_rubric_text(response.text, origin="sample_dependent")
    except NoRecognizableSections:
        rubric = Rubric(
            items=(),
            origin="sample_dependent",
            source_text=response.text,
            warnings=("no recognizable rubric sections; raw text used verbatim",),
        )
    return rubric, usage


# --- strategies ---------------------------------------------------------------


def run_codeact(
    task: TaskInstance, backend, config: StrategyConfig, gate: AttemptGate | None = None, trial: int = 0,
    seed: int | None = None,
) -> Episode:
    """Single-pass code-mode generation: one sample, one execution."""
    gate = gate or AttemptGate()
    candidate = _new_candidate(1, _generate(backend, task, config, seed=seed))
    execution, success = _execute_candidate(task, candidate, gate)
    return Episode(
        task_id=task.id,
        trial=trial,
        method=config.describe(),
        rubric=None,
        candidates=[candidate],
        chosen_round=1,
        stop_reason="single_pass",
        execution=execution,
        success=success,
        totals=_totals([candidate], None, rounds_used=1),
    )


def run_self_refine(
    task: TaskInstance, backend, config: StrategyConfig, gate: AttemptGate | None = None, trial: int = 0,
    seed: int | None = None,
) -> Episode:
    """Free-form critique and revision; no rubric, no intermediate execution."""
    gate = gate or AttemptGate()
    candidates = [_new_candidate(1, _generate(backend, task, config, seed=seed))]
    stop_reason = "budget"
    rounds_used = 0
    for round_index in range(1, config.R + 1):
        current = candidates[-1]
        critique_messages = _verifier_messages(
            "self_refine_critique", task, config, {"code": current.code if current.code is not None else current.raw_text}
        )
        critique = _complete(backend, "verifier", critique_messages, current.usage)
        rounds_used = round_index
        first_line = critique.text.strip().splitlines()[0].strip() if critique.text.strip() else ""
        if config.critique_sentinel and first_line.upper() == "NO ISSUES":
            stop_reason = "max_score"
            break
        revision = _generate(
            backend,
            task,
            config,
            rubric_text="",
            prev_candidate=current.raw_text,
            prev_feedback=critique.text,
            seed=seed,
        )
        candidates.append(_new_candidate(round_index + 1, revision))
    final = candidates[-1]
    execution, success = _execute_candidate(task, final, gate)
    return Episode(
        task_id=task.id,
        trial=trial,
        method=config.describe(),
        rubric=None,
        candidates=candidates,
        chosen_round=final.round,
        stop_reason=stop_reason,
        execution=execution,
        success=success,
        totals=_totals(candidates, None, rounds_used=rounds_used),
    )


def _render_fault_feedback(result: ExecutionResult, code: str) -> str:
    assert result.fault is not None
    lines = [f"Execution failed: {result.fault.render()}"]
    if result.fault.span is not None:
        source_lines = code.splitlines()
        line_index = result.fault.span.start_line - 1
        if 0 <= line_index < len(source_lines):
            lines.append(f"Failing line: {source_lines[line_index].strip()}")
    return "\n".join(lines)


def run_self_debug(
    task: TaskInstance, backend, config: StrategyConfig, gate: AttemptGate | None = None, trial: int = 0,
    seed: int | None = None,
) -> Episode:
    """Execute each candidate and revise only on runtime faults.

    A fault-free run terminates the loop immediately, even when the printed
    answer is wrong: there is no error to repair from.
    """
    gate = gate or AttemptGate(mode="debug_loop")
    if gate.mode != "debug_loop":
        raise ValueError("self_debug needs an attempt gate in debug_loop mode")
    candidates: list[CandidateRecord] = []
    feedback: str | None = None
    last_execution: ExecutionResult | None = None
    stop_reason = "budget"
    rounds_used = 0
    for round_index in range(1, config.R + 1):
        rounds_used = round_index
        if round_index == 1:
            response = _generate(backend, task, config, seed=seed)
        else:
            previous = candidates[-1]
            response = _generate(
                backend, task, config,
                rubric_text="", prev_candidate=previous.raw_text, prev_feedback=feedback or "",
                seed=seed,
            )
        candidate = _new_candidate(round_index, response)
        candidates.append(candidate)
        program = _parse_code(candidate.code)
        if program is None:
            candidate.static_report = static_score(candidate.raw_text, task.tools)
            feedback = "Execution failed: the response is not a runnable Action block:\n" + candidate.static_report.render_findings()
            last_execution = None
            continue
        result = execute(program, environment_for(task), gate, task.id)
        candidate.execution = result
        last_execution = result
        if result.fault is None:
            stop_reason = "max_score"
            break
        feedback = _render_fault_feedback(result, candidate.code or "")
    success = judge(last_execution, task) if last_execution is not None else False
    return Episode(
        task_id=task.id,
        trial=trial,
        method=config.describe(),
        rubric=None,
        candidates=candidates,
        chosen_round=candidates[-1].round,
        stop_reason=stop_reason,
        execution=last_execution,
        success=success,
        totals=_totals(candidates, None, rounds_used=rounds_used),
    )


def _parse_bare_score(text: str) -> int:
    for match in re.finditer(r"\b(10|[1-9])\b", text):
        return int(match.group(1))
    return 1


def run_best_of_n(
    task: TaskInstance, backend, config: StrategyConfig, gate: AttemptGate | None = None, trial: int = 0,
    seed: int | None = None,
) -> Episode:
    """Sample N candidates, score each with the configured scorer, execute the
    argmax (earliest index wins ties)."""
    gate = gate or AttemptGate()
    scorer = config.bon_scorer
    rubric: Rubric | None = None
    rubric_usage: CallUsage | None = None
    if scorer in ("sample_rubric", "sample_rubric_logprob"):
        rubric, rubric_usage = _generate_rubric(backend, task, config)
    elif scorer in ("fixed_rubric", "fixed_rubric_logprob"):
        rubric = fixed_rubric()

    candidates = [
        _new_candidate(i, _generate(backend, task, config, seed=None if seed is None else seed + i))
        for i in range(1, config.N + 1)
    ]

    for candidate in candidates:
        code_binding = candidate.code if candidate.code is not None else candidate.raw_text
        if scorer == "self_rated":
            messages = _verifier_messages("self_rate", task, config, {"code": code_binding})
            response = _complete(backend, "verifier", messages, candidate.usage)
            candidate.selection_score = float(_parse_bare_score(response.text))
        elif scorer in ("fixed_rubric", "sample_rubric"):
            assert rubric is not None
            report = _score_with_verifier(backend, task, config, rubric, candidate)
            candidate.score_report = report
            candidate.selection_score = float(report.score)
        elif scorer in ("logprob", "fixed_rubric_logprob", "sample_rubric_logprob"):
            rubric_binding = rubric.source_text if rubric is not None else ""
            messages = _verifier_messages("grade_rate", task, config, {"rubric": rubric_binding, "code": code_binding})
            response = _complete(
                backend, "verifier", messages, candidate.usage, want_top_logprobs=config.top_logprobs_k
            )
            try:
                candidate.selection_score = expected_grade_score(response.first_token_logprobs or ())
            except GradeParseFailure:
                candidate.selection_score = 0.0
        else:  # static
            candidate.static_report = static_score(candidate.raw_text, task.tools)
            candidate.selection_score = float(candidate.static_report.score)

    chosen = candidates[0]
    for candidate in candidates[1:]:
        if (candidate.selection_score or 0.0) > (chosen.selection_score or 0.0):
            chosen = candidate  # strict improvement only: ties keep the earliest
    execution, success = _execute_candidate(task, chosen, gate)
    return Episode(
        task_id=task.id,
        trial=trial,
        method=config.describe(),
        rubric=rubric,
        candidates=candidates,
        chosen_round=chosen.round,
        stop_reason="selection",
        execution=execution,
        success=success,
        totals=_totals(candidates, rubric_usage, rounds_used=1),
        rubric_usage=rubric_usage,
    )


def run_rubric_refine(
    task: TaskInstance,
    backend,
    config: StrategyConfig,
    gate: AttemptGate | None = None,
    trial: int = 0,
    rubric_mode: str = "sample",
    seed: int | None = None,
) -> Episode:
    """The iterative repair loop: generate, score, keep the best, stop early.

    The best score and candidate update only on strict improvement; a round
    scoring 10 stops immediately, and P consecutive non-improving rounds
    exhaust patience. The best candidate is then executed once.
    """
    if rubric_mode not in ("sample", "fixed", "static"):
        raise ValueError(f"unknown rubric mode {rubric_mode!r}")
    gate = gate or AttemptGate()

    rubric: Rubric | None = None
    rubric_usage: CallUsage | None = None
    if rubric_mode == "sample":
        rubric, rubric_usage = _generate_rubric(backend, task, config)
    elif rubric_mode == "fixed":
        rubric = fixed_rubric()
    rubric_text = rubric.source_text if rubric is not None else ""

    candidates: list[CandidateRecord] = []
    best_score = 0.0
    best_candidate: CandidateRecord | None = None
    stale = 0
    stop_reason = "budget"
    feedback = ""

    for round_index in range(1, config.R + 1):
        previous = candidates[-1] if candidates else None
        response = _generate(
            backend, task, config,
            rubric_text=rubric_text,
            prev_candidate=previous.raw_text if previous is not None else "",
            prev_feedback=feedback if previous is not None else "",
            seed=seed,
        )
        candidate = _new_candidate(round_index, response)
        candidates.append(candidate)

        if rubric_mode == "static":
            candidate.static_report = static_score(candidate.raw_text, task.tools)
            score = float(candidate.static_report.score)
            feedback = candidate.static_report.render_findings()
        else:
            assert rubric is not None
            report = _score_with_verifier(backend, task, config, rubric, candidate)
            candidate.score_report = report
            score = float(report.score)
            feedback = verify.render_report_feedback(report)
        candidate.selection_score = score

        if score > best_score:
            best_score = score
            best_candidate = candidate
            stale = 0
        else:
            stale += 1
        if score == verify.MAX_SCORE:
            stop_reason = "max_score"
            break
        if stale >= config.P:
            stop_reason = "patience"
            break

    assert best_candidate is not None
    execution, success = _execute_candidate(task, best_candidate, gate)
    return Episode(
        task_id=task.id,
        trial=trial,
        method=config.describe(),
        rubric=rubric,
        candidates=candidates,
        chosen_round=best_candidate.round,
        stop_reason=stop_reason,
        execution=execution,
        success=success,
        totals=_totals(candidates, rubric_usage, rounds_used=len(candidates)),
        rubric_usage=rubric_usage,
    )


def run_strategy(
    task: TaskInstance, backend, config: StrategyConfig, gate: AttemptGate | None = None, trial: int = 0,
    seed: int | None = None,
) -> Episode:
    if config.method == "codeact":
        return run_codeact(task, backend, config, gate, trial, seed=seed)
    if config.method == "self_refine":
        return run_self_refine(task, backend, config, gate, trial, seed=seed)
    if config.method == "self_debug":
        return run_self_debug(task, backend, config, gate, trial, seed=seed)
    if config.method == "best_of_n":
        return run_best_of_n(task, backend, config, gate, trial, seed=seed)
    return run_rubric_refine(task, backend, config, gate, trial, rubric_mode=_REFINE_MODES[config.method], seed=seed)
