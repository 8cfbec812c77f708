"""Shared fixtures: canonical programs, task registries, and script builders."""

from __future__ import annotations

import json

import pytest

from preflight.harness import builtin_mini_suite, builtin_tool
from preflight.modelio import PlaybackBackend, ScriptEntry, Usage
from preflight.registry import ParamSpec, TaskInstance, ToolSpec

# The decoder task's two canonical candidates: the reversed-order program runs
# to completion with valid call shapes but prints the wrong string; the
# repaired program prints the ground truth.
ROUND0_RESPONSE = (
    "I will decode the Caesar layer first.\n"
    "Action:\n"
    "decoded_caesar = caesar_decode(\n"
    "    '4d4f5252', 2)\n"
    "ascii_message = convert_hex_to_ascii(\n"
    "    decoded_caesar)\n"
    "print(ascii_message)\n"
    "End Action\n"
)

REPAIRED_RESPONSE = (
    "Fixing the operation order per the feedback.\n"
    "Action:\n"
    "ascii_message = convert_hex_to_ascii(\n"
    "    hex_string='4d4f5252')\n"
    "decoded_message = caesar_decode(\n"
    "    message=ascii_message, shift=2)\n"
    "print(decoded_message)\n"
    "End Action\n"
)


def action_block(code: str, prose: str = "") -> str:
    prefix = prose + "\n" if prose else ""
    return f"{prefix}Action:\n{code}\nEnd Action\n"


@pytest.fixture(scope="session")
def mini_suite():
    return builtin_mini_suite()


@pytest.fixture(scope="session")
def decoder_task(mini_suite):
    return mini_suite.get("decoder_hex_caesar")


@pytest.fixture()
def checker_registry():
    """Registry exercising every call-shape rule: plain, variadic, keyword-only."""
    return (
        builtin_tool("hex_to_ascii", "convert_hex_to_ascii"),
        builtin_tool("caesar_decode"),
        builtin_tool("book_hotel"),
        builtin_tool("max_value"),
        builtin_tool("round_to"),
    )


def scoring_response(
    score: int,
    fail_categories: dict[str, list[tuple[str, str]]] | None = None,
    critical_failures: list[str] | None = None,
    revision_instructions: list[str] | None = None,
) -> str:
    """A well-formed verifier scoring response.

    Categories absent from fail_categories get one passing item, so caps act
    only where the test asks them to.
    """
    from preflight.rubric import CATEGORIES

    fail_categories = fail_categories or {}
    item_results = {}
    for index, category in enumerate(CATEGORIES):
        entries = [{"item": f"{category[:1].upper()}{index + 1}", "verdict": "PASS", "reason": "looks right"}]
        for item_id, reason in fail_categories.get(category, []):
            entries.append({"item": item_id, "verdict": "FAIL", "reason": reason})
        item_results[category] = entries
    payload = {
        "feedback": {
            "item_results": item_results,
            "critical_failures": critical_failures or [],
            "revision_instructions": revision_instructions or [],
        },
        "score": score,
    }
    return json.dumps(payload)


def scripted_score_response(score: int) -> str:
    """A response whose capped score equals the requested score exactly.

    Scores below 10 carry one tool-choice failure, which blocks the all-pass
    promotion without triggering any cap.
    """
    if score == 10:
        return scoring_response(10)
    return scoring_response(score, fail_categories={"tool_choice": [("T9", "tool substitution suspected")]})


class ScriptBuilder:
    """Accumulates playback entries with per-tag indices assigned in order."""

    def __init__(self) -> None:
        self.entries: list[ScriptEntry] = []
        self._counters = {"generator": 0, "verifier": 0, "rubric_gen": 0}

    def add(
        self,
        tag: str,
        text: str,
        tokens: tuple[int, int] = (120, 60),
        latency_ms: float = 8.0,
        first_token_logprobs=None,
        request_hash: str | None = None,
    ) -> "ScriptBuilder":
        self.entries.append(
            ScriptEntry(
                tag=tag,
                index=self._counters[tag],
                text=text,
                usage=Usage(*tokens),
                latency_ms=latency_ms,
                first_token_logprobs=first_token_logprobs,
                request_hash=request_hash,
            )
        )
        self._counters[tag] += 1
        return self

    def generator(self, text: str, **kwargs) -> "ScriptBuilder":
        return self.add("generator", text, **kwargs)

    def verifier(self, text: str, **kwargs) -> "ScriptBuilder":
        return self.add("verifier", text, **kwargs)

    def rubric_gen(self, text: str, **kwargs) -> "ScriptBuilder":
        return self.add("rubric_gen", text, **kwargs)

    def backend(self, strict: bool = False, ledger=None) -> PlaybackBackend:
        return PlaybackBackend(list(self.entries), strict=strict, ledger=ledger)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for entry in self.entries:
                handle.write(json.dumps(entry.to_json()) + "\n")


SAMPLE_RUBRIC_TEXT = """Intent:
A. convert_hex_to_ascii('4d4f5252') -> recover the ASCII text from the hex input.
B. caesar_decode(message=..., shift=2) -> undo the Caesar layer with shift 2.
Ordering/dataflow checks:
D1. convert_hex_to_ascii runs before caesar_decode.
D2. The output of convert_hex_to_ascii feeds the 'message' argument of caesar_decode.
Argument/format checks:
a1. caesar_decode is called with keyword arguments message= and shift=2.
Type/shape contract checks:
S1. convert_hex_to_ascii returns a string consumed as caesar_decode's message.
Execution-critical checks:
E1. The hex input '4d4f5252' is decoded with convert_hex_to_ascii first.
Final-answer checks:
F1. The printed value is the fully decoded message and nothing else.
Tool-choice checks:
T1. Both documented tools are used rather than reimplementing the decoding inline.
"""


def correct_response(task: TaskInstance) -> str:
    """A minimal passing candidate: print the ground truth as a literal."""
    literal = task.ground_truth.replace("\\", "\\\\").replace("'", "\\'")
    return action_block(f"print('{literal}')")


def emit_episode_entries(
    builder: ScriptBuilder,
    task: TaskInstance,
    config,
    scores: list[int] | None = None,
    response: str | None = None,
) -> None:
    """Append the exact entries one episode of the given strategy consumes.

    ``scores`` drives the per-round verifier scores for refinement methods and
    the per-candidate ratings for best-of-N; it defaults to an immediate 10.
    """
    response = response if response is not None else correct_response(task)
    method = config.method
    if method == "codeact":
        builder.generator(response)
    elif method == "self_refine":
        builder.generator(response)
        builder.verifier("NO ISSUES")
    elif method == "self_debug":
        builder.generator(response)
    elif method == "best_of_n":
        scorer = config.bon_scorer
        if scorer in ("sample_rubric", "sample_rubric_logprob"):
            builder.rubric_gen(SAMPLE_RUBRIC_TEXT)
        for _ in range(config.N):
            builder.generator(response)
        for i in range(config.N):
            if scorer == "self_rated":
                builder.verifier(str((scores or [7] * config.N)[i]))
            elif scorer in ("fixed_rubric", "sample_rubric"):
                builder.verifier(scripted_score_response((scores or [7] * config.N)[i]))
            elif scorer in ("logprob", "fixed_rubric_logprob", "sample_rubric_logprob"):
                builder.verifier("A", first_token_logprobs=(("A", 0.0),))
            # the static scorer consumes no entries
    elif method in ("rubric_refine", "fixed_rubric_refine"):
        if method == "rubric_refine":
            builder.rubric_gen(SAMPLE_RUBRIC_TEXT)
        for score in scores or [10]:
            builder.generator(response)
            builder.verifier(scripted_score_response(score))
    elif method == "static_refine":
        builder.generator(response)  # a clean program scores 10 and stops
    else:  # pragma: no cover
        raise ValueError(method)


def build_plan_script(tasks, configs, trials: int, scores_for=None) -> ScriptBuilder:
    """Entries for a whole run plan in run_plan's consumption order."""
    builder = ScriptBuilder()
    for config in configs:
        for trial in range(1, trials + 1):
            for task in tasks:
                scores = scores_for(task, config, trial) if scores_for else None
                emit_episode_entries(builder, task, config, scores=scores)
    return builder


def simple_task() -> TaskInstance:
    """A tiny standalone task for tests that do not need the mini suite."""
    return TaskInstance(
        id="echo_add",
        family="trade",
        instruction="Add 2 and 3 with the add tool and print the sum.",
        tools=(builtin_tool("add"),),
        ground_truth="5",
    )


def kwonly_tool() -> ToolSpec:
    return ToolSpec(
        name="set_precision",
        params=(ParamSpec("value"), ParamSpec("digits", kind="keyword_only")),
        doc="Round value to digits decimal places.",
        impl_id="round_to",
    )
