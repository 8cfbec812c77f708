"""Run plans over (suite x methods x trials), the built-in mini suite, and
episode-log serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from . import actionlang as al
from .checker import StaticReport
from .modelio import TransportError, ScriptExhausted, ScriptMismatch, BackendUnsupported
from .registry import ParamSpec, TaskInstance, TaskSuite, ToolSpec
from .rubric import Rubric
from .sandbox import AttemptGate, ExecutionResult, judge, shadow_execute
from .strategies import CallUsage, Episode, StrategyConfig, Totals, run_strategy
from .verify import ScoreReport

SCHEMA_VERSION = "1.0"


# --- Built-in mini suite --------------------------------------------------------

_TOOL_DEFS: dict[str, tuple[tuple[ParamSpec, ...], str]] = {
    "hex_to_ascii": (
        (ParamSpec("hex_string"),),
        "Convert a hexadecimal string to the ASCII text it encodes.",
    ),
    "caesar_decode": (
        (ParamSpec("message"), ParamSpec("shift")),
        "Decode a Caesar cipher: shift each letter of message back by shift positions.",
    ),
    "caesar_encode": (
        (ParamSpec("message"), ParamSpec("shift")),
        "Encode message with a Caesar cipher: shift each letter forward by shift positions.",
    ),
    "find_flights": (
        (ParamSpec("origin"), ParamSpec("destination"), ParamSpec("date")),
        "Search flights from origin to destination on the given date. Returns a list of\n"
        "flight records sorted by ascending price; each record has 'airline', 'origin',\n"
        "'destination', 'date', and 'price'.",
    ),
    "book_hotel": (
        (ParamSpec("city"), ParamSpec("preference")),
        "List hotels in city that offer the given preference. Returns records sorted by\n"
        "ascending nightly price; each has 'name', 'city', 'price_per_night', and\n"
        "'prefs' (a list of amenity strings).",
    ),
    "budget_calculator": (
        (ParamSpec("flight_price"), ParamSpec("hotel_price_per_night"), ParamSpec("nights")),
        "Compute the trip total: flight_price + hotel_price_per_night * nights.",
    ),
    "add": ((ParamSpec("a"), ParamSpec("b")), "Add two numbers."),
    "subtract": ((ParamSpec("a"), ParamSpec("b")), "Subtract b from a."),
    "multiply": ((ParamSpec("a"), ParamSpec("b")), "Multiply two numbers."),
    "divide": ((ParamSpec("a"), ParamSpec("b")), "Divide a by b."),
    "max_value": (
        (ParamSpec("values", kind="variadic_positional"),),
        "Return the largest of the given numbers.",
    ),
    "round_to": (
        (ParamSpec("value"), ParamSpec("digits", kind="keyword_only")),
        "Round value to the given number of decimal digits; digits must be passed by\nkeyword.",
    ),
    "dna_complement": (
        (ParamSpec("sequence"),),
        "Return the base complement of an uppercase DNA sequence (A<->T, C<->G).",
    ),
    "dna_transcribe": (
        (ParamSpec("sequence"),),
        "Transcribe an uppercase DNA sequence into RNA (every T becomes U).",
    ),
}


def builtin_tool(impl_id: str, name: str | None = None) -> ToolSpec:
    """ToolSpec for one of the built-in implementations, optionally renamed."""
    params, doc = _TOOL_DEFS[impl_id]
    return ToolSpec(name=name or impl_id, params=params, doc=doc, impl_id=impl_id)


@dataclass(frozen=True)
class _MiniTask:
    task: TaskInstance
    reference_program: str


def _mini_tasks() -> list[_MiniTask]:
    tasks = []

    tasks.append(
        _MiniTask(
            TaskInstance(
                id="decoder_hex_caesar",
                family="message_decoder",
                instruction=(
                    "Decode a message that was first converted to hexadecimal and then "
                    "encoded with a Caesar cipher using a shift of 2. The encoded input "
                    "is '4d4f5252'. Print the decoded message."
                ),
                tools=(builtin_tool("hex_to_ascii", "convert_hex_to_ascii"), builtin_tool("caesar_decode")),
                ground_truth="KMPP",
            ),
            "ascii_message = convert_hex_to_ascii(hex_string='4d4f5252')\n"
            "decoded_message = caesar_decode(message=ascii_message, shift=2)\n"
            "print(decoded_message)",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="decoder_caesar_basic",
                family="message_decoder",
                instruction=(
                    "A scout intercepted the Caesar-encoded message 'Khoor', known to use "
                    "a shift of 3. Decode it and print the plaintext."
                ),
                tools=(builtin_tool("caesar_decode"), builtin_tool("caesar_encode")),
                ground_truth="Hello",
            ),
            "print(caesar_decode(message='Khoor', shift=3))",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="decoder_hex_basic",
                family="message_decoder",
                instruction="Convert the hexadecimal string '48454c4c4f' to text and print it.",
                tools=(builtin_tool("hex_to_ascii", "convert_hex_to_ascii"), builtin_tool("caesar_decode")),
                ground_truth="HELLO",
            ),
            "print(convert_hex_to_ascii(hex_string='48454c4c4f'))",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="decoder_caesar_encode",
                family="message_decoder",
                instruction="Encode the word 'ZEBRA' with a Caesar cipher of shift 4 and print the encoded text.",
                tools=(builtin_tool("caesar_encode"), builtin_tool("caesar_decode")),
                ground_truth="DIFVE",
            ),
            "print(caesar_encode(message='ZEBRA', shift=4))",
        )
    )

    tasks.append(
        _MiniTask(
            TaskInstance(
                id="travel_trip_budget",
                family="travel",
                instruction=(
                    "Plan a trip from city 'E' to city 'B' departing on '2023-11-10'. "
                    "Take the cheapest available flight. Stay at the cheapest hotel in "
                    "'B' that offers a gym but does not have a pool. Print the total "
                    "budget for the flight plus 3 nights at that hotel."
                ),
                tools=(
                    builtin_tool("find_flights"),
                    builtin_tool("book_hotel"),
                    builtin_tool("budget_calculator"),
                ),
                ground_truth="464",
            ),
            "flights = find_flights(origin='E', destination='B', date='2023-11-10')\n"
            "hotels = book_hotel(city='B', preference='gym')\n"
            "filtered = [h for h in hotels if 'pool' not in h['prefs']]\n"
            "total = budget_calculator(flight_price=flights[0]['price'], "
            "hotel_price_per_night=filtered[0]['price_per_night'], nights=3)\n"
            "print(total)",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="travel_cheapest_flight",
                family="travel",
                instruction=(
                    "Search flights from 'A' to 'C' on '2024-03-02' and print the price "
                    "of the cheapest one."
                ),
                tools=(builtin_tool("find_flights"), builtin_tool("budget_calculator")),
                ground_truth="327",
            ),
            "flights = find_flights(origin='A', destination='C', date='2024-03-02')\nprint(flights[0]['price'])",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="travel_hotel_price",
                family="travel",
                instruction="Find the cheapest hotel in 'Doria' that offers wifi and print its nightly price.",
                tools=(builtin_tool("book_hotel"), builtin_tool("budget_calculator")),
                ground_truth="110",
            ),
            "hotels = book_hotel(city='Doria', preference='wifi')\nprint(hotels[0]['price_per_night'])",
        )
    )

    tasks.append(
        _MiniTask(
            TaskInstance(
                id="trade_total_cost",
                family="trade",
                instruction=(
                    "A trader buys 7 units at 12.5 credits each and pays a flat fee of "
                    "30 credits. Use the arithmetic tools to compute the total cost and "
                    "print it."
                ),
                tools=(builtin_tool("multiply"), builtin_tool("add"), builtin_tool("subtract")),
                ground_truth="117.5",
            ),
            "subtotal = multiply(a=7, b=12.5)\ntotal = add(a=subtotal, b=30)\nprint(total)",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="trade_unit_price",
                family="trade",
                instruction="A crate of 8 identical parts costs 126 credits in total. Compute and print the per-part price.",
                tools=(builtin_tool("divide"), builtin_tool("multiply")),
                ground_truth="15.75",
            ),
            "print(divide(a=126, b=8))",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="trade_best_offer",
                family="trade",
                instruction="Offers of 310, 295, 342, and 318 credits came in for a shipment. Print the highest offer.",
                tools=(builtin_tool("max_value"), builtin_tool("subtract")),
                ground_truth="342",
            ),
            "print(max_value(310, 295, 342, 318))",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="trade_margin",
                family="trade",
                instruction=(
                    "An item sells for 149.99 credits and costs 92.5 credits to produce. "
                    "Print the per-unit margin rounded to 1 decimal digit."
                ),
                tools=(builtin_tool("subtract"), builtin_tool("round_to")),
                ground_truth="57.5",
            ),
            "margin = subtract(a=149.99, b=92.5)\nprint(round_to(margin, digits=1))",
        )
    )

    tasks.append(
        _MiniTask(
            TaskInstance(
                id="dna_complement_basic",
                family="dna",
                instruction="Print the complementary DNA strand for the sequence 'ATCG'.",
                tools=(builtin_tool("dna_complement"), builtin_tool("dna_transcribe")),
                ground_truth="TAGC",
            ),
            "print(dna_complement(sequence='ATCG'))",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="dna_transcribe_basic",
                family="dna",
                instruction="Transcribe the DNA sequence 'GATTACA' into RNA and print the result.",
                tools=(builtin_tool("dna_transcribe"), builtin_tool("dna_complement")),
                ground_truth="GAUUACA",
            ),
            "print(dna_transcribe(sequence='GATTACA'))",
        )
    )
    tasks.append(
        _MiniTask(
            TaskInstance(
                id="dna_chain",
                family="dna",
                instruction=(
                    "Take the complement of the DNA sequence 'ACGTT', transcribe that "
                    "complement into RNA, and print the result."
                ),
                tools=(builtin_tool("dna_complement"), builtin_tool("dna_transcribe")),
                ground_truth="UGCAA",
            ),
            "comp = dna_complement(sequence='ACGTT')\nrna = dna_transcribe(sequence=comp)\nprint(rna)",
        )
    )
    return tasks


def reference_programs() -> dict[str, str]:
    """The reference solution per mini-suite task (the ground-truth oracle)."""
    return {mt.task.id: mt.reference_program for mt in _mini_tasks()}


def builtin_mini_suite() -> TaskSuite:
    """The shipped offline task suite.

    Ground truths are frozen values derived by running each task's reference
    program through the sandbox; the test suite re-derives and checks them.
    """
    return TaskSuite(tasks=tuple(mt.task for mt in _mini_tasks()))


# --- Episode (de)serialization ----------------------------------------------------


def _span_json(span: al.Span | None) -> list[int] | None:
    if span is None:
        return None
    return [span.start_line, span.start_col, span.end_line, span.end_col]


def _usage_json(usage: CallUsage) -> dict:
    return {
        "lm_calls": usage.lm_calls,
        "tokens_in": usage.tokens_in,
        "tokens_out": usage.tokens_out,
        "latency_ms": usage.latency_ms,
    }


def _score_report_json(report: ScoreReport | None) -> dict | None:
    if report is None:
        return None
    return {
        "score": report.score,
        "item_results": {
            category: [{"item": v.item_id, "verdict": v.verdict, "reason": v.reason} for v in verdicts]
            for category, verdicts in report.item_results.items()
        },
        "critical_failures": list(report.critical_failures),
        "revision_instructions": list(report.revision_instructions),
        "caps_applied": list(report.caps_applied),
    }


def _static_report_json(report: StaticReport | None) -> dict | None:
    if report is None:
        return None
    return {
        "score": report.score,
        "findings": [
            {"code": f.code, "message": f.message, "span": _span_json(f.span), "penalty": f.penalty}
            for f in report.findings
        ],
    }


def _execution_json(result: ExecutionResult | None) -> dict | None:
    if result is None:
        return None
    fault = None
    if result.fault is not None:
        fault = {"kind": result.fault.kind, "message": result.fault.message, "span": _span_json(result.fault.span)}
    return {"final_value": result.final_value, "fault": fault, "trace": [list(step) for step in result.trace]}


def _rubric_json(rubric: Rubric | None) -> dict | None:
    if rubric is None:
        return None
    return {
        "origin": rubric.origin,
        "source_text": rubric.source_text,
        "items": [{"id": item.id, "category": item.category, "text": item.text} for item in rubric.items],
    }


def to_record(episode: Episode) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "task_id": episode.task_id,
        "trial": episode.trial,
        "method": episode.method,
        "rubric": _rubric_json(episode.rubric),
        "candidates": [
            {
                "round": c.round,
                "raw_text": c.raw_text,
                "code": c.code,
                "score_report": _score_report_json(c.score_report),
                "static_report": _static_report_json(c.static_report),
                "selection_score": c.selection_score,
                "usage": _usage_json(c.usage),
                "execution": _execution_json(c.execution),
                "shadow_success": c.shadow_success,
            }
            for c in episode.candidates
        ],
        "chosen_round": episode.chosen_round,
        "stop_reason": episode.stop_reason,
        "execution": _execution_json(episode.execution),
        "success": episode.success,
        "totals": {
            "lm_calls": episode.totals.lm_calls,
            "tokens_in": episode.totals.tokens_in,
            "tokens_out": episode.totals.tokens_out,
            "wall_ms": episode.totals.wall_ms,
            "rounds_used": episode.totals.rounds_used,
            "rubric_calls": episode.totals.rubric_calls,
        },
        "rubric_usage": _usage_json(episode.rubric_usage) if episode.rubric_usage is not None else None,
        "error": episode.error,
    }


def write_episode_log(path: str, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def read_episode_log(path: str) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            version = str(record.get("schema_version", ""))
            major = version.split(".")[0]
            if major != SCHEMA_VERSION.split(".")[0]:
                raise ValueError(f"unsupported episode log schema version {version!r}")
            records.append(record)
    return records


# --- Run plans ---------------------------------------------------------------------


@dataclass
class RunPlan:
    suite: TaskSuite
    methods: list[StrategyConfig]
    trials: int = 1
    seed: int = 0
    shadow_judge: bool = False
    log_path: str | None = None
    task_ids: list[str] | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class MethodSummary:
    method: str
    mean_success: float
    se: float
    trials: int
    episodes: int


@dataclass(frozen=True)
class RunSummary:
    methods: dict[str, MethodSummary]
    n_episodes: int
    log_path: str | None


def _failed_episode(task: TaskInstance, config: StrategyConfig, trial: int, error: str) -> Episode:
    return Episode(
        task_id=task.id,
        trial=trial,
        method=config.describe(),
        rubric=None,
        candidates=[],
        chosen_round=None,
        stop_reason="budget",
        execution=None,
        success=False,
        totals=Totals(),
        error=error,
    )


def shadow_annotate(episode: Episode, task: TaskInstance) -> None:
    """Analysis-only: judge every candidate in a gate-exempt shadow sandbox."""
    for candidate in episode.candidates:
        if candidate.code is None:
            candidate.shadow_success = False
            continue
        try:
            program = al.parse_program(candidate.code)
        except al.ParseError:
            candidate.shadow_success = False
            continue
        result = shadow_execute(program, task)
        candidate.shadow_success = judge(result, task)


def run_plan(plan: RunPlan, backend) -> RunSummary:
    """Run every (method, trial, task) combination to exactly one episode.

    A failing backend aborts only the episode it broke, which is recorded as
    failed; the plan keeps going. Matched trial indices across methods support
    paired statistics downstream.
    """
    tasks = list(plan.suite)
    if plan.task_ids is not None:
        wanted = set(plan.task_ids)
        tasks = [t for t in tasks if t.id in wanted]
        missing = wanted - {t.id for t in tasks}
        if missing:
            raise KeyError(f"unknown task id(s): {', '.join(sorted(missing))}")

    records: list[dict] = []
    per_method_trial_success: dict[str, dict[int, list[bool]]] = {}
    for config in plan.methods:
        for trial in range(1, plan.trials + 1):
            gate = AttemptGate(mode="debug_loop" if config.method == "self_debug" else "single_attempt")
            # the seed varies only by trial: cross-trial variation comes from sampling
            trial_seed = plan.seed * 100003 + trial
            for task in tasks:
                try:
                    episode = run_strategy(task, backend, config, gate, trial, seed=trial_seed)
                except (TransportError, ScriptExhausted, ScriptMismatch, BackendUnsupported) as exc:
                    episode = _failed_episode(task, config, trial, f"{type(exc).__name__}: {exc}")
                if plan.shadow_judge:
                    shadow_annotate(episode, task)
                records.append(to_record(episode))
                per_method_trial_success.setdefault(config.label, {}).setdefault(trial, []).append(episode.success)

    if plan.log_path is not None:
        write_episode_log(plan.log_path, records)

    methods = {}
    for label, by_trial in per_method_trial_success.items():
        rates = [sum(flags) / len(flags) for _, flags in sorted(by_trial.items())]
        mean = sum(rates) / len(rates)
        if len(rates) > 1:
            sd = math.sqrt(sum((r - mean) ** 2 for r in rates) / (len(rates) - 1))
        else:
            sd = 0.0
        methods[label] = MethodSummary(
            method=label,
            mean_success=mean,
            se=sd / math.sqrt(len(rates)),
            trials=len(rates),
            episodes=sum(len(flags) for flags in by_trial.values()),
        )
    return RunSummary(methods=methods, n_episodes=len(records), log_path=plan.log_path)
