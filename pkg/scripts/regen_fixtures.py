#!/usr/bin/env python3
"""Regenerate the shipped fixtures under fixtures/.

Writes the worked decoder-example playback scripts (the repair loop catching a
silent wrong-order bug, and the debug loop sailing past it) plus the mini task
suite in its JSON file form.
"""

from __future__ import annotations

import json
from pathlib import Path

from preflight.harness import builtin_mini_suite
from preflight.modelio import ScriptEntry, Usage
from preflight.registry import save_suite

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

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

TASK_RUBRIC = """Intent:
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


def _item(item_id: str, verdict: str, reason: str) -> dict:
    return {"item": item_id, "verdict": verdict, "reason": reason}


ROUND0_VERDICT = json.dumps(
    {
        "feedback": {
            "item_results": {
                "intent": [
                    _item("A", "FAIL", "The hex layer is never decoded first; caesar_decode is applied to the raw hex input."),
                    _item("B", "PASS", "caesar_decode is called with shift 2."),
                ],
                "ordering_dataflow": [
                    _item("D1", "FAIL", "caesar_decode runs before convert_hex_to_ascii, the reverse of the required order."),
                    _item("D2", "FAIL", "The output of convert_hex_to_ascii never reaches caesar_decode's message argument."),
                ],
                "argument_format": [_item("a1", "PASS", "Both calls use valid signatures.")],
                "type_shape_contract": [_item("S1", "PASS", "String values flow between the calls.")],
                "execution_critical": [
                    _item("E1", "FAIL", "The hex input '4d4f5252' is not decoded with convert_hex_to_ascii first."),
                ],
                "final_answer": [
                    _item("F1", "FAIL", "The printed value cannot be the decoded message given the reversed order."),
                ],
                "tool_choice": [_item("T1", "PASS", "Both documented tools are used.")],
            },
            "critical_failures": ["The two decoding operations run in the wrong order."],
            "revision_instructions": [
                "Call convert_hex_to_ascii on '4d4f5252' first, then pass its output as the message argument of caesar_decode with shift=2.",
            ],
        },
        "score": 3,
    },
    indent=2,
)

ROUND1_VERDICT = json.dumps(
    {
        "feedback": {
            "item_results": {
                "intent": [
                    _item("A", "PASS", "convert_hex_to_ascii decodes the hex input first."),
                    _item("B", "PASS", "caesar_decode(message=..., shift=2) undoes the Caesar layer."),
                ],
                "ordering_dataflow": [
                    _item("D1", "PASS", "The hex decode precedes the Caesar decode."),
                    _item("D2", "PASS", "ascii_message feeds caesar_decode's message argument."),
                ],
                "argument_format": [_item("a1", "PASS", "Keyword arguments match the documented signature.")],
                "type_shape_contract": [_item("S1", "PASS", "A string flows from the first call into the second.")],
                "execution_critical": [_item("E1", "PASS", "The hex input is decoded first.")],
                "final_answer": [_item("F1", "PASS", "Only the decoded message is printed.")],
                "tool_choice": [_item("T1", "PASS", "Both documented tools are used.")],
            },
            "critical_failures": [],
            "revision_instructions": [],
        },
        "score": 10,
    },
    indent=2,
)


def _write(path: Path, entries: list[ScriptEntry]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(entry.to_json()) + "\n")
    print(f"wrote {path} ({len(entries)} entries)")


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)

    repair_entries = [
        ScriptEntry(tag="rubric_gen", index=0, text=TASK_RUBRIC, usage=Usage(412, 167), latency_ms=640.0),
        ScriptEntry(tag="generator", index=0, text=ROUND0_RESPONSE, usage=Usage(583, 74), latency_ms=810.0),
        ScriptEntry(tag="verifier", index=0, text=ROUND0_VERDICT, usage=Usage(905, 233), latency_ms=920.0),
        ScriptEntry(tag="generator", index=1, text=REPAIRED_RESPONSE, usage=Usage(1241, 76), latency_ms=835.0),
        ScriptEntry(tag="verifier", index=1, text=ROUND1_VERDICT, usage=Usage(911, 214), latency_ms=905.0),
    ]
    _write(FIXTURES / "worked_decoder_script.jsonl", repair_entries)

    debug_entries = [
        ScriptEntry(tag="generator", index=0, text=ROUND0_RESPONSE, usage=Usage(583, 74), latency_ms=810.0),
    ]
    _write(FIXTURES / "worked_decoder_selfdebug_script.jsonl", debug_entries)

    suite_path = FIXTURES / "mini_suite.json"
    suite_path.write_text(save_suite(builtin_mini_suite()), encoding="utf-8")
    print(f"wrote {suite_path}")


if __name__ == "__main__":
    main()
