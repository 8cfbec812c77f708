"""The labeled static-checker corpus: one program per audited failure class."""

from __future__ import annotations

from preflight import checker

from .conftest import ROUND0_RESPONSE, REPAIRED_RESPONSE, action_block

# (name, response text, expected finding codes, expected score)
# Checked against the registry from the checker_registry fixture.
CASES = [
    ("clean", REPAIRED_RESPONSE, [], 10),
    (
        "unknown_kwarg",
        action_block("caesar_decode(message='MORR', offset=2)"),
        [checker.UNKNOWN_KWARG],
        8,
    ),
    (
        "surplus_positional",
        action_block("hotels = book_hotel('B', 'gym', '-pool')\nprint(hotels)"),
        [checker.UNKNOWN_KWARG],
        8,
    ),
    (
        "doublestar_expansion",
        action_block("opts = {'message': 'MORR', 'shift': 2}\nprint(caesar_decode(**opts))"),
        [checker.DOUBLESTAR_EXPANSION],
        8,
    ),
    (
        "star_into_non_variadic",
        action_block("args = ['MORR', 2]\nprint(caesar_decode(*args))"),
        [checker.STAR_EXPANSION_NON_VARIADIC],
        8,
    ),
    (
        "keyword_before_positional",
        action_block("print(caesar_decode(message='MORR', 2))"),
        [checker.AMBIGUOUS_BINDING],
        9,
    ),
    (
        "missing_required_param",
        action_block("print(caesar_decode(message='MORR'))"),
        [checker.MISSING_REQUIRED_PARAM],
        8,
    ),
    (
        "unknown_tool",
        action_block("print(rot13('MORR'))"),
        [checker.UNKNOWN_TOOL],
        7,
    ),
    (
        "syntax_error",
        action_block("x = = 3"),
        [checker.SYNTAX_ERROR],
        1,
    ),
    (
        "missing_action_block",
        "Answer: 42",
        [checker.FORMAT_VIOLATION],
        7,
    ),
    (
        "silent_semantic_failure",
        ROUND0_RESPONSE,
        [],
        10,
    ),
]
