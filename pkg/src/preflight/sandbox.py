"""Sandboxed interpreter for parsed action programs plus the built-in tools.

Faults are recorded as values inside ExecutionResult rather than raised, so
execution-feedback strategies can consume them as text. The attempt gate
enforces the one-live-execution deployment rule.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass, field
from typing import Callable

from . import actionlang as al
from .registry import TaskInstance, ToolSpec

FAULT_KINDS = ("UNKNOWN_TOOL", "ARITY", "UNKNOWN_KEYWORD", "NAME_ERROR", "TYPE_FAULT", "TOOL_FAULT")


class AttemptExhausted(Exception):
    """A strategy asked for a second live execution in single-attempt mode."""


class ToolFault(Exception):
    """Raised by built-in implementations on bad argument values."""


@dataclass(frozen=True)
class Fault:
    kind: str
    message: str
    span: al.Span | None = None

    def render(self) -> str:
        if self.span is not None:
            return f"{self.kind} ({self.span.location()}): {self.message}"
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True)
class ExecutionResult:
    final_value: str | None
    fault: Fault | None
    trace: tuple[tuple[str, str], ...]


class AttemptGate:
    """Counts live executions per task id; single-attempt mode allows one."""

    def __init__(self, mode: str = "single_attempt"):
        if mode not in ("single_attempt", "debug_loop"):
            raise ValueError(f"unknown gate mode {mode!r}")
        self.mode = mode
        self.attempts_used: dict[str, int] = {}
        self._lock = threading.Lock()

    def register(self, task_id: str) -> None:
        with self._lock:
            used = self.attempts_used.get(task_id, 0)
            if self.mode == "single_attempt" and used >= 1:
                raise AttemptExhausted(f"task {task_id!r} already used its single live execution")
            self.attempts_used[task_id] = used + 1


@dataclass
class BoundTool:
    spec: ToolSpec
    fn: Callable


@dataclass
class Environment:
    bindings: dict[str, object] = field(default_factory=dict)
    tools: dict[str, BoundTool] = field(default_factory=dict)
    emitted: list[str] = field(default_factory=list)


def environment_for(task: TaskInstance) -> Environment:
    library = builtin_library()
    tools = {t.name: BoundTool(spec=t, fn=library[t.impl_id]) for t in task.tools}
    return Environment(tools=tools)


class _FaultSignal(Exception):
    def __init__(self, fault: Fault):
        self.fault = fault
        super().__init__(fault.render())


def canonical_repr(value: object) -> str:
    """Deterministic repr used inside containers (strings quoted)."""
    if isinstance(value, str):
        return al.render_expr(al.StrLit(value=value))
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, (int, float)):
        return repr(value)
    if value is None:
        return "None"
    if isinstance(value, list):
        return "[" + ", ".join(canonical_repr(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{canonical_repr(k)}: {canonical_repr(v)}" for k, v in value.items()) + "}"
    return repr(value)


def canonical_display(value: object) -> str:
    """How a printed value is rendered: bare strings, container items quoted."""
    if isinstance(value, str):
        return value
    return canonical_repr(value)


class _Interpreter:
    def __init__(self, env: Environment):
        self.env = env
        self.trace: list[tuple[str, str]] = []

    def fault(self, kind: str, message: str, span: al.Span | None = None) -> None:
        raise _FaultSignal(Fault(kind=kind, message=message, span=span))

    def run(self, program: al.Program) -> None:
        for stmt in program.statements:
            value = self.eval(stmt.value)
            if isinstance(stmt, al.Assign):
                self.env.bindings[stmt.target] = value

    def eval(self, expr: al.Expr) -> object:
        if isinstance(expr, al.Name):
            if expr.id not in self.env.bindings:
                self.fault("NAME_ERROR", f"name {expr.id!r} is not defined", expr.span)
            return self.env.bindings[expr.id]
        if isinstance(expr, al.StrLit):
            return expr.value
        if isinstance(expr, al.IntLit):
            return expr.value
        if isinstance(expr, al.FloatLit):
            return expr.value
        if isinstance(expr, al.BoolLit):
            return expr.value
        if isinstance(expr, al.NoneLit):
            return None
        if isinstance(expr, al.ListLit):
            return [self.eval(item) for item in expr.items]
        if isinstance(expr, al.DictLit):
            result = {}
            for key_expr, value_expr in expr.entries:
                key = self.eval(key_expr)
                if isinstance(key, (list, dict)):
                    self.fault("TYPE_FAULT", "unhashable dict key", key_expr.span)
                result[key] = self.eval(value_expr)
            return result
        if isinstance(expr, al.Subscript):
            return self.eval_subscript(expr)
        if isinstance(expr, al.Compare):
            return self.eval_compare(expr)
        if isinstance(expr, al.BinOp):
            return self.eval_binop(expr)
        if isinstance(expr, al.UnaryNeg):
            operand = self.eval(expr.operand)
            if isinstance(operand, bool) or not isinstance(operand, (int, float)):
                self.fault("TYPE_FAULT", "unary minus needs a number", expr.span)
            return -operand
        if isinstance(expr, al.BoolOp):
            return self.eval_boolop(expr)
        if isinstance(expr, al.Call):
            return self.eval_call(expr)
        if isinstance(expr, al.ListComp):
            return self.eval_listcomp(expr)
        raise TypeError(f"unknown expression node {expr!r}")  # pragma: no cover

    def eval_subscript(self, expr: al.Subscript) -> object:
        base = self.eval(expr.base)
        index = self.eval(expr.index)
        if isinstance(base, dict):
            if index not in base:
                self.fault("TYPE_FAULT", f"key {canonical_repr(index)} not found", expr.span)
            return base[index]
        if isinstance(base, (list, str)):
            if isinstance(index, bool) or not isinstance(index, int):
                self.fault("TYPE_FAULT", "sequence indices must be integers", expr.span)
            try:
                return base[index]
            except IndexError:
                self.fault("TYPE_FAULT", f"index {index} out of range", expr.span)
        self.fault("TYPE_FAULT", "value is not subscriptable", expr.span)

    def eval_compare(self, expr: al.Compare) -> bool:
        left = self.eval(expr.left)
        right = self.eval(expr.right)
        op = expr.op
        try:
            if op == "==":
                return left == right
            if op == "!=":
                return left != right
            if op == "in":
                return left in right  # type: ignore[operator]
            if op == "not in":
                return left not in right  # type: ignore[operator]
            if op == "<":
                return left < right  # type: ignore[operator]
            if op == "<=":
                return left <= right  # type: ignore[operator]
            if op == ">":
                return left > right  # type: ignore[operator]
            return left >= right  # type: ignore[operator]
        except TypeError as exc:
            self.fault("TYPE_FAULT", str(exc), expr.span)

    def eval_binop(self, expr: al.BinOp) -> object:
        left = self.eval(expr.left)
        right = self.eval(expr.right)
        try:
            if expr.op == "+":
                return left + right  # type: ignore[operator]
            if expr.op == "-":
                return left - right  # type: ignore[operator]
            if expr.op == "*":
                return left * right  # type: ignore[operator]
            if expr.op == "/":
                return left / right  # type: ignore[operator]
            if expr.op == "//":
                return left // right  # type: ignore[operator]
            return left % right  # type: ignore[operator]
        except TypeError as exc:
            self.fault("TYPE_FAULT", str(exc), expr.span)
        except ZeroDivisionError:
            self.fault("TYPE_FAULT", "division by zero", expr.span)

    def eval_boolop(self, expr: al.BoolOp) -> object:
        if expr.op == "not":
            return not self.eval(expr.operands[0])
        left = self.eval(expr.operands[0])
        if expr.op == "and":
            return self.eval(expr.operands[1]) if left else left
        return left if left else self.eval(expr.operands[1])

    def eval_listcomp(self, expr: al.ListComp) -> list:
        iterable = self.eval(expr.iterable)
        if isinstance(iterable, dict):
            items = list(iterable)
        elif isinstance(iterable, (list, str)):
            items = list(iterable)
        else:
            self.fault("TYPE_FAULT", "value is not iterable", expr.iterable.span)
        had_prev = expr.var in self.env.bindings
        prev = self.env.bindings.get(expr.var)
        out = []
        try:
            for item in items:
                self.env.bindings[expr.var] = item
                if expr.condition is not None and not self.eval(expr.condition):
                    continue
                out.append(self.eval(expr.element))
        finally:
            # comprehension variables do not leak into the program scope
            if had_prev:
                self.env.bindings[expr.var] = prev
            else:
                self.env.bindings.pop(expr.var, None)
        return out

    def eval_call(self, expr: al.Call) -> object:
        if expr.callee == "print":
            return self.eval_print(expr)
        tool = self.env.tools.get(expr.callee)
        if tool is None:
            self.fault("UNKNOWN_TOOL", f"no tool named {expr.callee!r} is registered", expr.span)
        positional, keywords = self.eval_args(expr)
        bound_pos, bound_kw = self.bind(tool.spec, positional, keywords, expr.span)
        try:
            result = tool.fn(*bound_pos, **bound_kw)
        except ToolFault as exc:
            self.fault("TOOL_FAULT", f"{expr.callee}: {exc}", expr.span)
        except Exception as exc:  # implementation rejected the values
            self.fault("TOOL_FAULT", f"{expr.callee}: {exc}", expr.span)
        self.trace.append((al.render_expr(expr), canonical_repr(result)))
        return result

    def eval_print(self, expr: al.Call) -> None:
        values: list[object] = []
        for arg in expr.args:
            if isinstance(arg, al.Positional):
                values.append(self.eval(arg.value))
            elif isinstance(arg, al.Star):
                spread = self.eval(arg.value)
                if not isinstance(spread, list):
                    self.fault("TYPE_FAULT", "star expansion needs a list", arg.span)
                values.extend(spread)
            else:
                self.fault("TYPE_FAULT", "print takes positional arguments only", arg.span)
        rendered = " ".join(canonical_display(v) for v in values)
        self.env.emitted.append(rendered)
        self.trace.append((al.render_expr(expr), rendered))
        return None

    def eval_args(self, expr: al.Call) -> tuple[list[object], dict[str, object]]:
        positional: list[object] = []
        keywords: dict[str, object] = {}
        for arg in expr.args:
            if isinstance(arg, al.Positional):
                positional.append(self.eval(arg.value))
            elif isinstance(arg, al.Keyword):
                if arg.name in keywords:
                    self.fault("ARITY", f"duplicate keyword argument {arg.name!r}", arg.span)
                keywords[arg.name] = self.eval(arg.value)
            elif isinstance(arg, al.Star):
                spread = self.eval(arg.value)
                if not isinstance(spread, list):
                    self.fault("TYPE_FAULT", "star expansion needs a list", arg.span)
                positional.extend(spread)
            else:
                spread = self.eval(arg.value)
                if not isinstance(spread, dict) or not all(isinstance(k, str) for k in spread):
                    self.fault("TYPE_FAULT", "keyword expansion needs a dict with string keys", arg.span)
                for key, value in spread.items():
                    if key in keywords:
                        self.fault("ARITY", f"duplicate keyword argument {key!r}", arg.span)
                    keywords[key] = value
        return positional, keywords

    def bind(
        self,
        spec: ToolSpec,
        positional: list[object],
        keywords: dict[str, object],
        span: al.Span,
    ) -> tuple[list[object], dict[str, object]]:
        """Bind evaluated arguments against the documented signature."""
        pos_params = spec.positional_params
        variadic = spec.variadic_param
        kw_only = spec.keyword_only_params
        slots: dict[str, object] = {}

        if len(positional) > len(pos_params) and variadic is None:
            self.fault(
                "ARITY",
                f"{spec.name} takes {len(pos_params)} positional argument(s) but {len(positional)} were given",
                span,
            )
        for param, value in zip(pos_params, positional):
            slots[param.name] = value
        extra = list(positional[len(pos_params):])

        known = {p.name for p in pos_params} | {p.name for p in kw_only}
        for name, value in keywords.items():
            if name not in known:
                self.fault("UNKNOWN_KEYWORD", f"{spec.name} got an unexpected keyword argument {name!r}", span)
            if name in slots:
                self.fault("ARITY", f"{spec.name} got multiple values for argument {name!r}", span)
            slots[name] = value

        missing = [p.name for p in (*pos_params, *kw_only) if p.required and p.name not in slots]
        if missing:
            self.fault("ARITY", f"{spec.name} missing required argument(s): {', '.join(missing)}", span)

        if variadic is not None:
            bound_pos = [slots[p.name] for p in pos_params if p.name in slots]
            bound_pos.extend(extra)
            bound_kw = {p.name: slots[p.name] for p in kw_only if p.name in slots}
            return bound_pos, bound_kw
        # without a variadic, bind everything by keyword so optional gaps are safe
        return [], dict(slots)


def execute(program: al.Program, env: Environment, gate: AttemptGate, task_id: str) -> ExecutionResult:
    """Run a program against the environment, consuming one gated attempt."""
    gate.register(task_id)
    interp = _Interpreter(env)
    fault = None
    try:
        interp.run(program)
    except _FaultSignal as signal:
        fault = signal.fault
    final_value = env.emitted[-1] if env.emitted and fault is None else None
    return ExecutionResult(final_value=final_value, fault=fault, trace=tuple(interp.trace))


_NUMBER_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _as_number(text: str) -> float | None:
    if _NUMBER_RE.match(text):
        return float(text)
    return None


def judge(result: ExecutionResult, task: TaskInstance) -> bool:
    """Exact-match success: no fault and the emitted value equals ground truth.

    Both sides are whitespace-trimmed; if both parse as decimal numbers they
    compare numerically with absolute tolerance 1e-9.
    """
    if result.fault is not None or result.final_value is None:
        return False
    got = result.final_value.strip()
    want = task.ground_truth.strip()
    got_num = _as_number(got)
    want_num = _as_number(want)
    if got_num is not None and want_num is not None:
        return abs(got_num - want_num) <= 1e-9
    return got == want


def shadow_execute(program: al.Program, task: TaskInstance) -> ExecutionResult:
    """Analysis-only execution in a fresh environment, exempt from any gate."""
    return execute(program, environment_for(task), AttemptGate(mode="debug_loop"), task.id)


# --- Built-in implementation library -----------------------------------------


def _digest(*parts: str) -> int:
    joined = "\x1f".join(parts)
    return int.from_bytes(hashlib.sha256(joined.encode("utf-8")).digest()[:4], "big")


def _require_str(name: str, value: object) -> str:
    if not isinstance(value, str):
        raise ToolFault(f"{name} must be a string")
    return value


def _require_number(name: str, value: object) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ToolFault(f"{name} must be a number")
    return value


def _require_int(name: str, value: object) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ToolFault(f"{name} must be an integer")
    return value


def _hex_to_ascii(hex_string: object) -> str:
    text = _require_str("hex_string", hex_string)
    if len(text) % 2 != 0 or not re.fullmatch(r"[0-9a-fA-F]*", text):
        raise ToolFault(f"{text!r} is not a valid hexadecimal string")
    try:
        return bytes.fromhex(text).decode("ascii")
    except (ValueError, UnicodeDecodeError) as exc:
        raise ToolFault(str(exc)) from exc


def _caesar_shift(text: str, shift: int) -> str:
    out = []
    for ch in text:
        if "A" <= ch <= "Z":
            out.append(chr((ord(ch) - ord("A") + shift) % 26 + ord("A")))
        elif "a" <= ch <= "z":
            out.append(chr((ord(ch) - ord("a") + shift) % 26 + ord("a")))
        else:
            out.append(ch)
    return "".join(out)


def _caesar_encode(message: object, shift: object) -> str:
    return _caesar_shift(_require_str("message", message), _require_int("shift", shift))


def _caesar_decode(message: object, shift: object) -> str:
    return _caesar_shift(_require_str("message", message), -_require_int("shift", shift))


_AIRLINES = ("Aria Air", "Blue Jet", "Cloudline")


def _find_flights(origin: object, destination: object, date: object) -> list[dict]:
    origin = _require_str("origin", origin)
    destination = _require_str("destination", destination)
    date = _require_str("date", date)
    seed = _digest("flights", origin, destination, date)
    flights = []
    for k, airline in enumerate(_AIRLINES):
        price = 110 + ((seed >> (4 * k)) % 11) * 35 + k * 7
        flights.append(
            {"airline": airline, "origin": origin, "destination": destination, "date": date, "price": price}
        )
    flights.sort(key=lambda f: (f["price"], f["airline"]))
    return flights


# every city carries all four combinations (rotated), so each amenity always
# has at least one match and "gym" always has both a with-pool and a no-pool hit
_HOTEL_PREF_COMBOS = (
    ("gym", "wifi"),
    ("gym", "pool"),
    ("pool", "breakfast"),
    ("wifi", "breakfast"),
)


def _book_hotel(city: object, preference: object) -> list[dict]:
    city = _require_str("city", city)
    preference = _require_str("preference", preference)
    seed = _digest("hotels", city)
    hotels = []
    for k in range(4):
        prefs = _HOTEL_PREF_COMBOS[(seed + k) % len(_HOTEL_PREF_COMBOS)]
        price = 60 + ((seed >> (3 * k)) % 9) * 15 + k * 5
        hotels.append(
            {"name": f"{city} Hotel {k + 1}", "city": city, "price_per_night": price, "prefs": list(prefs)}
        )
    matching = [h for h in hotels if preference in h["prefs"]]
    matching.sort(key=lambda h: (h["price_per_night"], h["name"]))
    return matching


def _budget_calculator(flight_price: object, hotel_price_per_night: object, nights: object) -> float | int:
    flight = _require_number("flight_price", flight_price)
    nightly = _require_number("hotel_price_per_night", hotel_price_per_night)
    n = _require_int("nights", nights)
    if n < 0:
        raise ToolFault("nights must be non-negative")
    return flight + nightly * n


def _add(a: object, b: object) -> float | int:
    return _require_number("a", a) + _require_number("b", b)


def _subtract(a: object, b: object) -> float | int:
    return _require_number("a", a) - _require_number("b", b)


def _multiply(a: object, b: object) -> float | int:
    return _require_number("a", a) * _require_number("b", b)


def _divide(a: object, b: object) -> float:
    numerator = _require_number("a", a)
    denominator = _require_number("b", b)
    if denominator == 0:
        raise ToolFault("division by zero")
    return numerator / denominator


def _max_value(*values: object) -> float | int:
    if not values:
        raise ToolFault("max_value needs at least one value")
    nums = [_require_number("value", v) for v in values]
    return max(nums)


def _round_to(value: object, *, digits: object) -> float:
    return round(_require_number("value", value), _require_int("digits", digits))


_DNA_COMPLEMENT = {"A": "T", "T": "A", "C": "G", "G": "C"}


def _dna_complement(sequence: object) -> str:
    seq = _require_str("sequence", sequence)
    if not seq or any(ch not in _DNA_COMPLEMENT for ch in seq):
        raise ToolFault(f"{seq!r} is not an uppercase DNA sequence")
    return "".join(_DNA_COMPLEMENT[ch] for ch in seq)


def _dna_transcribe(sequence: object) -> str:
    seq = _require_str("sequence", sequence)
    if not seq or any(ch not in "ACGT" for ch in seq):
        raise ToolFault(f"{seq!r} is not an uppercase DNA sequence")
    return seq.replace("T", "U")


def builtin_library() -> dict[str, Callable]:
    """Deterministic pure implementations keyed by impl_id."""
    return {
        "hex_to_ascii": _hex_to_ascii,
        "caesar_decode": _caesar_decode,
        "caesar_encode": _caesar_encode,
        "find_flights": _find_flights,
        "book_hotel": _book_hotel,
        "budget_calculator": _budget_calculator,
        "add": _add,
        "subtract": _subtract,
        "multiply": _multiply,
        "divide": _divide,
        "max_value": _max_value,
        "round_to": _round_to,
        "dna_complement": _dna_complement,
        "dna_transcribe": _dna_transcribe,
    }
