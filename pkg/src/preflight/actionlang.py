"""Lexer, parser, and analyses for the restricted action language.

Candidate programs are straight-line scripts: assignments and expression
statements over tool calls, literals, lists, dicts, subscripts, comparisons,
arithmetic, boolean operators, and single-clause list comprehensions.
Anything else (attribute access, loops, function definitions, f-strings,
multi-target assignment) is rejected with a ParseError.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union


@dataclass(frozen=True)
class Span:
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def location(self) -> str:
        return f"line {self.start_line}, col {self.start_col}"


_DUMMY_SPAN = Span(1, 1, 1, 1)


class ParseError(Exception):
    """Syntax diagnostic pointing at the first offending token."""

    def __init__(self, message: str, span: Span):
        self.message = message
        self.span = span
        super().__init__(f"{span.location()}: {message}")


class NoActionBlock(Exception):
    pass


class UnterminatedBlock(Exception):
    pass


# --- AST -------------------------------------------------------------------
# Spans never participate in equality: two parses of the same source compare
# structurally identical even if rendered layout differs.


def _span_field() -> Span:
    return field(default=_DUMMY_SPAN, compare=False, repr=False)  # type: ignore[return-value]


@dataclass(frozen=True)
class Name:
    id: str
    span: Span = _span_field()


@dataclass(frozen=True)
class StrLit:
    value: str
    span: Span = _span_field()


@dataclass(frozen=True)
class IntLit:
    value: int
    span: Span = _span_field()


@dataclass(frozen=True)
class FloatLit:
    value: float
    span: Span = _span_field()


@dataclass(frozen=True)
class BoolLit:
    value: bool
    span: Span = _span_field()


@dataclass(frozen=True)
class NoneLit:
    span: Span = _span_field()


@dataclass(frozen=True)
class ListLit:
    items: tuple["Expr", ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class DictLit:
    entries: tuple[tuple["Expr", "Expr"], ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class Subscript:
    base: "Expr"
    index: "Expr"
    span: Span = _span_field()


@dataclass(frozen=True)
class Compare:
    op: str  # ==, !=, <, <=, >, >=, in, not in
    left: "Expr"
    right: "Expr"
    span: Span = _span_field()


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / // %
    left: "Expr"
    right: "Expr"
    span: Span = _span_field()


@dataclass(frozen=True)
class UnaryNeg:
    operand: "Expr"
    span: Span = _span_field()


@dataclass(frozen=True)
class BoolOp:
    op: str  # and, or, not
    operands: tuple["Expr", ...]  # two operands for and/or, one for not
    span: Span = _span_field()


@dataclass(frozen=True)
class Positional:
    value: "Expr"
    span: Span = _span_field()


@dataclass(frozen=True)
class Keyword:
    name: str
    value: "Expr"
    span: Span = _span_field()


@dataclass(frozen=True)
class Star:
    value: "Expr"
    span: Span = _span_field()


@dataclass(frozen=True)
class DoubleStar:
    value: "Expr"
    span: Span = _span_field()


Arg = Union[Positional, Keyword, Star, DoubleStar]


@dataclass(frozen=True)
class Call:
    callee: str
    args: tuple[Arg, ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class ListComp:
    element: "Expr"
    var: str
    iterable: "Expr"
    condition: "Expr | None"
    span: Span = _span_field()


Expr = Union[
    Name, StrLit, IntLit, FloatLit, BoolLit, NoneLit, ListLit, DictLit,
    Subscript, Compare, BinOp, UnaryNeg, BoolOp, Call, ListComp,
]


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class ExprStmt:
    value: Expr
    span: Span = _span_field()


Stmt = Union[Assign, ExprStmt]


@dataclass(frozen=True)
class Program:
    statements: tuple[Stmt, ...]


@dataclass(frozen=True)
class CallSite:
    callee: str
    args: tuple[Arg, ...]
    span: Span = field(compare=False, repr=False, default=_DUMMY_SPAN)


@dataclass(frozen=True)
class ActionBlock:
    code: str
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class DataflowEdge:
    """A variable defined by a call result and consumed as a call argument.

    ``arg`` is the argument index for positional/star/double-star slots and
    the keyword name for keyword slots.
    """

    var: str
    callee: str
    arg: int | str


# --- Lexer -----------------------------------------------------------------

_KEYWORDS = {"True", "False", "None", "and", "or", "not", "in", "if", "for"}
_RESERVED = {
    "def", "class", "import", "from", "while", "return", "lambda", "with",
    "try", "except", "finally", "raise", "global", "nonlocal", "del", "pass",
    "break", "continue", "yield", "assert", "elif", "else", "is", "as",
    "async", "await", "match", "case",
}
_ESCAPES = {"\\": "\\", "'": "'", '"': '"', "n": "\n", "t": "\t"}
_TWO_CHAR_OPS = {"==", "!=", "<=", ">=", "//", "**"}
_ONE_CHAR_OPS = set("=<>+-*/%()[]{},:")


@dataclass(frozen=True)
class Token:
    type: str  # NAME, KEYWORD, INT, FLOAT, STRING, OP, NEWLINE, EOF
    value: str
    span: Span
    literal: object = None


def _tokenize(code: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    depth = 0  # bracket depth; newlines inside brackets are ignored
    n = len(code)

    def here(width: int = 1) -> Span:
        return Span(line, col, line, col + width - 1)

    while i < n:
        ch = code[i]
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and code[i] != "\n":
                i += 1
                col += 1
            continue
        if ch == "\n":
            if depth == 0 and tokens and tokens[-1].type not in ("NEWLINE",):
                tokens.append(Token("NEWLINE", "\n", here()))
            i += 1
            line += 1
            col = 1
            continue
        if ch in "'\"":
            quote = ch
            start_line, start_col = line, col
            i += 1
            col += 1
            parts: list[str] = []
            while True:
                if i >= n or code[i] == "\n":
                    raise ParseError("unterminated string literal", Span(start_line, start_col, line, col))
                c = code[i]
                if c == "\\":
                    if i + 1 >= n:
                        raise ParseError("unterminated string literal", Span(start_line, start_col, line, col))
                    esc = code[i + 1]
                    if esc not in _ESCAPES:
                        raise ParseError(f"unsupported escape sequence \\{esc}", Span(line, col, line, col + 1))
                    parts.append(_ESCAPES[esc])
                    i += 2
                    col += 2
                    continue
                if c == quote:
                    i += 1
                    col += 1
                    break
                parts.append(c)
                i += 1
                col += 1
            tokens.append(Token("STRING", "".join(parts), Span(start_line, start_col, line, col - 1), "".join(parts)))
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and code[i + 1].isdigit()):
            start_line, start_col = line, col
            j = i
            is_float = False
            while j < n and code[j].isdigit():
                j += 1
            if j < n and code[j] == ".":
                is_float = True
                j += 1
                while j < n and code[j].isdigit():
                    j += 1
            if j < n and code[j] in "eE":
                k = j + 1
                if k < n and code[k] in "+-":
                    k += 1
                if k < n and code[k].isdigit():
                    is_float = True
                    j = k
                    while j < n and code[j].isdigit():
                        j += 1
            text = code[i:j]
            width = j - i
            span = Span(start_line, start_col, line, start_col + width - 1)
            if is_float:
                tokens.append(Token("FLOAT", text, span, float(text)))
            else:
                tokens.append(Token("INT", text, span, int(text)))
            col += width
            i = j
            continue
        if ch.isalpha() or ch == "_":
            start_col = col
            j = i
            while j < n and (code[j].isalnum() or code[j] == "_"):
                j += 1
            word = code[i:j]
            width = j - i
            span = Span(line, start_col, line, start_col + width - 1)
            if j < n and code[j] in "'\"" and word.lower() in ("f", "r", "b", "u", "rb", "br", "fr", "rf"):
                raise ParseError("string prefixes are not supported", span)
            if word in _RESERVED:
                raise ParseError(f"keyword {word!r} is not supported in the action language", span)
            token_type = "KEYWORD" if word in _KEYWORDS else "NAME"
            tokens.append(Token(token_type, word, span))
            i = j
            col += width
            continue
        two = code[i : i + 2]
        if two in _TWO_CHAR_OPS:
            tokens.append(Token("OP", two, here(2)))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR_OPS:
            if ch in "([{":
                depth += 1
            elif ch in ")]}":
                depth = max(0, depth - 1)
            tokens.append(Token("OP", ch, here()))
            i += 1
            col += 1
            continue
        if ch == ".":
            raise ParseError("attribute access is not supported", here())
        raise ParseError(f"unexpected character {ch!r}", here())

    tokens.append(Token("EOF", "", Span(line, col, line, col)))
    return tokens


# --- Parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.type != "EOF":
            self.pos += 1
        return tok

    def at_op(self, *values: str) -> bool:
        tok = self.peek()
        return tok.type == "OP" and tok.value in values

    def at_keyword(self, *values: str) -> bool:
        tok = self.peek()
        return tok.type == "KEYWORD" and tok.value in values

    def expect_op(self, value: str) -> Token:
        tok = self.peek()
        if not self.at_op(value):
            raise ParseError(f"expected {value!r}, found {tok.value!r}" if tok.value else f"expected {value!r}", tok.span)
        return self.advance()

    def skip_newlines(self) -> None:
        while self.peek().type == "NEWLINE":
            self.advance()

    def parse_program(self) -> Program:
        statements: list[Stmt] = []
        self.skip_newlines()
        while self.peek().type != "EOF":
            statements.append(self.parse_statement())
            self.skip_newlines()
        return Program(statements=tuple(statements))

    def parse_statement(self) -> Stmt:
        tok = self.peek()
        if tok.type == "KEYWORD" and tok.value in ("for", "if"):
            what = "loops" if tok.value == "for" else "conditional statements"
            raise ParseError(f"{what} are not supported in the action language", tok.span)
        if tok.type == "NAME" and self.peek(1).type == "OP" and self.peek(1).value == "=":
            target = self.advance()
            self.advance()  # '='
            value = self.parse_expr()
            self.end_statement()
            return Assign(target=target.value, value=value, span=_merge(target.span, value.span))
        value = self.parse_expr()
        self.end_statement()
        return ExprStmt(value=value, span=value.span)

    def end_statement(self) -> None:
        tok = self.peek()
        if tok.type in ("NEWLINE", "EOF"):
            if tok.type == "NEWLINE":
                self.advance()
            return
        raise ParseError(f"unexpected {tok.value!r} after expression", tok.span)

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at_keyword("or"):
            self.advance()
            right = self.parse_and()
            left = BoolOp(op="or", operands=(left, right), span=_merge(left.span, right.span))
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.at_keyword("and"):
            self.advance()
            right = self.parse_not()
            left = BoolOp(op="and", operands=(left, right), span=_merge(left.span, right.span))
        return left

    def parse_not(self) -> Expr:
        if self.at_keyword("not") and not (self.peek(1).type == "KEYWORD" and self.peek(1).value == "in"):
            tok = self.advance()
            operand = self.parse_not()
            return BoolOp(op="not", operands=(operand,), span=_merge(tok.span, operand.span))
        return self.parse_comparison()

    def parse_comparison(self) -> Expr:
        left = self.parse_arith()
        op = None
        if self.at_op("==", "!=", "<", "<=", ">", ">="):
            op = self.advance().value
        elif self.at_keyword("in"):
            self.advance()
            op = "in"
        elif self.at_keyword("not") and self.peek(1).type == "KEYWORD" and self.peek(1).value == "in":
            self.advance()
            self.advance()
            op = "not in"
        if op is None:
            return left
        right = self.parse_arith()
        node = Compare(op=op, left=left, right=right, span=_merge(left.span, right.span))
        trailing = self.peek()
        if (trailing.type == "OP" and trailing.value in ("==", "!=", "<", "<=", ">", ">=")) or (
            trailing.type == "KEYWORD" and trailing.value == "in"
        ):
            raise ParseError("chained comparisons are not supported", trailing.span)
        return node

    def parse_arith(self) -> Expr:
        left = self.parse_term()
        while self.at_op("+", "-"):
            op = self.advance().value
            right = self.parse_term()
            left = BinOp(op=op, left=left, right=right, span=_merge(left.span, right.span))
        return left

    def parse_term(self) -> Expr:
        left = self.parse_factor()
        while self.at_op("*", "/", "//", "%"):
            op = self.advance().value
            right = self.parse_factor()
            left = BinOp(op=op, left=left, right=right, span=_merge(left.span, right.span))
        return left

    def parse_factor(self) -> Expr:
        if self.at_op("-"):
            tok = self.advance()
            operand = self.parse_factor()
            return UnaryNeg(operand=operand, span=_merge(tok.span, operand.span))
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        node = self.parse_atom()
        if isinstance(node, Name) and self.at_op("("):
            node = self.parse_call(node)
        while True:
            if self.at_op("["):
                self.advance()
                index = self.parse_expr()
                close = self.expect_op("]")
                node = Subscript(base=node, index=index, span=_merge(node.span, close.span))
            elif self.at_op("("):
                raise ParseError("only bare tool names can be called", self.peek().span)
            else:
                return node

    def parse_call(self, callee: Name) -> Call:
        self.expect_op("(")
        args: list[Arg] = []
        while not self.at_op(")"):
            args.append(self.parse_arg())
            if self.at_op(","):
                self.advance()
            elif not self.at_op(")"):
                raise ParseError("expected ',' or ')' in argument list", self.peek().span)
        close = self.expect_op(")")
        return Call(callee=callee.id, args=tuple(args), span=_merge(callee.span, close.span))

    def parse_arg(self) -> Arg:
        tok = self.peek()
        if self.at_op("**"):
            self.advance()
            value = self.parse_expr()
            return DoubleStar(value=value, span=_merge(tok.span, value.span))
        if self.at_op("*"):
            self.advance()
            value = self.parse_expr()
            return Star(value=value, span=_merge(tok.span, value.span))
        if tok.type == "NAME" and self.peek(1).type == "OP" and self.peek(1).value == "=":
            name = self.advance()
            self.advance()  # '='
            value = self.parse_expr()
            return Keyword(name=name.value, value=value, span=_merge(name.span, value.span))
        value = self.parse_expr()
        return Positional(value=value, span=value.span)

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.type == "NAME":
            self.advance()
            return Name(id=tok.value, span=tok.span)
        if tok.type == "INT":
            self.advance()
            return IntLit(value=tok.literal, span=tok.span)  # type: ignore[arg-type]
        if tok.type == "FLOAT":
            self.advance()
            return FloatLit(value=tok.literal, span=tok.span)  # type: ignore[arg-type]
        if tok.type == "STRING":
            self.advance()
            return StrLit(value=tok.literal, span=tok.span)  # type: ignore[arg-type]
        if tok.type == "KEYWORD":
            if tok.value in ("True", "False"):
                self.advance()
                return BoolLit(value=tok.value == "True", span=tok.span)
            if tok.value == "None":
                self.advance()
                return NoneLit(span=tok.span)
            raise ParseError(f"unexpected keyword {tok.value!r}", tok.span)
        if self.at_op("("):
            self.advance()
            inner = self.parse_expr()
            self.expect_op(")")
            return inner
        if self.at_op("["):
            return self.parse_list_or_comp()
        if self.at_op("{"):
            return self.parse_dict()
        if tok.type == "EOF":
            raise ParseError("unexpected end of input", tok.span)
        raise ParseError(f"unexpected {tok.value!r}", tok.span)

    def parse_list_or_comp(self) -> Expr:
        open_tok = self.expect_op("[")
        if self.at_op("]"):
            close = self.advance()
            return ListLit(items=(), span=_merge(open_tok.span, close.span))
        first = self.parse_expr()
        if self.at_keyword("for"):
            self.advance()
            var_tok = self.peek()
            if var_tok.type != "NAME":
                raise ParseError("expected a variable name after 'for'", var_tok.span)
            self.advance()
            if not self.at_keyword("in"):
                raise ParseError("expected 'in' in list comprehension", self.peek().span)
            self.advance()
            iterable = self.parse_expr()
            condition = None
            if self.at_keyword("if"):
                self.advance()
                condition = self.parse_expr()
            if self.at_keyword("for"):
                raise ParseError("list comprehensions support a single generator clause", self.peek().span)
            close = self.expect_op("]")
            return ListComp(
                element=first, var=var_tok.value, iterable=iterable, condition=condition,
                span=_merge(open_tok.span, close.span),
            )
        items = [first]
        while self.at_op(","):
            self.advance()
            if self.at_op("]"):
                break
            items.append(self.parse_expr())
        close = self.expect_op("]")
        return ListLit(items=tuple(items), span=_merge(open_tok.span, close.span))

    def parse_dict(self) -> Expr:
        open_tok = self.expect_op("{")
        entries: list[tuple[Expr, Expr]] = []
        while not self.at_op("}"):
            key = self.parse_expr()
            self.expect_op(":")
            value = self.parse_expr()
            entries.append((key, value))
            if self.at_op(","):
                self.advance()
            elif not self.at_op("}"):
                raise ParseError("expected ',' or '}' in dict literal", self.peek().span)
        close = self.expect_op("}")
        return DictLit(entries=tuple(entries), span=_merge(open_tok.span, close.span))


def _merge(a: Span, b: Span) -> Span:
    return Span(a.start_line, a.start_col, b.end_line, b.end_col)


def parse_program(code: str) -> Program:
    """Parse action-language source into a Program, or raise ParseError."""
    return _Parser(_tokenize(code)).parse_program()


# --- Action block extraction -------------------------------------------------

_OPEN_MARKER = "Action:"
_CLOSE_MARKER = "End Action"


def find_action_block(text: str) -> ActionBlock:
    """Locate the first Action:/End Action block and return its code.

    Code on the opener line after the colon is included. A second opener after
    the block produces a warning, not an error.
    """
    lines = text.splitlines()
    start = None
    for i, raw_line in enumerate(lines):
        if raw_line.strip().startswith(_OPEN_MARKER):
            start = i
            break
    if start is None:
        raise NoActionBlock("no 'Action:' marker found")
    end = None
    for j in range(start + 1, len(lines)):
        if lines[j].strip() == _CLOSE_MARKER:
            end = j
            break
    if end is None:
        raise UnterminatedBlock("'Action:' block without a matching 'End Action'")
    inline = lines[start].strip()[len(_OPEN_MARKER):].strip()
    body = ([inline] if inline else []) + lines[start + 1 : end]
    warnings = []
    for k in range(end + 1, len(lines)):
        if lines[k].strip().startswith(_OPEN_MARKER):
            warnings.append("multiple Action blocks found; using the first")
            break
    return ActionBlock(code="\n".join(body).strip(), warnings=tuple(warnings))


def extract_action_block(text: str) -> str:
    return find_action_block(text).code


# --- Walks -------------------------------------------------------------------


def iter_nodes(node: object) -> Iterator[object]:
    """Pre-order walk over expression nodes, children in source order."""
    yield node
    if isinstance(node, (Assign, ExprStmt)):
        yield from iter_nodes(node.value)
    elif isinstance(node, ListLit):
        for item in node.items:
            yield from iter_nodes(item)
    elif isinstance(node, DictLit):
        for key, value in node.entries:
            yield from iter_nodes(key)
            yield from iter_nodes(value)
    elif isinstance(node, Subscript):
        yield from iter_nodes(node.base)
        yield from iter_nodes(node.index)
    elif isinstance(node, (Compare, BinOp)):
        yield from iter_nodes(node.left)
        yield from iter_nodes(node.right)
    elif isinstance(node, UnaryNeg):
        yield from iter_nodes(node.operand)
    elif isinstance(node, BoolOp):
        for operand in node.operands:
            yield from iter_nodes(operand)
    elif isinstance(node, Call):
        for arg in node.args:
            yield from iter_nodes(arg.value)
    elif isinstance(node, ListComp):
        yield from iter_nodes(node.element)
        yield from iter_nodes(node.iterable)
        if node.condition is not None:
            yield from iter_nodes(node.condition)


def collect_call_sites(program: Program) -> list[CallSite]:
    """Every Call node in source order, including nested calls."""
    sites = []
    for stmt in program.statements:
        for node in iter_nodes(stmt):
            if isinstance(node, Call):
                sites.append(CallSite(callee=node.callee, args=node.args, span=node.span))
    return sites


def _collect_names(expr: Expr, bound: frozenset[str], out: list[str]) -> None:
    # explicit walk rather than iter_nodes: comprehension variables are
    # scoped and must not be reported as free names
    if isinstance(expr, Name):
        if expr.id not in bound:
            out.append(expr.id)
    elif isinstance(expr, (Assign, ExprStmt)):
        _collect_names(expr.value, bound, out)
    elif isinstance(expr, ListLit):
        for item in expr.items:
            _collect_names(item, bound, out)
    elif isinstance(expr, DictLit):
        for key, value in expr.entries:
            _collect_names(key, bound, out)
            _collect_names(value, bound, out)
    elif isinstance(expr, Subscript):
        _collect_names(expr.base, bound, out)
        _collect_names(expr.index, bound, out)
    elif isinstance(expr, (Compare, BinOp)):
        _collect_names(expr.left, bound, out)
        _collect_names(expr.right, bound, out)
    elif isinstance(expr, UnaryNeg):
        _collect_names(expr.operand, bound, out)
    elif isinstance(expr, BoolOp):
        for operand in expr.operands:
            _collect_names(operand, bound, out)
    elif isinstance(expr, Call):
        for arg in expr.args:
            _collect_names(arg.value, bound, out)
    elif isinstance(expr, ListComp):
        _collect_names(expr.iterable, bound, out)
        inner = bound | {expr.var}
        _collect_names(expr.element, inner, out)
        if expr.condition is not None:
            _collect_names(expr.condition, inner, out)


def dataflow_summary(program: Program) -> list[DataflowEdge]:
    """Edges from call-defined variables to the call arguments that consume
    them. A reassignment overwrites earlier definitions before later uses."""
    defined_by_call: dict[str, bool] = {}
    edges: list[DataflowEdge] = []

    def scan_expr(expr: Expr) -> None:
        for node in _calls_in(expr):
            for index, arg in enumerate(node.args):
                slot: int | str = arg.name if isinstance(arg, Keyword) else index
                names: list[str] = []
                _collect_names(arg.value, frozenset(), names)
                for name in names:
                    if defined_by_call.get(name):
                        edges.append(DataflowEdge(var=name, callee=node.callee, arg=slot))

    for stmt in program.statements:
        scan_expr(stmt.value)
        if isinstance(stmt, Assign):
            defined_by_call[stmt.target] = isinstance(stmt.value, Call)
    return edges


def _calls_in(expr: Expr) -> Iterator[Call]:
    for node in iter_nodes(expr):
        if isinstance(node, Call):
            yield node


# --- Pretty printer ----------------------------------------------------------

_LEVEL_OR = 1
_LEVEL_AND = 2
_LEVEL_NOT = 3
_LEVEL_CMP = 4
_LEVEL_ARITH = 5
_LEVEL_TERM = 6
_LEVEL_UNARY = 7
_LEVEL_ATOM = 8

_BINOP_LEVEL = {"+": _LEVEL_ARITH, "-": _LEVEL_ARITH, "*": _LEVEL_TERM, "/": _LEVEL_TERM, "//": _LEVEL_TERM, "%": _LEVEL_TERM}


def _level(expr: Expr) -> int:
    if isinstance(expr, BoolOp):
        return {"or": _LEVEL_OR, "and": _LEVEL_AND, "not": _LEVEL_NOT}[expr.op]
    if isinstance(expr, Compare):
        return _LEVEL_CMP
    if isinstance(expr, BinOp):
        return _BINOP_LEVEL[expr.op]
    if isinstance(expr, UnaryNeg):
        return _LEVEL_UNARY
    return _LEVEL_ATOM


def _quote(value: str) -> str:
    out = ["'"]
    for ch in value:
        if ch == "\\":
            out.append("\\\\")
        elif ch == "'":
            out.append("\\'")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        else:
            out.append(ch)
    out.append("'")
    return "".join(out)


def render_expr(expr: Expr, parent_level: int = 0) -> str:
    level = _level(expr)
    if isinstance(expr, Name):
        text = expr.id
    elif isinstance(expr, StrLit):
        text = _quote(expr.value)
    elif isinstance(expr, IntLit):
        text = str(expr.value)
    elif isinstance(expr, FloatLit):
        text = repr(expr.value)
    elif isinstance(expr, BoolLit):
        text = "True" if expr.value else "False"
    elif isinstance(expr, NoneLit):
        text = "None"
    elif isinstance(expr, ListLit):
        text = "[" + ", ".join(render_expr(item) for item in expr.items) + "]"
    elif isinstance(expr, DictLit):
        text = "{" + ", ".join(f"{render_expr(k)}: {render_expr(v)}" for k, v in expr.entries) + "}"
    elif isinstance(expr, Subscript):
        text = render_expr(expr.base, _LEVEL_ATOM) + "[" + render_expr(expr.index) + "]"
    elif isinstance(expr, Compare):
        text = f"{render_expr(expr.left, level + 1)} {expr.op} {render_expr(expr.right, level + 1)}"
    elif isinstance(expr, BinOp):
        text = f"{render_expr(expr.left, level)} {expr.op} {render_expr(expr.right, level + 1)}"
    elif isinstance(expr, UnaryNeg):
        text = "-" + render_expr(expr.operand, level)
    elif isinstance(expr, BoolOp):
        if expr.op == "not":
            text = "not " + render_expr(expr.operands[0], level)
        else:
            text = f"{render_expr(expr.operands[0], level)} {expr.op} {render_expr(expr.operands[1], level + 1)}"
    elif isinstance(expr, Call):
        text = expr.callee + "(" + ", ".join(_render_arg(arg) for arg in expr.args) + ")"
    elif isinstance(expr, ListComp):
        text = f"[{render_expr(expr.element)} for {expr.var} in {render_expr(expr.iterable)}"
        if expr.condition is not None:
            text += f" if {render_expr(expr.condition)}"
        text += "]"
    else:  # pragma: no cover - exhaustive over Expr
        raise TypeError(f"unknown expression node {expr!r}")
    if level < parent_level:
        return "(" + text + ")"
    return text


def _render_arg(arg: Arg) -> str:
    if isinstance(arg, Positional):
        return render_expr(arg.value)
    if isinstance(arg, Keyword):
        return f"{arg.name}={render_expr(arg.value)}"
    if isinstance(arg, Star):
        return "*" + render_expr(arg.value)
    return "**" + render_expr(arg.value)


def render_program(program: Program) -> str:
    lines = []
    for stmt in program.statements:
        if isinstance(stmt, Assign):
            lines.append(f"{stmt.target} = {render_expr(stmt.value)}")
        else:
            lines.append(render_expr(stmt.value))
    return "\n".join(lines)
