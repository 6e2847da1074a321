"""Pure expression language for triggers, conditions, actions and initializers.

Grammar (loosest binding first):

    expression  = "if" expression "then" expression "else" expression | or-expr
    or-expr     = and-expr { "or" and-expr }
    and-expr    = not-expr { "and" not-expr }
    not-expr    = "not" not-expr | comparison
    comparison  = additive { ("<"|"<="|">"|">="|"=="|"!=") additive }
    additive    = term { ("+"|"-") term }
    term        = unary { ("*"|"/"|"%") unary }
    unary       = "-" unary | primary
    primary     = number | "true" | "false" | string | reference | call
                | "(" expression ")"
    reference   = ("agent"|"model") "." identifier
    call        = identifier "(" [expression {"," expression}] ")"

Values are double-precision numbers, booleans, or text. Text supports only
equality comparison. Evaluation is pure and deterministic: no assignment, no
randomness, and every failure (unbound name, type mismatch, division by zero,
non-finite result) is a diagnosed :class:`EvaluationError`, never a silent
default.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Union

from .errors import (
    EvaluationError,
    ExpressionSyntaxError,
    ExpressionTypeError,
)

Scalar = Union[float, bool, str]

NUMBER = "number"
BOOLEAN = "boolean"
TEXT = "text"
KINDS = (NUMBER, BOOLEAN, TEXT)

# name -> (min arity, max arity or None for variadic)
BUILTIN_FUNCTIONS: dict[str, tuple[int, int | None]] = {
    "min": (2, None),
    "max": (2, None),
    "clamp": (3, 3),
    "abs": (1, 1),
    "floor": (1, 1),
    "ceil": (1, 1),
}

_KEYWORDS = frozenset({"if", "then", "else", "and", "or", "not", "true", "false"})
_NAMESPACES = ("agent", "model")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NumberLiteral:
    value: float


@dataclass(frozen=True)
class BooleanLiteral:
    value: bool


@dataclass(frozen=True)
class TextLiteral:
    value: str


@dataclass(frozen=True)
class VariableRef:
    namespace: str  # "agent" | "model"
    name: str

    @property
    def qualified(self) -> str:
        return f"{self.namespace}.{self.name}"


@dataclass(frozen=True)
class UnaryOp:
    op: str  # "-" | "not"
    operand: "Node"


@dataclass(frozen=True)
class BinaryOp:
    op: str  # + - * / % < <= > >= == != and or
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Conditional:
    test: "Node"
    then: "Node"
    orelse: "Node"


@dataclass(frozen=True)
class FunctionCall:
    name: str
    args: tuple["Node", ...]


Node = Union[
    NumberLiteral,
    BooleanLiteral,
    TextLiteral,
    VariableRef,
    UnaryOp,
    BinaryOp,
    Conditional,
    FunctionCall,
]


@dataclass(frozen=True)
class Expression:
    """A parsed expression. Structural equality ignores the source text."""

    root: Node
    source: str = field(compare=False)


@dataclass(frozen=True)
class EvalContext:
    """Readable environment for evaluation; lookups of unbound names fail."""

    agent: Mapping[str, Scalar] = field(default_factory=dict)
    model: Mapping[str, Scalar] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<op><=|>=|==|!=|[-+*/%<>(),.])
    """,
    re.VERBOSE,
)

_STRING_ESCAPES = {'\\"': '"', "\\\\": "\\"}


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | string | op | eof
    text: str
    line: int
    column: int


def _tokenize(source: str) -> Iterator[_Token]:
    pos = 0
    line = 1
    line_start = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            nl = text.count("\n")
            if nl:
                line += nl
                line_start = pos + text.rindex("\n") + 1
        else:
            yield _Token(kind, text, line, pos - line_start + 1)
        pos = m.end()
    yield _Token("eof", "", line, pos - line_start + 1)


def _unescape(raw: str, line: int, column: int) -> str:
    body = raw[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            pair = body[i : i + 2]
            if pair not in _STRING_ESCAPES:
                raise ExpressionSyntaxError(f"bad escape {pair!r}", line, column)
            out.append(_STRING_ESCAPES[pair])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


# ---------------------------------------------------------------------------
# Parser (recursive descent, precedence per module docstring)
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = list(_tokenize(source))
        self.pos = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, message: str) -> ExpressionSyntaxError:
        tok = self.cur
        shown = tok.text or "end of input"
        return ExpressionSyntaxError(f"{message}, found {shown!r}", tok.line, tok.column)

    def expect(self, text: str) -> _Token:
        if self.cur.text != text or self.cur.kind not in ("op", "ident"):
            raise self.fail(f"expected {text!r}")
        return self.advance()

    def at_keyword(self, word: str) -> bool:
        return self.cur.kind == "ident" and self.cur.text == word

    def parse(self) -> Node:
        node = self.expression()
        if self.cur.kind != "eof":
            raise self.fail("unexpected trailing input")
        return node

    def expression(self) -> Node:
        if self.at_keyword("if"):
            self.advance()
            test = self.expression()
            if not self.at_keyword("then"):
                raise self.fail("expected 'then'")
            self.advance()
            then = self.expression()
            if not self.at_keyword("else"):
                raise self.fail("expected 'else'")
            self.advance()
            orelse = self.expression()
            return Conditional(test, then, orelse)
        return self.or_expr()

    def or_expr(self) -> Node:
        node = self.and_expr()
        while self.at_keyword("or"):
            self.advance()
            node = BinaryOp("or", node, self.and_expr())
        return node

    def and_expr(self) -> Node:
        node = self.not_expr()
        while self.at_keyword("and"):
            self.advance()
            node = BinaryOp("and", node, self.not_expr())
        return node

    def not_expr(self) -> Node:
        if self.at_keyword("not"):
            self.advance()
            return UnaryOp("not", self.not_expr())
        return self.comparison()

    def comparison(self) -> Node:
        node = self.additive()
        while self.cur.kind == "op" and self.cur.text in ("<", "<=", ">", ">=", "==", "!="):
            op = self.advance().text
            node = BinaryOp(op, node, self.additive())
        return node

    def additive(self) -> Node:
        node = self.term()
        while self.cur.kind == "op" and self.cur.text in ("+", "-"):
            op = self.advance().text
            node = BinaryOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.cur.kind == "op" and self.cur.text in ("*", "/", "%"):
            op = self.advance().text
            node = BinaryOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.cur.kind == "op" and self.cur.text == "-":
            self.advance()
            return UnaryOp("-", self.unary())
        return self.primary()

    def primary(self) -> Node:
        tok = self.cur
        if tok.kind == "number":
            self.advance()
            return NumberLiteral(float(tok.text))
        if tok.kind == "string":
            self.advance()
            return TextLiteral(_unescape(tok.text, tok.line, tok.column))
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expression()
            self.expect(")")
            return node
        if tok.kind == "ident":
            if tok.text == "true":
                self.advance()
                return BooleanLiteral(True)
            if tok.text == "false":
                self.advance()
                return BooleanLiteral(False)
            if tok.text in _KEYWORDS:
                raise self.fail("expected an expression")
            return self.reference_or_call()
        raise self.fail("expected an expression")

    def reference_or_call(self) -> Node:
        name_tok = self.advance()
        nxt = self.cur
        if nxt.kind == "op" and nxt.text == ".":
            if name_tok.text not in _NAMESPACES:
                raise ExpressionSyntaxError(
                    f"unknown namespace {name_tok.text!r} (use 'agent.' or 'model.')",
                    name_tok.line,
                    name_tok.column,
                )
            self.advance()
            attr = self.cur
            if attr.kind != "ident" or attr.text in _KEYWORDS:
                raise self.fail("expected a variable name after '.'")
            self.advance()
            return VariableRef(name_tok.text, attr.text)
        if nxt.kind == "op" and nxt.text == "(":
            return self.call(name_tok)
        raise ExpressionSyntaxError(
            f"unqualified name {name_tok.text!r}: variables need an 'agent.' or "
            "'model.' namespace",
            name_tok.line,
            name_tok.column,
        )

    def call(self, name_tok: _Token) -> Node:
        name = name_tok.text
        if name not in BUILTIN_FUNCTIONS:
            raise ExpressionSyntaxError(
                f"unknown function {name!r}", name_tok.line, name_tok.column
            )
        self.expect("(")
        args: list[Node] = []
        if not (self.cur.kind == "op" and self.cur.text == ")"):
            args.append(self.expression())
            while self.cur.kind == "op" and self.cur.text == ",":
                self.advance()
                args.append(self.expression())
        self.expect(")")
        lo, hi = BUILTIN_FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            wants = str(lo) if hi == lo else (f"at least {lo}" if hi is None else f"{lo}..{hi}")
            raise ExpressionSyntaxError(
                f"{name}() takes {wants} argument(s), got {len(args)}",
                name_tok.line,
                name_tok.column,
            )
        return FunctionCall(name, tuple(args))


def parse_expression(source: str) -> Expression:
    """Parse ``source`` into an immutable AST; raises ExpressionSyntaxError."""
    if not isinstance(source, str) or not source.strip():
        raise ExpressionSyntaxError("empty expression", 1, 1)
    return Expression(_Parser(source).parse(), source)


# ---------------------------------------------------------------------------
# Unparse (canonical text: every compound subexpression parenthesized)
# ---------------------------------------------------------------------------

def format_number(value: float) -> str:
    # Integral floats print without a fraction; others use the shortest
    # round-trip repr. Both reparse to the identical double.
    if value.is_integer():
        return str(int(value))
    return repr(value)


def _quote_text(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def unparse(node: Node | Expression) -> str:
    if isinstance(node, Expression):
        node = node.root
    if isinstance(node, NumberLiteral):
        return format_number(node.value)
    if isinstance(node, BooleanLiteral):
        return "true" if node.value else "false"
    if isinstance(node, TextLiteral):
        return _quote_text(node.value)
    if isinstance(node, VariableRef):
        return node.qualified
    if isinstance(node, UnaryOp):
        if node.op == "not":
            return f"(not {unparse(node.operand)})"
        return f"(-{unparse(node.operand)})"
    if isinstance(node, BinaryOp):
        return f"({unparse(node.left)} {node.op} {unparse(node.right)})"
    if isinstance(node, Conditional):
        return (
            f"(if {unparse(node.test)} then {unparse(node.then)} "
            f"else {unparse(node.orelse)})"
        )
    if isinstance(node, FunctionCall):
        return f"{node.name}({', '.join(unparse(a) for a in node.args)})"
    raise TypeError(f"not an AST node: {node!r}")


# ---------------------------------------------------------------------------
# Static analysis
# ---------------------------------------------------------------------------

def free_variables(expr: Expression | Node) -> set[str]:
    """Every namespaced variable name referenced anywhere in the tree."""
    root = expr.root if isinstance(expr, Expression) else expr
    out: set[str] = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, VariableRef):
            out.add(node.qualified)
        elif isinstance(node, UnaryOp):
            stack.append(node.operand)
        elif isinstance(node, BinaryOp):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Conditional):
            stack.extend((node.test, node.then, node.orelse))
        elif isinstance(node, FunctionCall):
            stack.extend(node.args)
    return out


def infer_type(expr: Expression | Node, var_kinds: Mapping[str, str]) -> str:
    """Infer the expression's kind against a schema of qualified-name -> kind.

    Raises ExpressionTypeError on unbound names or operator/kind mismatches.
    """
    node = expr.root if isinstance(expr, Expression) else expr

    def visit(n: Node) -> str:
        if isinstance(n, NumberLiteral):
            return NUMBER
        if isinstance(n, BooleanLiteral):
            return BOOLEAN
        if isinstance(n, TextLiteral):
            return TEXT
        if isinstance(n, VariableRef):
            kind = var_kinds.get(n.qualified)
            if kind is None:
                raise ExpressionTypeError(f"unbound variable {n.qualified}")
            return kind
        if isinstance(n, UnaryOp):
            got = visit(n.operand)
            want = BOOLEAN if n.op == "not" else NUMBER
            if got != want:
                raise ExpressionTypeError(f"'{n.op}' needs a {want} operand, got {got}")
            return want
        if isinstance(n, BinaryOp):
            left = visit(n.left)
            right = visit(n.right)
            if n.op in ("and", "or"):
                if left != BOOLEAN or right != BOOLEAN:
                    raise ExpressionTypeError(f"'{n.op}' needs boolean operands")
                return BOOLEAN
            if n.op in ("==", "!="):
                if left != right:
                    raise ExpressionTypeError(
                        f"'{n.op}' compares values of one kind, got {left} and {right}"
                    )
                return BOOLEAN
            if left != NUMBER or right != NUMBER:
                raise ExpressionTypeError(f"'{n.op}' needs number operands")
            return BOOLEAN if n.op in ("<", "<=", ">", ">=") else NUMBER
        if isinstance(n, Conditional):
            if visit(n.test) != BOOLEAN:
                raise ExpressionTypeError("'if' condition must be boolean")
            then = visit(n.then)
            orelse = visit(n.orelse)
            if then != orelse:
                raise ExpressionTypeError(
                    f"'if' branches disagree: {then} vs {orelse}"
                )
            return then
        if isinstance(n, FunctionCall):
            for arg in n.args:
                if visit(arg) != NUMBER:
                    raise ExpressionTypeError(f"{n.name}() arguments must be numbers")
            return NUMBER
        raise TypeError(f"not an AST node: {n!r}")

    return visit(node)


def kind_of(value: Scalar) -> str:
    if isinstance(value, bool):
        return BOOLEAN
    if isinstance(value, (int, float)):
        return NUMBER
    if isinstance(value, str):
        return TEXT
    raise TypeError(f"not a scalar value: {value!r}")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _num(value: Scalar, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise EvaluationError(
            f"{what} needs a number, got {kind_of(value)}", "TYPE_MISMATCH"
        )
    return float(value)


def _bool(value: Scalar, what: str) -> bool:
    if not isinstance(value, bool):
        raise EvaluationError(
            f"{what} needs a boolean, got {kind_of(value)}", "TYPE_MISMATCH"
        )
    return value


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise EvaluationError(f"{what} produced a non-finite number", "NON_FINITE")
    return value


def _lookup(ref: VariableRef, ctx: EvalContext) -> Scalar:
    space = ctx.agent if ref.namespace == "agent" else ctx.model
    try:
        return space[ref.name]
    except KeyError:
        raise EvaluationError(
            f"unbound variable {ref.qualified}", "UNBOUND_VARIABLE"
        ) from None


def evaluate(expr: Expression | Node, ctx: EvalContext) -> Scalar:
    """Evaluate against a context. Pure: same AST + same context -> same value."""
    node = expr.root if isinstance(expr, Expression) else expr
    return _eval(node, ctx)


def _eval(node: Node, ctx: EvalContext) -> Scalar:
    if isinstance(node, NumberLiteral):
        return node.value
    if isinstance(node, BooleanLiteral):
        return node.value
    if isinstance(node, TextLiteral):
        return node.value
    if isinstance(node, VariableRef):
        return _lookup(node, ctx)
    if isinstance(node, UnaryOp):
        if node.op == "not":
            return not _bool(_eval(node.operand, ctx), "'not'")
        return _finite(-_num(_eval(node.operand, ctx), "unary '-'"), "unary '-'")
    if isinstance(node, BinaryOp):
        return _eval_binary(node, ctx)
    if isinstance(node, Conditional):
        test = _bool(_eval(node.test, ctx), "'if' condition")
        return _eval(node.then if test else node.orelse, ctx)
    if isinstance(node, FunctionCall):
        args = [_num(_eval(a, ctx), f"{node.name}()") for a in node.args]
        return _apply_function(node.name, args)
    raise TypeError(f"not an AST node: {node!r}")


def _eval_binary(node: BinaryOp, ctx: EvalContext) -> Scalar:
    op = node.op
    # 'and'/'or' short-circuit so a guarded right operand is never evaluated.
    if op == "and":
        if not _bool(_eval(node.left, ctx), "'and'"):
            return False
        return _bool(_eval(node.right, ctx), "'and'")
    if op == "or":
        if _bool(_eval(node.left, ctx), "'or'"):
            return True
        return _bool(_eval(node.right, ctx), "'or'")

    left = _eval(node.left, ctx)
    right = _eval(node.right, ctx)
    if op in ("==", "!="):
        lk, rk = kind_of(left), kind_of(right)
        if lk != rk:
            raise EvaluationError(
                f"'{op}' compares values of one kind, got {lk} and {rk}",
                "TYPE_MISMATCH",
            )
        return (left == right) if op == "==" else (left != right)

    a = _num(left, f"'{op}'")
    b = _num(right, f"'{op}'")
    if op == "+":
        return _finite(a + b, "'+'")
    if op == "-":
        return _finite(a - b, "'-'")
    if op == "*":
        return _finite(a * b, "'*'")
    if op == "/":
        if b == 0.0:
            raise EvaluationError("division by zero", "DIVISION_BY_ZERO")
        return _finite(a / b, "'/'")
    if op == "%":
        if b == 0.0:
            raise EvaluationError("modulo by zero", "DIVISION_BY_ZERO")
        return _finite(a % b, "'%'")
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise TypeError(f"unknown operator {op!r}")


def _apply_function(name: str, args: list[float]) -> float:
    if name == "min":
        return min(args)
    if name == "max":
        return max(args)
    if name == "clamp":
        x, lo, hi = args
        if lo > hi:
            raise EvaluationError(
                f"clamp() bounds inverted: {lo} > {hi}", "BAD_ARGUMENTS"
            )
        return min(hi, max(lo, x))
    if name == "abs":
        return _finite(abs(args[0]), "abs()")
    if name == "floor":
        return float(math.floor(args[0]))
    if name == "ceil":
        return float(math.ceil(args[0]))
    raise TypeError(f"unknown function {name!r}")


# ---------------------------------------------------------------------------
# Compilation (closure per node) for the engine's hot loops
# ---------------------------------------------------------------------------

CompiledExpr = Callable[[Mapping[str, Scalar], Mapping[str, Scalar]], Scalar]


def compile_expression(expr: Expression | Node) -> CompiledExpr:
    """Compile to a closure taking (agent_vars, model_vars).

    Semantics are identical to :func:`evaluate`; this just strips the
    per-node dispatch cost out of trigger evaluation inside the tick loop.
    """
    node = expr.root if isinstance(expr, Expression) else expr
    return _compile(node)


def _compile(node: Node) -> CompiledExpr:
    if isinstance(node, NumberLiteral):
        v = node.value
        return lambda a, m: v
    if isinstance(node, BooleanLiteral):
        v = node.value
        return lambda a, m: v
    if isinstance(node, TextLiteral):
        v = node.value
        return lambda a, m: v
    if isinstance(node, VariableRef):
        name = node.name
        qualified = node.qualified
        if node.namespace == "agent":
            def ref_a(a, m):
                try:
                    return a[name]
                except KeyError:
                    raise EvaluationError(
                        f"unbound variable {qualified}", "UNBOUND_VARIABLE"
                    ) from None
            return ref_a

        def ref_m(a, m):
            try:
                return m[name]
            except KeyError:
                raise EvaluationError(
                    f"unbound variable {qualified}", "UNBOUND_VARIABLE"
                ) from None
        return ref_m
    if isinstance(node, UnaryOp):
        operand = _compile(node.operand)
        if node.op == "not":
            return lambda a, m: not _bool(operand(a, m), "'not'")
        return lambda a, m: _finite(-_num(operand(a, m), "unary '-'"), "unary '-'")
    if isinstance(node, BinaryOp):
        return _compile_binary(node)
    if isinstance(node, Conditional):
        test = _compile(node.test)
        then = _compile(node.then)
        orelse = _compile(node.orelse)
        return lambda a, m: (
            then(a, m) if _bool(test(a, m), "'if' condition") else orelse(a, m)
        )
    if isinstance(node, FunctionCall):
        compiled = [_compile(arg) for arg in node.args]
        name = node.name
        return lambda a, m: _apply_function(
            name, [_num(c(a, m), f"{name}()") for c in compiled]
        )
    raise TypeError(f"not an AST node: {node!r}")


def _compile_binary(node: BinaryOp) -> CompiledExpr:
    op = node.op
    left = _compile(node.left)
    right = _compile(node.right)
    if op == "and":
        return lambda a, m: (
            _bool(right(a, m), "'and'") if _bool(left(a, m), "'and'") else False
        )
    if op == "or":
        return lambda a, m: (
            True if _bool(left(a, m), "'or'") else _bool(right(a, m), "'or'")
        )
    if op in ("==", "!="):
        def eq(a, m, _op=op):
            lv = left(a, m)
            rv = right(a, m)
            lk, rk = kind_of(lv), kind_of(rv)
            if lk != rk:
                raise EvaluationError(
                    f"'{_op}' compares values of one kind, got {lk} and {rk}",
                    "TYPE_MISMATCH",
                )
            return (lv == rv) if _op == "==" else (lv != rv)
        return eq

    label = f"'{op}'"
    if op == "+":
        return lambda a, m: _finite(_num(left(a, m), label) + _num(right(a, m), label), label)
    if op == "-":
        return lambda a, m: _finite(_num(left(a, m), label) - _num(right(a, m), label), label)
    if op == "*":
        return lambda a, m: _finite(_num(left(a, m), label) * _num(right(a, m), label), label)
    if op == "/":
        def div(a, m):
            x = _num(left(a, m), label)
            y = _num(right(a, m), label)
            if y == 0.0:
                raise EvaluationError("division by zero", "DIVISION_BY_ZERO")
            return _finite(x / y, label)
        return div
    if op == "%":
        def mod(a, m):
            x = _num(left(a, m), label)
            y = _num(right(a, m), label)
            if y == 0.0:
                raise EvaluationError("modulo by zero", "DIVISION_BY_ZERO")
            return _finite(x % y, label)
        return mod
    if op == "<":
        return lambda a, m: _num(left(a, m), label) < _num(right(a, m), label)
    if op == "<=":
        return lambda a, m: _num(left(a, m), label) <= _num(right(a, m), label)
    if op == ">":
        return lambda a, m: _num(left(a, m), label) > _num(right(a, m), label)
    if op == ">=":
        return lambda a, m: _num(left(a, m), label) >= _num(right(a, m), label)
    raise TypeError(f"unknown operator {op!r}")
