"""Tiny arithmetic expression language for initial conditions and
state-dependent coefficients.

Grammar (no user-defined functions, no exponent operator):

    expr  := term  (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+')* atom
    atom  := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``pi`` is the circle constant; ``sin``, ``cos``, ``tanh``, ``exp`` are the
only functions. Which plain names are legal (``x``, state names) is decided
by the caller at evaluation time.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ModelError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "exp": np.exp,
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


Expr = Num | Name | Call | Neg | BinOp


_MAX_DEPTH = 64
_MAX_LEN = 10_000


class _Scanner:
    def __init__(self, text: str, line: int, col0: int):
        self.text = text
        self.pos = 0
        self.line = line
        self.col0 = col0  # column of text[0] in the source line
        self.depth = 0

    def error(self, msg: str):
        raise ModelError(msg, line=self.line, col=self.col0 + self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self) -> str:
        c = self.peek()
        self.pos += 1
        return c

    def name(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and (
                self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        return self.text[start:self.pos]

    def number(self) -> float:
        start = self.pos
        t = self.text
        n = len(t)
        while self.pos < n and (t[self.pos].isdigit() or t[self.pos] == "."):
            self.pos += 1
        if self.pos < n and t[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < n and t[self.pos] in "+-":
                self.pos += 1
            if self.pos < n and t[self.pos].isdigit():
                while self.pos < n and t[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark  # bare 'e' was not an exponent
        try:
            return float(t[start:self.pos])
        except ValueError:
            self.pos = start
            self.error(f"bad numeric literal {t[start:start + 12]!r}")


def parse_expr(text: str, line: int = 0, col0: int = 0) -> Expr:
    """Parse ``text`` into an AST; raises :class:`ModelError` with the
    source position on any syntax error."""
    if len(text) > _MAX_LEN:
        raise ModelError("expression too long", line=line, col=col0)
    sc = _Scanner(text, line, col0)
    node = _expr(sc)
    if sc.peek() != "":
        sc.error(f"unexpected trailing input {sc.text[sc.pos:sc.pos + 12]!r}")
    return node


def _expr(sc: _Scanner) -> Expr:
    sc.depth += 1
    if sc.depth > _MAX_DEPTH:
        raise ModelError("expression nests too deeply", line=sc.line,
                         col=sc.col0 + sc.pos)
    try:
        node = _term(sc)
        while sc.peek() in ("+", "-"):
            op = sc.take()
            node = BinOp(op, node, _term(sc))
        return node
    finally:
        sc.depth -= 1


def _term(sc: _Scanner) -> Expr:
    node = _unary(sc)
    while sc.peek() in ("*", "/"):
        op = sc.take()
        node = BinOp(op, node, _unary(sc))
    return node


def _unary(sc: _Scanner) -> Expr:
    negate = False
    while sc.peek() in ("+", "-"):
        if sc.take() == "-":
            negate = not negate
    node = _atom(sc)
    return Neg(node) if negate else node


def _atom(sc: _Scanner) -> Expr:
    c = sc.peek()
    if c == "(":
        sc.take()
        node = _expr(sc)
        if sc.peek() != ")":
            sc.error("expected ')'")
        sc.take()
        return node
    if c.isdigit() or c == ".":
        return Num(sc.number())
    if c.isalpha() or c == "_":
        ident = sc.name()
        if sc.peek() == "(":
            if ident not in FUNCTIONS:
                sc.error(f"unknown function {ident!r} (have sin, cos, tanh, exp)")
            sc.take()
            arg = _expr(sc)
            if sc.peek() != ")":
                sc.error("expected ')'")
            sc.take()
            return Call(ident, arg)
        return Name(ident)
    if c == "":
        sc.error("unexpected end of expression")
    sc.error(f"unexpected character {c!r}")


def evaluate(node: Expr, env: dict):
    """Evaluate an AST against ``env`` (name -> scalar or array). ``pi`` is
    predefined. Unknown names and division by zero raise
    :class:`DomainError`; the caller attaches cell context."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Name):
        if node.ident == "pi":
            return np.pi
        if node.ident not in env:
            raise DomainError(f"unknown name {node.ident!r} in expression")
        return env[node.ident]
    if isinstance(node, Neg):
        return -evaluate(node.arg, env)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](evaluate(node.arg, env))
    if isinstance(node, BinOp):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a / b
        if np.any(~np.isfinite(np.atleast_1d(out))):
            bad = int(np.flatnonzero(~np.isfinite(np.atleast_1d(out)))[0])
            raise DomainError("division by zero in expression", index=bad)
        return out
    raise TypeError(f"not an expression node: {node!r}")


def free_names(node: Expr) -> set[str]:
    """Plain names referenced by the expression (``pi`` excluded)."""
    if isinstance(node, Num):
        return set()
    if isinstance(node, Name):
        return set() if node.ident == "pi" else {node.ident}
    if isinstance(node, Neg):
        return free_names(node.arg)
    if isinstance(node, Call):
        return free_names(node.arg)
    return free_names(node.left) | free_names(node.right)


def to_source(node: Expr) -> str:
    """Canonical text form; reparsing yields an equal AST."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Name):
        return node.ident
    if isinstance(node, Neg):
        return f"-{_paren(node.arg, above='unary')}"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, BinOp):
        left = _paren(node.left, above="term" if node.op in "*/" else "expr")
        right = _paren(node.right, above="right-" + ("term" if node.op in "*/" else "expr"))
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def _paren(node: Expr, above: str) -> str:
    src = to_source(node)
    needs = False
    if isinstance(node, BinOp):
        if above in ("unary",):
            needs = True
        elif above in ("term", "right-term"):
            needs = True
        elif above == "right-expr" and node.op in "+-":
            needs = True
    elif isinstance(node, Neg) and above in ("term", "right-term", "unary", "right-expr"):
        needs = True
    return f"({src})" if needs else src


def linear_coefficient(node: Expr, name: str) -> float | None:
    """Return c when the expression is exactly ``c * name`` (or ``name``,
    or ``name * c``, or a plain constant times the name nested in unary
    minus); otherwise None. Used to recognize mass-proportional mobilities."""
    if isinstance(node, Name) and node.ident == name:
        return 1.0
    if isinstance(node, Neg):
        c = linear_coefficient(node.arg, name)
        return None if c is None else -c
    if isinstance(node, BinOp) and node.op == "*":
        lc = constant_value(node.left)
        rc = constant_value(node.right)
        if lc is not None and isinstance(node.right, Name) and node.right.ident == name:
            return lc
        if rc is not None and isinstance(node.left, Name) and node.left.ident == name:
            return rc
    return None


def constant_value(node: Expr) -> float | None:
    """Evaluate expressions with no free names to a float; else None."""
    if free_names(node):
        return None
    return float(evaluate(node, {}))
