"""Expression DSL for planar fields: tokenizer, parser, printer, code generator.

Grammar (left-associative, precedence ``^`` > unary ``-`` > ``* /`` > ``+ -``)::

    expr     := term (('+' | '-') term)*
    term     := factor (('*' | '/') factor)*
    factor   := '-' factor | power
    power    := atom ('^' exponent)*        # exponent: optionally signed integer
    atom     := NUMBER | 'x' | 'y' | 'mu' | 'r2'
              | FUNC '(' expr (',' expr)* ')'
              | '(' expr ')'

Functions: ``sin cos exp sqrt atan2``.  ``r2`` is sugar for ``(x^2+y^2)``.

Expression trees compile to plain Python functions of ``(x, y, mu)`` built on
numpy scalar math, so the same generated source evaluates elementwise on
arrays and jit-compiles with numba.  The jet generator applies forward-mode
dual-number arithmetic (one infinitesimal per coordinate) node by node, which
is exact to roundoff on this grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union


class DslError(ValueError):
    """Base class for expression-language errors."""


class DslSyntaxError(DslError):
    def __init__(self, message: str, position: int):
        super().__init__(f"syntax error at offset {position}: {message}")
        self.position = position


class UnknownIdentifierError(DslError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r} at offset {position}")
        self.name = name
        self.position = position


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # 'x', 'y' or 'mu'


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str  # '+', '-', '*', '/'
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Union[Num, Var, Neg, Bin, Pow, Call]

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "sqrt": 1, "atan2": 2}
VARIABLES = ("x", "y", "mu")

_TOKEN_RE = re.compile(
    r"""
      (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
    | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
    | (?P<op>[-+*/^(),;=])
    | (?P<nl>\n)
    | (?P<ws>[ \t\r]+)
    | (?P<bad>.)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'num', 'ident', 'op', 'end'
    text: str
    pos: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    for m in _TOKEN_RE.finditer(source):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise DslSyntaxError(f"unexpected character {m.group()!r}", m.start())
        if kind == "nl":
            tokens.append(Token("op", ";", m.start()))
        else:
            tokens.append(Token(kind, m.group(), m.start()))
    tokens.append(Token("end", "", len(source)))
    return tokens


class _OperandExpected(Exception):
    def __init__(self, position: int):
        self.position = position


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, text: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind == "op" and tok.text == text:
            return self.advance()
        raise DslSyntaxError(f"expected {what}", tok.pos)

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance()
            try:
                rhs = self.parse_term()
            except _OperandExpected:
                raise DslSyntaxError(
                    f"operator {op.text!r} is missing its right operand", op.pos
                ) from None
            node = Bin(op.text, node, rhs)
        return node

    def parse_term(self) -> Node:
        node = self.parse_factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance()
            try:
                rhs = self.parse_factor()
            except _OperandExpected:
                raise DslSyntaxError(
                    f"operator {op.text!r} is missing its right operand", op.pos
                ) from None
            node = Bin(op.text, node, rhs)
        return node

    def parse_factor(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            try:
                return Neg(self.parse_factor())
            except _OperandExpected:
                raise DslSyntaxError(
                    "operator '-' is missing its operand", tok.pos
                ) from None
        return self.parse_power()

    def parse_power(self) -> Node:
        node = self.parse_atom()
        while self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            node = Pow(node, self.parse_exponent())
        return node

    def parse_exponent(self) -> int:
        sign = 1
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            sign = -1
            tok = self.peek()
        if tok.kind != "num" or not tok.text.isdigit():
            raise DslSyntaxError("exponent must be an integer literal", tok.pos)
        self.advance()
        return sign * int(tok.text)

    def parse_atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name in VARIABLES:
                return Var(name)
            if name == "r2":
                return Bin("+", Pow(Var("x"), 2), Pow(Var("y"), 2))
            if name in FUNCTIONS:
                self.expect_op("(", f"'(' after function {name!r}")
                args = [self.parse_expr()]
                while self.peek().kind == "op" and self.peek().text == ",":
                    self.advance()
                    args.append(self.parse_expr())
                closing = self.expect_op(")", "')' closing the argument list")
                if len(args) != FUNCTIONS[name]:
                    raise DslSyntaxError(
                        f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                        closing.pos,
                    )
                return Call(name, tuple(args))
            raise UnknownIdentifierError(name, tok.pos)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect_op(")", "')'")
            return node
        raise _OperandExpected(tok.pos)


def parse_expression(source: str) -> Node:
    """Parse a single expression; the whole string must be consumed."""
    parser = _Parser(tokenize(source))
    try:
        node = parser.parse_expr()
    except _OperandExpected as exc:
        raise DslSyntaxError("expected an expression", exc.position) from None
    tail = parser.peek()
    if tail.kind != "end":
        raise DslSyntaxError(f"unexpected trailing input {tail.text!r}", tail.pos)
    return node


def parse_field_source(source: str) -> tuple[Node, Node]:
    """Parse ``f = <expr>; g = <expr>`` (newlines also separate statements)."""
    parser = _Parser(tokenize(source))
    exprs = {}
    for want in ("f", "g"):
        while parser.peek().kind == "op" and parser.peek().text == ";":
            parser.advance()
        tok = parser.peek()
        if tok.kind != "ident" or tok.text != want:
            raise DslSyntaxError(f"expected {want!r} definition", tok.pos)
        parser.advance()
        parser.expect_op("=", f"'=' after {want!r}")
        try:
            exprs[want] = parser.parse_expr()
        except _OperandExpected as exc:
            raise DslSyntaxError("expected an expression", exc.position) from None
    while parser.peek().kind == "op" and parser.peek().text == ";":
        parser.advance()
    tail = parser.peek()
    if tail.kind != "end":
        raise DslSyntaxError(f"unexpected trailing input {tail.text!r}", tail.pos)
    return exprs["f"], exprs["g"]


# --- printing ---------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def to_source(node: Node) -> str:
    """Render a tree back to DSL text; reparsing yields the identical tree."""
    return _fmt(node, 0)


def _fmt(node: Node, parent_prec: int) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(_fmt(a, 0) for a in node.args)})"
    if isinstance(node, Neg):
        body = "-" + _fmt(node.arg, _PREC_NEG)
        return f"({body})" if parent_prec > _PREC_NEG else body
    if isinstance(node, Pow):
        body = f"{_fmt(node.base, _PREC_POW)}^{node.exponent}"
        return f"({body})" if parent_prec > _PREC_POW else body
    if isinstance(node, Bin):
        prec = _PREC_ADD if node.op in "+-" else _PREC_MUL
        left = _fmt(node.left, prec)
        right = _fmt(node.right, prec + 1)
        body = f"{left} {node.op} {right}"
        return f"({body})" if parent_prec > prec else body
    raise TypeError(f"not an expression node: {node!r}")


# --- tree utilities ---------------------------------------------------------

def substitute_mu(node: Node, value: float) -> Node:
    """Replace the parameter variable by a constant."""
    if isinstance(node, Var):
        return Num(float(value)) if node.name == "mu" else node
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute_mu(node.arg, value))
    if isinstance(node, Bin):
        return Bin(node.op, substitute_mu(node.left, value), substitute_mu(node.right, value))
    if isinstance(node, Pow):
        return Pow(substitute_mu(node.base, value), node.exponent)
    if isinstance(node, Call):
        return Call(node.func, tuple(substitute_mu(a, value) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


# --- code generation --------------------------------------------------------

_NP_FUNC = {"sin": "np.sin", "cos": "np.cos", "exp": "np.exp",
            "sqrt": "np.sqrt", "atan2": "np.arctan2"}


def _emit_py(node: Node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_emit_py(node.arg)})"
    if isinstance(node, Bin):
        return f"({_emit_py(node.left)} {node.op} {_emit_py(node.right)})"
    if isinstance(node, Pow):
        return f"({_emit_py(node.base)})**({node.exponent})"
    if isinstance(node, Call):
        args = ", ".join(_emit_py(a) for a in node.args)
        return f"{_NP_FUNC[node.func]}({args})"
    raise TypeError(f"not an expression node: {node!r}")


def value_source(fname: str, f_node: Node, g_node: Node) -> str:
    """Source for ``fname(x, y, mu) -> (f, g)``."""
    return (
        f"def {fname}(x, y, mu):\n"
        f"    return ({_emit_py(f_node)}), ({_emit_py(g_node)})\n"
    )


class _JetEmitter:
    """Forward-mode dual-number emitter: every node carries (value, d/dx, d/dy).

    Derivative slots that are identically zero are tracked as ``None`` so the
    generated code stays small for polynomial fields.
    """

    def __init__(self):
        self.lines: list[str] = []
        self.n = 0

    def tmp(self, expr: str) -> str:
        name = f"t{self.n}"
        self.n += 1
        self.lines.append(f"    {name} = {expr}")
        return name

    @staticmethod
    def _add(a, b):
        if a is None:
            return b
        if b is None:
            return a
        return f"({a} + {b})"

    @staticmethod
    def _sub(a, b):
        if b is None:
            return a
        if a is None:
            return f"(-{b})"
        return f"({a} - {b})"

    def visit(self, node: Node) -> tuple[str, str | None, str | None]:
        if isinstance(node, Num):
            return repr(node.value), None, None
        if isinstance(node, Var):
            if node.name == "x":
                return "x", "1.0", None
            if node.name == "y":
                return "y", None, "1.0"
            return "mu", None, None
        if isinstance(node, Neg):
            v, dx, dy = self.visit(node.arg)
            nv = self.tmp(f"-{v}")
            return nv, None if dx is None else f"(-{dx})", None if dy is None else f"(-{dy})"
        if isinstance(node, Bin):
            lv, lx, ly = self.visit(node.left)
            rv, rx, ry = self.visit(node.right)
            if node.op == "+":
                return self.tmp(f"{lv} + {rv}"), self._add(lx, rx), self._add(ly, ry)
            if node.op == "-":
                return self.tmp(f"{lv} - {rv}"), self._sub(lx, rx), self._sub(ly, ry)
            if node.op == "*":
                v = self.tmp(f"{lv} * {rv}")

                def dmul(dl, dr):
                    terms = []
                    if dl is not None:
                        terms.append(f"{dl} * {rv}")
                    if dr is not None:
                        terms.append(f"{lv} * {dr}")
                    if not terms:
                        return None
                    return self.tmp(" + ".join(terms))

                return v, dmul(lx, rx), dmul(ly, ry)
            # division: d(u/w) = (du - (u/w)*dw) / w
            v = self.tmp(f"{lv} / {rv}")

            def ddiv(dl, dr):
                if dl is None and dr is None:
                    return None
                if dr is None:
                    return self.tmp(f"{dl} / {rv}")
                num = self._sub(dl, f"{v} * {dr}")
                return self.tmp(f"{num} / {rv}")

            return v, ddiv(lx, rx), ddiv(ly, ry)
        if isinstance(node, Pow):
            bv, bx, by = self.visit(node.base)
            n = node.exponent
            if n == 0:
                return "1.0", None, None
            if n == 1:
                return bv, bx, by
            v = self.tmp(f"({bv})**({n})")
            if bx is None and by is None:
                return v, None, None
            if n == 2:
                fac = self.tmp(f"2.0 * {bv}")
            else:
                fac = self.tmp(f"{float(n)} * ({bv})**({n - 1})")
            dx = None if bx is None else self.tmp(f"{fac} * {bx}")
            dy = None if by is None else self.tmp(f"{fac} * {by}")
            return v, dx, dy
        if isinstance(node, Call):
            if node.func == "atan2":
                pv, px, py = self.visit(node.args[0])
                qv, qx, qy = self.visit(node.args[1])
                v = self.tmp(f"np.arctan2({pv}, {qv})")
                if px is None and py is None and qx is None and qy is None:
                    return v, None, None
                den = self.tmp(f"{pv} * {pv} + {qv} * {qv}")

                def datan(dp, dq):
                    terms = []
                    if dp is not None:
                        terms.append(f"{qv} * {dp}")
                    if dq is not None:
                        terms.append(f"-{pv} * {dq}")
                    if not terms:
                        return None
                    return self.tmp(f"({' + '.join(terms)}) / {den}")

                return v, datan(px, qx), datan(py, qy)
            av, ax, ay = self.visit(node.args[0])
            if node.func == "sin":
                v = self.tmp(f"np.sin({av})")
                if ax is None and ay is None:
                    return v, None, None
                fac = self.tmp(f"np.cos({av})")
            elif node.func == "cos":
                v = self.tmp(f"np.cos({av})")
                if ax is None and ay is None:
                    return v, None, None
                fac = self.tmp(f"-np.sin({av})")
            elif node.func == "exp":
                v = self.tmp(f"np.exp({av})")
                if ax is None and ay is None:
                    return v, None, None
                fac = v
            elif node.func == "sqrt":
                v = self.tmp(f"np.sqrt({av})")
                if ax is None and ay is None:
                    return v, None, None
                fac = self.tmp(f"0.5 / {v}")
            else:
                raise TypeError(f"unknown function {node.func!r}")
            dx = None if ax is None else self.tmp(f"{fac} * {ax}")
            dy = None if ay is None else self.tmp(f"{fac} * {ay}")
            return v, dx, dy
        raise TypeError(f"not an expression node: {node!r}")


def jet_source(fname: str, f_node: Node, g_node: Node) -> str:
    """Source for ``fname(x, y, mu) -> (f, g, df/dx, df/dy, dg/dx, dg/dy)``."""
    em = _JetEmitter()
    fv, fx, fy = em.visit(f_node)
    gv, gx, gy = em.visit(g_node)
    out = [s if s is not None else "0.0" for s in (fv, gv, fx, fy, gx, gy)]
    body = "\n".join(em.lines) if em.lines else "    pass"
    return (
        f"def {fname}(x, y, mu):\n"
        f"{body}\n"
        f"    return {out[0]}, {out[1]}, {out[2]}, {out[3]}, {out[4]}, {out[5]}\n"
    )
