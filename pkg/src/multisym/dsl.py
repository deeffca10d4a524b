"""The .thy theory-description language: lexer, parser, printer, resolver.

Grammar (version 1)::

    file     := ["#thy 1"] "theory" IDENT "{" item* "}"
    item     := "base" IDENT "[" INT "]" ";"
              | "range" IDENT "=" INT ";"
              | "index" IDENT ("," IDENT)* ":" IDENT ";"
              | "field" IDENT ["[" slot ("," slot)* "]"] symmetry* ";"
              | "param" IDENT ["[" IDENT ("," IDENT)* "]"] ["symmetric" | "antisymmetric"] ";"
              | "const" IDENT ["[" IDENT ("," IDENT)* "]"] "=" constval ";"
              | "derived" IDENT "," IDENT "=" "invmetric" "(" IDENT ")" ";"
              | "function" IDENT ["[" slot ("," slot)* "]"] "(" IDENT ("," IDENT)* ")" ";"
              | "assume" IDENT "(" IDENT ")" ";"
              | "option" IDENT "=" INT ";"
              | "lagrangian" "=" expr ";"
              | "hamiltonian" "=" expr ";"
              | "symmetry" IDENT "{" ("component" ref "=" expr ";" | "transport" ";")* "}"
    slot     := "^" IDENT | "_"IDENT
    symmetry := ("symmetric" | "antisymmetric") "(" INT "," INT ")"
    constval := "diag" "(" sint ("," sint)* ")" | "levicivita" | expr
    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := "-" unary | power
    power    := atom ["^" (INT | "(" "-" INT ")")]
    atom     := INT | "(" expr ")" | "sum" "(" IDENT ("," IDENT)* ")" "{" expr "}"
              | "diff" "(" expr "," ref ")" | "exp" "(" expr ")" | "p" "(" ref ")" | ref
    ref      := IDENT ["[" [index ("," index)*] [";" index] "]"]
    index    := INT | IDENT

Summation is explicit: only ``sum(...)`` sums, over the ranges of the
declared index variables.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations, product
from math import prod

from .bundle import FieldFamily, Slot, Tower
from .lifts import GeneratorSpec
from .symkernel import (
    ONE,
    ZERO,
    Expr,
    FuncAtom,
    KernelError,
    MetricQuantities,
    Symbol,
    exp as exp_expr,
)

GRAMMAR_VERSION = 1
MAX_DEPTH = 200
# size limits keep hostile inputs from allocating huge charts
MAX_BASE_DIM = 16
MAX_RANGE_SIZE = 64
MAX_TABLE_ENTRIES = 4096
MAX_FIELD_COMPONENTS = 1024
KEYWORDS = {"theory", "base", "range", "index", "field", "param", "const", "derived", "function", "assume",
            "option", "lagrangian", "hamiltonian", "symmetry", "component", "transport", "sum", "diff", "exp",
            "diag", "levicivita", "symmetric", "antisymmetric", "invmetric"}


# ---------------------------------------------------------------------------
# Errors


class DslError(Exception):
    def __init__(self, message: str, span=(0, 0), text: str = "", expected=()):
        self.message = message
        self.expected = tuple(sorted(set(expected)))
        start, end = span
        encoded_start = len(text[:start].encode("utf-8"))
        encoded_end = len(text[:end].encode("utf-8"))
        self.span = (encoded_start, encoded_end)
        self.char_span = (start, end)
        self.line = text.count("\n", 0, start) + 1
        self.column = start - (text.rfind("\n", 0, start) + 1) + 1
        super().__init__(f"{self.line}:{self.column}: {message}")


class ParseError(DslError):
    pass


class MissingBaseDecl(ParseError):
    pass


class ResolveError(DslError):
    pass


class DuplicateDeclaration(ResolveError):
    pass


class UnknownIdentifier(ResolveError):
    pass


class ArityMismatch(ResolveError):
    pass


# ---------------------------------------------------------------------------
# AST


def _span():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Num:
    value: int
    span: tuple = _span()


@dataclass(frozen=True)
class Ref:
    name: str
    indices: tuple | None = None  # None: no brackets
    jet: object = None  # index after ';'
    span: tuple = _span()


@dataclass(frozen=True)
class Momentum:
    ref: Ref
    span: tuple = _span()


@dataclass(frozen=True)
class Neg:
    operand: object
    span: tuple = _span()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    span: tuple = _span()


@dataclass(frozen=True)
class Power:
    base: object
    exponent: int
    span: tuple = _span()


@dataclass(frozen=True)
class Sum:
    variables: tuple
    body: object
    span: tuple = _span()


@dataclass(frozen=True)
class Diff:
    operand: object
    wrt: Ref
    span: tuple = _span()


@dataclass(frozen=True)
class Exp:
    operand: object
    span: tuple = _span()


@dataclass(frozen=True)
class BaseDecl:
    name: str
    dim: int
    span: tuple = _span()


@dataclass(frozen=True)
class RangeDecl:
    name: str
    size: int
    span: tuple = _span()


@dataclass(frozen=True)
class IndexDecl:
    names: tuple
    range_name: str
    span: tuple = _span()


@dataclass(frozen=True)
class FieldDecl:
    name: str
    slots: tuple = ()  # ((position, range), ...)
    symmetries: tuple = ()  # ((kind, i, j), ...)
    span: tuple = _span()


@dataclass(frozen=True)
class ParamDecl:
    name: str
    ranges: tuple = ()
    symmetry: str | None = None
    span: tuple = _span()


@dataclass(frozen=True)
class ConstDecl:
    name: str
    ranges: tuple
    kind: str  # "diag" | "levicivita" | "expr"
    values: tuple = ()  # diag entries
    expr: object = None
    span: tuple = _span()


@dataclass(frozen=True)
class DerivedDecl:
    names: tuple  # (sqrt name, lower metric name)
    function: str
    argument: str
    span: tuple = _span()


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    slots: tuple
    arguments: tuple
    span: tuple = _span()


@dataclass(frozen=True)
class AssumeDecl:
    kind: str
    target: str
    span: tuple = _span()


@dataclass(frozen=True)
class OptionDecl:
    name: str
    value: int
    span: tuple = _span()


@dataclass(frozen=True)
class DensityDecl:
    kind: str  # "lagrangian" | "hamiltonian"
    expr: object
    span: tuple = _span()


@dataclass(frozen=True)
class ComponentItem:
    target: Ref
    expr: object
    span: tuple = _span()


@dataclass(frozen=True)
class SymmetryDecl:
    name: str
    items: tuple  # ComponentItem or the string "transport"
    span: tuple = _span()


@dataclass(frozen=True)
class TheorySpec:
    name: str
    items: tuple
    version: int = GRAMMAR_VERSION
    span: tuple = _span()

    def declarations(self, cls) -> list:
        return [item for item in self.items if isinstance(item, cls)]


# ---------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "punct" | "eof"
    text: str
    start: int
    end: int


PUNCT = set("{}[](),;:=+-*/^")


def tokenize(text: str) -> list[Token]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            i += 1
        elif ch == "#":
            while i < n and text[i] != "\n":
                i += 1
        elif ch.isascii() and (ch.isalpha() or ch == "_"):
            j = i + 1
            while j < n and text[j].isascii() and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("ident", text[i:j], i, j))
            i = j
        elif ch.isascii() and ch.isdigit():
            j = i + 1
            while j < n and text[j].isascii() and text[j].isdigit():
                j += 1
            if j - i > 18:
                raise ParseError("integer literal too long", (i, j), text)
            tokens.append(Token("int", text[i:j], i, j))
            i = j
        elif ch in PUNCT:
            tokens.append(Token("punct", ch, i, i + 1))
            i += 1
        else:
            raise ParseError(f"unexpected character {ch!r}", (i, i + 1), text)
    tokens.append(Token("eof", "", n, n))
    return tokens


# ---------------------------------------------------------------------------
# Parser


def _check_header(text: str, require_header: bool) -> int:
    first = text.split("\n", 1)[0].strip()
    if first.startswith("#thy"):
        rest = first[4:].strip()
        if rest != str(GRAMMAR_VERSION):
            raise ParseError(f"unsupported grammar version {rest!r}", (0, len(first)), text)
        return GRAMMAR_VERSION
    if require_header:
        raise ParseError("missing '#thy 1' header", (0, min(len(text), len(first))), text)
    return GRAMMAR_VERSION


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.depth = 0

    # -- token helpers ------------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message: str, expected=()):
        tok = self.tok
        start = self.tokens[self.pos - 1].start if self.pos > 0 else tok.start
        end = max(tok.end, start)
        raise ParseError(message, (start, end), self.text, expected)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("punct", "ident") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}", [text])
        tok = self.tok
        self.pos += 1
        return tok

    def ident(self, what: str = "identifier") -> str:
        tok = self.tok
        if tok.kind != "ident" or tok.text in KEYWORDS and what != "any":
            self.error(f"expected {what}, found {tok.text or 'end of input'!r}", [what])
        self.pos += 1
        return tok.text

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "int":
            self.error(f"expected integer, found {tok.text or 'end of input'!r}", ["integer"])
        self.pos += 1
        return int(tok.text)

    def signed_integer(self) -> int:
        sign = -1 if self.accept("-") else 1
        return sign * self.integer()

    def enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.error("expression nesting too deep")

    def leave(self):
        self.depth -= 1

    # -- top level ------------------------------------------------------------------
    def parse(self) -> TheorySpec:
        start = self.tok.start
        self.expect("theory")
        name_tok = self.tok
        name = self.ident("theory name")
        self.expect("{")
        items = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("unterminated theory block", ["}"])
            items.append(self.item())
        end = self.expect("}").end
        if self.tok.kind != "eof":
            self.error("trailing input after theory block", ["end of input"])
        if not any(isinstance(i, BaseDecl) for i in items):
            raise MissingBaseDecl("theory declares no base", (name_tok.start, name_tok.end), self.text)
        return TheorySpec(name, tuple(items), GRAMMAR_VERSION, (start, end))

    def item(self):
        tok = self.tok
        start = tok.start
        handlers = {
            "base": self.base_decl, "range": self.range_decl, "index": self.index_decl,
            "field": self.field_decl, "param": self.param_decl, "const": self.const_decl,
            "derived": self.derived_decl, "function": self.function_decl, "assume": self.assume_decl,
            "option": self.option_decl, "lagrangian": self.density_decl, "hamiltonian": self.density_decl,
            "symmetry": self.symmetry_decl,
        }
        if tok.kind != "ident" or tok.text not in handlers:
            self.error(f"expected a declaration, found {tok.text or 'end of input'!r}", sorted(handlers))
        node = handlers[tok.text]()
        end = self.tokens[self.pos - 1].end
        return _with_span(node, (start, end))

    def base_decl(self):
        self.expect("base")
        name = self.ident("base name")
        self.expect("[")
        dim = self.integer()
        self.expect("]")
        self.expect(";")
        return BaseDecl(name, dim)

    def range_decl(self):
        self.expect("range")
        name = self.ident("range name")
        self.expect("=")
        size = self.integer()
        self.expect(";")
        return RangeDecl(name, size)

    def index_decl(self):
        self.expect("index")
        names = [self.ident("index name")]
        while self.accept(","):
            names.append(self.ident("index name"))
        self.expect(":")
        rng = self.ident("range name") if not self.at("base") else self._keyword("base")
        self.expect(";")
        return IndexDecl(tuple(names), rng)

    def _keyword(self, word):
        self.expect(word)
        return word

    def _range_name(self) -> str:
        if self.at("base"):
            return self._keyword("base")
        return self.ident("range name")

    def slots(self) -> tuple:
        out = []
        self.expect("[")
        while True:
            if self.accept("^"):
                out.append(("^", self._range_name()))
            elif self.tok.kind == "ident" and self.tok.text.startswith("_") and len(self.tok.text) > 1:
                out.append(("_", self.tok.text[1:]))
                self.pos += 1
            else:
                self.error("expected slot '^range' or '_range'", ["^", "_"])
            if not self.accept(","):
                break
        self.expect("]")
        return tuple(out)

    def field_decl(self):
        self.expect("field")
        name = self.ident("field name")
        slots = self.slots() if self.at("[") else ()
        syms = []
        while self.at("symmetric") or self.at("antisymmetric"):
            kind = "sym" if self.tok.text == "symmetric" else "anti"
            self.pos += 1
            self.expect("(")
            i = self.integer()
            self.expect(",")
            j = self.integer()
            self.expect(")")
            syms.append((kind, i, j))
        self.expect(";")
        return FieldDecl(name, slots, tuple(syms))

    def _range_list(self) -> tuple:
        self.expect("[")
        names = [self._range_name()]
        while self.accept(","):
            names.append(self._range_name())
        self.expect("]")
        return tuple(names)

    def param_decl(self):
        self.expect("param")
        name = self.ident("parameter name")
        ranges = self._range_list() if self.at("[") else ()
        symmetry = None
        if self.at("symmetric") or self.at("antisymmetric"):
            symmetry = self.tok.text
            self.pos += 1
        self.expect(";")
        return ParamDecl(name, ranges, symmetry)

    def const_decl(self):
        self.expect("const")
        name = self.ident("constant name")
        ranges = self._range_list() if self.at("[") else ()
        self.expect("=")
        if self.accept("diag"):
            self.expect("(")
            values = [self.signed_integer()]
            while self.accept(","):
                values.append(self.signed_integer())
            self.expect(")")
            self.expect(";")
            return ConstDecl(name, ranges, "diag", tuple(values))
        if self.accept("levicivita"):
            self.expect(";")
            return ConstDecl(name, ranges, "levicivita")
        value = self.expr()
        self.expect(";")
        return ConstDecl(name, ranges, "expr", (), value)

    def derived_decl(self):
        self.expect("derived")
        first = self.ident("derived name")
        self.expect(",")
        second = self.ident("derived name")
        self.expect("=")
        self.expect("invmetric")
        self.expect("(")
        arg = self.ident("field name")
        self.expect(")")
        self.expect(";")
        return DerivedDecl((first, second), "invmetric", arg)

    def function_decl(self):
        self.expect("function")
        name = self.ident("function name")
        slots = self.slots() if self.at("[") else ()
        self.expect("(")
        args = [self.ident("argument name")]
        while self.accept(","):
            args.append(self.ident("argument name"))
        self.expect(")")
        self.expect(";")
        return FunctionDecl(name, slots, tuple(args))

    def assume_decl(self):
        self.expect("assume")
        kind = self.ident("assumption kind")
        self.expect("(")
        target = self.ident("identifier")
        self.expect(")")
        self.expect(";")
        return AssumeDecl(kind, target)

    def option_decl(self):
        self.expect("option")
        name = self.ident("option name")
        self.expect("=")
        value = self.integer()
        self.expect(";")
        return OptionDecl(name, value)

    def density_decl(self):
        kind = self.tok.text
        self.pos += 1
        self.expect("=")
        value = self.expr()
        self.expect(";")
        return DensityDecl(kind, value)

    def symmetry_decl(self):
        self.expect("symmetry")
        name = self.ident("symmetry name")
        self.expect("{")
        items = []
        while not self.at("}"):
            start = self.tok.start
            if self.accept("transport"):
                self.expect(";")
                items.append("transport")
            elif self.accept("component"):
                target = self.ref()
                self.expect("=")
                value = self.expr()
                self.expect(";")
                items.append(ComponentItem(target, value, (start, self.tokens[self.pos - 1].end)))
            else:
                self.error("expected 'component' or 'transport'", ["component", "transport", "}"])
        self.expect("}")
        return SymmetryDecl(name, tuple(items))

    # -- expressions ------------------------------------------------------------------
    def expr(self):
        self.enter()
        start = self.tok.start
        node = self.term()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.pos += 1
            right = self.term()
            node = BinOp(op, node, right, (start, self.tokens[self.pos - 1].end))
        self.leave()
        return node

    def term(self):
        start = self.tok.start
        node = self.unary()
        while self.at("*") or self.at("/"):
            op = self.tok.text
            self.pos += 1
            right = self.unary()
            node = BinOp(op, node, right, (start, self.tokens[self.pos - 1].end))
        return node

    def unary(self):
        start = self.tok.start
        if self.accept("-"):
            self.enter()
            operand = self.unary()
            self.leave()
            return Neg(operand, (start, self.tokens[self.pos - 1].end))
        return self.power()

    def power(self):
        start = self.tok.start
        node = self.atom()
        if self.accept("^"):
            if self.accept("("):
                self.expect("-")
                exponent = -self.integer()
                self.expect(")")
            else:
                exponent = self.integer()
            node = Power(node, exponent, (start, self.tokens[self.pos - 1].end))
        return node

    def atom(self):
        tok = self.tok
        start = tok.start
        if tok.kind == "int":
            self.pos += 1
            return Num(int(tok.text), (start, tok.end))
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        if self.accept("sum"):
            self.expect("(")
            names = [self.ident("index name")]
            while self.accept(","):
                names.append(self.ident("index name"))
            self.expect(")")
            self.expect("{")
            body = self.expr()
            self.expect("}")
            return Sum(tuple(names), body, (start, self.tokens[self.pos - 1].end))
        if self.accept("diff"):
            self.expect("(")
            operand = self.expr()
            self.expect(",")
            wrt = self.ref()
            self.expect(")")
            return Diff(operand, wrt, (start, self.tokens[self.pos - 1].end))
        if self.accept("exp"):
            self.expect("(")
            operand = self.expr()
            self.expect(")")
            return Exp(operand, (start, self.tokens[self.pos - 1].end))
        if tok.kind == "ident" and tok.text == "p" and self.tokens[self.pos + 1].text == "(":
            self.pos += 2
            inner = self.ref()
            self.expect(")")
            return Momentum(inner, (start, self.tokens[self.pos - 1].end))
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            return self.ref()
        self.error(f"expected an expression, found {tok.text or 'end of input'!r}",
                   ["(", "identifier", "integer", "sum", "diff", "exp", "-"])

    def index(self):
        tok = self.tok
        if tok.kind == "int":
            self.pos += 1
            return int(tok.text)
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            self.pos += 1
            return tok.text
        self.error("expected an index (integer or index name)", ["integer", "index name"])

    def ref(self) -> Ref:
        tok = self.tok
        start = tok.start
        name = self.ident("name")
        if not self.accept("["):
            return Ref(name, None, None, (start, tok.end))
        indices = []
        jet = None
        if not self.at(";") and not self.at("]"):
            indices.append(self.index())
            while self.accept(","):
                indices.append(self.index())
        if self.accept(";"):
            jet = self.index()
        end = self.expect("]").end
        return Ref(name, tuple(indices), jet, (start, end))


def _factors(node) -> list:
    if isinstance(node, BinOp) and node.op == "*":
        return _factors(node.left) + _factors(node.right)
    return [node]


def _free_indices(node) -> set:
    """Index names a node reads from its environment."""
    if isinstance(node, Ref):
        return {i for i in (node.indices or ()) + (node.jet,) if isinstance(i, str)}
    if isinstance(node, Momentum):
        return _free_indices(node.ref)
    if isinstance(node, (Neg, Exp)):
        return _free_indices(node.operand)
    if isinstance(node, BinOp):
        return _free_indices(node.left) | _free_indices(node.right)
    if isinstance(node, Power):
        return _free_indices(node.base)
    if isinstance(node, Diff):
        return _free_indices(node.operand) | _free_indices(node.wrt)
    if isinstance(node, Sum):
        return _free_indices(node.body) - set(node.variables)
    return set()


def _with_span(node, span):
    return type(node)(**{**{f: getattr(node, f) for f in node.__dataclass_fields__ if f != "span"}, "span": span})


def parse(text, require_header: bool = False) -> TheorySpec:
    """Parse UTF-8 text (str or bytes) into a TheorySpec; raise ParseError."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not UTF-8: {exc.reason}", (exc.start, exc.start + 1), "") from None
    _check_header(text, require_header)
    try:
        return _Parser(text).parse()
    except RecursionError:
        raise ParseError("input nesting too deep", (0, len(text)), text) from None


# ---------------------------------------------------------------------------
# Printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def print_expr(node, parent: int = 0) -> str:
    if isinstance(node, Num):
        return str(node.value)
    if isinstance(node, Ref):
        return _print_ref(node)
    if isinstance(node, Momentum):
        return f"p({_print_ref(node.ref)})"
    if isinstance(node, Sum):
        return f"sum({', '.join(node.variables)}){{{print_expr(node.body)}}}"
    if isinstance(node, Diff):
        return f"diff({print_expr(node.operand)}, {_print_ref(node.wrt)})"
    if isinstance(node, Exp):
        return f"exp({print_expr(node.operand)})"
    if isinstance(node, Power):
        base = print_expr(node.base, 4)
        if not _is_atomic(node.base):
            base = f"({print_expr(node.base)})"
        exponent = str(node.exponent) if node.exponent >= 0 else f"(-{-node.exponent})"
        return f"{base}^{exponent}"
    if isinstance(node, Neg):
        inner = node.operand
        text = print_expr(inner, 3)
        if isinstance(inner, BinOp):
            text = f"({print_expr(inner)})"
        return f"-{text}"
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        left = print_expr(node.left, prec)
        if isinstance(node.left, BinOp) and _PREC[node.left.op] < prec:
            left = f"({print_expr(node.left)})"
        right = print_expr(node.right, prec)
        if isinstance(node.right, BinOp) and _PREC[node.right.op] <= prec:
            right = f"({print_expr(node.right)})"
        sep = f" {node.op} " if prec == 1 else node.op
        return f"{left}{sep}{right}"
    raise TypeError(f"not an expression node: {node!r}")


def _is_atomic(node) -> bool:
    return isinstance(node, (Num, Ref, Momentum, Sum, Diff, Exp))


def _print_ref(ref: Ref) -> str:
    if ref.indices is None and ref.jet is None:
        return ref.name
    inner = ", ".join(map(str, ref.indices or ()))
    if ref.jet is not None:
        inner = f"{inner};{ref.jet}"
    return f"{ref.name}[{inner}]"


def _print_slots(slots) -> str:
    if not slots:
        return ""
    return "[" + ", ".join(f"{pos}{rng}" for pos, rng in slots) + "]"


def print_item(item) -> list[str]:
    if isinstance(item, BaseDecl):
        return [f"base {item.name}[{item.dim}];"]
    if isinstance(item, RangeDecl):
        return [f"range {item.name} = {item.size};"]
    if isinstance(item, IndexDecl):
        return [f"index {', '.join(item.names)} : {item.range_name};"]
    if isinstance(item, FieldDecl):
        syms = "".join(f" {'symmetric' if k == 'sym' else 'antisymmetric'}({i}, {j})" for k, i, j in item.symmetries)
        return [f"field {item.name}{_print_slots(item.slots)}{syms};"]
    if isinstance(item, ParamDecl):
        ranges = f"[{', '.join(item.ranges)}]" if item.ranges else ""
        sym = f" {item.symmetry}" if item.symmetry else ""
        return [f"param {item.name}{ranges}{sym};"]
    if isinstance(item, ConstDecl):
        ranges = f"[{', '.join(item.ranges)}]" if item.ranges else ""
        if item.kind == "diag":
            value = f"diag({', '.join(map(str, item.values))})"
        elif item.kind == "levicivita":
            value = "levicivita"
        else:
            value = print_expr(item.expr)
        return [f"const {item.name}{ranges} = {value};"]
    if isinstance(item, DerivedDecl):
        return [f"derived {item.names[0]}, {item.names[1]} = {item.function}({item.argument});"]
    if isinstance(item, FunctionDecl):
        return [f"function {item.name}{_print_slots(item.slots)}({', '.join(item.arguments)});"]
    if isinstance(item, AssumeDecl):
        return [f"assume {item.kind}({item.target});"]
    if isinstance(item, OptionDecl):
        return [f"option {item.name} = {item.value};"]
    if isinstance(item, DensityDecl):
        return [f"{item.kind} = {print_expr(item.expr)};"]
    if isinstance(item, SymmetryDecl):
        lines = [f"symmetry {item.name} {{"]
        for sub in item.items:
            if sub == "transport":
                lines.append("  transport;")
            else:
                lines.append(f"  component {_print_ref(sub.target)} = {print_expr(sub.expr)};")
        lines.append("}")
        return lines
    raise TypeError(f"not a declaration: {item!r}")


def print_spec(spec: TheorySpec) -> str:
    lines = [f"#thy {spec.version}", f"theory {spec.name} {{"]
    for item in spec.items:
        lines.extend("  " + line for line in print_item(item))
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Resolution


@dataclass
class Theory:
    name: str
    tower: Tower
    spec: TheorySpec
    lagrangian: Expr | None = None
    hamiltonian: Expr | None = None
    generators: dict = field(default_factory=dict)
    assumptions: list = field(default_factory=list)
    options: dict = field(default_factory=dict)
    metrics: list = field(default_factory=list)
    digest: str = ""


def levi_civita(index: tuple) -> int:
    if len(set(index)) != len(index):
        return 0
    sign = 1
    perm = list(index)
    for i in range(len(perm)):
        while perm[i] != sorted(index)[i]:
            j = sorted(index).index(perm[i])
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


class _Resolver:
    def __init__(self, spec: TheorySpec, text: str):
        self.spec = spec
        self.text = text
        self.names: dict = {}
        self.ranges: dict = {}
        self.index_vars: dict = {}
        self.fields: dict = {}
        self.params: dict = {}  # name -> (ranges, table index -> (sign, Symbol))
        self.consts: dict = {}  # name -> (ranges, table)
        self.derived: dict = {}  # name -> ("sqrt"| "lower", MetricQuantities)
        self.functions: dict = {}  # name -> FunctionDecl
        self.nonzero: set = set()

    def fail(self, cls, message: str, node):
        raise cls(message, getattr(node, "span", (0, 0)), self.text)

    def declare(self, name: str, node):
        if name in self.names or name in KEYWORDS or name == "p":
            self.fail(DuplicateDeclaration, f"{name!r} is already declared", node)
        self.names[name] = node

    def range_size(self, name: str, node) -> int:
        if name not in self.ranges:
            self.fail(UnknownIdentifier, f"unknown range {name!r}", node)
        return self.ranges[name]

    def check_table_size(self, sizes, node):
        if prod(sizes) > MAX_TABLE_ENTRIES:
            self.fail(ResolveError, f"{prod(sizes)} components exceed the limit of {MAX_TABLE_ENTRIES}", node)

    def resolve(self) -> Theory:
        spec = self.spec
        bases = spec.declarations(BaseDecl)
        if len(bases) > 1:
            self.fail(DuplicateDeclaration, "base declared twice", bases[1])
        base = bases[0]
        if base.dim < 1:
            self.fail(ResolveError, "base dimension must be positive", base)
        if base.dim > MAX_BASE_DIM:
            self.fail(ResolveError, f"base dimension exceeds {MAX_BASE_DIM}", base)
        self.declare(base.name, base)
        self.base = base
        self.ranges["base"] = base.dim

        for item in spec.items:
            if isinstance(item, RangeDecl):
                self.declare(item.name, item)
                if item.size < 1:
                    self.fail(ResolveError, "range size must be positive", item)
                if item.size > MAX_RANGE_SIZE:
                    self.fail(ResolveError, f"range size exceeds {MAX_RANGE_SIZE}", item)
                self.ranges[item.name] = item.size
        for item in spec.declarations(IndexDecl):
            size = self.range_size(item.range_name, item)
            for name in item.names:
                self.declare(name, item)
                self.index_vars[name] = size
        for item in spec.declarations(AssumeDecl):
            if item.kind == "nonzero":
                self.nonzero.add(item.target)

        families = []
        for item in spec.declarations(FieldDecl):
            self.declare(item.name, item)
            slots = tuple(Slot(rng, self.range_size(rng, item), pos) for pos, rng in item.slots)
            self.check_table_size([slot.size for slot in slots], item)
            try:
                fam = FieldFamily(item.name, slots, tuple((i, j, k) for k, i, j in item.symmetries))
            except ValueError as exc:
                self.fail(ResolveError, str(exc), item)
            families.append(fam)
            self.fields[item.name] = fam

        total = sum(len(fam.components()) for fam in families)
        if total > MAX_FIELD_COMPONENTS:
            self.fail(ResolveError, f"{total} field components exceed the limit of {MAX_FIELD_COMPONENTS}", spec)

        param_symbols = []
        for item in spec.declarations(ParamDecl):
            self.declare(item.name, item)
            table = {}
            sizes = [self.range_size(r, item) for r in item.ranges]
            self.check_table_size(sizes, item)
            for idx in product(*(range(s) for s in sizes)):
                canon, sign = idx, 1
                if item.symmetry and len(idx) == 2:
                    if idx[0] > idx[1]:
                        canon = (idx[1], idx[0])
                        sign = -1 if item.symmetry == "antisymmetric" else 1
                    elif idx[0] == idx[1] and item.symmetry == "antisymmetric":
                        table[idx] = (0, None)
                        continue
                label = item.name if not canon else f"{item.name}[{','.join(map(str, canon))}]"
                sym = Symbol("param", item.name, canon, name=label, laurent=item.name in self.nonzero)
                table[idx] = (sign, sym)
                if canon == idx:
                    param_symbols.append(sym)
            if item.symmetry and len(sizes) != 2:
                self.fail(ArityMismatch, "symmetry flags need exactly two indices", item)
            self.params[item.name] = (item.ranges, table)

        try:
            self.tower = Tower(base.dim, families, base.name, param_symbols)
        except Exception as exc:  # bundle errors carry no span
            self.fail(ResolveError, str(exc), spec)

        for item in spec.declarations(ConstDecl):
            self.declare(item.name, item)
            sizes = [self.range_size(r, item) for r in item.ranges]
            self.check_table_size(sizes, item)
            table = {}
            if item.kind == "diag":
                if len(sizes) != 2 or sizes[0] != sizes[1] or len(item.values) != sizes[0]:
                    self.fail(ArityMismatch, "diag needs a square table matching its entries", item)
                for k, v in enumerate(item.values):
                    table[(k, k)] = Expr.const(v)
            elif item.kind == "levicivita":
                if any(s != len(sizes) for s in sizes):
                    self.fail(ArityMismatch, "levicivita needs n indices of range n", item)
                for perm in permutations(range(len(sizes))):
                    table[perm] = Expr.const(levi_civita(perm))
            else:
                value = self.expression(item.expr, {})
                for idx in product(*(range(s) for s in sizes)):
                    table[idx] = value
            self.consts[item.name] = (sizes, table)

        metrics = []
        for item in spec.declarations(DerivedDecl):
            for name in item.names:
                self.declare(name, item)
            fam = self.fields.get(item.argument)
            if fam is None:
                self.fail(UnknownIdentifier, f"unknown field {item.argument!r}", item)
            if fam.rank != 2 or fam.symmetries != ((0, 1, "sym"),) or any(s.position != "^" for s in fam.slots):
                self.fail(ArityMismatch, "invmetric needs a symmetric field with two upper slots", item)
            dim = fam.slots[0].size
            upper = {}
            for a in range(dim):
                for b in range(a, dim):
                    upper[(a, b)] = self.tower.field(fam.name, (a, b))[1]
            metric = MetricQuantities(upper, dim, item.names[0], f"det({item.names[1]})",
                                      sqrt_latex="\\sqrt{-g}", det_latex="g", tag=item.argument)
            metrics.append(metric)
            self.derived[item.names[0]] = ("sqrt", metric)
            self.derived[item.names[1]] = ("lower", metric)

        for item in spec.declarations(FunctionDecl):
            self.declare(item.name, item)
            for arg in item.arguments:
                if arg != base.name and arg not in self.fields:
                    self.fail(UnknownIdentifier, f"function argument {arg!r} is not the base or a field", item)
            for _, rng in item.slots:
                self.range_size(rng, item)
            self.functions[item.name] = item

        theory = Theory(spec.name, self.tower, spec, metrics=metrics)
        for item in spec.declarations(DensityDecl):
            value = self.expression(item.expr, {})
            if item.kind == "lagrangian":
                if theory.lagrangian is not None:
                    self.fail(DuplicateDeclaration, "lagrangian declared twice", item)
                theory.lagrangian = value
            else:
                if theory.hamiltonian is not None:
                    self.fail(DuplicateDeclaration, "hamiltonian declared twice", item)
                theory.hamiltonian = value
        for item in spec.declarations(SymmetryDecl):
            if item.name in theory.generators:
                self.fail(DuplicateDeclaration, f"symmetry {item.name!r} declared twice", item)
            theory.generators[item.name] = self.generator(item)
        for item in spec.declarations(AssumeDecl):
            if item.target not in self.names:
                self.fail(UnknownIdentifier, f"assumption about unknown {item.target!r}", item)
            theory.assumptions.append(f"{item.kind}({item.target})")
        for metric in metrics:
            theory.assumptions.append(f"nonzero({metric.sqrt_neg_det.name})")
        for item in spec.declarations(OptionDecl):
            theory.options[item.name] = item.value
        return theory

    # -- generators -------------------------------------------------------------------
    def generator(self, item: SymmetryDecl) -> GeneratorSpec:
        base_parts: dict = {}
        fiber_parts: dict = {}
        transport = False
        for sub in item.items:
            if sub == "transport":
                transport = True
                continue
            target = sub.target
            if target.jet is not None:
                self.fail(ResolveError, "generator components cannot target jets", target)
            if target.name == self.base.name:
                ranges = [self.base.dim]
            elif target.name in self.fields:
                ranges = [s.size for s in self.fields[target.name].slots]
            else:
                self.fail(UnknownIdentifier, f"component target {target.name!r} is not a coordinate", target)
            indices = target.indices or ()
            if len(indices) != len(ranges):
                self.fail(ArityMismatch, f"{target.name} expects {len(ranges)} indices", target)
            free = [i for i in indices if isinstance(i, str)]
            for var in free:
                if var not in self.index_vars:
                    self.fail(UnknownIdentifier, f"unknown index {var!r}", target)
            for values in product(*(range(self.index_vars[v]) for v in free)):
                env = dict(zip(free, values))
                concrete = tuple(env[i] if isinstance(i, str) else i for i in indices)
                for k, r in zip(concrete, ranges):
                    if not 0 <= k < r:
                        self.fail(ArityMismatch, f"index {k} out of range", target)
                value = self.expression(sub.expr, env)
                if target.name == self.base.name:
                    base_parts.setdefault(concrete[0], []).append(value)
                else:
                    sign, sym = self.tower.field(target.name, concrete)
                    if sign:
                        fiber_parts.setdefault(sym, []).append(value * sign)
        base = {mu: -_mean(vals) for mu, vals in base_parts.items()}
        fiber = {y: -_mean(vals) for y, vals in fiber_parts.items()}
        params = tuple(sym for _, table in self.params.values() for sign, sym in table.values() if sym is not None)
        return GeneratorSpec(item.name, base, fiber, transport, tuple(dict.fromkeys(params)))

    # -- expressions --------------------------------------------------------------------
    def index_value(self, idx, env, node) -> int:
        if isinstance(idx, int):
            return idx
        if idx in env:
            return env[idx]
        self.fail(UnknownIdentifier, f"unbound index {idx!r}", node)

    def expression(self, node, env) -> Expr:
        try:
            return self._expr(node, env)
        except KernelError as exc:
            self.fail(ResolveError, str(exc), node)
        except RecursionError:
            self.fail(ResolveError, "expression nesting too deep", node)

    def _expr(self, node, env) -> Expr:
        if isinstance(node, Num):
            return Expr.const(node.value)
        if isinstance(node, Neg):
            return -self._expr(node.operand, env)
        if isinstance(node, BinOp):
            left = self._expr(node.left, env)
            if node.op == "*" and left.is_zero():
                return ZERO
            right = self._expr(node.right, env)
            if node.op == "+":
                return left + right
            if node.op == "-":
                return left - right
            if node.op == "*":
                return left * right
            if right.is_zero():
                self.fail(ResolveError, "division by zero", node)
            if not right.is_unit():
                self.fail(ResolveError, "division only by nonzero constants or declared nonzero quantities", node)
            return left * right.inv()
        if isinstance(node, Power):
            base = self._expr(node.base, env)
            if node.exponent < 0 and not base.is_unit():
                self.fail(ResolveError, "negative powers need an invertible base", node)
            return base ** node.exponent
        if isinstance(node, Sum):
            sizes = []
            for var in node.variables:
                if var not in self.index_vars:
                    self.fail(UnknownIdentifier, f"unknown index {var!r}", node)
                sizes.append(self.index_vars[var])
            if len(set(node.variables)) != len(node.variables):
                self.fail(DuplicateDeclaration, "repeated summation index", node)
            return self._sum(node, sizes, env)
        if isinstance(node, Diff):
            target = self._ref(node.wrt, env)
            if len(target.terms) != 1:
                self.fail(ResolveError, "diff needs a coordinate", node.wrt)
            ((mono, coeff),) = target.terms.items()
            if len(mono) != 1 or mono[0][1] != 1 or not isinstance(mono[0][0], Symbol):
                self.fail(ResolveError, "diff needs a coordinate", node.wrt)
            return self._expr(node.operand, env).diff(mono[0][0]) * coeff
        if isinstance(node, Exp):
            return exp_expr(self._expr(node.operand, env))
        if isinstance(node, Momentum):
            ref = node.ref
            if ref.name not in self.fields or ref.jet is None:
                self.fail(ResolveError, "p(...) needs a jet reference such as p(phi[;mu])", ref)
            sign, y = self._field_component(ref, env)
            if not sign:
                return ZERO
            mu = self.index_value(ref.jet, env, ref)
            if not 0 <= mu < self.base.dim:
                self.fail(ArityMismatch, "derivative index out of range", ref)
            return Expr.atom(self.tower.momentum(y, mu)) * sign
        if isinstance(node, Ref):
            return self._ref(node, env)
        raise TypeError(f"unexpected node {node!r}")

    def _sum(self, node: Sum, sizes: list, env) -> Expr:
        """Nested loops that multiply in each factor once its indices are bound, pruning zero branches."""
        variables = node.variables
        position = {v: k for k, v in enumerate(variables)}
        stages = [[] for _ in range(len(variables) + 1)]
        for factor in _factors(node.body):
            bound = [position[v] for v in _free_indices(factor) if v in position]
            stages[max(bound, default=-1) + 1].append(factor)

        def walk(k: int, scope: dict, acc: Expr) -> Expr:
            for factor in stages[k]:
                acc = acc * self._expr(factor, scope)
                if acc.is_zero():
                    return ZERO
            if k == len(variables):
                return acc
            total = ZERO
            for value in range(sizes[k]):
                inner = dict(scope)
                inner[variables[k]] = value
                total = total + walk(k + 1, inner, acc)
            return total

        return walk(0, dict(env), ONE)

    def _field_component(self, ref: Ref, env):
        fam = self.fields[ref.name]
        indices = ref.indices or ()
        if len(indices) != fam.rank:
            self.fail(ArityMismatch, f"{ref.name} expects {fam.rank} indices, got {len(indices)}", ref)
        concrete = tuple(self.index_value(i, env, ref) for i in indices)
        for k, slot in zip(concrete, fam.slots):
            if not 0 <= k < slot.size:
                self.fail(ArityMismatch, f"index {k} out of range for {ref.name}", ref)
        return self.tower.field(ref.name, concrete)

    def _ref(self, ref: Ref, env) -> Expr:
        name = ref.name
        indices = ref.indices or ()
        if ref.jet is not None and name not in self.fields:
            self.fail(ResolveError, f"{name!r} is not a field; ';' marks a derivative", ref)
        if name == self.base.name:
            if len(indices) != 1:
                self.fail(ArityMismatch, f"{name} expects one index", ref)
            mu = self.index_value(indices[0], env, ref)
            if not 0 <= mu < self.base.dim:
                self.fail(ArityMismatch, "base index out of range", ref)
            return Expr.atom(self.tower.base[mu])
        if name in self.fields:
            sign, y = self._field_component(ref, env)
            if not sign:
                return ZERO
            if ref.jet is None:
                return Expr.atom(y) * sign
            mu = self.index_value(ref.jet, env, ref)
            if not 0 <= mu < self.base.dim:
                self.fail(ArityMismatch, "derivative index out of range", ref)
            return Expr.atom(self.tower.jet(y, mu)) * sign
        if name in self.params:
            ranges, table = self.params[name]
            if len(indices) != len(ranges):
                self.fail(ArityMismatch, f"{name} expects {len(ranges)} indices", ref)
            concrete = tuple(self.index_value(i, env, ref) for i in indices)
            if concrete not in table:
                self.fail(ArityMismatch, f"index out of range for {name}", ref)
            sign, sym = table[concrete]
            return ZERO if not sign else Expr.atom(sym) * sign
        if name in self.consts:
            sizes, table = self.consts[name]
            if len(indices) != len(sizes):
                self.fail(ArityMismatch, f"{name} expects {len(sizes)} indices", ref)
            concrete = tuple(self.index_value(i, env, ref) for i in indices)
            if any(not 0 <= k < s for k, s in zip(concrete, sizes)):
                self.fail(ArityMismatch, f"index out of range for {name}", ref)
            return table.get(concrete, ZERO)
        if name in self.derived:
            kind, metric = self.derived[name]
            if kind == "sqrt":
                if indices:
                    self.fail(ArityMismatch, f"{name} takes no indices", ref)
                return Expr.atom(metric.sqrt_neg_det)
            if len(indices) != 2:
                self.fail(ArityMismatch, f"{name} expects two indices", ref)
            a, b = (self.index_value(i, env, ref) for i in indices)
            if not (0 <= a < metric.dim and 0 <= b < metric.dim):
                self.fail(ArityMismatch, f"index out of range for {name}", ref)
            return metric.lower[(a, b)]
        if name in self.functions:
            decl = self.functions[name]
            if len(indices) != len(decl.slots):
                self.fail(ArityMismatch, f"{name} expects {len(decl.slots)} indices", ref)
            concrete = tuple(self.index_value(i, env, ref) for i in indices)
            for k, (_, rng) in zip(concrete, decl.slots):
                if not 0 <= k < self.ranges[rng]:
                    self.fail(ArityMismatch, f"index out of range for {name}", ref)
            args = []
            for arg in decl.arguments:
                if arg == self.base.name:
                    args.extend(Expr.atom(x) for x in self.tower.base)
                else:
                    args.extend(Expr.atom(y) for y in self.tower.fields if y.family == arg)
            return Expr.atom(FuncAtom(name, concrete, tuple(args)))
        if name in self.index_vars:
            self.fail(ResolveError, f"index {name!r} used as a value", ref)
        self.fail(UnknownIdentifier, f"unknown identifier {name!r}", ref)


def _mean(values: list) -> Expr:
    total = ZERO
    for v in values:
        total = total + v
    return total if len(values) == 1 else total * Fraction(1, len(values))


def resolve(spec: TheorySpec, text: str = "") -> Theory:
    theory = _Resolver(spec, text).resolve()
    theory.digest = hashlib.sha256(print_spec(spec).encode("utf-8")).hexdigest()
    return theory


def load_theory(text, require_header: bool = False) -> Theory:
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="strict")
    return resolve(parse(text, require_header), text)


__all__ = [
    "parse",
    "print_spec",
    "print_expr",
    "resolve",
    "load_theory",
    "Theory",
    "TheorySpec",
    "DslError",
    "ParseError",
    "MissingBaseDecl",
    "ResolveError",
    "DuplicateDeclaration",
    "UnknownIdentifier",
    "ArityMismatch",
    "tokenize",
]
