"""Finite-signature first-order logic: syntax tree, parser and printer.

Concrete syntax, one sentence per line::

    forall x (Person(x) -> exists y (Book(y) & Owns(x,y)))

Operators by increasing binding strength: ``<->``, ``->`` (right
associative), ``|``, ``&``, then the prefix forms ``~``, ``forall v`` and
``exists v``. A quantifier scopes over the next unary formula, so
``exists x P(x) & Q(x)`` leaves the second ``x`` outside the quantifier.
Lowercase terms are variables when bound by an enclosing quantifier and
entity constants otherwise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

__all__ = [
    "Signature", "Var", "Const", "Term",
    "Formula", "Atom", "Not", "And", "Or", "Implies", "Iff", "ForAll", "Exists",
    "ParseError", "SignatureError",
    "parse", "render", "free_variables", "substitute", "normalize",
    "conj", "disj", "is_sentence", "subformulas",
]

_PRED_RE = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")
_NAME_RE = re.compile(r"[a-z][a-z0-9_]*\Z")
KEYWORDS = frozenset({"forall", "exists"})


class SignatureError(ValueError):
    pass


class ParseError(ValueError):
    """Syntax or well-formedness error, with 1-based line and column."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Signature:
    """Ordered entities and ``(name, arity)`` predicates."""

    entities: tuple[str, ...]
    predicates: tuple[tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(
            self, "predicates", tuple((str(n), int(a)) for n, a in self.predicates)
        )
        if not self.entities or not self.predicates:
            raise SignatureError("signature needs at least one entity and one predicate")
        if len(set(self.entities)) != len(self.entities):
            raise SignatureError("duplicate entity name")
        names = [n for n, _ in self.predicates]
        if len(set(names)) != len(names):
            raise SignatureError("duplicate predicate name")
        for e in self.entities:
            if not _NAME_RE.match(e) or e in KEYWORDS:
                raise SignatureError(f"bad entity name {e!r}")
        for n, a in self.predicates:
            if not _PRED_RE.match(n):
                raise SignatureError(f"bad predicate name {n!r}")
            if a not in (1, 2):
                raise SignatureError(f"predicate {n} has arity {a}; only 1 and 2 are supported")

    @property
    def arity(self) -> dict[str, int]:
        return dict(self.predicates)

    @property
    def n_atoms(self) -> int:
        return sum(len(self.entities) ** a for _, a in self.predicates)

    def to_json(self) -> dict:
        return {
            "entities": list(self.entities),
            "predicates": [{"name": n, "arity": a} for n, a in self.predicates],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Signature":
        return cls(
            tuple(data["entities"]),
            tuple((p["name"], p["arity"]) for p in data["predicates"]),
        )


# --- terms and formulas -----------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


Term = Union[Var, Const]


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Iff:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class ForAll:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


Formula = Union[Atom, Not, And, Or, Implies, Iff, ForAll, Exists]


def _flatten(cls, parts: Iterable[Formula]) -> tuple:
    out = []
    for p in parts:
        if isinstance(p, cls):
            out.extend(p.args)
        else:
            out.append(p)
    return tuple(out)


def conj(*parts: Formula) -> Formula:
    """Flattened n-ary conjunction; a single part is returned as is."""
    args = _flatten(And, parts)
    if not args:
        raise ValueError("empty conjunction")
    return args[0] if len(args) == 1 else And(args)


def disj(*parts: Formula) -> Formula:
    args = _flatten(Or, parts)
    if not args:
        raise ValueError("empty disjunction")
    return args[0] if len(args) == 1 else Or(args)


def normalize(f: Formula) -> Formula:
    """Flatten nested And/Or nodes throughout ``f``."""
    if isinstance(f, Atom):
        return f
    if isinstance(f, Not):
        return Not(normalize(f.arg))
    if isinstance(f, And):
        return conj(*(normalize(a) for a in f.args))
    if isinstance(f, Or):
        return disj(*(normalize(a) for a in f.args))
    if isinstance(f, Implies):
        return Implies(normalize(f.lhs), normalize(f.rhs))
    if isinstance(f, Iff):
        return Iff(normalize(f.lhs), normalize(f.rhs))
    if isinstance(f, ForAll):
        return ForAll(f.var, normalize(f.body))
    if isinstance(f, Exists):
        return Exists(f.var, normalize(f.body))
    raise TypeError(f"not a formula: {f!r}")


def subformulas(f: Formula):
    yield f
    if isinstance(f, Not):
        yield from subformulas(f.arg)
    elif isinstance(f, (And, Or)):
        for a in f.args:
            yield from subformulas(a)
    elif isinstance(f, (Implies, Iff)):
        yield from subformulas(f.lhs)
        yield from subformulas(f.rhs)
    elif isinstance(f, (ForAll, Exists)):
        yield from subformulas(f.body)


# --- printing ----------------------------------------------------------------

def _term(t: Term) -> str:
    return t.name


def render(f: Formula) -> str:
    """Canonical text: every binary connective is parenthesized."""
    if isinstance(f, Atom):
        return f"{f.pred}({','.join(_term(t) for t in f.args)})"
    if isinstance(f, Not):
        return "~" + render(f.arg)
    if isinstance(f, And):
        return "(" + " & ".join(render(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(" + " | ".join(render(a) for a in f.args) + ")"
    if isinstance(f, Implies):
        return f"({render(f.lhs)} -> {render(f.rhs)})"
    if isinstance(f, Iff):
        return f"({render(f.lhs)} <-> {render(f.rhs)})"
    if isinstance(f, ForAll):
        return f"forall {f.var} {render(f.body)}"
    if isinstance(f, Exists):
        return f"exists {f.var} {render(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


# --- structural operations ---------------------------------------------------

def free_variables(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset(t.name for t in f.args if isinstance(t, Var))
    if isinstance(f, Not):
        return free_variables(f.arg)
    if isinstance(f, (And, Or)):
        return frozenset().union(*(free_variables(a) for a in f.args))
    if isinstance(f, (Implies, Iff)):
        return free_variables(f.lhs) | free_variables(f.rhs)
    if isinstance(f, (ForAll, Exists)):
        return free_variables(f.body) - {f.var}
    raise TypeError(f"not a formula: {f!r}")


def is_sentence(f: Formula) -> bool:
    return not free_variables(f)


def substitute(f: Formula, var: str, entity: str) -> Formula:
    """Replace free occurrences of ``var`` by the constant ``entity``."""
    if isinstance(f, Atom):
        return Atom(f.pred, tuple(
            Const(entity) if isinstance(t, Var) and t.name == var else t for t in f.args
        ))
    if isinstance(f, Not):
        return Not(substitute(f.arg, var, entity))
    if isinstance(f, And):
        return And(tuple(substitute(a, var, entity) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(substitute(a, var, entity) for a in f.args))
    if isinstance(f, Implies):
        return Implies(substitute(f.lhs, var, entity), substitute(f.rhs, var, entity))
    if isinstance(f, Iff):
        return Iff(substitute(f.lhs, var, entity), substitute(f.rhs, var, entity))
    if isinstance(f, (ForAll, Exists)):
        if f.var == var:
            return f
        return type(f)(f.var, substitute(f.body, var, entity))
    raise TypeError(f"not a formula: {f!r}")


# --- parsing -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<op><->|->|[()~&|,])|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<bad>\S))"
)


@dataclass
class _Tok:
    kind: str  # "op", "name", "eof"
    text: str
    col: int


def _tokenize(text: str, line: int) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:  # only trailing whitespace remains
            break
        if m.group("bad") is not None:
            raise ParseError(f"unexpected character {m.group('bad')!r}", line, m.start("bad") + 1)
        kind = "op" if m.group("op") is not None else "name"
        toks.append(_Tok(kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text.rstrip()) + 1))
    return toks


@dataclass
class _Parser:
    toks: list[_Tok]
    sig: Signature | None
    allow_free: bool
    line: int
    pos: int = 0
    bound: list[str] = field(default_factory=list)

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        return ParseError(msg, self.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.peek().kind == "op" and self.peek().text == text:
            self.pos += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            tok = self.peek()
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self.error(f"expected {text!r}, got {got}")

    def formula(self) -> Formula:
        left = self.impl()
        while self.accept("<->"):
            left = Iff(left, self.impl())
        return left

    def impl(self) -> Formula:
        left = self.disjunction()
        if self.accept("->"):
            return Implies(left, self.impl())
        return left

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.accept("|"):
            parts.append(self.conjunction())
        return disj(*parts)

    def conjunction(self) -> Formula:
        parts = [self.unary()]
        while self.accept("&"):
            parts.append(self.unary())
        return conj(*parts)

    def unary(self) -> Formula:
        tok = self.peek()
        if self.accept("~"):
            return Not(self.unary())
        if self.accept("("):
            f = self.formula()
            self.expect(")")
            return f
        if tok.kind == "name" and tok.text in KEYWORDS:
            self.pos += 1
            var = self.peek()
            if var.kind != "name" or not _NAME_RE.match(var.text) or var.text in KEYWORDS:
                raise self.error("expected a variable name after quantifier", var)
            self.pos += 1
            self.bound.append(var.text)
            try:
                body = self.unary()
            finally:
                self.bound.pop()
            return (ForAll if tok.text == "forall" else Exists)(var.text, body)
        if tok.kind == "name":
            return self.atom()
        if tok.kind == "eof":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {tok.text!r}")

    def atom(self) -> Atom:
        tok = self.peek()
        if not _PRED_RE.match(tok.text):
            raise self.error(f"expected a predicate name, got {tok.text!r}")
        self.pos += 1
        if self.sig is not None and tok.text not in self.sig.arity:
            raise self.error(f"unknown predicate {tok.text}", tok)
        self.expect("(")
        args = [self.term()]
        while self.accept(","):
            args.append(self.term())
        self.expect(")")
        if self.sig is not None and len(args) != self.sig.arity[tok.text]:
            raise self.error(
                f"arity mismatch: {tok.text} takes {self.sig.arity[tok.text]} argument(s), got {len(args)}",
                tok,
            )
        if len(args) > 2:
            raise self.error("atoms take one or two arguments", tok)
        return Atom(tok.text, tuple(args))

    def term(self) -> Term:
        tok = self.peek()
        if tok.kind != "name" or not _NAME_RE.match(tok.text) or tok.text in KEYWORDS:
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self.error(f"expected a term, got {got}")
        self.pos += 1
        name = tok.text
        if name in self.bound:
            return Var(name)
        if self.sig is None or name in self.sig.entities:
            return Const(name)
        if self.allow_free:
            return Var(name)
        raise self.error(f"unbound variable or unknown constant {name!r}", tok)


def parse(text: str, sig: Signature | None = None, *, allow_free: bool = False,
          line: int = 1) -> Formula:
    """Parse one formula.

    With a signature, predicate names and arities are checked and unbound
    lowercase names must be declared entities, unless ``allow_free`` is set,
    in which case they become free variables (hypothesis schemas). Without a
    signature every unbound lowercase term is a constant.
    """
    p = _Parser(_tokenize(text, line), sig, allow_free, line)
    if p.peek().kind == "eof":
        raise p.error("empty formula")
    f = p.formula()
    if p.peek().kind != "eof":
        raise p.error(f"unexpected {p.peek().text!r}")
    return f
