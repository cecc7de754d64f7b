"""Finite-domain grounding and definitional CNF.

Ground atom ``i`` (0-based, see :class:`AtomIndex`) is DIMACS variable
``i + 1``; clauses hold signed DIMACS literals. Auxiliary variables follow
the original ones and each is defined by an equivalence with a subformula,
so every assignment of the original atoms extends to at most one model of
the CNF and model counts are preserved.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .fol import (
    And, Atom, Const, Exists, ForAll, Formula, Iff, Implies, Not, Or, Signature,
    Var, conj, free_variables,
)

__all__ = [
    "AtomIndex", "GroundProblem", "GroundingError",
    "PVar", "PConst", "PNot", "PAnd", "POr", "PropTree",
    "ground", "to_cnf", "state_description", "tree_size",
    "to_dimacs", "from_dimacs", "conjoin",
]

DEFAULT_NODE_LIMIT = 10 ** 7


class GroundingError(RuntimeError):
    """Raised when an expansion or encoding exceeds its size guard."""


@dataclass(frozen=True)
class AtomIndex:
    """Bijection between ground atoms and ``0..n-1``.

    Predicates in signature order, then argument tuples in row-major
    entity order.
    """

    sig: Signature
    atoms: tuple[tuple[str, tuple[str, ...]], ...] = field(init=False, repr=False, compare=False)
    _ids: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        atoms = []
        for name, arity in self.sig.predicates:
            for args in itertools.product(self.sig.entities, repeat=arity):
                atoms.append((name, args))
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "_ids", {a: i for i, a in enumerate(atoms)})

    def __len__(self) -> int:
        return len(self.atoms)

    def id(self, pred: str, args: Sequence[str]) -> int:
        return self._ids[(pred, tuple(args))]

    def atom(self, i: int) -> tuple[str, tuple[str, ...]]:
        return self.atoms[i]

    def label(self, i: int) -> str:
        pred, args = self.atoms[i]
        return f"{pred}({','.join(args)})"


# --- propositional trees -------------------------------------------------------

@dataclass(frozen=True)
class PVar:
    id: int


@dataclass(frozen=True)
class PConst:
    value: bool


@dataclass(frozen=True)
class PNot:
    arg: "PropTree"


@dataclass(frozen=True)
class PAnd:
    args: tuple["PropTree", ...]


@dataclass(frozen=True)
class POr:
    args: tuple["PropTree", ...]


PropTree = Union[PVar, PConst, PNot, PAnd, POr]


def tree_size(t: PropTree) -> int:
    if isinstance(t, (PVar, PConst)):
        return 1
    if isinstance(t, PNot):
        return 1 + tree_size(t.arg)
    return 1 + sum(tree_size(a) for a in t.args)


def _pand(args: list[PropTree]) -> PropTree:
    flat: list[PropTree] = []
    for a in args:
        flat.extend(a.args if isinstance(a, PAnd) else (a,))
    if not flat:
        return PConst(True)
    return flat[0] if len(flat) == 1 else PAnd(tuple(flat))


def _por(args: list[PropTree]) -> PropTree:
    flat: list[PropTree] = []
    for a in args:
        flat.extend(a.args if isinstance(a, POr) else (a,))
    if not flat:
        return PConst(False)
    return flat[0] if len(flat) == 1 else POr(tuple(flat))


class _Grounder:
    def __init__(self, sig: Signature, index: AtomIndex, node_limit: int):
        self.sig = sig
        self.index = index
        self.node_limit = node_limit
        self.nodes = 0

    def tick(self, n: int = 1):
        self.nodes += n
        if self.nodes > self.node_limit:
            raise GroundingError(f"grounded tree exceeds {self.node_limit} nodes")

    def run(self, f: Formula, env: dict[str, str]) -> PropTree:
        self.tick()
        if isinstance(f, Atom):
            args = []
            for t in f.args:
                if isinstance(t, Var):
                    if t.name not in env:
                        raise ValueError(f"free variable {t.name!r} in grounded formula")
                    args.append(env[t.name])
                else:
                    args.append(t.name)
            return PVar(self.index.id(f.pred, args))
        if isinstance(f, Not):
            return PNot(self.run(f.arg, env))
        if isinstance(f, And):
            return _pand([self.run(a, env) for a in f.args])
        if isinstance(f, Or):
            return _por([self.run(a, env) for a in f.args])
        if isinstance(f, Implies):
            return _por([PNot(self.run(f.lhs, env)), self.run(f.rhs, env)])
        if isinstance(f, Iff):
            a, b = self.run(f.lhs, env), self.run(f.rhs, env)
            return _pand([_por([PNot(a), b]), _por([PNot(b), a])])
        if isinstance(f, (ForAll, Exists)):
            parts = []
            for e in self.sig.entities:
                parts.append(self.run(f.body, {**env, f.var: e}))
            return (_pand if isinstance(f, ForAll) else _por)(parts)
        raise TypeError(f"not a formula: {f!r}")


def ground(f: Formula, sig: Signature, node_limit: int = DEFAULT_NODE_LIMIT,
           index: AtomIndex | None = None) -> PropTree:
    """Expand quantifiers over ``sig.entities`` and lower ``->``/``<->``."""
    if free_variables(f):
        raise ValueError(f"cannot ground open formula; free: {sorted(free_variables(f))}")
    return _Grounder(sig, index or AtomIndex(sig), node_limit).run(f, {})


# --- definitional CNF ------------------------------------------------------------

# NNF nodes: int literal, bool constant, ("&", children) or ("|", children).

def _nnf(t: PropTree, positive: bool):
    if isinstance(t, PVar):
        return t.id + 1 if positive else -(t.id + 1)
    if isinstance(t, PConst):
        return t.value == positive
    if isinstance(t, PNot):
        return _nnf(t.arg, not positive)
    is_and = isinstance(t, PAnd) == positive
    return _combine("&" if is_and else "|", [_nnf(a, positive) for a in t.args])


def _combine(op: str, kids: list):
    absorbing = op == "|"  # True absorbs a disjunction, False a conjunction
    out: list = []
    seen: set = set()
    lits: set[int] = set()
    for k in kids:
        if isinstance(k, bool):
            if k == absorbing:
                return absorbing
            continue
        sub = k[1] if isinstance(k, tuple) and k[0] == op else (k,)
        for s in sub:
            if s in seen:
                continue
            if isinstance(s, int):
                if -s in lits:
                    return absorbing
                lits.add(s)
            seen.add(s)
            out.append(s)
    if not out:
        return not absorbing
    if len(out) == 1:
        return out[0]
    return (op, tuple(out))


class _Encoder:
    def __init__(self, first_aux: int, clause_limit: int):
        self.next_var = first_aux + 1  # DIMACS numbering
        self.clauses: list[tuple[int, ...]] = []
        self.defs: dict = {}
        self.clause_limit = clause_limit

    def emit(self, clause: tuple[int, ...]):
        self.clauses.append(clause)
        if len(self.clauses) > self.clause_limit:
            raise GroundingError(f"CNF exceeds {self.clause_limit} clauses")

    def lit(self, node) -> int:
        if isinstance(node, int):
            return node
        hit = self.defs.get(node)
        if hit is not None:
            return hit
        op, kids = node
        ks = [self.lit(k) for k in kids]
        x = self.next_var
        self.next_var += 1
        if op == "&":
            for k in ks:
                self.emit((-x, k))
            self.emit((x, *(-k for k in ks)))
        else:
            self.emit((-x, *ks))
            for k in ks:
                self.emit((x, -k))
        self.defs[node] = x
        return x

    def top(self, node):
        if node is True:
            return
        if node is False:
            self.emit(())
            return
        if isinstance(node, int):
            self.emit((node,))
            return
        op, kids = node
        if op == "&":
            for k in kids:
                self.top(k)
        else:
            self.emit(tuple(self.lit(k) for k in kids))


@dataclass(frozen=True)
class GroundProblem:
    """CNF over ``n_original`` ground atoms plus ``n_aux`` defined variables."""

    atom_index: AtomIndex
    clauses: tuple[tuple[int, ...], ...]
    n_original: int
    n_aux: int = 0

    @property
    def n_vars(self) -> int:
        return self.n_original + self.n_aux


def to_cnf(tree: PropTree | Iterable[PropTree], atom_index: AtomIndex,
           clause_limit: int = DEFAULT_NODE_LIMIT) -> GroundProblem:
    """Definitional CNF of a tree (or the conjunction of several trees)."""
    trees = [tree] if isinstance(tree, (PVar, PConst, PNot, PAnd, POr)) else list(tree)
    n = len(atom_index)
    enc = _Encoder(n, clause_limit)
    for t in trees:
        enc.top(_nnf(t, True))
    return GroundProblem(atom_index, tuple(enc.clauses), n, enc.next_var - 1 - n)


def conjoin(problems: Sequence[GroundProblem]) -> GroundProblem:
    """Conjunction of problems over one atom index; auxiliaries are renumbered."""
    if not problems:
        raise ValueError("nothing to conjoin")
    index = problems[0].atom_index
    n = problems[0].n_original
    clauses: list[tuple[int, ...]] = []
    offset = 0
    for p in problems:
        if p.atom_index != index:
            raise ValueError("problems over different signatures")
        if offset == 0:
            clauses.extend(p.clauses)
        else:
            clauses.extend(
                tuple(l if abs(l) <= n else (l + offset if l > 0 else l - offset) for l in c)
                for c in p.clauses
            )
        offset += p.n_aux
    return GroundProblem(index, tuple(clauses), n, offset)


def state_description(bits: Sequence[int], sig: Signature) -> Formula:
    """Conjunction fixing the sign of every ground atom from ``bits``."""
    index = AtomIndex(sig)
    if len(bits) != len(index):
        raise ValueError(f"expected {len(index)} bits, got {len(bits)}")
    lits = []
    for i, b in enumerate(bits):
        pred, args = index.atom(i)
        a = Atom(pred, tuple(Const(e) for e in args))
        lits.append(a if b else Not(a))
    return conj(*lits)


# --- DIMACS ------------------------------------------------------------------------

def to_dimacs(p: GroundProblem) -> str:
    lines = [f"c projected {p.n_original}", f"p cnf {p.n_vars} {len(p.clauses)}"]
    lines.extend(" ".join(map(str, (*c, 0))) for c in p.clauses)
    return "\n".join(lines) + "\n"


def from_dimacs(text: str, atom_index: AtomIndex | None = None) -> GroundProblem:
    """Read DIMACS CNF; ``c projected k`` sets the original-variable count."""
    n_vars = None
    projected = None
    clauses: list[tuple[int, ...]] = []
    current: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("c"):
            parts = line.split()
            if len(parts) == 3 and parts[1] == "projected":
                projected = int(parts[2])
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"bad problem line: {line!r}")
            n_vars = int(parts[2])
            continue
        for tok in line.split():
            v = int(tok)
            if v == 0:
                clauses.append(tuple(current))
                current = []
            else:
                current.append(v)
    if current:
        clauses.append(tuple(current))
    if n_vars is None:
        raise ValueError("missing 'p cnf' header")
    n_orig = n_vars if projected is None else projected
    if atom_index is not None and len(atom_index) != n_orig:
        raise ValueError("atom index does not match the projected variable count")
    return GroundProblem(atom_index, tuple(clauses), n_orig, n_vars - n_orig)
