"""Degree of confirmation and cont-information over finite worlds.

Probabilities are uniform over state descriptions, so
``c(m, e) = #(m & e) / #(e)`` computed with exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Union

from .count import CounterConfig, ModelCounter, models_mask
from .fol import Formula, Signature, render
from .ground import AtomIndex, GroundProblem, conjoin, ground, to_cnf

__all__ = [
    "InconsistentKnowledgeError", "KnowledgeState", "LambdaParams",
    "confirmation", "cont", "lambda_confirmation", "distribution_over_states",
    "atom_index", "formula_cnf", "counter_for",
]

SentenceId = str


class InconsistentKnowledgeError(ValueError):
    """The evidence conjunction has no model."""


@lru_cache(maxsize=64)
def atom_index(sig: Signature) -> AtomIndex:
    return AtomIndex(sig)


@lru_cache(maxsize=65536)
def formula_cnf(sig: Signature, f: Formula) -> GroundProblem:
    index = atom_index(sig)
    return to_cnf(ground(f, sig, index=index), index)


_COUNTERS: dict[CounterConfig, ModelCounter] = {}
_DEFAULT_CFG = CounterConfig(cache_capacity=250_000)


def counter_for(cfg: CounterConfig | None) -> ModelCounter:
    """Process-wide counter per configuration.

    Knowledge queries share one component cache so that components left
    untouched by a new sentence (typically other entities) are not recounted.
    """
    cfg = cfg or _DEFAULT_CFG
    c = _COUNTERS.get(cfg)
    if c is None:
        c = _COUNTERS[cfg] = ModelCounter(cfg)
    return c


class KnowledgeState:
    """The conjunction of a set of identified sentences, with its model count.

    Instances are immutable; :meth:`extend` returns a new state. Sentences
    structurally equal to one already present are absorbed under the first id.
    """

    __slots__ = ("sig", "cfg", "evidence", "formulas", "problem", "count", "_cond")

    def __init__(self, sig: Signature,
                 evidence: Mapping[SentenceId, Formula] | Iterable[tuple[SentenceId, Formula]] = (),
                 cfg: CounterConfig | None = None):
        self.sig = sig
        self.cfg = cfg
        items = evidence.items() if isinstance(evidence, Mapping) else evidence
        ev: dict[SentenceId, Formula] = {}
        seen: set = set()
        for sid, f in items:
            if f in seen or sid in ev:
                continue
            seen.add(f)
            ev[sid] = f
        self.evidence = ev
        self.formulas = frozenset(seen)
        self.problem = _conjunction(sig, self.formulas)
        self.count = _conjunction_count(sig, self.formulas, cfg)
        if self.count == 0:
            raise InconsistentKnowledgeError(
                "evidence is inconsistent: " + "; ".join(f"{k}: {render(v)}" for k, v in ev.items())
            )
        self._cond: dict[Formula, int] = {}

    @property
    def n_atoms(self) -> int:
        return self.problem.n_original

    def __len__(self) -> int:
        return len(self.evidence)

    def __contains__(self, f: Formula) -> bool:
        return f in self.formulas

    def __repr__(self) -> str:
        return f"KnowledgeState({len(self.evidence)} sentences, count={self.count})"

    def extend(self, items: Iterable[tuple[SentenceId, Formula]]) -> "KnowledgeState":
        items = [(s, f) for s, f in items if f not in self.formulas and s not in self.evidence]
        if not items:
            return self
        return KnowledgeState(self.sig, [*self.evidence.items(), *items], self.cfg)

    def count_with(self, *fs: Formula) -> int:
        """Models of the evidence conjoined with ``fs``."""
        fs = tuple(f for f in fs if f not in self.formulas)
        if not fs:
            return self.count
        key = fs[0] if len(fs) == 1 else frozenset(fs)
        hit = self._cond.get(key)
        if hit is None:
            p = conjoin([self.problem, *(formula_cnf(self.sig, f) for f in fs)])
            hit = self._cond[key] = counter_for(self.cfg).count(p)
        return hit

    def probability(self) -> Fraction:
        return Fraction(self.count, 1 << self.n_atoms)


def _conjunction(sig: Signature, formulas: frozenset) -> GroundProblem:
    if not formulas:
        index = atom_index(sig)
        return GroundProblem(index, (), len(index), 0)
    # sorted by rendering so the encoding does not depend on set order
    ordered = sorted(formulas, key=render)
    return conjoin([formula_cnf(sig, f) for f in ordered])


@lru_cache(maxsize=65536)
def _conjunction_count(sig: Signature, formulas: frozenset, cfg: CounterConfig | None) -> int:
    return counter_for(cfg).count(_conjunction(sig, formulas))


def confirmation(m: Formula, ks: KnowledgeState, cfg: CounterConfig | None = None) -> Fraction:
    """``c(m, e) = p(m & e) / p(e)`` as an exact fraction."""
    return Fraction(ks.count_with(m), ks.count)


def cont(m: Formula, ks: KnowledgeState, cfg: CounterConfig | None = None) -> Fraction:
    return 1 - confirmation(m, ks, cfg)


Number = Union[int, float, Fraction]


@dataclass(frozen=True)
class LambdaParams:
    """Observation counts and prior coefficient for the closed-form c-function.

    ``lambda_of_w`` is either a constant or a callable of the state weight.
    """

    l: int
    l_s: int
    w_s: Number
    lambda_of_w: Number | Callable[[Number], Number]

    def __post_init__(self):
        if not 0 <= self.l_s <= self.l:
            raise ValueError("need 0 <= l_s <= l")
        if self.w_s < 1:
            raise ValueError("state weight must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def lam(self) -> Number:
        return self.lambda_of_w(self.w_s) if callable(self.lambda_of_w) else self.lambda_of_w


def lambda_confirmation(p: LambdaParams) -> Fraction:
    """``(l_s + lambda(w)/w) / (l + lambda(w))``."""
    lam, w = Fraction(p.lam), Fraction(p.w_s)
    if p.l + lam == 0:
        raise ZeroDivisionError("l + lambda(w) is zero")
    return (p.l_s + lam / w) / (p.l + lam)


def distribution_over_states(ks: KnowledgeState, max_atoms: int = 20) -> dict[tuple[int, ...], Fraction]:
    """Explicit conditional distribution over all ``2**n`` states.

    Keys are bit tuples indexed like :class:`~discd.ground.AtomIndex`.
    """
    n = ks.n_atoms
    if n > max_atoms:
        raise ValueError(f"explicit distribution limited to {max_atoms} atoms, got {n}")
    index = atom_index(ks.sig)
    trees = [ground(f, ks.sig, index=index) for f in ks.formulas]
    mask = models_mask(trees, n)
    mass = Fraction(1, int(mask.sum()))
    zero = Fraction(0)
    out = {}
    # row r holds atom i in bit i
    for r in range(1 << n):
        out[tuple((r >> i) & 1 for i in range(n))] = mass if mask[r] else zero
    return out
