"""Per-entity hypothesis deduction, success rate and Bayes risk."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping

from .fol import Formula, free_variables, render, substitute
from .inductive import KnowledgeState

__all__ = ["HypothesisSet", "Deduction", "deduce", "success_rate", "bayes_risk", "zero_one_loss"]


@dataclass(frozen=True)
class HypothesisSet:
    """Open schemas ``H_i(x)`` and the true schema index of tracked entities."""

    schemas: tuple[Formula, ...]
    ground_truth: Mapping[str, int] = field(default_factory=dict)
    var: str = "x"

    def __post_init__(self):
        object.__setattr__(self, "schemas", tuple(self.schemas))
        object.__setattr__(self, "ground_truth", dict(self.ground_truth))
        if len(self.schemas) < 2:
            raise ValueError("need at least two hypotheses")
        for i, h in enumerate(self.schemas):
            fv = free_variables(h)
            if fv != {self.var}:
                raise ValueError(
                    f"hypothesis {i} must have exactly the free variable {self.var!r}, has {sorted(fv)}: {render(h)}"
                )
        for e, i in self.ground_truth.items():
            if not 0 <= i < len(self.schemas):
                raise ValueError(f"truth index {i} for {e} out of range")

    def __len__(self) -> int:
        return len(self.schemas)

    @property
    def tracked(self) -> list[str]:
        return list(self.ground_truth)

    def instance(self, i: int, entity: str) -> Formula:
        return _instance(self.schemas[i], self.var, entity)


@lru_cache(maxsize=65536)
def _instance(schema: Formula, var: str, entity: str) -> Formula:
    return substitute(schema, var, entity)


@dataclass(frozen=True)
class Deduction:
    index: int
    confirmation: Fraction
    tie: bool
    confirmations: tuple[Fraction, ...]


def _knowledge(holder) -> KnowledgeState:
    return holder if isinstance(holder, KnowledgeState) else holder.knowledge


def confirmations(holder, entity: str, hyp: HypothesisSet) -> tuple[Fraction, ...]:
    ks = _knowledge(holder)
    if entity not in ks.sig.entities:
        raise ValueError(f"unknown entity {entity!r}")
    return tuple(Fraction(ks.count_with(hyp.instance(i, entity)), ks.count)
                 for i in range(len(hyp)))


def deduce(holder, entity: str, hyp: HypothesisSet, cfg=None) -> Deduction:
    """Most confirmed schema for ``entity``; ties go to the lowest index and are flagged.

    ``holder`` is a :class:`KnowledgeState` or anything with a ``knowledge``
    attribute (a node).
    """
    cs = confirmations(holder, entity, hyp)
    best = max(cs)
    winners = [i for i, c in enumerate(cs) if c == best]
    return Deduction(winners[0], best, len(winners) > 1, cs)


def success_rate(holders: Iterable, hyp: HypothesisSet, cfg=None) -> Fraction:
    """Share of (holder, tracked entity) pairs deduced correctly and without a tie."""
    holders = list(holders)
    if not hyp.ground_truth:
        raise ValueError("no ground truth to score against")
    hits = total = 0
    for h in holders:
        for e, truth in hyp.ground_truth.items():
            d = deduce(h, e, hyp)
            hits += d.index == truth and not d.tie
            total += 1
    return Fraction(hits, total) if total else Fraction(0)


def zero_one_loss(i: int, j: int) -> float:
    return 0.0 if i == j else 1.0


def bayes_risk(holder, hyp: HypothesisSet,
               loss: Callable[[int, int], float] = zero_one_loss, cfg=None) -> float:
    """Expected loss against the truth under normalized schema confirmations.

    Averaged over tracked entities.
    """
    if not hyp.ground_truth:
        raise ValueError("no ground truth to score against")
    risks = []
    for e, truth in hyp.ground_truth.items():
        cs = confirmations(holder, e, hyp)
        z = sum(cs)
        if z == 0:
            raise ValueError(f"every hypothesis is refuted for {e}")
        risks.append(sum(float(c / z) * loss(i, truth) for i, c in enumerate(cs)))
    return sum(risks) / len(risks)
