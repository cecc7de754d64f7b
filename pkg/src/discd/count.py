"""Exact model counting.

The native counter is a DPLL search with unit propagation, connected
component decomposition and a component cache keyed by the renumbered
clause list. Variables that drop out of every clause are counted as free
choices (a factor of two each) instead of being branched on. Pure-literal
elimination is deliberately absent: it prunes models, which is fine for
satisfiability and wrong for counting.
"""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import sys
import tempfile
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .fol import Formula, Signature
from .ground import (
    AtomIndex, GroundProblem, PAnd, PConst, PNot, PVar, PropTree,
    ground, to_cnf, to_dimacs,
)

__all__ = [
    "CounterConfig", "ModelCounter", "CountingError", "ResourceLimitError",
    "ExternalCounterError", "CounterConfigurationError", "ExternalOutputError",
    "count_models", "count_brute", "models_mask", "probability", "count_external",
]

DEFAULT_COUNT_PATTERN = r"(?:^\s*|exact arb int\s+)(\d+)\s*$"


class CountingError(RuntimeError):
    pass


class ResourceLimitError(CountingError):
    """A cache, decision or enumeration limit was hit; no count is returned."""


class ExternalCounterError(CountingError):
    pass


class CounterConfigurationError(ExternalCounterError):
    pass


class ExternalOutputError(ExternalCounterError):
    pass


@dataclass(frozen=True)
class CounterConfig:
    cache_capacity: int = 1_000_000
    heuristic: str = "max-occurrence"
    external_counter: str | None = None
    count_pattern: str = DEFAULT_COUNT_PATTERN
    node_limit: int = 10 ** 7
    external_timeout: float = 600.0

    def __post_init__(self):
        if self.cache_capacity <= 0:
            raise ValueError("cache_capacity must be positive")
        if self.heuristic not in _HEURISTICS:
            raise ValueError(f"unknown heuristic {self.heuristic!r}; choose from {sorted(_HEURISTICS)}")


def _max_occurrence(clauses) -> int:
    occ = Counter(abs(l) for c in clauses for l in c)
    # highest count, then lowest id
    return min(occ, key=lambda v: (-occ[v], v))


def _lowest_id(clauses) -> int:
    return min(abs(l) for c in clauses for l in c)


_HEURISTICS = {"max-occurrence": _max_occurrence, "lowest-id": _lowest_id}


def _propagate(clauses: list[tuple[int, ...]]):
    """Unit propagation. Returns (clauses, assigned vars) or None on conflict."""
    assigned: set[int] = set()
    while True:
        units = {c[0] for c in clauses if len(c) == 1}
        if not units:
            return clauses, assigned
        for u in units:
            if -u in units:
                return None
        out = []
        for c in clauses:
            if any(l in units for l in c):
                continue
            if any(-l in units for l in c):
                c = tuple(l for l in c if -l not in units)
                if not c:
                    return None
            out.append(c)
        assigned.update(abs(u) for u in units)
        clauses = out


def _components(clauses: list[tuple[int, ...]]):
    parent: dict[int, int] = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for c in clauses:
        first = abs(c[0])
        parent.setdefault(first, first)
        r1 = find(first)
        for l in c[1:]:
            v = abs(l)
            parent.setdefault(v, v)
            r2 = find(v)
            if r1 != r2:
                parent[r2] = r1
    groups: dict[int, list] = {}
    for c in clauses:
        groups.setdefault(find(abs(c[0])), []).append(c)
    if len(groups) == 1:
        (only,) = groups.values()
        return [(only, frozenset(parent))]
    result = []
    for cs in groups.values():
        vs = frozenset(abs(l) for c in cs for l in c)
        result.append((cs, vs))
    return result


def _canonical(clauses, cvars) -> tuple:
    rename = {v: i for i, v in enumerate(sorted(cvars), 1)}
    return tuple(sorted(
        tuple(sorted(rename[l] if l > 0 else -rename[-l] for l in c)) for c in clauses
    ))


class ModelCounter:
    """Component-caching #SAT counter; the cache lives as long as the instance.

    A single instance may be reused across problems: cache keys are exact
    renumbered clause lists, so entries never depend on the calling problem.
    """

    def __init__(self, cfg: CounterConfig | None = None):
        self.cfg = cfg or CounterConfig()
        self._choose = _HEURISTICS[self.cfg.heuristic]
        self._cache: dict[tuple, int] = {}
        self.decisions = 0
        self.cache_hits = 0

    def count_clauses(self, clauses: Sequence[Sequence[int]], n_vars: int) -> int:
        """Models of ``clauses`` over variables ``1..n_vars``."""
        cls = [tuple(c) for c in clauses]
        for c in cls:
            if not c:
                return 0
            for l in c:
                if l == 0 or abs(l) > n_vars:
                    raise ValueError(f"literal {l} outside 1..{n_vars}")
        limit = sys.getrecursionlimit()
        if limit < 4 * n_vars + 1000:
            sys.setrecursionlimit(4 * n_vars + 1000)
        self.decisions = 0
        return self._count(cls, n_vars)

    def count(self, p: GroundProblem) -> int:
        return self.count_clauses(p.clauses, p.n_vars)

    def _count(self, clauses, n_free) -> int:
        # n_free: number of variables in scope not yet assigned
        res = _propagate(clauses)
        if res is None:
            return 0
        clauses, assigned = res
        n_free -= len(assigned)
        if not clauses:
            return 1 << n_free
        total = 1
        occurring = 0
        for comp, cvars in _components(clauses):
            occurring += len(cvars)
            r = self._component(comp, cvars)
            if r == 0:
                return 0
            total *= r
        return total << (n_free - occurring)

    def _component(self, clauses, cvars) -> int:
        key = _canonical(clauses, cvars)
        hit = self._cache.get(key)
        if hit is not None:
            self.cache_hits += 1
            return hit
        self.decisions += 1
        if self.decisions > self.cfg.node_limit:
            raise ResourceLimitError(f"decision limit {self.cfg.node_limit} exceeded")
        v = self._choose(clauses)
        total = 0
        for lit in (v, -v):
            sub = []
            conflict = False
            for c in clauses:
                if lit in c:
                    continue
                if -lit in c:
                    c = tuple(l for l in c if l != -lit)
                    if not c:
                        conflict = True
                        break
                sub.append(c)
            if not conflict:
                total += self._count(sub, len(cvars) - 1)
        if len(self._cache) >= self.cfg.cache_capacity:
            del self._cache[next(iter(self._cache))]
        self._cache[key] = total
        return total


def count_models(p: GroundProblem, cfg: CounterConfig | None = None) -> int:
    """Exact number of models of ``p`` over its original atoms.

    Each call uses a fresh cache.
    """
    return ModelCounter(cfg).count(p)


# --- brute-force oracle -------------------------------------------------------------

BRUTE_LIMIT = 24


def _max_var(t: PropTree) -> int:
    if isinstance(t, PVar):
        return t.id
    if isinstance(t, PConst):
        return -1
    if isinstance(t, PNot):
        return _max_var(t.arg)
    return max((_max_var(a) for a in t.args), default=-1)


def _columns(n: int):
    idx = np.arange(1 << n, dtype=np.int64)
    cols: dict[int, np.ndarray] = {}

    def col(v: int) -> np.ndarray:
        if v not in cols:
            cols[v] = ((idx >> v) & 1).astype(bool)
        return cols[v]

    return col


def models_mask(trees: Sequence[PropTree], n: int) -> np.ndarray:
    """Boolean mask over all ``2**n`` assignments (bit ``i`` = atom ``i``)."""
    if n > BRUTE_LIMIT:
        raise ResourceLimitError(f"brute force limited to {BRUTE_LIMIT} variables, got {n}")
    col = _columns(n)

    def ev(t) -> np.ndarray:
        if isinstance(t, PVar):
            return col(t.id)
        if isinstance(t, PConst):
            return np.full(1 << n, t.value, dtype=bool)
        if isinstance(t, PNot):
            return ~ev(t.arg)
        out = ev(t.args[0]).copy()
        for a in t.args[1:]:
            if isinstance(t, PAnd):
                out &= ev(a)
            else:
                out |= ev(a)
        return out

    ok = np.ones(1 << n, dtype=bool)
    for t in trees:
        ok &= ev(t)
    return ok


def count_brute(obj: PropTree | GroundProblem, n: int | None = None) -> int:
    """Count by evaluating every assignment (vectorized over ``2**n`` rows).

    For a tree, ``n`` is the number of atoms (default: highest id + 1). For a
    CNF every variable, auxiliaries included, is enumerated.
    """
    if not isinstance(obj, GroundProblem):
        return int(models_mask([obj], _max_var(obj) + 1 if n is None else n).sum())
    n = obj.n_vars
    if n > BRUTE_LIMIT:
        raise ResourceLimitError(f"brute force limited to {BRUTE_LIMIT} variables, got {n}")
    col = _columns(n)
    ok = np.ones(1 << n, dtype=bool)
    for c in obj.clauses:
        sat = np.zeros(1 << n, dtype=bool)
        for l in c:
            sat |= col(l - 1) if l > 0 else ~col(-l - 1)
        ok &= sat
    return int(ok.sum())


def probability(f: Formula, sig: Signature, cfg: CounterConfig | None = None,
                index: AtomIndex | None = None) -> Fraction:
    """Share of the ``2**n`` state descriptions that satisfy ``f``."""
    index = index or AtomIndex(sig)
    p = to_cnf(ground(f, sig, index=index), index)
    return Fraction(count_models(p, cfg), 1 << p.n_original)


# --- external counter adapter ----------------------------------------------------------

def _parse_count(output: str, pattern: str) -> int:
    rx = re.compile(pattern)
    for line in output.splitlines():
        m = rx.search(line)
        if m:
            groups = [g for g in m.groups() if g is not None] or [m.group(0)]
            try:
                return int(groups[0])
            except ValueError:
                break
    raise ExternalOutputError(f"no count found in counter output: {output[:200]!r}")


def count_external(p: GroundProblem, cfg: CounterConfig) -> int:
    """Run ``cfg.external_counter`` (with a ``{cnf_path}`` placeholder) on ``p``.

    Problems with at most 16 original atoms are cross-checked against the
    native counter.
    """
    if not cfg.external_counter:
        raise CounterConfigurationError("no external counter configured")
    if "{cnf_path}" not in cfg.external_counter:
        raise CounterConfigurationError("external counter template lacks {cnf_path}")
    fd, path = tempfile.mkstemp(suffix=".cnf")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(to_dimacs(p))
        argv = shlex.split(cfg.external_counter.replace("{cnf_path}", shlex.quote(path)))
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=cfg.external_timeout)
        except FileNotFoundError as exc:
            raise CounterConfigurationError(f"external counter not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise ResourceLimitError("external counter timed out") from exc
    finally:
        os.unlink(path)
    n = _parse_count(proc.stdout, cfg.count_pattern)
    if p.n_original <= 16:
        native = count_models(p, cfg)
        if native != n:
            raise ExternalCounterError(f"external count {n} disagrees with native count {native}")
    return n
