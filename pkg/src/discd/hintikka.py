"""Constituent priors, likelihoods and posteriors for an unbounded universe.

``K`` attributive constituents (kinds of individuals) exist; a constituent
of width ``w`` claims that exactly ``w`` of them are instantiated. Evidence
is summarized by how many of ``l`` observed individuals fell into each of
the ``c`` kinds seen so far. Everything is computed with log-gamma in
double precision; ``*_exact`` variants return fractions where the gamma
ratios reduce to rising factorials.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .fol import Atom, Exists, Formula, Not, Signature, Var, conj

__all__ = [
    "ConstituentModel", "EvidenceSummary", "WidthPosterior",
    "prior", "prior_exact", "log_prior_normalizer",
    "likelihood", "likelihood_exact", "posterior", "constituent_posterior",
    "pac_epsilon_bound", "pac_epsilon_bound_exact", "min_samples",
    "likelihood_ratio_bound",
    "q_sentence_count", "q_sentences", "enumerate_attributive_constituents",
]


def _identity(w):
    return w


@dataclass(frozen=True)
class ConstituentModel:
    K: int
    alpha: float = 1.0
    lambda_policy: Callable[[int], float] = field(default=_identity, compare=False)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    def lam(self, w: int) -> float:
        v = self.lambda_policy(w)
        if not v > 0:
            raise ValueError(f"lambda({w}) = {v} is not positive")
        return v


@dataclass(frozen=True)
class EvidenceSummary:
    """Per-kind observation counts ``l_z`` (each at least one)."""

    counts: Mapping[int, int]

    def __post_init__(self):
        counts = dict(sorted(self.counts.items()))
        if any(n < 1 for n in counts.values()):
            raise ValueError("every observed kind needs a count >= 1")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_observations(cls, kinds: Iterable[int]) -> "EvidenceSummary":
        counts: dict[int, int] = {}
        for k in kinds:
            counts[k] = counts.get(k, 0) + 1
        return cls(counts)

    @property
    def l(self) -> int:
        return sum(self.counts.values())

    @property
    def c(self) -> int:
        return len(self.counts)

    @property
    def kinds(self) -> frozenset[int]:
        return frozenset(self.counts)


@dataclass
class WidthPosterior:
    """Posterior probability of one constituent of each compatible width.

    ``probs[w]`` is the probability of a single constituent of width ``w``
    containing the observed kinds; there are ``multiplicity(w)`` of them.
    """

    K: int
    c: int
    probs: dict[int, float]
    log_prior: dict[int, float]
    log_likelihood: dict[int, float]

    def multiplicity(self, w: int) -> int:
        return math.comb(self.K - self.c, w - self.c)

    def width_mass(self) -> dict[int, float]:
        return {w: p * self.multiplicity(w) for w, p in self.probs.items()}

    def total(self) -> float:
        return float(sum(self.width_mass().values()))

    @property
    def minimal(self) -> float:
        return self.probs[self.c]


# --- prior ----------------------------------------------------------------------

def _log_ratio(alpha: float, x: float) -> float:
    # log Gamma(alpha + x) / Gamma(x)
    if alpha == 0:
        return 0.0
    return float(gammaln(alpha + x) - gammaln(x))


def log_prior_normalizer(model: ConstituentModel) -> float:
    """Log of the sum over widths ``i >= 1`` of ``C(K, i) Gamma(a + i/K) / Gamma(i/K)``.

    The ``i = 0`` term is taken as zero: the empty constituent gets no mass.
    """
    K = model.K
    terms = [math.log(math.comb(K, i)) + _log_ratio(model.alpha, i / K) for i in range(1, K + 1)]
    return float(logsumexp(terms))


def prior(w: int, model: ConstituentModel) -> float:
    """Log prior of one constituent of width ``w``."""
    if not 1 <= w <= model.K:
        raise ValueError(f"width must lie in [1, {model.K}], got {w}")
    return _log_ratio(model.alpha, w / model.K) - log_prior_normalizer(model)


def _rising(x: Fraction, n: int) -> Fraction:
    out = Fraction(1)
    for j in range(n):
        out *= x + j
    return out


def prior_exact(w: int, model: ConstituentModel) -> Fraction:
    """Exact prior; needs an integer ``alpha`` (the gamma ratio is then a rising factorial)."""
    if float(model.alpha) != int(model.alpha):
        raise ValueError("exact prior needs an integer alpha")
    a, K = int(model.alpha), model.K
    if not 1 <= w <= K:
        raise ValueError(f"width must lie in [1, {K}], got {w}")
    z = sum(math.comb(K, i) * _rising(Fraction(i, K), a) for i in range(1, K + 1))
    return _rising(Fraction(w, K), a) / z


# --- likelihood ------------------------------------------------------------------

def likelihood(summary: EvidenceSummary, w: int, model: ConstituentModel) -> float:
    """Log likelihood of the summary under a width-``w`` constituent.

    Returns ``-inf`` when the constituent cannot contain the observed kinds.
    """
    if w < summary.c or w > model.K:
        return -math.inf
    lam = model.lam(w)
    per = lam / w
    out = gammaln(lam) - gammaln(summary.l + lam)
    for lz in summary.counts.values():
        out += gammaln(lz + per) - gammaln(per)
    return float(out)


def likelihood_exact(summary: EvidenceSummary, w: int, model: ConstituentModel) -> Fraction:
    if w < summary.c or w > model.K:
        return Fraction(0)
    lam = Fraction(model.lam(w))
    per = lam / w
    out = 1 / _rising(lam, summary.l)
    for lz in summary.counts.values():
        out *= _rising(per, lz)
    return out


# --- posterior -------------------------------------------------------------------

def posterior(summary: EvidenceSummary, model: ConstituentModel) -> WidthPosterior:
    """Posterior over constituents compatible with the evidence.

    Widths below ``c`` have zero likelihood and are left out; each width
    ``w >= c`` stands for ``C(K - c, w - c)`` constituents in the normalizer.
    """
    K, c = model.K, summary.c
    if c > K:
        raise ValueError(f"{c} observed kinds exceed K = {K}")
    widths = range(max(c, 1), K + 1)
    lp = {w: prior(w, model) for w in widths}
    ll = {w: likelihood(summary, w, model) for w in widths}
    joint = {w: lp[w] + ll[w] for w in widths}
    logz = float(logsumexp([joint[w] + math.log(math.comb(K - c, w - c)) for w in widths]))
    if not np.isfinite(logz):
        raise ArithmeticError("posterior has no mass")
    probs = {w: math.exp(joint[w] - logz) for w in widths}
    return WidthPosterior(K, c, probs, lp, ll)


def constituent_posterior(summary: EvidenceSummary, model: ConstituentModel,
                          kinds: Iterable[int]) -> float:
    """Posterior of the constituent instantiating exactly ``kinds``."""
    kinds = frozenset(kinds)
    if not summary.kinds <= kinds or len(kinds) > model.K:
        return 0.0
    return posterior(summary, model).probs[len(kinds)]


def likelihood_ratio_bound(c: int, K: int, log_likelihood: Mapping[int, float],
                           log_prior: Mapping[int, float]) -> float:
    """``sum_i C(K-c, i) P(e|C^{c+i}) P(C^{c+i}) / (P(e|C^c) P(C^c))``.

    Equal to ``(1 - p) / p`` for ``p`` the posterior of the minimal
    constituent, so it bounds the odds against it.
    """
    base = log_likelihood[c] + log_prior[c]
    terms = [math.log(math.comb(K - c, i)) + log_likelihood[c + i] + log_prior[c + i] - base
             for i in range(1, K - c + 1)]
    return float(np.exp(logsumexp(terms))) if terms else 0.0


# --- PAC bound ---------------------------------------------------------------------

def _pac_check(K: int, l: float, alpha: float):
    if K < 1:
        raise ValueError("K must be >= 1")
    if not l > alpha:
        raise ValueError(f"need l > alpha, got l={l}, alpha={alpha}")


def pac_epsilon_bound(K: int, l: float, alpha: float) -> float:
    """Max over ``c < K`` of ``sum_i C(K-c, i) (c/(c+i))**(l - alpha)``, in log space.

    For ``K <= 10`` and an integer exponent the result is checked against
    :func:`pac_epsilon_bound_exact`.
    """
    _pac_check(K, l, alpha)
    e = l - alpha
    best = 0.0  # c = 0 contributes 0**e = 0
    for c in range(1, K):
        terms = [math.log(math.comb(K - c, i)) + e * math.log(c / (c + i))
                 for i in range(1, K - c + 1)]
        best = max(best, float(np.exp(logsumexp(terms))))
    if K <= 10 and float(e).is_integer():
        exact = float(pac_epsilon_bound_exact(K, l, alpha))
        if not math.isclose(best, exact, rel_tol=1e-9, abs_tol=0.0):
            raise ArithmeticError(f"log-space bound {best} disagrees with exact {exact}")
    return best


def pac_epsilon_bound_exact(K: int, l: float, alpha: float) -> Fraction:
    _pac_check(K, l, alpha)
    e = Fraction(l) - Fraction(alpha)
    if e.denominator != 1:
        raise ValueError("exact bound needs an integer l - alpha")
    e = int(e)
    best = Fraction(0)
    for c in range(1, K):
        s = sum(math.comb(K - c, i) * Fraction(c, c + i) ** e for i in range(1, K - c + 1))
        best = max(best, s)
    return best


def min_samples(epsilon: float, K: int, alpha: float) -> int:
    """Smallest integer ``l > alpha`` whose bound is at most ``epsilon / (1 - epsilon)``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    target = epsilon / (1 - epsilon)
    lo = math.floor(alpha) + 1
    if pac_epsilon_bound(K, lo, alpha) <= target:
        return lo
    step = 1
    bad = lo
    while pac_epsilon_bound(K, lo + step, alpha) > target:
        bad = lo + step
        step *= 2
    good = lo + step
    while good - bad > 1:
        mid = (good + bad) // 2
        if pac_epsilon_bound(K, mid, alpha) <= target:
            good = mid
        else:
            bad = mid
    return good


# --- Q-sentences and attributive constituents ------------------------------------------

def _binary(sig: Signature) -> list[str]:
    unary = [n for n, a in sig.predicates if a != 2]
    if unary:
        raise ValueError(f"Q-sentences are defined for binary predicates only; got {unary}")
    return [n for n, _ in sig.predicates]


def q_sentence_count(sig: Signature) -> int:
    """``4 ** (|P| * |E|**2) / 2`` as an exact integer."""
    preds = _binary(sig)
    return 4 ** (len(preds) * len(sig.entities) ** 2) // 2


def q_sentences(sig: Signature, x: str = "x", y: str = "y") -> list[Formula]:
    """Every signed pattern of ``R(x, y)`` and ``R(y, x)`` over the binary predicates."""
    preds = _binary(sig)
    out = []
    for signs in itertools.product((True, False), repeat=2 * len(preds)):
        lits = []
        for k, name in enumerate(preds):
            fwd = Atom(name, (Var(x), Var(y)))
            bwd = Atom(name, (Var(y), Var(x)))
            lits.append(fwd if signs[2 * k] else Not(fwd))
            lits.append(bwd if signs[2 * k + 1] else Not(bwd))
        out.append(conj(*lits))
    return out


def enumerate_attributive_constituents(sig: Signature, limit: int = 2 ** 16,
                                       qs: Sequence[Formula] | None = None,
                                       x: str = "x", y: str = "y") -> list[Formula]:
    """All sign choices over ``exists y Q_i(x, y)``; open in ``x``.

    ``qs`` defaults to :func:`q_sentences`.
    """
    qs = list(q_sentences(sig, x, y) if qs is None else qs)
    if 2 ** len(qs) > limit:
        raise ValueError(f"{2 ** len(qs)} attributive constituents exceed limit {limit}")
    claims = [Exists(y, q) for q in qs]
    out = []
    for signs in itertools.product((True, False), repeat=len(claims)):
        out.append(conj(*(c if s else Not(c) for c, s in zip(claims, signs))))
    return out
