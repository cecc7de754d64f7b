import random
from fractions import Fraction

import pytest

from discd.fol import Signature, parse
from discd.inductive import KnowledgeState
from discd.task import HypothesisSet, bayes_risk, deduce, success_rate

import oracle

SIG = Signature(("alice", "bob"), (("A", 1), ("B", 1), ("C", 1)))


def schemas(*texts):
    return tuple(parse(t, SIG, allow_free=True) for t in texts)


THREE = schemas("(A(x) & ~B(x))", "(~A(x) & B(x))", "(A(x) & B(x))")


def knowledge(*texts):
    return KnowledgeState(SIG, {f"s{i}": parse(t, SIG) for i, t in enumerate(texts)})


def test_entailed_hypothesis_wins():
    hyp = HypothesisSet(THREE, {"alice": 2})
    d = deduce(knowledge("A(alice)", "B(alice)"), "alice", hyp)
    assert d.index == 2 and d.confirmation == 1 and not d.tie
    assert d.confirmations[:2] == (0, 0)


def test_symmetric_schemas_tie_at_index_zero():
    hyp = HypothesisSet(schemas("A(x)", "~A(x)"), {"alice": 1})
    d = deduce(knowledge(), "alice", hyp)
    assert d.index == 0 and d.tie


def test_matches_enumeration_argmax():
    rng = random.Random(2)
    hyp = HypothesisSet(THREE, {"alice": 0, "bob": 1})
    for _ in range(30):
        fs = []
        while True:
            fs = [oracle.random_formula(rng, SIG, depth=2) for _ in range(2)]
            if oracle.count(fs, SIG):
                break
        ks = KnowledgeState(SIG, {f"s{i}": f for i, f in enumerate(fs)})
        for e in ("alice", "bob"):
            conf = [oracle.confirmation(hyp.instance(i, e), fs, SIG) for i in range(3)]
            best = max(conf)
            d = deduce(ks, e, hyp)
            assert list(d.confirmations) == conf
            assert d.index == conf.index(best)
            assert d.tie == (conf.count(best) > 1)


def test_success_rate_counts_pairs_without_ties():
    hyp = HypothesisSet(THREE, {"alice": 2, "bob": 0})
    full = knowledge("A(alice)", "B(alice)", "A(bob)", "~B(bob)")
    half = knowledge("A(alice)", "B(alice)")
    assert success_rate([full], hyp) == 1
    assert success_rate([full, half], hyp) == Fraction(3, 4)
    with pytest.raises(ValueError):
        success_rate([full], HypothesisSet(THREE, {}))


def test_bayes_risk_examples():
    hyp = HypothesisSet(THREE, {"alice": 2})
    assert bayes_risk(knowledge("A(alice)", "B(alice)"), hyp) == 0
    # the three schemas are exclusive and equally likely under no evidence
    assert bayes_risk(knowledge(), hyp) == pytest.approx(2 / 3)
    costly = lambda i, j: 0.0 if i == j else 5.0
    assert bayes_risk(knowledge(), hyp, costly) == pytest.approx(10 / 3)


def test_bayes_risk_all_refuted():
    hyp = HypothesisSet(schemas("(A(x) & B(x))", "(A(x) & ~B(x))"), {"alice": 0})
    with pytest.raises(ValueError):
        bayes_risk(knowledge("~A(alice)"), hyp)


def test_hypothesis_set_validation():
    with pytest.raises(ValueError):
        HypothesisSet(schemas("A(x)"), {})
    with pytest.raises(ValueError):
        HypothesisSet((parse("A(alice)", SIG), parse("A(bob)", SIG)), {})
    with pytest.raises(ValueError):
        HypothesisSet(THREE, {"alice": 3})


def test_deduce_unknown_entity():
    with pytest.raises(ValueError):
        deduce(knowledge(), "carol", HypothesisSet(THREE, {}))


def test_refuted_schemas_stay_refuted():
    # evidence consistent with the truth only drops wrong schemas
    hyp = HypothesisSet(THREE, {"alice": 2})
    steps = ["A(alice)", "B(alice)"]
    prev = None
    for k in range(len(steps) + 1):
        d = deduce(knowledge(*steps[:k]), "alice", hyp)
        if prev is not None:
            for i, c in enumerate(prev.confirmations):
                if c == 0:
                    assert d.confirmations[i] == 0
            assert d.confirmations[2] >= prev.confirmations[2]
        prev = d
