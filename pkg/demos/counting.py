"""Ground a quantified sentence, count its models and read off confirmations."""

from discd.count import probability
from discd.fol import Signature, parse
from discd.inductive import KnowledgeState, confirmation, cont

sig = Signature(("a", "b"), (("Person", 1), ("Book", 1), ("Owns", 2)))
rule = parse("forall x (Person(x) -> exists y (Book(y) & Owns(x,y)))", sig)
print("p(rule) =", probability(rule, sig))

evidence = KnowledgeState(sig, {"r": rule, "f": parse("Person(a) & ~Book(b)", sig)})
query = parse("Owns(a,a)", sig)
print("c(Owns(a,a) | rule, Person(a), ~Book(b)) =", confirmation(query, evidence))
print("cont =", cont(query, evidence))
