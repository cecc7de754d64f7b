"""Story datasets: loading, validation, generation and the node split.

On disk a dataset is a directory::

    signature.json    entities and predicates with arities
    story.folt        one sentence per line, ``id: formula``
    nodes.json        node id -> list of sentence ids
    hypotheses.folt   one open formula in ``x`` per line, ``index: formula``
    truth.json        tracked entity -> true hypothesis index
    meta.json         seed, generator parameters, provenance

Generated stories describe people by unary features and three class
predicates. Each of the eight hypotheses fixes the signs of the class
predicates, and every tracked entity's class bits follow from the full
story, either through a stated class fact or through a rule whose premises
are stated as facts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fol import Atom, Const, ForAll, Formula, Implies, Not, Signature, Var, conj, parse, render
from .inductive import InconsistentKnowledgeError, KnowledgeState
from .protocol import natural_key
from .task import HypothesisSet, deduce

__all__ = [
    "Dataset", "GeneratorParams", "DatasetError", "GenerationError",
    "load", "save", "validate", "generate", "split", "ENTITY_NAMES", "FEATURES", "CLASSES",
]

ENTITY_NAMES = (
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi",
    "ivan", "judy", "mallory", "niaj", "olivia", "peggy", "rupert", "sybil",
)
FEATURES = ("Kind", "Rich", "Smart", "Young", "Tall", "Calm", "Brave", "Quiet", "Loud", "Wise")
CLASSES = ("Leader", "Artist", "Nomad", "Healer", "Scholar")


class DatasetError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass
class Dataset:
    signature: Signature
    sentences: dict[str, Formula]
    node_assignment: dict[str, list[str]]
    hypotheses: HypothesisSet
    metadata: dict = field(default_factory=dict)

    def node_pool(self, node: str) -> dict[str, Formula]:
        return {s: self.sentences[s] for s in self.node_assignment[node]}


# --- on-disk format -----------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def save(ds: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "signature.json").write_text(_dump(ds.signature.to_json()), encoding="utf-8")
    (path / "story.folt").write_text(
        "".join(f"{sid}: {render(f)}\n" for sid, f in ds.sentences.items()), encoding="utf-8")
    nodes = {n: list(ids) for n, ids in ds.node_assignment.items()}
    (path / "nodes.json").write_text(_dump(nodes), encoding="utf-8")
    (path / "hypotheses.folt").write_text(
        "".join(f"{i}: {render(h)}\n" for i, h in enumerate(ds.hypotheses.schemas)), encoding="utf-8")
    (path / "truth.json").write_text(_dump(dict(ds.hypotheses.ground_truth)), encoding="utf-8")
    (path / "meta.json").write_text(_dump(ds.metadata), encoding="utf-8")
    return path


def _read_lines(path: Path):
    for no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, body = line.partition(":")
        if not sep:
            raise DatasetError(f"{path.name}:{no}: expected 'id: formula'")
        yield no, key.strip(), body


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetError(f"missing {path.name}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path.name}: {exc}") from None


def load(path: str | Path, check: bool = True) -> Dataset:
    """Read and (by default) validate a dataset directory."""
    path = Path(path)
    sig = Signature.from_json(_read_json(path / "signature.json"))
    if not (path / "story.folt").exists():
        raise DatasetError("missing story.folt")
    sentences: dict[str, Formula] = {}
    for no, sid, body in _read_lines(path / "story.folt"):
        if sid in sentences:
            raise DatasetError(f"story.folt:{no}: duplicate sentence id {sid}")
        sentences[sid] = parse(body, sig, line=no)
    schemas: dict[int, Formula] = {}
    for no, key, body in _read_lines(path / "hypotheses.folt"):
        if not key.isdigit():
            raise DatasetError(f"hypotheses.folt:{no}: bad index {key!r}")
        schemas[int(key)] = parse(body, sig, allow_free=True, line=no)
    if sorted(schemas) != list(range(len(schemas))):
        raise DatasetError("hypothesis indices must be 0..k-1")
    truth = {str(e): int(i) for e, i in _read_json(path / "truth.json").items()}
    nodes = {str(n): [str(s) for s in ids] for n, ids in _read_json(path / "nodes.json").items()}
    meta_path = path / "meta.json"
    meta = _read_json(meta_path) if meta_path.exists() else {}
    try:
        hyp = HypothesisSet(tuple(schemas[i] for i in range(len(schemas))), truth)
    except ValueError as exc:
        raise DatasetError(str(exc)) from None
    ds = Dataset(sig, sentences, nodes, hyp, meta)
    if check:
        validate(ds)
    return ds


def validate(ds: Dataset) -> None:
    """Raise :class:`DatasetError` unless the dataset invariants hold."""
    if not ds.sentences:
        raise DatasetError("empty story")
    if not ds.node_assignment:
        raise DatasetError("no nodes")
    assigned = set()
    for node, ids in ds.node_assignment.items():
        if len(set(ids)) != len(ids):
            raise DatasetError(f"node {node} lists a sentence twice")
        for sid in ids:
            if sid not in ds.sentences:
                raise DatasetError(f"node {node} references unknown sentence {sid}")
        assigned.update(ids)
    missing = set(ds.sentences) - assigned
    if missing:
        raise DatasetError(f"sentences assigned to no node: {sorted(missing, key=natural_key)}")
    for e in ds.hypotheses.ground_truth:
        if e not in ds.signature.entities:
            raise DatasetError(f"truth for unknown entity {e}")
    try:
        KnowledgeState(ds.signature, ds.sentences)
    except InconsistentKnowledgeError as exc:
        raise DatasetError(f"story is inconsistent: {exc}") from None
    for node in ds.node_assignment:
        try:
            KnowledgeState(ds.signature, ds.node_pool(node))
        except InconsistentKnowledgeError as exc:
            raise DatasetError(f"share of node {node} is inconsistent: {exc}") from None


# --- split ------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5 + 1e-9)


def _split_plan(n: int, v: int, overlap: float):
    """Smallest total share size for which the overlap rule is satisfiable.

    Returns (sizes, shared slots per node, number of distinct shared sentences).
    """
    for total in range(n, v * n + 1):
        sizes = [total // v + (1 if j < total % v else 0) for j in range(v)]
        shared = [_round_half_up(overlap * s) for s in sizes]
        unique = sum(s - k for s, k in zip(sizes, shared))
        if unique > n:
            break
        n_shared = n - unique
        slots = sum(shared)
        if n_shared == 0 and slots == 0:
            return sizes, shared, 0
        if n_shared >= 1 and 2 * n_shared <= slots <= v * n_shared and max(shared) <= n_shared:
            return sizes, shared, n_shared
    raise DatasetError(f"no split of {n} sentences over {v} nodes with overlap {overlap}")


def split(ids: Sequence[str], v: int, overlap: float, seed: int,
          node_names: Sequence[str] | None = None) -> dict[str, list[str]]:
    """Assign sentences to ``v`` nodes with per-node shared fraction ``overlap``.

    Shares differ in size by at most one; node ``j`` holds
    ``round(overlap * |share_j|)`` sentences that also sit at another node,
    and the rest are unique to it. When the equal-size shares cannot cover
    every sentence under that rule, shares grow uniformly until they can.
    """
    ids = list(ids)
    n = len(ids)
    if len(set(ids)) != n:
        raise DatasetError("duplicate sentence ids")
    if n == 0:
        raise DatasetError("nothing to split")
    if not 0 <= overlap < 1:
        raise DatasetError("overlap must lie in [0, 1)")
    if v < 1 or (v == 1 and overlap != 0):
        raise DatasetError("need v >= 2, or v = 1 with overlap 0")
    names = list(node_names) if node_names else [f"n{j + 1}" for j in range(v)]
    if len(names) != v:
        raise DatasetError("wrong number of node names")
    sizes, shared, n_shared = _split_plan(n, v, overlap)
    order = [ids[i] for i in np.random.default_rng(seed).permutation(n)]
    shares: list[list[str]] = [[] for _ in range(v)]
    pos = 0
    for j in range(v):
        k = sizes[j] - shared[j]
        shares[j].extend(order[pos:pos + k])
        pos += k
    common = order[pos:]
    assert len(common) == n_shared
    left = list(shared)
    holders: dict[str, list[int]] = {s: [] for s in common}
    # every shared sentence goes to the two nodes with the most open slots
    for s in common:
        for _ in range(2):
            j = max((j for j in range(v) if left[j] > 0 and j not in holders[s]),
                    key=lambda j: (left[j], -j), default=None)
            if j is None:
                raise DatasetError("shared slots exhausted")
            holders[s].append(j)
            left[j] -= 1
    # leftover slots take the least-held sentences the node lacks
    for j in range(v):
        while left[j] > 0:
            s = min((s for s in common if j not in holders[s]),
                    key=lambda s: (len(holders[s]), common.index(s)), default=None)
            if s is None:
                raise DatasetError("cannot fill shared slots")
            holders[s].append(j)
            left[j] -= 1
    for s in common:
        for j in holders[s]:
            shares[j].append(s)
    return {names[j]: sorted(shares[j], key=natural_key) for j in range(v)}


# --- generator ---------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorParams:
    n_nodes: int = 3
    n_sentences: int = 40
    overlap: float = 0.30
    n_hypotheses: int = 8
    n_entities: int = 8
    n_tracked: int = 6
    n_features: int = 8
    fact_fraction: float = 0.6
    rule_derivation: float = 0.75
    max_premises: int = 2
    seed: int = 0
    max_retries: int = 500

    def __post_init__(self):
        k = self.n_hypotheses
        if k < 2 or k & (k - 1):
            raise ValueError("n_hypotheses must be a power of two >= 2")
        if k.bit_length() - 1 > len(CLASSES):
            raise ValueError(f"at most {2 ** len(CLASSES)} hypotheses")
        if not 1 <= self.n_entities <= len(ENTITY_NAMES):
            raise ValueError(f"n_entities must be in 1..{len(ENTITY_NAMES)}")
        if not 1 <= self.n_tracked <= self.n_entities:
            raise ValueError("n_tracked must be in 1..n_entities")
        if not 1 <= self.n_features <= len(FEATURES):
            raise ValueError(f"n_features must be in 1..{len(FEATURES)}")
        if not 0 <= self.overlap < 1:
            raise ValueError("overlap must lie in [0, 1)")
        if not 0 < self.fact_fraction < 1:
            raise ValueError("fact_fraction must lie in (0, 1)")
        if not 0 <= self.rule_derivation <= 1:
            raise ValueError("rule_derivation must lie in [0, 1]")
        if self.n_nodes < 1 or self.n_sentences < 2 or self.max_retries < 1:
            raise ValueError("n_nodes >= 1, n_sentences >= 2 and max_retries >= 1 required")
        if not 1 <= self.max_premises <= self.n_features:
            raise ValueError("max_premises must be in 1..n_features")

    @property
    def n_bits(self) -> int:
        return self.n_hypotheses.bit_length() - 1


def _lit(pred: str, term, positive: bool = True) -> Formula:
    a = Atom(pred, (term,))
    return a if positive else Not(a)


def hypothesis_schemas(classes: Sequence[str]) -> tuple[Formula, ...]:
    """Schema ``i`` asserts class ``b`` exactly when bit ``b`` of ``i`` is set."""
    x = Var("x")
    return tuple(conj(*(_lit(c, x, bool(i >> b & 1)) for b, c in enumerate(classes)))
                 for i in range(1 << len(classes)))


@dataclass(frozen=True)
class _Rule:
    premises: tuple[str, ...]
    cls: int
    positive: bool


def _rule_formula(r: _Rule, classes) -> Formula:
    x = Var("x")
    body = conj(*(_lit(p, x) for p in r.premises))
    return ForAll("x", Implies(body, _lit(classes[r.cls], x, r.positive)))


def _draw_rules(p: GeneratorParams, n_rules: int, feats, rng) -> list[_Rule]:
    conclusions = [(b, s) for b in range(p.n_bits) for s in (True, False)]
    per, extra = divmod(n_rules, len(conclusions))
    targets = [c for c in conclusions for _ in range(per)]
    targets += [conclusions[i] for i in rng.choice(len(conclusions), size=extra, replace=False)]
    seen = set()
    rules = []
    for b, s in targets:
        for _ in range(100):
            size = int(rng.integers(1, p.max_premises + 1))
            prem = tuple(sorted(feats[i] for i in rng.choice(len(feats), size=size, replace=False)))
            if (prem, b) not in seen:
                break
        else:
            raise GenerationError("could not draw distinct rule premises")
        seen.add((prem, b))
        rules.append(_Rule(prem, b, s))
    return rules


def _harmless(on: set, rules: Sequence[_Rule], hyp_index: int) -> bool:
    """No rule firing on the features ``on`` contradicts the class bits of ``hyp_index``."""
    return all(bool(hyp_index >> r.cls & 1) == r.positive
               for r in rules if on.issuperset(r.premises))


def _attempt(p: GeneratorParams, rng: np.random.Generator):
    ents = ENTITY_NAMES[:p.n_entities]
    feats = FEATURES[:p.n_features]
    classes = CLASSES[:p.n_bits]
    n_facts = _round_half_up(p.fact_fraction * p.n_sentences)
    n_rules = p.n_sentences - n_facts
    tracked = sorted(rng.choice(p.n_entities, size=p.n_tracked, replace=False).tolist())
    tracked = [ents[i] for i in tracked]
    truth = {e: int(rng.integers(0, p.n_hypotheses)) for e in tracked}
    rules = _draw_rules(p, n_rules, feats, rng)

    feat: dict[str, dict[str, bool | None]] = {e: {f: None for f in feats} for e in ents}
    locked: set[tuple[str, str]] = set()
    derivation: dict[tuple[str, int], _Rule | None] = {}
    for e in tracked:
        for b in range(p.n_bits):
            want = bool(truth[e] >> b & 1)
            on = {f for f in feats if feat[e][f]}
            options = [r for r in rules if r.cls == b and r.positive == want
                       and _harmless(on | set(r.premises), rules, truth[e])]
            if options and rng.random() < p.rule_derivation:
                r = options[int(rng.integers(len(options)))]
                for f in r.premises:
                    feat[e][f] = True
                    locked.add((e, f))
                derivation[(e, b)] = r
            else:
                derivation[(e, b)] = None
    for e in ents:
        for f in feats:
            if feat[e][f] is None:
                feat[e][f] = bool(rng.random() < 0.5)

    # switch off rules that would derive a wrong or conflicting class
    cls: dict[str, dict[int, bool]] = {e: {} for e in tracked}
    for e in tracked:
        cls[e] = {b: bool(truth[e] >> b & 1) for b in range(p.n_bits)}
    for e in ents:
        while True:
            fired = [r for r in rules if all(feat[e][f] for f in r.premises)]
            bad = None
            if e in cls:
                bad = next((r for r in fired if cls[e][r.cls] != r.positive), None)
            else:
                for r in fired:
                    if any(q.cls == r.cls and q.positive != r.positive for q in fired):
                        bad = r
                        break
            if bad is None:
                break
            free = [f for f in bad.premises if (e, f) not in locked]
            if not free:
                return None
            f = free[int(rng.integers(len(free)))]
            feat[e][f] = False
            locked.add((e, f))
        if e not in cls:
            cls[e] = {}
            for r in fired:
                cls[e][r.cls] = r.positive
            for b in range(p.n_bits):
                if b not in cls[e]:
                    cls[e][b] = bool(rng.random() < 0.5)

    facts: list[Formula] = []
    for e in tracked:
        for b in range(p.n_bits):
            r = derivation[(e, b)]
            lits = ([_lit(f, Const(e)) for f in r.premises] if r is not None
                    else [_lit(classes[b], Const(e), cls[e][b])])
            for lit in lits:
                if lit not in facts:
                    facts.append(lit)
    if len(facts) > n_facts:
        return None
    extra = [_lit(f, Const(e), feat[e][f]) for e in ents for f in feats]
    extra += [_lit(classes[b], Const(e), cls[e][b]) for e in ents if e not in truth
              for b in range(p.n_bits)]
    extra = [f for f in extra if f not in facts]
    need = n_facts - len(facts)
    if need > len(extra):
        return None
    facts += [extra[i] for i in sorted(rng.choice(len(extra), size=need, replace=False))]

    story = facts + [_rule_formula(r, classes) for r in rules]
    if len(set(story)) != len(story):
        return None
    order = rng.permutation(len(story))
    width = len(str(len(story)))
    sentences = {f"s{k + 1:0{width}d}": story[i] for k, i in enumerate(order)}
    sig = Signature(ents, tuple((f, 1) for f in feats) + tuple((c, 1) for c in classes))
    world = sorted([f"{f}({e})" for e in ents for f in feats if feat[e][f]]
                   + [f"{classes[b]}({e})" for e in ents for b in range(p.n_bits) if cls[e][b]])
    return sig, sentences, HypothesisSet(hypothesis_schemas(classes), truth), world


def _verified(ds: Dataset) -> bool:
    hyp = ds.hypotheses
    full = KnowledgeState(ds.signature, ds.sentences)
    for e, i in hyp.ground_truth.items():
        d = deduce(full, e, hyp)
        if d.index != i or d.tie or d.confirmation != 1:
            return False
    for node in ds.node_assignment:
        ks = KnowledgeState(ds.signature, ds.node_pool(node))
        if all((lambda d: d.index == i and not d.tie)(deduce(ks, e, hyp))
               for e, i in hyp.ground_truth.items()):
            return False
    return True


def generate(params: GeneratorParams | None = None, **overrides) -> Dataset:
    """Draw a story, split it and keep the first draw that passes verification.

    A draw passes when the full story entails the true hypothesis of every
    tracked entity and every node, on its own, misses at least one.
    """
    p = params or GeneratorParams()
    if overrides:
        p = GeneratorParams(**{**asdict(p), **overrides})
    rng = np.random.default_rng(p.seed)
    for attempt in range(1, p.max_retries + 1):
        drawn = _attempt(p, rng)
        if drawn is None:
            continue
        sig, sentences, hyp, world = drawn
        split_seed = int(rng.integers(2 ** 32))
        nodes = split(list(sentences), p.n_nodes, p.overlap, split_seed)
        meta = {"generator": asdict(p), "seed": p.seed, "attempt": attempt,
                "split_seed": split_seed, "world": world}
        ds = Dataset(sig, sentences, nodes, hyp, meta)
        try:
            validate(ds)
        except DatasetError:
            continue
        if _verified(ds):
            return ds
    raise GenerationError(f"no verified dataset after {p.max_retries} attempts (seed {p.seed})")
