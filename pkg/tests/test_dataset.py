import json
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from discd.dataset import (
    DatasetError, GenerationError, GeneratorParams, generate, hypothesis_schemas, load,
    save, split,
)
from discd.fol import ParseError, Signature, parse, render
from discd.inductive import KnowledgeState
from discd.task import deduce


def write_fixture(path, story="s1: P(a)\ns2: forall x (P(x) -> C(x))\n", nodes=None,
                  hyps="0: ~C(x)\n1: C(x)\n", truth=None):
    sig = Signature(("a", "b"), (("P", 1), ("C", 1)))
    path.mkdir(parents=True, exist_ok=True)
    (path / "signature.json").write_text(json.dumps(sig.to_json()))
    (path / "story.folt").write_text(story)
    (path / "nodes.json").write_text(json.dumps(nodes or {"n1": ["s1"], "n2": ["s2"]}))
    (path / "hypotheses.folt").write_text(hyps)
    (path / "truth.json").write_text(json.dumps(truth or {"a": 1}))
    return path


def test_load_fixture(tmp_path):
    ds = load(write_fixture(tmp_path / "d"))
    assert list(ds.sentences) == ["s1", "s2"]
    assert len(ds.hypotheses.schemas) == 2 and ds.hypotheses.ground_truth == {"a": 1}
    assert ds.metadata == {}
    assert deduce(KnowledgeState(ds.signature, ds.sentences), "a", ds.hypotheses).index == 1


@pytest.mark.parametrize("kw", [
    {"nodes": {"n1": ["s1"], "n2": ["s9"]}},
    {"nodes": {"n1": ["s1"]}},
    {"nodes": {"n1": ["s1", "s1"], "n2": ["s2"]}},
    {"truth": {"zed": 0}},
    {"story": "s1: P(a)\ns2: ~P(a)\n"},
    {"story": "s1: P(a)\ns1: C(a)\n"},
    {"story": "s1 P(a)\n"},
    {"hyps": "0: ~C(x)\n2: C(x)\n"},
    {"hyps": "zero: C(x)\n1: ~C(x)\n"},
])
def test_load_rejects_bad_datasets(tmp_path, kw):
    with pytest.raises(DatasetError):
        load(write_fixture(tmp_path / "d", **kw))


def test_load_parse_error_has_line(tmp_path):
    with pytest.raises(ParseError) as exc:
        load(write_fixture(tmp_path / "d", story="s1: P(a)\ns2: P(a) &\n"))
    assert "2" in str(exc.value)


def test_missing_file(tmp_path):
    d = write_fixture(tmp_path / "d")
    (d / "nodes.json").unlink()
    with pytest.raises(DatasetError):
        load(d)


def test_round_trip(tmp_path):
    ds = generate(seed=2)
    back = load(save(ds, tmp_path / "g"))
    assert back.sentences == ds.sentences
    assert back.node_assignment == ds.node_assignment
    assert back.hypotheses.schemas == ds.hypotheses.schemas
    assert back.hypotheses.ground_truth == ds.hypotheses.ground_truth
    assert back.metadata == ds.metadata
    assert back.signature == ds.signature


def test_generation_is_byte_deterministic(tmp_path):
    a, b = save(generate(seed=11), tmp_path / "a"), save(generate(seed=11), tmp_path / "b")
    for name in ("signature.json", "story.folt", "nodes.json", "hypotheses.folt", "truth.json", "meta.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "story.folt").read_bytes() != (save(generate(seed=12), tmp_path / "c") / "story.folt").read_bytes()


def test_generated_dataset_shape():
    ds = generate(seed=7)
    p = GeneratorParams(seed=7)
    assert len(ds.sentences) == p.n_sentences
    assert sorted(ds.node_assignment) == ["n1", "n2", "n3"]
    assert len(ds.hypotheses.schemas) == p.n_hypotheses
    assert len(ds.hypotheses.ground_truth) == p.n_tracked
    full = KnowledgeState(ds.signature, ds.sentences)
    # the story pins every tracked entity, no single share does
    for e, i in ds.hypotheses.ground_truth.items():
        d = deduce(full, e, ds.hypotheses)
        assert d.index == i and d.confirmation == 1 and not d.tie
    for node in ds.node_assignment:
        ks = KnowledgeState(ds.signature, ds.node_pool(node))
        assert any(deduce(ks, e, ds.hypotheses).index != i or deduce(ks, e, ds.hypotheses).tie
                   for e, i in ds.hypotheses.ground_truth.items())


def test_world_in_metadata_satisfies_story():
    ds = generate(seed=4)
    facts = set(ds.metadata["world"])
    sig = ds.signature
    # the recorded world, as a state description, is consistent with the story
    lits = [parse(a, sig) if a in facts else parse(f"~{a}", sig)
            for a in (f"{p}({e})" for p, _ in sig.predicates for e in sig.entities)]
    KnowledgeState(sig, {**ds.sentences, **{f"w{i}": l for i, l in enumerate(lits)}})


def test_hypothesis_schemas_bits():
    hs = hypothesis_schemas(("A", "B"))
    assert [render(h) for h in hs][0].count("~") == 2
    assert len(hs) == 4 and len(set(hs)) == 4


def test_generator_params_validation():
    for bad in ({"n_hypotheses": 6}, {"n_hypotheses": 64}, {"n_tracked": 9}, {"overlap": 1.0},
                {"fact_fraction": 0}, {"n_features": 11}):
        with pytest.raises(ValueError):
            GeneratorParams(**bad)


def test_generation_failure_is_reported():
    with pytest.raises(GenerationError):
        generate(seed=0, n_sentences=2, max_retries=3)


# --- split ----------------------------------------------------------------------------

IDS = [f"s{i:02d}" for i in range(1, 41)]


def test_default_split_accounting():
    nodes = split(IDS, 3, 0.3, seed=0)
    sizes = [len(v) for v in nodes.values()]
    assert sizes == [16, 16, 16]
    held = Counter(s for v in nodes.values() for s in v)
    assert set(held) == set(IDS)
    for v in nodes.values():
        assert sum(held[s] > 1 for s in v) == 5


def test_zero_overlap_is_a_partition():
    nodes = split(IDS, 3, 0.0, seed=1)
    assert sorted(s for v in nodes.values() for s in v) == IDS
    assert sorted(len(v) for v in nodes.values()) == [13, 13, 14]


def test_single_node():
    assert split(IDS, 1, 0.0, seed=0) == {"n1": IDS}
    with pytest.raises(DatasetError):
        split(IDS, 1, 0.3, seed=0)


def test_split_errors():
    with pytest.raises(DatasetError):
        split(["a", "a"], 2, 0.0, seed=0)
    with pytest.raises(DatasetError):
        split([], 2, 0.0, seed=0)
    with pytest.raises(DatasetError):
        split(IDS, 2, 1.0, seed=0)


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 60), st.integers(2, 6), st.floats(0, 0.8), st.integers(0, 2 ** 31))
def test_split_invariants(n, v, overlap, seed):
    ids = [f"s{i}" for i in range(n)]
    try:
        nodes = split(ids, v, overlap, seed)
    except DatasetError:
        return
    held = Counter(s for ns in nodes.values() for s in ns)
    assert set(held) == set(ids)
    sizes = [len(ns) for ns in nodes.values()]
    assert max(sizes) - min(sizes) <= 1
    for ns in nodes.values():
        assert len(set(ns)) == len(ns)
        shared = sum(held[s] > 1 for s in ns)
        assert shared == int(overlap * len(ns) + 0.5 + 1e-9)
    assert split(ids, v, overlap, seed) == nodes
