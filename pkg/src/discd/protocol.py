"""Round protocol: node uplink selection, server aggregation and downlink.

Every participant scores candidate sentences against ``H``, the conjunction
of what it has already exchanged. Nodes select against their round-start
state and the server broadcast is applied after all uplinks, so the order
of nodes inside a round does not matter.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import re
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .count import CounterConfig
from .fol import Formula, Signature
from .inductive import InconsistentKnowledgeError, KnowledgeState
from .task import bayes_risk, success_rate

__all__ = [
    "ProtocolConfig", "NodeState", "ServerState", "ExperimentLog", "ProtocolHalt",
    "select_uplink", "select_downlink", "server_update", "node_update", "run",
    "bits_cost", "natural_key", "check_log", "mean_curve", "rounds_to", "cost_table",
    "DEFAULT_BETA", "SCORERS",
]

DEFAULT_BETA = 23.665
SCORERS = ("max-confirmation", "min-joint-probability", "literal-cont1")
EXHAUSTIVE_LIMIT = 200_000


class ProtocolHalt(RuntimeError):
    """Aggregated knowledge became inconsistent; the run cannot continue."""


def natural_key(sid: str) -> tuple:
    """Sort key treating digit runs as numbers, so ``s2 < s10``."""
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p)
                 for p in re.split(r"(\d+)", sid) if p)


@dataclass(frozen=True)
class ProtocolConfig:
    B: int = 1
    T: int = 40
    strategy: str = "discd"
    selection_mode: str = "greedy"
    scorer: str = "max-confirmation"
    seed: int = 0
    beta: float = DEFAULT_BETA
    counter: CounterConfig | None = None

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.strategy not in ("discd", "random"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.selection_mode not in ("greedy", "exhaustive"):
            raise ValueError(f"unknown selection mode {self.selection_mode!r}")
        if self.scorer not in SCORERS:
            raise ValueError(f"unknown scorer {self.scorer!r}")

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("counter")
        return d


def bits_cost(sentence_count: int, cfg: ProtocolConfig | float = DEFAULT_BETA) -> float:
    if sentence_count < 0:
        raise ValueError("sentence count must be non-negative")
    beta = cfg.beta if isinstance(cfg, ProtocolConfig) else cfg
    return beta * sentence_count


# --- participant state ----------------------------------------------------------

@dataclass(frozen=True)
class NodeState:
    node_id: str
    local: Mapping[str, Formula]
    knowledge: KnowledgeState
    exchanged: KnowledgeState
    sent: tuple[str, ...] = ()
    received: tuple[tuple[str, Formula], ...] = ()

    @classmethod
    def initial(cls, node_id: str, local: Mapping[str, Formula], sig: Signature,
                counter: CounterConfig | None = None) -> "NodeState":
        local = {k: local[k] for k in sorted(local, key=natural_key)}
        try:
            knowledge = KnowledgeState(sig, local, counter)
        except InconsistentKnowledgeError as exc:
            raise ProtocolHalt(f"node {node_id}: {exc}") from exc
        return cls(node_id, local, knowledge, KnowledgeState(sig, (), counter))

    @property
    def received_ids(self) -> set[str]:
        return {sid for sid, _ in self.received}

    def candidates(self) -> dict[str, Formula]:
        skip = set(self.sent) | self.received_ids
        return {k: f for k, f in self.local.items() if k not in skip}

    def mark_sent(self, ids: Sequence[str]) -> "NodeState":
        if not ids:
            return self
        for sid in ids:
            if sid not in self.local:
                raise ValueError(f"{sid} is not in the pool of node {self.node_id}")
            if sid in self.sent:
                raise ValueError(f"{sid} already sent by node {self.node_id}")
        ex = self.exchanged.extend((sid, self.local[sid]) for sid in ids)
        return replace(self, sent=self.sent + tuple(ids), exchanged=ex)


@dataclass(frozen=True)
class ServerState:
    sig: Signature
    knowledge: KnowledgeState
    pool: Mapping[str, tuple[Formula, int]] = field(default_factory=dict)
    broadcast_history: tuple[str, ...] = ()

    @classmethod
    def empty(cls, sig: Signature, counter: CounterConfig | None = None) -> "ServerState":
        return cls(sig, KnowledgeState(sig, (), counter))

    def candidates(self) -> dict[str, Formula]:
        done = set(self.broadcast_history)
        return {k: f for k, (f, _) in self.pool.items() if k not in done}

    def record_broadcast(self, ids: Sequence[str]) -> "ServerState":
        for sid in ids:
            if sid not in self.pool or sid in self.broadcast_history:
                raise ValueError(f"cannot broadcast {sid}")
        return replace(self, broadcast_history=self.broadcast_history + tuple(ids))


# --- scoring ----------------------------------------------------------------------

def _empty(ks: KnowledgeState) -> KnowledgeState:
    return _prior(ks.sig, ks.cfg)


@lru_cache(maxsize=32)
def _prior(sig: Signature, counter: CounterConfig | None) -> KnowledgeState:
    # shared so unconditional counts are memoized across rounds
    return KnowledgeState(sig, (), counter)


def _score(H: KnowledgeState, prior: KnowledgeState, fs: Sequence[Formula], scorer: str) -> Fraction:
    """Objective to maximize for adding ``fs`` on top of ``H``."""
    joint = H.count_with(*fs)
    if scorer == "max-confirmation":
        return Fraction(joint, H.count)
    if scorer == "literal-cont1":
        # minimizing 1 - p(H | m) is maximizing p(H & m) / p(m)
        return Fraction(joint, prior.count_with(*fs))
    return -Fraction(joint, 1 << H.n_atoms)


def _rank(H, prior, ids: Sequence[str], fs: Sequence[Formula], scorer: str):
    # higher score, then lower unconditional probability, then lower ids
    s = _score(H, prior, fs, scorer)
    return (-s, prior.count_with(*fs), [natural_key(i) for i in ids]), s


def _select(pool: Mapping[str, Formula], H: KnowledgeState, cfg: ProtocolConfig,
            rng: np.random.Generator | None) -> list[tuple[str, Fraction]]:
    ids = sorted(pool, key=natural_key)
    if not ids:
        return []
    b = min(cfg.B, len(ids))
    prior = _empty(H)
    if cfg.strategy == "random":
        if rng is None:
            raise ValueError("random strategy needs a generator")
        picks = [ids[i] for i in rng.choice(len(ids), size=b, replace=False)]
        out, h = [], H
        for sid in picks:
            out.append((sid, _score(h, prior, [pool[sid]], cfg.scorer)))
            h = h.extend([(sid, pool[sid])])
        return out
    if cfg.selection_mode == "exhaustive" and b > 1:
        n_sub = 1
        for k in range(b):
            n_sub = n_sub * (len(ids) - k) // (k + 1)
        if n_sub > EXHAUSTIVE_LIMIT:
            raise ValueError(f"exhaustive selection over {n_sub} subsets exceeds {EXHAUSTIVE_LIMIT}")
        best = None
        for sub in itertools.combinations(ids, b):
            key, s = _rank(H, prior, sub, [pool[i] for i in sub], cfg.scorer)
            if best is None or key < best[0]:
                best = (key, sub, s)
        _, sub, s = best
        return [(sid, s) for sid in sub]
    out = []
    h = H
    remaining = list(ids)
    for _ in range(b):
        _, sid, s = _best_single(h, prior, remaining, pool, cfg.scorer)
        out.append((sid, s))
        remaining.remove(sid)
        h = h.extend([(sid, pool[sid])])
    return out


def _best_single(h, prior, ids, pool, scorer):
    best = None
    for i in ids:
        key, s = _rank(h, prior, [i], [pool[i]], scorer)
        if best is None or key < best[0]:
            best = (key, i, s)
    return best


def select_uplink(node: NodeState, cfg: ProtocolConfig,
                  rng: np.random.Generator | None = None) -> list[str]:
    """Ids the node sends this round; empty when it has nothing left to send."""
    return [sid for sid, _ in _select(node.candidates(), node.exchanged, cfg, rng)]


def select_downlink(server: ServerState, cfg: ProtocolConfig,
                    rng: np.random.Generator | None = None) -> list[str]:
    return [sid for sid, _ in _select(server.candidates(), server.knowledge, cfg, rng)]


def server_update(server: ServerState, msgs: Iterable[tuple[str, str, Formula]],
                  round_: int = 0) -> ServerState:
    """Add uplinked sentences to the pool; structural duplicates collapse."""
    pool = dict(server.pool)
    known = {f for f, _ in pool.values()}
    new = []
    for _node, sid, f in msgs:
        if sid in pool:
            if pool[sid][0] != f:
                raise ValueError(f"sentence id {sid} reused for a different formula")
            continue
        if f in known:
            continue
        pool[sid] = (f, round_)
        known.add(f)
        new.append((sid, f))
    if not new:
        return server
    try:
        knowledge = server.knowledge.extend(new)
    except InconsistentKnowledgeError as exc:
        raise ProtocolHalt(f"server pool inconsistent at round {round_}: {exc}") from exc
    return replace(server, pool=pool, knowledge=knowledge)


def node_update(node: NodeState, broadcast: Iterable[tuple[str, Formula]]) -> NodeState:
    have = node.received_ids
    new = tuple((sid, f) for sid, f in broadcast if sid not in have)
    if not new:
        return node
    try:
        knowledge = node.knowledge.extend(new)
        exchanged = node.exchanged.extend(new)
    except InconsistentKnowledgeError as exc:
        raise ProtocolHalt(f"node {node.node_id}: {exc}") from exc
    return replace(node, received=node.received + new, knowledge=knowledge, exchanged=exchanged)


# --- experiment loop ------------------------------------------------------------------

@dataclass
class ExperimentLog:
    config: dict
    nodes: list[str]
    records: list[dict] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "strategy", "B", "node", "bits", "success_rate"])
        for r in self.records:
            for n in self.nodes:
                w.writerow([r["round"], r["strategy"], r["B"], n, r["bits"][n], r["success"][n]])
        return buf.getvalue()

    def success_curve(self) -> list[float]:
        return [r["mean_success"] for r in self.records]


def _record(t, cfg, nodes, server, hyp, uplinks, downlink) -> dict:
    success, exact, risk, counts, bits, sent = {}, {}, {}, {}, {}, {}
    for n in nodes:
        sr = success_rate([n], hyp)
        success[n.node_id] = float(sr)
        exact[n.node_id] = f"{sr.numerator}/{sr.denominator}"
        risk[n.node_id] = bayes_risk(n, hyp)
        counts[n.node_id] = str(n.knowledge.count)
        sent[n.node_id] = len(n.sent)
        bits[n.node_id] = bits_cost(len(n.sent), cfg)
    mean = success_rate(nodes, hyp)
    return {
        "round": t,
        "strategy": cfg.strategy,
        "B": cfg.B,
        "scorer": cfg.scorer,
        "selection_mode": cfg.selection_mode,
        "seed": cfg.seed,
        "uplink": {k: [{"id": s, "score": float(v)} for s, v in picks] for k, picks in uplinks.items()},
        "downlink": [{"id": s, "score": float(v)} for s, v in downlink],
        "sent": sent,
        "bits": bits,
        "success": success,
        "success_exact": exact,
        "mean_success": float(mean),
        "mean_success_exact": f"{mean.numerator}/{mean.denominator}",
        "bayes_risk": risk,
        "knowledge_count": counts,
        "server_count": str(server.knowledge.count),
        "pool_size": len(server.pool),
    }


def run(dataset, cfg: ProtocolConfig) -> ExperimentLog:
    """Round 0 baseline followed by ``cfg.T`` rounds of uplink, aggregation and downlink."""
    sig, hyp = dataset.signature, dataset.hypotheses
    node_ids = sorted(dataset.node_assignment, key=natural_key)
    nodes = [NodeState.initial(j, {s: dataset.sentences[s] for s in dataset.node_assignment[j]},
                               sig, cfg.counter) for j in node_ids]
    server = ServerState.empty(sig, cfg.counter)
    # one stream per participant so per-node draws do not depend on node order
    streams = np.random.SeedSequence(cfg.seed).spawn(len(nodes) + 1)
    rngs = [np.random.default_rng(s) for s in streams]
    log = ExperimentLog(cfg.to_json(), node_ids)
    log.records.append(_record(0, cfg, nodes, server, hyp, {j: [] for j in node_ids}, []))
    for t in range(1, cfg.T + 1):
        uplinks = {n.node_id: _select(n.candidates(), n.exchanged, cfg, rngs[k])
                   for k, n in enumerate(nodes)}
        msgs = [(n.node_id, sid, n.local[sid]) for n in nodes for sid, _ in uplinks[n.node_id]]
        nodes = [n.mark_sent([sid for sid, _ in uplinks[n.node_id]]) for n in nodes]
        server = server_update(server, msgs, t)
        down = _select(server.candidates(), server.knowledge, cfg, rngs[-1])
        server = server.record_broadcast([sid for sid, _ in down])
        payload = [(sid, server.pool[sid][0]) for sid, _ in down]
        nodes = [node_update(n, payload) for n in nodes]
        log.records.append(_record(t, cfg, nodes, server, hyp, uplinks, down))
    return log


def check_log(log: ExperimentLog, node_pools: Mapping[str, Iterable[str]] | None = None) -> list[str]:
    """Invariant violations in a log (empty when it is sound).

    Checks no-resend, monotone knowledge counts, exact bit accounting and
    that every broadcast id was previously uplinked by some node.
    """
    problems = []
    beta = log.config["beta"]
    sent: dict[str, set] = {n: set() for n in log.nodes}
    uplinked: set[str] = set()
    broadcast: set[str] = set()
    prev_counts = None
    for r in log.records:
        t = r["round"]
        for n, picks in r["uplink"].items():
            for p in picks:
                sid = p["id"]
                if sid in sent[n]:
                    problems.append(f"round {t}: node {n} resent {sid}")
                if node_pools is not None and sid not in set(node_pools[n]):
                    problems.append(f"round {t}: node {n} sent {sid} outside its pool")
                sent[n].add(sid)
                uplinked.add(sid)
        for p in r["downlink"]:
            if p["id"] in broadcast:
                problems.append(f"round {t}: server rebroadcast {p['id']}")
            if p["id"] not in uplinked:
                problems.append(f"round {t}: server broadcast {p['id']} that no node sent")
            broadcast.add(p["id"])
        for n in log.nodes:
            if r["sent"][n] != len(sent[n]):
                problems.append(f"round {t}: node {n} sent count mismatch")
            if r["bits"][n] != beta * len(sent[n]):
                problems.append(f"round {t}: node {n} bits {r['bits'][n]} != beta x {len(sent[n])}")
        counts = {n: int(c) for n, c in r["knowledge_count"].items()}
        counts["server"] = int(r["server_count"])
        if prev_counts is not None:
            for k, c in counts.items():
                if c > prev_counts[k]:
                    problems.append(f"round {t}: knowledge count of {k} increased")
        prev_counts = counts
    return problems


# --- summaries over several runs ----------------------------------------------------

def mean_curve(logs: Sequence[ExperimentLog]) -> np.ndarray:
    curves = np.array([lg.success_curve() for lg in logs], dtype=float)
    return curves.mean(axis=0)


def rounds_to(curve: Sequence[float], threshold: float) -> int | None:
    """First round whose success reaches ``threshold``, or None."""
    for t, v in enumerate(curve):
        if v >= threshold - 1e-12:
            return t
    return None


THRESHOLDS = tuple(range(40, 80, 5))


def cost_table(curve: Sequence[float], cfg: ProtocolConfig,
               thresholds: Sequence[int] = THRESHOLDS) -> list[dict]:
    """Per-node uplink bits charged up to the first round reaching each threshold.

    A node is charged its full budget of ``B`` sentences per round.
    """
    rows = []
    for pct in thresholds:
        t = rounds_to(curve, pct / 100)
        rows.append({
            "strategy": cfg.strategy, "B": cfg.B, "threshold_pct": pct,
            "round": "" if t is None else t,
            "bits": "" if t is None else bits_cost(cfg.B * t, cfg),
        })
    return rows
