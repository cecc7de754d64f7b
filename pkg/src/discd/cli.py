"""Command line: ``discd run | gen | count | pac-bound``.

Exit codes: 0 success, 1 usage, 2 data error, 3 resource limit.

``run`` writes three files to ``--out``:

* ``log.jsonl``  one JSON record per (seed, strategy, round)
* ``curves.csv`` columns round, strategy, B, success_rate, n_seeds
  (success averaged over seeds, nodes and tracked entities)
* ``costs.csv``  columns strategy, B, threshold_pct, round, bits: the
  per-node uplink bits charged up to the first round whose mean success
  reaches each threshold (blank when never reached)
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from .count import CounterConfig, CountingError, ResourceLimitError, count_external, count_models
from .dataset import DatasetError, GenerationError, GeneratorParams, generate, load, save
from .fol import ParseError, Signature, SignatureError, conj, parse
from .ground import GroundingError, ground, to_cnf, to_dimacs
from .hintikka import min_samples, pac_epsilon_bound
from .inductive import InconsistentKnowledgeError, atom_index
from .protocol import (
    DEFAULT_BETA, SCORERS, ProtocolConfig, ProtocolHalt, cost_table, mean_curve, run,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RESOURCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, seed_help: str = "random seed"):
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--out", default=None, help="output path")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--config", default=None, help="JSON file of option defaults")


def _gen_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("generator")
    d = GeneratorParams()
    g.add_argument("--n-nodes", type=int, default=d.n_nodes)
    g.add_argument("--n-sentences", type=int, default=d.n_sentences)
    g.add_argument("--overlap", type=float, default=d.overlap)
    g.add_argument("--n-hypotheses", type=int, default=d.n_hypotheses)
    g.add_argument("--n-entities", type=int, default=d.n_entities)
    g.add_argument("--n-tracked", type=int, default=d.n_tracked)
    g.add_argument("--n-features", type=int, default=d.n_features)
    g.add_argument("--fact-fraction", type=float, default=d.fact_fraction)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="discd", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    p = subs["run"] = sub.add_parser("run", help="run the round protocol",
                                     description="Run the round protocol and write log.jsonl, curves.csv and costs.csv.")
    _common(p, "seed of the generated dataset and the protocol (required)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--dataset", help="dataset directory")
    src.add_argument("--gen-default", action="store_true", help="generate a dataset per seed")
    p.add_argument("--B", type=int, default=1, help="sentences per message")
    p.add_argument("--T", type=int, default=40, help="rounds")
    p.add_argument("--strategy", choices=["discd", "random", "both"], default="discd")
    p.add_argument("--scorer", choices=SCORERS, default="max-confirmation")
    p.add_argument("--selection-mode", choices=["greedy", "exhaustive"], default="greedy")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA, help="bits per sentence")
    p.add_argument("--n-seeds", type=int, default=1, help="run seeds seed..seed+n-1 and average")
    _gen_flags(p)

    p = subs["gen"] = sub.add_parser("gen", help="generate a dataset directory")
    _common(p, "generator seed (required)")
    p.add_argument("--max-retries", type=int, default=GeneratorParams().max_retries)
    _gen_flags(p)

    p = subs["count"] = sub.add_parser("count", help="exact model count of a formula file")
    _common(p)
    p.add_argument("formula", help="file with one sentence per line (optionally 'id: formula'); '-' reads stdin")
    p.add_argument("--signature", required=False, help="signature.json")
    p.add_argument("--dimacs", help="also write the CNF here")
    p.add_argument("--external", help="external counter command with a {cnf_path} placeholder")

    p = subs["pac-bound"] = sub.add_parser("pac-bound", help="constituent PAC bound or minimal sample size")
    _common(p)
    p.add_argument("--K", type=int, required=False)
    p.add_argument("--alpha", type=float, default=None)
    what = p.add_mutually_exclusive_group()
    what.add_argument("--l", type=float, help="number of observations")
    what.add_argument("--epsilon", type=float, help="target error")
    return parser, subs


def _parse(argv: Sequence[str] | None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        known = {a.dest for a in subs[args.command]._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        subs[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _gen_params(args, seed: int) -> GeneratorParams:
    extra = {"max_retries": args.max_retries} if hasattr(args, "max_retries") else {}
    return GeneratorParams(
        n_nodes=args.n_nodes, n_sentences=args.n_sentences, overlap=args.overlap,
        n_hypotheses=args.n_hypotheses, n_entities=args.n_entities, n_tracked=args.n_tracked,
        n_features=args.n_features, fact_fraction=args.fact_fraction, seed=seed, **extra,
    )


# --- run --------------------------------------------------------------------------

def _one_run(job):
    args, seed, strategy = job
    ds = load(args.dataset) if args.dataset else generate(_gen_params(args, seed))
    cfg = ProtocolConfig(B=args.B, T=args.T, strategy=strategy, selection_mode=args.selection_mode,
                         scorer=args.scorer, seed=seed, beta=args.beta)
    return seed, strategy, run(ds, cfg)


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_run(args) -> int:
    _need(args, "seed")
    if args.n_seeds < 1 or args.jobs < 1:
        raise UsageError("--n-seeds and --jobs must be positive")
    out = Path(args.out or ".")
    strategies = ["discd", "random"] if args.strategy == "both" else [args.strategy]
    # validate the protocol options before any work
    try:
        for s in strategies:
            ProtocolConfig(B=args.B, T=args.T, strategy=s, selection_mode=args.selection_mode,
                           scorer=args.scorer, seed=args.seed, beta=args.beta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    jobs = [(args, args.seed + k, s) for k in range(args.n_seeds) for s in strategies]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "log.jsonl", "w", encoding="utf-8") as fh:
        for _, _, lg in results:
            fh.write(lg.to_jsonl())
    curves = [["round", "strategy", "B", "success_rate", "n_seeds"]]
    costs = [["strategy", "B", "threshold_pct", "round", "bits"]]
    for s in strategies:
        logs = [lg for _, st, lg in results if st == s]
        curve = mean_curve(logs)
        curves += [[t, s, args.B, repr(float(v)), len(logs)] for t, v in enumerate(curve)]
        cfg = ProtocolConfig(B=args.B, T=args.T, strategy=s, beta=args.beta)
        costs += [[r["strategy"], r["B"], r["threshold_pct"], r["round"], r["bits"]]
                  for r in cost_table(curve, cfg)]
    (out / "curves.csv").write_text(_csv(curves), encoding="utf-8")
    (out / "costs.csv").write_text(_csv(costs), encoding="utf-8")
    summary = {s: [float(v) for v in mean_curve([lg for _, st, lg in results if st == s])][-1]
               for s in strategies}
    print(json.dumps({"out": str(out), "final_success": summary}, sort_keys=True))
    return EXIT_OK


# --- gen ----------------------------------------------------------------------------

def cmd_gen(args) -> int:
    _need(args, "seed", "out")
    ds = generate(_gen_params(args, args.seed))
    path = save(ds, args.out)
    load(path)
    print(json.dumps({
        "out": str(path), "sentences": len(ds.sentences),
        "nodes": {n: len(v) for n, v in ds.node_assignment.items()},
        "attempt": ds.metadata["attempt"],
    }, sort_keys=True))
    return EXIT_OK


# --- count --------------------------------------------------------------------------

def _read_formulas(path: str, sig: Signature):
    text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    out = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, sep, body = line.partition(":")
        if sep and head.strip() and " " not in head.strip() and "(" not in head:
            line = body
        out.append(parse(line, sig, line=no))
    if not out:
        raise DatasetError("no formula given")
    return out


def cmd_count(args) -> int:
    _need(args, "signature")
    try:
        sig = Signature.from_json(json.loads(Path(args.signature).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"cannot read signature: {exc}") from None
    fs = _read_formulas(args.formula, sig)
    index = atom_index(sig)
    problem = to_cnf(ground(conj(*fs), sig, index=index), index)
    if args.dimacs:
        Path(args.dimacs).write_text(to_dimacs(problem), encoding="utf-8")
    if args.external:
        n = count_external(problem, CounterConfig(external_counter=args.external))
    else:
        n = count_models(problem)
    p = Fraction(n, 1 << problem.n_original)
    print(json.dumps({
        "count": n, "n_atoms": problem.n_original, "n_aux": problem.n_aux,
        "clauses": len(problem.clauses),
        "probability": f"{p.numerator}/{p.denominator}", "probability_float": float(p),
    }, sort_keys=True))
    return EXIT_OK


# --- pac-bound ----------------------------------------------------------------------

def cmd_pac_bound(args) -> int:
    _need(args, "K", "alpha")
    if args.l is None and args.epsilon is None:
        raise UsageError("give --l or --epsilon")
    if args.l is not None:
        bound = pac_epsilon_bound(args.K, args.l, args.alpha)
        print(json.dumps({"K": args.K, "alpha": args.alpha, "l": args.l, "bound": bound}, sort_keys=True))
    else:
        l = min_samples(args.epsilon, args.K, args.alpha)
        print(json.dumps({"K": args.K, "alpha": args.alpha, "epsilon": args.epsilon,
                          "min_samples": l, "bound_at_min": pac_epsilon_bound(args.K, l, args.alpha)},
                         sort_keys=True))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "gen": cmd_gen, "count": cmd_count, "pac-bound": cmd_pac_bound}

DATA_ERRORS = (ParseError, SignatureError, DatasetError, GenerationError,
               InconsistentKnowledgeError, ProtocolHalt, OSError, ValueError)
RESOURCE_ERRORS = (ResourceLimitError, GroundingError, RecursionError, MemoryError)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = _parse(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"discd: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RESOURCE_ERRORS as exc:
        print(f"discd: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (*DATA_ERRORS, CountingError) as exc:
        print(f"discd: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
