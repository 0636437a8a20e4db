"""Batch experiment runner.

Every subcommand writes a CSV (first line ``# schema=1``) to ``--out`` or
stdout, is deterministic under ``--seed``, and exits nonzero iff one of its
assertion columns reports a violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from contextlib import contextmanager
from fractions import Fraction
from typing import Iterable

import numpy as np

from . import dpt, protocol_classical as pc, protocol_quantum as pq
from .relations import CapError, check_m

log = logging.getLogger("hmlab")

SCHEMA_LINE = "# schema=1"

DEFAULTS = {
    "quantum-exactness": {"m": [4]},
    "tradeoff-scan": {"m": [4], "k": [1, 2], "budget": [0, 1], "trials": 2000, "iterations": 400, "restarts": 5},
    "verify-dpt": {"trials": 1000},
    "depolarize": {"m": [4, 8, 16], "trials": 100000},
    "classical-search": {"m": [4], "k": [1], "budget": [0, 1], "trials": 10000, "iterations": 400,
                         "restarts": 20},
}
COMMON = {"seed": 0, "out": "-", "mode": "exact", "gnuplot": None}


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating, Fraction)):
        return f"{float(v):.12g}"
    return str(v)


@contextmanager
def _open_out(path: str):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def write_table(path: str, header: list[str], rows: Iterable[list], gnuplot: str | None = None) -> None:
    rows = [[fmt(v) for v in r] for r in rows]
    with _open_out(path) as fh:
        fh.write(SCHEMA_LINE + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    if gnuplot:
        with open(gnuplot, "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for r in rows:
                fh.write(" ".join(v if v else "nan" for v in r) + "\n")


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


# -- commands -------------------------------------------------------------------------------

def cmd_quantum_exactness(cfg: dict) -> int:
    referee = pq.corrupted_referee if cfg.get("corrupt_referee") else pq.referee
    rows, bad = [], 0
    for m in cfg["m"]:
        if m not in (4, 8):
            raise CapError(f"quantum-exactness supports m in {{4, 8}}, got {m}")
        for r in pq.exactness_table(m, referee):
            bad += r.violations
            rows.append([m, str(r.x), str(r.y), r.leaves, r.violations, "ok" if r.violations == 0 else "violation"])
    write_table(cfg["out"], ["m", "x", "y", "leaves", "violations", "verdict"], rows, cfg.get("gnuplot"))
    return 1 if bad else 0


def _classical(m: int, k: int, c: int, cfg: dict, rng: np.random.Generator):
    try:
        proto, rep = pc.exact_best_protocol(m, c, k)
    except CapError:
        proto, rep = pc.local_search_protocol(m, c, k, cfg["iterations"], cfg["restarts"], rng)
    if cfg["mode"] == "monte_carlo":
        rep = pc.evaluate_success(proto, "monte_carlo", cfg["trials"], rng)
    return proto, rep


def cmd_tradeoff_scan(cfg: dict) -> int:
    rows = []
    for m in cfg["m"]:
        check_m(m)
        a_bits, b_bits = pq.message_bits(m)
        for k in cfg["k"]:
            dep = pq.depolarized_success_product(m, k, cfg["trials"], _rng(cfg["seed"], m, k, 0))
            for c in cfg["budget"]:
                _, rep = _classical(m, k, c, cfg, _rng(cfg["seed"], m, k, c + 1))
                rows.append([m, k, c, k * a_bits, k * b_bits, k * pq.log2_int(m), rep.success, rep.method,
                             dep.value, dep.stderr])
    header = ["m", "k", "budget", "alice_bits", "bob_bits", "epr_pairs", "classical_success",
              "classical_method", "depolarized_success", "depolarized_stderr"]
    write_table(cfg["out"], header, rows, cfg.get("gnuplot"))
    return 0


def _random_pair_set(n: int, rng: np.random.Generator) -> dpt.BiasedPairSet:
    p = rng.uniform(0.05, 0.6)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return dpt.BiasedPairSet.from_edges(edges, n)


def run_dpt_checks(trials: int, seed: int):
    """Yield (check, param, value, ok) rows for the DPT verification corpus."""
    for m in (2, 4, 6, 8):
        yield "rephrase", f"m={m}", 1, dpt.rephrase_check(m)

    rng = _rng(seed, 1)
    worst = math.inf
    n_graphs = 50
    for _ in range(n_graphs):
        C = _random_pair_set(12, rng)
        forest = dpt.spanning_forest(C)
        worst = min(worst, len(forest) - math.sqrt(len(C) / 2))
    yield "forest_bound", f"graphs={n_graphs}", worst, worst >= 0

    corpus = dpt.planted_corpus() + dpt.random_corpus(trials, _rng(seed, 2))
    fails = sum(not dpt.certified_loss_ok(D)[0] for _, D in corpus)
    yield "certified_loss", f"distributions={len(corpus)}", fails, fails == 0

    claim_corpus = [D for _, D in corpus if D.m <= dpt.MAX_CLAIM3_M]
    claim_corpus += [D for _, D in dpt.near_uniform_corpus(trials, _rng(seed, 3))]
    reports = [dpt.check_claim3(D) for D in claim_corpus]
    fails = sum(not r.implication_ok for r in reports)
    yield "claim3_implication", f"distributions={len(reports)}", fails, fails == 0
    yield "claim3_premise_met", "count", sum(r.premise_met for r in reports), True

    rng = _rng(seed, 4)
    worst_z = 0.0
    agree_exact = True
    for t in range(10):
        B = np.zeros(256, dtype=bool)
        B[rng.choice(256, size=int(rng.integers(1, 9)), replace=False)] = True
        ex = dpt.lemma1_experiment(4, 2, B, 0, exact=True)
        agree_exact &= abs(ex.probability - dpt.lemma1_bruteforce(4, 2, B)) < 1e-12
        mc = dpt.lemma1_experiment(4, 2, B, 2000, rng)
        se = math.sqrt(ex.probability * (1 - ex.probability) / mc.trials)
        dev = abs(mc.probability - ex.probability)
        worst_z = max(worst_z, dev / se if se > 0 else (0.0 if dev == 0 else math.inf))
    yield "lemma1_exact_vs_bruteforce", "m=4,k=2,sets=10", int(agree_exact), agree_exact
    yield "lemma1_exact_vs_mc", "m=4,k=2,sets=10,max_z", worst_z, worst_z <= 3


def cmd_verify_dpt(cfg: dict) -> int:
    rows = list(run_dpt_checks(cfg["trials"], cfg["seed"]))
    write_table(cfg["out"], ["check", "param", "value", "ok"], rows, cfg.get("gnuplot"))
    if cfg.get("report"):
        corpus = dpt.planted_corpus() + dpt.random_corpus(cfg["trials"], _rng(cfg["seed"], 2))
        reports = [dpt.check_claim3(D) for _, D in corpus if D.m <= dpt.MAX_CLAIM3_M]
        with open(cfg["report"], "w") as fh:
            fh.write(SCHEMA_LINE + "\n" + dpt.CLAIM3_CSV_HEADER + "\n")
            fh.writelines(r.csv_row() + "\n" for r in reports)
    return 0 if all(r[3] for r in rows) else 1


def cmd_depolarize(cfg: dict) -> int:
    rows, bad = [], False
    for m in cfg["m"]:
        rep = pq.depolarized_success_exact(m)
        est = pq.depolarized_success_product(m, 1, cfg["trials"], _rng(cfg["seed"], m))
        agree = abs(est.value - rep.success_exact) <= 3 * est.stderr
        bad |= not (rep.bound_satisfied and agree)
        rows.append([m, rep.e_qubits, rep.success_exact, est.value, est.stderr, rep.lower_bound,
                     rep.bound_satisfied, agree])
    header = ["m", "e_qubits", "success_exact", "mc_estimate", "mc_stderr", "lower_bound", "bound_ok", "agree_3se"]
    write_table(cfg["out"], header, rows, cfg.get("gnuplot"))
    return 1 if bad else 0


def cmd_classical_search(cfg: dict) -> int:
    rows = []
    protocols = []
    for m in cfg["m"]:
        for k in cfg["k"]:
            for c in cfg["budget"]:
                proto, rep = _classical(m, k, c, cfg, _rng(cfg["seed"], m, k, c + 1))
                rows.append([m, k, c, rep.method, rep.success, "" if rep.stderr is None else rep.stderr,
                             cfg["seed"]])
                protocols.append(proto)
    write_table(cfg["out"], pc.SEARCH_CSV_HEADER.split(","), rows, cfg.get("gnuplot"))
    if cfg.get("protocol_out"):
        with open(cfg["protocol_out"], "w") as fh:
            fh.write("\n".join(pc.dumps_protocol(p) for p in protocols))
    return 0


COMMANDS = {
    "quantum-exactness": cmd_quantum_exactness,
    "tradeoff-scan": cmd_tradeoff_scan,
    "verify-dpt": cmd_verify_dpt,
    "depolarize": cmd_depolarize,
    "classical-search": cmd_classical_search,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with option values; flags override it")
        p.add_argument("--m", type=int, nargs="+")
        p.add_argument("--k", type=int, nargs="+")
        p.add_argument("--budget", type=int, nargs="+")
        p.add_argument("--trials", type=int)
        p.add_argument("--iterations", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--gnuplot", help="also write a whitespace-separated data file")
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
        mode.add_argument("--monte-carlo", dest="mode", action="store_const", const="monte_carlo")
        if name == "quantum-exactness":
            p.add_argument("--corrupt-referee", action="store_true", default=None, help=argparse.SUPPRESS)
        if name == "verify-dpt":
            p.add_argument("--report", help="write the per-distribution claim check CSV here")
        if name == "classical-search":
            p.add_argument("--protocol-out", help="write the found protocols in text form")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[args.command])
    if args.config:
        with open(args.config) as fh:
            cfg.update({k.replace("-", "_"): v for k, v in json.load(fh).items()})
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")})
    if cfg.get("trials") is not None and cfg["trials"] < 1:
        raise ValueError("--trials must be >= 1")
    for m in cfg.get("m", []):
        check_m(m)
    return cfg


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (CapError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
