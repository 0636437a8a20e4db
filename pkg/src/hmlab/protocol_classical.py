"""Deterministic one-way protocols for HM_m^k under uniform inputs.

Alice's side is a labelling of (X_m)^k (inputs in lexicographic order), with
at most 2^c distinct labels; Bob's side maps (label, y-tuple) to a z-tuple.
Exact success values are Fractions over |X|^k * |Y|^k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .relations import (
    CapError,
    HMAnswer,
    Matching,
    ProductInstance,
    answer_tuples,
    check_m,
    enumerate_matchings,
    hmk_member,
    matching_tuples,
    random_coloring,
    random_matching,
    restriction_counts,
    tuple_index,
)

MAX_INPUT_BITS = 16
MAX_EXACT_WORK = 2**27


@dataclass(frozen=True)
class OneWayProtocol:
    m: int
    k: int
    budget_c: int
    labels: tuple[int, ...]
    bob_answers: dict = field(compare=True, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        if len(self.labels) != 2 ** (self.m * self.k):
            raise ValueError(f"labels must cover all {2 ** (self.m * self.k)} inputs")
        n_labels = len(set(self.labels))
        if n_labels > 2**self.budget_c:
            raise ValueError(f"{n_labels} labels exceed budget 2^{self.budget_c}")
        used = set(self.labels)
        for ys in matching_tuples(self.m, self.k):
            for lab in used:
                if (lab, ys) not in self.bob_answers:
                    raise ValueError(f"bob_answers missing entry for label {lab}, y={_fmt_y(ys)}")

    @property
    def used_labels(self) -> list[int]:
        return sorted(set(self.labels))


@dataclass(frozen=True)
class SuccessReport:
    success: Fraction | float
    method: str
    stderr: float | None = None
    label_weight: dict | None = None
    label_success: dict | None = None

    def __post_init__(self):
        if not 0 <= self.success <= 1:
            raise ValueError(f"success {self.success} outside [0, 1]")


def _check_caps(m: int, k: int) -> None:
    check_m(m)
    if k < 1:
        raise ValueError("k must be >= 1")
    if m * k > MAX_INPUT_BITS:
        raise CapError(f"input space cap is k*m <= {MAX_INPUT_BITS}, got k*m={k * m}")


def _check_exact_work(m: int, k: int, n_labels: int) -> None:
    n_y = len(enumerate_matchings(m)) ** k
    work = n_y * n_labels * 2 ** (m * k)
    if work > MAX_EXACT_WORK:
        raise CapError(f"exact evaluation at m={m}, k={k} with {n_labels} labels needs ~{work} "
                       f"operations (cap {MAX_EXACT_WORK})")


def _normalize_labels(labels, m: int, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (2 ** (m * k),):
        raise ValueError(f"partition must cover all {2 ** (m * k)} inputs, got shape {labels.shape}")
    if labels.min() < 0:
        raise ValueError("labels must be nonnegative")
    return labels


def optimal_bob(alice_partition, m: int, k: int = 1) -> tuple[dict, SuccessReport]:
    """Best Bob response for a fixed Alice labelling, with its exact success.

    For each (label, y) Bob picks the z keeping the most inputs of that class;
    ties go to the lexicographically smallest z.
    """
    _check_caps(m, k)
    labels = _normalize_labels(alice_partition, m, k)
    used = np.unique(labels)
    _check_exact_work(m, k, len(used))
    z_list = answer_tuples(m, k)
    y_list = matching_tuples(m, k)
    class_masks = {int(lab): labels == lab for lab in used}
    bob: dict = {}
    hits = 0
    for ys in y_list:
        for lab, mask in class_masks.items():
            counts = restriction_counts(mask, ys).reshape(-1)
            best = int(np.argmax(counts))
            bob[(lab, ys)] = z_list[best]
            hits += int(counts[best])
    total = Fraction(hits, len(labels) * len(y_list))
    return bob, SuccessReport(total, "exact")


def evaluate_success(p: OneWayProtocol, mode: str = "exact", runs: int = 0,
                     rng: np.random.Generator | None = None) -> SuccessReport:
    """Success of a protocol under uniform inputs, with per-label weight and success."""
    _check_caps(p.m, p.k)
    labels = np.asarray(p.labels)
    if mode == "exact":
        return _evaluate_exact(p, labels)
    if mode == "monte_carlo":
        if runs <= 0 or rng is None:
            raise ValueError("monte_carlo mode needs runs > 0 and an rng")
        return _evaluate_mc(p, runs, rng)
    raise ValueError(f"unknown mode {mode!r}")


def _evaluate_exact(p: OneWayProtocol, labels: np.ndarray) -> SuccessReport:
    m, k = p.m, p.k
    used = p.used_labels
    _check_exact_work(m, k, len(used))
    y_list = matching_tuples(m, k)
    z_pos = {z: n for n, z in enumerate(answer_tuples(m, k))}
    n_x = len(labels)
    class_hits = {lab: 0 for lab in used}
    class_size = {lab: int(np.count_nonzero(labels == lab)) for lab in used}
    for ys in y_list:
        for lab in used:
            counts = restriction_counts(labels == lab, ys).reshape(-1)
            class_hits[lab] += int(counts[z_pos[tuple(p.bob_answers[(lab, ys)])]])
    n_y = len(y_list)
    weight = {lab: Fraction(class_size[lab], n_x) for lab in used}
    per_label = {lab: Fraction(class_hits[lab], class_size[lab] * n_y) for lab in used}
    total = Fraction(sum(class_hits.values()), n_x * n_y)
    return SuccessReport(total, "exact", None, weight, per_label)


def _evaluate_mc(p: OneWayProtocol, runs: int, rng: np.random.Generator) -> SuccessReport:
    m, k = p.m, p.k
    hits = 0
    for _ in range(runs):
        xs = tuple(random_coloring(m, rng) for _ in range(k))
        ys = tuple(random_matching(m, rng) for _ in range(k))
        lab = p.labels[tuple_index(xs)]
        zs = p.bob_answers[(lab, ys)]
        hits += hmk_member(ProductInstance(xs, ys, zs))
    s = hits / runs
    return SuccessReport(s, "monte_carlo", math.sqrt(s * (1 - s) / runs))


def build_protocol(labels, m: int, k: int, budget_c: int) -> tuple[OneWayProtocol, SuccessReport]:
    """Pair a labelling with its optimal Bob response."""
    bob, rep = optimal_bob(labels, m, k)
    return OneWayProtocol(m, k, budget_c, tuple(int(v) for v in labels), bob), rep


@lru_cache(maxsize=8)
def _constraint_stack(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-y constraint matrices stacked as (|Y|, |Z|, |X|) plus class sizes."""
    from .relations import constraint_matrix

    stack = np.stack([constraint_matrix(y) for y in enumerate_matchings(m)]).astype(np.int64)
    return stack, stack.sum(axis=2)


def exact_best_protocol(m: int, c: int, k: int = 1) -> tuple[OneWayProtocol, SuccessReport]:
    """Best deterministic protocol with at most 2^c messages, found exhaustively.

    Feasible regimes: c = 0 (single class), 2^c >= |X|^k (identity labelling
    attains success 1), and c = 1 with k = 1, m = 4 (all 2^16 bipartitions).
    """
    _check_caps(m, k)
    if c < 0:
        raise ValueError("budget must be nonnegative")
    n_x = 2 ** (m * k)
    if c == 0:
        return build_protocol(np.zeros(n_x, dtype=np.int64), m, k, c)
    if 2**c >= n_x:
        return build_protocol(np.arange(n_x), m, k, c)
    if c == 1 and k == 1 and m <= 4:
        return _best_bipartition(m)
    raise CapError(f"exhaustive partition search supports c=1 at m<=4, k=1 only (got m={m}, c={c}, k={k})")


def _best_bipartition(m: int) -> tuple[OneWayProtocol, SuccessReport]:
    n_x = 2**m
    stack, sizes = _constraint_stack(m)
    n_y, n_z, _ = stack.shape
    flat = stack.reshape(n_y * n_z, n_x)
    best_score, best_p = -1, None
    chunk = 1 << 14
    for start in range(0, 2**n_x, chunk):
        p = np.arange(start, min(start + chunk, 2**n_x), dtype=np.int64)
        member = ((p[:, None] >> np.arange(n_x)[None, :]) & 1).astype(np.int64)
        ones = (member @ flat.T).reshape(len(p), n_y, n_z)
        zeros = sizes[None, :, :] - ones
        score = ones.max(axis=2).sum(axis=1) + zeros.max(axis=2).sum(axis=1)
        idx = int(np.argmax(score))
        if score[idx] > best_score:
            best_score, best_p = int(score[idx]), int(p[idx])
    labels = np.array([(best_p >> v) & 1 for v in range(n_x)], dtype=np.int64)
    # one-class partitions (p = 0 or all ones) are allowed under budget c=1
    proto, rep = build_protocol(labels, m, 1, 1)
    assert rep.success == Fraction(best_score, n_x * n_y)
    return proto, rep


def _score(labels: np.ndarray, m: int, k: int, y_list, n_labels: int) -> int:
    hits = 0
    onehot = np.zeros((len(labels), n_labels), dtype=np.int64)
    onehot[np.arange(len(labels)), labels] = 1
    for ys in y_list:
        for lab in range(n_labels):
            if onehot[:, lab].any():
                hits += int(restriction_counts(onehot[:, lab], ys).max())
    return hits


def _score_fast_k1(labels: np.ndarray, stack: np.ndarray, n_labels: int) -> int:
    onehot = np.zeros((n_labels, len(labels)), dtype=np.int64)
    onehot[labels, np.arange(len(labels))] = 1
    counts = np.einsum("yzx,lx->ylz", stack, onehot)
    return int(counts.max(axis=2).sum())


def local_search_protocol(m: int, c: int, k: int, iterations: int, restarts: int,
                          rng: np.random.Generator) -> tuple[OneWayProtocol, SuccessReport]:
    """Hill climbing over labellings; the result is an exact lower bound on the optimum.

    Each step moves one input to another label and keeps the move unless the
    optimal-Bob success drops.
    """
    _check_caps(m, k)
    n_x = 2 ** (m * k)
    n_labels = min(2**c, n_x)
    _check_exact_work(m, k, n_labels)
    y_list = matching_tuples(m, k)
    if k == 1:
        stack = _constraint_stack(m)[0]
        score_fn = lambda lab: _score_fast_k1(lab, stack, n_labels)  # noqa: E731
    else:
        score_fn = lambda lab: _score(lab, m, k, y_list, n_labels)  # noqa: E731
    best_labels, best_score = None, -1
    for _ in range(restarts):
        labels = rng.integers(0, n_labels, size=n_x)
        score = score_fn(labels)
        for _ in range(iterations if n_labels > 1 else 0):
            v = int(rng.integers(0, n_x))
            new = int(rng.integers(0, n_labels - 1))
            new += new >= labels[v]
            old = labels[v]
            labels[v] = new
            s = score_fn(labels)
            if s >= score:
                score = s
            else:
                labels[v] = old
        if score > best_score:
            best_score, best_labels = score, labels.copy()
    proto, rep = build_protocol(best_labels, m, k, c)
    assert rep.success == Fraction(best_score, n_x * len(y_list))
    return proto, SuccessReport(rep.success, "local_search_lower_bound")


def product_protocol(single: OneWayProtocol, k: int) -> OneWayProtocol:
    """Run ``single`` independently on each of k coordinates."""
    if single.k != 1:
        raise ValueError("product_protocol needs a single-instance protocol")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return single
    m = single.m
    _check_caps(m, k)
    base = max(single.labels) + 1
    n_x = 2 ** (m * k)
    mask = 2**m - 1
    labels = []
    for v in range(n_x):
        code = 0
        for c in range(k):
            code = code * base + single.labels[(v >> (m * (k - 1 - c))) & mask]
        labels.append(code)
    used = sorted(set(labels))
    bob = {}
    for ys in matching_tuples(m, k):
        for code in used:
            parts, rest = [], code
            for _ in range(k):
                parts.append(rest % base)
                rest //= base
            parts.reverse()
            bob[(code, ys)] = tuple(single.bob_answers[(lab, (y,))][0] for lab, y in zip(parts, ys))
    return OneWayProtocol(m, k, single.budget_c * k, tuple(labels), bob)


@dataclass(frozen=True)
class PigeonholeCheck:
    n_labels: int
    heavy_label: int
    heavy_weight: Fraction
    good_label: int
    good_success: Fraction
    good_threshold: Fraction
    heavy_mass: Fraction
    joint_labels: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return (self.heavy_weight >= Fraction(1, 4 * self.n_labels)
                and self.good_success >= self.good_threshold
                and self.heavy_mass >= Fraction(3, 4))


def pigeonhole_check(report: SuccessReport) -> PigeonholeCheck:
    """Weight and success pigeonhole quantities for an exact report.

    heavy_mass is the probability that the sent label has weight at least
    1/(4 * #labels); joint_labels are labels meeting both thresholds at once.
    """
    if report.label_weight is None:
        raise ValueError("pigeonhole check needs an exact report with per-label data")
    w, s = report.label_weight, report.label_success
    n = len(w)
    wmin = Fraction(1, 4 * n)
    smin = Fraction(2, 3) * Fraction(report.success)
    heavy = max(w, key=lambda lab: (w[lab], -lab))
    good = max(s, key=lambda lab: (s[lab], -lab))
    heavy_mass = sum((w[lab] for lab in w if w[lab] >= wmin), Fraction(0))
    joint = tuple(lab for lab in sorted(w) if w[lab] >= wmin and s[lab] >= smin)
    return PigeonholeCheck(n, heavy, w[heavy], good, s[good], smin, heavy_mass, joint)


# -- serialization ------------------------------------------------------------------

def _fmt_y(ys: Sequence[Matching]) -> str:
    return "|".join(str(y) for y in ys)


def _fmt_z(zs: Sequence[HMAnswer]) -> str:
    return "|".join(str(z) for z in zs)


def dumps_protocol(p: OneWayProtocol) -> str:
    lines = [f"m {p.m}", f"k {p.k}", f"budget {p.budget_c}", "labels " + " ".join(map(str, p.labels))]
    for ys in matching_tuples(p.m, p.k):
        for lab in p.used_labels:
            lines.append(f"bob {lab} {_fmt_y(ys)} {_fmt_z(p.bob_answers[(lab, ys)])}")
    return "\n".join(lines) + "\n"


def loads_protocol(text: str) -> OneWayProtocol:
    header: dict[str, str] = {}
    bob = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "bob":
            lab, ys, zs = rest.split()
            bob[(int(lab), tuple(Matching.parse(t) for t in ys.split("|")))] = tuple(
                HMAnswer.parse(t) for t in zs.split("|"))
        else:
            header[key] = rest
    try:
        m, k, c = int(header["m"]), int(header["k"]), int(header["budget"])
        labels = tuple(int(v) for v in header["labels"].split())
    except KeyError as exc:
        raise ValueError(f"protocol text is missing field {exc}") from None
    return OneWayProtocol(m, k, c, labels, bob)


SEARCH_CSV_HEADER = "m,k,c,method,success,stderr,seed"


def search_csv_row(m: int, k: int, c: int, rep: SuccessReport, seed: int | None) -> str:
    stderr = "" if rep.stderr is None else f"{rep.stderr:.12g}"
    return f"{m},{k},{c},{rep.method},{float(rep.success):.12g},{stderr},{'' if seed is None else seed}"
