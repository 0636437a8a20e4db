"""EPR-assisted SMP protocol for HM_m and its k-fold parallel composition.

Alice applies her coloring as phases, Bob measures his register with the
edge projectors of his matching, both apply Hadamards and measure. Alice
sends k, Bob sends (a, i, j, l) and the referee answers (a, (k^l).(i^j)).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .qsim import (
    StateVector,
    apply_phase,
    branch_computational,
    branch_matching,
    hadamard_all,
    maximally_mixed_ensemble,
    measure_computational,
    measure_matching,
    prepare_epr,
)
from .relations import (
    CapError,
    Coloring,
    HMAnswer,
    Matching,
    ProductInstance,
    check_m,
    double_factorial,
    enumerate_matchings,
    hm_member,
    hmk_member,
    log2_int,
    pair_parity,
    random_coloring,
    random_matching,
)

EXHAUSTIVE_MAX_M = 8
DEPOLARIZED_MAX_M = 16


def dot2(u: int, v: int) -> int:
    """Inner product mod 2 of two bit strings given as integers."""
    return bin(u & v).count("1") & 1


@lru_cache(maxsize=16)
def dot2_table(m: int) -> np.ndarray:
    """dot2_table(m)[u, v] = u.v mod 2 for u, v < m."""
    u = np.arange(m)
    t = np.vectorize(dot2)(u[:, None], u[None, :]).astype(np.uint8)
    t.flags.writeable = False
    return t


def referee(alice_msg: int, bob_msg: tuple[int, int, int, int]) -> HMAnswer:
    """Referee rule; sees only the two messages."""
    a, i, j, l = bob_msg
    return HMAnswer(a, dot2(alice_msg ^ l, i ^ j))


def corrupted_referee(alice_msg: int, bob_msg: tuple[int, int, int, int]) -> HMAnswer:
    """Parity-flipping referee, used as a mutation check."""
    ans = referee(alice_msg, bob_msg)
    return HMAnswer(ans.edge_index, 1 - ans.parity)


Referee = Callable[[int, tuple[int, int, int, int]], HMAnswer]


def message_bits(m: int) -> tuple[int, int]:
    """(Alice bits, Bob bits) for one HM instance."""
    n = log2_int(m)
    return n, log2_int(m // 2) + 3 * n


@dataclass(frozen=True)
class Transcript:
    m: int
    k: int
    alice_bits: int
    bob_bits: int
    epr_pairs_used: int
    answers: tuple[HMAnswer, ...]
    alice_messages: tuple[int, ...]
    bob_messages: tuple[tuple[int, int, int, int], ...]

    @property
    def answer(self) -> HMAnswer:
        if self.k != 1:
            raise AttributeError("answer is only defined for single instances; use answers")
        return self.answers[0]

    def csv_row(self, correct: bool) -> str:
        return f"{self.m},{self.k},{self.alice_bits},{self.bob_bits},{self.epr_pairs_used},{int(correct)}"


TRANSCRIPT_CSV_HEADER = "m,k,alice_bits,bob_bits,epr_pairs,correct"


def _check_inputs(x: Coloring, y: Matching, shared: StateVector) -> None:
    if x.m != y.m or shared.m != x.m:
        raise ValueError(f"dimension mismatch: x m={x.m}, y m={y.m}, shared m={shared.m}")


def run_hm_smp(x: Coloring, y: Matching, shared: StateVector, rng: np.random.Generator,
               referee: Referee = referee) -> tuple[HMAnswer, Transcript]:
    _check_inputs(x, y, shared)
    m = x.m
    s = apply_phase(shared, x)
    a, s = measure_matching(s, y, rng)
    s = hadamard_all(s)
    k, l = measure_computational(s, rng)
    i, j = y.edges[a]
    bob_msg = (a, i, j, l)
    answer = referee(k, bob_msg)
    alice_bits, bob_bits = message_bits(m)
    t = Transcript(m, 1, alice_bits, bob_bits, log2_int(m), (answer,), (k,), (bob_msg,))
    return answer, t


def run_hmk_smp(xs: Sequence[Coloring], ys: Sequence[Matching], rng: np.random.Generator,
                shared: Sequence[StateVector] | None = None) -> tuple[list[HMAnswer], Transcript]:
    """k parallel copies, each on its own fresh shared state (EPR by default)."""
    k = len(xs)
    if k < 1 or len(ys) != k or (shared is not None and len(shared) != k):
        raise ValueError("xs, ys (and shared, if given) must have the same length k >= 1")
    m = xs[0].m
    if any(x.m != m for x in xs) or any(y.m != m for y in ys):
        raise ValueError("coordinates do not share m")
    answers, a_msgs, b_msgs = [], [], []
    for c in range(k):
        state = prepare_epr(m) if shared is None else shared[c]
        ans, t = run_hm_smp(xs[c], ys[c], state, rng)
        answers.append(ans)
        a_msgs += t.alice_messages
        b_msgs += t.bob_messages
    alice_bits, bob_bits = message_bits(m)
    t = Transcript(m, k, k * alice_bits, k * bob_bits, k * log2_int(m),
                   tuple(answers), tuple(a_msgs), tuple(b_msgs))
    return answers, t


# -- exhaustive correctness ----------------------------------------------------

@dataclass(frozen=True)
class ExactnessRow:
    x: Coloring
    y: Matching
    leaves: int
    violations: int
    probability: float


def iter_leaves(x: Coloring, y: Matching, shared: StateVector | None = None):
    """Yield (edge, outcome_branch, hadamard_state) for every nonzero leaf."""
    s = apply_phase(shared if shared is not None else prepare_epr(x.m), x)
    for edge_branch in branch_matching(s, y):
        h = hadamard_all(edge_branch.post_state)
        for leaf in branch_computational(h):
            yield edge_branch, leaf, h


def exactness_table(m: int, referee: Referee = referee) -> list[ExactnessRow]:
    """Walk every branch of the EPR protocol for every (x, y) and check each leaf."""
    check_m(m)
    if m > EXHAUSTIVE_MAX_M:
        raise CapError(f"exhaustive enumeration cap is m <= {EXHAUSTIVE_MAX_M} "
                       f"(m={m} needs {2**m} x {double_factorial(m - 1)} input pairs)")
    rows = []
    matchings = enumerate_matchings(m)
    for xi in range(2**m):
        x = Coloring.from_index(xi, m)
        for y in matchings:
            leaves = bad = 0
            mass = 0.0
            for edge_branch, leaf, _ in iter_leaves(x, y):
                a = edge_branch.label
                i, j = y.edges[a]
                k, l = leaf.label
                ans = referee(k, (a, i, j, l))
                leaves += 1
                mass += edge_branch.probability * leaf.probability
                if not hm_member(x, y, ans):
                    bad += 1
            rows.append(ExactnessRow(x, y, leaves, bad, mass))
    return rows


def exactness_exhaustive(m: int, referee: Referee = referee) -> bool:
    return all(r.violations == 0 for r in exactness_table(m, referee))


def amplitude_law_violations(m: int) -> int:
    """Count (x, y, edge, k, l) where nonzero amplitude disagrees with
    (k^l).(i^j) == x_i ^ x_j. Exhaustive over all inputs and branches."""
    check_m(m)
    if m > EXHAUSTIVE_MAX_M:
        raise CapError(f"amplitude-law sweep is capped at m <= {EXHAUSTIVE_MAX_M}, got {m}")
    kl = np.arange(m)[:, None] ^ np.arange(m)[None, :]
    bad = 0
    for xi in range(2**m):
        x = Coloring.from_index(xi, m)
        s = apply_phase(prepare_epr(m), x)
        for y in enumerate_matchings(m):
            for br in branch_matching(s, y):
                i, j = y.edges[br.label]
                h = hadamard_all(br.post_state).matrix()
                predicted = dot2_table(m)[kl, i ^ j] == (x.bits[i] ^ x.bits[j])
                bad += int(np.sum((np.abs(h) > 1e-9) != predicted))
    return bad


# -- maximally mixed substitution -------------------------------------------------

@dataclass(frozen=True)
class DepolarizationReport:
    m: int
    e_qubits: int
    success_exact: float
    lower_bound: float
    success_with_shared: float = 1.0

    @property
    def bound_satisfied(self) -> bool:
        return self.success_exact >= self.lower_bound


@lru_cache(maxsize=None)
def _parity_fraction(m: int, i: int, j: int, parity: int) -> Fraction:
    """Fraction of all colorings x with x_i ^ x_j == parity."""
    hits = int(np.count_nonzero(pair_parity(m, i, j) == parity))
    return Fraction(hits, 2**m)


def _representative_matching(m: int, b: int, partner: int) -> Matching:
    rest = [v for v in range(m) if v not in (b, partner)]
    return Matching(((b, partner),) + tuple(zip(rest[::2], rest[1::2])))


def depolarized_success_exact(m: int) -> DepolarizationReport:
    """Exact success of the HM protocol when the shared state is maximally mixed.

    Every component of the mixture is a basis state |a>|b>, on which Alice's
    phase is global, so the leaf distribution does not depend on x and the
    average over x is the fraction of colorings the answer is correct for.
    Bob's outcome is the edge through b, so the average over uniform y only
    depends on b's partner, which is uniform over the other m-1 nodes
    ((m-3)!! of the (m-1)!! matchings contain a given pair).
    """
    check_m(m)
    if m > DEPOLARIZED_MAX_M:
        raise CapError(f"depolarized_success_exact is capped at m <= {DEPOLARIZED_MAX_M}, got {m}")
    n = log2_int(m)
    pair_weight = Fraction(double_factorial(m - 3), double_factorial(m - 1))
    kl = np.arange(m)[:, None] ^ np.arange(m)[None, :]
    zero = Coloring((0,) * m)
    total = 0.0
    for w, comp in maximally_mixed_ensemble(m).components:
        label = comp.basis_label()
        if label is None:
            raise ValueError("exact depolarized evaluation needs computational-basis components")
        _, b = label
        s = apply_phase(comp, zero)
        comp_total = 0.0
        for partner in range(m):
            if partner == b:
                continue
            y = _representative_matching(m, b, partner)
            for br in branch_matching(s, y):
                i, j = y.edges[br.label]
                probs = np.abs(hadamard_all(br.post_state).matrix()) ** 2
                par = dot2_table(m)[kl, i ^ j]
                hit = (float(probs[par == 0].sum()) * float(_parity_fraction(m, i, j, 0))
                       + float(probs[par == 1].sum()) * float(_parity_fraction(m, i, j, 1)))
                comp_total += float(pair_weight) * br.probability * hit
        total += w * comp_total
    e = 2 * n
    return DepolarizationReport(m=m, e_qubits=e, success_exact=total, lower_bound=1.0 / 2**e)


def sample_mixed_state(m: int, rng: np.random.Generator) -> StateVector:
    """Draw a component of the maximally mixed ensemble."""
    v = int(rng.integers(0, m * m))
    return StateVector.basis(m, v // m, v % m)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    runs: int


def depolarized_success_product(m: int, k: int, runs: int, rng: np.random.Generator) -> Estimate:
    """Monte Carlo all-coordinates-correct rate with maximally mixed shared states."""
    check_m(m)
    if k < 1:
        raise ValueError("k must be >= 1")
    if runs <= 0:
        raise ValueError("runs must be positive")
    hits = 0
    for _ in range(runs):
        xs = [random_coloring(m, rng) for _ in range(k)]
        ys = [random_matching(m, rng) for _ in range(k)]
        shared = [sample_mixed_state(m, rng) for _ in range(k)]
        answers, _ = run_hmk_smp(xs, ys, rng, shared=shared)
        hits += hmk_member(ProductInstance(xs, ys, answers))
    p = hits / runs
    return Estimate(p, math.sqrt(p * (1 - p) / runs), runs)


def single_copy_outcomes(m: int) -> dict[bool, float]:
    """Probability of a correct / wrong answer for one depolarized copy, by
    walking every (x, y, mixture component, branch) leaf. Small m only."""
    check_m(m)
    if m > 4:
        raise CapError(f"full leaf walk is capped at m <= 4, got {m}")
    out = {True: 0.0, False: 0.0}
    matchings = enumerate_matchings(m)
    weight_xy = 1.0 / (2**m * len(matchings))
    for xi in range(2**m):
        x = Coloring.from_index(xi, m)
        for y in matchings:
            for w, comp in maximally_mixed_ensemble(m).components:
                for edge_branch, leaf, _ in iter_leaves(x, y, shared=comp):
                    a = edge_branch.label
                    i, j = y.edges[a]
                    ok = hm_member(x, y, referee(leaf.label[0], (a, i, j, leaf.label[1])))
                    out[ok] += weight_xy * w * edge_branch.probability * leaf.probability
    return out


def depolarized_success_product_exact(m: int, k: int) -> float:
    """All-correct probability of k depolarized copies, enumerating the joint
    outcome tree built from each copy's (correct, wrong) branches."""
    if k < 1:
        raise ValueError("k must be >= 1")
    single = single_copy_outcomes(m)
    total = 0.0
    for outcome in itertools.product((True, False), repeat=k):
        p = 1.0
        for o in outcome:
            p *= single[o]
        if all(outcome):
            total += p
    return total
