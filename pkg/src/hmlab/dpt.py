"""Entropy and biased-pair machinery behind the HM direct product bound.

Distributions over colorings are dense probability vectors indexed like
:mod:`hmlab.relations` coloring indices.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .relations import (
    CapError,
    Coloring,
    Matching,
    ProductInstance,
    all_answers,
    answer_tuples,
    check_m,
    coloring_bits,
    enumerate_matchings,
    hmk_member,
    log2_int,
    matching_tuples,
    pair_parity,
    random_matching,
    restriction_counts,
    tuple_from_index,
)

log = logging.getLogger(__name__)

MAX_DIST_M = 16
MAX_CLAIM3_M = 8
MAX_LEMMA1_BITS = 16
BIAS_THRESHOLD = Fraction(2, 3)
DELTA = 2.0**-10
PROB_TOL = 1e-12


def sigma(m: int) -> float:
    return math.sqrt(m - 1) / 576


@dataclass(frozen=True)
class DptParameters:
    m: int
    sigma: float
    delta: float = DELTA
    threshold: float = float(BIAS_THRESHOLD)

    @classmethod
    def for_m(cls, m: int) -> "DptParameters":
        return cls(m, sigma(m))


def lemma1_premises(m: int, delta: float = DELTA) -> dict[str, bool]:
    """Which parameter premises of the set-evolution lemma hold for HM at this m.

    |Z_m| = m for HM, so the delta condition reads log(1/delta) >= 4 + 6.
    """
    lg = math.log2(m)
    z_m = m
    return {
        "sigma_range": lg <= sigma(m) <= m,
        "delta_condition": math.log2(1 / delta) >= 4 + 6 * math.log2(z_m) / lg - 1e-12,
        "m_at_least_64": m >= 64,
    }


def first_m_all_premises(max_log_m: int = 64) -> int | None:
    for n in range(1, max_log_m + 1):
        if all(lemma1_premises(2**n).values()):
            return 2**n
    return None


class ColoringDistribution:
    __slots__ = ("m", "weights")

    def __init__(self, m: int, weights):
        check_m(m)
        if m > MAX_DIST_M:
            raise CapError(f"distribution cap is m <= {MAX_DIST_M}, got {m}")
        w = np.asarray(weights, dtype=float)
        if w.shape != (2**m,):
            raise ValueError(f"weights must have length 2^{m}, got shape {w.shape}")
        if np.any(w < 0):
            raise ValueError("negative probability")
        if abs(w.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.flags.writeable = False
        self.m = m
        self.weights = w

    @classmethod
    def uniform(cls, m: int) -> "ColoringDistribution":
        return cls(m, np.full(2**m, 2.0**-m))

    @classmethod
    def uniform_over(cls, m: int, mask) -> "ColoringDistribution":
        mask = np.asarray(mask, dtype=bool)
        return cls(m, mask / mask.sum())

    @classmethod
    def point(cls, x: Coloring) -> "ColoringDistribution":
        w = np.zeros(2**x.m)
        w[x.index] = 1.0
        return cls(x.m, w)

    def pair_parity_prob(self, i: int, j: int) -> float:
        """Pr[x_i xor x_j = 0]."""
        return float(self.weights[pair_parity(self.m, i, j) == 0].sum())

    def bit_marginals(self) -> np.ndarray:
        """Pr[x_i = 1] for each node."""
        return self.weights @ coloring_bits(self.m)


def shannon_entropy(D: ColoringDistribution) -> float:
    w = D.weights[D.weights > 0]
    return float(-(w * np.log2(w)).sum())


def binary_entropy(p: float) -> float:
    if not 0 <= p <= 1:
        raise ValueError(f"p={p} outside [0, 1]")
    if p in (0, 1):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def _pair_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class BiasedPairSet:
    pairs: frozenset
    threshold: float
    bias: dict  # pair -> max_b Pr[x_i ^ x_j = b]
    m: int

    def __post_init__(self):
        for p in self.pairs:
            if self.bias[p] < self.threshold - PROB_TOL:
                raise ValueError(f"pair {p} has bias {self.bias[p]} below threshold {self.threshold}")

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_edges(cls, edges, m: int, threshold: float = float(BIAS_THRESHOLD)) -> "BiasedPairSet":
        """A pair set without a source distribution; every pair is taken as fully biased."""
        pairs = frozenset(_pair_key(*e) for e in edges)
        return cls(pairs, threshold, {p: 1.0 for p in pairs}, m)


def biased_pairs(D: ColoringDistribution, threshold: float = float(BIAS_THRESHOLD)) -> BiasedPairSet:
    pairs, bias = set(), {}
    for i, j in itertools.combinations(range(D.m), 2):
        p0 = D.pair_parity_prob(i, j)
        b = max(p0, 1.0 - p0)
        if b >= threshold - PROB_TOL:
            pairs.add((i, j))
            bias[(i, j)] = b
    return BiasedPairSet(frozenset(pairs), threshold, bias, D.m)


@dataclass(frozen=True)
class PairForest:
    edges: tuple[tuple[int, int], ...]
    source: BiasedPairSet

    def __len__(self) -> int:
        return len(self.edges)

    def vertex_count(self) -> int:
        return len({v for e in self.source.pairs for v in e})

    def component_count(self) -> int:
        nodes = {v for e in self.source.pairs for v in e}
        return len(nodes) - len(self.edges)


def spanning_forest(C: BiasedPairSet) -> PairForest:
    """One spanning tree per connected component (union-find, sorted edge order)."""
    parent: dict[int, int] = {}

    def find(v: int) -> int:
        parent.setdefault(v, v)
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    kept = []
    for i, j in sorted(C.pairs):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            kept.append((i, j))
    forest = PairForest(tuple(kept), C)
    assert len(forest) >= math.sqrt(len(C) / 2) - 1e-12, "forest smaller than sqrt(|C|/2)"
    return forest


def entropy_loss_bound(forest: PairForest, sharp: bool = False) -> float:
    """Certified lower bound on m - H(D) from a forest of biased pairs.

    Default: |C'| * (1 - h(threshold)). With ``sharp`` each edge contributes
    1 - h(bias) using its recorded bias instead.
    """
    if sharp:
        return sum(1.0 - binary_entropy(forest.source.bias[e]) for e in forest.edges)
    return len(forest) * (1.0 - binary_entropy(forest.source.threshold))


def rephrase_check(m: int) -> bool:
    """Uniform matching plus uniform edge index gives a uniform unordered pair."""
    counts: dict[tuple[int, int], int] = {p: 0 for p in itertools.combinations(range(m), 2)}
    matchings = enumerate_matchings(m)
    for y in matchings:
        for e in y.edges:
            counts[e] += 1
    total = len(matchings) * (m // 2)
    target = Fraction(1, len(counts))
    return all(Fraction(c, total) == target for c in counts.values())


@dataclass(frozen=True)
class Claim3Report:
    m: int
    entropy: float
    sigma: float
    premise_met: bool
    biased_mass: Fraction
    delta_over_m: float

    @property
    def implication_ok(self) -> bool:
        return (not self.premise_met) or self.biased_mass <= self.delta_over_m

    def csv_row(self) -> str:
        return (f"{self.m},{self.entropy:.12g},{self.sigma:.12g},{self.premise_met},"
                f"{float(self.biased_mass):.12g},{self.delta_over_m:.12g},{self.implication_ok}")


CLAIM3_CSV_HEADER = "m,H,sigma,premise_met,biased_mass,delta_over_m,implication_ok"


def check_claim3(D: ColoringDistribution, delta: float = DELTA) -> Claim3Report:
    """Exact mass of answers (y, z) that D supports with probability >= 2/3."""
    m = D.m
    if m > MAX_CLAIM3_M:
        raise CapError(f"check_claim3 enumerates matchings; cap is m <= {MAX_CLAIM3_M}, got {m}")
    p0 = {e: D.pair_parity_prob(*e) for e in itertools.combinations(range(m), 2)}
    threshold = float(BIAS_THRESHOLD) - PROB_TOL
    biased = total = 0
    for y in enumerate_matchings(m):
        for z in all_answers(m):
            e = y.edges[z.edge_index]
            prob = p0[e] if z.parity == 0 else 1.0 - p0[e]
            biased += prob >= threshold
            total += 1
    h = shannon_entropy(D)
    s = sigma(m)
    return Claim3Report(m, h, s, h >= m - s, Fraction(biased, total), delta / m)


# -- set evolution under restrictions -------------------------------------------------

@dataclass(frozen=True)
class Lemma1Result:
    probability: float
    stderr: float
    method: str
    trials: int
    threshold: float


def _lemma1_setup(m: int, k: int, B) -> tuple[np.ndarray, float]:
    check_m(m)
    if k < 1:
        raise ValueError("k must be >= 1")
    if m * k > MAX_LEMMA1_BITS:
        raise CapError(f"lemma1_experiment needs k*m <= {MAX_LEMMA1_BITS}, got {k * m}")
    mask = np.asarray(B, dtype=bool)
    if mask.shape != (2 ** (m * k),):
        raise ValueError(f"B must be a mask of length 2^{m * k}")
    if not mask.any():
        raise ValueError("B must be nonempty")
    return mask, (2 / 3) ** (k / log2_int(m))


def lemma1_event(mask: np.ndarray, ys: Sequence[Matching], threshold: float) -> bool:
    """Whether some z in Z^k keeps at least threshold * |B| elements of B."""
    best = restriction_counts(mask, ys).max()
    return bool(best >= threshold * mask.sum() - 1e-9)


def lemma1_experiment(m: int, k: int, B, trials: int, rng: np.random.Generator | None = None,
                      exact: bool = False) -> Lemma1Result:
    """Pr over uniform y in Y^k that some z keeps a (2/3)^{k/log m} fraction of B.

    The existence of z is decided exactly for each y by maximizing over every
    z in Z^k. ``exact`` enumerates all y-tuples instead of sampling.
    """
    mask, thr = _lemma1_setup(m, k, B)
    if exact:
        ys_all = matching_tuples(m, k)
        hits = sum(lemma1_event(mask, ys, thr) for ys in ys_all)
        return Lemma1Result(hits / len(ys_all), 0.0, "exact", len(ys_all), thr)
    if trials < 1 or rng is None:
        raise ValueError("Monte Carlo mode needs trials >= 1 and an rng")
    hits = 0
    for _ in range(trials):
        ys = tuple(random_matching(m, rng) for _ in range(k))
        hits += lemma1_event(mask, ys, thr)
    p = hits / trials
    return Lemma1Result(p, math.sqrt(p * (1 - p) / trials), "monte_carlo", trials, thr)


def lemma1_bruteforce(m: int, k: int, B) -> float:
    """Same probability as exact mode, by testing membership tuple by tuple."""
    mask, thr = _lemma1_setup(m, k, B)
    members = [tuple_from_index(int(v), m, k) for v in np.flatnonzero(mask)]
    ys_all = matching_tuples(m, k)
    zs_all = answer_tuples(m, k)
    hits = 0
    for ys in ys_all:
        best = max(sum(hmk_member(ProductInstance(xs, ys, zs)) for xs in members) for zs in zs_all)
        hits += best >= thr * len(members) - 1e-9
    return hits / len(ys_all)


@dataclass(frozen=True)
class TraceStep:
    step: int
    coordinate: int
    coordinate_entropy: float
    in_high_entropy_set: bool
    size_before: int
    size_after: int

    @property
    def good(self) -> bool:
        return 3 * self.size_after >= 2 * self.size_before


def restriction_trace(m: int, k: int, B, ys: Sequence[Matching], zs) -> list[TraceStep]:
    """Restrict B one coordinate at a time, always taking an unfixed coordinate
    of largest marginal entropy under the uniform distribution on the current
    set, and record each step. The high-entropy set is {j : e_j >= m - sigma(m)}.
    """
    mask, _ = _lemma1_setup(m, k, B)
    mask = mask.copy()
    bits_per = 2**m
    s = sigma(m)
    remaining = list(range(k))
    steps = []
    for step in range(k):
        n = int(mask.sum())
        if n == 0:
            break
        tensor = mask.reshape((bits_per,) * k).astype(float) / n
        ent = {}
        for c in remaining:
            marg = tensor.sum(axis=tuple(a for a in range(k) if a != c))
            nz = marg[marg > 0]
            ent[c] = float(-(nz * np.log2(nz)).sum())
        c = max(remaining, key=lambda j: (ent[j], -j))
        remaining.remove(c)
        z = zs[c]
        i, j = ys[c].edges[z.edge_index]
        par = pair_parity(m, i, j) == z.parity
        keep = np.broadcast_to(par.reshape([bits_per if a == c else 1 for a in range(k)]),
                               (bits_per,) * k).reshape(-1)
        new = mask & keep
        steps.append(TraceStep(step, c, ent[c], ent[c] >= m - s, n, int(new.sum())))
        mask = new
    return steps


# -- distribution files ------------------------------------------------------------------

def dumps_distribution(D: ColoringDistribution) -> str:
    lines = [f"m={D.m}"]
    for v in np.flatnonzero(D.weights > 0):
        lines.append(f"{Coloring.from_index(int(v), D.m)} {float(D.weights[v])!r}")
    return "\n".join(lines) + "\n"


def loads_distribution(text: str) -> ColoringDistribution:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("m="):
        raise ValueError("distribution file must start with 'm=<int>'")
    m = int(lines[0][2:])
    w = np.zeros(2**m)
    for ln in lines[1:]:
        bits, weight = ln.split()
        x = Coloring.parse(bits)
        if x.m != m:
            raise ValueError(f"coloring {bits} does not have length {m}")
        w[x.index] += float(weight)
    total = w.sum()
    if total <= 0:
        raise ValueError("distribution has no mass")
    if abs(total - 1.0) > 1e-9:
        log.warning("distribution weights sum to %.12g; normalizing", total)
    return ColoringDistribution(m, w / total)


# -- corpus ----------------------------------------------------------------------------

def _parity_mask(m: int, constraints) -> np.ndarray:
    mask = np.ones(2**m, dtype=bool)
    for i, j, b in constraints:
        mask &= pair_parity(m, i, j) == b
    return mask


def planted_corpus() -> list[tuple[str, ColoringDistribution]]:
    """Hand-built families that put mass on specific parities, including the
    exact-threshold case where a pair's parity probability is exactly 2/3."""
    out = []
    for m in (4, 8):
        out.append((f"uniform_m{m}", ColoringDistribution.uniform(m)))
        out.append((f"point_m{m}", ColoringDistribution.point(Coloring.from_index(5, m))))
        out.append((f"pair01_m{m}", ColoringDistribution.uniform_over(m, _parity_mask(m, [(0, 1, 0)]))))
        chain = [(v, v + 1, v % 2) for v in range(m - 1)]
        out.append((f"chain_m{m}", ColoringDistribution.uniform_over(m, _parity_mask(m, chain))))
        pm = ColoringDistribution.uniform_over(m, _parity_mask(m, [(0, m - 1, 1)])).weights
        unif = ColoringDistribution.uniform(m).weights
        # mixing weight 1/3 gives Pr[x_0 ^ x_{m-1} = 1] = 2/3 exactly
        out.append((f"boundary_m{m}", ColoringDistribution(m, pm / 3 + 2 * unif / 3)))
        for eps in (0.1, 0.5, 0.9):
            out.append((f"mix{eps}_m{m}", ColoringDistribution(m, eps * pm + (1 - eps) * unif)))
    m = 16
    five = [(2 * t, 2 * t + 1, t % 2) for t in range(5)]
    out.append(("five_pairs_m16", ColoringDistribution.uniform_over(m, _parity_mask(m, five))))
    return out


def random_corpus(count: int, rng: np.random.Generator, ms=(4, 8)) -> list[tuple[str, ColoringDistribution]]:
    """Dirichlet distributions at mixed concentrations, split evenly over ``ms``."""
    alphas = (0.05, 0.3, 1.0, 5.0)
    out = []
    for n in range(count):
        m = ms[n % len(ms)]
        alpha = alphas[(n // len(ms)) % len(alphas)]
        w = rng.dirichlet(np.full(2**m, alpha))
        out.append((f"dirichlet{alpha}_m{m}_{n}", ColoringDistribution(m, w / w.sum())))
    return out


def near_uniform_corpus(count: int, rng: np.random.Generator, m: int = 8,
                        perturbation: float = 2.0**-20) -> list[tuple[str, ColoringDistribution]]:
    """Uniform weights perturbed by at most ``perturbation`` each, mass preserved."""
    out = []
    n_x = 2**m
    for n in range(count):
        d = rng.uniform(-perturbation, perturbation, size=n_x)
        d -= d.mean()
        d *= perturbation / max(perturbation, float(np.abs(d).max()))
        w = np.full(n_x, 1.0 / n_x) + d
        out.append((f"near_uniform_m{m}_{n}", ColoringDistribution(m, w / w.sum())))
    return out


def certified_loss_ok(D: ColoringDistribution, tol: float = 1e-9) -> tuple[bool, float, float]:
    """(holds, actual loss m - H(D), certified bound) for one distribution."""
    forest = spanning_forest(biased_pairs(D))
    actual = D.m - shannon_entropy(D)
    bound = entropy_loss_bound(forest)
    return actual >= bound - tol, actual, bound
