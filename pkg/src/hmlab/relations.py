"""Hidden Matching relation HM_m and its k-fold direct product.

Nodes are 0-based and identified with log2(m)-bit strings. A coloring is
indexed by reading its bits as a binary number with ``x_0`` as the most
significant bit, so lexicographic order of bit strings equals index order.
Sets of colorings (and of coloring tuples) are boolean masks over those
indices; a k-tuple's index is the concatenation of its coordinates' bits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_MASK_M = 24
MAX_ENUM_M = 12


class CapError(ValueError):
    """A documented size cap was exceeded."""


def is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


def log2_int(m: int) -> int:
    if not is_power_of_two(m):
        raise ValueError(f"m={m} is not a power of two")
    return m.bit_length() - 1


def check_m(m: int) -> None:
    if not isinstance(m, (int, np.integer)) or m < 2 or not is_power_of_two(int(m)):
        raise ValueError(f"m must be a power of two >= 2, got {m!r}")


def double_factorial(n: int) -> int:
    """n!! for n >= -1 (with (-1)!! = 0!! = 1)."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@dataclass(frozen=True)
class Coloring:
    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        check_m(len(self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("coloring bits must be 0 or 1")

    @property
    def m(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        v = 0
        for b in self.bits:
            v = (v << 1) | b
        return v

    @classmethod
    def from_index(cls, index: int, m: int) -> "Coloring":
        if not 0 <= index < 2**m:
            raise ValueError(f"index {index} out of range for m={m}")
        return cls(tuple((index >> (m - 1 - i)) & 1 for i in range(m)))

    @classmethod
    def parse(cls, text: str) -> "Coloring":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"bad coloring string {text!r}")
        return cls(tuple(int(c) for c in text))

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


@dataclass(frozen=True)
class Matching:
    """Perfect matching stored canonically: pairs (i, j) with i < j, sorted by i.

    Any even number of nodes is accepted here (matching combinatorics are
    checked at m=6); the HM relation itself needs m a power of two.
    """

    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = []
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop {{{i},{j}}} in matching")
            edges.append((min(i, j), max(i, j)))
        edges.sort()
        m = 2 * len(edges)
        nodes = sorted(v for e in edges for v in e)
        if m == 0 or nodes != list(range(m)):
            raise ValueError(f"edges {self.edges!r} are not a perfect matching of 0..{m - 1}")
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def m(self) -> int:
        return 2 * len(self.edges)

    def edge_of(self, node: int) -> int:
        """Index of the edge containing ``node``."""
        for a, (i, j) in enumerate(self.edges):
            if node == i or node == j:
                return a
        raise ValueError(f"node {node} not in matching")

    @classmethod
    def parse(cls, text: str) -> "Matching":
        try:
            pairs = [tuple(int(v) for v in part.split("-")) for part in text.strip().split(",")]
        except ValueError as exc:
            raise ValueError(f"bad matching string {text!r}") from exc
        if any(len(p) != 2 for p in pairs):
            raise ValueError(f"bad matching string {text!r}")
        return cls(tuple(pairs))

    def __str__(self) -> str:
        return ",".join(f"{i}-{j}" for i, j in self.edges)


@dataclass(frozen=True)
class HMAnswer:
    edge_index: int
    parity: int

    def __post_init__(self):
        if self.edge_index < 0:
            raise ValueError("edge_index must be nonnegative")
        if self.parity not in (0, 1):
            raise ValueError("parity must be 0 or 1")

    @classmethod
    def parse(cls, text: str) -> "HMAnswer":
        a, _, b = text.strip().partition(":")
        return cls(int(a), int(b))

    def __str__(self) -> str:
        return f"{self.edge_index}:{self.parity}"


@dataclass(frozen=True)
class ProductInstance:
    xs: tuple[Coloring, ...]
    ys: tuple[Matching, ...]
    zs: tuple[HMAnswer, ...]

    def __post_init__(self):
        for name in ("xs", "ys", "zs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        k = len(self.xs)
        if k < 1 or len(self.ys) != k or len(self.zs) != k:
            raise ValueError(
                f"length mismatch: {len(self.xs)} colorings, {len(self.ys)} matchings, {len(self.zs)} answers"
            )
        ms = {x.m for x in self.xs} | {y.m for y in self.ys}
        if len(ms) != 1:
            raise ValueError(f"coordinates do not share m: {sorted(ms)}")

    @property
    def k(self) -> int:
        return len(self.xs)


def _check_pair(x: Coloring, y: Matching) -> None:
    if x.m != y.m:
        raise ValueError(f"dimension mismatch: coloring has m={x.m}, matching has m={y.m}")


def hm_member(x: Coloring, y: Matching, z: HMAnswer) -> bool:
    _check_pair(x, y)
    if z.edge_index >= len(y.edges):
        raise ValueError(f"edge_index {z.edge_index} out of range for m={y.m}")
    i, j = y.edges[z.edge_index]
    return z.parity == x.bits[i] ^ x.bits[j]


def hmk_member(p: ProductInstance) -> bool:
    return all(hm_member(x, y, z) for x, y, z in zip(p.xs, p.ys, p.zs))


def good_answers(x: Coloring, y: Matching) -> frozenset[HMAnswer]:
    _check_pair(x, y)
    return frozenset(HMAnswer(a, x.bits[i] ^ x.bits[j]) for a, (i, j) in enumerate(y.edges))


def all_answers(m: int) -> list[HMAnswer]:
    """Z_m in lexicographic order: (0,0), (0,1), (1,0), ..."""
    return [HMAnswer(a, b) for a in range(m // 2) for b in (0, 1)]


def _pairings(nodes: list[int]):
    if not nodes:
        yield []
        return
    first, rest = nodes[0], nodes[1:]
    for idx, partner in enumerate(rest):
        for tail in _pairings(rest[:idx] + rest[idx + 1:]):
            yield [(first, partner)] + tail


@lru_cache(maxsize=None)
def _matchings_cached(m: int) -> tuple[Matching, ...]:
    return tuple(Matching(tuple(p)) for p in _pairings(list(range(m))))


def enumerate_matchings(m: int) -> list[Matching]:
    """All perfect matchings on m nodes, (m-1)!! of them, capped at m <= 12."""
    if m < 2 or m % 2:
        raise ValueError(f"m must be even and >= 2, got {m}")
    if m > MAX_ENUM_M:
        raise CapError(f"enumerate_matchings cap is m <= {MAX_ENUM_M}, got {m}")
    return list(_matchings_cached(m))


def random_matching(m: int, rng: np.random.Generator) -> Matching:
    if m < 2 or m % 2:
        raise ValueError(f"m must be even and >= 2, got {m}")
    perm = rng.permutation(m)
    return Matching(tuple((int(perm[2 * t]), int(perm[2 * t + 1])) for t in range(m // 2)))


def random_coloring(m: int, rng: np.random.Generator) -> Coloring:
    check_m(m)
    return Coloring(tuple(int(b) for b in rng.integers(0, 2, size=m)))


def restrict(A: Iterable[Coloring], y: Matching, z: HMAnswer) -> set[Coloring]:
    """A_{|y,z}: members of A for which z is a correct answer under y."""
    return {x for x in A if hm_member(x, y, z)}


# -- bitset machinery ---------------------------------------------------------

@lru_cache(maxsize=32)
def coloring_bits(m: int) -> np.ndarray:
    """(2^m, m) uint8 table; row v holds the bits of coloring index v."""
    if m > MAX_MASK_M:
        raise CapError(f"coloring tables are capped at m <= {MAX_MASK_M}, got {m}")
    v = np.arange(2**m, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    table = ((v[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    table.flags.writeable = False
    return table


@lru_cache(maxsize=4096)
def pair_parity(m: int, i: int, j: int) -> np.ndarray:
    """x_i xor x_j for every coloring index, as a uint8 vector."""
    bits = coloring_bits(m)
    out = bits[:, i] ^ bits[:, j]
    out.flags.writeable = False
    return out


def restrict_mask(mask: np.ndarray, y: Matching, z: HMAnswer) -> np.ndarray:
    """Bitset form of :func:`restrict` over all 2^m colorings."""
    m = y.m
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (2**m,):
        raise ValueError(f"mask must have length 2^{m}, got shape {mask.shape}")
    if z.edge_index >= len(y.edges):
        raise ValueError(f"edge_index {z.edge_index} out of range for m={m}")
    i, j = y.edges[z.edge_index]
    return mask & (pair_parity(m, i, j) == z.parity)


@lru_cache(maxsize=4096)
def constraint_matrix(y: Matching) -> np.ndarray:
    """(|Z_m|, 2^m) bool matrix: entry [z, x] says (x, y, z) is in HM.

    Rows follow :func:`all_answers` order, i.e. row 2a+b is answer (a, b).
    """
    m = y.m
    check_m(m)
    rows = np.empty((m, 2**m), dtype=bool)
    for a, (i, j) in enumerate(y.edges):
        par = pair_parity(m, i, j)
        rows[2 * a] = par == 0
        rows[2 * a + 1] = par == 1
    rows.flags.writeable = False
    return rows


def restriction_counts(mask: np.ndarray, ys: Sequence[Matching]) -> np.ndarray:
    """|B_{|y,z}| for every z in Z^k, for a set B of k-tuples given as a mask.

    Returns an integer array of shape (|Z_m|,) * k indexed by per-coordinate
    answer rows (see :func:`constraint_matrix`).
    """
    k = len(ys)
    m = ys[0].m
    if any(y.m != m for y in ys):
        raise ValueError("matchings do not share m")
    mask = np.asarray(mask)
    if mask.shape != (2 ** (m * k),):
        raise ValueError(f"mask must have length 2^{m * k}, got shape {mask.shape}")
    t = mask.astype(np.int64).reshape((2**m,) * k)
    # contract the leading x-axis each time; the new z-axis lands at the end
    for y in ys:
        t = np.tensordot(t, constraint_matrix(y).astype(np.int64), axes=([0], [1]))
    return t


def tuple_index(xs: Sequence[Coloring]) -> int:
    m = xs[0].m
    v = 0
    for x in xs:
        v = (v << m) | x.index
    return v


def tuple_from_index(index: int, m: int, k: int) -> tuple[Coloring, ...]:
    mask = 2**m - 1
    return tuple(Coloring.from_index((index >> (m * (k - 1 - c))) & mask, m) for c in range(k))


def matching_tuples(m: int, k: int) -> list[tuple[Matching, ...]]:
    return list(itertools.product(enumerate_matchings(m), repeat=k))


def answer_tuples(m: int, k: int) -> list[tuple[HMAnswer, ...]]:
    return list(itertools.product(all_answers(m), repeat=k))
