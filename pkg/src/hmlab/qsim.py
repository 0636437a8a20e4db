"""Two-register pure-state simulator for the Hidden Matching protocol.

A state holds m*m complex amplitudes; basis pair (i, j) means Alice's
register reads i and Bob's reads j, stored at flat index i*m + j. Mixed
shared states are ensembles of pure states.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Callable, Sequence

import numpy as np

from .relations import Coloring, Matching, check_m

ZERO_TOL = 1e-9
NORM_TOL = 1e-9
MAX_M = 256


def _check_dim(m: int) -> None:
    check_m(m)
    if m > MAX_M:
        raise ValueError(f"simulator cap is m <= {MAX_M}, got {m}")


class StateVector:
    __slots__ = ("m", "amplitudes")

    def __init__(self, m: int, amplitudes, *, check: bool = True):
        _check_dim(m)
        amps = np.asarray(amplitudes, dtype=complex).reshape(m * m)
        if check:
            norm = float(np.vdot(amps, amps).real)
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"state is not normalized (squared norm {norm})")
        amps.flags.writeable = False
        self.m = m
        self.amplitudes = amps

    @classmethod
    def basis(cls, m: int, i: int, j: int) -> "StateVector":
        amps = np.zeros(m * m, dtype=complex)
        amps[i * m + j] = 1.0
        return cls(m, amps, check=False)

    def matrix(self) -> np.ndarray:
        """Amplitudes as an (Alice, Bob) m x m view."""
        return self.amplitudes.reshape(self.m, self.m)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def amplitude(self, i: int, j: int) -> complex:
        return complex(self.amplitudes[i * self.m + j])

    def basis_label(self) -> tuple[int, int] | None:
        """(i, j) if this is a computational basis state up to phase."""
        nz = np.flatnonzero(np.abs(self.amplitudes) > ZERO_TOL)
        if len(nz) != 1:
            return None
        return divmod(int(nz[0]), self.m)

    def allclose(self, other: "StateVector", atol: float = ZERO_TOL) -> bool:
        return self.m == other.m and np.allclose(self.amplitudes, other.amplitudes, atol=atol, rtol=0)

    def __repr__(self) -> str:
        return f"StateVector(m={self.m}, nonzero={int(np.sum(np.abs(self.amplitudes) > ZERO_TOL))})"


@dataclass(frozen=True)
class Ensemble:
    components: tuple[tuple[float, StateVector], ...]

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("empty ensemble")
        if any(w < 0 for w, _ in comps):
            raise ValueError("negative ensemble weight")
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"ensemble weights sum to {total}")
        if len({s.m for _, s in comps}) != 1:
            raise ValueError("ensemble components do not share m")

    @property
    def m(self) -> int:
        return self.components[0][1].m

    def sample(self, rng: np.random.Generator) -> StateVector:
        weights = np.array([w for w, _ in self.components])
        idx = int(np.searchsorted(np.cumsum(weights), rng.random() * weights.sum(), side="right"))
        return self.components[min(idx, len(self.components) - 1)][1]


class BranchOutcome:
    """One outcome of a measurement. The post-measurement state is built on demand."""

    __slots__ = ("label", "probability", "_state", "_build")

    def __init__(self, label, probability: float, post_state: StateVector | None = None,
                 build: Callable[[], StateVector] | None = None):
        self.label = label
        self.probability = probability
        self._state = post_state
        self._build = build

    @property
    def post_state(self) -> StateVector:
        if self._state is None:
            self._state = self._build()
        return self._state

    def __repr__(self) -> str:
        return f"BranchOutcome(label={self.label!r}, probability={self.probability:.12g})"


def prepare_epr(m: int) -> StateVector:
    """log2(m) EPR pairs: (1/sqrt m) sum_i |i>|i>."""
    _check_dim(m)
    amps = np.zeros((m, m), dtype=complex)
    np.fill_diagonal(amps, 1 / np.sqrt(m))
    return StateVector(m, amps)


def apply_phase(s: StateVector, x: Coloring) -> StateVector:
    """Alice's phase oracle: |i>|j> -> (-1)^{x_i} |i>|j>."""
    if x.m != s.m:
        raise ValueError(f"dimension mismatch: coloring m={x.m}, state m={s.m}")
    signs = 1 - 2 * np.asarray(x.bits, dtype=float)
    return StateVector(s.m, s.matrix() * signs[:, None], check=False)


def _bob_edge_weights(s: StateVector, y: Matching) -> np.ndarray:
    if y.m != s.m:
        raise ValueError(f"dimension mismatch: matching m={y.m}, state m={s.m}")
    col = np.sum(np.abs(s.matrix()) ** 2, axis=0)
    edges = np.asarray(y.edges)
    return col[edges[:, 0]] + col[edges[:, 1]]


def _project_edge(s: StateVector, edge: tuple[int, int], prob: float) -> StateVector:
    i, j = edge
    mat = np.zeros_like(s.matrix())
    mat[:, i] = s.matrix()[:, i]
    mat[:, j] = s.matrix()[:, j]
    return StateVector(s.m, mat / np.sqrt(prob))


def branch_matching(s: StateVector, y: Matching) -> list[BranchOutcome]:
    """All outcomes of Bob's {E_ij} measurement that occur with nonzero probability.

    Labels are edge indices into ``y.edges``.
    """
    probs = _bob_edge_weights(s, y)
    return [
        BranchOutcome(a, float(p), post_state=_project_edge(s, y.edges[a], float(p)))
        for a, p in enumerate(probs)
        if p > ZERO_TOL**2
    ]


def measure_matching(s: StateVector, y: Matching, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Sample Bob's matching measurement; returns (edge index, post state)."""
    probs = _bob_edge_weights(s, y)
    total = float(probs.sum())
    if total <= ZERO_TOL:
        raise ValueError("all projector probabilities are zero")
    a = int(np.searchsorted(np.cumsum(probs), rng.random() * total, side="right"))
    a = min(a, len(probs) - 1)
    return a, _project_edge(s, y.edges[a], float(probs[a]))


@lru_cache(maxsize=16)
def walsh_hadamard(m: int) -> np.ndarray:
    """H^{(x) log2 m}; entry [k, i] = (-1)^{popcount(k & i)} / sqrt(m)."""
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    n = m.bit_length() - 1
    w = reduce(np.kron, [h] * n, np.ones((1, 1)))
    w.flags.writeable = False
    return w


def hadamard_all(s: StateVector) -> StateVector:
    """Hadamard on every qubit of both registers."""
    w = walsh_hadamard(s.m)
    return StateVector(s.m, w @ s.matrix() @ w.T, check=False)


def measure_computational(s: StateVector, rng: np.random.Generator) -> tuple[int, int]:
    probs = np.abs(s.amplitudes) ** 2
    idx = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    idx = min(idx, len(probs) - 1)
    return divmod(idx, s.m)


def branch_computational(s: StateVector) -> list[BranchOutcome]:
    """Nonzero-probability computational-basis outcomes, labelled (k, l)."""
    m = s.m
    probs = np.abs(s.amplitudes) ** 2
    out = []
    for idx in np.flatnonzero(np.abs(s.amplitudes) > ZERO_TOL):
        k, l = divmod(int(idx), m)
        out.append(BranchOutcome((k, l), float(probs[idx]), build=lambda k=k, l=l: StateVector.basis(m, k, l)))
    return out


def maximally_mixed_ensemble(m: int) -> Ensemble:
    """Uniform mixture of the m^2 computational basis states."""
    _check_dim(m)
    w = 1.0 / (m * m)
    return Ensemble(tuple((w, StateVector.basis(m, i, j)) for i in range(m) for j in range(m)))


def projector_expectation(state: StateVector | Ensemble, support: np.ndarray) -> float:
    """<P> for a computational-basis projector P given by a boolean (m, m) support mask."""
    support = np.asarray(support, dtype=bool)
    if isinstance(state, Ensemble):
        return float(sum(w * projector_expectation(s, support) for w, s in state.components))
    if support.shape != (state.m, state.m):
        raise ValueError(f"support must have shape ({state.m}, {state.m})")
    return float(np.sum(np.abs(state.matrix()[support]) ** 2))


def bob_edge_support(m: int, edge: Sequence[int]) -> np.ndarray:
    """Support of I (x) E_ij with E_ij = |i><i| + |j><j| on Bob's register."""
    sup = np.zeros((m, m), dtype=bool)
    sup[:, list(edge)] = True
    return sup


def dump(s: StateVector) -> str:
    """Debug dump: one ``i j re im`` line per amplitude above the zero threshold."""
    lines = []
    for idx in np.flatnonzero(np.abs(s.amplitudes) > ZERO_TOL):
        i, j = divmod(int(idx), s.m)
        a = s.amplitudes[idx]
        lines.append(f"{i} {j} {a.real:+.12f} {a.imag:+.12f}")
    return "\n".join(lines) + ("\n" if lines else "")
