import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmlab.qsim import (
    StateVector,
    apply_phase,
    bob_edge_support,
    branch_computational,
    branch_matching,
    dump,
    hadamard_all,
    maximally_mixed_ensemble,
    measure_computational,
    measure_matching,
    prepare_epr,
    projector_expectation,
)
from hmlab.relations import Coloring, Matching, enumerate_matchings

X0110 = Coloring.parse("0110")
Y4 = Matching.parse("0-1,2-3")


def phased(m, x):
    return apply_phase(prepare_epr(m), x)


class TestPreparation:
    def test_epr_m2(self):
        s = prepare_epr(2)
        np.testing.assert_allclose(s.matrix(), np.eye(2) / np.sqrt(2), atol=1e-12)

    def test_epr_m4(self):
        np.testing.assert_allclose(prepare_epr(4).matrix(), np.eye(4) / 2, atol=1e-12)

    def test_epr_norm(self):
        assert abs(prepare_epr(16).norm_squared() - 1) < 1e-12

    @pytest.mark.parametrize("m", [0, 3, 6, 512])
    def test_invalid_m(self, m):
        with pytest.raises(ValueError):
            prepare_epr(m)

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            StateVector(2, [1, 1, 0, 0])


class TestPhase:
    def test_zero_coloring_is_identity(self):
        assert phased(4, Coloring.parse("0000")).allclose(prepare_epr(4))

    def test_phase_pattern(self):
        diag = np.diag(phased(4, X0110).matrix())
        np.testing.assert_allclose(diag, np.array([1, -1, -1, 1]) / 2, atol=1e-12)

    def test_involution(self):
        assert apply_phase(phased(4, X0110), X0110).allclose(prepare_epr(4))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            apply_phase(prepare_epr(8), X0110)


class TestMatchingMeasurement:
    def test_branch_probabilities_m4(self):
        branches = branch_matching(phased(4, X0110), Y4)
        assert [b.label for b in branches] == [0, 1]
        assert all(abs(b.probability - 0.5) < 1e-12 for b in branches)

    def test_post_state_formula(self):
        branches = branch_matching(phased(4, X0110), Y4)
        for br in branches:
            i, j = Y4.edges[br.label]
            expected = np.zeros((4, 4))
            expected[i, i] = (-1) ** X0110.bits[i] / np.sqrt(2)
            expected[j, j] = (-1) ** X0110.bits[j] / np.sqrt(2)
            np.testing.assert_allclose(br.post_state.matrix(), expected, atol=1e-12)

    def test_m8_edge_probability(self, rng):
        y = enumerate_matchings(8)[17]
        x = Coloring.from_index(0b10110010, 8)
        for br in branch_matching(phased(8, x), y):
            assert abs(br.probability - 2 / 8) < 1e-12

    def test_post_states_diagonal(self):
        for br in branch_matching(phased(4, X0110), Y4):
            mat = br.post_state.matrix()
            assert np.allclose(mat, np.diag(np.diag(mat)))

    def test_remeasure_idempotent(self):
        for br in branch_matching(phased(4, X0110), Y4):
            again = branch_matching(br.post_state, Y4)
            assert len(again) == 1 and again[0].label == br.label
            assert abs(again[0].probability - 1) < 1e-12

    def test_sampling_matches_branches(self, rng):
        s = StateVector(4, np.array([0.6, 0, 0, 0, 0, 0.0, 0.8, 0, 0, 0, 0, 0, 0, 0, 0, 0]))
        y = Matching.parse("0-3,1-2")
        probs = {b.label: b.probability for b in branch_matching(s, y)}
        n = 100000
        hits = sum(measure_matching(s, y, rng)[0] == 0 for _ in range(n))
        p = probs[0]
        assert abs(hits / n - p) <= 3 * np.sqrt(p * (1 - p) / n)

    def test_measure_post_state_normalized(self, rng):
        _, post = measure_matching(phased(8, Coloring.from_index(77, 8)), enumerate_matchings(8)[3], rng)
        assert abs(post.norm_squared() - 1) < 1e-9


class TestHadamard:
    def test_involution(self):
        s = phased(8, Coloring.from_index(201, 8))
        assert hadamard_all(hadamard_all(s)).allclose(s)

    def test_amplitude_formula(self):
        m = 4
        for br in branch_matching(phased(m, X0110), Y4):
            i, j = Y4.edges[br.label]
            h = hadamard_all(br.post_state)
            for k in range(m):
                for l in range(m):
                    d = lambda u, v: bin(u & v).count("1") % 2  # noqa: E731
                    expected = ((-1) ** (X0110.bits[i] + d(k ^ l, i)) + (-1) ** (X0110.bits[j] + d(k ^ l, j)))
                    expected /= m * np.sqrt(2)
                    assert abs(h.amplitude(k, l) - expected) < 1e-12

    def test_half_support_m4(self):
        for br in branch_matching(phased(4, X0110), Y4):
            h = hadamard_all(br.post_state)
            assert int(np.sum(np.abs(h.amplitudes) > 1e-9)) == 8

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**16 - 1), st.integers(0, 2**32 - 1))
    def test_norm_preserved(self, xv, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=256) + 1j * rng.normal(size=256)
        s = StateVector(16, v / np.linalg.norm(v))
        s = apply_phase(s, Coloring.from_index(xv, 16))
        assert abs(hadamard_all(s).norm_squared() - 1) < 1e-9


class TestComputational:
    def test_basis_state(self, rng):
        s = StateVector.basis(4, 2, 3)
        assert measure_computational(s, rng) == (2, 3)
        branches = branch_computational(s)
        assert len(branches) == 1 and branches[0].label == (2, 3)
        assert branches[0].post_state.allclose(s)

    def test_branch_sum(self):
        h = hadamard_all(branch_matching(phased(8, Coloring.from_index(9, 8)), enumerate_matchings(8)[50])[0].post_state)
        assert abs(sum(b.probability for b in branch_computational(h)) - 1) < 1e-9

    def test_sampling_matches_branches(self, rng):
        h = hadamard_all(branch_matching(phased(4, X0110), Y4)[0].post_state)
        n = 100000
        counts = {}
        for _ in range(n):
            kl = measure_computational(h, rng)
            counts[kl] = counts.get(kl, 0) + 1
        for br in branch_computational(h):
            p = br.probability
            assert abs(counts.get(br.label, 0) / n - p) <= 3 * np.sqrt(p * (1 - p) / n)
        assert set(counts) <= {b.label for b in branch_computational(h)}


class TestEnsemble:
    def test_mixed_m2(self):
        ens = maximally_mixed_ensemble(2)
        assert len(ens.components) == 4
        assert all(abs(w - 0.25) < 1e-15 for w, _ in ens.components)

    def test_weights_sum(self):
        assert abs(sum(w for w, _ in maximally_mixed_ensemble(8).components) - 1) < 1e-12

    @pytest.mark.parametrize("m", [2, 4, 8])
    def test_edge_projector_expectation(self, m):
        ens = maximally_mixed_ensemble(m)
        sup = bob_edge_support(m, (0, 1))
        assert abs(projector_expectation(ens, sup) - 2 * m / m**2) < 1e-12

    def test_ensemble_validation(self):
        from hmlab.qsim import Ensemble

        with pytest.raises(ValueError):
            Ensemble(((0.5, prepare_epr(2)),))


def test_dump_format():
    text = dump(prepare_epr(2))
    assert text == "0 0 +0.707106781187 +0.000000000000\n1 1 +0.707106781187 +0.000000000000\n"
