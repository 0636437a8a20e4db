import numpy as np
import pytest

from hmlab.protocol_quantum import (
    TRANSCRIPT_CSV_HEADER,
    amplitude_law_violations,
    corrupted_referee,
    depolarized_success_exact,
    depolarized_success_product,
    depolarized_success_product_exact,
    dot2,
    dot2_table,
    exactness_exhaustive,
    exactness_table,
    message_bits,
    referee,
    run_hm_smp,
    run_hmk_smp,
    single_copy_outcomes,
)
from hmlab.qsim import maximally_mixed_ensemble, prepare_epr
from hmlab.relations import CapError, Coloring, HMAnswer, Matching, hm_member, random_coloring, random_matching

from oracles import epr_density, matchings_as_pairs, protocol_success_density

X0110 = Coloring.parse("0110")
Y4 = Matching.parse("0-1,2-3")


class TestReferee:
    def test_dot2(self):
        assert dot2(0b11, 0b01) == 1
        assert dot2(0b11, 0b11) == 0
        assert dot2(0, 7) == 0

    def test_dot2_table(self):
        t = dot2_table(8)
        for u in range(8):
            for v in range(8):
                assert t[u, v] == dot2(u, v)

    def test_referee_rule(self):
        # (k ^ l) . (i ^ j) = (2 ^ 1) . (0 ^ 1) = 3 . 1 = 1
        assert referee(2, (0, 0, 1, 1)) == HMAnswer(0, 1)
        assert referee(0, (1, 2, 3, 0)) == HMAnswer(1, 0)

    def test_corrupted_flips(self):
        for k in range(4):
            for l in range(4):
                a, b = referee(k, (1, 2, 3, l)), corrupted_referee(k, (1, 2, 3, l))
                assert a.edge_index == b.edge_index and a.parity != b.parity


class TestSingleRun:
    def test_example_instance(self, rng):
        for _ in range(200):
            ans, t = run_hm_smp(X0110, Y4, prepare_epr(4), rng)
            assert ans in (HMAnswer(0, 1), HMAnswer(1, 1))
            assert t.answer == ans

    def test_transcript_bits(self, rng):
        _, t = run_hm_smp(X0110, Y4, prepare_epr(4), rng)
        assert (t.alice_bits, t.bob_bits, t.epr_pairs_used) == (2, 7, 2)
        assert t.alice_messages[0] in range(4)
        a, i, j, l = t.bob_messages[0]
        assert (i, j) == Y4.edges[a] and l in range(4)
        assert t.csv_row(True) == "4,1,2,7,2,1"
        assert TRANSCRIPT_CSV_HEADER.count(",") == t.csv_row(True).count(",")

    @pytest.mark.parametrize("m", [2, 4, 8, 16, 32])
    def test_always_correct_random(self, m, rng):
        for _ in range(50):
            x, y = random_coloring(m, rng), random_matching(m, rng)
            ans, _ = run_hm_smp(x, y, prepare_epr(m), rng)
            assert hm_member(x, y, ans)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            run_hm_smp(X0110, Y4, prepare_epr(8), rng)

    def test_seeded_reproducible(self):
        a = run_hm_smp(X0110, Y4, prepare_epr(4), np.random.default_rng(3))[1]
        b = run_hm_smp(X0110, Y4, prepare_epr(4), np.random.default_rng(3))[1]
        assert a == b


class TestParallel:
    @pytest.mark.parametrize("m,k", [(4, 1), (4, 3), (8, 2), (16, 3)])
    def test_resources_and_correctness(self, m, k, rng):
        xs = [random_coloring(m, rng) for _ in range(k)]
        ys = [random_matching(m, rng) for _ in range(k)]
        answers, t = run_hmk_smp(xs, ys, rng)
        n = int(np.log2(m))
        assert t.alice_bits == k * n
        assert t.bob_bits == k * ((n - 1) + 3 * n)
        assert t.epr_pairs_used == k * n
        assert len(t.alice_messages) == len(t.bob_messages) == k
        assert all(hm_member(x, y, z) for x, y, z in zip(xs, ys, answers))

    def test_answer_property_single_only(self, rng):
        _, t = run_hmk_smp([X0110, X0110], [Y4, Y4], rng)
        with pytest.raises(AttributeError):
            t.answer

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            run_hmk_smp([X0110], [Y4, Y4], rng)


class TestExactness:
    def test_m4_exhaustive(self):
        rows = exactness_table(4)
        assert len(rows) == 16 * 3
        assert all(r.violations == 0 for r in rows)
        assert all(abs(r.probability - 1) < 1e-9 for r in rows)

    def test_corrupted_referee_fails(self):
        assert not exactness_exhaustive(4, corrupted_referee)

    def test_amplitude_law_m4(self):
        assert amplitude_law_violations(4) == 0

    def test_cap(self):
        with pytest.raises(CapError):
            exactness_table(16)

    def test_message_bits(self):
        assert message_bits(4) == (2, 7)
        assert message_bits(16) == (4, 15)


class TestDepolarized:
    @pytest.mark.parametrize("m", [2, 4, 8])
    def test_exact_is_half(self, m):
        rep = depolarized_success_exact(m)
        assert abs(rep.success_exact - 0.5) < 1e-12
        assert rep.e_qubits == 2 * int(np.log2(m))
        assert rep.lower_bound == 1 / m**2
        assert rep.bound_satisfied
        assert rep.success_with_shared == 1.0

    def test_density_oracle_m4(self):
        m = 4
        mixed = np.eye(m * m) / m**2
        assert abs(protocol_success_density(mixed, m, matchings_as_pairs(m)) - 0.5) < 1e-12
        assert abs(protocol_success_density(epr_density(m), m, matchings_as_pairs(m)) - 1) < 1e-12

    def test_leaf_walk_matches_reduction(self):
        out = single_copy_outcomes(4)
        assert abs(out[True] - depolarized_success_exact(4).success_exact) < 1e-12
        assert abs(out[True] + out[False] - 1) < 1e-12

    def test_product_exact(self):
        for k in (1, 2, 3):
            assert abs(depolarized_success_product_exact(4, k) - 0.5**k) < 1e-12

    def test_monte_carlo(self, rng):
        est = depolarized_success_product(4, 1, 20000, rng)
        assert abs(est.value - 0.5) <= 3 * est.stderr

    def test_ensemble_size(self):
        assert len(maximally_mixed_ensemble(4).components) == 16

    def test_cap(self):
        with pytest.raises(CapError):
            depolarized_success_exact(32)
