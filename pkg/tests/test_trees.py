import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aepkit.measures import Alphabet, ProbVector
from aepkit.seeding import rng_for
from aepkit.trees import (
    AttemptsExhaustedError,
    ImpossibleSizeError,
    OffspringKernel,
    OffspringMeasure,
    Overflow,
    TypedTree,
    is_critical,
    is_irreducible,
    log_prob_tree,
    log_prob_tree_conditioned,
    mean_matrix,
    mtdna_kernel,
    multiplicity,
    offspring_measure,
    progeny_distribution,
    sample_tree,
    sample_tree_conditioned,
    sample_tree_conditioned_counted,
    shift_invariance_residual,
    single_type_binary,
    spectral,
    tree_aep_entropy,
)


def two_type_kernel(alpha=0.8, beta=0.625):
    """Type 0 bears one type-1 child w.p. alpha; type 1 bears two type-0
    children w.p. beta.  rho = sqrt(2 alpha beta)."""
    ab = Alphabet.of_size(2)
    Q = OffspringKernel(ab, [
        [((1,), alpha), ((), 1 - alpha)],
        [((0, 0), beta), ((), 1 - beta)],
    ])
    return ProbVector(ab, [0.5, 0.5], strict=True), Q


class TestOffspringKernel:
    def test_validation(self):
        ab = Alphabet.of_size(2)
        with pytest.raises(ValueError):
            OffspringKernel(ab, [[((), 0.5)], [((), 1.0)]])  # law sums to 0.5
        with pytest.raises(ValueError):
            OffspringKernel(ab, [[((), 0.5), ((), 0.5)], [((), 1.0)]])
        with pytest.raises(ValueError):
            OffspringKernel(ab, [[((7,), 1.0)], [((), 1.0)]])

    def test_prob_lookup(self):
        _, Q = single_type_binary()
        assert Q.prob(0, ()) == 0.5
        assert Q.prob(0, (0, 0)) == 0.5
        assert Q.prob(0, (0,)) == 0.0

    def test_text_round_trip(self):
        Q = mtdna_kernel(0.45, 0.5, 0.2)
        R = OffspringKernel.from_text(Q.to_text(), Q.alphabet)
        assert R.laws == Q.laws

    def test_sample_config_frequencies(self):
        _, Q = single_type_binary()
        rng = rng_for(30)
        hits = sum(len(Q.sample_config(0, rng)) == 2 for _ in range(4000))
        assert abs(hits / 4000 - 0.5) < 0.03

    def test_multiplicity(self):
        assert multiplicity(0, (0, 1, 0)) == 2
        assert multiplicity(1, ()) == 0


class TestTypedTree:
    def test_single_vertex(self):
        t = TypedTree(Alphabet.of_size(1), [0], [[]])
        assert len(t) == 1
        assert t.config(0) == ()

    def test_reachability_enforced(self):
        ab = Alphabet.of_size(1)
        with pytest.raises(ValueError):
            TypedTree(ab, [0, 0], [[], []])  # vertex 1 orphaned
        with pytest.raises(ValueError):
            TypedTree(ab, [0, 0], [[1, 1], []])

    def test_text_round_trip_hand(self):
        ab = Alphabet.of_size(2)
        t = TypedTree(ab, [0, 1, 0, 1], [[1, 3], [2], [], []])
        assert t.to_text() == "0(1(0) 1)"
        assert TypedTree.from_text(t.to_text(), ab) == t

    def test_text_rejects_garbage(self):
        ab = Alphabet.of_size(2)
        for bad in ["0(", "0)", "(0)", "0 1", "0(x)"]:
            with pytest.raises(ValueError):
                TypedTree.from_text(bad, ab)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_text_round_trip_random(self, seed):
        mu, Q = two_type_kernel()
        t = sample_tree(mu, Q, 200, rng_for(seed))
        if isinstance(t, Overflow):
            return
        assert TypedTree.from_text(t.to_text(), mu.alphabet) == t

    def test_deep_path_serializes(self):
        ab = Alphabet.of_size(1)
        n = 5000
        t = TypedTree(ab, [0] * n, [[v + 1] for v in range(n - 1)] + [[]])
        assert TypedTree.from_text(t.to_text(), ab) == t


class TestSpectral:
    def test_mean_matrix_binary(self):
        _, Q = single_type_binary()
        assert np.allclose(mean_matrix(Q), [[1.0]])

    def test_mean_matrix_mtdna(self):
        p, q, al = 0.5, 0.5, 0.2
        A = mean_matrix(mtdna_kernel(p, q, al))
        # column b holds expected children counts of a type-b parent
        assert A[0, 0] == pytest.approx(p * (2 - al))
        assert A[1, 0] == pytest.approx(p * al)
        assert A[0, 1] == 0.0
        assert A[1, 1] == pytest.approx(2 * q)

    def test_spectral_two_type(self):
        alpha, beta = 0.8, 0.625
        _, Q = two_type_kernel(alpha, beta)
        rho, pi_r, pi_l = spectral(mean_matrix(Q))
        assert rho == pytest.approx(math.sqrt(2 * alpha * beta), abs=1e-10)
        assert pi_r.sum() == pytest.approx(1.0)
        assert pi_l.sum() == pytest.approx(1.0)
        A = mean_matrix(Q)
        assert np.allclose(A @ pi_r, rho * pi_r, atol=1e-9)
        assert np.allclose(A.T @ pi_l, rho * pi_l, atol=1e-9)

    def test_spectral_periodic_fallback(self):
        # pure rotation defeats plain power iteration; dense fallback covers it
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        rho, _, _ = spectral(A)
        assert rho == pytest.approx(1.0, abs=1e-10)

    def test_criticality(self):
        assert is_critical(mean_matrix(single_type_binary()[1]))
        _, Q = two_type_kernel(0.8, 0.625)
        assert is_critical(mean_matrix(Q))
        _, Q2 = two_type_kernel(0.8, 0.5)
        assert not is_critical(mean_matrix(Q2))

    def test_irreducibility(self):
        assert is_irreducible(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert not is_irreducible(np.eye(2))
        assert not is_irreducible(mean_matrix(mtdna_kernel(0.5, 0.5, 0.2)))


class TestSampling:
    def test_deterministic_given_seed(self):
        mu, Q = two_type_kernel()
        a = sample_tree(mu, Q, 500, rng_for(31))
        b = sample_tree(mu, Q, 500, rng_for(31))
        if isinstance(a, Overflow):
            assert isinstance(b, Overflow)
        else:
            assert a == b

    def test_overflow_sentinel(self):
        ab = Alphabet.of_size(1)
        mu = ProbVector(ab, [1.0], strict=True)
        Q = OffspringKernel(ab, [[((0,), 1.0)]])  # immortal line
        assert isinstance(sample_tree(mu, Q, 10, rng_for(32)), Overflow)

    def test_conditioned_size_window(self):
        mu, Q = single_type_binary()
        t, attempts = sample_tree_conditioned_counted(
            7, mu, Q, 10_000, rng_for(33))
        assert len(t) == 7
        assert attempts >= 1
        t2 = sample_tree_conditioned(5, mu, Q, 10_000, rng_for(34), window=2)
        assert 5 <= len(t2) <= 7

    def test_impossible_size(self):
        mu, Q = single_type_binary()
        with pytest.raises(ImpossibleSizeError):
            sample_tree_conditioned(4, mu, Q, 100, rng_for(35))

    def test_attempts_exhausted(self):
        mu, Q = single_type_binary()
        with pytest.raises(AttemptsExhaustedError) as err:
            sample_tree_conditioned(101, mu, Q, 1, rng_for(36))
        assert err.value.attempts == 1


class TestProgenyDistribution:
    def test_binary_oracle(self):
        # odd sizes only; P(2k+1) = Catalan(k) / 2^(2k+1)
        mu, Q = single_type_binary()
        d = progeny_distribution(mu, Q, 9)
        assert d[0] == 0.0
        assert np.all(d[2::2] == 0.0)
        assert d[1] == pytest.approx(0.5)
        assert d[3] == pytest.approx(1 / 8)
        assert d[5] == pytest.approx(1 / 16)
        assert d[7] == pytest.approx(5 / 128)
        assert d[9] == pytest.approx(14 / 2 ** 9)

    def test_subcritical_sums_to_one(self):
        ab = Alphabet.of_size(1)
        mu = ProbVector(ab, [1.0], strict=True)
        Q = OffspringKernel(ab, [[((), 0.75), ((0, 0), 0.25)]])
        d = progeny_distribution(mu, Q, 4000)
        assert d.sum() == pytest.approx(1.0, abs=1e-6)

    def test_matches_monte_carlo(self):
        mu, Q = two_type_kernel()
        d = progeny_distribution(mu, Q, 6)
        reps = 20_000
        counts = np.zeros(7)
        for i in range(reps):
            t = sample_tree(mu, Q, 7, rng_for(37, i))
            if not isinstance(t, Overflow) and len(t) <= 6:
                counts[len(t)] += 1
        for n in range(1, 7):
            se = math.sqrt(max(d[n] * (1 - d[n]), 1e-9) / reps)
            assert abs(counts[n] / reps - d[n]) < 4 * se + 1e-9


class TestLogProb:
    def test_leaf(self):
        mu, Q = single_type_binary()
        t = TypedTree(mu.alphabet, [0], [[]])
        assert log_prob_tree(t, mu, Q) == pytest.approx(math.log(0.5))

    def test_three_vertex_cherry(self):
        mu, Q = single_type_binary()
        t = TypedTree(mu.alphabet, [0, 0, 0], [[1, 2], [], []])
        assert log_prob_tree(t, mu, Q) == pytest.approx(3 * math.log(0.5))

    def test_impossible_tree(self):
        mu, Q = single_type_binary()
        t = TypedTree(mu.alphabet, [0, 0], [[1], []])
        assert log_prob_tree(t, mu, Q) == -math.inf

    def test_conditional_sums_to_one_small_sizes(self):
        mu, Q = two_type_kernel()
        for n in (1, 2, 3, 4, 5, 6, 7):
            d = progeny_distribution(mu, Q, n)
            if d[n] == 0.0:
                continue
            seen = {}
            for i in range(4000):
                t = sample_tree(mu, Q, n + 1, rng_for(38, 100 * n + i))
                if isinstance(t, Overflow) or len(t) != n:
                    continue
                seen[t.to_text()] = log_prob_tree_conditioned(t, mu, Q, d[n])
            total = math.fsum(math.exp(lp) for lp in seen.values())
            # every shape of these tiny sizes appears in 4000 draws
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_conditioned_shift(self):
        mu, Q = single_type_binary()
        t = TypedTree(mu.alphabet, [0, 0, 0], [[1, 2], [], []])
        d = progeny_distribution(mu, Q, 3)
        assert log_prob_tree_conditioned(t, mu, Q, d[3]) == pytest.approx(
            log_prob_tree(t, mu, Q) - math.log(d[3]))


class TestOffspringMeasure:
    def test_empirical_counts(self):
        ab = Alphabet.of_size(2)
        t = TypedTree(ab, [0, 1, 0, 1], [[1, 3], [2], [], []])
        m = offspring_measure(t)
        assert m.total() == pytest.approx(1.0)
        assert m.weights[(0, (1, 1))] == pytest.approx(0.25)
        assert m.weights[(1, (0,))] == pytest.approx(0.25)
        assert m.weights[(0, ())] == pytest.approx(0.25)
        assert m.weights[(1, ())] == pytest.approx(0.25)
        assert np.allclose(m.type_marginal(), [0.5, 0.5])

    def test_empirical_residual_bound(self):
        mu, Q = two_type_kernel()
        for i in range(20):
            t = sample_tree(mu, Q, 400, rng_for(39, i))
            if isinstance(t, Overflow):
                continue
            res = shift_invariance_residual(offspring_measure(t))
            assert res <= 1.0 / len(t) + 1e-12

    def test_product_measure_stationary(self):
        alpha, beta = 0.8, 0.625
        _, Q = two_type_kernel(alpha, beta)
        _, pi_r, _ = spectral(mean_matrix(Q))
        pi = ProbVector(Q.alphabet, pi_r)
        res = shift_invariance_residual(OffspringMeasure.from_product(pi, Q))
        assert res < 1e-9

    def test_nonstationary_marginal_detected(self):
        _, Q = two_type_kernel()
        lopsided = ProbVector(Q.alphabet, [0.95, 0.05])
        res = shift_invariance_residual(
            OffspringMeasure.from_product(lopsided, Q))
        assert res > 0.1


class TestEntropy:
    def test_binary_kernel(self):
        mu, Q = single_type_binary()
        assert tree_aep_entropy(mu, Q) == pytest.approx(math.log(2))

    def test_weighted_two_type(self):
        _, Q = two_type_kernel(0.8, 0.625)
        pi = ProbVector(Q.alphabet, [0.25, 0.75])
        h0 = -(0.8 * math.log(0.8) + 0.2 * math.log(0.2))
        h1 = -(0.625 * math.log(0.625) + 0.375 * math.log(0.375))
        assert tree_aep_entropy(pi, Q) == pytest.approx(0.25 * h0 + 0.75 * h1)
