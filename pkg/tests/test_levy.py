import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import cholesky_basis
from rbdsde import (
    InvalidInputError,
    LevyMeasure,
    StepSizeError,
    build_tree,
    empirical_bracket,
    moment,
    simulate_levy_path,
    simulate_levy_paths,
    teugels_basis,
    teugels_increment,
)
from rbdsde.levy import scenario_rng


class TestMeasure:
    def test_rejects_zero_atom(self):
        with pytest.raises(InvalidInputError):
            LevyMeasure.from_atoms([(0.0, 1.0)])

    def test_rejects_nonpositive_intensity(self):
        with pytest.raises(InvalidInputError):
            LevyMeasure.from_atoms([(1.0, 0.0)])

    def test_rejects_duplicate_sizes(self):
        with pytest.raises(InvalidInputError):
            LevyMeasure.from_atoms([(1.0, 1.0), (1.0, 2.0)])

    def test_record_form(self):
        nu = LevyMeasure.from_atoms([{"x": 0.5, "lambda": 2}, {"x": -1, "lambda": 1}])
        assert nu.n_atoms == 2
        assert nu.total_intensity == 3.0


@pytest.mark.parametrize(
    "atoms, i, expected",
    [([(1, 1)], 2, 1.0), ([(0.5, 2), (-1, 1)], 2, 1.5), ([(0.5, 2), (-1, 1)], 3, -0.75)],
)
def test_moment(atoms, i, expected):
    assert moment(LevyMeasure.from_atoms(atoms), i) == pytest.approx(expected, abs=1e-15)


def test_moment_rejects_index_zero():
    with pytest.raises(InvalidInputError):
        moment(LevyMeasure.from_atoms([(1, 1)]), 0)


class TestBasis:
    def test_single_unit_atom(self):
        b = teugels_basis(LevyMeasure.from_atoms([(1, 1)]))
        assert b.dim == 1
        assert b.alpha[0, 0] == pytest.approx(1.0)

    def test_symmetric_pair(self):
        b = teugels_basis(LevyMeasure.from_atoms([(1, 1), (-1, 1)]))
        np.testing.assert_allclose(b.alpha, np.diag([1 / math.sqrt(2)] * 2), atol=1e-14)

    def test_scaled_intensity(self):
        b = teugels_basis(LevyMeasure.from_atoms([(1, 4)]))
        assert b.alpha[0, 0] == pytest.approx(0.5)

    def test_matches_cholesky_oracle(self):
        sizes, lam = [1.0, -0.5, 2.0], [1.0, 2.0, 0.5]
        b = teugels_basis(LevyMeasure.from_atoms(list(zip(sizes, lam))))
        np.testing.assert_allclose(b.alpha, cholesky_basis(sizes, lam), atol=1e-10)

    def test_lower_triangular_positive_diagonal(self):
        b = teugels_basis(LevyMeasure.from_atoms([(1, 1), (-2, 0.5), (0.5, 3)]))
        assert np.all(np.triu(b.alpha, 1) == 0)
        assert np.all(np.diag(b.alpha) > 0)

    def test_jump_of_first_martingale(self):
        # H^(1) jumps by x * alpha_11
        b = teugels_basis(LevyMeasure.from_atoms([(2, 1)]))
        assert b.jump(2.0)[0] == pytest.approx(2.0 * b.alpha[0, 0])


# well-separated atoms; see the decisions log for clustered sets
_SIZES = [-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0]


@st.composite
def separated_measures(draw):
    k = draw(st.integers(1, 6))
    sizes = draw(st.lists(st.sampled_from(_SIZES), min_size=k, max_size=k, unique=True))
    lam = draw(st.lists(st.floats(0.2, 5.0), min_size=k, max_size=k))
    return LevyMeasure.from_atoms(list(zip(sizes, lam)))


@settings(max_examples=150, deadline=None)
@given(separated_measures())
def test_gram_is_identity(nu):
    b = teugels_basis(nu)
    assert b.dim == nu.n_atoms
    np.testing.assert_allclose(b.gram(), np.eye(b.dim), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(separated_measures(), st.floats(1e-4, 0.1))
def test_one_step_increments_centered(nu, dt):
    dt = min(dt, 0.9 / nu.total_intensity)
    b = teugels_basis(nu)
    probs = np.concatenate([[1 - nu.total_intensity * dt], nu.lam * dt])
    dH = np.stack([teugels_increment(b, None, dt)] + [teugels_increment(b, x, dt) for x in nu.x])
    assert np.abs(probs @ dH).max() <= 1e-12


class TestIncrement:
    def test_jump(self):
        b = teugels_basis(LevyMeasure.from_atoms([(1, 1)]))
        assert teugels_increment(b, 1.0, 0.1)[0] == pytest.approx(0.9)

    def test_no_jump(self):
        b = teugels_basis(LevyMeasure.from_atoms([(1, 1)]))
        assert teugels_increment(b, None, 0.1)[0] == pytest.approx(-0.1)


class TestTree:
    def test_probabilities(self):
        tree = build_tree(LevyMeasure.from_atoms([(1, 1)]), T=1, N=10)
        np.testing.assert_allclose(tree.probs, [0.9, 0.1])

    def test_step_too_large(self):
        with pytest.raises(StepSizeError):
            build_tree(LevyMeasure.from_atoms([(1, 15)]), T=1, N=10)

    def test_deterministic(self):
        nu = LevyMeasure.from_atoms([(1, 1), (-1, 2)])
        a = build_tree(nu, T=1, N=8, P=4, seed=5)
        b = build_tree(nu, T=1, N=8, P=4, seed=5)
        assert np.array_equal(a.dB, b.dB)
        assert all(np.array_equal(x, y) for x, y in zip(a.children, b.children))

    def test_adding_scenarios_keeps_earlier_ones(self):
        nu = LevyMeasure.from_atoms([(1, 1)])
        a = build_tree(nu, T=1, N=8, P=3, seed=5)
        b = build_tree(nu, T=1, N=8, P=7, seed=5)
        assert np.array_equal(a.dB, b.dB[:3])

    def test_node_probabilities_sum_to_one(self):
        tree = build_tree(LevyMeasure.from_atoms([(1, 1), (-0.5, 2)]), T=1, N=6)
        for p in tree.node_prob:
            assert p.sum() == pytest.approx(1.0, abs=1e-14)

    def test_history_tree_matches_lattice(self):
        nu = LevyMeasure.from_atoms([(1, 1), (-0.5, 2)])
        a = build_tree(nu, T=1, N=4, recombining=True)
        b = build_tree(nu, T=1, N=4, recombining=False)
        assert b.n_nodes(4) == 3**4
        # same law of L_T
        for tr in (a, b):
            tr_mean = float(tr.node_L[4] @ tr.node_prob[4])
            assert tr_mean == pytest.approx(4 * 0.25 * (1 * 1 - 0.5 * 2))

    def test_brownian_increment_variance(self):
        tree = build_tree(LevyMeasure.from_atoms([(1, 1)]), T=1, N=10, P=4000, seed=1)
        assert tree.dB.var() == pytest.approx(0.1, rel=0.05)


class TestSimulation:
    def test_event_count(self):
        nu = LevyMeasure.from_atoms([(1, 1.5)])
        counts = np.array([p.sizes.size for p in simulate_levy_paths(nu, 2.0, 10_000, seed=3)])
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - 3.0) <= 3 * se

    def test_sizes_are_atoms(self):
        p = simulate_levy_path(LevyMeasure.from_atoms([(1, 3)]), 2.0, seed=0)
        assert np.all(p.sizes == 1.0)

    def test_zero_horizon(self):
        p = simulate_levy_path(LevyMeasure.from_atoms([(1, 3)]), 0.0, seed=0)
        assert p.sizes.size == 0 and p.times.size == 0

    def test_path_value(self):
        p = simulate_levy_path(LevyMeasure.from_atoms([(1, 3)]), 5.0, seed=2)
        assert p.value(5.0) == p.sizes.size

    def test_scenario_streams_independent_of_count(self):
        a = scenario_rng(9, 4).normal(size=3)
        b = scenario_rng(9, 4).normal(size=3)
        assert np.array_equal(a, b)


class TestBracket:
    def test_unit_atom(self):
        nu = LevyMeasure.from_atoms([(1, 1)])
        b = teugels_basis(nu)
        est, se = empirical_bracket(simulate_levy_paths(nu, 1.0, 20_000, seed=1), b, 1, 1)
        assert abs(est - 1.0) <= 3 * se

    def test_cross_terms_vanish(self):
        nu = LevyMeasure.from_atoms([(1, 1), (-2, 0.5), (0.5, 2)])
        b = teugels_basis(nu)
        paths = simulate_levy_paths(nu, 1.0, 20_000, seed=2)
        for i, j in ((1, 2), (1, 3), (2, 3)):
            est, se = empirical_bracket(paths, b, i, j)
            assert abs(est) <= 3 * se

    def test_no_jumps(self):
        nu = LevyMeasure.from_atoms([(1, 1)])
        est, se = empirical_bracket(simulate_levy_paths(nu, 0.0, 10, seed=1), teugels_basis(nu), 1, 1)
        assert est == 0.0 and se == 0.0

    def test_bad_index(self):
        nu = LevyMeasure.from_atoms([(1, 1)])
        with pytest.raises(InvalidInputError):
            empirical_bracket(simulate_levy_paths(nu, 1.0, 10, seed=1), teugels_basis(nu), 1, 2)
