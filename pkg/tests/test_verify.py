import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbdsde import (
    AssumptionViolation,
    Driver,
    DriverPair,
    LevyMeasure,
    RegulatedPath,
    beta_norms,
    build_tree,
    comparison_check,
    comparison_instance,
    doleans_gamma,
    energy_identity_residual,
    make_barrier,
    make_driver,
    representation_residual,
    snell_oracle,
    solve_penalized,
)
from rbdsde.verify import martingale_representation, path_energy_residual, second_moment_of_sum


class TestGamma:
    def test_trivial(self):
        r = doleans_gamma(np.zeros(10), np.zeros((10, 1)), np.zeros((10, 1)), 0, 10, 0.1)
        assert r.value == 1.0 and r.closed_form == 1.0

    def test_compound_interest(self):
        r = doleans_gamma(np.ones(100), np.zeros((100, 1)), np.zeros((100, 1)), 0, 100, 0.01)
        assert r.value == pytest.approx(1.01**100, rel=1e-13)
        assert r.value == pytest.approx(2.7048, abs=1e-4)
        assert r.closed_form == pytest.approx(math.e)

    def test_jump_factor(self):
        r = doleans_gamma(np.zeros(1), np.array([[0.5]]), np.array([[0.9]]), 0, 1, 0.1)
        assert r.value == pytest.approx(1.45)
        assert r.closed_form == pytest.approx(1.45)

    def test_positivity_violation_names_step(self):
        dH = np.zeros((5, 1))
        dH[3] = -3.0
        with pytest.raises(AssumptionViolation, match="step 3"):
            doleans_gamma(np.zeros(5), np.full((5, 1), 0.5), dH, 0, 5, 0.1)

    def test_sub_interval(self):
        p = np.arange(5.0)
        r = doleans_gamma(p, np.zeros((5, 1)), np.zeros((5, 1)), 2, 4, 0.1)
        assert r.value == pytest.approx((1 + 0.2) * (1 + 0.3))


@pytest.fixture(scope="module")
def tree():
    return build_tree(LevyMeasure.from_atoms([(1, 1)]), T=1, N=10, P=3, seed=4)


def _solve(tree, f, spec, n=64):
    bar = make_barrier(spec, tree.times, tree.node_L)
    d = DriverPair(f)
    return d, bar, solve_penalized(tree, d, bar, n)


BAR = {"family": "poly_L", "params": {"coeffs": [0.5, 0.3], "slope": -0.5}}


class TestComparison:
    def test_identical(self, tree):
        f = make_driver({"family": "affine", "params": {"a": 0.2, "b": 0.5, "c": [0.3]}})
        d, _, s = _solve(tree, f, BAR)
        rep = comparison_check(comparison_instance(tree, s, s, d, d))
        assert rep.holds and rep.max_violation == 0

    def test_shifted_driver(self, tree):
        f2 = make_driver({"family": "affine", "params": {"a": 0.2, "b": 0.5}})
        f1 = make_driver({"family": "affine", "params": {"a": -0.8, "b": 0.5}})
        d1, _, s1 = _solve(tree, f1, BAR)
        d2, _, s2 = _solve(tree, f2, BAR)
        rep = comparison_check(comparison_instance(tree, s1, s2, d1, d2))
        assert rep.holds
        # strictly below where the barrier is not binding
        assert np.all(s1.Y.v[tree.N - 1] < s2.Y.v[tree.N - 1])

    def test_shifted_terminal(self, tree):
        f = make_driver({"family": "affine", "params": {"b": 0.5}})
        d1, _, s1 = _solve(tree, f, dict(BAR, terminal=0.0))
        d2, _, s2 = _solve(tree, f, dict(BAR, terminal=0.5))
        rep = comparison_check(comparison_instance(tree, s1, s2, d1, d2))
        assert rep.holds and rep.source_nonpositive

    def test_linearisation_coefficients(self, tree):
        f = make_driver({"family": "affine", "params": {"b": 0.5, "c": [0.3]}})
        d1, _, s1 = _solve(tree, f, BAR, n=4)
        d2, _, s2 = _solve(tree, f, dict(BAR, terminal=0.9), n=4)
        inst = comparison_instance(tree, s1, s2, d1, d2)
        for k in range(tree.N):
            mask = s1.y_eval[k] != s2.y_eval[k]
            assert np.allclose(inst.p[k][mask], 0.5)
            assert np.all(np.abs(inst.p[k]) <= inst.L_f + 1e-12)
            assert np.all(np.abs(inst.u[k]) == 0)

    def test_positivity_failure_classified(self):
        # a strongly negative z-coefficient breaks positivity and the ordering
        tr = build_tree(LevyMeasure.from_atoms([(1, 1)]), T=1, N=4, P=1, seed=1)
        d = DriverPair(make_driver({"family": "affine", "params": {"c": [-50.0]}}))
        b2 = make_barrier({"family": "poly_L", "params": {"coeffs": [0.0, 1.0]}}, tr.times, tr.node_L)
        b1 = make_barrier({"family": "poly_L", "params": {"coeffs": [-1.0, 1.0]}}, tr.times, tr.node_L)
        term = np.minimum(b2.v[-1], 0.0)
        b1 = RegulatedPath(tr.times, b1.v[:-1] + (term,), b1.v_plus[:-1] + (term,))
        assert b1.dominated_by(b2)
        rep = comparison_check(comparison_instance(tr, solve_penalized(tr, d, b1, 0), solve_penalized(tr, d, b2, 0), d, d))
        assert not rep.holds
        assert not rep.gamma_positive and not rep.lattice_positive
        assert rep.classification == "positivity-violated"
        assert rep.worst_node[:2] == (0, "t")


class TestEnergy:
    def test_constant(self):
        assert path_energy_residual(RegulatedPath.from_arrays([0, 0.5, 1], [2.0, 2.0, 2.0])) == 0.0

    def test_two_step_with_right_jump(self):
        # v0 = 1, v0+ = 3, v1 = 2: 4 - 1 = (2*1*2 + 4) + (2*3*(-1) + 1)
        p = RegulatedPath.from_arrays([0, 1], [1.0, 2.0], [3.0, 2.0])
        assert path_energy_residual(p) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(
        st.sampled_from([1.0, 10.0, 1000.0]),
        st.floats(-1, 1),
        st.floats(-0.5, 0.5),
        st.floats(-0.5, 0.5),
        st.booleans(),
        st.integers(0, 100),
    )
    def test_solved_instances(self, n, b, c, gb, jump, seed):
        tree = build_tree(LevyMeasure.from_atoms([(1, 1), (-0.5, 2)]), T=1, N=8, P=2, seed=seed)
        f = make_driver({"family": "affine", "params": {"a": 0.1, "b": b, "c": [c, -c]}})
        g = make_driver({"family": "affine", "params": {"a": 0.2, "b": gb * 0.4, "c": [0.1, 0.0]}}, "g")
        spec = dict(BAR, right_jumps=[[0.5, -0.7]] if jump else [])
        bar = make_barrier(spec, tree.times, tree.node_L)
        d = DriverPair(f, g)
        assert energy_identity_residual(solve_penalized(tree, d, bar, n), d, tree) <= 1e-10

    def test_oracle(self, tree):
        bar = make_barrier(BAR, tree.times, tree.node_L)
        assert energy_identity_residual(snell_oracle(tree, DriverPair(), bar), DriverPair(), tree) <= 1e-12


class TestRepresentation:
    def test_constant(self, tree):
        mean, Z, res = martingale_representation(np.full(tree.n_nodes(tree.N), 2.5), tree)
        assert mean == pytest.approx(2.5) and res < 1e-14
        assert all(np.abs(z).max() < 1e-14 for z in Z)

    def test_last_increment(self):
        tr = build_tree(LevyMeasure.from_atoms([(1, 1)]), T=1, N=3, recombining=False)
        # terminal = dH of the last step, read off the outcome of the last branch
        term = np.tile(tr.dH[:, 0], tr.n_nodes(2))
        mean, Z, res = martingale_representation(term, tr)
        assert res < 1e-14
        np.testing.assert_allclose(Z[2][..., 0], 1.0)
        assert np.abs(Z[1]).max() < 1e-13

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_random_terminal(self, N, seed):
        tr = build_tree(LevyMeasure.from_atoms([(1, 1)]), T=0.5, N=N)
        vals = np.random.default_rng(seed).normal(size=tr.n_nodes(N))
        assert representation_residual(vals, tr) <= 1e-12

    def test_three_atoms(self):
        tr = build_tree(LevyMeasure.from_atoms([(1, 1), (-1, 1), (2, 0.5)]), T=1, N=5)
        vals = np.random.default_rng(1).normal(size=tr.n_nodes(5))
        assert representation_residual(vals, tr) <= 1e-12


class TestBetaNorms:
    def test_constant(self):
        N = 200
        tr = build_tree(LevyMeasure.from_atoms([(1, 1)]), T=1, N=N, P=1)
        bar = make_barrier({"family": "constant", "params": {"c": 2.0}}, tr.times, tr.node_L)
        s = solve_penalized(tr, DriverPair(), bar, 10)
        bn = beta_norms(s, bar, DriverPair(), tr, 1.0)
        assert bn.sup_Y == pytest.approx(math.e * 4, rel=1e-12)
        assert bn.int_Y == pytest.approx(4 * (math.e - 1), abs=2 / N * 4 * math.e)
        assert bn.int_Z < 1e-20 and bn.K_T2 == 0

    def test_zero(self, tree):
        bar = make_barrier({"family": "constant", "params": {"c": 0.0}}, tree.times, tree.node_L)
        s = solve_penalized(tree, DriverPair(), bar, 10)
        bn = beta_norms(s, bar, DriverPair(), tree, 1.0)
        assert bn.solution == 0 and bn.data == 0 and bn.ratio == 0

    def test_components_nonnegative(self, tree):
        f = make_driver({"family": "affine", "params": {"a": 0.1, "b": -0.5, "c": [0.2]}})
        d, bar, s = _solve(tree, f, BAR)
        bn = beta_norms(s, bar, d, tree, 2.0)
        assert all(v >= 0 for v in bn.as_dict().values())

    def test_second_moment_brute_force(self):
        tr = build_tree(LevyMeasure.from_atoms([(1, 1), (-0.5, 2)]), T=1, N=4, P=2, recombining=True)
        rng = np.random.default_rng(0)
        inc = [rng.normal(size=(2, tr.n_nodes(k))) for k in range(4)]
        # enumerate all outcome sequences
        total = np.zeros(2)
        import itertools

        for seq in itertools.product(range(tr.n_outcomes), repeat=4):
            node, s, pr = 0, np.zeros(2), 1.0
            for k, o in enumerate(seq):
                s = s + inc[k][:, node]
                pr *= tr.probs[o]
                node = tr.children[k][node, o]
            total += pr * s**2
        assert second_moment_of_sum(tr, inc) == pytest.approx(total.mean(), rel=1e-12)

    def test_beta_must_be_positive(self, tree):
        d, bar, s = _solve(tree, Driver(), BAR)
        with pytest.raises(ValueError):
            beta_norms(s, bar, d, tree, 0.0)
