"""Comparison of two reflected solutions.

Solves the same problem with a lowered driver and barrier, then checks that the
solutions are ordered.  A second pair uses a strongly negative ``z``
coefficient, which breaks the positivity condition and with it the ordering.

Run with ``python demos/comparison.py``.
"""

import numpy as np

from rbdsde import (
    DriverPair,
    LevyMeasure,
    RegulatedPath,
    build_tree,
    comparison_check,
    comparison_instance,
    make_barrier,
    make_driver,
    solve_penalized,
)


def show(label, rep) -> None:
    print(f"{label}: holds={rep.holds} class={rep.classification} max_violation={rep.max_violation:.3e} "
          f"min lattice weight={rep.min_lattice_weight:.3f} min gamma factor={rep.min_gamma_factor:.3f}")


def main() -> None:
    tree = build_tree(LevyMeasure.from_atoms([(1.0, 1.0), (-0.5, 2.0)]), T=1.0, N=20, P=4, seed=7)
    spec = {"family": "poly_L", "params": {"coeffs": [0.5, 0.3], "slope": -0.5}}
    f2 = make_driver({"family": "affine", "params": {"a": 0.2, "b": 0.5, "c": [0.3, -0.2]}})
    f1 = make_driver({"family": "affine", "params": {"a": -0.8, "b": 0.5, "c": [0.3, -0.2]}})
    d1, d2 = DriverPair(f1), DriverPair(f2)
    b2 = make_barrier(spec, tree.times, tree.node_L)
    b1 = make_barrier(dict(spec, params=dict(spec["params"], coeffs=[0.0, 0.3])), tree.times, tree.node_L)
    s1, s2 = solve_penalized(tree, d1, b1, 256), solve_penalized(tree, d2, b2, 256)
    show("ordered data", comparison_check(comparison_instance(tree, s1, s2, d1, d2)))

    # a large negative z-coefficient makes the one-step weights negative
    tr = build_tree(LevyMeasure.from_atoms([(1.0, 1.0)]), T=1.0, N=4, P=1, seed=1)
    d = DriverPair(make_driver({"family": "affine", "params": {"c": [-50.0]}}))
    hi = make_barrier({"family": "poly_L", "params": {"coeffs": [0.0, 1.0]}}, tr.times, tr.node_L)
    lo = make_barrier({"family": "poly_L", "params": {"coeffs": [-1.0, 1.0]}}, tr.times, tr.node_L)
    term = np.minimum(hi.v[-1], 0.0)
    lo = RegulatedPath(tr.times, lo.v[:-1] + (term,), lo.v_plus[:-1] + (term,))
    rep = comparison_check(comparison_instance(tr, solve_penalized(tr, d, lo, 0), solve_penalized(tr, d, hi, 0), d, d))
    show("negative z-coefficient", rep)
    print(f"worst node (k, side, scenario, node): {rep.worst_node}")


if __name__ == "__main__":
    main()
