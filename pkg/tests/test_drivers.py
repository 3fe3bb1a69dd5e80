import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbdsde import Driver, DriverPair, InvalidInputError, make_driver


def test_affine_value():
    d = make_driver({"family": "affine", "params": {"a": 1, "b": 2, "c": [3, -1], "d": 0.5}})
    y = np.array([1.0])
    z = np.array([[1.0, 2.0]])
    assert d(2.0, y, z)[0] == pytest.approx(1 + 1 + 2 + 3 - 2)


def test_zero_driver_shape():
    assert make_driver(None)(0.0, np.ones((2, 3)), np.ones((2, 3, 1))).shape == (2, 3)


def test_alpha_half_rejected():
    with pytest.raises(InvalidInputError):
        DriverPair(Driver(), Driver(alpha=0.5))


def test_alpha_zero_rejected():
    with pytest.raises(InvalidInputError):
        DriverPair(Driver(), Driver(alpha=0.0))


def test_unknown_family():
    with pytest.raises(InvalidInputError):
        Driver("cubic")


def test_declared_constant_too_small():
    d = Driver("affine", {"b": 2.0}, L=1.0)
    with pytest.raises(InvalidInputError):
        DriverPair(d).verify(1)


def test_natural_constants_pass():
    g = make_driver({"family": "affine", "params": {"b": 0.1, "c": [0.2]}}, "g")
    assert g.alpha == pytest.approx(0.08)
    DriverPair(make_driver({"family": "sine", "params": {"a": 0.5, "b": 2}}), g).verify(1)


def test_dependence_flags():
    assert not make_driver({"family": "sine", "params": {"a": 0.0}}).depends_on_y
    assert make_driver({"family": "znorm", "params": {"c": 1.0}}).depends_on_z
    assert DriverPair().g_exogenous


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["affine", "sine", "znorm"]),
    st.floats(-2, 2),
    st.floats(-2, 2),
    st.lists(st.floats(-1, 1), min_size=2, max_size=2),
)
def test_natural_constants_are_valid(family, a, b, c):
    params = {"a": a, "b": b, "c": c if family == "affine" else c[0], "clip": 3.0}
    f = make_driver({"family": family, "params": params}, "f")
    assert f.check_lipschitz(2, "f") <= 1 + 1e-9
    g = make_driver({"family": family, "params": params, "alpha": 0.49}, "g")
    ag = g.natural_constants()[2]
    if ag < 0.49:
        assert g.check_lipschitz(2, "g") <= 1 + 1e-9
