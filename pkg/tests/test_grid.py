import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadnorm_kit.grid import (
    FIELDS,
    FieldTensor,
    InvalidGridError,
    exact_mean,
    nonuniform_grid_1d,
    periodic_grid,
    sample_field,
    stretch_map,
    tensor_grid,
    uniform_grid,
)


def test_uniform_grid_three_nodes():
    g = uniform_grid([3])
    np.testing.assert_array_equal(g.axes[0].coords, [0.0, 0.5, 1.0])
    assert g.h == 0.5


def test_uniform_grid_two_nodes():
    np.testing.assert_array_equal(uniform_grid([2]).axes[0].coords, [0.0, 1.0])


def test_uniform_grid_2d_spacings():
    g = uniform_grid([3, 5])
    assert g.shape == (3, 5)
    assert g.spacings == (0.5, 0.25)


def test_uniform_grid_rejects_single_node():
    with pytest.raises(InvalidGridError):
        uniform_grid([1])


def test_periodic_grid_examples():
    np.testing.assert_array_equal(periodic_grid([4]).axes[0].coords, [0, 0.25, 0.5, 0.75])
    np.testing.assert_array_equal(periodic_grid([1]).axes[0].coords, [0.0])
    assert periodic_grid([4, 4]).size == 16
    assert periodic_grid([4, 4]).kinds == ("periodic", "periodic")


def test_chebyshev_three_nodes():
    np.testing.assert_array_equal(nonuniform_grid_1d("chebyshev", 3).axes[0].coords, [0, 0.5, 1])


def test_custom_coords_verbatim():
    c = [0.0, 0.1, 0.5, 1.0]
    np.testing.assert_array_equal(nonuniform_grid_1d("custom", coords=c).axes[0].coords, c)


@pytest.mark.parametrize("bad", [[0.0, 0.5, 0.4, 1.0], [0.1, 0.5, 1.0], [0.0, 0.5, 0.9]])
def test_custom_coords_rejected(bad):
    with pytest.raises(InvalidGridError):
        nonuniform_grid_1d("custom", coords=bad)


def test_boundary_refined_clusters_and_is_symmetric():
    c = nonuniform_grid_1d("boundary_refined", 5, strength=2.0).axes[0].coords
    assert c[1] < 0.25
    np.testing.assert_array_equal(c + c[::-1], np.ones(5))
    # independent evaluation of the tanh map at t = 1/4
    expected = 0.5 * (np.tanh(2.0 * (0.5 - 1.0)) / np.tanh(2.0) + 1.0)
    assert c[1] == pytest.approx(expected, abs=1e-15)


def test_stretch_strength_zero_is_identity():
    t = np.linspace(0, 1, 9)
    np.testing.assert_array_equal(stretch_map(t, 0.0), t)


@given(st.integers(2, 300))
def test_uniform_spacing_is_constant(n):
    ax = uniform_grid([n]).axes[0]
    d = np.diff(ax.coords)
    assert abs(d.max() - 1 / (n - 1)) < 1e-14
    assert abs(d.min() - 1 / (n - 1)) < 1e-14


@given(st.integers(3, 200), st.floats(0.0, 6.0))
def test_boundary_refined_monotone_and_ratio(n, s):
    g = nonuniform_grid_1d("boundary_refined", n, strength=s)
    c = g.axes[0].coords
    assert c[0] == 0.0 and c[-1] == 1.0
    assert np.all(np.diff(c) > 0)
    assert g.nonuniformity_ratio() >= 1.0 - 1e-12


def test_sample_field_examples():
    g = uniform_grid([3])
    np.testing.assert_array_equal(sample_field("quadratic1d", g).data[0, 0], [0, 0.25, 1])
    c5 = sample_field("constant", uniform_grid([4, 3]), c=5.0)
    assert np.all(c5.data == 5.0)
    g2 = uniform_grid([3, 2])  # nodes x in {0, .5, 1}, y in {0, 1}
    v = sample_field("mixed2d", g2).data[0, 0]
    assert v[1, 0] == pytest.approx(1.25, abs=1e-15)


def test_sample_field_dimension_mismatch():
    with pytest.raises(ValueError):
        sample_field("mixed2d", uniform_grid([5]))


def test_sample_field_channels_differ_and_deterministic():
    g = uniform_grid([9, 9])
    a = sample_field("mixed2d", g, channels=3, batch=2)
    b = sample_field("mixed2d", g, channels=3, batch=2)
    assert a.data.shape == (2, 3, 9, 9)
    assert a.data.tobytes() == b.data.tobytes()
    assert not np.array_equal(a.data[0, 0], a.data[0, 1])


@pytest.mark.parametrize("field_id", sorted(FIELDS))
def test_registered_integrals_match_fine_trapezoid(field_id):
    # guards the oracle: independent composite trapezoid on n = 4097 per axis
    d = (FIELDS[field_id].dims or (1,))[0]
    n = 4097
    x = np.linspace(0, 1, n)
    w = np.full(n, 1.0 / (n - 1))
    w[[0, -1]] /= 2
    f = FIELDS[field_id]
    if d == 1:
        est = float(w @ f(x))
    else:
        # row by row to keep memory small
        est = float(sum(wi * (w @ f(np.full(n, xi), x)) for xi, wi in zip(x, w)))
    assert abs(est - exact_mean(field_id)) < 1e-8


def test_exp_integral_against_scipy():
    from scipy.integrate import quad

    val, _ = quad(np.exp, 0, 1)
    assert exact_mean("exp1d") == pytest.approx(val, abs=1e-13)


def test_tensor_grid_and_field_tensor_validation():
    g = tensor_grid(uniform_grid([3]), nonuniform_grid_1d("chebyshev", 5))
    assert g.shape == (3, 5)
    assert g.kinds == ("uniform_endpoint", "nonuniform")
    with pytest.raises(ValueError):
        FieldTensor(np.zeros((1, 1, 3, 4)), g)
