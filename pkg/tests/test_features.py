import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gbp.errors import FormatError, ValidationError
from gbp.features import load_features, normalize
from gbp.graph import degree_power
from gbp.oracle import exact_propagate


def test_already_normalized_column(pair):
    seed = normalize(np.array([[1.0], [0.0]]), pair, r=0)
    assert np.array_equal(seed.values[:, 0], [1.0, 0.0])
    assert seed.column_norms[0] == 1.0


def test_degree_scaling_then_l1(pair):
    # D^{-1/2} X = (1/sqrt2, 0), norm 1/sqrt2, seed (1, 0)
    seed = normalize(np.array([[1.0], [0.0]]), pair, r=0.5)
    assert seed.column_norms[0] == pytest.approx(1 / np.sqrt(2), rel=1e-15)
    assert np.allclose(seed.values[:, 0], [1.0, 0.0], atol=1e-15)


def test_zero_column_passes_through(pair):
    seed = normalize(np.array([[0.0, 2.0], [0.0, 2.0]]), pair, r=0.5)
    assert np.array_equal(seed.values[:, 0], [0.0, 0.0])
    assert seed.column_norms[0] == 1.0
    assert np.abs(seed.values[:, 1]).sum() == pytest.approx(1.0)


def test_dimension_and_finiteness_checks(pair):
    with pytest.raises(ValidationError):
        normalize(np.ones((3, 1)), pair, 0.5)
    with pytest.raises(ValidationError):
        normalize(np.array([[np.nan], [1.0]]), pair, 0.5)


def test_load_features():
    x = load_features(io.StringIO("1 0\n0 1"), 2)
    assert np.array_equal(x, np.eye(2))
    x = load_features(io.StringIO("1\n2\n3"), 3)
    assert x.shape == (3, 1) and list(x[:, 0]) == [1, 2, 3]


@pytest.mark.parametrize("text,n,match", [
    ("1 2\n3", 2, "ragged"),
    ("1 a\n3 4", 2, "non-numeric"),
    ("1\n2", 3, "expected 3"),
])
def test_load_features_errors(text, n, match):
    with pytest.raises(FormatError, match=match):
        load_features(io.StringIO(text), n)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (60, 3), elements=st.floats(-5, 5)), st.sampled_from([0.0, 0.5, 1.0]))
def test_normalized_columns_have_unit_l1(er_graph, x, r):
    seed = normalize(x, er_graph, r)
    sums = np.abs(seed.values).sum(axis=0)
    nonzero = np.abs(x).sum(axis=0) > 0
    assert np.allclose(sums[nonzero], 1.0, atol=1e-12)
    assert np.all(sums[~nonzero] == 0)


def test_normalize_idempotent(er_graph):
    x = np.random.default_rng(0).random((60, 3))
    once = normalize(x, er_graph, 0.5)
    twice = normalize(once.values, er_graph, 0)
    assert np.allclose(twice.values, once.values, rtol=1e-14, atol=0)
    assert np.allclose(twice.column_norms, 1.0, atol=1e-14)


def test_denormalization_commutes_with_propagation(er_graph):
    rng = np.random.default_rng(1)
    x = rng.random((60, 3))
    r, L, w = 0.5, 3, [0.4, 0.3, 0.2, 0.1]
    seed = normalize(x, er_graph, r)
    dr = degree_power(er_graph, r)[:, None]
    raw = exact_propagate(er_graph, x, L, r, w).P
    scaled = exact_propagate(er_graph, dr * seed.values, L, r, w).P * seed.column_norms
    assert np.allclose(scaled, raw, rtol=1e-12, atol=0)
