import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from budgeted_svc.exceptions import InvalidInputError
from budgeted_svc.kernel_model import KernelExpansion, KernelSpec, kernel_eval, sq_distances

finite = st.floats(-5, 5, allow_nan=False)


def _model(points, alphas, gamma=0.5):
    return KernelExpansion.from_terms(KernelSpec(gamma), np.asarray(points, float), alphas)


def test_kernel_eval_matches_definition():
    spec = KernelSpec(0.7)
    assert kernel_eval(spec, [0, 0], [0, 0]) == 1.0
    assert kernel_eval(spec, [1, 2], [0, 0]) == pytest.approx(math.exp(-0.7 * 5), rel=1e-15)


def test_kernel_eval_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        kernel_eval(KernelSpec(1.0), [0, 0], [0, 0, 0])


@pytest.mark.parametrize("gamma", [0.0, -1.0, math.inf, math.nan])
def test_kernel_spec_rejects_bad_gamma(gamma):
    with pytest.raises(InvalidInputError):
        KernelSpec(gamma)


def test_sq_distances_symmetric_nonnegative():
    X = np.random.default_rng(0).standard_normal((30, 4))
    D = sq_distances(X, X)
    assert np.array_equal(D, D.T)
    assert D.min() >= 0 and np.all(np.diag(D) == 0)


def test_empty_model_decision_is_minus_one():
    m = KernelExpansion(KernelSpec(1.0), 2)
    assert m.decision_value([3.0, 4.0]) == -1.0
    assert m.norm == 0.0


def test_decision_function_matches_oracle():
    rng = np.random.default_rng(1)
    P, a = rng.standard_normal((6, 3)), rng.uniform(-1, 1, 6)
    m = _model(P, a)
    X = rng.standard_normal((5, 3))
    expected = [oracles.decision(P, a, 0.5, x) for x in X]
    np.testing.assert_allclose(m.decision_function(X), expected, rtol=0, atol=1e-14)
    assert m.decision_value(X[0]) == pytest.approx(expected[0], abs=1e-14)


def test_duplicate_point_increments_coefficient():
    m = KernelExpansion(KernelSpec(1.0), 2)
    assert m.add_term([1.0, 2.0], 0.5) == (0, True)
    assert m.add_term([1.0, 2.0], 0.25) == (0, False)
    assert len(m) == 1 and m.alphas[0] == 0.75


def test_zero_coefficient_is_noop():
    m = KernelExpansion(KernelSpec(1.0), 2)
    assert m.add_term([1.0, 2.0], 0.0) == (None, False)
    assert len(m) == 0


def test_negative_zero_key_matches_zero():
    m = KernelExpansion(KernelSpec(1.0), 1)
    m.add_term([0.0], 1.0)
    m.add_term([-0.0], 1.0)
    assert len(m) == 1 and m.alphas[0] == 2.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite, st.floats(-2, 2).filter(lambda v: abs(v) > 1e-3)),
                min_size=1, max_size=12),
       st.lists(st.integers(0, 11), max_size=5))
def test_incremental_norm_matches_gram(terms, removals):
    m = KernelExpansion(KernelSpec(0.3), 2)
    for x, y, a in terms:
        m.add_term([x, y], a)
        m.scale_coefficients(0.9)
    for r in removals:
        if len(m):
            m.remove_term(r % len(m))
    expected = oracles.rkhs_norm_sq(m.points, m.alphas, 0.3)
    assert m.norm_sq == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_remove_term_shifts_index():
    m = _model([[0, 0], [1, 0], [2, 0]], [1.0, 2.0, 3.0])
    x, a = m.remove_term(0)
    assert a == 1.0 and x.tolist() == [0.0, 0.0]
    assert m.find([2.0, 0.0]) == 1
    assert m.find([0.0, 0.0]) is None
    with pytest.raises(InvalidInputError):
        m.remove_term(5)


def test_kernel_eval_counter():
    m = _model([[0, 0], [1, 0], [2, 0]], [1.0, 2.0, 3.0])
    m.n_kernel_evals = 0
    m.margin_score([0.5, 0.5])
    assert m.n_kernel_evals == 3
    m.add_term([0.5, 0.5], 0.1, score=0.0)
    assert m.n_kernel_evals == 4


def test_json_round_trip_is_exact():
    rng = np.random.default_rng(2)
    m = _model(rng.standard_normal((5, 3)), rng.uniform(0.01, 1, 5), gamma=0.123456789)
    text = m.to_json()
    back = KernelExpansion.from_json(text)
    assert np.array_equal(back.points, m.points)
    assert np.array_equal(back.alphas, m.alphas)
    assert back.to_json() == text
    obj = json.loads(text)
    assert set(obj) == {"kernel", "rho", "dim", "support"}
    assert obj["kernel"] == {"kind": "rbf", "gamma": 0.123456789}


@pytest.mark.parametrize("bad", [
    {"kernel": {"kind": "rbf"}, "dim": 1, "support": []},
    {"kernel": {"kind": "poly", "gamma": 1}, "dim": 1, "support": []},
    {"kernel": {"kind": "rbf", "gamma": 1}, "dim": 2, "support": [{"x": [1], "alpha": 1}]},
    {"kernel": {"kind": "rbf", "gamma": 1}, "dim": 1, "rho": 2, "support": []},
])
def test_from_dict_rejects_malformed(bad):
    with pytest.raises(InvalidInputError):
        KernelExpansion.from_dict(bad)


def test_batch_shape_validation():
    m = _model([[0, 0]], [1.0])
    with pytest.raises(InvalidInputError):
        m.decision_function(np.zeros((3, 3)))
