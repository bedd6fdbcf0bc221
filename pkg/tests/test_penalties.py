"""Penalty shapes as property tests: bounds, symmetry, zeros, limits."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepfbsde.autodiff import ops
from deepfbsde.penalties import (ConstraintSpec, PenaltySpec, excursions,
                                 logistic_penalty, penalty, relu_penalty,
                                 violations)

finite = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False,
                   allow_infinity=False)


def scalar_logistic(lo, hi, L, k):
    con = ConstraintSpec(C=[[1.0]], lower=[lo], upper=[hi])
    return PenaltySpec(kind="logistic", constraint=con, max_value=L,
                       steepness=k)


def peval(pen, values):
    x = np.asarray(values, float).reshape(-1, 1)
    return ops.value(penalty(x, pen))[:, 0]


@given(lo=finite, width=st.floats(0.1, 40.0), L=st.floats(0.5, 20.0),
       k=st.floats(0.05, 10.0))
@settings(max_examples=200, deadline=None)
def test_logistic_zero_at_midpoint(lo, width, L, k):
    pen = scalar_logistic(lo, lo + width, L, k)
    mu = lo + 0.5 * width
    assert abs(peval(pen, [mu])[0]) < 1e-12


@given(lo=finite, width=st.floats(0.1, 40.0), L=st.floats(0.5, 20.0),
       k=st.floats(0.05, 10.0), c=st.floats(-500.0, 500.0))
@settings(max_examples=300, deadline=None)
def test_logistic_bounded_between_zero_and_2L(lo, width, L, k, c):
    pen = scalar_logistic(lo, lo + width, L, k)
    val = peval(pen, [c])[0]
    assert -1e-12 <= val < 2.0 * L


@given(lo=finite, width=st.floats(0.1, 40.0), L=st.floats(0.5, 20.0),
       k=st.floats(0.05, 10.0), d=st.floats(0.0, 100.0))
@settings(max_examples=300, deadline=None)
def test_logistic_symmetric_about_midpoint(lo, width, L, k, d):
    pen = scalar_logistic(lo, lo + width, L, k)
    mu = lo + 0.5 * width
    left, right = peval(pen, [mu - d, mu + d])
    assert abs(left - right) < 1e-12 * max(1.0, abs(left))


@given(lo=finite, width=st.floats(0.1, 40.0), L=st.floats(0.5, 20.0),
       k=st.floats(0.05, 10.0), d=st.floats(0.1, 30.0))
@settings(max_examples=200, deadline=None)
def test_logistic_monotone_away_from_midpoint(lo, width, L, k, d):
    pen = scalar_logistic(lo, lo + width, L, k)
    mu = lo + 0.5 * width
    near, far = peval(pen, [mu + d, mu + 2.0 * d])
    assert far >= near - 1e-12


def test_logistic_saturation_value():
    """Far outside the band the penalty approaches L tanh(k w / 4)."""
    L, k, lo, hi = 5.0, 2.0, -1.0, 3.0
    pen = scalar_logistic(lo, hi, L, k)
    limit = L * np.tanh(k * (hi - lo) / 4.0)
    assert abs(peval(pen, [1e6])[0] - limit) < 1e-9
    assert abs(peval(pen, [-1e6])[0] - limit) < 1e-9


@given(bound=finite, L=st.floats(0.5, 20.0), k=st.floats(0.05, 10.0),
       depth=st.floats(5.0, 200.0))
@settings(max_examples=200, deadline=None)
def test_one_sided_logistic_vanishes_deep_inside(bound, L, k, depth):
    upper_only = PenaltySpec(
        kind="logistic", max_value=L, steepness=k,
        constraint=ConstraintSpec(C=[[1.0]], lower=[-np.inf], upper=[bound]))
    inside = peval(upper_only, [bound - depth - 50.0 / k])[0]
    assert abs(inside) < 1e-9
    far_out = peval(upper_only, [bound + depth + 50.0 / k])[0]
    assert abs(far_out - L) < 1e-9

    lower_only = PenaltySpec(
        kind="logistic", max_value=L, steepness=k,
        constraint=ConstraintSpec(C=[[1.0]], lower=[bound], upper=[np.inf]))
    assert abs(peval(lower_only, [bound + depth + 50.0 / k])[0]) < 1e-9
    assert abs(peval(lower_only, [bound - depth - 50.0 / k])[0] - L) < 1e-9


@given(lo=finite, width=st.floats(0.1, 40.0), k=st.floats(0.05, 10.0),
       alpha=st.floats(0.1, 20.0), t=st.floats(0.0, 1.0))
@settings(max_examples=300, deadline=None)
def test_relu_zero_on_feasible_set(lo, width, k, alpha, t):
    con = ConstraintSpec(C=[[1.0]], lower=[lo], upper=[lo + width])
    pen = PenaltySpec(kind="relu", constraint=con, steepness=k, slope=alpha)
    c = lo + t * width                    # anywhere inside the band
    assert peval(pen, [c])[0] == 0.0


@given(lo=finite, width=st.floats(0.1, 40.0), k=st.floats(0.05, 10.0),
       alpha=st.floats(0.1, 20.0), d=st.floats(0.01, 100.0))
@settings(max_examples=300, deadline=None)
def test_relu_linear_outside(lo, width, k, alpha, d):
    con = ConstraintSpec(C=[[1.0]], lower=[lo], upper=[lo + width])
    pen = PenaltySpec(kind="relu", constraint=con, steepness=k, slope=alpha)
    above, below = peval(pen, [lo + width + d, lo - d])
    np.testing.assert_allclose(above, k * alpha * d, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(below, k * alpha * d, rtol=1e-9, atol=1e-9)


def test_multi_row_penalties_sum(rng):
    con = ConstraintSpec(C=[[1.0, 0.0], [0.0, 1.0]], lower=[-1.0, -2.0],
                         upper=[1.0, 2.0])
    pen = PenaltySpec(kind="logistic", constraint=con, max_value=5.0,
                      steepness=2.0)
    x = rng.normal(size=(10, 2)) * 3.0
    total = ops.value(logistic_penalty(x, pen))[:, 0]

    row0 = scalar_logistic(-1.0, 1.0, 5.0, 2.0)
    row1 = scalar_logistic(-2.0, 2.0, 5.0, 2.0)
    np.testing.assert_allclose(total, peval(row0, x[:, 0]) + peval(row1, x[:, 1]),
                               rtol=1e-12)


def test_none_penalty_is_scalar_zero(rng):
    assert penalty(rng.normal(size=(3, 2)), None) == 0.0
    pen = PenaltySpec(kind="none")
    assert penalty(rng.normal(size=(3, 2)), pen) == 0.0


def test_violations_and_excursions(rng):
    con = ConstraintSpec(C=[[1.0, 0.0], [0.0, 1.0]], lower=[-1.0, -np.inf],
                         upper=[1.0, 2.0])
    x = np.array([[0.0, 0.0],      # inside
                  [1.5, 0.0],      # row 0 above
                  [0.0, 2.5],      # row 1 above
                  [-2.0, 3.0],     # both out
                  [1.0, 2.0]])     # exactly on the bounds: not a violation
    v = violations(x, con)
    np.testing.assert_array_equal(v, [False, True, True, True, False])
    e = excursions(x, con)
    np.testing.assert_allclose(e, [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5],
                                   [1.0, 1.0], [0.0, 0.0]], atol=1e-15)


def test_penalty_spec_validation():
    con = ConstraintSpec(C=[[1.0]], lower=[-1.0], upper=[1.0])
    with pytest.raises(ValueError, match="kind"):
        PenaltySpec(kind="quartic", constraint=con)
    with pytest.raises(ValueError, match="constraint"):
        PenaltySpec(kind="logistic")
    with pytest.raises(ValueError, match="max_value"):
        PenaltySpec(kind="logistic", constraint=con, max_value=0.0)
    with pytest.raises(ValueError, match="steepness"):
        PenaltySpec(kind="relu", constraint=con, steepness=-1.0)
    with pytest.raises(ValueError, match="lower"):
        ConstraintSpec(C=[[1.0]], lower=[2.0], upper=[1.0])
    with pytest.raises(ValueError, match="row"):
        ConstraintSpec(C=[[1.0]], lower=[-1.0, 0.0], upper=[1.0])


def test_relu_penalty_matches_direct_formula(rng):
    con = ConstraintSpec(C=[[1.0, -1.0]], lower=[0.0], upper=[np.inf])
    pen = PenaltySpec(kind="relu", constraint=con, steepness=2.0, slope=10.0)
    x = rng.normal(size=(20, 2))
    c = x @ con.C.T
    expect = 20.0 * np.maximum(-c, 0.0)
    np.testing.assert_allclose(ops.value(relu_penalty(x, pen)), expect,
                               rtol=1e-13)
