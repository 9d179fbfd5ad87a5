import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from autoda.core import (
    AttackTrace, BudgetExhausted, QueryBudget, ShapeMismatch, TracePoint, as_input, clamp_to_domain,
    distance_at, is_adversarial, l2_distance,
)
from autoda.victims import HyperplaneOracle


class ConstantOracle:
    def __init__(self, label):
        self.label = label

    def label_of(self, x):
        return self.label

    def class_count(self):
        return 10

    def input_shape(self):
        return (2,)


def test_original_is_not_adversarial():
    assert not is_adversarial(ConstantOracle(3), np.zeros(2), 3, QueryBudget(5))


def test_hyperplane_crossing_is_adversarial():
    oracle = HyperplaneOracle([1.0, 0.0], 0.5)
    x0 = np.array([0.2, 0.2])
    budget = QueryBudget(5)
    label = oracle.label_of(x0)
    assert label == 0
    assert is_adversarial(oracle, np.array([0.9, 0.2]), label, budget)
    assert budget.used == 1


def test_budget_boundary():
    budget = QueryBudget(2, used=2)
    with pytest.raises(BudgetExhausted):
        is_adversarial(ConstantOracle(0), np.zeros(2), 0, budget)
    assert budget.used == 2


def test_budget_counts_each_call():
    budget = QueryBudget(3)
    for i in range(3):
        is_adversarial(ConstantOracle(1), np.zeros(2), 0, budget)
        assert budget.used == i + 1
    assert budget.remaining == 0


def test_budget_must_be_positive():
    with pytest.raises(ValueError):
        QueryBudget(0)


@pytest.mark.parametrize("a, b, expected", [
    ([0.3, 0.4], [0.3, 0.4], 0.0),
    ([1, 0, 0], [0, 0, 0], 1.0),
    ([0.5, 0.5], [0.1, 0.2], 0.5),
])
def test_l2_distance(a, b, expected):
    assert l2_distance(np.array(a, float), np.array(b, float)) == pytest.approx(expected, abs=1e-15)


def test_l2_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        l2_distance(np.zeros(3), np.zeros(4))


def test_l2_on_images():
    a = np.zeros((3, 2, 2))
    b = np.ones((3, 2, 2))
    assert l2_distance(a, b) == pytest.approx(np.sqrt(12))


vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10, allow_nan=False))


@given(vec3, vec3, vec3)
def test_triangle_inequality_and_symmetry(a, b, c):
    assert l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-9
    assert l2_distance(a, b) == l2_distance(b, a)


@pytest.mark.parametrize("x, expected", [
    ([0.5, 0.5], [0.5, 0.5]),
    ([-0.2, 1.3], [0.0, 1.0]),
    ([1.0, 0.0], [1.0, 0.0]),
])
def test_clamp(x, expected):
    assert clamp_to_domain(np.array(x)).tolist() == expected


@given(arrays(np.float64, 5, elements=st.floats(-5, 5, allow_nan=False)))
def test_clamp_idempotent(x):
    once = clamp_to_domain(x)
    np.testing.assert_array_equal(clamp_to_domain(once), once)
    assert once.min() >= 0.0 and once.max() <= 1.0


def test_as_input_reshapes():
    assert as_input(range(12), (3, 2, 2)).shape == (3, 2, 2)
    with pytest.raises(ShapeMismatch):
        as_input(range(5), (2, 2))


def test_distance_at_checkpoints():
    points = [TracePoint(1, 0.9, False), TracePoint(4, 0.5, True), TracePoint(9, 0.2, True)]
    trace = AttackTrace(points, np.zeros(2), seed=0)
    assert distance_at(points, 0) == float("inf")
    assert trace.distance_at(3) == 0.9
    assert trace.distance_at(4) == 0.5
    assert trace.distance_at(100) == 0.2
    assert trace.queries == 3 and trace.accepted_count == 2 and trace.d_min == 0.2
