import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conewitten.errors import InvalidParameterError
from conewitten.morse_checker import alternating_partial, check_inequalities, total_counts


@pytest.mark.parametrize(
    "smooth, contribs, total",
    [
        ((0, 0, 1), [(1, 0, 0)], (1, 0, 1)),
        ((0, 0, 0), [(1, 0, 0), (0, 0, 1)], (1, 0, 1)),
        ((1, 2, 1), [], (1, 2, 1)),
    ],
)
def test_total_counts(smooth, contribs, total):
    assert total_counts(smooth, contribs).total == total


@pytest.mark.parametrize(
    "c, b, margins, passed, first",
    [
        ((1, 0, 1), (1, 0, 1), (0, 0), True, None),
        ((2, 1, 1), (1, 0, 1), (1, 0), True, None),
        ((0, 0, 1), (1, 0, 1), (-1, 1), False, 0),
        ((1, 0, 0), (1, 1, 1), (0, -1), False, 1),
    ],
)
def test_check_inequalities(c, b, margins, passed, first):
    v = check_inequalities(total_counts(c, (), b))
    assert v.margins[:len(margins)] == margins
    assert v.passed is passed
    assert v.first_failure == first


def test_euler_failure_detected():
    v = check_inequalities(total_counts((1, 1, 1), (), (1, 0, 1)))
    assert v.margins == (0, 1) and not v.euler_ok and not v.passed


@pytest.mark.parametrize(
    "smooth, contribs, betti2",
    [((1, 0), [], None), ((1, 0, 1), [(1, 0)], None), ((1, 0, 1), [], (1, 0)), ((1, -1, 1), [], None)],
)
def test_invalid_inputs(smooth, contribs, betti2):
    with pytest.raises(InvalidParameterError):
        total_counts(smooth, contribs, betti2)


def test_betti_required():
    with pytest.raises(InvalidParameterError):
        check_inequalities(total_counts((1, 0, 1)))


def test_alternating_partial():
    assert alternating_partial((3, 1, 2), 2) == 3 - 1 + 2
    assert alternating_partial((3, 1, 2), 1) == 1 - 3


@settings(max_examples=200, derandomize=True)
@given(st.integers(1, 3).flatmap(lambda nu: st.lists(st.integers(0, 6), min_size=2 * nu + 1,
                                                     max_size=2 * nu + 1)))
def test_counts_equal_betti_always_pass(b):
    assert check_inequalities(total_counts(b, (), b)).passed


@settings(max_examples=200, derandomize=True)
@given(st.integers(1, 3).flatmap(lambda nu: st.lists(st.integers(0, 6), min_size=2 * nu + 1,
                                                     max_size=2 * nu + 1)),
       st.integers(0, 5), st.integers(0, 6))
def test_cancelling_pairs_keep_pass(b, i, extra):
    # adding a pair of critical points in adjacent indices keeps every inequality
    i = i % (len(b) - 1)
    c = list(b)
    c[i] += extra
    c[i + 1] += extra
    v = check_inequalities(total_counts(c, (), b))
    assert v.passed and min(v.margins) >= 0
