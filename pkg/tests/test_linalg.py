from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnet_sandpile.linalg import (
    bareiss_det,
    in_span_mod_p,
    nullspace_mod_p,
    rank_mod_p,
    rref_mod_p,
    solve_rational,
)

small = st.integers(-6, 6)


def _laplace_det(m):
    # cofactor expansion, fine for n <= 5
    if len(m) == 1:
        return m[0][0]
    return sum((-1) ** j * m[0][j] * _laplace_det([row[:j] + row[j + 1:] for row in m[1:]])
               for j in range(len(m)))


def test_bareiss_known_values():
    assert bareiss_det([]) == 1
    assert bareiss_det([[4, 0, -2], [0, 4, -2], [-2, -2, 4]]) == 32
    assert bareiss_det([[0, 1], [1, 0]]) == -1
    assert bareiss_det([[1, 2], [2, 4]]) == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.lists(st.lists(small, min_size=n, max_size=n),
                                                    min_size=n, max_size=n)))
def test_bareiss_matches_cofactor(m):
    assert bareiss_det(m) == _laplace_det(m)


def test_rref_small():
    red, piv = rref_mod_p([[2, 4], [1, 3]], 2, 5)
    assert piv == [0, 1] and red == [[1, 0], [0, 1]]


def test_nullspace_of_two_by_two_torus_laplacian():
    m = [[4, 0, -2], [0, 4, -2], [-2, -2, 4]]
    assert len(nullspace_mod_p(m, 3, 2)) == 3
    assert nullspace_mod_p(m, 3, 3) == []


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([2, 3, 5, 7]), st.integers(1, 4), st.integers(1, 4), st.data())
def test_nullspace_is_kernel_and_complete(p, r, c, data):
    m = data.draw(st.lists(st.lists(st.integers(0, p - 1), min_size=c, max_size=c),
                           min_size=r, max_size=r))
    basis = nullspace_mod_p(m, c, p)
    A = np.array(m)
    for v in basis:
        assert not (A @ np.array(v) % p).any()
    assert len(basis) + rank_mod_p(m, c, p) == c
    # brute force count of kernel vectors
    count = sum(1 for x in product(range(p), repeat=c) if not (A @ np.array(x) % p).any())
    assert count == p ** len(basis)


def test_in_span():
    assert in_span_mod_p([2, 4], [[1, 2]], 7)
    assert not in_span_mod_p([1, 0], [[1, 2]], 7)
    assert in_span_mod_p([0, 0], [], 3)


def test_solve_rational():
    x = solve_rational([[2, 1], [1, 3]], [1, 0])
    assert x == [Fraction(3, 5), Fraction(-1, 5)]
    with pytest.raises(ZeroDivisionError):
        solve_rational([[1, 2], [2, 4]], [1, 1])
