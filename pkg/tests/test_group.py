from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnet_sandpile.group import (
    GroupError,
    TorusSandpile,
    burning_test,
    class_order,
    comparison_mask,
    creutz_beta,
    element_order,
    group_add,
    group_inverse,
    group_multiple,
    is_recurrent,
    neutral_element,
    reduced_laplacian,
    spanning_tree_count,
    to_recurrent,
    verified_order,
)
from cnet_sandpile.lattice import (
    LineWithIntervals,
    PeriodicLattice,
    RayComplement,
    Rect,
    TorusQuotient,
    TruncatedRay,
)
from cnet_sandpile.relax import relax_bulk
from cnet_sandpile.state import SandState


def _all_recurrent(G):
    """Oracle: enumerate stable states and keep the beta-fixpoints."""
    verts = G.vertices()
    beta = creutz_beta(G)
    out = []
    for vals in product(range(4), repeat=len(verts)):
        arr = np.zeros((G.m, G.n), dtype=np.int64)
        for (x, y), v in zip(verts, vals):
            arr[x, y] = v
        s = G.state(arr)
        if relax_bulk(s + beta).stable == s:
            out.append(s)
    return out


def test_creutz_beta_on_ray_and_torus():
    b = creutz_beta(TruncatedRay(4))
    assert b.sequence() == [3, 2, 2, 3]
    assert creutz_beta(RayComplement(), Rect(1, 0, 3, 0)).background == 2
    t = creutz_beta(TorusSandpile(3, 3))
    assert t.value((1, 0)) == 1 and t.value((1, 1)) == 0
    assert creutz_beta(TorusSandpile(2, 2)).value((1, 0)) == 2


def test_two_by_two_torus_group_order_is_32():
    G = TorusSandpile(2, 2)
    verts, mat = reduced_laplacian(G)
    assert verts == [(0, 1), (1, 0), (1, 1)]
    assert mat == [[4, 0, -2], [0, 4, -2], [-2, -2, 4]]
    assert spanning_tree_count(G) == 32
    assert len(_all_recurrent(G)) == 32


def test_recurrent_count_matches_matrix_tree_3x2():
    G = TorusSandpile(3, 2)
    rec = _all_recurrent(G)
    assert len(rec) == spanning_tree_count(G)
    assert all(burning_test(s) for s in rec)


def test_burning_test_agrees_with_beta_fixpoint():
    G = TorusSandpile(2, 3)
    rec = {tuple(s.cells.ravel()) for s in _all_recurrent(G)}
    verts = G.vertices()
    for vals in product(range(4), repeat=len(verts)):
        arr = np.zeros((2, 3), dtype=np.int64)
        for (x, y), v in zip(verts, vals):
            arr[x, y] = v
        s = G.state(arr)
        assert burning_test(s) == (tuple(s.cells.ravel()) in rec) == bool(is_recurrent(s))


def test_ray_identity_golden():
    e = neutral_element(TruncatedRay(30))
    assert e.sequence() == [3] + [2] * 28 + [3]


def test_ray_identity_on_line_prefix_is_recurrent():
    spec = LineWithIntervals(((3, 1),), x_max=6)
    e = neutral_element(spec)
    assert is_recurrent(e) and burning_test(e)
    assert not is_recurrent(e).exact


def test_max_stable_is_recurrent_and_zero_is_not():
    G = TorusSandpile(4, 4)
    assert burning_test(G.max_stable()) and is_recurrent(G.max_stable())
    assert not burning_test(G.zeros()) and not is_recurrent(G.zeros())
    assert not is_recurrent(G.state(np.full((4, 4), 5)))


def test_infinite_carriers_are_refused():
    s = SandState.zeros(PeriodicLattice(6, 6), Rect(0, 0, 3, 3))
    with pytest.raises(GroupError):
        neutral_element(PeriodicLattice(6, 6))
    with pytest.raises(GroupError):
        is_recurrent(s)
    with pytest.raises(GroupError):
        group_inverse(s)


def test_comparison_mask_skips_cut():
    spec = TruncatedRay(50)
    mask = comparison_mask(spec, spec.support(), 20)
    assert mask[:29].all() and not mask[30:].any()
    t = TorusQuotient(3, 3)
    assert comparison_mask(t, t.domain, 20).sum() == 8


@pytest.fixture(scope="module")
def g33():
    G = TorusSandpile(3, 3)
    return G, neutral_element(G)


def _random_recurrent(G, rng):
    return to_recurrent(G.state(rng.integers(0, 8, size=(G.m, G.n))))


def test_group_axioms_small(g33):
    G, e = g33
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b, c = (_random_recurrent(G, rng) for _ in range(3))
        assert burning_test(a)
        assert group_add(a, e) == a
        assert group_add(a, b) == group_add(b, a)
        assert group_add(group_add(a, b), c) == group_add(a, group_add(b, c))
        assert group_add(a, group_inverse(a)) == e


def test_to_recurrent_respects_class(g33):
    G, e = g33
    # a state and the same state plus a toppling-image are the same element
    x = G.state(np.array([[0, 1, 2], [3, 0, 1], [2, 2, 0]]))
    t = np.zeros((3, 3), dtype=np.int64)
    t[1, 1] = 4
    t[0, 1] -= 1
    t[2, 1] -= 1
    t[1, 0] -= 1
    t[1, 2] -= 1
    y = x + G.state(t)
    assert to_recurrent(x) == to_recurrent(y)
    assert to_recurrent(G.state(np.full((3, 3), -7))) is not None


def test_orders_divide_group_size(g33):
    G, e = g33
    N = spanning_tree_count(G)
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = _random_recurrent(G, rng)
        k = verified_order(a, e)
        assert N % k == 0
        assert element_order(a, k, identity=e) == k
    assert class_order(e) == 1


def test_multiple_by_doubling(g33):
    G, e = g33
    a = _random_recurrent(G, np.random.default_rng(5))
    x = a
    for k in range(2, 7):
        x = group_add(x, a)
        assert group_multiple(a, k) == x
    with pytest.raises(ValueError):
        group_multiple(a, 0)


def test_spanning_tree_count_on_ray_prefix():
    assert spanning_tree_count(TruncatedRay(3)) == 56  # determinant of tridiag(-1, 4, -1)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4))
def test_matrix_tree_symmetric(m, n):
    assert spanning_tree_count(TorusSandpile(m, n)) == spanning_tree_count(TorusSandpile(n, m))
