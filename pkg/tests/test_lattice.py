import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnet_sandpile.lattice import (
    Explicit,
    FullLineComplement,
    LineWithIntervals,
    PeriodicLattice,
    RayComplement,
    Rect,
    TorusQuotient,
    TruncatedRay,
    cnet_radius,
    default_probe,
    distance_to_sinks,
    h_field,
    laplacian_at,
    laplacian_grid,
    neighbors,
    sink_distance,
    spec_from_dict,
    superharmonic_h,
    truncate,
)

SPECS = [
    PeriodicLattice(6, 6),
    PeriodicLattice(2, 3),
    RayComplement(),
    TruncatedRay(7),
    FullLineComplement(),
    LineWithIntervals(((3, 1), (10, 5)), x_max=12),
    TorusQuotient(4, 6, frozenset({(0, 0), (2, 3)})),
    Explicit(frozenset({(1, 1)}), Rect(0, 0, 3, 3)),
]


def test_rect_shape_and_slices():
    r = Rect(-2, 1, 3, 4)
    assert r.shape == (6, 4)
    assert r.area == 24
    outer = r.grow(2)
    assert outer == Rect(-4, -1, 5, 6)
    a = np.zeros(outer.shape)
    a[r.slices_in(outer)] = 1
    assert a.sum() == 24
    with pytest.raises(ValueError):
        Rect(2, 0, 1, 0)


def test_periodic_lattice_sinks():
    s = PeriodicLattice(6, 6)
    assert s.is_sink((0, 0)) and s.is_sink((-6, 12)) and not s.is_sink((3, 3))
    mask = s.sink_mask(Rect(0, 0, 11, 11))
    assert mask.sum() == 4


def test_ray_complement_only_positive_axis_is_free():
    s = RayComplement()
    assert not s.is_sink((1, 0)) and not s.is_sink((500, 0))
    assert s.is_sink((0, 0)) and s.is_sink((3, 1)) and s.is_sink((-2, 0))


def test_truncated_ray_parent_and_support():
    s = TruncatedRay(5)
    assert s.support() == Rect(1, 0, 5, 0)
    assert s.parent == RayComplement()
    assert s.is_sink((6, 0)) and not s.is_sink((5, 0))


def test_line_with_intervals_cells():
    s = LineWithIntervals(((3, 2),))
    assert not s.is_sink((3, 2)) and s.is_sink((3, 3)) and s.is_sink((4, 1))
    cut = LineWithIntervals(((3, 2), (10, 6)), x_max=8)
    assert cut.support() == Rect(1, 0, 8, 2)
    assert cut.is_sink((9, 0)) and cut.is_sink((10, 0))


def test_torus_validation():
    with pytest.raises(ValueError):
        TorusQuotient(1, 4)
    with pytest.raises(ValueError):
        TorusQuotient(3, 3, frozenset())
    t = TorusQuotient(3, 3)
    assert t.period == (3, 3) and t.is_sink((3, -3))


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind)
def test_spec_roundtrip(spec):
    assert spec_from_dict(spec.to_dict()) == spec


def test_unknown_spec_type():
    with pytest.raises(ValueError):
        spec_from_dict({"type": "hexagonal"})


def test_truncate_keeps_sinks_and_marks_outside():
    t = truncate(PeriodicLattice(3, 3), Rect(-2, -2, 2, 2))
    assert t.is_sink((0, 0)) and t.is_sink((3, 0)) and not t.is_sink((1, 2))
    assert t.parent == PeriodicLattice(3, 3)


def _bfs_distance(spec, z, cap):
    # independent oracle: breadth-first search on Z^2 to the nearest sink
    seen = {tuple(z)}
    frontier = [tuple(z)]
    for d in range(cap + 1):
        if any(spec.is_sink(c) for c in frontier):
            return d
        nxt = []
        for c in frontier:
            for w in neighbors(c):
                if w not in seen:
                    seen.add(w)
                    nxt.append(tuple(w))
        frontier = nxt
    return math.inf


@pytest.mark.parametrize("spec", [PeriodicLattice(6, 6), PeriodicLattice(2, 5),
                                  LineWithIntervals(((3, 2),), x_max=4), RayComplement()])
def test_sink_distance_matches_bfs(spec):
    rect = Rect(-3, -2, 5, 4)
    d = sink_distance(spec, rect, cap=12)
    for (i, j), v in np.ndenumerate(d):
        z = (rect.x0 + i, rect.y0 + j)
        assert v == _bfs_distance(spec, z, 12)
        assert distance_to_sinks(spec, z, 12) == v


def test_cnet_radius_values():
    assert cnet_radius(PeriodicLattice(6, 6), default_probe(PeriodicLattice(6, 6))) == 6
    assert cnet_radius(PeriodicLattice(2, 2), default_probe(PeriodicLattice(2, 2))) == 2
    assert cnet_radius(RayComplement(), Rect(-20, -20, 20, 20)) == 1
    empty = Explicit(frozenset(), Rect(0, 0, 0, 0))
    assert cnet_radius(empty, Rect(0, 0, 0, 0)) == 1


def test_h_values_and_superharmonicity():
    spec = PeriodicLattice(6, 6)
    C = 6
    assert superharmonic_h(spec, (0, 0), C) == 0
    assert superharmonic_h(spec, (1, 0), C) == 4**5
    assert superharmonic_h(spec, (3, 3), C) == sum(4 ** (C - k) for k in range(1, 7))
    rect = Rect(-8, -8, 14, 14)
    h = h_field(spec, rect, C)
    lap = laplacian_grid(h, spec.sink_mask(rect))
    inner = lap[1:-1, 1:-1]
    free = ~spec.sink_mask(rect)[1:-1, 1:-1]
    assert (inner[free] <= -1).all()
    with pytest.raises(ValueError):
        superharmonic_h(spec, (3, 3), 3)


def test_laplacian_at_matches_grid():
    spec = TruncatedRay(6)
    vals = {(i, 0): i * i for i in range(1, 7)}
    f = lambda z: vals.get(tuple(z), 0)
    rect = Rect(1, 0, 6, 0)
    arr = np.array([[vals[(i, 0)]] for i in range(1, 7)])
    grid = laplacian_grid(arr, spec.sink_mask(rect))
    for i in range(1, 7):
        assert laplacian_at(spec, f, (i, 0)) == grid[i - 1, 0]


def test_periodic_laplacian_double_edges():
    # on a period-2 axis each neighbour is counted twice
    vals = np.array([[0, 1], [2, 3]])
    lap = laplacian_grid(vals, np.zeros((2, 2), bool), periodic=True)
    assert lap[1, 1] == 2 * 2 + 2 * 1 - 4 * 3


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.integers(-20, 20), st.integers(-20, 20))
def test_periodic_sinks_invariant_under_translation(m, n, x, y):
    s = PeriodicLattice(m, n)
    assert s.is_sink((x, y)) == s.is_sink((x + m, y - n))
