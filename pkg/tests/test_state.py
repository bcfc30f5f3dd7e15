import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnet_sandpile.lattice import PeriodicLattice, Rect, TorusQuotient, TruncatedRay
from cnet_sandpile.state import (
    Odometer,
    SandState,
    StateFormatError,
    exact_array,
    odometer_from_rows,
    odometer_rows,
    read_state,
    state_from_dict,
    state_to_dict,
    write_state,
)


def test_exact_array_promotes_big_values():
    assert exact_array([1, 2]).dtype == np.int64
    big = exact_array(np.array([2**70, 1], dtype=object))
    assert big.dtype == object and big[0] == 2**70


def test_sinks_are_zeroed_and_cells_frozen():
    s = SandState(PeriodicLattice(3, 3), Rect(0, 0, 3, 3), np.full((4, 4), 2))
    assert s.value((0, 0)) == 0 and s.value((1, 1)) == 2
    with pytest.raises(ValueError):
        s.cells[1, 1] = 5


def test_background_outside_window():
    s = SandState.zeros(PeriodicLattice(6, 6), Rect(0, 0, 2, 2), background=2)
    assert s.value((40, 41)) == 2 and s.value((42, 42)) == 0


def test_torus_window_rules():
    t = TorusQuotient(3, 4)
    with pytest.raises(ValueError):
        SandState(t, Rect(0, 0, 1, 1), np.zeros((2, 2)))
    s = SandState.filled(t, 3)
    assert s.value((4, 5)) == 3 and s.total() == 3 * 11


def test_from_sequence_and_sequence():
    s = SandState.from_sequence(TruncatedRay(5), [3, 2, 1, 0, 2])
    assert s.sequence() == [3, 2, 1, 0, 2]
    assert s.sequence(2, 3) == [2, 1]


def test_add_sub_align_windows():
    spec = PeriodicLattice(6, 6)
    a = SandState(spec, Rect(1, 1, 2, 2), np.ones((2, 2)))
    b = SandState(spec, Rect(2, 2, 4, 4), np.ones((3, 3)))
    c = a + b
    assert c.window == Rect(1, 1, 4, 4)
    assert c.value((2, 2)) == 2 and c.value((1, 1)) == 1 and c.value((4, 4)) == 1
    assert (c - b) == a.widen(c.window)


def test_total_does_not_overflow():
    s = SandState(TruncatedRay(3), Rect(1, 0, 3, 0), np.array([[2**61], [2**61], [2**61]], dtype=object))
    assert s.total() == 3 * 2**61


def test_file_roundtrip_with_big_values(tmp_path):
    spec = PeriodicLattice(6, 6)
    cells = np.zeros((3, 2), dtype=object)
    cells[1, 1] = 10**30
    s = SandState(spec, Rect(2, 2, 4, 3), cells)
    path = write_state(s, tmp_path / "s.json", {"note": "x"})
    doc = json.loads(path.read_text())
    assert doc["cells"][1] == ["0", str(10**30), "0"]
    assert doc["stable"] is False
    assert read_state(path) == s


def _doc(**kw):
    d = {"format_version": 1, "sink_spec": {"type": "truncated_ray", "length": 3},
         "window": [1, 0, 3, 0], "background": 0, "stable": True, "cells": [["1", "2", "3"]]}
    d.update(kw)
    return d


def test_state_from_dict_good():
    assert state_from_dict(_doc()).sequence() == [1, 2, 3]


@pytest.mark.parametrize("bad", [
    {"format_version": 2},
    {"cells": [["1", "2"]]},
    {"cells": [["1", "-2", "3"]]},
    {"cells": [["1", "x", "3"]]},
    {"cells": [["1", "2", "4"]]},
    {"window": [0, 0, 2, 0], "cells": [["1", "2", "3"]]},
    {"background": -1},
    {"sink_spec": {"type": "nope"}},
])
def test_state_from_dict_rejects(bad):
    with pytest.raises(StateFormatError):
        state_from_dict(_doc(**bad))


def test_stable_flag_with_large_background():
    doc = {"format_version": 1, "sink_spec": {"type": "periodic_lattice", "m": 6, "n": 6},
           "window": [1, 1, 1, 1], "background": 4, "stable": True, "cells": [["0"]]}
    with pytest.raises(StateFormatError):
        state_from_dict(doc)


def test_missing_fields_and_bad_json(tmp_path):
    with pytest.raises(StateFormatError):
        state_from_dict({"format_version": 1})
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(StateFormatError):
        read_state(p)


def test_odometer_rows_roundtrip():
    w = Rect(0, 0, 1, 2)
    odo = Odometer(w, np.array([[1, 2, 3], [4, 5, 2**70]], dtype=object))
    back = odometer_from_rows(odometer_rows(odo), w)
    assert back.at((1, 2)) == 2**70 and back.at((0, 1)) == 2 and back.at((5, 5)) == 0
    assert back.total() == 15 + 2**70


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 10**25), min_size=1, max_size=12))
def test_roundtrip_property(values):
    s = SandState.from_sequence(TruncatedRay(len(values)), values)
    assert state_from_dict(state_to_dict(s)) == s
