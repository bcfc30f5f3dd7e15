"""Sandpile states over a window with constant background, and their files.

File format (JSON text, version 1)::

    {
      "format_version": 1,
      "sink_spec": {"type": "periodic_lattice", "m": 6, "n": 6},
      "window": [x0, y0, x1, y1],
      "background": 0,
      "stable": false,
      "cells": [["0", "1", ...], ...]
    }

``cells`` holds one row per y from y0 to y1, each row listing x0..x1 as
decimal strings (arbitrary precision). Sink cells must read "0". A report
file adds an ``"odometer"`` block with the same row layout and a
``"report"`` block of decimal-string counters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lattice import Coord, Rect, SinkSpec, TorusQuotient, spec_from_dict

FORMAT_VERSION = 1
_INT64_SAFE = 2**62


class StateFormatError(ValueError):
    pass


def exact_array(values) -> np.ndarray:
    """Integer array: int64 when every entry is small, Python ints otherwise."""
    arr = np.asarray(values)
    if arr.dtype != object and np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.int64)
    arr = np.asarray(values, dtype=object)
    if arr.size == 0:
        return arr.astype(np.int64)
    lo, hi = arr.min(), arr.max()
    if -_INT64_SAFE < lo and hi < _INT64_SAFE:
        return arr.astype(np.int64)
    return np.vectorize(int, otypes=[object])(arr)


@dataclass(frozen=True, eq=False)
class SandState:
    """Grain counts on ``window``; non-sink cells outside hold ``background``.

    For a :class:`TorusQuotient` the window is the fundamental domain and
    neighbours wrap around.
    """

    sinks: SinkSpec
    window: Rect
    cells: np.ndarray
    background: int = 0

    def __post_init__(self):
        arr = exact_array(self.cells)
        if arr.shape != self.window.shape:
            raise ValueError(f"cells shape {arr.shape} does not match window {self.window.shape}")
        if self.sinks.period is not None:
            if self.window != self.sinks.domain:
                raise ValueError("torus states must use the fundamental domain as window")
            if self.background:
                raise ValueError("torus states have no background")
        elif self.sinks.support() is not None and self.background:
            raise ValueError("finite sink specs take background 0")
        arr = np.where(self.sink_mask, 0, arr)
        arr.flags.writeable = False
        object.__setattr__(self, "cells", arr)

    # construction helpers

    @classmethod
    def zeros(cls, sinks: SinkSpec, window: Rect | None = None, background: int = 0) -> SandState:
        window = window or default_window(sinks)
        return cls(sinks, window, np.zeros(window.shape, dtype=np.int64), background)

    @classmethod
    def filled(cls, sinks: SinkSpec, value: int, window: Rect | None = None) -> SandState:
        window = window or default_window(sinks)
        return cls(sinks, window, np.full(window.shape, value, dtype=np.int64))

    @classmethod
    def from_sequence(cls, sinks: SinkSpec, values) -> SandState:
        """State on a ray-like spec given values at (1,0), (2,0), ..."""
        values = list(values)
        window = sinks.support() or Rect(1, 0, max(len(values), 1), 0)
        arr = np.zeros(window.shape, dtype=object)
        for i, v in enumerate(values, start=1):
            arr[i - window.x0, -window.y0] = int(v)
        return cls(sinks, window, arr)

    def replace(self, cells=None, window: Rect | None = None) -> SandState:
        return SandState(self.sinks, window or self.window,
                         self.cells if cells is None else cells, self.background)

    # queries

    @property
    def sink_mask(self) -> np.ndarray:
        return self.sinks.sink_mask(self.window)

    @property
    def periodic(self) -> bool:
        return self.sinks.period is not None

    def value(self, z) -> int:
        if self.sinks.is_sink(z):
            return 0
        if self.periodic:
            m, n = self.sinks.period
            return int(self.cells[z[0] % m, z[1] % n])
        if self.window.contains(z):
            return int(self.cells[z[0] - self.window.x0, z[1] - self.window.y0])
        return self.background

    def sequence(self, start: int = 1, stop: int | None = None) -> list[int]:
        """Values along the x-axis, positions ``start..stop`` inclusive."""
        stop = self.window.x1 if stop is None else stop
        return [self.value((i, 0)) for i in range(start, stop + 1)]

    def is_stable(self) -> bool:
        return bool((self.cells <= 3).all()) and self.background <= 3

    def total(self) -> int:
        return int(np.sum(self.cells, dtype=object))

    def widen(self, window: Rect) -> SandState:
        """Same state laid out over a larger window."""
        if self.periodic or window == self.window:
            return self
        if not window.contains_rect(self.window):
            raise ValueError("can only widen to a containing window")
        arr = np.full(window.shape, self.background, dtype=self.cells.dtype)
        arr[self.window.slices_in(window)] = self.cells
        return self.replace(arr, window)

    def __add__(self, other: SandState) -> SandState:
        a, b = _aligned(self, other)
        return SandState(a.sinks, a.window, _add(a.cells, b.cells), a.background + b.background)

    def __sub__(self, other: SandState) -> SandState:
        a, b = _aligned(self, other)
        return SandState(a.sinks, a.window, _add(a.cells, -b.cells), a.background - b.background)

    def __eq__(self, other):
        if not isinstance(other, SandState) or self.sinks != other.sinks:
            return NotImplemented
        if self.background != other.background:
            return False
        a, b = _aligned(self, other)
        return bool((a.cells == b.cells).all())

    __hash__ = None

    def __repr__(self):
        return (f"SandState({self.sinks!r}, window={self.window.as_list()}, "
                f"background={self.background}, total={self.total()})")


def _add(a, b):
    # int64 entries are below 2**62 in magnitude, so their sum cannot overflow
    if a.dtype == object or b.dtype == object:
        return a.astype(object) + b.astype(object)
    return a + b


def _aligned(a: SandState, b: SandState) -> tuple[SandState, SandState]:
    if a.sinks != b.sinks:
        raise ValueError("states live on different sink sets")
    if a.window == b.window:
        return a, b
    w = a.window.union(b.window)
    return a.widen(w), b.widen(w)


def default_window(sinks: SinkSpec) -> Rect:
    if sinks.period is not None:
        return sinks.domain
    box = sinks.support()
    if box is not None:
        return box
    return Rect(-4, -4, 4, 4)


@dataclass(frozen=True, eq=False)
class Odometer:
    """Toppling counts on a window (zero outside it and on sinks)."""

    window: Rect
    counts: np.ndarray

    def at(self, z) -> int:
        if not self.window.contains(z):
            return 0
        return int(self.counts[z[0] - self.window.x0, z[1] - self.window.y0])

    def total(self) -> int:
        return int(np.sum(self.counts, dtype=object))

    def support(self) -> np.ndarray:
        return self.counts > 0


# ---------------------------------------------------------------------------
# files


def _rows(arr: np.ndarray) -> list[list[str]]:
    return [[str(int(v)) for v in arr[:, j]] for j in range(arr.shape[1])]


def _parse_rows(rows, window: Rect, what: str) -> np.ndarray:
    nx, ny = window.shape
    if not isinstance(rows, list) or len(rows) != ny:
        raise StateFormatError(f"{what}: expected {ny} rows for window {window.as_list()}")
    arr = np.empty((nx, ny), dtype=object)
    for j, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != nx:
            raise StateFormatError(f"{what}: row {j} has wrong length (expected {nx})")
        for i, tok in enumerate(row):
            try:
                v = int(str(tok), 10)
            except ValueError:
                raise StateFormatError(f"{what}: bad integer {tok!r} at row {j}") from None
            if v < 0:
                raise StateFormatError(f"{what}: negative value {v} at ({window.x0 + i}, {window.y0 + j})")
            arr[i, j] = v
    return arr


def state_to_dict(state: SandState, stable: bool | None = None) -> dict:
    if stable is None:
        stable = state.is_stable()
    return {
        "format_version": FORMAT_VERSION,
        "sink_spec": state.sinks.to_dict(),
        "window": state.window.as_list(),
        "background": state.background,
        "stable": bool(stable),
        "cells": _rows(state.cells),
    }


def state_from_dict(doc: dict) -> SandState:
    if not isinstance(doc, dict):
        raise StateFormatError("state document must be a JSON object")
    missing = {"format_version", "sink_spec", "window", "background", "cells"} - doc.keys()
    if missing:
        raise StateFormatError(f"missing header fields: {sorted(missing)}")
    if doc["format_version"] != FORMAT_VERSION:
        raise StateFormatError(f"unsupported format_version {doc['format_version']!r}")
    try:
        spec = spec_from_dict(doc["sink_spec"])
        window = Rect(*[int(v) for v in doc["window"]])
    except (TypeError, ValueError, KeyError) as exc:
        raise StateFormatError(f"bad header: {exc}") from None
    background = doc["background"]
    if not isinstance(background, int) or background < 0:
        raise StateFormatError(f"bad background {background!r}")
    if doc.get("stable") and background > 3:
        raise StateFormatError(f"background {background} exceeds 3 in a state declared stable")
    cells = _parse_rows(doc["cells"], window, "cells")
    sinks = spec.sink_mask(window)
    bad = np.argwhere(sinks & (cells != 0))
    if len(bad):
        i, j = bad[0]
        raise StateFormatError(f"sink cell ({window.x0 + i}, {window.y0 + j}) holds grains")
    try:
        state = SandState(spec, window, cells, background)
    except ValueError as exc:
        raise StateFormatError(str(exc)) from None
    if doc.get("stable") and not state.is_stable():
        raise StateFormatError("state declared stable has a cell above 3")
    return state


def write_state(state: SandState, path, extra: dict | None = None) -> Path:
    doc = state_to_dict(state)
    if extra:
        doc.update(extra)
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_state(path) -> SandState:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise StateFormatError(f"not a JSON document: {exc}") from None
    return state_from_dict(doc)


def odometer_rows(odo: Odometer) -> list[list[str]]:
    return _rows(odo.counts)


def odometer_from_rows(rows, window: Rect) -> Odometer:
    return Odometer(window, exact_array(_parse_rows(rows, window, "odometer")))


__all__ = [
    "Coord", "SandState", "Odometer", "StateFormatError", "TorusQuotient",
    "exact_array", "default_window", "read_state", "write_state",
    "state_to_dict", "state_from_dict",
]
