"""Coordinates, sink sets, lattice distances and the Laplacian on Z^2.

Arrays over a window are indexed ``arr[x - x0, y - y0]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple

import numpy as np
from scipy import ndimage


class Coord(NamedTuple):
    x: int
    y: int


OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def neighbors(z) -> Iterator[Coord]:
    x, y = z
    for dx, dy in OFFSETS:
        yield Coord(x + dx, y + dy)


@dataclass(frozen=True)
class Rect:
    """Inclusive rectangle ``[x0..x1] x [y0..y1]``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"empty rectangle {self.as_list()}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x1 - self.x0 + 1, self.y1 - self.y0 + 1)

    @property
    def area(self) -> int:
        return self.shape[0] * self.shape[1]

    def contains(self, z) -> bool:
        return self.x0 <= z[0] <= self.x1 and self.y0 <= z[1] <= self.y1

    def contains_rect(self, other: Rect) -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and other.x1 <= self.x1 and other.y1 <= self.y1)

    def grow(self, dx: int, dy: int | None = None) -> Rect:
        dy = dx if dy is None else dy
        return Rect(self.x0 - dx, self.y0 - dy, self.x1 + dx, self.y1 + dy)

    def union(self, other: Rect) -> Rect:
        return Rect(min(self.x0, other.x0), min(self.y0, other.y0),
                    max(self.x1, other.x1), max(self.y1, other.y1))

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Broadcastable x and y coordinate grids."""
        xs = np.arange(self.x0, self.x1 + 1)[:, None]
        ys = np.arange(self.y0, self.y1 + 1)[None, :]
        return xs, ys

    def slices_in(self, outer: Rect) -> tuple[slice, slice]:
        """Index of this rectangle inside an array laid out over ``outer``."""
        return (slice(self.x0 - outer.x0, self.x1 - outer.x0 + 1),
                slice(self.y0 - outer.y0, self.y1 - outer.y0 + 1))

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def around(cls, z, radius: int) -> Rect:
        return cls(z[0] - radius, z[1] - radius, z[0] + radius, z[1] + radius)


# ---------------------------------------------------------------------------
# sink specifications


class SinkSpec:
    """Declarative description of a sink set S in Z^2."""

    kind: str = ""

    def is_sink(self, z) -> bool:
        return bool(self.sink_mask(Rect(z[0], z[1], z[0], z[1]))[0, 0])

    def sink_mask(self, rect: Rect) -> np.ndarray:
        raise NotImplementedError

    @property
    def period(self) -> tuple[int, int] | None:
        """Wrap-around periods when states live on a torus quotient."""
        return None

    def support(self) -> Rect | None:
        """Bounding box of the non-sink set when it is finite."""
        return None

    @property
    def parent(self) -> SinkSpec | None:
        """The untruncated sink set this one approximates, if any."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PeriodicLattice(SinkSpec):
    m: int
    n: int
    kind = "periodic_lattice"

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise ValueError("periodic lattice needs m, n >= 2")

    def sink_mask(self, rect):
        xs, ys = rect.coords()
        return (xs % self.m == 0) & (ys % self.n == 0)

    def to_dict(self):
        return {"type": self.kind, "m": self.m, "n": self.n}


@dataclass(frozen=True)
class RayComplement(SinkSpec):
    """Only the ray {(i, 0) : i >= 1} is free of sinks."""

    kind = "ray_complement"

    def sink_mask(self, rect):
        xs, ys = rect.coords()
        return ~((ys == 0) & (xs >= 1))

    def to_dict(self):
        return {"type": self.kind}


@dataclass(frozen=True)
class TruncatedRay(SinkSpec):
    length: int
    kind = "truncated_ray"

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("truncated ray needs length >= 1")

    def sink_mask(self, rect):
        xs, ys = rect.coords()
        return ~((ys == 0) & (xs >= 1) & (xs <= self.length))

    def support(self):
        return Rect(1, 0, self.length, 0)

    @property
    def parent(self):
        return RayComplement()

    def to_dict(self):
        return {"type": self.kind, "length": self.length}


@dataclass(frozen=True)
class FullLineComplement(SinkSpec):
    kind = "full_line_complement"

    def sink_mask(self, rect):
        xs, ys = rect.coords()
        return np.broadcast_to(ys != 0, rect.shape).copy()

    def to_dict(self):
        return {"type": self.kind}


@dataclass(frozen=True)
class LineWithIntervals(SinkSpec):
    """The ray plus vertical intervals {(k, y) : 0 <= y <= K} for each (k, K).

    ``x_max`` cuts the graph to the prefix x <= x_max (cells beyond are sinks).
    """

    intervals: tuple[tuple[int, int], ...]
    x_max: int | None = None
    kind = "line_with_intervals"

    def __post_init__(self):
        object.__setattr__(self, "intervals",
                           tuple((int(k), int(K)) for k, K in self.intervals))

    def sink_mask(self, rect):
        xs, ys = rect.coords()
        free = (ys == 0) & (xs >= 1)
        for k, K in self.intervals:
            free = free | ((xs == k) & (ys >= 0) & (ys <= K))
        if self.x_max is not None:
            free = free & (xs <= self.x_max)
        return np.broadcast_to(~free, rect.shape).copy()

    def support(self):
        if self.x_max is None:
            return None
        top = max([K for k, K in self.intervals if k <= self.x_max], default=0)
        return Rect(1, 0, self.x_max, top)

    @property
    def parent(self):
        if self.x_max is None:
            return None
        return LineWithIntervals(self.intervals)

    def to_dict(self):
        return {"type": self.kind, "intervals": [list(p) for p in self.intervals],
                "x_max": self.x_max}


@dataclass(frozen=True)
class TorusQuotient(SinkSpec):
    """Z^2 modulo (m, 0) and (0, n); ``sinks`` are residues in Z_m x Z_n."""

    m: int
    n: int
    sinks: frozenset = field(default_factory=lambda: frozenset({(0, 0)}))
    kind = "torus_quotient"

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise ValueError("torus periods must be at least 2")
        cells = frozenset((int(i) % self.m, int(j) % self.n) for i, j in self.sinks)
        if not cells:
            raise ValueError("torus quotient needs at least one sink")
        object.__setattr__(self, "sinks", cells)

    @property
    def period(self):
        return (self.m, self.n)

    @property
    def domain(self) -> Rect:
        return Rect(0, 0, self.m - 1, self.n - 1)

    def sink_mask(self, rect):
        xs, ys = rect.coords()
        cell = np.zeros((self.m, self.n), dtype=bool)
        for i, j in self.sinks:
            cell[i, j] = True
        return cell[xs % self.m, ys % self.n]

    def to_dict(self):
        return {"type": self.kind, "m": self.m, "n": self.n,
                "sinks": sorted([list(c) for c in self.sinks])}


@dataclass(frozen=True)
class Explicit(SinkSpec):
    """Finite sink list inside ``window``; everything outside is a sink."""

    cells: frozenset
    window: Rect
    base: SinkSpec | None = None
    kind = "explicit"

    def __post_init__(self):
        object.__setattr__(self, "cells", frozenset((int(x), int(y)) for x, y in self.cells))

    def sink_mask(self, rect):
        xs, ys = rect.coords()
        w = self.window
        mask = ~((xs >= w.x0) & (xs <= w.x1) & (ys >= w.y0) & (ys <= w.y1))
        mask = np.broadcast_to(mask, rect.shape).copy()
        for x, y in self.cells:
            if rect.contains((x, y)):
                mask[x - rect.x0, y - rect.y0] = True
        return mask

    def support(self):
        return self.window

    @property
    def parent(self):
        return self.base

    def to_dict(self):
        d = {"type": self.kind, "cells": sorted([list(c) for c in self.cells]),
             "window": self.window.as_list()}
        if self.base is not None:
            d["base"] = self.base.to_dict()
        return d


def truncate(spec: SinkSpec, window: Rect) -> Explicit:
    """Finite approximation of ``spec``: its sinks inside ``window``, all else sink."""
    mask = spec.sink_mask(window)
    cells = {(int(i) + window.x0, int(j) + window.y0) for i, j in np.argwhere(mask)}
    return Explicit(frozenset(cells), window, base=spec)


def spec_from_dict(d: dict) -> SinkSpec:
    kind = d.get("type")
    if kind == PeriodicLattice.kind:
        return PeriodicLattice(int(d["m"]), int(d["n"]))
    if kind == RayComplement.kind:
        return RayComplement()
    if kind == TruncatedRay.kind:
        return TruncatedRay(int(d["length"]))
    if kind == FullLineComplement.kind:
        return FullLineComplement()
    if kind == LineWithIntervals.kind:
        return LineWithIntervals(tuple(tuple(p) for p in d["intervals"]), d.get("x_max"))
    if kind == TorusQuotient.kind:
        return TorusQuotient(int(d["m"]), int(d["n"]), frozenset(tuple(c) for c in d["sinks"]))
    if kind == Explicit.kind:
        base = spec_from_dict(d["base"]) if d.get("base") else None
        return Explicit(frozenset(tuple(c) for c in d["cells"]), Rect(*d["window"]), base)
    raise ValueError(f"unknown sink spec type {kind!r}")


def is_sink(spec: SinkSpec, z) -> bool:
    return spec.is_sink(z)


# ---------------------------------------------------------------------------
# distances and the superharmonic bound


def sink_distance(spec: SinkSpec, rect: Rect, cap: int = 64) -> np.ndarray:
    """Graph distance from each cell of ``rect`` to S; ``inf`` beyond ``cap``.

    On Z^2 the shortest path may cross sinks freely, so the graph distance is
    the L1 distance to the nearest sink.
    """
    big = rect.grow(cap + 1)
    mask = spec.sink_mask(big)
    out = np.full(rect.shape, math.inf)
    if not mask.any():
        return out
    dist = ndimage.distance_transform_cdt(~mask, metric="taxicab").astype(float)
    dist = dist[rect.slices_in(big)]
    return np.where(dist > cap, math.inf, dist)


def distance_to_sinks(spec: SinkSpec, z, cap: int = 64) -> float:
    for r in range(cap + 1):
        for dx in range(-r, r + 1):
            dy = r - abs(dx)
            if spec.is_sink((z[0] + dx, z[1] + dy)) or spec.is_sink((z[0] + dx, z[1] - dy)):
                return r
    return math.inf


def cnet_radius(spec: SinkSpec, probe: Rect, cap: int = 64) -> float:
    """Largest distance to S over the probe window (``inf`` when above ``cap``)."""
    dist = sink_distance(spec, probe, cap)
    return float(dist.max()) if math.isinf(dist.max()) else int(dist.max())


def default_probe(spec: SinkSpec) -> Rect:
    if spec.period is not None:
        m, n = spec.period
        return Rect(0, 0, 2 * m - 1, 2 * n - 1)
    if isinstance(spec, PeriodicLattice):
        return Rect(0, 0, 2 * spec.m - 1, 2 * spec.n - 1)
    box = spec.support()
    if box is not None:
        return box
    return Rect(-16, -16, 16, 16)


def superharmonic_h(spec: SinkSpec, z, C: int) -> int:
    """Sum of 4**(C - k) for k = 1..dist(z, S)."""
    d = distance_to_sinks(spec, z, cap=C + 1)
    if d > C:
        raise ValueError(f"distance from {tuple(z)} to the sinks exceeds C={C}")
    return sum(4 ** (C - k) for k in range(1, int(d) + 1))


def h_field(spec: SinkSpec, rect: Rect, C: int) -> np.ndarray:
    """Superharmonic bound h over ``rect`` as an object array of exact ints."""
    dist = sink_distance(spec, rect, cap=C + 1)
    if np.isinf(dist).any() or dist.max() > C:
        raise ValueError(f"some cell of {rect.as_list()} is farther than C={C} from the sinks")
    table = [sum(4 ** (C - k) for k in range(1, d + 1)) for d in range(C + 1)]
    out = np.empty(rect.shape, dtype=object)
    for idx, d in np.ndenumerate(dist.astype(int)):
        out[idx] = table[d]
    return out


# ---------------------------------------------------------------------------
# Laplacian


def laplacian_at(spec: SinkSpec, f: Callable[[Coord], int], z) -> int:
    """4-neighbour Laplacian of ``f`` at ``z``; sinks read as 0 and yield 0."""
    if spec.is_sink(z):
        return 0
    total = 0
    for w in neighbors(z):
        if not spec.is_sink(w):
            total += f(w)
    return total - 4 * f(z)


def laplacian_grid(values: np.ndarray, sinks: np.ndarray, periodic: bool = False) -> np.ndarray:
    """Laplacian of a window array; values outside the window count as 0.

    ``values`` must already vanish on sinks. With ``periodic`` the window is
    a torus fundamental domain and neighbours wrap (period-2 axes get double
    edges).
    """
    v = np.where(sinks, 0, values)
    if periodic:
        nb = (np.roll(v, 1, 0) + np.roll(v, -1, 0) + np.roll(v, 1, 1) + np.roll(v, -1, 1))
    else:
        nb = np.zeros_like(v)
        nb[1:] += v[:-1]
        nb[:-1] += v[1:]
        nb[:, 1:] += v[:, :-1]
        nb[:, :-1] += v[:, 1:]
    return np.where(sinks, 0, nb - 4 * v)
