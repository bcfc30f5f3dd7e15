"""Stabilization with odometer tracking: single-toppling queue and bulk sweeps."""

from __future__ import annotations

import logging
import math
import random
from collections import deque
from dataclasses import dataclass

import numpy as np

from .lattice import Coord, Rect, cnet_radius, laplacian_grid
from .state import Odometer, SandState, exact_array

log = logging.getLogger(__name__)

# bulk sweeps switch from Python ints to int64 below this height
_FAST_LIMIT = 2**60
# int64 odometer increments are folded into exact counts past this bound
_FLUSH_LIMIT = 2**61


class RelaxError(RuntimeError):
    pass


@dataclass(frozen=True)
class RelaxReport:
    stable: SandState
    odometer: Odometer
    topple_events: int
    sweeps: int
    peak_window: Rect
    strategy: str = "bulk"

    def metadata(self) -> dict:
        return {
            "strategy": self.strategy,
            "topple_events": str(self.topple_events),
            "sweeps": str(self.sweeps),
            "peak_window": self.peak_window.as_list(),
        }


@dataclass(frozen=True)
class Certificate:
    ok: bool
    cell: Coord | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def _prepare(state: SandState) -> SandState:
    if (state.cells < 0).any():
        raise RelaxError("relaxation needs non-negative cells")
    if state.background > 3:
        raise RelaxError(f"background {state.background} > 3 leaves an infinite unstable region")
    spec = state.sinks
    if spec.period is None:
        box = spec.support()
        if box is not None and not state.window.contains_rect(box):
            state = state.widen(state.window.union(box))
        elif box is None and math.isinf(cnet_radius(spec, state.window)):
            raise RelaxError("sink set is not a C-net over the state window")
    return state


def _is_open(state: SandState) -> bool:
    """True when cells beyond the window may be non-sinks."""
    return state.sinks.period is None and state.sinks.support() is None


def _growth(window: Rect) -> Rect:
    nx, ny = window.shape
    return window.grow(max(8, nx // 2), max(8, ny // 2))


def _near_edge(active: np.ndarray) -> bool:
    return bool(active[:2].any() or active[-2:].any() or active[:, :2].any() or active[:, -2:].any())


# ---------------------------------------------------------------------------
# single topplings


def relax_naive(state: SandState, max_events: int | None = None,
                rng: random.Random | None = None) -> RelaxReport:
    """Topple one unstable cell at a time until every non-sink cell holds <= 3.

    Unstable cells are served first-in first-out, seeded in row-major order
    (y outer, x inner). With ``rng`` the next cell is instead drawn uniformly
    from the current unstable set.
    """
    state = _prepare(state)
    if max_events is None:
        max_events = 10**6 * state.window.area
    open_ = _is_open(state)
    window = state.window
    vals = state.cells.astype(object)
    odo = np.zeros(window.shape, dtype=object)
    events = 0
    while True:
        finished, events, hit_edge = _naive_pass(vals, odo, state, window, open_,
                                                 max_events - events, rng, events)
        if finished:
            break
        # grow and resume on the wider window
        new = _growth(window)
        grown = state.replace(vals, window).widen(new)
        vals = grown.cells.astype(object)
        big = np.zeros(new.shape, dtype=object)
        big[window.slices_in(new)] = odo
        odo, window = big, new
    stable = state.replace(vals, window)
    return RelaxReport(stable, Odometer(window, exact_array(odo)), events, 0, window, "naive")


def _naive_pass(vals, odo, state, window, open_, budget, rng, events):
    nx, ny = window.shape
    sinks = state.sinks.sink_mask(window)
    periodic = state.periodic
    size = nx * ny
    # flat index k = j * nx + i keeps row-major (y outer) order
    flat = [int(vals[k % nx, k // nx]) for k in range(size)]
    fodo = [int(odo[k % nx, k // nx]) for k in range(size)]
    sink = [bool(sinks[k % nx, k // nx]) for k in range(size)]
    nbrs = []
    for k in range(size):
        i, j = k % nx, k // nx
        lst = []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if periodic:
                a, b = a % nx, b % ny
            elif not (0 <= a < nx and 0 <= b < ny):
                continue
            kk = b * nx + a
            if not sink[kk]:
                lst.append(kk)
        nbrs.append(lst)
    edge = [False] * size
    if open_:
        for k in range(size):
            i, j = k % nx, k // nx
            edge[k] = i < 2 or j < 2 or i >= nx - 2 or j >= ny - 2

    unstable = [k for k in range(size) if not sink[k] and flat[k] >= 4]
    hit_edge = False
    used = 0
    if rng is None:
        queue = deque(unstable)
        while queue:
            k = queue[0]
            if edge[k]:
                hit_edge = True
                break
            queue.popleft()
            flat[k] -= 4
            fodo[k] += 1
            used += 1
            if used > budget:
                raise RelaxError(f"topple budget exhausted after {events + used - 1} events")
            for w in nbrs[k]:
                flat[w] += 1
                if flat[w] == 4:
                    queue.append(w)
            if flat[k] >= 4:
                queue.append(k)
    else:
        pool = unstable
        where = {k: idx for idx, k in enumerate(pool)}
        while pool:
            idx = rng.randrange(len(pool))
            k = pool[idx]
            if edge[k]:
                hit_edge = True
                break
            flat[k] -= 4
            fodo[k] += 1
            used += 1
            if used > budget:
                raise RelaxError(f"topple budget exhausted after {events + used - 1} events")
            if flat[k] < 4:
                last = pool.pop()
                del where[k]
                if last != k:
                    pool[idx] = last
                    where[last] = idx
            for w in nbrs[k]:
                flat[w] += 1
                if flat[w] == 4:
                    where[w] = len(pool)
                    pool.append(w)
    for k in range(size):
        vals[k % nx, k // nx] = flat[k]
        odo[k % nx, k // nx] = fodo[k]
    return (not hit_edge), events + used, hit_edge


# ---------------------------------------------------------------------------
# bulk sweeps


def _spread(q: np.ndarray, periodic: bool) -> np.ndarray:
    if periodic:
        return np.roll(q, 1, 0) + np.roll(q, -1, 0) + np.roll(q, 1, 1) + np.roll(q, -1, 1)
    out = np.zeros_like(q)
    out[1:] += q[:-1]
    out[:-1] += q[1:]
    out[:, 1:] += q[:, :-1]
    out[:, :-1] += q[:, 1:]
    return out


def relax_bulk(state: SandState, max_sweeps: int = 10**6) -> RelaxReport:
    """Sweep to a fixpoint; each unstable cell topples floor(height / 4) times.

    Heights run as Python ints while any exceeds 2**60 and as int64 after;
    the odometer stays exact throughout.
    """
    state = _prepare(state)
    open_ = _is_open(state)
    periodic = state.periodic
    window = state.window
    sinks = state.sinks.sink_mask(window)
    psi = state.cells.astype(object) if state.cells.dtype == object else state.cells.copy()
    if psi.dtype == object and psi.max() < _FAST_LIMIT:
        psi = psi.astype(np.int64)
    exact_odo = np.zeros(window.shape, dtype=object)
    fast_odo = np.zeros(window.shape, dtype=np.int64)
    pending = 0
    events = 0
    sweeps = 0

    while True:
        if psi.dtype == object and psi.max() < _FAST_LIMIT:
            psi = psi.astype(np.int64)
        unstable = psi >= 4
        if not unstable.any():
            break
        if open_ and _near_edge(unstable):
            new = _growth(window)
            log.debug("widening window %s -> %s", window.as_list(), new.as_list())
            psi = _embed(psi, window, new, state.background)
            exact_odo = _embed(exact_odo, window, new, 0)
            fast_odo = _embed(fast_odo, window, new, 0)
            window = new
            sinks = state.sinks.sink_mask(window)
            psi[sinks] = 0
            continue
        if sweeps >= max_sweeps:
            raise RelaxError(f"sweep budget {max_sweeps} exhausted")
        if periodic:
            box = (slice(None), slice(None))
        else:
            idx = np.nonzero(unstable)
            box = (slice(max(idx[0].min() - 1, 0), idx[0].max() + 2),
                   slice(max(idx[1].min() - 1, 0), idx[1].max() + 2))
        sub = psi[box]
        q = sub // 4
        sub -= 4 * q
        sub += _spread(q, periodic)
        sub[sinks[box]] = 0
        if q.dtype == object:
            exact_odo[box] += q
            events += int(q.sum())
        else:
            fast_odo[box] += q
            top = int(q.max())
            pending += top
            events += int(q.sum(dtype=object)) if top > 2**40 else int(q.sum())
            if pending > _FLUSH_LIMIT:
                exact_odo += fast_odo.astype(object)
                fast_odo[:] = 0
                pending = 0
        sweeps += 1

    odo = exact_array(exact_odo + fast_odo.astype(object)) if exact_odo.any() else fast_odo
    stable = state.replace(psi, window)
    return RelaxReport(stable, Odometer(window, odo), events, sweeps, window, "bulk")


def _embed(arr: np.ndarray, old: Rect, new: Rect, fill) -> np.ndarray:
    out = np.full(new.shape, fill, dtype=arr.dtype)
    out[old.slices_in(new)] = arr
    return out


def relax(state: SandState, strategy: str = "bulk", **kw) -> RelaxReport:
    if strategy == "bulk":
        return relax_bulk(state, **kw)
    if strategy == "naive":
        return relax_naive(state, **kw)
    raise ValueError(f"unknown strategy {strategy!r}")


def stabilize(state: SandState) -> SandState:
    return relax_bulk(state).stable


# ---------------------------------------------------------------------------
# certificate


def check_relaxation_certificate(initial: SandState, report: RelaxReport) -> Certificate:
    """Check stability, ``stable == initial + Laplacian(F)`` and F = 0 on sinks."""
    window = report.stable.window
    if report.odometer.window != window:
        return Certificate(False, None, "odometer and state windows differ")
    if not window.contains_rect(initial.window):
        return Certificate(False, None, "report window does not cover the input")
    sinks = report.stable.sink_mask
    F = report.odometer.counts.astype(object)
    before = initial.widen(window).cells.astype(object)
    after = report.stable.cells.astype(object)

    def first(mask, reason):
        i, j = np.argwhere(mask)[0]
        return Certificate(False, Coord(window.x0 + int(i), window.y0 + int(j)), reason)

    bad = sinks & (F != 0)
    if bad.any():
        return first(bad, "odometer is nonzero on a sink")
    bad = (F < 0)
    if bad.any():
        return first(bad, "negative odometer")
    bad = ~sinks & ((after > 3) | (after < 0))
    if bad.any():
        return first(bad, "cell is not stable")
    expected = before + laplacian_grid(F, sinks, periodic=report.stable.periodic)
    bad = ~sinks & (expected != after)
    if bad.any():
        return first(bad, "conservation identity fails")
    if not report.stable.periodic and (F[[0, -1], :].any() or F[:, [0, -1]].any()):
        if report.stable.sinks.support() is None:
            return Certificate(False, None, "topplings reach the window edge")
    return Certificate(True)
