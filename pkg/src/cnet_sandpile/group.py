"""The sandpile group on finite carriers: torus quotients and truncated sink sets.

Group elements are recurrent :class:`SandState` values. A carrier is finite
when its sink spec is a :class:`TorusQuotient` or has a bounded non-sink set
(``TruncatedRay``, ``Explicit``, a cut ``LineWithIntervals``). Truncations of
infinite sink sets are compared away from the cut: cells within ``margin``
of the artificial sinks are ignored, and verdicts say so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .lattice import (
    FullLineComplement,
    Rect,
    RayComplement,
    SinkSpec,
    TorusQuotient,
    cnet_radius,
    default_probe,
)
from .linalg import bareiss_det, solve_rational
from .relax import relax_bulk, _spread
from .state import SandState, default_window

DEFAULT_MARGIN = 20


class GroupError(RuntimeError):
    pass


@dataclass(frozen=True)
class TorusSandpile:
    """Periodic quotient of Z^2 with a nonempty sink set; 4-regular multigraph."""

    m: int
    n: int
    sink_cells: frozenset = field(default_factory=lambda: frozenset({(0, 0)}))

    @property
    def spec(self) -> TorusQuotient:
        return TorusQuotient(self.m, self.n, self.sink_cells)

    def state(self, values) -> SandState:
        return SandState(self.spec, self.spec.domain, np.asarray(values, dtype=object))

    def zeros(self) -> SandState:
        return SandState.zeros(self.spec)

    def max_stable(self) -> SandState:
        return SandState.filled(self.spec, 3)

    def vertices(self) -> list[tuple[int, int]]:
        return non_sink_cells(self.spec)

    def degree(self, v) -> int:
        return 4


def carrier_of(g) -> SinkSpec:
    return g.spec if isinstance(g, TorusSandpile) else g


def _require_finite(spec: SinkSpec):
    if spec.period is None and spec.support() is None:
        raise GroupError(f"{spec.kind} has infinitely many non-sink cells; truncate it first")


def non_sink_cells(spec: SinkSpec) -> list[tuple[int, int]]:
    _require_finite(spec)
    window = default_window(spec)
    mask = spec.sink_mask(window)
    return [(window.x0 + int(i), window.y0 + int(j)) for i, j in np.argwhere(~mask)]


def _periodic(spec):
    return spec.period is not None


# ---------------------------------------------------------------------------
# Creutz identity and comparisons


def creutz_beta(spec, window: Rect | None = None) -> SandState:
    """Number of sink neighbours at each non-sink cell (0 on sinks)."""
    spec = carrier_of(spec)
    window = window or default_window(spec)
    if spec.period is not None:
        sinks = spec.sink_mask(window).astype(np.int64)
        beta = _spread(sinks, True)
        return SandState(spec, window, np.where(sinks, 0, beta))
    big = window.grow(1)
    sinks = spec.sink_mask(big).astype(np.int64)
    beta = _spread(sinks, False)[1:-1, 1:-1]
    background = 2 if isinstance(spec, (RayComplement, FullLineComplement)) else 0
    return SandState(spec, window, beta, background)


def comparison_mask(spec: SinkSpec, window: Rect, margin: int = DEFAULT_MARGIN) -> np.ndarray:
    """Non-sink cells farther than ``margin`` from any artificial (truncation) sink."""
    free = ~spec.sink_mask(window)
    parent = spec.parent
    if parent is None or spec.period is not None:
        return free
    big = window.grow(margin + 1)
    cut = spec.sink_mask(big) & ~parent.sink_mask(big)
    if not cut.any():
        return free
    dist = ndimage.distance_transform_cdt(~cut, metric="taxicab")[window.slices_in(big)]
    return free & (dist > margin)


def same_element(a: SandState, b: SandState, margin: int = DEFAULT_MARGIN) -> bool:
    if a.sinks != b.sinks:
        return False
    w = a.window.union(b.window)
    a, b = a.widen(w), b.widen(w)
    mask = comparison_mask(a.sinks, w, margin)
    return bool((a.cells[mask] == b.cells[mask]).all())


@dataclass(frozen=True)
class RecurrenceVerdict:
    recurrent: bool
    exact: bool
    margin: int
    compared_cells: int

    def __bool__(self):
        return self.recurrent


def is_recurrent(g: SandState, margin: int = DEFAULT_MARGIN) -> RecurrenceVerdict:
    """Whether relaxing ``g + beta`` gives back ``g``.

    On truncations of infinite sink sets only cells farther than ``margin``
    from the cut are compared (``exact`` is then False).
    """
    _require_finite(g.sinks)
    if (g.cells < 0).any() or not g.is_stable():
        return RecurrenceVerdict(False, True, 0, 0)
    beta = creutz_beta(g.sinks, g.window)
    back = relax_bulk(g + beta).stable
    mask = comparison_mask(g.sinks, g.window, margin)
    exact = g.sinks.parent is None or g.sinks.period is not None
    ok = same_element(back, g, margin)
    return RecurrenceVerdict(ok, exact, 0 if exact else margin, int(mask.sum()))


def burning_test(g: SandState) -> bool:
    """Dhar's criterion: fire spreading from the sinks reaches every vertex."""
    _require_finite(g.sinks)
    periodic = _periodic(g.sinks)
    unburnt = ~g.sink_mask
    vals = g.cells.astype(np.int64)
    while True:
        pressure = _spread(unburnt.astype(np.int64), periodic)
        burns = unburnt & (vals >= pressure)
        if not burns.any():
            return not unburnt.any()
        unburnt = unburnt & ~burns


# ---------------------------------------------------------------------------
# group operations


def _drive_cap(g: SandState) -> int:
    C = cnet_radius(g.sinks, default_probe(g.sinks)) if g.sinks.period is not None else 1
    if math.isinf(C):
        C = 1
    M = max(int(np.abs(g.cells).max(initial=0)), 1)
    return 4 * 4 ** (int(C) + 1) * M


def drive_to_recurrent(g: SandState, cap: int | None = None) -> SandState:
    """Add beta and relax until the state is a fixpoint (hence recurrent)."""
    cap = _drive_cap(g) if cap is None else cap
    beta = creutz_beta(g.sinks, g.window)
    x = relax_bulk(g).stable if not g.is_stable() else g
    for _ in range(cap):
        nxt = relax_bulk(x + beta).stable
        if nxt == x:
            return x
        x = nxt
    raise GroupError(f"no recurrent fixpoint within {cap} additions of beta")


def neutral_element(carrier, window: Rect | None = None, cap: int = 100_000) -> SandState:
    """Iterate e <- (e + beta) relaxed from the empty state to its fixpoint."""
    spec = carrier_of(carrier)
    _require_finite(spec)
    window = window or default_window(spec)
    beta = creutz_beta(spec, window)
    e = SandState.zeros(spec, window)
    for _ in range(cap):
        nxt = relax_bulk(e + beta).stable
        if nxt == e:
            return e
        e = nxt
    raise GroupError(f"identity not reached within {cap} iterations")


def partial_relax(values: np.ndarray, sinks: np.ndarray, periodic: bool, floor: int = 3) -> np.ndarray:
    """Topple only while a cell keeps at least ``floor`` grains afterwards."""
    psi = np.where(sinks, 0, values).astype(object)
    while True:
        q = np.where(psi >= floor + 4, (psi - floor) // 4, 0)
        if not q.any():
            return psi
        psi = psi - 4 * q + _spread(q, periodic)
        psi[sinks] = 0


def to_recurrent(x: SandState, cap: int = 64) -> SandState:
    """Recurrent representative of the class of an arbitrary integer state.

    Doubles n until ``x + n*beta``, partially relaxed, is at least 3 on every
    non-sink cell; the relaxation of such a state is recurrent.
    """
    spec = x.sinks
    _require_finite(spec)
    beta = creutz_beta(spec, x.window)
    sinks = x.sink_mask
    free = ~sinks
    n = 1
    for _ in range(cap):
        y = partial_relax(x.cells.astype(object) + n * beta.cells.astype(object), sinks, x.periodic)
        if (y[free] >= 3).all():
            return drive_to_recurrent(relax_bulk(x.replace(y)).stable)
        n *= 2
    raise GroupError(f"no multiple of beta up to 2**{cap} lifts the state above 3")


def group_add(a: SandState, b: SandState) -> SandState:
    if a.sinks != b.sinks:
        raise GroupError("elements live on different carriers")
    _require_finite(a.sinks)
    return drive_to_recurrent(relax_bulk(a + b).stable)


def group_inverse(a: SandState) -> SandState:
    if a.sinks.period is None and a.sinks.support() is None:
        raise GroupError("inverse needs a finite carrier")
    zero = SandState.zeros(a.sinks, a.window)
    return to_recurrent(zero - a)


def group_multiple(a: SandState, k: int) -> SandState:
    """k-fold sum by doubling."""
    if k < 1:
        raise ValueError("k must be positive")
    result = None
    base = a
    while k:
        if k & 1:
            result = base if result is None else group_add(result, base)
        k >>= 1
        if k:
            base = group_add(base, base)
    return result


def element_order(a: SandState, k_max: int, margin: int = DEFAULT_MARGIN,
                  identity: SandState | None = None) -> int | None:
    """Smallest k <= k_max with k*a equal to the identity, else None."""
    e = identity if identity is not None else neutral_element(a.sinks, a.window)
    x = a
    for k in range(1, k_max + 1):
        if same_element(x, e, margin):
            return k
        x = group_add(x, a)
    return None


def _prime_factors(n: int) -> list[int]:
    out, q = [], 2
    while q * q <= n:
        if n % q == 0:
            out.append(q)
            while n % q == 0:
                n //= q
        q += 1
    return out + ([n] if n > 1 else [])


def class_order(g: SandState) -> int:
    """Order of g's class: lcm of the denominators of Laplacian^{-1} g."""
    verts, mat = reduced_laplacian(g.sinks)
    u = solve_rational(mat, [int(g.value(v)) for v in verts])
    return math.lcm(*[v.denominator for v in u]) if u else 1


def verified_order(a: SandState, identity: SandState | None = None) -> int:
    """class_order, confirmed by k*a = e and (k/q)*a != e for each prime q | k."""
    k = class_order(a)
    e = identity if identity is not None else neutral_element(a.sinks, a.window)
    if not same_element(group_multiple(a, k), e):
        raise GroupError(f"{k} * a is not the identity")
    for q in _prime_factors(k):
        if same_element(group_multiple(a, k // q), e):
            raise GroupError(f"order is a proper divisor of {k}")
    return k


# ---------------------------------------------------------------------------
# Matrix-Tree count


def reduced_laplacian(carrier) -> tuple[list[tuple[int, int]], list[list[int]]]:
    """Minus the Laplacian restricted to non-sink cells, edges with multiplicity."""
    spec = carrier_of(carrier)
    verts = non_sink_cells(spec)
    index = {v: i for i, v in enumerate(verts)}
    period = spec.period
    mat = [[0] * len(verts) for _ in verts]
    for v, i in index.items():
        mat[i][i] = 4
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            w = (v[0] + dx, v[1] + dy)
            if period is not None:
                w = (w[0] % period[0], w[1] % period[1])
            j = index.get(w)
            if j is not None:
                mat[i][j] -= 1
    return verts, mat


def spanning_tree_count(carrier) -> int:
    """Order of the sandpile group: det of the reduced Laplacian."""
    _, mat = reduced_laplacian(carrier)
    det = bareiss_det(mat)
    if det == 0:
        raise GroupError("reduced Laplacian is singular: the graph is disconnected from its sinks")
    return det
