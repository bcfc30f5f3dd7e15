"""Z_k-valued harmonic functions, the ray recurrence and the Poisson solver.

All mod-1 quantities are exact: a value a in [0, 1) with denominator k is
stored as its numerator in [0, k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from .group import (
    GroupError,
    carrier_of,
    element_order,
    neutral_element,
    reduced_laplacian,
    to_recurrent,
)
from .lattice import (
    LineWithIntervals,
    SinkSpec,
    TorusQuotient,
    TruncatedRay,
    cnet_radius,
    default_probe,
    h_field,
    laplacian_grid,
)
from .linalg import in_span_mod_p, nullspace_mod_p, rank_mod_p, rref_mod_p, solve_rational
from .relax import relax_bulk
from .state import SandState, default_window


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    return all(p % q for q in range(2, math.isqrt(p) + 1))


def primes(count: int) -> list[int]:
    out, q = [], 2
    while len(out) < count:
        if is_prime(q):
            out.append(q)
        q += 1
    return out


def factorize(n: int) -> dict[int, int]:
    out, q = {}, 2
    while q * q <= n:
        while n % q == 0:
            out[q] = out.get(q, 0) + 1
            n //= q
        q += 1
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


# ---------------------------------------------------------------------------
# the ray recurrence b_{n+1} = 4 b_n - b_{n-1}


@dataclass(frozen=True)
class ModKSequence:
    modulus: int
    values: tuple[int, ...]

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)

    def satisfies_recurrence(self) -> bool:
        k, b = self.modulus, self.values
        return all((b[i + 1] - 4 * b[i] + b[i - 1]) % k == 0 for i in range(1, len(b) - 1))


@dataclass(frozen=True)
class RationalRaySequence:
    """a_n = numerators[n] / k in [0, 1), harmonic mod 1 along the ray."""

    k: int
    numerators: tuple[int, ...]

    def a(self, n: int) -> Fraction:
        return Fraction(self.numerators[n], self.k)

    def laplacian(self, n: int) -> int:
        """a_{n-1} + a_{n+1} - 4 a_n taken in R; an integer by harmonicity."""
        num = self.numerators[n - 1] + self.numerators[n + 1] - 4 * self.numerators[n]
        q, r = divmod(num, self.k)
        if r:
            raise ArithmeticError(f"sequence is not harmonic mod 1 at n={n}")
        return q


def ray_integers(length: int) -> list[int]:
    """Unreduced 0, 1, 4, 15, 56, ... (coefficients of a_1)."""
    b = [0, 1]
    while len(b) < length:
        b.append(4 * b[-1] - b[-2])
    return b[:length]


def ray_mod_k(k: int, b1: int = 1, length: int = 2) -> ModKSequence:
    if k < 2:
        raise ValueError("modulus must be at least 2")
    if length < 2:
        raise ValueError("length must be at least 2")
    b = [0, b1 % k]
    while len(b) < length:
        b.append((4 * b[-1] - b[-2]) % k)
    return ModKSequence(k, tuple(b))


def rank_and_period(k: int) -> tuple[int, int]:
    """(d, pi): first zero of b_m and the period of the pair (b_N, b_N+1)."""
    if k < 2:
        raise ValueError("modulus must be at least 2")
    prev, cur = 0, 1 % k
    d = None
    N = 1
    while True:
        if cur == 0 and d is None:
            d = N
        prev, cur = cur, (4 * cur - prev) % k
        if (prev, cur) == (0, 1 % k):
            return d, N
        N += 1


def ray_rational(k: int, c_num: int, length: int) -> RationalRaySequence:
    b = ray_mod_k(k, 1, length)
    return RationalRaySequence(k, tuple(c_num * v % k for v in b.values))


def ray_state_from_torsion(k: int, c_num: int, length: int | None = None) -> SandState:
    """Recurrent ray state for the harmonic sequence a_1 = c_num / k.

    The integer Laplacian phi of the [0, 1) lift lies in [-3, 1]; the state
    6 + 3*delta_1 + phi is at least 3, so its relaxation is recurrent.
    """
    if not 1 <= c_num < k:
        raise ValueError("c_num must lie in [1, k) for a torsion element")
    if length is None:
        length = 10 * rank_and_period(k)[1] + 20
    seq = ray_rational(k, c_num, length + 2)
    phi = [seq.laplacian(n) for n in range(1, length + 1)]
    if min(phi) < -3 or max(phi) > 1:
        raise ArithmeticError(f"Laplacian of the lift left [-3, 1]: {min(phi)}..{max(phi)}")
    gamma = [6 + (3 if n == 1 else 0) + phi[n - 1] for n in range(1, length + 1)]
    state = SandState.from_sequence(TruncatedRay(length), gamma)
    return relax_bulk(state).stable


# ---------------------------------------------------------------------------
# harmonic functions mod k on finite carriers


@dataclass(frozen=True, eq=False)
class HarmonicModK:
    carrier: SinkSpec
    modulus: int
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.int64) % self.modulus
        arr = np.where(self.carrier.sink_mask(default_window(self.carrier)), 0, arr)
        object.__setattr__(self, "values", arr)

    @property
    def window(self):
        return default_window(self.carrier)

    def residue(self) -> np.ndarray:
        """Laplacian mod k (zero everywhere iff harmonic)."""
        lap = laplacian_grid(self.values, self.carrier.sink_mask(self.window),
                             periodic=self.carrier.period is not None)
        return lap % self.modulus

    def is_harmonic(self) -> bool:
        return not self.residue().any()

    def is_zero(self) -> bool:
        return not self.values.any()

    def order(self) -> int:
        g = reduce(math.gcd, [int(v) for v in self.values.ravel()], self.modulus)
        return self.modulus // g

    def lift(self, rect) -> np.ndarray:
        """Periodic extension to a plane window (torus carriers only)."""
        m, n = self.carrier.period
        xs, ys = rect.coords()
        return self.values[xs % m, ys % n]


def laplacian_kernel_mod_p(carrier, p: int) -> list[HarmonicModK]:
    """Basis of Z_p-harmonic functions (zero on sinks) on a finite carrier."""
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    spec = carrier_of(carrier)
    verts, mat = reduced_laplacian(spec)
    window = default_window(spec)
    out = []
    for vec in nullspace_mod_p(mat, len(verts), p):
        arr = np.zeros(window.shape, dtype=np.int64)
        for (x, y), v in zip(verts, vec):
            arr[x - window.x0, y - window.y0] = v
        out.append(HarmonicModK(spec, p, arr))
    return out


def kernel_dimension_mod_p(carrier, p: int) -> int:
    verts, mat = reduced_laplacian(carrier_of(carrier))
    return len(verts) - rank_mod_p(mat, len(verts), p)


def harmonic_vector(phi: HarmonicModK) -> list[int]:
    verts, _ = reduced_laplacian(phi.carrier)
    w = phi.window
    return [int(phi.values[x - w.x0, y - w.y0]) for x, y in verts]


def in_kernel_span(phi: HarmonicModK) -> bool:
    basis = [harmonic_vector(b) for b in laplacian_kernel_mod_p(phi.carrier, phi.modulus)]
    return in_span_mod_p(harmonic_vector(phi), basis, phi.modulus)


def harmonic_to_state(phi: HarmonicModK) -> SandState:
    """Recurrent state for phi: Laplacian of the real lift phi/k, driven to recurrence."""
    if not phi.is_harmonic():
        raise ValueError("function is not harmonic mod k")
    k = phi.modulus
    sinks = phi.carrier.sink_mask(phi.window)
    lap = laplacian_grid(phi.values, sinks, periodic=phi.carrier.period is not None)
    state = SandState(phi.carrier, phi.window, lap // k)
    return to_recurrent(state)


def state_to_harmonic(g: SandState, k: int) -> HarmonicModK:
    """phi = k * Laplacian^{-1}(g) mod k; needs k * g = 0 in the group."""
    verts, mat = reduced_laplacian(g.sinks)
    w = g.window
    rhs = [-int(g.cells[x - w.x0, y - w.y0]) for x, y in verts]
    u = solve_rational(mat, rhs)
    arr = np.zeros(w.shape, dtype=np.int64)
    for (x, y), val in zip(verts, u):
        kv = k * val
        if kv.denominator != 1:
            raise GroupError(f"element order does not divide {k}")
        arr[x - w.x0, y - w.y0] = int(kv) % k
    return HarmonicModK(g.sinks, k, arr)


# ---------------------------------------------------------------------------
# transfer along the cylinder W_n


def _columns(v, x, t, m, n, p):
    """Propagate from v = (col[0][1:], col[-1][1:]) and free values x.

    Returns the columns 0..t*m (inclusive) and the sink-row values at the
    sink columns m, 2m, ..., t*m.
    """
    col_prev = np.zeros(n, dtype=np.int64)
    col = np.zeros(n, dtype=np.int64)
    col[1:] = v[: n - 1]
    col_prev[1:] = v[n - 1:]
    cols = [col_prev, col]
    checks = []
    for step in range(t * m):
        c0, c1 = cols[-2], cols[-1]
        nxt = (4 * c1 - c0 - np.roll(c1, 1) - np.roll(c1, -1)) % p
        if step % m == 0:
            # (step, 0) is a sink: no equation there, the next value is free
            nxt[0] = x[step // m] % p
        cols.append(nxt)
        if (step + 1) % m == 0:
            checks.append(int(nxt[0]))
    return cols[1:], checks


def _block_maps(m, n, p, t):
    dim = 2 * n - 2
    zero_v = np.zeros(dim, dtype=np.int64)
    zero_x = [0] * t

    def run(v, x):
        cols, checks = _columns(v, x, t, m, n, p)
        nxt = np.concatenate([cols[-1][1:], cols[-2][1:]])
        return np.array(checks, dtype=np.int64), nxt

    A = np.zeros((t, dim), dtype=np.int64)
    E = np.zeros((dim, dim), dtype=np.int64)
    for i in range(dim):
        e = zero_v.copy()
        e[i] = 1
        c, nv = run(e, zero_x)
        A[:, i], E[:, i] = c, nv
    B = np.zeros((t, t), dtype=np.int64)
    G = np.zeros((dim, t), dtype=np.int64)
    for j in range(t):
        x = [0] * t
        x[j] = 1
        c, nv = run(zero_v, x)
        B[:, j], G[:, j] = c, nv
    return A, B, E, G


def _solve_free(B, rhs, p):
    """Particular solution of B x = rhs (mod p) with free unknowns 0, or None."""
    t = B.shape[1]
    aug = np.concatenate([B, rhs.reshape(-1, 1)], axis=1)
    red, piv = rref_mod_p(aug.tolist(), t + 1, p)
    if t in piv:
        return None
    x = np.zeros(t, dtype=np.int64)
    for row, c in zip(red, piv):
        x[c] = row[t]
    return x


def cylinder_transfer_harmonic(m: int, n: int, p: int, cap: int = 10**6,
                               max_doublings: int = 4) -> HarmonicModK | None:
    """Periodic Z_p-harmonic function for the sinks (m i, n j), built column by column.

    The state v_k holds columns km and km - 1 (rows 1..n-1); the free value
    at (km + 1, 0) is tuned so the next sink reads 0. A repeat v_k = v_k'
    closes the segment into an x-periodic function on the torus
    ((k' - k) * block, n). When the free value cannot reach the next sink the
    block is doubled, up to ``max_doublings`` times; None means inconclusive.
    """
    if m < 2 or n < 2:
        raise ValueError("m and n must be at least 2")
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    dim = 2 * n - 2
    for doubling in range(max_doublings + 1):
        t = 2 ** doubling
        A, B, E, G = _block_maps(m, n, p, t)
        alpha = int(B[0, 0])
        if doubling == 0 and alpha == 0:
            continue
        if doubling > 0 and int(B[t - 1, 0]) == 0:
            continue
        # admissible v: constraints solvable; take a basis of that subspace
        starts = _admissible_basis(A, B, p, dim)
        for v0 in starts:
            found = _walk(v0, A, B, E, G, p, cap)
            if found is None:
                continue
            seq, xs, k0 = found
            phi = _assemble(seq[k0:-1], xs[k0:], m, n, p, t)
            if phi is not None and not phi.is_zero():
                phi.info.update({"alpha": alpha, "block": t * m, "cycle_start": k0,
                                 "cycle_length": len(seq) - 1 - k0})
                return phi
    return None


def _admissible_basis(A, B, p, dim):
    # v admissible iff A v lies in the column space of B
    if rank_mod_p(B.tolist(), B.shape[1], p) == B.shape[0]:
        return [np.eye(dim, dtype=np.int64)[i] for i in range(dim)]
    # left null vectors y of B give conditions y A v = 0
    left = nullspace_mod_p(B.T.tolist(), B.shape[0], p)
    cond = [(np.array(y) @ A % p).tolist() for y in left]
    return [np.array(b, dtype=np.int64) for b in nullspace_mod_p(cond, dim, p)]


def _walk(v0, A, B, E, G, p, cap):
    seen = {}
    seq, xs = [], []
    v = v0 % p
    for _ in range(cap):
        key = tuple(int(a) for a in v)
        if key in seen:
            seq.append(v)
            return seq, xs, seen[key]
        seen[key] = len(seq)
        seq.append(v)
        x = _solve_free(B, (-A @ v) % p, p)
        if x is None:
            return None
        xs.append(x)
        v = (E @ v + G @ x) % p
    return None


def _assemble(states, xs, m, n, p, t):
    width = len(states) * t * m
    if width == 0:
        return None
    arr = np.zeros((width, n), dtype=np.int64)
    for i, (v, x) in enumerate(zip(states, xs)):
        cols, _ = _columns(v, x, t, m, n, p)
        for j in range(t * m):
            arr[i * t * m + j] = cols[j]
    sinks = frozenset((s * m, 0) for s in range(width // m))
    return HarmonicModK(TorusQuotient(width, n, sinks), p, arr)


# ---------------------------------------------------------------------------
# torsion on periodic sink lattices


def periodic_torus(m: int, n: int, reps_x: int, reps_y: int) -> TorusQuotient:
    """Torus quotient of the sinks (m i, n j) covering reps_x by reps_y periods."""
    sinks = frozenset((i * m, j * n) for i in range(reps_x) for j in range(reps_y))
    return TorusQuotient(m * reps_x, n * reps_y, sinks)


def _element_of_order(carrier, q: int) -> SandState | None:
    """A state whose class has order exactly q (a prime power), if one exists."""
    spec = carrier_of(carrier)
    verts, mat = reduced_laplacian(spec)
    w = default_window(spec)
    for x, y in verts:
        rhs = [0] * len(verts)
        rhs[verts.index((x, y))] = 1
        order = reduce(math.lcm, [v.denominator for v in solve_rational(mat, rhs)], 1)
        if order % q == 0:
            arr = np.zeros(w.shape, dtype=np.int64)
            arr[x - w.x0, y - w.y0] = order // q
            return SandState(spec, w, arr)
    return None


@dataclass
class TorsionWitness:
    k: int
    harmonic: HarmonicModK
    element: SandState
    order: int
    route: str


def periodic_torsion_witness(k: int, m: int = 2, n: int = 2, y_reps: int = 1,
                             max_x_reps: int = 24) -> TorsionWitness:
    """Order-k element of C(Z^2, S_{m,n}) periodic with period n*y_reps in y.

    Prime k comes from the kernel of the Laplacian mod k on growing tori;
    composite k combines prime-power parts by the Chinese remainder theorem.
    """
    parts = factorize(k)
    pieces = {}
    for q, e in parts.items():
        qe = q ** e
        for reps in range(1, max_x_reps + 1):
            torus = periodic_torus(m, n, reps, y_reps)
            if e == 1:
                basis = laplacian_kernel_mod_p(torus, q)
                if basis:
                    pieces[qe] = (basis[0], "kernel")
                    break
            else:
                g = _element_of_order(torus, qe)
                if g is not None:
                    pieces[qe] = (state_to_harmonic(g, qe), "construction")
                    break
        else:
            raise GroupError(f"no {qe}-torsion found up to {max_x_reps} periods")
    width = reduce(math.lcm, [h.carrier.m for h, _ in pieces.values()], m)
    torus = periodic_torus(m, n, width // m, y_reps)
    rect = default_window(torus)
    total = np.zeros(rect.shape, dtype=np.int64)
    for qe, (h, _) in pieces.items():
        # CRT coefficient: 1 mod qe, 0 mod k / qe
        rest = k // qe
        coeff = rest * pow(rest, -1, qe) % k
        total = (total + coeff * h.lift(rect)) % k
    route = "kernel" if len(parts) == 1 and list(parts.values())[0] == 1 else "construction"
    phi = HarmonicModK(torus, k, total, {"route": route})
    element = harmonic_to_state(phi)
    order = element_order(element, k, identity=neutral_element(torus))
    return TorsionWitness(k, phi, element, order or 0, route)


# ---------------------------------------------------------------------------
# killing torsion with attached intervals


@dataclass
class NoTorsionReport:
    spec: LineWithIntervals
    attachments: list[tuple[int, int]]
    primes: list[int]
    signs: list[str]
    kernel_dims: dict[int, int]
    ok: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "attachments": [list(a) for a in self.attachments],
                "primes": self.primes, "signs": self.signs,
                "kernel_dims": {str(p): d for p, d in self.kernel_dims.items()}, "ok": self.ok,
                "message": self.message}


def _prefix(attachments) -> LineWithIntervals:
    # an attachment (k, K) is a column of K cells (k, 0..K-1) under the sink (k, K)
    return LineWithIntervals(tuple((k, K - 1) for k, K in attachments), x_max=attachments[-1][0])


def no_torsion_prefix(J: int, max_J: int = 6) -> NoTorsionReport:
    """Attach columns at k_j of K_j cells so the prefix x <= k_J has no p_1..p_J torsion.

    k_1 = 3, K_1 = 2; K_{j+1} = K_j * d(p_{j+1}), k_{j+1} = k_j + K_{j+1} +- 1
    with the sign picked by the kernel test ('+' first).
    """
    if not 1 <= J <= max_J:
        raise ValueError(f"J must lie in 1..{max_J}")
    ps = primes(J)
    att = [(3, 2)]
    signs = []
    for j in range(1, J):
        k_prev, K_prev = att[-1]
        K = K_prev * rank_and_period(ps[j])[0]
        for sign in ("+", "-"):
            k = k_prev + K + (1 if sign == "+" else -1)
            cand = att + [(k, K)]
            if all(kernel_dimension_mod_p(_prefix(cand), p) == 0 for p in ps[: j + 1]):
                break
        else:
            sign, cand = "+", att + [(k_prev + K + 1, K)]
        att = cand
        signs.append(sign)
    spec = _prefix(att)
    kd = {p: kernel_dimension_mod_p(spec, p) for p in ps}
    ok = not any(kd.values())
    return NoTorsionReport(spec, att, ps, signs, kd, ok,
                           "" if ok else "prefix kernel is nontrivial")


# ---------------------------------------------------------------------------
# bounded Poisson solutions


@dataclass
class PoissonResult:
    phi_scaled: np.ndarray
    scale_bits: int
    iterations: int
    monotone: bool
    bounded: bool
    bound: np.ndarray
    residual: float

    @property
    def phi(self) -> np.ndarray:
        return np.vectorize(lambda v: float(Fraction(v, 1 << self.scale_bits)))(self.phi_scaled)

    def exact(self, i, j) -> Fraction:
        return Fraction(int(self.phi_scaled[i, j]), 1 << self.scale_bits)


def poisson_solve(psi: SandState, tol: Fraction = Fraction(1, 2**40), scale_bits: int = 64,
                  max_iter: int = 10**6, C: int | None = None) -> PoissonResult:
    """Bounded phi with Laplacian(phi) = psi off the sinks.

    Each sign part of psi is solved by the monotone iteration
    phi <- (-psi + sum of neighbours) / 4 started at L*h, in fixed-point
    dyadic arithmetic (round down, which keeps the iterates decreasing).
    """
    spec = psi.sinks
    if spec.period is None and spec.support() is None:
        raise ValueError("poisson_solve needs a torus or finite carrier")
    periodic = spec.period is not None
    window = psi.window
    sinks = psi.sink_mask
    if C is None:
        C = int(cnet_radius(spec, default_probe(spec) if periodic else window.grow(1)))
    h = h_field(spec, window, C)
    one = 1 << scale_bits
    tol_scaled = max(int(tol * one), 1)
    vals = psi.cells.astype(object)
    L = int(np.abs(vals).max(initial=0))
    parts = [np.where(vals > 0, vals, 0), np.where(vals < 0, -vals, 0)]
    results = []
    iterations = 0
    monotone = bounded = True
    for part in parts:
        Lp = int(part.max(initial=0))
        if Lp == 0:
            results.append(np.zeros(window.shape, dtype=object))
            continue
        phi = np.where(sinks, 0, h * Lp * one).astype(object)
        lower = -h * Lp * one
        rhs = part * one
        for it in range(max_iter):
            nb = _neighbour_sum(phi, periodic)
            nxt = np.where(sinks, 0, (nb - rhs) // 4)
            diff = phi - nxt
            if (diff < 0).any():
                monotone = False
            if (nxt < lower - 1).any():
                bounded = False
            phi = nxt
            if diff.max() < tol_scaled:
                break
        else:
            raise RuntimeError(f"Poisson iteration did not converge in {max_iter} steps")
        iterations = max(iterations, it + 1)
        results.append(phi)
    phi = results[0] - results[1]
    lap = laplacian_grid(phi, sinks, periodic)
    res = np.where(sinks, 0, lap - vals * one)
    residual = float(Fraction(int(np.abs(res).max(initial=0)), one))
    bound = h * L
    return PoissonResult(phi, scale_bits, iterations, monotone, bounded, bound, residual)


def _neighbour_sum(v, periodic):
    if periodic:
        return np.roll(v, 1, 0) + np.roll(v, -1, 0) + np.roll(v, 1, 1) + np.roll(v, -1, 1)
    out = np.zeros_like(v)
    out[1:] += v[:-1]
    out[:-1] += v[1:]
    out[:, 1:] += v[:, :-1]
    out[:, :-1] += v[:, 1:]
    return out
