"""Exact integer, rational and Z_p linear algebra on small dense matrices."""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def bareiss_det(matrix) -> int:
    """Determinant by fraction-free elimination (every division is exact)."""
    a = [[int(v) for v in row] for row in matrix]
    n = len(a)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return 0
        pivot = a[k][k]
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * pivot - a[i][k] * a[k][j]) // prev
        prev = pivot
    return sign * a[n - 1][n - 1]


def rref_mod_p(rows, ncols: int, p: int) -> tuple[list[list[int]], list[int]]:
    """Reduced row echelon form over Z_p (p < 2**31); returns (rows, pivot columns)."""
    a = np.array([[int(v) % p for v in row] for row in rows], dtype=np.int64).reshape(-1, ncols)
    pivots = []
    r = 0
    for c in range(ncols):
        if r == a.shape[0]:
            break
        nz = np.nonzero(a[r:, c])[0]
        if len(nz) == 0:
            continue
        piv = r + int(nz[0])
        if piv != r:
            a[[r, piv]] = a[[piv, r]]
        a[r] = a[r] * pow(int(a[r, c]), -1, p) % p
        f = a[:, c].copy()
        f[r] = 0
        hit = np.nonzero(f)[0]
        if len(hit):
            a[hit] = (a[hit] - np.outer(f[hit], a[r])) % p
        pivots.append(c)
        r += 1
    return a[:r].tolist(), pivots


def rank_mod_p(rows, ncols: int, p: int) -> int:
    return len(rref_mod_p(rows, ncols, p)[1])


def nullspace_mod_p(rows, ncols: int, p: int) -> list[list[int]]:
    """Basis of {x : A x = 0 (mod p)}, one vector per free column."""
    red, pivots = rref_mod_p(rows, ncols, p)
    free = [c for c in range(ncols) if c not in set(pivots)]
    basis = []
    for f in free:
        v = [0] * ncols
        v[f] = 1
        for row, c in zip(red, pivots):
            v[c] = -row[f] % p
        basis.append(v)
    return basis


def in_span_mod_p(vec, basis, p: int) -> bool:
    n = len(vec)
    if not basis:
        return all(v % p == 0 for v in vec)
    return rank_mod_p(list(basis) + [vec], n, p) == rank_mod_p(basis, n, p)


def solve_rational(matrix, rhs) -> list[Fraction]:
    """Solve A x = b exactly for square nonsingular A."""
    n = len(matrix)
    a = [[Fraction(int(v)) for v in row] + [Fraction(rhs[i])] for i, row in enumerate(matrix)]
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i][c] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular matrix")
        a[c], a[piv] = a[piv], a[c]
        pv = a[c][c]
        a[c] = [v / pv for v in a[c]]
        for i in range(n):
            if i != c and a[i][c] != 0:
                f = a[i][c]
                a[i] = [vi - f * vc for vi, vc in zip(a[i], a[c])]
    return [a[i][n] for i in range(n)]
