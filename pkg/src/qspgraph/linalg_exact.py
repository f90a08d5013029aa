"""Exact rational linear algebra: RREF, null spaces, and LP feasibility.

Everything here runs over ``fractions.Fraction`` so mass-balance feasibility
and conservation-law extraction carry no floating tolerance.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

Matrix = list[list[Fraction]]


def to_fractions(rows: Sequence[Sequence[int | float | Fraction]]) -> Matrix:
    return [[Fraction(x) for x in row] for row in rows]


def rref(matrix: Matrix) -> tuple[Matrix, list[int]]:
    """Reduced row echelon form; returns (rref, pivot column indices)."""
    m = [row[:] for row in matrix]
    rows = len(m)
    cols = len(m[0]) if rows else 0
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        pivot_row = next((i for i in range(r, rows) if m[i][c] != 0), None)
        if pivot_row is None:
            continue
        m[r], m[pivot_row] = m[pivot_row], m[r]
        inv = m[r][c]
        m[r] = [x / inv for x in m[r]]
        for i in range(rows):
            if i != r and m[i][c] != 0:
                factor = m[i][c]
                m[i] = [a - factor * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return m, pivots


def nullspace(matrix: Matrix, cols: int | None = None) -> list[list[Fraction]]:
    """Basis of the right null space {x : M x = 0} as a list of vectors."""
    if not matrix:
        n = cols or 0
        return [[Fraction(int(i == j)) for i in range(n)] for j in range(n)]
    n = len(matrix[0])
    reduced, pivots = rref(matrix)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * n
        vec[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            vec[pc] = -reduced[r][fc]
        basis.append(vec)
    return basis


def left_nullspace(matrix: Matrix, rows: int | None = None) -> list[list[Fraction]]:
    """Basis of {y : y^T M = 0}, i.e. the null space of M^T."""
    if not matrix:
        m = rows or 0
        return [[Fraction(int(i == j)) for i in range(m)] for j in range(m)]
    transposed = [[matrix[i][j] for i in range(len(matrix))] for j in range(len(matrix[0]))]
    return nullspace(transposed, cols=len(matrix))


def integerize(vec: Sequence[Fraction]) -> list[int]:
    """Scale a rational vector to the smallest integer vector (same direction)."""
    from math import gcd, lcm

    denoms = [f.denominator for f in vec]
    scale = 1
    for d in denoms:
        scale = lcm(scale, d)
    ints = [int(f * scale) for f in vec]
    g = 0
    for x in ints:
        g = gcd(g, abs(x))
    if g > 1:
        ints = [x // g for x in ints]
    return ints


def _phase_one_simplex(A: Matrix, b: list[Fraction]) -> list[Fraction] | None:
    """Find x >= 0 with A x = b via exact Phase-I simplex (Bland's rule).

    Returns a feasible x or None when the system is infeasible.
    """
    rows = len(A)
    if rows == 0:
        return []
    n = len(A[0])

    # Ensure b >= 0.
    A = [row[:] for row in A]
    b = b[:]
    for i in range(rows):
        if b[i] < 0:
            A[i] = [-x for x in A[i]]
            b[i] = -b[i]

    # Tableau columns: x (n), artificials (rows), rhs.
    width = n + rows + 1
    tab: Matrix = []
    for i in range(rows):
        row = A[i] + [Fraction(int(i == j)) for j in range(rows)] + [b[i]]
        tab.append(row)
    basis = [n + i for i in range(rows)]

    # Objective: minimize sum of artificials; reduced-cost row relative to
    # the artificial starting basis.
    cost = [Fraction(0)] * n + [Fraction(1)] * rows + [Fraction(0)]
    for i in range(rows):
        cost = [c - t for c, t in zip(cost, tab[i])]

    def pivot(pr: int, pc: int) -> None:
        inv = tab[pr][pc]
        tab[pr] = [x / inv for x in tab[pr]]
        for i in range(rows):
            if i != pr and tab[i][pc] != 0:
                f = tab[i][pc]
                tab[i] = [a - f * c for a, c in zip(tab[i], tab[pr])]
        nonlocal cost
        if cost[pc] != 0:
            f = cost[pc]
            cost = [a - f * c for a, c in zip(cost, tab[pr])]
        basis[pr] = pc

    while True:
        # Bland: entering = lowest-index column with negative reduced cost.
        entering = next((j for j in range(n + rows) if cost[j] < 0), None)
        if entering is None:
            break
        # Ratio test, Bland tie-break on row basis index.
        best: tuple[Fraction, int, int] | None = None
        for i in range(rows):
            if tab[i][entering] > 0:
                ratio = tab[i][width - 1] / tab[i][entering]
                key = (ratio, basis[i], i)
                if best is None or key < best:
                    best = key
        if best is None:
            # Unbounded in Phase I cannot happen with artificial start; treat
            # as numerical impossibility.
            return None
        pivot(best[2], entering)

    objective = -cost[width - 1]
    if objective != 0:
        return None

    # Drive lingering artificial basics out where possible.
    for i in range(rows):
        if basis[i] >= n:
            pc = next((j for j in range(n) if tab[i][j] != 0), None)
            if pc is not None:
                pivot(i, pc)

    x = [Fraction(0)] * n
    for i, bj in enumerate(basis):
        if bj < n:
            x[bj] = tab[i][width - 1]
    return x


def positive_nullvector(matrix: Matrix, n_vars: int) -> list[Fraction] | None:
    """Strictly positive rational x with (matrix) x = 0, or None.

    Uses the substitution x = 1 + y, y >= 0, reducing strict positivity to a
    Phase-I feasibility problem; any feasible x scales to x >= 1.
    """
    if n_vars == 0:
        return []
    rows = [row for row in matrix if any(v != 0 for v in row)]
    if not rows:
        return [Fraction(1)] * n_vars
    b = [-sum(row) for row in rows]
    y = _phase_one_simplex(rows, b)
    if y is None:
        return None
    x = [Fraction(1) + yi for yi in y]
    # Exactness check: the solution must satisfy the system exactly.
    for row in rows:
        assert sum(r * xi for r, xi in zip(row, x)) == 0
    assert all(xi > 0 for xi in x)
    return x
