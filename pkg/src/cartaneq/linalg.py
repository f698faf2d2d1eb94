"""Exact linear algebra over the rational expression field.

Matrices are plain lists of lists of Expr.  Pivoting uses decidable symbolic
zero-tests, so ranks are generic ranks over the function field; points where
a pivot happens to vanish are chart restrictions, not errors.
"""

from __future__ import annotations

from typing import Sequence

from .exprs import Context, Expr, ExprError

__all__ = [
    "SingularMatrixError",
    "identity_matrix",
    "mat_mul",
    "mat_vec",
    "mat_det",
    "mat_inverse",
    "mat_sub",
    "symbolic_rank",
    "row_reduce",
]

Matrix = list


class SingularMatrixError(ExprError):
    """Determinant is identically zero."""


def identity_matrix(ctx: Context, n: int) -> Matrix:
    return [[ctx.one if i == j else ctx.zero for j in range(n)] for i in range(n)]


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    n, k, m = len(a), len(b), len(b[0])
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = a[i][0] * b[0][j]
            for t in range(1, k):
                acc = acc + a[i][t] * b[t][j]
            row.append(acc)
        out.append(row)
    return out


def mat_vec(a: Matrix, v: Sequence[Expr]) -> list[Expr]:
    out = []
    for row in a:
        acc = row[0] * v[0]
        for t in range(1, len(v)):
            acc = acc + row[t] * v[t]
        out.append(acc)
    return out


def mat_sub(a: Matrix, b: Matrix) -> Matrix:
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_det(m: Matrix) -> Expr:
    """Determinant by elimination without row scaling."""
    n = len(m)
    ctx = m[0][0].ctx
    a = [row[:] for row in m]
    det = ctx.one
    for col in range(n):
        pivot = None
        for r in range(col, n):
            if not a[r][col].is_zero():
                pivot = r
                break
        if pivot is None:
            return ctx.zero
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            det = -det
        det = det * a[col][col]
        for r in range(col + 1, n):
            if a[r][col].is_zero():
                continue
            f = a[r][col] / a[col][col]
            for c in range(col, n):
                a[r][c] = a[r][c] - f * a[col][c]
    return det


def mat_inverse(m: Matrix) -> Matrix:
    """Exact inverse via Gauss-Jordan; raises when singular as an Expr matrix."""
    n = len(m)
    ctx = m[0][0].ctx
    a = [row[:] + [ctx.one if i == j else ctx.zero for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        pivot = None
        for r in range(col, n):
            if not a[r][col].is_zero():
                pivot = r
                break
        if pivot is None:
            raise SingularMatrixError("matrix is singular as an expression matrix")
        a[col], a[pivot] = a[pivot], a[col]
        pv = a[col][col]
        a[col] = [entry / pv for entry in a[col]]
        for r in range(n):
            if r == col or a[r][col].is_zero():
                continue
            f = a[r][col]
            a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[n:] for row in a]


def symbolic_rank(rows: Sequence[Sequence[Expr]]) -> int:
    """Generic rank over the function field."""
    if not rows:
        return 0
    work = [list(r) for r in rows]
    ncols = len(work[0])
    rank = 0
    for col in range(ncols):
        pivot = None
        for r in range(rank, len(work)):
            if not work[r][col].is_zero():
                pivot = r
                break
        if pivot is None:
            continue
        work[rank], work[pivot] = work[pivot], work[rank]
        pv = work[rank][col]
        for r in range(len(work)):
            if r == rank or work[r][col].is_zero():
                continue
            f = work[r][col] / pv
            for c in range(col, ncols):
                work[r][c] = work[r][c] - f * work[rank][c]
        rank += 1
        if rank == len(work):
            break
    return rank


def row_reduce(rows: list[list[Expr]], npivot_cols: int) -> tuple[list[list[Expr]], list[tuple[int, int]]]:
    """Reduced row echelon form over the first ``npivot_cols`` columns.

    Pivot search walks columns left to right and takes the first unused row
    with a nonzero entry (rows are never swapped), which makes the
    principal/parametric split deterministic.  Returns the transformed rows
    and the list of (row, col) pivots; pivot rows are normalized to 1 and
    pivot columns cleared everywhere else.  Trailing columns (right-hand
    sides) are carried along.
    """
    used = [False] * len(rows)
    pivots: list[tuple[int, int]] = []
    for col in range(npivot_cols):
        pivot = None
        for r in range(len(rows)):
            if not used[r] and not rows[r][col].is_zero():
                pivot = r
                break
        if pivot is None:
            continue
        used[pivot] = True
        pivots.append((pivot, col))
        pv = rows[pivot][col]
        rows[pivot] = [entry / pv for entry in rows[pivot]]
        for r in range(len(rows)):
            if r == pivot or rows[r][col].is_zero():
                continue
            f = rows[r][col]
            rows[r] = [x - f * y for x, y in zip(rows[r], rows[pivot])]
    return rows, pivots
