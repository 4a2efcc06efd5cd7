"""Dense Gaussian elimination for the small coefficient systems of the centerline ODEs."""

from __future__ import annotations

from h2jet.errors import PhysicsDomainError

COND_LIMIT = 1e12


def solve(A, rhs, cond_limit: float = COND_LIMIT) -> list[float]:
    """Solve ``A x = rhs`` by partial pivoting after row/column equilibration.

    ``A`` is a list of rows of floats. The ratio of largest to smallest pivot of
    the equilibrated matrix serves as the condition estimate.
    """
    n = len(A)
    if len(rhs) != n or any(len(row) != n for row in A):
        raise ValueError("coefficient matrix must be square")

    a = []
    for row, r in zip(A, rhs):
        s = max(map(abs, row))
        if s == 0.0:
            raise PhysicsDomainError("degenerate state: zero row in coefficient matrix")
        a.append([float(v) / s for v in row] + [float(r) / s])
    col_scale = [max(map(abs, col)) for col in zip(*a)][:n]
    if min(col_scale) == 0.0:
        raise PhysicsDomainError("degenerate state: zero column in coefficient matrix")
    a = [[v / c for v, c in zip(row, col_scale)] + [row[n]] for row in a]

    pivots = []
    for k in range(n):
        p, best = k, abs(a[k][k])
        for i in range(k + 1, n):
            v = abs(a[i][k])
            if v > best:
                p, best = i, v
        if best == 0.0:
            raise PhysicsDomainError("degenerate state: singular coefficient matrix")
        if p != k:
            a[k], a[p] = a[p], a[k]
        pivot = a[k][k]
        pivots.append(abs(pivot))
        for i in range(k + 1, n):
            f = a[i][k] / pivot
            if f != 0.0:
                ri, rk = a[i], a[k]
                for j in range(k, n + 1):
                    ri[j] -= f * rk[j]

    if max(pivots) / min(pivots) > cond_limit:
        raise PhysicsDomainError("degenerate state: coefficient matrix ill-conditioned")

    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        acc = a[i][n]
        for j in range(i + 1, n):
            acc -= a[i][j] * x[j]
        x[i] = acc / a[i][i]
    return [xi / cs for xi, cs in zip(x, col_scale)]
