"""Transportation-problem network simplex.

Works either exactly (rational input scaled to Python integers, held in
numpy object arrays) or in float64. The basis is a spanning tree of the
bipartite graph rows -> columns stored as ``n + m - 1`` cells; degenerate
(zero-flow) basic cells are kept explicitly.

Pivoting: Dantzig's rule (most negative reduced cost, lowest row-major index
on ties) after a non-degenerate pivot, Bland's rule (lowest index with
negative reduced cost) after a degenerate one. Any cycle would consist of
degenerate pivots only, hence of Bland pivots only, so the method terminates.
The leaving cell is the lowest-index blocking cell.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

FLOAT_PIVOT_TOL = 1e-12
MAX_PIVOTS = 200_000


class SimplexError(RuntimeError):
    pass


@dataclass
class LPState:
    basis: list[tuple[int, int]]
    flow: dict[tuple[int, int], object]
    u: list
    v: list
    pivots: int = 0


def least_cost_start(a: Sequence, b: Sequence, cost: np.ndarray) -> LPState:
    """Matrix-minimum rule; each chosen cell closes one line (the last closes two)."""
    n, m = len(a), len(b)
    ra, rb = list(a), list(b)
    order = np.lexsort((np.arange(n * m), cost.ravel())) if cost.dtype != object else sorted(
        range(n * m), key=lambda k: (cost.flat[k], k)
    )
    row_open, col_open = [True] * n, [True] * m
    rows_left, cols_left = n, m
    basis, flow = [], {}
    for k in order:
        i, j = divmod(int(k), m)
        if not (row_open[i] and col_open[j]):
            continue
        f = min(ra[i], rb[j])
        if f < 0:
            f = 0 * f
        basis.append((i, j))
        flow[(i, j)] = f
        ra[i] -= f
        rb[j] -= f
        if rows_left == 1 and cols_left == 1:
            break
        if (ra[i] <= rb[j] and rows_left > 1) or cols_left == 1:
            row_open[i] = False
            rows_left -= 1
        else:
            col_open[j] = False
            cols_left -= 1
    return LPState(basis, flow, [], [])


def northwest_corner(a: Sequence, b: Sequence) -> LPState:
    """Staircase start: exactly n + m - 1 cells, zero flows where marginals tie."""
    n, m = len(a), len(b)
    ra, rb = list(a), list(b)
    i = j = 0
    basis, flow = [], {}
    while True:
        f = min(ra[i], rb[j])
        if f < 0:
            f = 0 * f
        basis.append((i, j))
        flow[(i, j)] = f
        ra[i] -= f
        rb[j] -= f
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return LPState(basis, flow, [], [])


def _tree(basis, n, m):
    adj = [[] for _ in range(n + m)]
    for (i, j) in basis:
        adj[i].append((n + j, (i, j)))
        adj[n + j].append((i, (i, j)))
    parent = [-1] * (n + m)
    pedge = [None] * (n + m)
    depth = [-1] * (n + m)
    depth[0] = 0
    order = [0]
    queue = deque([0])
    while queue:
        x = queue.popleft()
        for y, e in adj[x]:
            if depth[y] < 0:
                depth[y] = depth[x] + 1
                parent[y] = x
                pedge[y] = e
                order.append(y)
                queue.append(y)
    if len(order) != n + m:
        raise SimplexError("basis is not a spanning tree")
    return parent, pedge, depth, order


def _potentials(cost, tree, n, m, zero):
    _, pedge, _, order = tree
    u = [zero] * n
    v = [zero] * m
    for x in order[1:]:
        i, j = pedge[x]
        if x < n:
            u[i] = cost[i, j] - v[j]
        else:
            v[j] = cost[i, j] - u[i]
    return u, v


def reduced_costs(cost, u, v, exact):
    """Reduced costs c_ij - u_i - v_j as an ndarray (object dtype when exact)."""
    dtype = object if exact else float
    c = np.asarray(cost, dtype=dtype)
    return c - np.asarray(u, dtype=dtype)[:, None] - np.asarray(v, dtype=dtype)[None, :]


def _lcm_of_denominators(values) -> int:
    out = 1
    for x in values:
        out = math.lcm(out, Fraction(x).denominator)
    return out


def network_simplex(a, b, cost, *, exact: bool, start: LPState | None = None, allowed=None) -> LPState:
    """Minimise sum cost[i][j] * x[i][j] over the transportation polytope.

    ``allowed`` (n x m booleans) restricts which non-basic cells may enter;
    a warm ``start`` must be feasible and lie inside ``allowed``. Exact mode
    expects rational inputs and returns ``Fraction`` flows and potentials.
    """
    n, m = len(a), len(b)
    if allowed is not None:
        allowed = np.asarray(allowed, dtype=bool)
    if exact:
        cost_list = [[Fraction(c) for c in row] for row in cost]
        scale_w = _lcm_of_denominators(list(a) + list(b))
        scale_c = _lcm_of_denominators(c for row in cost_list for c in row)
        sa = [int(Fraction(x) * scale_w) for x in a]
        sb = [int(Fraction(x) * scale_w) for x in b]
        c = np.empty((n, m), dtype=object)
        for i, row in enumerate(cost_list):
            for j, x in enumerate(row):
                c[i, j] = int(x * scale_c)
        zero, tol = 0, 0
    else:
        sa, sb = [float(x) for x in a], [float(x) for x in b]
        c = np.asarray(cost, dtype=float)
        zero = 0.0
        tol = FLOAT_PIVOT_TOL * max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)

    if start is None:
        state = least_cost_start(sa, sb, c)
    else:
        flow = {e: (int(Fraction(f) * scale_w) if exact else float(f)) for e, f in start.flow.items()}
        state = LPState(list(start.basis), flow, [], [])

    basis, flow = state.basis, state.flow
    pivots = 0
    degenerate = False
    while True:
        tree = _tree(basis, n, m)
        u, v = _potentials(c, tree, n, m, zero)
        red = c - np.array(u, dtype=c.dtype)[:, None] - np.array(v, dtype=c.dtype)[None, :]
        cand = red < -tol
        if allowed is not None:
            cand &= allowed
        hits = np.flatnonzero(cand)
        if hits.size == 0:
            break
        if degenerate:
            k = int(hits[0])
        else:
            vals = red.ravel()[hits]
            k = int(hits[int(np.argmin(vals))])
        enter = divmod(k, m)
        pivots += 1
        if pivots > MAX_PIVOTS:
            raise SimplexError("pivot limit exceeded")

        parent, pedge, depth, _ = tree
        x, y = n + enter[1], enter[0]
        left, right = [], []
        while x != y:
            if depth[x] >= depth[y]:
                left.append(pedge[x])
                x = parent[x]
            else:
                right.append(pedge[y])
                y = parent[y]
        path = left + right[::-1]
        minus, plus = path[0::2], path[1::2]
        leave = min(minus, key=lambda e: (flow[e], e))
        theta = flow[leave]
        degenerate = not theta > (0 if exact else 1e-15)
        for e in minus:
            flow[e] -= theta
            if flow[e] < 0:
                flow[e] = zero
        for e in plus:
            flow[e] += theta
        del flow[leave]
        flow[enter] = theta
        basis.remove(leave)
        basis.append(enter)

    state.basis = sorted(basis)
    if exact:
        state.flow = {e: Fraction(f, scale_w) for e, f in flow.items()}
        state.u = [Fraction(x, scale_c) for x in u]
        state.v = [Fraction(x, scale_c) for x in v]
    else:
        state.flow = flow
        state.u, state.v = u, v
    state.pivots = pivots
    return state
