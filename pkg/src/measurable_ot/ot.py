"""Exact discrete optimal transport for power costs |x - y|^p.

Rational mode runs the network simplex over ``Fraction`` so that ties in
the objective are decided exactly; this matters for :func:`support_union`,
which is the union of supports over the whole optimal face and changes
discontinuously under rounding.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .measures import DeterministicMap, DiscreteMeasure
from .simplex import LPState, network_simplex, reduced_costs

RATIONAL_EDGE_LIMIT = 400
FLOAT_FACE_TOL = 1e-9
FLOAT_DUAL_TOL = 1e-9
BRUTEFORCE_MAX_N = 8


class SharedAtomWarning(UserWarning):
    """Concave cost with marginals that share atoms (not mutually singular)."""


@dataclass(frozen=True)
class CostSpec:
    p: float = 2.0

    def __post_init__(self):
        if not (self.p > 0 and math.isfinite(self.p)):
            raise ValueError(f"cost exponent must be positive and finite, got {self.p}")

    @property
    def classification(self) -> str:
        if self.p > 1:
            return "strictly-convex"
        if self.p == 1:
            return "linear"
        return "strictly-concave"


def _spec(spec) -> CostSpec:
    return spec if isinstance(spec, CostSpec) else CostSpec(float(spec))


def _check_dims(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def cost(spec, x, y) -> float:
    p = _spec(spec).p
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return _pow_sq(float(np.sum((x - y) ** 2)), p)


def _pow_sq(sqd: float, p: float) -> float:
    # |x-y|^p written through the squared distance so equal distances give equal costs
    return sqd if p == 2 else sqd ** (p / 2)


def _exact_cost(xs, ys, p: float) -> Fraction:
    diffs = [Fraction(a) - Fraction(b) for a, b in zip(xs, ys)]
    sqd = sum((t * t for t in diffs), Fraction(0))
    if float(p).is_integer():
        ip = int(p)
        if ip % 2 == 0:
            return sqd ** (ip // 2)
        if len(diffs) == 1:
            return abs(diffs[0]) ** ip
    return Fraction(_pow_sq(float(sqd), p))


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, spec, exact: bool):
    """Exact: list of lists of Fraction. Float: ndarray (n, m)."""
    p = _spec(spec).p
    _check_dims(mu, nu)
    if exact:
        ys = [tuple(y) for y in nu.points.tolist()]
        return [[_exact_cost(x, y, p) for y in ys] for x in mu.points.tolist()]
    sqd = np.sum((mu.points[:, None, :] - nu.points[None, :, :]) ** 2, axis=2)
    return sqd if p == 2 else sqd ** (p / 2)


def use_rational(mu: DiscreteMeasure, nu: DiscreteMeasure, rational) -> bool:
    """``rational`` may be True, False, None/'auto', 'on' or 'off'."""
    if rational in (None, "auto"):
        return len(mu) * len(nu) <= RATIONAL_EDGE_LIMIT
    if rational in ("on", True):
        return True
    if rational in ("off", False):
        return False
    raise ValueError(f"invalid rational mode {rational!r}")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    source: DiscreteMeasure
    target: DiscreteMeasure
    p: float
    entries: tuple[tuple[int, int, object], ...]
    value: object
    exact: bool
    dual_violation: float = 0.0

    @property
    def support(self) -> frozenset[tuple[int, int]]:
        return frozenset((i, j) for i, j, _ in self.entries)

    def matrix(self) -> np.ndarray:
        out = np.zeros((len(self.source), len(self.target)))
        for i, j, w in self.entries:
            out[i, j] = float(w)
        return out

    def is_map(self) -> bool:
        rows = [i for i, _, _ in self.entries]
        return len(rows) == len(set(rows)) == len(self.source)

    def to_map(self) -> DeterministicMap:
        if not self.is_map():
            raise ValueError("plan splits at least one source atom")
        img = np.empty_like(self.source.points)
        for i, j, _ in self.entries:
            img[i] = self.target.points[j]
        return DeterministicMap(self.source.points.copy(), img)

    def recompute_value(self):
        c = cost_matrix(self.source, self.target, self.p, self.exact)
        if self.exact:
            return sum((w * c[i][j] for i, j, w in self.entries), Fraction(0))
        return math.fsum(float(w) * c[i, j] for i, j, w in self.entries)


@dataclass(frozen=True)
class EdgeSet:
    edges: frozenset[tuple[int, int]]

    def sorted(self) -> list[list[int]]:
        return [list(e) for e in sorted(self.edges)]

    def __contains__(self, e) -> bool:
        return tuple(e) in self.edges

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(sorted(self.edges))


class _Solved(NamedTuple):
    plan: TransportPlan
    state: LPState
    cost: object
    exact: bool


def _warn_concave(mu, nu, spec):
    if spec.p < 1:
        src = {tuple(x) for x in mu.points.tolist()}
        if any(tuple(y) in src for y in nu.points.tolist()):
            warnings.warn(
                "concave cost with marginals sharing atoms; uniqueness is not structurally guaranteed",
                SharedAtomWarning,
                stacklevel=3,
            )


def _solve(mu, nu, spec, rational) -> _Solved:
    spec = _spec(spec)
    _check_dims(mu, nu)
    _warn_concave(mu, nu, spec)
    exact = use_rational(mu, nu, rational)
    c = cost_matrix(mu, nu, spec, exact)
    a = list(mu.weights) if exact else mu.float_weights.tolist()
    b = list(nu.weights) if exact else nu.float_weights.tolist()
    state = network_simplex(a, b, c, exact=exact)
    return _Solved(_plan_from_state(mu, nu, spec, c, state, exact), state, c, exact)


def _plan_from_state(mu, nu, spec, c, state, exact) -> TransportPlan:
    entries = tuple((i, j, f) for (i, j), f in sorted(state.flow.items()) if f > 0)
    if exact:
        value = sum((f * c[i][j] for i, j, f in entries), Fraction(0))
        violation = 0.0
    else:
        value = math.fsum(f * c[i, j] for i, j, f in entries)
        red = reduced_costs(c, state.u, state.v, exact=False)
        violation = max(0.0, -float(red.min()))
        scale = max(1.0, float(np.max(np.abs(c))))
        if violation > FLOAT_DUAL_TOL * scale:
            raise ArithmeticError(f"dual feasibility certificate failed: {violation:.3e}")
    return TransportPlan(mu, nu, spec.p, entries, value, exact, violation)


def solve_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, spec=2.0, rational=None) -> TransportPlan:
    """Optimal plan of the transportation LP (a basic, i.e. vertex, optimum)."""
    return _solve(mu, nu, spec, rational).plan


def _equal_weight_n(mu: DiscreteMeasure, nu: DiscreteMeasure) -> int:
    n = len(mu)
    if len(nu) != n:
        raise ValueError(f"unequal atom counts {n} and {len(nu)}")
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTEFORCE_MAX_N}, got {n}")
    if set(mu.weights) != {Fraction(1, n)} or set(nu.weights) != {Fraction(1, n)}:
        raise ValueError("brute force requires equal-weight measures")
    return n


def solve_bruteforce(mu: DiscreteMeasure, nu: DiscreteMeasure, spec=2.0, rational=True):
    """Enumerate all n! permutation couplings.

    Returns ``(value, perms)`` where ``perms`` lists every optimal permutation
    as a tuple ``sigma`` with atom i sent to atom ``sigma[i]``.
    """
    spec = _spec(spec)
    _check_dims(mu, nu)
    n = _equal_weight_n(mu, nu)
    exact = bool(rational)
    c = cost_matrix(mu, nu, spec, exact)
    best, perms = None, []
    for sigma in itertools.permutations(range(n)):
        if exact:
            total = sum((c[i][sigma[i]] for i in range(n)), Fraction(0))
        else:
            total = math.fsum(c[i, sigma[i]] for i in range(n))
        if best is None or total < best:
            best, perms = total, [sigma]
        elif total == best:
            perms.append(sigma)
    return best / n, perms


def solve_1d_monotone(mu: DiscreteMeasure, nu: DiscreteMeasure, spec=2.0, rational=None) -> TransportPlan:
    """Quantile coupling: match mass in sorted order (optimal for convex costs on the line)."""
    spec = _spec(spec)
    _check_dims(mu, nu)
    if mu.dim != 1:
        raise ValueError("monotone rearrangement needs d = 1")
    if spec.p <= 1:
        raise ValueError("monotone rearrangement needs p > 1")
    exact = use_rational(mu, nu, rational)
    xi = np.argsort(mu.points[:, 0], kind="stable")
    yi = np.argsort(nu.points[:, 0], kind="stable")
    ra = [mu.weights[i] for i in xi]
    rb = [nu.weights[j] for j in yi]
    a = b = 0
    mass: dict[tuple[int, int], Fraction] = {}
    while a < len(ra) and b < len(rb):
        f = min(ra[a], rb[b])
        if f > 0:
            mass[(int(xi[a]), int(yi[b]))] = f
        ra[a] -= f
        rb[b] -= f
        if ra[a] == 0:
            a += 1
        if b < len(rb) and rb[b] == 0:
            b += 1
    c = cost_matrix(mu, nu, spec, exact)
    entries = tuple((i, j, f if exact else float(f)) for (i, j), f in sorted(mass.items()))
    if exact:
        value = sum((f * c[i][j] for i, j, f in entries), Fraction(0))
    else:
        value = math.fsum(f * c[i, j] for i, j, f in entries)
    return TransportPlan(mu, nu, spec.p, entries, value, exact)


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 2.0, rational=None) -> float:
    if p < 1:
        raise ValueError("Wasserstein distance needs p >= 1")
    return float(solve_exact(mu, nu, p, rational).value) ** (1.0 / p)


def _support_union(solved: _Solved) -> EdgeSet:
    plan, state, c, exact = solved
    n, m = len(plan.source), len(plan.target)
    red = reduced_costs(c, state.u, state.v, exact)
    # any optimal dual is complementary to every optimal plan, so the optimal
    # face is the feasible set restricted to zero-reduced-cost cells
    if exact:
        allowed = [[red[i][j] == 0 for j in range(m)] for i in range(n)]
    else:
        scale = max(1.0, float(np.max(np.abs(c))))
        allowed = (red <= FLOAT_FACE_TOL * scale).tolist()
    a = list(plan.source.weights) if exact else plan.source.float_weights.tolist()
    b = list(plan.target.weights) if exact else plan.target.float_weights.tolist()
    found = set(plan.support)
    for i in range(n):
        for j in range(m):
            if not allowed[i][j] or (i, j) in found:
                continue
            face_cost = [[-1 if (r, s) == (i, j) else 0 for s in range(m)] for r in range(n)]
            if not exact:
                face_cost = np.asarray(face_cost, dtype=float)
            st = network_simplex(a, b, face_cost, exact=exact, start=state, allowed=allowed)
            thresh = 0 if exact else FLOAT_FACE_TOL
            found.update(e for e, f in st.flow.items() if f > thresh)
    return EdgeSet(frozenset(found))


def support_union(mu: DiscreteMeasure, nu: DiscreteMeasure, spec=2.0, rational=None) -> EdgeSet:
    """Cells (i, j) carrying positive mass in at least one optimal plan."""
    return _support_union(_solve(mu, nu, spec, rational))


class Analysis(NamedTuple):
    plan: TransportPlan
    psi: EdgeSet
    unique: bool
    map: DeterministicMap | None


def analyse(mu: DiscreteMeasure, nu: DiscreteMeasure, spec=2.0, rational=None) -> Analysis:
    """Solve once and derive the support union and the uniqueness verdict."""
    solved = _solve(mu, nu, spec, rational)
    psi = _support_union(solved)
    plan = solved.plan
    # a basic optimum has forest support, so equal support means a singleton face
    unique = psi.edges == plan.support and plan.is_map()
    return Analysis(plan, psi, unique, plan.to_map() if unique else None)


def is_unique(mu: DiscreteMeasure, nu: DiscreteMeasure, spec=2.0, rational=None):
    """``(True, T)`` when the optimal plan is unique and induced by a map T."""
    res = analyse(mu, nu, spec, rational)
    return res.unique, res.map
