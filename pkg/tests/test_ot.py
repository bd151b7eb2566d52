import math
import warnings
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from measurable_ot.measures import dirac, make_discrete, sample_cloud, uniform
from measurable_ot.ot import (
    CostSpec,
    SharedAtomWarning,
    analyse,
    cost,
    cost_matrix,
    is_unique,
    solve_1d_monotone,
    solve_bruteforce,
    solve_exact,
    support_union,
    wasserstein,
)

SQUARE = (uniform([(0, 0), (1, 1)]), uniform([(1, 0), (0, 1)]))
TWO_ATOM = (uniform([0, 1]), uniform([2, 3]))


def cloud(n, d, seed, kind="gaussian"):
    if kind == "gaussian":
        return sample_cloud({"type": "gaussian", "mean": [0.0] * d}, n, seed)
    return sample_cloud({"type": "uniform-box", "low": [0.0] * d, "high": [1.0] * d}, n, seed)


def lp_oracle(mu, nu, p):
    """Independent float LP via HiGHS."""
    n, m = len(mu), len(nu)
    c = cost_matrix(mu, nu, p, exact=False).ravel()
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1
    for j in range(m):
        A[n + j, j::m] = 1
    b = np.concatenate([mu.float_weights, nu.float_weights])
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def test_cost_spec_classification():
    assert CostSpec(2).classification == "strictly-convex"
    assert CostSpec(1).classification == "linear"
    assert CostSpec(0.5).classification == "strictly-concave"
    with pytest.raises(ValueError):
        CostSpec(0)


def test_cost_examples():
    assert cost(2, (1, 2), (1, 2)) == 0
    assert cost(2, (0, 0), (3, 4)) == 25
    assert cost(0.5, 0, 4) == 2
    with pytest.raises(ValueError):
        cost(2, (0, 0), (1,))


def test_exact_costs_are_rational_where_possible():
    c = cost_matrix(uniform([(0, 0)]), uniform([(3, 4)]), 2, exact=True)
    assert c == [[Fraction(25)]]
    c1 = cost_matrix(uniform([0.5]), uniform([0.25]), 3, exact=True)
    assert c1 == [[Fraction(1, 64)]]


def test_identity_plan():
    mu = cloud(6, 2, 0)
    plan = solve_exact(mu, mu, 2)
    assert plan.value == 0
    assert plan.support == {(i, i) for i in range(6)}


def test_two_atom_instance():
    plan = solve_exact(*TWO_ATOM, 2)
    assert plan.value == 4
    assert plan.support == {(0, 0), (1, 1)}
    assert plan.exact


def test_square_instance():
    plan = solve_exact(*SQUARE, 2)
    assert plan.value == 1
    assert plan.support in ({(0, 0), (1, 1)}, {(0, 1), (1, 0)})


def test_plan_marginals_and_value():
    mu = make_discrete([0, 1, 3], [1, 2, 3])
    nu = make_discrete([0.5, 2, 4, 7], [4, 1, 1, 1])
    plan = solve_exact(mu, nu, 1.5)
    mat = np.zeros((3, 4), dtype=object)
    for i, j, w in plan.entries:
        mat[i, j] = w
    assert [sum(mat[i, :]) for i in range(3)] == list(mu.weights)
    assert [sum(mat[:, j]) for j in range(4)] == list(nu.weights)
    assert plan.recompute_value() == plan.value
    assert float(plan.value) == pytest.approx(lp_oracle(mu, nu, 1.5), abs=1e-9)


def test_float_mode_certificate():
    mu, nu = cloud(30, 2, 1), cloud(25, 2, 2, "box")
    plan = solve_exact(mu, nu, 2, rational=False)
    assert not plan.exact
    assert plan.dual_violation <= 1e-9
    assert np.allclose(plan.matrix().sum(axis=1), mu.float_weights, atol=1e-10)
    assert np.allclose(plan.matrix().sum(axis=0), nu.float_weights, atol=1e-10)
    assert plan.value == pytest.approx(lp_oracle(mu, nu, 2), abs=1e-9)


def test_rational_and_float_agree():
    mu, nu = cloud(12, 3, 4), cloud(15, 3, 5, "box")
    exact = solve_exact(mu, nu, 1, rational=True)
    approx = solve_exact(mu, nu, 1, rational=False)
    assert float(exact.value) == pytest.approx(approx.value, abs=1e-9)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        solve_exact(uniform([0]), uniform([(0, 0)]))


def test_bruteforce_examples():
    value, perms = solve_bruteforce(dirac(0.0), dirac(3.0), 2)
    assert value == 9 and perms == [(0,)]
    value, perms = solve_bruteforce(*SQUARE, 2)
    assert value == 1 and sorted(perms) == [(0, 1), (1, 0)]
    value, perms = solve_bruteforce(uniform([0, 1]), uniform([0.5, 10]), 0.5)
    assert perms == [(0, 1)]
    assert float(value) == pytest.approx(0.5 * (math.sqrt(0.5) + 3))


def test_bruteforce_rejections():
    with pytest.raises(ValueError):
        solve_bruteforce(uniform([0, 1]), uniform([0, 1, 2]))
    with pytest.raises(ValueError):
        solve_bruteforce(make_discrete([0, 1], [1, 2]), uniform([0, 1]))
    with pytest.raises(ValueError):
        solve_bruteforce(uniform(range(9)), uniform(range(9)))


def test_monotone_examples():
    mu = cloud(5, 1, 3)
    assert solve_1d_monotone(mu, mu, 2).value == 0
    plan = solve_1d_monotone(*TWO_ATOM, 2)
    assert plan.support == {(0, 0), (1, 1)} and plan.value == 4
    plan = solve_1d_monotone(uniform([0, 1, 2]), uniform([5, 6, 7]), 1.5)
    assert plan.support == {(0, 0), (1, 1), (2, 2)}
    _, perms = solve_bruteforce(uniform([0, 1, 2]), uniform([5, 6, 7]), 1.5)
    assert perms == [(0, 1, 2)]


def test_monotone_rejections():
    with pytest.raises(ValueError):
        solve_1d_monotone(uniform([(0, 0)]), uniform([(1, 1)]), 2)
    with pytest.raises(ValueError):
        solve_1d_monotone(uniform([0]), uniform([1]), 1)


def test_wasserstein_examples():
    assert wasserstein(dirac((0, 0)), dirac((3, 4)), 2) == pytest.approx(5)
    mu = uniform([0, 1])
    assert wasserstein(mu, mu, 2) == 0
    assert wasserstein(mu, mu.translate(5), 2) == pytest.approx(5)
    with pytest.raises(ValueError):
        wasserstein(mu, mu, 0.5)


def test_support_union_examples():
    mu = uniform([0, 1])
    assert support_union(mu, mu, 2).edges == {(0, 0), (1, 1)}
    assert support_union(*SQUARE, 2).edges == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert support_union(*TWO_ATOM, 2).edges == {(0, 0), (1, 1)}


def test_support_union_float_mode_matches_rational():
    assert support_union(*SQUARE, 2, rational=False).edges == {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_support_union_non_square_degenerate():
    # p = 1 on the line: any plan moving mass rightwards is optimal
    mu = uniform([0, 1])
    nu = uniform([2, 3])
    assert support_union(mu, nu, 1).edges == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert is_unique(mu, nu, 1) == (False, None)


def test_is_unique_examples():
    ok, tmap = is_unique(*TWO_ATOM, 2)
    assert ok and tmap.pairs() == [((0.0,), (2.0,)), ((1.0,), (3.0,))]
    assert is_unique(*SQUARE, 2) == (False, None)
    assert is_unique(dirac(0), uniform([1, 2]), 2) == (False, None)
    res = analyse(dirac(0), uniform([1, 2]), 2)
    assert res.psi.edges == res.plan.support  # unique plan, but not a map


def test_concave_shared_atoms_warn():
    mu = uniform([0, 1])
    with pytest.warns(SharedAtomWarning):
        solve_exact(mu, mu, 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_exact(mu, mu.translate(0.5), 0.5)


def test_concave_cost_small_instances():
    mu, nu = uniform([0, 1]), uniform([0.5, 10])
    plan = solve_exact(mu, nu, 0.5)
    assert plan.support == {(0, 0), (1, 1)}
    mu, nu = uniform([0, 2]), uniform([1, 3])
    value, perms = solve_bruteforce(mu, nu, 0.5)
    assert solve_exact(mu, nu, 0.5).value == value
    # monotone pairing: 1 + 1 < sqrt(3) + 1
    assert perms == [(0, 1)]


# --- property tests ---------------------------------------------------------------

instances = st.tuples(
    st.integers(1, 6), st.integers(1, 3), st.sampled_from([0.5, 1, 1.5, 2, 3]), st.integers(0, 2**31)
)


@given(instances)
@settings(max_examples=60, deadline=None)
def test_exact_matches_bruteforce(inst):
    n, d, p, seed = inst
    mu, nu = cloud(n, d, seed), cloud(n, d, seed + 1, "box")
    value, perms = solve_bruteforce(mu, nu, p)
    plan = solve_exact(mu, nu, p, rational=True)
    assert plan.value == value
    psi = support_union(mu, nu, p, rational=True)
    assert psi.edges == {(i, s[i]) for s in perms for i in range(n)}
    assert plan.support <= psi.edges


@given(st.integers(1, 40), st.sampled_from([1.5, 2, 3]), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_monotone_matches_exact(n, p, seed):
    mu, nu = cloud(n, 1, seed), cloud(n + 3, 1, seed + 7, "box")
    mono = solve_1d_monotone(mu, nu, p)
    ex = solve_exact(mu, nu, p)
    if ex.exact:
        assert mono.value == ex.value
    else:
        assert mono.value == pytest.approx(ex.value, abs=1e-9)


@given(st.integers(1, 8), st.integers(1, 3), st.sampled_from([1, 2, 3]), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_wasserstein_symmetric_and_triangle(n, d, p, seed):
    a, b, c = cloud(n, d, seed), cloud(n + 1, d, seed + 1, "box"), cloud(n + 2, d, seed + 2)
    assert wasserstein(a, b, p) == pytest.approx(wasserstein(b, a, p), abs=1e-12)
    assert wasserstein(a, c, p) <= wasserstein(a, b, p) + wasserstein(b, c, p) + 1e-12


@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 2), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_unequal_weights_against_lp(n, m, d, seed):
    rng = np.random.default_rng(seed)
    mu = make_discrete(rng.integers(0, 5, size=(n, d)) / 2, rng.integers(1, 6, size=n))
    nu = make_discrete(rng.integers(0, 5, size=(m, d)) / 2, rng.integers(1, 6, size=m))
    plan = solve_exact(mu, nu, 2)
    assert float(plan.value) == pytest.approx(lp_oracle(mu, nu, 2), abs=1e-9)
    # lattice instances are heavily degenerate; each face edge must be certified
    psi = support_union(mu, nu, 2)
    assert plan.support <= psi.edges


def test_support_union_by_enumeration_of_vertices():
    """Lattice instance with many ties: compare to the union over all optimal permutations."""
    mu = uniform([(0, 0), (1, 0), (0, 1), (1, 1)])
    nu = uniform([(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (1.5, 0.5)])
    c = cost_matrix(mu, nu, 2, exact=True)
    totals = {s: sum(c[i][s[i]] for i in range(4)) for s in permutations(range(4))}
    best = min(totals.values())
    expected = {(i, s[i]) for s, t in totals.items() if t == best for i in range(4)}
    assert support_union(mu, nu, 2).edges == expected


def face_oracle(mu, nu, p):
    """Maximise each pi_ij over {feasible, <c, pi> <= optimum} with HiGHS."""
    n, m = len(mu), len(nu)
    c = cost_matrix(mu, nu, p, exact=False).ravel()
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1
    for j in range(m):
        A[n + j, j::m] = 1
    b = np.concatenate([mu.float_weights, nu.float_weights])
    opt = lp_oracle(mu, nu, p)
    edges = set()
    for k in range(n * m):
        obj = np.zeros(n * m)
        obj[k] = -1
        res = linprog(obj, A_ub=c[None], b_ub=[opt + 1e-10], A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        if res.status == 0 and -res.fun > 1e-7:
            edges.add(divmod(k, m))
    return edges


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_support_union_against_pinned_objective_lp(n, m, seed):
    rng = np.random.default_rng(seed)
    mu = make_discrete(rng.integers(0, 3, size=(n, 1)), rng.integers(1, 4, size=n))
    nu = make_discrete(rng.integers(0, 3, size=(m, 1)), rng.integers(1, 4, size=m))
    for p in (1, 2):
        assert support_union(mu, nu, p).edges == face_oracle(mu, nu, p)
