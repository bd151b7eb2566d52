import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import identity_family, random_family, two_atom_family
from measurable_ot.dyadic import (
    DyadicIndex,
    NonUniqueInstance,
    approx_error,
    approximation_report,
    b_membership,
    build_Tk,
    cauchy_gap,
    cell_center,
    cell_of,
    direct_step_map,
    error_bound,
    exact_maps,
    pushforward_check,
    solve_family,
)
from measurable_ot import ot
from measurable_ot.measures import ParamFamily, dirac, pushforward, uniform


def test_cell_of_examples():
    assert cell_of(0.3, 0) == DyadicIndex(0, (0,))
    assert cell_of((0.8, -0.1), 2) == DyadicIndex(2, (3, -1))
    assert cell_of((0.8, -0.1), 2).bounds() == [(0.75, 1.0), (-0.25, 0.0)]
    # half-open: a left boundary belongs to the cell on its right
    assert cell_of(0.25, 2) == DyadicIndex(2, (1,))
    with pytest.raises(ValueError):
        cell_of(0.0, 21)


def test_cell_center_examples():
    assert cell_center(DyadicIndex(0, (0,))).tolist() == [0.5]
    assert cell_center(DyadicIndex(2, (3, -1))).tolist() == [0.875, -0.125]
    assert cell_center(DyadicIndex(1, (-1,))).tolist() == [-0.25]


@given(
    st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=3),
    st.integers(0, 20),
)
@settings(max_examples=200)
def test_point_lies_in_its_cell(x, k):
    idx = cell_of(x, k)
    for c, (lo, hi) in zip(x, idx.bounds()):
        assert lo <= c < hi
    center = cell_center(idx)
    assert np.all(np.abs(center - np.asarray(x)) <= math.ldexp(1.0, -k - 1))


def test_b_membership_examples():
    fam = ParamFamily.build([("lam", 1, uniform([0, 1]), uniform([0.3, 1.7]))], p=2)
    assert b_membership(fam, "lam", 0, DyadicIndex(0, (0,)))
    assert not b_membership(fam, "lam", 0, DyadicIndex(0, (1,)))
    assert b_membership(fam, "lam", 1, DyadicIndex(0, (1,)))
    ident = identity_family(d=2)
    sols = solve_family(ident)
    for prm in ident.params:
        for x in prm.source.points:
            for k in range(6):
                assert b_membership(ident, prm.label, x, cell_of(x, k), solutions=sols)


def test_b_membership_errors():
    fam = two_atom_family()
    with pytest.raises(KeyError):
        b_membership(fam, "nope", 0, DyadicIndex(0, (0,)))
    with pytest.raises(KeyError):
        b_membership(fam, "lam", 0.5, DyadicIndex(0, (0,)))


def test_b_membership_uses_support_union_when_not_unique():
    square = ParamFamily.build([("sq", 1, uniform([(0, 0), (1, 1)]), uniform([(1, 0), (0, 1)]))], p=2)
    # both targets are reachable from (0, 0) through some optimal plan
    assert b_membership(square, "sq", (0, 0), cell_of((1, 0), 3))
    assert b_membership(square, "sq", (0, 0), cell_of((0, 1), 3))


def test_partition_property():
    fam = random_family(5, max_params=4, max_atoms=8)
    sols = solve_family(fam)
    for k in (0, 3, 7):
        for prm in fam.params:
            for x in prm.source.points:
                candidates = {cell_of(y, k) for y in prm.target.points}
                hits = [c for c in candidates if b_membership(fam, prm.label, x, c, solutions=sols)]
                assert len(hits) == 1


def test_build_Tk_identity_family():
    fam = identity_family(d=2)
    for k in (0, 2, 5):
        step = build_Tk(fam, k)
        for prm in fam.params:
            centers = step.centers[prm.label]
            for x, c in zip(prm.source.points, centers):
                assert np.array_equal(c, cell_center(cell_of(x, k)))
                assert np.linalg.norm(c - x) <= math.sqrt(2) * math.ldexp(1, -k - 1)


def test_build_Tk_two_atom():
    fam = two_atom_family()
    step0 = build_Tk(fam, 0)
    assert step0("lam", 0).tolist() == [2.5] and step0("lam", 1).tolist() == [3.5]
    step3 = build_Tk(fam, 3)
    assert step3("lam", 0).tolist() == [2.0625] and step3("lam", 1).tolist() == [3.0625]


def test_build_Tk_rejects_nonunique():
    square = ParamFamily.build([("sq", 1, uniform([(0, 0), (1, 1)]), uniform([(1, 0), (0, 1)]))], p=2)
    with pytest.raises(NonUniqueInstance) as err:
        build_Tk(square, 1)
    assert err.value.label == "sq"
    step = build_Tk(square, 1, allow_nonunique=True)
    assert step.flagged == ("sq",)
    split = ParamFamily.build([("split", 1, dirac(0), uniform([1, 2]))], p=2)
    with pytest.raises(NonUniqueInstance):
        build_Tk(split, 0, allow_nonunique=True)


def test_zero_mass_parameter_skipped():
    square = (uniform([(0, 0), (1, 1)]), uniform([(1, 0), (0, 1)]))
    fam = ParamFamily.build([("ok", 1, uniform([(0, 0)]), uniform([(1, 1)])), ("null", 0, *square)], p=2)
    step = build_Tk(fam, 2)
    assert list(step.centers) == ["ok"]
    with pytest.raises(NonUniqueInstance):
        build_Tk(fam, 2, skip_zero_mass=False)


def test_pushforward_check_examples():
    fam = two_atom_family()
    recs = pushforward_check(fam, 0)
    assert [(r.cell, r.step_mass, r.target_mass) for r in recs] == [
        ((2,), Fraction(1, 2), Fraction(1, 2)),
        ((3,), Fraction(1, 2), Fraction(1, 2)),
    ]
    ident = identity_family()
    for k in range(6):
        recs = pushforward_check(ident, k)
        assert all(r.ok for r in recs)
        for label in ident.labels:
            assert sum(r.step_mass for r in recs if r.label == label) == 1


def test_cauchy_gap_examples():
    ident = identity_family()
    assert cauchy_gap(ident, 3, 3) == 0
    fam = two_atom_family()
    gap = cauchy_gap(fam, 0, 3)
    assert gap == 0.5 * abs(2.5 - 2.0625) + 0.5 * abs(3.5 - 3.0625) == 0.4375
    assert gap <= 1.0
    with pytest.raises(ValueError):
        cauchy_gap(fam, 3, 1)


def test_approx_error_examples():
    ident = identity_family(d=1, params=1)
    ident = ParamFamily.build([("a", 1, ident.params[0].source, ident.params[0].source)], p=2)
    assert approx_error(ident, 4) <= 2**-5
    fam = two_atom_family()
    err = approx_error(fam, 3)
    assert err == 0.0625 == error_bound(fam, 3)


def test_error_not_monotone_in_general():
    # the point 0.49 is 0.01 from the level-0 center but 0.24 from the level-1 center
    fam = ParamFamily.build([("lam", 1, dirac(0.0), dirac(0.49))], p=2)
    assert approx_error(fam, 0) == pytest.approx(0.01)
    assert approx_error(fam, 1) == pytest.approx(0.24)


def test_construction_orders_agree():
    fam = random_family(11, max_params=6, max_atoms=10)
    maps = {}
    for prm in fam.params:
        ok, tmap = ot.is_unique(prm.source, prm.target, fam.p)
        assert ok
        maps[prm.label] = tmap
    for k in range(0, 11):
        step = build_Tk(fam, k)
        for label, tmap in maps.items():
            assert np.array_equal(step.centers[label], direct_step_map(tmap, k))


def test_report_identity_family():
    rep = approximation_report(identity_family(d=3), 6)
    assert rep.bounds_ok
    assert [e["K"] for e in rep.errors] == list(range(7))
    assert len(rep.gaps) == 21
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "k,k2,gap,bound,pass"
    assert '"error_bound": true' in rep.to_json()


def test_report_two_atom_level_six():
    rep = approximation_report(two_atom_family(mass=2), 6)
    assert rep.errors[-1]["error"] <= 2**-7 * 2
    assert rep.bounds_ok


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_random_family_bounds(seed):
    fam = random_family(seed, max_params=5, max_atoms=12)
    rep = approximation_report(fam, 8)
    assert rep.pushforward_ok
    assert rep.gaps_ok
    assert rep.errors_ok


def test_threads_do_not_change_results():
    fam = random_family(4, max_params=6, max_atoms=8)
    a = approximation_report(fam, 5, threads=1).to_json()
    b = approximation_report(fam, 5, threads=4).to_json()
    assert a == b


def test_exact_maps_push_source_to_target():
    fam = random_family(8, max_params=4, max_atoms=10)
    for label, tmap in exact_maps(fam).items():
        assert pushforward(fam[label].source, tmap).same_law(fam[label].target)
