"""Dyadic step approximations of a parameterised transport map.

For a level ``k`` the half-open cells ``A_{n,k} = prod_i [n_i/2^k, (n_i+1)/2^k)``
partition R^d. The step map sends ``(lam, x)`` to the center of the unique
cell hit by the optimal plan from ``x``; it is built from plan supports
alone, never from an explicit map, so agreeing with ``center(cell(T_lam(x)))``
is a real check.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import ot
from .measures import DeterministicMap, ParamFamily

MAX_LEVEL = 20
BOUND_RTOL = 1e-12  # float roundoff allowance when comparing a summed error to its bound


class NonUniqueInstance(ValueError):
    def __init__(self, label: str):
        super().__init__(f"optimal plan at parameter {label!r} is not unique or not a map")
        self.label = label


@dataclass(frozen=True)
class DyadicIndex:
    k: int
    n: tuple[int, ...]

    def contains(self, y) -> bool:
        return cell_of(y, self.k) == self

    def bounds(self) -> list[tuple[float, float]]:
        h = math.ldexp(1.0, -self.k)
        return [(ni * h, (ni + 1) * h) for ni in self.n]


def _check_level(k: int):
    if not (0 <= k <= MAX_LEVEL):
        raise ValueError(f"level must be in [0, {MAX_LEVEL}], got {k}")


def cell_of(x, k: int) -> DyadicIndex:
    _check_level(k)
    coords = np.atleast_1d(np.asarray(x, dtype=float))
    # scaling by 2^k is exact in binary floating point
    return DyadicIndex(k, tuple(math.floor(math.ldexp(float(c), k)) for c in coords))


def cell_center(idx: DyadicIndex) -> np.ndarray:
    return np.array([math.ldexp(ni + 0.5, -idx.k) for ni in idx.n])


# --- per-parameter optimal transport -----------------------------------------


@dataclass(frozen=True, eq=False)
class ParamSolution:
    label: str
    analysis: ot.Analysis
    chosen: ot.TransportPlan | None  # plan used for the step map; None when rejected
    flagged: bool = False  # non-unique, solver vertex used under allow_nonunique

    def targets_of(self, i: int) -> list[int]:
        """Target atom indices j with (i, j) in the support used for B-membership."""
        if self.analysis.unique:
            return [j for (r, j) in self.analysis.plan.support if r == i]
        return sorted(j for (r, j) in self.analysis.psi.edges if r == i)


def solve_family(family: ParamFamily, rational=None, threads: int = 1) -> dict[str, ParamSolution]:
    def one(prm):
        res = ot.analyse(prm.source, prm.target, family.p, rational)
        return prm.label, ParamSolution(prm.label, res, res.plan if res.unique else None)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            items = list(pool.map(one, family.params))
    else:
        items = [one(prm) for prm in family.params]
    return dict(items)


def b_membership(family: ParamFamily, label, x, idx: DyadicIndex, solutions=None, rational=None) -> bool:
    """Whether some optimal-plan target of the atom ``x`` of ``mu_label`` lies in ``idx``'s cell."""
    prm = family[label]
    try:
        i = prm.source.index_of(x)
    except KeyError:
        raise KeyError(f"{x!r} is not an atom of the source at {label!r}") from None
    if solutions is None:
        res = ot.analyse(prm.source, prm.target, family.p, rational)
        sol = ParamSolution(prm.label, res, res.plan if res.unique else None)
    else:
        sol = solutions[prm.label]
    return any(cell_of(prm.target.points[j], idx.k) == idx for j in sol.targets_of(i))


# --- step maps ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepTransport:
    """T^k(lam, x) for every parameter and source atom, plus the cells hit."""

    k: int
    centers: dict[str, np.ndarray]  # label -> (n_atoms, d)
    cells: dict[str, list[DyadicIndex]]
    flagged: tuple[str, ...] = ()

    def __call__(self, label, i: int) -> np.ndarray:
        return self.centers[str(label)][i]


def _resolve(family, solutions, allow_nonunique, skip_zero_mass, rational, threads):
    if solutions is None:
        solutions = solve_family(family, rational, threads)
    out = {}
    for prm in family.params:
        if skip_zero_mass and prm.mass == 0:
            continue
        sol = solutions[prm.label]
        if sol.analysis.unique:
            out[prm.label] = sol
        elif allow_nonunique and sol.analysis.plan.is_map():
            out[prm.label] = ParamSolution(prm.label, sol.analysis, sol.analysis.plan, flagged=True)
        else:
            raise NonUniqueInstance(prm.label)
    return out


def build_Tk(
    family: ParamFamily,
    k: int,
    *,
    solutions=None,
    allow_nonunique: bool = False,
    skip_zero_mass: bool = True,
    rational=None,
    threads: int = 1,
) -> StepTransport:
    _check_level(k)
    resolved = _resolve(family, solutions, allow_nonunique, skip_zero_mass, rational, threads)
    centers, cells = {}, {}
    for label, sol in resolved.items():
        prm = family[label]
        plan = sol.chosen
        hit: dict[int, DyadicIndex] = {}
        for i, j, _ in plan.entries:
            # B_{n,k} membership: the support edge from atom i lands in exactly one cell
            hit[i] = cell_of(prm.target.points[j], k)
        row_cells = [hit[i] for i in range(len(prm.source))]
        cells[label] = row_cells
        centers[label] = np.array([cell_center(c) for c in row_cells])
    flagged = tuple(lab for lab, sol in resolved.items() if sol.flagged)
    return StepTransport(k, centers, cells, flagged)


def exact_maps(family: ParamFamily, solutions=None, allow_nonunique=False, skip_zero_mass=True, rational=None):
    resolved = _resolve(family, solutions, allow_nonunique, skip_zero_mass, rational, 1)
    return {label: sol.chosen.to_map() for label, sol in resolved.items()}


def direct_step_map(tmap: DeterministicMap, k: int) -> np.ndarray:
    """center(cell(T(x), k)) evaluated atom by atom from an explicit map."""
    return np.array([cell_center(cell_of(y, k)) for y in tmap.images])


# --- checks -------------------------------------------------------------------


@dataclass(frozen=True)
class PushforwardRecord:
    label: str
    cell: tuple[int, ...]
    step_mass: Fraction  # nu^k_lam({a_{n,k}})
    target_mass: Fraction  # nu_lam(A_{n,k})

    @property
    def ok(self) -> bool:
        return self.step_mass == self.target_mass


def pushforward_check(family: ParamFamily, k: int, step: StepTransport | None = None, **kw) -> list[PushforwardRecord]:
    """Compare the step-map image of mu_lam with nu_lam cell by cell, exactly."""
    step = step if step is not None else build_Tk(family, k, **kw)
    records = []
    for label, row_cells in step.cells.items():
        prm = family[label]
        image: dict[tuple, Fraction] = {}
        for c, w in zip(row_cells, prm.source.weights):
            image[c.n] = image.get(c.n, Fraction(0)) + w
        target: dict[tuple, Fraction] = {}
        for y, w in zip(prm.target.points, prm.target.weights):
            n = cell_of(y, k).n
            target[n] = target.get(n, Fraction(0)) + w
        for n in sorted(set(image) | set(target)):
            records.append(PushforwardRecord(label, n, image.get(n, Fraction(0)), target.get(n, Fraction(0))))
    return records


def _weighted_l1(family, a: dict, b: dict) -> float:
    terms = []
    for label, xa in a.items():
        prm = family[label]
        dist = np.sqrt(np.sum((xa - b[label]) ** 2, axis=1))
        mass = float(prm.mass)
        terms.extend(mass * float(w) * d for w, d in zip(prm.source.weights, dist))
    return math.fsum(terms)


def _active_mass(family, labels) -> float:
    return float(sum((family[lab].mass for lab in labels), Fraction(0)))


def cauchy_gap(family: ParamFamily, k: int, k2: int, steps: dict[int, StepTransport] | None = None, **kw) -> float:
    """sum_lam m(lam) sum_x mu_lam(x) |T^k(lam,x) - T^k2(lam,x)|."""
    if k2 < k:
        raise ValueError("need k2 >= k")
    steps = steps or {}
    s1 = steps.get(k) or build_Tk(family, k, **kw)
    s2 = steps.get(k2) or build_Tk(family, k2, **kw)
    return _weighted_l1(family, s1.centers, s2.centers)


def cauchy_bound(family: ParamFamily, k: int, labels=None) -> float:
    mass = float(family.total_mass) if labels is None else _active_mass(family, labels)
    return math.sqrt(family.dim) * math.ldexp(1.0, -k) * mass


def error_bound(family: ParamFamily, K: int, labels=None) -> float:
    mass = float(family.total_mass) if labels is None else _active_mass(family, labels)
    return math.sqrt(family.dim) * math.ldexp(1.0, -K - 1) * mass


def within(value: float, bound: float) -> bool:
    return value <= bound * (1 + BOUND_RTOL)


def approx_error(family: ParamFamily, K: int, step: StepTransport | None = None, maps=None, **kw) -> float:
    """sum_lam m(lam) sum_x mu_lam(x) |T^K(lam,x) - T_lam(x)|."""
    step = step if step is not None else build_Tk(family, K, **kw)
    if maps is None:
        maps = exact_maps(
            family,
            solutions=kw.get("solutions"),
            allow_nonunique=kw.get("allow_nonunique", False),
            rational=kw.get("rational"),
        )
    images = {label: maps[label].apply(family[label].source) for label in step.centers}
    return _weighted_l1(family, step.centers, images)


# --- report -------------------------------------------------------------------


@dataclass
class ApproxReport:
    K: int
    dim: int
    total_mass: float
    pushforward: dict[int, list[PushforwardRecord]] = field(default_factory=dict)
    gaps: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    flagged: tuple[str, ...] = ()

    @property
    def pushforward_ok(self) -> bool:
        return all(r.ok for recs in self.pushforward.values() for r in recs)

    @property
    def gaps_ok(self) -> bool:
        return all(g["pass"] for g in self.gaps)

    @property
    def errors_ok(self) -> bool:
        return all(e["pass"] for e in self.errors)

    @property
    def monotone(self) -> bool:
        return all(e["monotone"] for e in self.errors)

    @property
    def bounds_ok(self) -> bool:
        return self.pushforward_ok and self.gaps_ok and self.errors_ok

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "dim": self.dim,
            "mE": self.total_mass,
            "flagged_nonunique": list(self.flagged),
            "pushforward": {
                str(k): [
                    {
                        "lambda": r.label,
                        "cell": list(r.cell),
                        "step_mass": str(r.step_mass),
                        "target_mass": str(r.target_mass),
                        "pass": r.ok,
                    }
                    for r in recs
                ]
                for k, recs in sorted(self.pushforward.items())
            },
            "gaps": self.gaps,
            "errors": self.errors,
            "pass": {
                "pushforward": self.pushforward_ok,
                "cauchy": self.gaps_ok,
                "error_bound": self.errors_ok,
                "error_monotone": self.monotone,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "k2", "gap", "bound", "pass"])
        for g in self.gaps:
            w.writerow([g["k"], g["k2"], repr(g["gap"]), repr(g["bound"]), g["pass"]])
        return buf.getvalue()


def approximation_report(
    family: ParamFamily,
    K: int,
    *,
    allow_nonunique: bool = False,
    rational=None,
    threads: int = 1,
    solutions=None,
) -> ApproxReport:
    """Step maps for k = 0..K with pushforward tables, Cauchy gaps and errors."""
    _check_level(K)
    if solutions is None:
        solutions = solve_family(family, rational, threads)
    steps = {k: build_Tk(family, k, solutions=solutions, allow_nonunique=allow_nonunique) for k in range(K + 1)}
    maps = exact_maps(family, solutions=solutions, allow_nonunique=allow_nonunique)
    labels = list(steps[0].centers)
    rep = ApproxReport(K, family.dim, float(family.total_mass), flagged=steps[0].flagged)
    for k, step in steps.items():
        rep.pushforward[k] = pushforward_check(family, k, step)
    for k in range(K + 1):
        for k2 in range(k + 1, K + 1):
            gap = _weighted_l1(family, steps[k].centers, steps[k2].centers)
            bound = cauchy_bound(family, k, labels)
            rep.gaps.append({"k": k, "k2": k2, "gap": gap, "bound": bound, "pass": within(gap, bound)})
    prev = None
    for k, step in steps.items():
        err = approx_error(family, k, step=step, maps=maps)
        bound = error_bound(family, k, labels)
        rep.errors.append(
            {
                "K": k,
                "error": err,
                "bound": bound,
                "pass": within(err, bound),
                "monotone": prev is None or err <= prev,
            }
        )
        prev = err
    return rep
