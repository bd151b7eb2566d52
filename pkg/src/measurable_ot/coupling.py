"""Monte Carlo coupling of orthogonal Gaussian martingale measures.

A martingale measure with covariance q_t(da) dk_t is discretised on a
(time step x atom) grid: the increment on atom j of q_i during step i is
an independent centered Gaussian with variance w_ij * dk_i. The coupled
measure reuses the same increments and composes integrands with the
per-step optimal transport map, so for Lipschitz integrands

    E[(X_S - Xhat_S)^2] <= sum_i L_i^2 W_2^2(q_i, qhat_i) dk_i

holds exactly by the isometry, and the running supremum picks up at most
Doob's factor 4.

Randomness: replication r uses ``Philox`` keyed by
``SeedSequence(seed, spawn_key=(r,))`` and draws a (steps x width) block of
standard normals in row-major (step, atom) order. Replications are therefore
reproducible and independent of how they are scheduled.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import ot
from .measures import DeterministicMap, DiscreteMeasure, MeasureError

GENERATOR = "numpy.random.Philox keyed by SeedSequence(seed, spawn_key=(replication,))"
LIPSCHITZ_SPOT_TOL = 1e-9


class NonUniqueStep(ValueError):
    def __init__(self, step: int):
        super().__init__(f"optimal plan at time step {step} is not unique or not a map")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray
    dk: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or self.times.shape[0] < 2:
            raise ValueError("time grid needs at least two points")
        if self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if self.dk.shape != (self.times.shape[0] - 1,) or np.any(self.dk < 0):
            raise ValueError("clock increments must be nonnegative, one per step")

    @classmethod
    def linear(cls, S: float, steps: int) -> TimeGrid:
        """Uniform grid on [0, S] with clock k_t = t."""
        if steps < 1 or S <= 0:
            raise ValueError("need S > 0 and steps >= 1")
        t = np.linspace(0.0, S, steps + 1)
        return cls(t, np.diff(t))

    @classmethod
    def from_clock(cls, times: Sequence[float], clock: Sequence[float]) -> TimeGrid:
        t = np.asarray(times, dtype=float)
        return cls(t, np.diff(np.asarray(clock, dtype=float)))

    @property
    def steps(self) -> int:
        return self.dk.shape[0]


@dataclass(frozen=True, eq=False)
class CovariationProcess:
    """Deterministic per-step pair (q_i, qhat_i)."""

    source: tuple[DiscreteMeasure, ...]
    target: tuple[DiscreteMeasure, ...]

    def __post_init__(self):
        if len(self.source) != len(self.target) or not self.source:
            raise ValueError("need one (q, qhat) pair per step")
        dims = {m.dim for m in self.source + self.target}
        if len(dims) != 1:
            raise ValueError(f"covariation mixes dimensions {sorted(dims)}")

    @classmethod
    def constant(cls, q: DiscreteMeasure, qhat: DiscreteMeasure, steps: int) -> CovariationProcess:
        return cls((q,) * steps, (qhat,) * steps)

    @property
    def steps(self) -> int:
        return len(self.source)

    @property
    def dim(self) -> int:
        return self.source[0].dim

    def check_grid(self, grid: TimeGrid):
        if grid.steps != self.steps:
            raise ValueError(f"grid has {grid.steps} steps but covariation has {self.steps}")


@dataclass(frozen=True, eq=False)
class PredictableField:
    """Integrand phi(i, a) evaluated on arrays of points, with Lipschitz constants L_i."""

    evaluate: Callable[[int, np.ndarray], np.ndarray]
    lipschitz: np.ndarray

    def __call__(self, i: int, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluate(i, np.atleast_2d(points)), dtype=float)

    def spot_check(self, dim: int, seed: int = 0, pairs: int = 64, scale: float = 3.0) -> bool:
        rng = np.random.default_rng(seed)
        for i, L in enumerate(self.lipschitz):
            a = scale * rng.standard_normal((pairs, dim))
            b = scale * rng.standard_normal((pairs, dim))
            lhs = np.abs(self(i, a) - self(i, b))
            rhs = L * np.linalg.norm(a - b, axis=1)
            if np.any(lhs > rhs + LIPSCHITZ_SPOT_TOL):
                return False
        return True


def linear_field(coef: Sequence[float], steps: int, offset: float = 0.0, scale: Sequence[float] | None = None):
    """phi(i, a) = scale_i * <coef, a> + offset."""
    c = np.atleast_1d(np.asarray(coef, dtype=float))
    s = np.ones(steps) if scale is None else np.asarray(scale, dtype=float)
    return PredictableField(
        lambda i, a: s[i] * (a @ c) + offset,
        np.abs(s) * float(np.linalg.norm(c)),
    )


_UNIT_LIP = {
    "identity": lambda z: z,
    "sin": np.sin,
    "tanh": np.tanh,
    "abs": np.abs,
    "cos": np.cos,
}


def table_field(entries: Sequence[dict], dim: int) -> PredictableField:
    """Per-step ``scale * fn(<coef, a>) + offset`` with fn 1-Lipschitz, or ``const``."""
    fns, lips = [], []
    for e in entries:
        fn = e.get("fn", "identity")
        scale = float(e.get("scale", 1.0))
        offset = float(e.get("offset", 0.0))
        coef = np.asarray(e.get("coef", [1.0] * dim), dtype=float)
        if coef.shape != (dim,):
            raise ValueError(f"coef must have length {dim}")
        if fn == "const":
            fns.append(lambda a, v=offset: np.full(a.shape[0], v))
            lips.append(0.0)
            continue
        if fn not in _UNIT_LIP:
            raise ValueError(f"unknown field function {fn!r}")
        g = _UNIT_LIP[fn]
        fns.append(lambda a, g=g, s=scale, c=coef, o=offset: s * g(a @ c) + o)
        lips.append(abs(scale) * float(np.linalg.norm(coef)))
    return PredictableField(lambda i, a: fns[i](a), np.array(lips))


def constant_field(values: Sequence[float]) -> PredictableField:
    vals = np.asarray(values, dtype=float)
    return PredictableField(lambda i, a: np.full(a.shape[0], vals[i]), np.zeros_like(vals))


# --- noise ---------------------------------------------------------------------


def _standard_normals(seed: int, replications: range, steps: int, width: int) -> np.ndarray:
    out = np.empty((len(replications), steps, width))
    for row, r in enumerate(replications):
        ss = np.random.SeedSequence(seed, spawn_key=(r,))
        gen = np.random.Generator(np.random.Philox(ss))
        out[row] = gen.standard_normal((steps, width))
    return out


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """Increments xi[r, i, j] for replication r, step i, atom (or plan entry) j.

    Columns beyond the atom count of a step are zero padding.
    """

    xi: np.ndarray
    seed: int
    first_replication: int = 0
    generator: str = GENERATOR

    @property
    def replications(self) -> int:
        return self.xi.shape[0]


def _variance_table(weight_rows: Sequence[np.ndarray], dk: np.ndarray) -> np.ndarray:
    width = max(len(w) for w in weight_rows)
    var = np.zeros((len(weight_rows), width))
    for i, w in enumerate(weight_rows):
        var[i, : len(w)] = w * dk[i]
    return var


def simulate_noise(
    cov: CovariationProcess, grid: TimeGrid, seed: int, replications: int = 1, first_replication: int = 0
) -> NoiseRealization:
    cov.check_grid(grid)
    var = _variance_table([q.float_weights for q in cov.source], grid.dk)
    reps = range(first_replication, first_replication + replications)
    z = _standard_normals(seed, reps, *var.shape)
    return NoiseRealization(z * np.sqrt(var)[None], seed, first_replication)


def _field_table(phi: PredictableField, point_rows: Sequence[np.ndarray], width: int) -> np.ndarray:
    out = np.zeros((len(point_rows), width))
    for i, pts in enumerate(point_rows):
        out[i, : len(pts)] = phi(i, pts)
    return out


def _paths(values: np.ndarray, xi: np.ndarray) -> np.ndarray:
    incr = np.sum(xi * values[None], axis=2)
    out = np.zeros((xi.shape[0], xi.shape[1] + 1))
    np.cumsum(incr, axis=1, out=out[:, 1:])
    return out


def integrate(phi: PredictableField, noise: NoiseRealization, cov: CovariationProcess, grid: TimeGrid) -> np.ndarray:
    """Paths X[r, m] = sum_{i<m} sum_j phi(i, a_ij) xi[r, i, j]; X[:, 0] = 0."""
    cov.check_grid(grid)
    values = _field_table(phi, [q.points for q in cov.source], noise.xi.shape[2])
    return _paths(values, noise.xi)


def transport_process(cov: CovariationProcess, p: float = 2.0, rational=None) -> list[DeterministicMap]:
    maps = []
    for i, (q, qh) in enumerate(zip(cov.source, cov.target)):
        unique, tmap = ot.is_unique(q, qh, p, rational)
        if not unique:
            raise NonUniqueStep(i)
        maps.append(tmap)
    return maps


def transport_costs(cov: CovariationProcess, maps: Sequence[DeterministicMap]) -> np.ndarray:
    """sum_j w_ij |a_ij - T_i(a_ij)|^2 per step."""
    out = []
    for q, tmap in zip(cov.source, maps):
        d2 = np.sum((q.points - tmap.apply(q)) ** 2, axis=1)
        out.append(math.fsum(q.float_weights * d2))
    return np.array(out)


def coupled_integral(
    phi: PredictableField,
    noise: NoiseRealization,
    maps: Sequence[DeterministicMap],
    cov: CovariationProcess,
    grid: TimeGrid,
) -> np.ndarray:
    """Same increments, integrand phi(i, T_i(a_ij))."""
    cov.check_grid(grid)
    if len(maps) != cov.steps:
        raise ValueError("need one map per step")
    images = [tmap.apply(q) for q, tmap in zip(cov.source, maps)]
    values = _field_table(phi, images, noise.xi.shape[2])
    return _paths(values, noise.xi)


def isometry_exact(phi: PredictableField, point_rows, weight_rows, grid: TimeGrid) -> float:
    """sum_i sum_j phi(i, a_ij)^2 w_ij dk_i."""
    return math.fsum(
        grid.dk[i] * math.fsum(w * phi(i, pts) ** 2) for i, (pts, w) in enumerate(zip(point_rows, weight_rows))
    )


# --- plan-driven coupling ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlanNoise:
    """Noise on plan entries; entry e of step i joins atom ``src[i][e]`` to ``tgt[i][e]``."""

    noise: NoiseRealization
    src: tuple[np.ndarray, ...]
    tgt: tuple[np.ndarray, ...]
    mass: tuple[np.ndarray, ...]

    def integrate_marginals(self, phi: PredictableField) -> tuple[np.ndarray, np.ndarray]:
        width = self.noise.xi.shape[2]
        first = _field_table(phi, self.src, width)
        second = _field_table(phi, self.tgt, width)
        return _paths(first, self.noise.xi), _paths(second, self.noise.xi)

    def exact_terminal_gap(self, phi: PredictableField, grid: TimeGrid) -> float:
        """sum_i dk_i sum_e mass_e (phi(i, a_e) - phi(i, a'_e))^2."""
        return math.fsum(
            grid.dk[i] * math.fsum(m * (phi(i, s) - phi(i, t)) ** 2)
            for i, (s, t, m) in enumerate(zip(self.src, self.tgt, self.mass))
        )


def plan_coupling_noise(
    plans: Sequence[ot.TransportPlan], grid: TimeGrid, seed: int, replications: int = 1, first_replication: int = 0
) -> PlanNoise:
    """Gaussian measure on the product space with covariance pi_i(da, da') dk_i.

    Entries are ordered by (source, target) index, so a plan induced by a map
    has entry e equal to source atom e and reproduces :func:`simulate_noise`
    increment for increment under the same seed.
    """
    if len(plans) != grid.steps:
        raise ValueError(f"grid has {grid.steps} steps but {len(plans)} plans were given")
    src, tgt, mass = [], [], []
    for i, plan in enumerate(plans):
        if not isinstance(plan, ot.TransportPlan) or not plan.entries:
            raise MeasureError(f"invalid plan at step {i}")
        w = np.array([float(m) for _, _, m in plan.entries])
        if np.any(w <= 0) or not math.isclose(math.fsum(w), 1.0, abs_tol=1e-10):
            raise MeasureError(f"plan at step {i} is not a probability coupling")
        src.append(np.array([plan.source.points[a] for a, _, _ in plan.entries]))
        tgt.append(np.array([plan.target.points[b] for _, b, _ in plan.entries]))
        mass.append(w)
    var = _variance_table(mass, grid.dk)
    reps = range(first_replication, first_replication + replications)
    z = _standard_normals(seed, reps, *var.shape)
    noise = NoiseRealization(z * np.sqrt(var)[None], seed, first_replication)
    return PlanNoise(noise, tuple(src), tuple(tgt), tuple(mass))


# --- experiment -------------------------------------------------------------------


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    R = samples.shape[0]
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(R)) if R > 1 else float("inf")
    return mean, se


@dataclass(frozen=True, eq=False)
class CouplingConfig:
    grid: TimeGrid
    cov: CovariationProcess
    phi: PredictableField
    R: int
    seed: int
    threads: int = 1
    chunk: int = 2048

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("replication count R must be >= 1")
        self.cov.check_grid(self.grid)


@dataclass
class CouplingReport:
    R: int
    seed: int
    lhs_sup: float
    lhs_sup_se: float
    lhs_terminal: float
    lhs_terminal_se: float
    rhs: float
    second_moment: float
    second_moment_se: float
    second_moment_exact: float
    coupled_second_moment: float
    coupled_second_moment_se: float
    coupled_second_moment_exact: float
    increment_means: list[float]
    increment_ses: list[float]
    max_abs_difference: float
    generator: str = GENERATOR

    @property
    def terminal_pass(self) -> bool:
        return self.lhs_terminal <= self.rhs + 3 * self.lhs_terminal_se

    @property
    def doob_pass(self) -> bool:
        return self.lhs_sup <= 4 * self.rhs + 3 * self.lhs_sup_se

    @property
    def literal_pass(self) -> bool:
        """The bound without Doob's constant; reported, never asserted."""
        return self.lhs_sup <= self.rhs

    @property
    def isometry_pass(self) -> bool:
        return abs(self.second_moment - self.second_moment_exact) <= 3 * self.second_moment_se

    @property
    def coupled_isometry_pass(self) -> bool:
        return abs(self.coupled_second_moment - self.coupled_second_moment_exact) <= 3 * self.coupled_second_moment_se

    @property
    def martingale_pass(self) -> bool:
        return all(abs(m) <= 3 * s for m, s in zip(self.increment_means, self.increment_ses))

    @property
    def hard_pass(self) -> bool:
        return self.terminal_pass and self.doob_pass

    def rows(self) -> list[tuple[str, float, float, float, bool]]:
        return [
            ("lhs_terminal", self.lhs_terminal, self.lhs_terminal_se, self.rhs, self.terminal_pass),
            ("lhs_sup", self.lhs_sup, self.lhs_sup_se, 4 * self.rhs, self.doob_pass),
            ("lhs_sup_literal", self.lhs_sup, self.lhs_sup_se, self.rhs, self.literal_pass),
            ("rhs", self.rhs, 0.0, self.rhs, True),
            ("second_moment", self.second_moment, self.second_moment_se, self.second_moment_exact, self.isometry_pass),
            (
                "coupled_second_moment",
                self.coupled_second_moment,
                self.coupled_second_moment_se,
                self.coupled_second_moment_exact,
                self.coupled_isometry_pass,
            ),
        ]

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "seed": self.seed,
            "generator": self.generator,
            "quantities": {
                name: {"estimate": est, "stderr": se, "bound": bound, "pass": ok}
                for name, est, se, bound, ok in self.rows()
            },
            "increment_means": self.increment_means,
            "increment_stderrs": self.increment_ses,
            "martingale_pass": self.martingale_pass,
            "max_abs_difference": self.max_abs_difference,
            "hard_pass": self.hard_pass,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "estimate", "stderr", "bound", "pass"])
        for name, est, se, bound, ok in self.rows():
            w.writerow([name, repr(est), repr(se), repr(bound), ok])
        return buf.getvalue()


def run_experiment(config: CouplingConfig, maps: Sequence[DeterministicMap] | None = None) -> CouplingReport:
    cov, grid, phi = config.cov, config.grid, config.phi
    if maps is None:
        maps = transport_process(cov)
    w2 = transport_costs(cov, maps)
    rhs = math.fsum(phi.lipschitz**2 * w2 * grid.dk)

    def chunk(start):
        size = min(config.chunk, config.R - start)
        noise = simulate_noise(cov, grid, config.seed, size, first_replication=start)
        X = integrate(phi, noise, cov, grid)
        Xh = coupled_integral(phi, noise, maps, cov, grid)
        return X, Xh

    starts = range(0, config.R, config.chunk)
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    # per-replication values do not depend on chunking; reductions run on the full arrays
    X = np.concatenate([p[0] for p in parts])
    Xh = np.concatenate([p[1] for p in parts])
    diff = X - Xh

    lhs_sup, lhs_sup_se = _mean_se(np.max(diff**2, axis=1))
    lhs_term, lhs_term_se = _mean_se(diff[:, -1] ** 2)
    m2, m2_se = _mean_se(X[:, -1] ** 2)
    mh2, mh2_se = _mean_se(Xh[:, -1] ** 2)
    incr = np.diff(X, axis=1)
    inc = [_mean_se(incr[:, i]) for i in range(incr.shape[1])]
    src_rows = [q.points for q in cov.source]
    weights = [q.float_weights for q in cov.source]
    images = [tmap.apply(q) for q, tmap in zip(cov.source, maps)]
    return CouplingReport(
        R=config.R,
        seed=config.seed,
        lhs_sup=lhs_sup,
        lhs_sup_se=lhs_sup_se,
        lhs_terminal=lhs_term,
        lhs_terminal_se=lhs_term_se,
        rhs=rhs,
        second_moment=m2,
        second_moment_se=m2_se,
        second_moment_exact=isometry_exact(phi, src_rows, weights, grid),
        coupled_second_moment=mh2,
        coupled_second_moment_se=mh2_se,
        coupled_second_moment_exact=isometry_exact(phi, images, weights, grid),
        increment_means=[m for m, _ in inc],
        increment_ses=[s for _, s in inc],
        max_abs_difference=float(np.max(np.abs(diff))),
    )
