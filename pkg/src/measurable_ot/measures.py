"""Discrete probability measures, parameter families and deterministic maps.

Weights are stored as exact ``Fraction`` values so that normalisation and
pushforward bookkeeping never lose mass; coordinates are float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Any, Iterable, Sequence

import numpy as np


class MeasureError(ValueError):
    """Invalid measure, map or family construction."""


def as_fraction(w: Any) -> Fraction:
    """Exact conversion; floats keep their binary value, strings may be '0.3' or '1/3'."""
    if isinstance(w, Fraction):
        return w
    if isinstance(w, bool):
        raise MeasureError(f"invalid weight {w!r}")
    if isinstance(w, (int, str)):
        return Fraction(w)
    if isinstance(w, (Real, np.floating, np.integer)):
        wf = float(w)
        if not np.isfinite(wf):
            raise MeasureError(f"non-finite weight {w!r}")
        return Fraction(wf)
    raise MeasureError(f"invalid weight {w!r}")


def _as_points(points: Iterable[Any]) -> np.ndarray:
    rows = []
    for p in points:
        row = np.atleast_1d(np.asarray(p, dtype=float))
        if row.ndim != 1:
            raise MeasureError("each point must be a scalar or a flat coordinate vector")
        rows.append(row)
    if not rows:
        raise MeasureError("empty point list")
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise MeasureError(f"dimension mismatch among points: {sorted(dims)}")
    arr = np.vstack(rows)
    if arr.shape[1] < 1:
        raise MeasureError("points must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise MeasureError("non-finite coordinate")
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure on R^d.

    ``points`` has shape (n, d); ``weights[i]`` is the exact mass of
    ``points[i]``. Build through :func:`make_discrete`, which normalises and
    merges duplicate points.
    """

    points: np.ndarray
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        self.points.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def float_weights(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def atoms(self):
        for x, w in zip(self.points, self.weights):
            yield tuple(float(c) for c in x), w

    def index_of(self, x: Sequence[float] | float) -> int:
        """Index of the atom at exactly ``x``; raises ``KeyError`` otherwise."""
        key = tuple(np.atleast_1d(np.asarray(x, dtype=float)).tolist())
        for i, p in enumerate(self.points):
            if tuple(p.tolist()) == key:
                return i
        raise KeyError(f"{key} is not an atom")

    def translate(self, v: Sequence[float] | float) -> DiscreteMeasure:
        shift = np.broadcast_to(np.asarray(v, dtype=float), (self.dim,))
        return make_discrete(self.points + shift, self.weights)

    def second_moment(self) -> float:
        return float(np.dot(self.float_weights, np.sum(self.points**2, axis=1)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and bool(np.array_equal(self.points, other.points))
            and self.weights == other.weights
        )

    def same_law(self, other: DiscreteMeasure) -> bool:
        """Equality as measures, ignoring atom order."""
        return _atom_dict(self) == _atom_dict(other)

    def __repr__(self) -> str:
        return f"DiscreteMeasure(dim={self.dim}, n={len(self)})"


def _atom_dict(mu: DiscreteMeasure) -> dict[tuple[float, ...], Fraction]:
    return {tuple(p.tolist()): w for p, w in zip(mu.points, mu.weights)}


def make_discrete(points: Iterable[Any], weights: Iterable[Any]) -> DiscreteMeasure:
    """Normalise weights to total mass one and merge exactly-equal points.

    Zero-weight atoms are dropped. Atom order follows first occurrence.
    """
    pts = _as_points(points)
    ws = [as_fraction(w) for w in weights]
    if len(ws) != pts.shape[0]:
        raise MeasureError(f"{pts.shape[0]} points but {len(ws)} weights")
    if any(w < 0 for w in ws):
        raise MeasureError("negative weight")
    total = sum(ws, Fraction(0))
    if total <= 0:
        raise MeasureError("total weight must be positive")

    merged: dict[tuple[float, ...], Fraction] = {}
    order: list[tuple[float, ...]] = []
    for p, w in zip(pts, ws):
        if w == 0:
            continue
        key = tuple(p.tolist())
        if key not in merged:
            merged[key] = Fraction(0)
            order.append(key)
        merged[key] += w
    out_pts = np.array(order, dtype=float).reshape(len(order), pts.shape[1])
    return DiscreteMeasure(out_pts, tuple(merged[k] / total for k in order))


def dirac(x: Sequence[float] | float) -> DiscreteMeasure:
    return make_discrete([x], [1])


def uniform(points: Iterable[Any]) -> DiscreteMeasure:
    pts = list(points)
    return make_discrete(pts, [1] * len(pts))


@dataclass(frozen=True, eq=False)
class DeterministicMap:
    """Atom-wise map: ``images[i]`` is the image of ``sources[i]``."""

    sources: np.ndarray
    images: np.ndarray

    def __post_init__(self):
        if self.sources.shape != self.images.shape:
            raise MeasureError("sources and images must have identical shape")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Any, Any]]) -> DeterministicMap:
        pairs = list(pairs)
        if not pairs:
            raise MeasureError("empty map")
        return cls(_as_points(p for p, _ in pairs), _as_points(q for _, q in pairs))

    @classmethod
    def identity(cls, mu: DiscreteMeasure) -> DeterministicMap:
        return cls(mu.points.copy(), mu.points.copy())

    def __call__(self, x: Sequence[float] | float) -> np.ndarray:
        key = np.atleast_1d(np.asarray(x, dtype=float))
        hits = np.flatnonzero(np.all(self.sources == key, axis=1))
        if hits.size == 0:
            raise KeyError(f"{tuple(key)} is not covered by the map")
        return self.images[hits[0]]

    def apply(self, mu: DiscreteMeasure) -> np.ndarray:
        """Images of the atoms of ``mu`` in atom order, shape (n, d)."""
        lookup = {tuple(s.tolist()): k for k, s in enumerate(self.sources)}
        out = np.empty_like(mu.points)
        for i, x in enumerate(mu.points):
            k = lookup.get(tuple(x.tolist()))
            if k is None:
                raise MeasureError(f"atom {tuple(x.tolist())} not covered by the map")
            out[i] = self.images[k]
        return out

    def pairs(self) -> list[tuple[tuple[float, ...], tuple[float, ...]]]:
        return [(tuple(s.tolist()), tuple(t.tolist())) for s, t in zip(self.sources, self.images)]


def pushforward(mu: DiscreteMeasure, tmap: DeterministicMap) -> DiscreteMeasure:
    return make_discrete(tmap.apply(mu), mu.weights)


# --- sampling -----------------------------------------------------------

SAMPLERS = ("uniform-box", "gaussian", "two-point-mixture")


def sample_cloud(spec: dict, n: int, seed: int) -> DiscreteMeasure:
    """Equal-weight empirical cloud drawn from a named distribution.

    ``spec`` examples::

        {"type": "uniform-box", "low": [0, 0], "high": [1, 1]}
        {"type": "gaussian", "mean": [0.0], "std": 1.0}
        {"type": "two-point-mixture", "centers": [[-1], [1]], "std": 0.2, "weight": 0.5}
    """
    if n < 1:
        raise MeasureError("n must be >= 1")
    kind = spec.get("type")
    rng = np.random.default_rng(seed)
    if kind == "uniform-box":
        low = np.atleast_1d(np.asarray(spec.get("low", [0.0]), dtype=float))
        high = np.atleast_1d(np.asarray(spec.get("high", np.ones_like(low)), dtype=float))
        pts = rng.uniform(low, high, size=(n, low.shape[0]))
    elif kind == "gaussian":
        mean = np.atleast_1d(np.asarray(spec.get("mean", [0.0]), dtype=float))
        std = np.broadcast_to(np.asarray(spec.get("std", 1.0), dtype=float), mean.shape)
        pts = mean + std * rng.standard_normal((n, mean.shape[0]))
    elif kind == "two-point-mixture":
        centers = np.asarray(spec["centers"], dtype=float)
        if centers.ndim == 1:
            centers = centers[:, None]
        if centers.shape[0] != 2:
            raise MeasureError("two-point-mixture needs exactly two centers")
        std = float(spec.get("std", 0.1))
        first = rng.random(n) < float(spec.get("weight", 0.5))
        base = np.where(first[:, None], centers[0], centers[1])
        pts = base + std * rng.standard_normal((n, centers.shape[1]))
    else:
        raise MeasureError(f"unknown distribution type {kind!r}; expected one of {SAMPLERS}")
    return make_discrete(pts, [1] * n)


# --- parameter families ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class Param:
    label: str
    mass: Fraction
    source: DiscreteMeasure
    target: DiscreteMeasure


@dataclass(frozen=True, eq=False)
class ParamFamily:
    """Finite weighted parameter set with one marginal pair per parameter."""

    params: tuple[Param, ...]
    p: float = 2.0
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if not self.params:
            raise MeasureError("family needs at least one parameter")
        if self.p <= 0:
            raise MeasureError("cost exponent must be positive")
        dims = {m.dim for prm in self.params for m in (prm.source, prm.target)}
        if len(dims) != 1:
            raise MeasureError(f"family mixes dimensions {sorted(dims)}")
        if any(prm.mass < 0 for prm in self.params):
            raise MeasureError("negative parameter mass")
        if self.total_mass <= 0:
            raise MeasureError("total mass m(E) must be positive")
        index = {}
        for prm in self.params:
            if prm.label in index:
                raise MeasureError(f"duplicate parameter label {prm.label!r}")
            index[prm.label] = prm
        object.__setattr__(self, "_index", index)

    @classmethod
    def build(cls, entries: Iterable[tuple[Any, Any, DiscreteMeasure, DiscreteMeasure]], p: float = 2.0):
        return cls(tuple(Param(str(lab), as_fraction(m), mu, nu) for lab, m, mu, nu in entries), float(p))

    @property
    def dim(self) -> int:
        return self.params[0].source.dim

    @property
    def total_mass(self) -> Fraction:
        return sum((prm.mass for prm in self.params), Fraction(0))

    @property
    def labels(self) -> list[str]:
        return [prm.label for prm in self.params]

    def __getitem__(self, label: str) -> Param:
        try:
            return self._index[str(label)]
        except KeyError:
            raise KeyError(f"unknown parameter {label!r}") from None

    def __len__(self) -> int:
        return len(self.params)
