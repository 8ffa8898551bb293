"""Mixed quantitative/qualitative input domains, points, and datasets.

The quantitative part of every space is the unit hypercube; benchmark
functions living on other rectangles are rescaled where they are defined,
not here.  Qualitative factors use 1-based level indices.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

CSV_SCHEMA_DATASET = "# almix-csv v1 dataset"
CSV_SCHEMA_DESIGN = "# almix-csv v1 design"

LevelCombination = tuple[int, ...]
"""One joint setting of all qualitative factors (1-based level per factor)."""


@dataclass(frozen=True)
class DesignSpace:
    """Input domain with ``p`` quantitative variables on [0, 1] plus
    qualitative factors whose level counts are listed in ``factors``.

    The number of qualitative factors ``q`` is implied by ``len(factors)``.
    """

    p: int
    factors: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(int(m) for m in self.factors))
        if self.p < 0:
            raise ValueError(f"p must be >= 0, got {self.p}")
        if any(m < 2 for m in self.factors):
            raise ValueError(f"every qualitative factor needs >= 2 levels, got {self.factors}")
        if self.p + self.q < 1:
            raise ValueError("a design space needs at least one input variable")

    @property
    def q(self) -> int:
        return len(self.factors)

    @property
    def n_combinations(self) -> int:
        """Number of level combinations; the empty product (q=0) is 1."""
        out = 1
        for m in self.factors:
            out *= m
        return out


@dataclass(frozen=True)
class MixedPoint:
    """One input ``w = (x, z)``: quantitative coordinates in [0, 1] and a
    1-based level index per qualitative factor."""

    x: tuple[float, ...]
    z: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "z", tuple(int(v) for v in self.z))


def enumerate_level_combinations(space: DesignSpace) -> list[LevelCombination]:
    """All level combinations in lexicographic order of (z_1, ..., z_q).

    Returns exactly ``space.n_combinations`` tuples; for q = 0 the single
    empty combination ``()``.
    """
    ranges = [range(1, m + 1) for m in space.factors]
    return [tuple(z) for z in itertools.product(*ranges)]


def validate_point(space: DesignSpace, w: MixedPoint) -> str | None:
    """Check that ``w`` fits ``space``; return None if it does, otherwise a
    message naming the offending coordinate."""
    if len(w.x) != space.p:
        return f"x has {len(w.x)} coordinates, expected {space.p}"
    if len(w.z) != space.q:
        return f"z has {len(w.z)} coordinates, expected {space.q}"
    for k, v in enumerate(w.x):
        if not (0.0 <= v <= 1.0) or not np.isfinite(v):
            return f"x[{k}] out of [0,1]: {v}"
    for h, (lev, m) in enumerate(zip(w.z, space.factors)):
        if lev < 1:
            return f"z[{h}] below 1: {lev}"
        if lev > m:
            return f"z[{h}] exceeds {m}: {lev}"
    return None


def require_valid(space: DesignSpace, w: MixedPoint) -> None:
    msg = validate_point(space, w)
    if msg is not None:
        raise ValueError(msg)


@dataclass(frozen=True)
class Dataset:
    """Evaluated design: points with scalar responses.

    Points must be pairwise distinct (exact equality on x and z); duplicate
    inputs with noise-free responses would make the emulator's Gram matrix
    singular.  Instances are immutable; use :meth:`extended` to grow.
    """

    space: DesignSpace
    points: tuple[MixedPoint, ...]
    responses: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "responses", tuple(float(v) for v in self.responses))
        if len(self.points) != len(self.responses):
            raise ValueError(
                f"{len(self.points)} points but {len(self.responses)} responses"
            )
        for w in self.points:
            require_valid(self.space, w)
        seen = set()
        for w in self.points:
            key = (w.x, w.z)
            if key in seen:
                raise ValueError(f"duplicate design point {key}")
            seen.add(key)

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __contains__(self, w: MixedPoint) -> bool:
        return (w.x, w.z) in self._keys

    @cached_property
    def _keys(self) -> frozenset:
        return frozenset((w.x, w.z) for w in self.points)

    @cached_property
    def X(self) -> np.ndarray:
        out = np.array([w.x for w in self.points], dtype=float)
        return out.reshape(self.n, self.space.p)

    @cached_property
    def Z(self) -> np.ndarray:
        out = np.array([w.z for w in self.points], dtype=np.int64)
        return out.reshape(self.n, self.space.q)

    @cached_property
    def y(self) -> np.ndarray:
        return np.array(self.responses, dtype=float)

    def extended(self, w: MixedPoint, response: float) -> "Dataset":
        """New dataset with one more evaluated point appended."""
        return Dataset(self.space, self.points + (w,), self.responses + (float(response),))


def _point_header(space: DesignSpace) -> list[str]:
    return [f"x{k + 1}" for k in range(space.p)] + [f"z{h + 1}" for h in range(space.q)]


def _point_row(w: MixedPoint) -> list[str]:
    return [f"{v:.17g}" for v in w.x] + [str(v) for v in w.z]


def dataset_to_csv(data: Dataset, path) -> None:
    """Write columns x1..xp, z1..zq, y with a schema comment line on top."""
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA_DATASET + "\n")
        writer = csv.writer(fh)
        writer.writerow(_point_header(data.space) + ["y"])
        for w, y in zip(data.points, data.responses):
            writer.writerow(_point_row(w) + [f"{y:.17g}"])


def points_to_csv(space: DesignSpace, points: Sequence[MixedPoint], path) -> None:
    """Write an unevaluated design: the dataset schema minus the y column."""
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA_DESIGN + "\n")
        writer = csv.writer(fh)
        writer.writerow(_point_header(space))
        for w in points:
            writer.writerow(_point_row(w))


def dataset_from_csv(path, space: DesignSpace) -> Dataset:
    """Read a dataset written by :func:`dataset_to_csv`."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header = rows[0]
    expected = _point_header(space) + ["y"]
    if header != expected:
        raise ValueError(f"unexpected dataset header {header}, expected {expected}")
    points, ys = [], []
    for row in rows[1:]:
        x = tuple(float(v) for v in row[: space.p])
        z = tuple(int(v) for v in row[space.p : space.p + space.q])
        points.append(MixedPoint(x, z))
        ys.append(float(row[-1]))
    return Dataset(space, tuple(points), tuple(ys))
