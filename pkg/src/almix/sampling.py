"""Latin hypercube designs, candidate pools, and balanced one-shot designs.

All randomness flows through :class:`RngStream`, a splittable deterministic
stream: replication ``r`` of a study uses an independent child stream, so
replications never share state and rerunning with the same seed reproduces
every design byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design_space import (
    DesignSpace,
    MixedPoint,
    enumerate_level_combinations,
)


@dataclass(frozen=True)
class RngStream:
    """Deterministic splittable random stream.

    The same (seed, stream) pair always reproduces the identical sequence;
    distinct child paths are statistically independent.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stream", tuple(int(s) for s in self.stream))
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if any(s < 0 for s in self.stream):
            raise ValueError("stream ids must be non-negative")

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        return np.random.default_rng(ss)

    def label(self) -> str:
        return f"{self.seed}/" + ".".join(str(s) for s in self.stream)


def _lhd(gen: np.random.Generator, n: int, p: int) -> np.ndarray:
    """Plain random Latin hypercube: per column, a random permutation of the
    n strata with a uniform draw inside each cell."""
    out = np.empty((n, p), dtype=float)
    for j in range(p):
        perm = gen.permutation(n)
        out[:, j] = (perm + gen.random(n)) / n
    return out


def random_lhd(n: int, p: int, rng: RngStream) -> np.ndarray:
    """n-by-p random Latin hypercube design on [0, 1).

    Each column places exactly one value in each stratum [(k-1)/n, k/n).
    """
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    return _lhd(rng.generator(), n, p)


def candidate_set(space: DesignSpace, n_per_combo: int, rng: RngStream) -> list[MixedPoint]:
    """Candidate pool: an independent ``n_per_combo``-run LHD on the
    quantitative coordinates for every level combination, in lexicographic
    combination order."""
    if n_per_combo < 1:
        raise ValueError("n_per_combo must be >= 1")
    gen = rng.generator()
    points: list[MixedPoint] = []
    for combo in enumerate_level_combinations(space):
        mat = _lhd(gen, n_per_combo, space.p) if space.p else np.empty((n_per_combo, 0))
        for row in mat:
            points.append(MixedPoint(tuple(row), combo))
    return points


def oneshot_design(space: DesignSpace, n_runs: int, rng: RngStream) -> list[MixedPoint]:
    """Fixed-size baseline design: one ``n_runs``-run LHD on the quantitative
    coordinates combined with a (nearly) balanced allocation of level
    combinations, in randomized order.

    Combination counts differ by at most one (floor or ceil of n_runs / M).
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    gen = rng.generator()
    mat = _lhd(gen, n_runs, space.p) if space.p else np.empty((n_runs, 0))
    combos = enumerate_level_combinations(space)
    m = len(combos)
    base, extra = divmod(n_runs, m)
    labels = list(range(m)) * base
    if extra:
        labels.extend(gen.choice(m, size=extra, replace=False).tolist())
    order = gen.permutation(len(labels))
    return [
        MixedPoint(tuple(mat[i]), combos[labels[order[i]]]) for i in range(n_runs)
    ]


def initial_design(space: DesignSpace, n0: int, rng: RngStream) -> list[MixedPoint]:
    """Initial design of an adaptive run; same construction (and stream
    consumption) as :func:`oneshot_design`, so a one-shot design of size n0
    under the same stream is identical."""
    if n0 < 2:
        raise ValueError("initial design needs n0 >= 2")
    return oneshot_design(space, n0, rng)
