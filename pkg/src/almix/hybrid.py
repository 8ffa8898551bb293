"""Hybrid optimization: bandit search over level combinations plus GPs.

A one-layer Monte Carlo tree whose leaves are the qualitative level
combinations picks the next combination by the UCT rule; a small pool of
mixed-input kernels is then ranked by fit (log marginal likelihood) and by
promise (best expected improvement), and the winning surrogate drives EI
over the quantitative candidates of the chosen combination.  Rewards are
normalized improvements over the initial design's worst response, so the
tree statistics stay in [0, 1] across problems.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import acquisition as acq
from .adaptive_loop import Trace, TraceEntry
from .design_space import Dataset, DesignSpace, LevelCombination, MixedPoint, enumerate_level_combinations
from .emulator import FitFailure, FitOptions, fit, fit_product
from .sampling import RngStream, candidate_set, initial_design

DEFAULT_UCT_C = 1.0 / math.sqrt(2.0)
KERNEL_POOL_DEFAULT = ("additive", "product")

_KERNEL_FITTERS = {"additive": fit, "product": fit_product}


@dataclass
class McTree:
    """One-layer tree: a leaf per level combination with visit counts and
    average rewards; the root count is the sum of leaf counts."""

    combos: tuple[LevelCombination, ...]
    visits: np.ndarray
    mean_reward: np.ndarray

    @classmethod
    def for_space(cls, space: DesignSpace) -> "McTree":
        combos = tuple(enumerate_level_combinations(space))
        return cls(combos, np.zeros(len(combos), dtype=np.int64), np.zeros(len(combos)))

    @property
    def root_visits(self) -> int:
        return int(self.visits.sum())

    def leaf_index(self, combo: LevelCombination) -> int:
        return self.combos.index(tuple(combo))

    def to_rows(self) -> list[tuple[str, int, float]]:
        return [
            ("|".join(map(str, c)) or "-", int(n), float(r))
            for c, n, r in zip(self.combos, self.visits, self.mean_reward)
        ]


def uct_select(tree: McTree, c: float, rng: RngStream) -> int:
    """Index of the leaf maximizing mean reward plus the exploration bonus
    c * sqrt(log(root visits) / leaf visits).

    Unvisited leaves come first (uniformly at random among them), which
    settles the undefined zero-visit case; among visited leaves ties go to
    the lowest index.
    """
    if c < 0:
        raise ValueError("exploration constant must be >= 0")
    unvisited = np.flatnonzero(tree.visits == 0)
    if unvisited.size:
        gen = rng.generator()
        return int(unvisited[gen.integers(unvisited.size)])
    bonus = c * np.sqrt(math.log(tree.root_visits) / tree.visits)
    return int(np.argmax(tree.mean_reward + bonus))


def backprop(tree: McTree, leaf: int, reward: float) -> None:
    """Record one evaluation: bump the leaf's count and fold the reward
    into its running mean (the root count is derived, so it moves too)."""
    if not np.isfinite(reward):
        raise ValueError("reward must be finite")
    tree.visits[leaf] += 1
    tree.mean_reward[leaf] += (reward - tree.mean_reward[leaf]) / tree.visits[leaf]


def normalized_improvement(y_new: float, worst_initial: float, best_current: float) -> float:
    """Reward in [0, 1]: how far the new response moves from the initial
    design's worst value toward the current best (1 = new incumbent)."""
    span = worst_initial - best_current
    if span <= 0:
        return 0.5
    return float(np.clip((worst_initial - y_new) / span, 0.0, 1.0))


def kernel_rank_select(
    pool: Sequence[str],
    data: Dataset,
    candidates: Sequence[MixedPoint],
    alpha_rank: float,
    *,
    fit_options: FitOptions = FitOptions(),
    rng: RngStream = RngStream(0),
) -> tuple[int, list]:
    """Fit every kernel in the pool and pick one by combined rank.

    Kernels are ranked (rank = pool size is best) by log marginal
    likelihood and by their best expected improvement over the candidates;
    the combined rank is likelihood rank + alpha_rank * improvement rank.
    Fit failures sink to the bottom.  Ties go to the higher raw likelihood,
    then to the lower index.  Returns the chosen index and the fitted
    models (None where fitting failed).
    """
    if not pool:
        raise ValueError("kernel pool is empty")
    fits: list = []
    loglik = np.full(len(pool), -np.inf)
    best_ei = np.full(len(pool), -np.inf)
    f_min = float(np.min(data.y))
    for k, name in enumerate(pool):
        fitter = _KERNEL_FITTERS.get(name)
        if fitter is None:
            raise ValueError(f"unknown kernel {name!r}; expected one of {sorted(_KERNEL_FITTERS)}")
        try:
            model = fitter(data, fit_options, rng.child(k))
        except FitFailure:
            fits.append(None)
            continue
        fits.append(model)
        loglik[k] = -model.nll
        mean, sd = model.predict_batch(candidates)
        best_ei[k] = float(np.max(acq.ei_min(mean, sd, f_min)))
    if all(m is None for m in fits):
        raise FitFailure("every kernel in the pool failed to fit")
    rank_fit = rankdata(loglik, method="average")
    rank_acq = rankdata(best_ei, method="average")
    combined = rank_fit + alpha_rank * rank_acq
    chosen = max(range(len(pool)), key=lambda k: (combined[k], loglik[k], -k))
    return chosen, fits


@dataclass(frozen=True)
class HybridChoice:
    """Outcome of one hybrid step."""

    point: MixedPoint
    combo_index: int
    kernel_index: int
    score: float
    model: object
    fit_seconds: float


def hybrid_step(
    data: Dataset,
    tree: McTree,
    candidates: Sequence[MixedPoint],
    *,
    uct_c: float = DEFAULT_UCT_C,
    alpha_rank: float = 0.5,
    kernel_pool: Sequence[str] = KERNEL_POOL_DEFAULT,
    fit_options: FitOptions = FitOptions(),
    rng: RngStream = RngStream(0),
) -> HybridChoice:
    """Pick the next input: UCT chooses the level combination, the kernel
    pool is ranked on the combination's candidates, and EI under the
    winning surrogate chooses the quantitative coordinates.

    The caller evaluates the point and then feeds the reward back through
    :func:`backprop`.
    """
    if data.n < 1:
        raise ValueError("hybrid step needs at least one prior observation")
    leaf = uct_select(tree, uct_c, rng.child(0))
    combo = tree.combos[leaf]
    restricted = [w for w in candidates if w.z == combo]
    if not restricted:
        raise ValueError(f"candidate pool has no points for combination {combo}")
    t0 = time.perf_counter()
    kernel_idx, fits = kernel_rank_select(
        kernel_pool, data, restricted, alpha_rank, fit_options=fit_options, rng=rng.child(1)
    )
    fit_seconds = time.perf_counter() - t0
    model = fits[kernel_idx]
    mean, sd = model.predict_batch(restricted)
    idx, score, _ = acq.pick_ei(mean, sd, float(np.min(data.y)))
    return HybridChoice(restricted[idx], leaf, kernel_idx, score, model, fit_seconds)


@dataclass(frozen=True)
class HybridConfig:
    """Settings of a hybrid optimization run."""

    space: DesignSpace
    n0: int
    budget: int
    rng: RngStream
    n_per_combo: int = 100
    fit_options: FitOptions = FitOptions()
    uct_c: float = DEFAULT_UCT_C
    alpha_rank: float = 0.5
    alpha_schedule: str = "fixed"  # or "budget-ratio": 2 * iteration / budget
    kernel_pool: tuple[str, ...] = KERNEL_POOL_DEFAULT

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2")
        if self.budget < self.n0:
            raise ValueError(f"budget {self.budget} smaller than n0 {self.n0}")
        if self.alpha_schedule not in ("fixed", "budget-ratio"):
            raise ValueError(f"unknown alpha schedule {self.alpha_schedule!r}")
        if not self.kernel_pool:
            raise ValueError("kernel pool is empty")


def run_hybrid(
    objective: Callable[[MixedPoint], float],
    config: HybridConfig,
    *,
    tree_log: list | None = None,
) -> Trace:
    """Hybrid optimization run with the same trace layout as the generic
    adaptive loop.  ``tree_log`` (if given) collects per-iteration tree
    snapshots as (iteration, combination, visits, mean reward) rows."""
    space = config.space
    rng = config.rng
    points = initial_design(space, config.n0, rng.child(0))
    responses = [float(objective(w)) for w in points]
    data = Dataset(space, tuple(points), tuple(responses))
    worst_initial = float(np.max(data.y))

    tree = McTree.for_space(space)
    entries: list[TraceEntry] = []
    best = math.inf
    for i in range(config.budget - config.n0):
        t0 = time.perf_counter()
        pool = candidate_set(space, config.n_per_combo, rng.child(2, i))
        pool = [w for w in pool if w not in data]
        alpha = config.alpha_rank
        if config.alpha_schedule == "budget-ratio":
            alpha = 2.0 * (i + 1) / config.budget
        choice = hybrid_step(
            data,
            tree,
            pool,
            uct_c=config.uct_c,
            alpha_rank=alpha,
            kernel_pool=config.kernel_pool,
            fit_options=config.fit_options,
            rng=rng.child(3, i),
        )
        select_seconds = time.perf_counter() - t0 - choice.fit_seconds

        y_new = float(objective(choice.point))
        best = min(best, y_new)
        data = data.extended(choice.point, y_new)
        reward = normalized_improvement(y_new, worst_initial, float(np.min(data.y)))
        backprop(tree, choice.combo_index, reward)
        if tree_log is not None:
            tree_log.extend((i + 1, c, n, r) for c, n, r in tree.to_rows())
        entries.append(
            TraceEntry(
                data.n,
                choice.point,
                y_new,
                choice.score,
                f"hybrid:{config.kernel_pool[choice.kernel_index]}",
                best,
                choice.fit_seconds,
                select_seconds,
            )
        )

    model = fit(data, config.fit_options, rng.child(1, config.budget - config.n0))
    return Trace(space, config.n0, tuple(entries), model)


def tree_log_to_csv(tree_log: Sequence[tuple], path) -> None:
    """Write per-iteration tree snapshots: iteration, combination, visit
    count, mean reward."""
    with open(path, "w", newline="") as fh:
        fh.write("# almix-csv v1 hybrid-tree\n")
        writer = csv.writer(fh)
        writer.writerow(["iteration", "combination", "visits", "mean_reward"])
        for it, combo, n, r in tree_log:
            writer.writerow([it, combo, n, f"{r:.17g}"])
