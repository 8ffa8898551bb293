"""Sequential design loops: initial design, fit, select, evaluate, augment.

One run is strictly serial; independent runs are made concurrent by giving
each its own :class:`~almix.sampling.RngStream`.  Candidate pools are
regenerated each iteration from a fresh substream, so a run never exhausts
its pool and reruns are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import acquisition as acq
from .design_space import Dataset, DesignSpace, MixedPoint
from .emulator import FitOptions, FittedEzGP, fit
from .sampling import RngStream, candidate_set, initial_design, oneshot_design

CSV_SCHEMA_TRACE = "# almix-csv v1 trace"


@dataclass(frozen=True)
class LoopConfig:
    """Settings of one adaptive run.

    ``budget`` is the total sample size including the ``n0`` initial runs;
    the candidate pool holds ``n_per_combo`` quantitative points per level
    combination and is rebuilt every iteration.
    """

    space: DesignSpace
    n0: int
    budget: int
    spec: acq.AcquisitionSpec
    rng: RngStream
    n_per_combo: int = 100
    fit_options: FitOptions = FitOptions()

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2")
        if self.budget < self.n0:
            raise ValueError(f"budget {self.budget} smaller than n0 {self.n0}")
        if self.n_per_combo < 1:
            raise ValueError("n_per_combo must be >= 1")


@dataclass(frozen=True)
class TraceEntry:
    """One adaptive iteration: the chosen point, its response, the winning
    criterion score and region, and wall-clock costs."""

    n: int
    point: MixedPoint
    response: float
    score: float
    region: str
    best_min: float
    fit_seconds: float
    select_seconds: float


@dataclass
class Trace:
    """Log of an adaptive run.

    ``best_min`` tracks the running minimum over the responses obtained by
    the adaptive iterations (the initial design is the starting stock, not
    part of the incumbent sequence).  ``checkpoints`` holds optional
    model-quality metrics recorded at requested sample sizes.
    """

    space: DesignSpace
    n0: int
    entries: tuple[TraceEntry, ...]
    model: FittedEzGP
    checkpoints: dict[int, float] = field(default_factory=dict)
    contour_estimate: tuple[MixedPoint, ...] | None = None

    @property
    def dataset(self) -> Dataset:
        return self.model.dataset

    @property
    def best_so_far(self) -> np.ndarray:
        return np.array([e.best_min for e in self.entries])

    def best_min_at(self, total_size: int) -> float:
        """Running best minimum once the run had ``total_size`` samples."""
        k = total_size - self.n0
        if not 1 <= k <= len(self.entries):
            raise ValueError(f"no iteration reached sample size {total_size}")
        return self.entries[k - 1].best_min

    def cumulative_seconds_at(self, total_size: int) -> tuple[float, float]:
        """(fit, selection) seconds spent up to sample size ``total_size``."""
        k = total_size - self.n0
        fit_s = sum(e.fit_seconds for e in self.entries[:k])
        sel_s = sum(e.select_seconds for e in self.entries[:k])
        return fit_s, sel_s

    def _rows(self, include_timings: bool) -> tuple[list[str], list[list[str]]]:
        space = self.space
        header = (
            ["n"]
            + [f"x{k + 1}" for k in range(space.p)]
            + [f"z{h + 1}" for h in range(space.q)]
            + ["y", "score", "region", "best_min"]
        )
        if include_timings:
            header += ["fit_seconds", "select_seconds"]
        rows = []
        for e in self.entries:
            row = (
                [str(e.n)]
                + [f"{v:.17g}" for v in e.point.x]
                + [str(v) for v in e.point.z]
                + [f"{e.response:.17g}", f"{e.score:.17g}", e.region, f"{e.best_min:.17g}"]
            )
            if include_timings:
                row += [f"{e.fit_seconds:.6f}", f"{e.select_seconds:.6f}"]
            rows.append(row)
        return header, rows

    def to_csv(self, path, include_timings: bool = True) -> None:
        header, rows = self._rows(include_timings)
        with open(path, "w", newline="") as fh:
            fh.write(CSV_SCHEMA_TRACE + "\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization of the decision sequence (timings,
        which vary run to run, are excluded)."""
        header, rows = self._rows(include_timings=False)
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue().encode()


def _estimate_levels(model, space, spec: acq.AcquisitionSpec, rng: RngStream) -> tuple[float, ...]:
    """Equally spaced contour levels spanning the predicted response range
    over a probe design of about probe_per_dim * p points."""
    if spec.levels is not None:
        return spec.levels
    total = spec.probe_per_dim * max(space.p, 1)
    per_combo = max(1, math.ceil(total / space.n_combinations))
    probe = candidate_set(space, per_combo, rng)
    mean, _ = model.predict_batch(probe)
    levels = np.unique(np.linspace(float(mean.min()), float(mean.max()), spec.n_contours))
    return tuple(levels.tolist())


def _pick(
    spec: acq.AcquisitionSpec,
    mean: np.ndarray,
    sd: np.ndarray,
    *,
    model,
    data: Dataset,
    rng: RngStream,
) -> tuple[int, float, str]:
    kind = spec.kind
    n_obs = data.n
    n_comb = data.space.n_combinations
    if kind == "ei":
        return acq.pick_ei(mean, sd, float(np.min(data.y)))
    if kind == "lcb":
        return acq.pick_lcb(mean, sd, spec.resolved_rho)
    if kind == "ucb":
        return acq.pick_ucb(mean, sd, spec.resolved_rho)
    if kind == "arsd":
        return acq.pick_arsd(mean, sd, n_obs, n_comb, spec.resolved_rho, spec.alpha_conf)
    if kind == "ei-c":
        return acq.pick_ei_contour(mean, sd, spec.a, spec.alpha_eps)
    if kind == "ecl":
        return acq.pick_ecl(mean, sd, spec.a)
    if kind == "rcc":
        return acq.pick_rcc(mean, sd, n_obs, n_comb, spec.a, spec.alpha_conf, spec.delta)
    if kind == "arsd-c":
        return acq.pick_arsd_c(mean, sd, n_obs, n_comb, spec.a, spec.resolved_rho, spec.alpha_conf)
    if kind == "lcb-c":
        return acq.pick_lcb_c(mean, sd, spec.a, spec.resolved_rho)
    if kind == "ei-mc":
        levels = _estimate_levels(model, data.space, spec, rng)
        return acq.pick_ei_mc(mean, sd, levels, spec.alpha_eps)
    if kind == "ei-sc":
        return acq.pick_ei_sc(mean, sd, spec.alpha_eps)
    raise ValueError(f"unknown criterion kind {kind!r}")


def run_adaptive(
    objective: Callable[[MixedPoint], float],
    config: LoopConfig,
    *,
    checkpoint_sizes: Sequence[int] = (),
    checkpoint_fn: Callable[[FittedEzGP], float] | None = None,
) -> Trace:
    """Run the generic adaptive-design loop to the budget.

    Each iteration refits the emulator from scratch, rebuilds the candidate
    pool from a fresh substream, scores it with the configured criterion,
    evaluates the winner, and augments the data.  Candidates identical to
    an already-evaluated point are dropped before scoring, which is the
    next-best-candidate rule for exact duplicates.  Deterministic given
    ``config.rng``.
    """
    space = config.space
    rng = config.rng
    sizes = frozenset(int(s) for s in checkpoint_sizes)

    points = initial_design(space, config.n0, rng.child(0))
    responses = [float(objective(w)) for w in points]
    data = Dataset(space, tuple(points), tuple(responses))

    entries: list[TraceEntry] = []
    checkpoints: dict[int, float] = {}
    best = math.inf
    model = None
    for i in range(config.budget - config.n0):
        t0 = time.perf_counter()
        model = fit(data, config.fit_options, rng.child(1, i))
        fit_seconds = time.perf_counter() - t0
        if checkpoint_fn is not None and data.n in sizes:
            checkpoints[data.n] = float(checkpoint_fn(model))

        t0 = time.perf_counter()
        pool = candidate_set(space, config.n_per_combo, rng.child(2, i))
        pool = [w for w in pool if w not in data]
        if not pool:
            raise RuntimeError("candidate pool exhausted by duplicate filtering")
        mean, sd = model.predict_batch(pool)
        idx, score, region = _pick(config.spec, mean, sd, model=model, data=data, rng=rng.child(3, i))
        chosen = pool[idx]
        select_seconds = time.perf_counter() - t0

        y_new = float(objective(chosen))
        best = min(best, y_new)
        data = data.extended(chosen, y_new)
        entries.append(
            TraceEntry(data.n, chosen, y_new, score, region, best, fit_seconds, select_seconds)
        )

    model = fit(data, config.fit_options, rng.child(1, config.budget - config.n0))
    if checkpoint_fn is not None and data.n in sizes:
        checkpoints[data.n] = float(checkpoint_fn(model))
    return Trace(space, config.n0, tuple(entries), model, checkpoints)


def run_rcc(
    objective: Callable[[MixedPoint], float],
    config: LoopConfig,
    *,
    eps_report: float = 0.05,
    contour_pool_per_combo: int = 200,
    checkpoint_sizes: Sequence[int] = (),
    checkpoint_fn: Callable[[FittedEzGP], float] | None = None,
) -> Trace:
    """Region-based cooperative contour estimation run.

    Same loop as :func:`run_adaptive` with the RCC criterion; afterwards the
    final model is probed on a dense pool and every point whose prediction
    lies within ``eps_report`` of the target level is reported as the
    estimated contour set.
    """
    if config.spec.kind != "rcc":
        raise ValueError(f"run_rcc needs an rcc spec, got {config.spec.kind!r}")
    trace = run_adaptive(
        objective, config, checkpoint_sizes=checkpoint_sizes, checkpoint_fn=checkpoint_fn
    )
    probe = candidate_set(config.space, contour_pool_per_combo, config.rng.child(4))
    mean, _ = trace.model.predict_batch(probe)
    keep = np.abs(mean - config.spec.a) <= eps_report
    trace.contour_estimate = tuple(w for w, k in zip(probe, keep) if k)
    return trace


@dataclass(frozen=True)
class OneShotResult:
    """A fixed design of the full budget with a single model fit."""

    dataset: Dataset
    model: FittedEzGP
    fit_seconds: float


def run_oneshot(
    objective: Callable[[MixedPoint], float],
    space: DesignSpace,
    n_runs: int,
    rng: RngStream,
    fit_options: FitOptions = FitOptions(),
) -> OneShotResult:
    """Evaluate a balanced one-shot design and fit the emulator once.

    Uses the same stream layout as :func:`run_adaptive`, so a one-shot
    design of size n0 coincides with the adaptive initial design under the
    same stream.
    """
    if n_runs < 2:
        raise ValueError("one-shot design needs at least 2 runs")
    points = oneshot_design(space, n_runs, rng.child(0))
    responses = [float(objective(w)) for w in points]
    data = Dataset(space, tuple(points), tuple(responses))
    t0 = time.perf_counter()
    model = fit(data, fit_options, rng.child(1, 0))
    return OneShotResult(data, model, time.perf_counter() - t0)
