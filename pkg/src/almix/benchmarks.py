"""Benchmark problems, evaluation metrics, and the replication harness.

The three test functions live on the unit hypercube with 1-based levels.
Their frozen extrema come from dense grid/stationary-point analysis (see
``grid_extrema`` for the audit tool); optimization studies report the true
response either at the evaluated points (adaptive runs) or at the fitted
model's recommended minimizer (one-shot designs, which never evaluate
beyond their fixed design).
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .acquisition import AcquisitionSpec
from .adaptive_loop import LoopConfig, Trace, run_adaptive, run_oneshot, run_rcc
from .design_space import Dataset, DesignSpace, MixedPoint, enumerate_level_combinations
from .emulator import FitFailure, FitOptions
from .hybrid import DEFAULT_UCT_C, HybridConfig, run_hybrid
from .sampling import RngStream, candidate_set

OPTIMIZE_METHODS = ("one-shot", "arsd", "ei", "lcb", "hybrid")
CONTOUR_METHODS = ("one-shot", "arsd-c", "rcc", "ecl", "ei-c", "lcb-c")
PREDICT_METHODS = ("one-shot", "ei-mc", "ei-sc")


@dataclass(frozen=True)
class StudyDefaults:
    """Recommended study settings for a benchmark problem."""

    n0_optimize: int
    budget_optimize: int
    contour_budgets: tuple[int, ...]
    contour_levels: tuple[float, ...]
    contour_eps: float
    rcc_delta: float
    n0_predict: int
    predict_budgets: tuple[int, ...]


@dataclass(frozen=True)
class TestProblem:
    """Deterministic test function on a mixed design space."""

    name: str
    space: DesignSpace
    batch: Callable[[np.ndarray, np.ndarray], np.ndarray]
    known_min: float
    known_max: float
    defaults: StudyDefaults

    def evaluate(self, w: MixedPoint) -> float:
        X = np.asarray(w.x, dtype=float).reshape(1, self.space.p)
        Z = np.asarray(w.z, dtype=np.int64).reshape(1, self.space.q)
        return float(self.batch(X, Z)[0])

    def evaluate_points(self, points: Sequence[MixedPoint]) -> np.ndarray:
        X = np.array([w.x for w in points], dtype=float).reshape(len(points), self.space.p)
        Z = np.array([w.z for w in points], dtype=np.int64).reshape(len(points), self.space.q)
        return self.batch(X, Z)


def _example1_batch(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    x = X[:, 0]
    z = Z[:, 0]
    return np.select(
        [z == 1, z == 2, z == 3],
        [2.0 - np.cos(2 * np.pi * x), 1.0 - np.cos(4 * np.pi * x), np.cos(2 * np.pi * x)],
    )


def _example2_batch(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    x1, x2 = X[:, 0], X[:, 1]
    z1, z2 = Z[:, 0], Z[:, 1]
    i_part = np.select(
        [z1 == 1, z1 == 2, z1 == 3],
        [x1 + x2**2, x1**2 + x2, x1**2 + x2**2],
    )
    g_part = np.select(
        [z2 == 1, z2 == 2, z2 == 3],
        [
            np.cos(x1) + np.cos(2 * x2),
            np.cos(2 * x1) + np.cos(x2),
            np.cos(2 * x1) + np.cos(2 * x2),
        ],
    )
    return i_part + g_part


def _example3_batch(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    z1, z2, z3 = Z[:, 0], Z[:, 1], Z[:, 2]
    i_part = np.select(
        [z1 == 1, z1 == 2, z1 == 3],
        [x1 + x2**2 + x3, x1**2 + x2 + x3, x3 + x1 + x2**2],
    )
    g_part = np.select(
        [z2 == 1, z2 == 2, z2 == 3],
        [
            np.cos(x1) + np.cos(2 * x2) + np.cos(x3),
            np.cos(x1) + np.cos(2 * x2) + np.cos(x3),
            np.cos(2 * x1) + np.cos(x2) + np.cos(x3),
        ],
    )
    h_part = np.select(
        [z3 == 1, z3 == 2, z3 == 3],
        [
            np.sin(x1) + np.sin(2 * x2) + np.sin(x3),
            np.sin(x1) + np.sin(2 * x2) + np.sin(x3),
            np.sin(2 * x1) + np.sin(x2) + np.sin(x3),
        ],
    )
    return i_part + g_part + h_part


def example1() -> TestProblem:
    """One quantitative input, one 3-level factor; cosine branches with
    minimum -1 at (x, z) = (0.5, 3) and maximum 3 at (0.5, 1)."""
    return TestProblem(
        "example1",
        DesignSpace(1, (3,)),
        _example1_batch,
        known_min=-1.0,
        known_max=3.0,
        defaults=StudyDefaults(
            n0_optimize=9,
            budget_optimize=15,
            contour_budgets=(11, 13, 15, 17, 19),
            contour_levels=(-0.7, 1.2, 2.2),
            contour_eps=0.05,
            rcc_delta=0.05,
            n0_predict=10,
            predict_budgets=(15, 21),
        ),
    )


def example2() -> TestProblem:
    """Two quantitative inputs, two 3-level factors; polynomial plus cosine
    branches on the unit square."""
    return TestProblem(
        "example2",
        DesignSpace(2, (3, 3)),
        _example2_batch,
        known_min=1.1584042098941065,
        known_max=2.6681270974517277,
        defaults=StudyDefaults(
            n0_optimize=9,
            budget_optimize=18,
            contour_budgets=(27, 36, 45, 54, 63),
            contour_levels=(1.2, 1.7, 2.1),
            contour_eps=0.05,
            rcc_delta=0.02,
            n0_predict=20,
            predict_budgets=(30, 40),
        ),
    )


def example3() -> TestProblem:
    """Three quantitative inputs, three 3-level factors; polynomial plus
    cosine plus sine branches with minimum exactly 3 at x = 0."""
    return TestProblem(
        "example3",
        DesignSpace(3, (3, 3, 3)),
        _example3_batch,
        known_min=3.0,
        known_max=6.659804880536445,
        defaults=StudyDefaults(
            n0_optimize=9,
            budget_optimize=18,
            contour_budgets=(27, 36, 45, 54, 63),
            contour_levels=(4.5, 5.5, 6.5),
            contour_eps=0.1,
            rcc_delta=0.1,
            n0_predict=30,
            predict_budgets=(80, 100),
        ),
    )


PROBLEMS: dict[str, Callable[[], TestProblem]] = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
}


def get_problem(name: str) -> TestProblem:
    if name not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; expected one of {sorted(PROBLEMS)}")
    return PROBLEMS[name]()


def grid_extrema(problem: TestProblem, per_dim: int) -> tuple[float, float]:
    """Brute-force extrema over a full grid (per_dim points per quantitative
    dimension, every level combination); the audit for known_min/known_max."""
    space = problem.space
    if space.p:
        axes = [np.linspace(0.0, 1.0, per_dim)] * space.p
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([m.ravel() for m in mesh], axis=1)
    else:
        X = np.zeros((1, 0))
    lo, hi = math.inf, -math.inf
    for combo in enumerate_level_combinations(space):
        Z = np.tile(np.asarray(combo, dtype=np.int64), (X.shape[0], 1))
        y = problem.batch(X, Z)
        lo = min(lo, float(y.min()))
        hi = max(hi, float(y.max()))
    return lo, hi


# --- metrics ----------------------------------------------------------------


def running_best_min(values: Sequence[float]) -> np.ndarray:
    """Running minimum of a response sequence."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("need at least one response")
    return np.minimum.accumulate(arr)


def rmse(model, points: Sequence[MixedPoint], y_true: np.ndarray) -> float:
    """Root mean squared prediction error over a test set."""
    if len(points) == 0:
        raise ValueError("test set is empty")
    mean, _ = model.predict_batch(points)
    return float(np.sqrt(np.mean((mean - np.asarray(y_true)) ** 2)))


def make_probe_pool(
    problem: TestProblem, rng: RngStream, n_per_combo: int = 200
) -> tuple[list[MixedPoint], np.ndarray]:
    """Probe pool with true responses: an LHD per level combination."""
    points = candidate_set(problem.space, n_per_combo, rng)
    return points, problem.evaluate_points(points)


def contour_mean_abs_error(
    model,
    problem: TestProblem,
    a: float,
    eps: float,
    pool: tuple[list[MixedPoint], np.ndarray],
) -> float | None:
    """Mean absolute prediction error over the probe points whose true
    response lies within eps of the contour level; None when no probe
    qualifies (eps too small for this response surface)."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    points, y_true = pool
    mask = np.abs(y_true - a) <= eps
    if not mask.any():
        return None
    sel = [w for w, keep in zip(points, mask) if keep]
    mean, _ = model.predict_batch(sel)
    return float(np.mean(np.abs(y_true[mask] - mean)))


def recommend_minimizer(model, candidates: Sequence[MixedPoint]) -> MixedPoint:
    """Candidate with the smallest predictive mean: the model's recommended
    solution of the minimization problem."""
    mean, _ = model.predict_batch(candidates)
    return candidates[int(np.argmin(mean))]


# --- replication harness ----------------------------------------------------


def method_stream(base_seed: int, method: str, rep: int) -> RngStream:
    """Seed of a (method, replication) cell: a pure function of the base
    seed, the method name, and the replication index, so shuffling the
    method list cannot change any cell."""
    return RngStream(base_seed, (zlib.crc32(method.encode()), rep))


def _pool_stream(base_seed: int, purpose: str, rep: int) -> RngStream:
    return RngStream(base_seed, (zlib.crc32(purpose.encode()), rep))


@dataclass
class CellOutcome:
    method: str
    rep: int
    metrics: dict[int, float]
    fit_seconds: dict[int, float]
    select_seconds: dict[int, float]
    failure: str | None = None


@dataclass
class ReplicationReport:
    """Aggregated study results: per (method, budget) the per-replication
    metric values plus timing means."""

    study: str
    problem: str
    methods: tuple[str, ...]
    budgets: tuple[int, ...]
    replications: int
    seed: int
    n0: int = 0
    values: dict[tuple[str, int], list[float]] = field(default_factory=dict)
    fit_seconds: dict[tuple[str, int], list[float]] = field(default_factory=dict)
    select_seconds: dict[tuple[str, int], list[float]] = field(default_factory=dict)
    failures: dict[str, list[str]] = field(default_factory=dict)

    def _vals(self, method: str, budget: int) -> np.ndarray:
        return np.asarray(self.values[(method, budget)], dtype=float)

    def mean(self, method: str, budget: int) -> float:
        return float(np.nanmean(self._vals(method, budget)))

    def sd(self, method: str, budget: int) -> float:
        return float(np.nanstd(self._vals(method, budget), ddof=1))

    def median(self, method: str, budget: int) -> float:
        return float(np.nanmedian(self._vals(method, budget)))

    def relative_efficiency(self, method: str, budget: int) -> float | None:
        """One-shot mean divided by the method's mean (larger is better);
        None when either side is unavailable."""
        if ("one-shot", budget) not in self.values:
            return None
        base = self.mean("one-shot", budget)
        own = self.mean(method, budget)
        if not np.isfinite(base) or not np.isfinite(own) or own == 0:
            return None
        return float(base / own)

    def time_means(self, method: str, budget: int) -> tuple[float, float]:
        fit_s = float(np.nanmean(np.asarray(self.fit_seconds[(method, budget)])))
        sel_s = float(np.nanmean(np.asarray(self.select_seconds[(method, budget)])))
        return fit_s, sel_s

    def add(self, outcome: CellOutcome) -> None:
        for budget in self.budgets:
            key = (outcome.method, budget)
            self.values.setdefault(key, []).append(outcome.metrics.get(budget, math.nan))
            self.fit_seconds.setdefault(key, []).append(outcome.fit_seconds.get(budget, math.nan))
            self.select_seconds.setdefault(key, []).append(
                outcome.select_seconds.get(budget, math.nan)
            )
        if outcome.failure:
            self.failures.setdefault(outcome.method, []).append(outcome.failure)


@dataclass(frozen=True)
class StudyPlan:
    """Everything needed to run one (method, replication) cell; picklable so
    cells can fan out to worker processes."""

    study: str
    problem: str
    methods: tuple[str, ...]
    budgets: tuple[int, ...]
    n0: int
    replications: int
    seed: int
    n_per_combo: int = 100
    contour_a: float | None = None
    contour_eps: float | None = None
    rcc_delta: float | None = None
    fit_options: FitOptions = FitOptions()
    method_params: tuple[tuple[str, tuple[tuple[str, float | str], ...]], ...] = ()
    trace_dir: str | None = None

    def params_for(self, method: str) -> dict:
        for name, kv in self.method_params:
            if name == method:
                return dict(kv)
        return {}


def _spec_for(plan: StudyPlan, method: str) -> AcquisitionSpec:
    over = plan.params_for(method)
    common = dict(
        rho=float(over["rho"]) if "rho" in over else None,
        alpha_conf=float(over.get("alpha_conf", 0.05)),
        alpha_eps=float(over.get("alpha_eps", 1.96)),
    )
    if method in ("ei", "lcb", "ucb", "arsd"):
        return AcquisitionSpec(kind=method, **common)
    if method in ("ei-c", "ecl", "lcb-c", "arsd-c"):
        return AcquisitionSpec(kind=method, a=plan.contour_a, **common)
    if method == "rcc":
        return AcquisitionSpec(kind="rcc", a=plan.contour_a, delta=plan.rcc_delta, **common)
    if method == "ei-mc":
        return AcquisitionSpec(
            kind="ei-mc",
            n_contours=int(over.get("n_contours", 10)),
            probe_per_dim=int(over.get("probe_per_dim", 1000)),
            **common,
        )
    if method == "ei-sc":
        return AcquisitionSpec(kind="ei-sc", **common)
    raise ValueError(f"method {method!r} has no acquisition spec")


def _run_cell(plan: StudyPlan, method: str, rep: int) -> CellOutcome:
    problem = get_problem(plan.problem)
    stream = method_stream(plan.seed, method, rep)
    out = CellOutcome(method, rep, {}, {}, {})
    try:
        if plan.study == "optimize":
            _optimize_cell(plan, problem, method, rep, stream, out)
        elif plan.study == "contour":
            _contour_cell(plan, problem, method, rep, stream, out)
        elif plan.study == "predict":
            _predict_cell(plan, problem, method, rep, stream, out)
        else:
            raise ValueError(f"unknown study kind {plan.study!r}")
    except FitFailure as err:
        out.failure = f"{method} rep {rep}: {err}"
    return out


def _dump_trace(plan: StudyPlan, method: str, rep: int, trace: Trace) -> None:
    if plan.trace_dir is None:
        return
    path = f"{plan.trace_dir}/{method.replace('-', '_')}_rep{rep:03d}.csv"
    trace.to_csv(path)


def _oneshot_models(plan: StudyPlan, problem: TestProblem, stream: RngStream):
    for budget in plan.budgets:
        result = run_oneshot(
            problem.evaluate, problem.space, budget, stream.child(budget), plan.fit_options
        )
        yield budget, result


def _optimize_cell(plan, problem, method, rep, stream, out) -> None:
    if method == "one-shot":
        # The non-adaptive counterpart of the added-points incumbent: the
        # best true response among budget - n0 randomly chosen points of the
        # full-budget balanced design (the remaining n0 play the role of the
        # adaptive methods' initial stock).
        for budget, result in _oneshot_models(plan, problem, stream):
            extra = budget - plan.n0
            if extra < 1:
                out.metrics[budget] = math.nan
            else:
                gen = stream.child(budget, 9).generator()
                subset = gen.choice(budget, size=extra, replace=False)
                out.metrics[budget] = float(min(result.dataset.responses[i] for i in subset))
            out.fit_seconds[budget] = result.fit_seconds
            out.select_seconds[budget] = 0.0
        return
    if method == "hybrid":
        over = plan.params_for(method)
        config = HybridConfig(
            problem.space,
            plan.n0,
            max(plan.budgets),
            stream,
            n_per_combo=plan.n_per_combo,
            fit_options=plan.fit_options,
            uct_c=float(over.get("uct_c", DEFAULT_UCT_C)),
            alpha_rank=float(over.get("alpha_rank", 0.5)),
            alpha_schedule=str(over.get("alpha_schedule", "fixed")),
        )
        trace = run_hybrid(problem.evaluate, config)
    else:
        config = LoopConfig(
            problem.space,
            plan.n0,
            max(plan.budgets),
            _spec_for(plan, method),
            stream,
            n_per_combo=plan.n_per_combo,
            fit_options=plan.fit_options,
        )
        trace = run_adaptive(problem.evaluate, config)
    _dump_trace(plan, method, rep, trace)
    for budget in plan.budgets:
        if budget > plan.n0:
            out.metrics[budget] = trace.best_min_at(budget)
        else:
            out.metrics[budget] = math.nan
        out.fit_seconds[budget], out.select_seconds[budget] = trace.cumulative_seconds_at(budget)


def _contour_cell(plan, problem, method, rep, stream, out) -> None:
    pool = make_probe_pool(problem, _pool_stream(plan.seed, "mc0-pool", rep))

    def metric(model) -> float:
        value = contour_mean_abs_error(model, problem, plan.contour_a, plan.contour_eps, pool)
        return math.nan if value is None else value

    if method == "one-shot":
        for budget, result in _oneshot_models(plan, problem, stream):
            out.metrics[budget] = metric(result.model)
            out.fit_seconds[budget] = result.fit_seconds
            out.select_seconds[budget] = 0.0
        return
    config = LoopConfig(
        problem.space,
        plan.n0,
        max(plan.budgets),
        _spec_for(plan, method),
        stream,
        n_per_combo=plan.n_per_combo,
        fit_options=plan.fit_options,
    )
    runner = run_rcc if method == "rcc" else run_adaptive
    kwargs = {"eps_report": plan.contour_eps} if method == "rcc" else {}
    trace = runner(
        problem.evaluate,
        config,
        checkpoint_sizes=plan.budgets,
        checkpoint_fn=metric,
        **kwargs,
    )
    _dump_trace(plan, method, rep, trace)
    for budget in plan.budgets:
        out.metrics[budget] = trace.checkpoints.get(budget, math.nan)
        out.fit_seconds[budget], out.select_seconds[budget] = trace.cumulative_seconds_at(budget)


def _predict_cell(plan, problem, method, rep, stream, out) -> None:
    test_points, test_y = make_probe_pool(problem, _pool_stream(plan.seed, "test-pool", rep))

    def metric(model) -> float:
        return rmse(model, test_points, test_y)

    if method == "one-shot":
        for budget, result in _oneshot_models(plan, problem, stream):
            out.metrics[budget] = metric(result.model)
            out.fit_seconds[budget] = result.fit_seconds
            out.select_seconds[budget] = 0.0
        return
    config = LoopConfig(
        problem.space,
        plan.n0,
        max(plan.budgets),
        _spec_for(plan, method),
        stream,
        n_per_combo=plan.n_per_combo,
        fit_options=plan.fit_options,
    )
    trace = run_adaptive(
        problem.evaluate, config, checkpoint_sizes=plan.budgets, checkpoint_fn=metric
    )
    _dump_trace(plan, method, rep, trace)
    for budget in plan.budgets:
        out.metrics[budget] = trace.checkpoints.get(budget, math.nan)
        out.fit_seconds[budget], out.select_seconds[budget] = trace.cumulative_seconds_at(budget)


def _cell_worker(args: tuple[StudyPlan, str, int]) -> CellOutcome:
    return _run_cell(*args)


def replicate(plan: StudyPlan, n_jobs: int = 1) -> ReplicationReport:
    """Run every (method, replication) cell of a study and aggregate.

    Cell seeds derive from (seed, method, replication) only, so the report
    is invariant to method order and to the degree of parallelism.
    Per-cell failures are recorded, not fatal.
    """
    _validate_plan(plan)
    report = ReplicationReport(
        plan.study, plan.problem, plan.methods, plan.budgets, plan.replications, plan.seed, plan.n0
    )
    jobs = [(plan, method, rep) for method in plan.methods for rep in range(plan.replications)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_cell_worker, jobs, chunksize=1))
    else:
        outcomes = [_run_cell(*job) for job in jobs]
    for outcome in sorted(outcomes, key=lambda o: (plan.methods.index(o.method), o.rep)):
        report.add(outcome)
    return report


_STUDY_METHODS = {
    "optimize": OPTIMIZE_METHODS,
    "contour": CONTOUR_METHODS,
    "predict": PREDICT_METHODS,
}


def _validate_plan(plan: StudyPlan) -> None:
    if plan.study not in _STUDY_METHODS:
        raise ValueError(f"unknown study kind {plan.study!r}")
    allowed = _STUDY_METHODS[plan.study]
    for m in plan.methods:
        if m not in allowed:
            raise ValueError(f"method {m!r} not valid for study {plan.study!r} (allowed: {allowed})")
    if plan.replications < 1:
        raise ValueError("replications must be >= 1")
    if not plan.budgets:
        raise ValueError("need at least one budget")
    if any(b < plan.n0 for b in plan.budgets):
        raise ValueError("budgets must not be smaller than n0")
    if plan.study == "contour":
        if plan.contour_a is None or plan.contour_eps is None or plan.rcc_delta is None:
            raise ValueError("contour studies need contour_a, contour_eps, and rcc_delta")
    get_problem(plan.problem)
