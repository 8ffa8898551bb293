"""Point-selection criteria over finite candidate pools.

Optimization: expected improvement (EI), lower/upper confidence bounds
(LCB/UCB), and adaptive-region sequential design (ARSD).  Contour
estimation at level ``a``: contour EI (EI-C), the entropy-based contour
locator (ECL), the region-based cooperative criterion (RCC), and the
contour variants LCB-C and ARSD-C.  Prediction: multi-contour EI (EI-MC)
and single-contour EI with an automatic level (EI-SC).

Every criterion is a pure function of predictive means and standard
deviations; selection over a pool is deterministic, with ties broken by
the lowest candidate index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, xlogy

from .design_space import MixedPoint

KINDS = ("ei", "lcb", "ucb", "arsd", "ei-c", "ecl", "rcc", "arsd-c", "lcb-c", "ei-mc", "ei-sc")
CONTOUR_KINDS = frozenset({"ei-c", "ecl", "rcc", "arsd-c", "lcb-c"})

REGION_WHOLE = "whole"
REGION_ADAPTIVE = "arsd-region"
REGION_A1 = "A1"
REGION_A2 = "A2"

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _npdf(u):
    return np.exp(-0.5 * np.square(u)) / _SQRT_2PI


def _scalar_in(*vals) -> bool:
    return all(np.ndim(v) == 0 for v in vals)


def _ret(value, scalar: bool):
    return float(value) if scalar else value


def ei_min(mean, sd, f_min):
    """Expected improvement below the incumbent minimum ``f_min`` under a
    normal predictive distribution.  Zero-uncertainty inputs degrade to the
    plain improvement max(0, f_min - mean)."""
    scalar = _scalar_in(mean, sd)
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (f_min - mean) / sd
        val = (f_min - mean) * ndtr(u) + sd * _npdf(u)
    out = np.where(sd > 0, val, np.maximum(f_min - mean, 0.0))
    return _ret(np.maximum(out, 0.0), scalar)


def lcb(mean, sd, rho: float):
    """Lower confidence bound mean - rho * sd (minimization)."""
    if rho < 0:
        raise ValueError("rho must be >= 0")
    scalar = _scalar_in(mean, sd)
    return _ret(np.asarray(mean, dtype=float) - rho * np.asarray(sd, dtype=float), scalar)


def ucb(mean, sd, rho: float):
    """Upper confidence bound mean + rho * sd (maximization)."""
    if rho < 0:
        raise ValueError("rho must be >= 0")
    scalar = _scalar_in(mean, sd)
    return _ret(np.asarray(mean, dtype=float) + rho * np.asarray(sd, dtype=float), scalar)


def confidence_width(n: int, n_combinations: int, alpha: float) -> float:
    """Confidence-width schedule 2 log(pi^2 n^2 M / (6 alpha)) used by the
    adaptive-region criteria; increasing in n and M, decreasing in alpha."""
    if n < 1 or n_combinations < 1:
        raise ValueError("n and the combination count must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return 2.0 * math.log(math.pi**2 * n**2 * n_combinations / (6.0 * alpha))


def ei_contour(mean, sd, a: float, alpha_eps: float):
    """Expected improvement toward the contour level ``a`` with tolerance
    eps = alpha_eps * sd.

    Closed form of E[eps^2 - min((Y - a)^2, eps^2)] for Y normal with the
    given mean and sd; zero when sd = 0.
    """
    if alpha_eps <= 0:
        raise ValueError("alpha_eps must be > 0")
    scalar = _scalar_in(mean, sd)
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    eps = alpha_eps * sd
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = (a - mean - eps) / sd
        u2 = (a - mean + eps) / sd
        dphi = ndtr(u2) - ndtr(u1)
        p1, p2 = _npdf(u1), _npdf(u2)
        val = (
            (eps**2 - (mean - a) ** 2 - sd**2) * dphi
            + sd**2 * (u2 * p2 - u1 * p1)
            + 2.0 * (mean - a) * sd * (p2 - p1)
        )
    out = np.where(sd > 0, val, 0.0)
    return _ret(np.maximum(out, 0.0), scalar)


def ecl(mean, sd, a: float):
    """Entropy-based contour locator: binary entropy (nats) of the
    probability that the response exceeds ``a``.

    Symmetric in the sign of mean - a, bounded by log 2, and zero when
    sd = 0 (the exceedance probability is then degenerate).
    """
    scalar = _scalar_in(mean, sd)
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (mean - a) / sd
        prob = ndtr(u)
        ent = -(xlogy(prob, prob) + xlogy(1.0 - prob, 1.0 - prob))
    out = np.where(sd > 0, ent, 0.0)
    return _ret(out, scalar)


def ei_multi_contour(mean, sd, levels, alpha_eps: float):
    """Sum of contour-EI values over several levels (strictly increasing)."""
    levels = tuple(float(a) for a in levels)
    if len(levels) < 1:
        raise ValueError("need at least one contour level")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("contour levels must be strictly increasing")
    scalar = _scalar_in(mean, sd)
    out = np.zeros(np.broadcast(np.asarray(mean), np.asarray(sd)).shape)
    for a in levels:
        out = out + ei_contour(mean, sd, a, alpha_eps)
    return _ret(out, scalar)


# --- selection over candidate pools ----------------------------------------


@dataclass(frozen=True)
class Selection:
    """Chosen candidate with its criterion score and region diagnostic."""

    index: int
    point: MixedPoint
    score: float
    region: str


def _first_argmax(values: np.ndarray) -> int:
    return int(np.argmax(values))


def _first_argmin(values: np.ndarray) -> int:
    return int(np.argmin(values))


def pick_ei(mean, sd, f_min: float):
    scores = ei_min(mean, sd, f_min)
    i = _first_argmax(scores)
    return i, float(scores[i]), REGION_WHOLE


def pick_lcb(mean, sd, rho: float):
    scores = lcb(mean, sd, rho)
    i = _first_argmin(scores)
    return i, float(scores[i]), REGION_WHOLE


def pick_ucb(mean, sd, rho: float):
    scores = ucb(mean, sd, rho)
    i = _first_argmax(scores)
    return i, float(scores[i]), REGION_WHOLE


def pick_arsd(mean, sd, n_obs: int, n_combinations: int, rho: float, alpha_conf: float):
    """LCB minimization restricted to candidates whose lower bound beats the
    best upper bound; the region always contains the upper-bound minimizer,
    so it is never empty."""
    width = math.sqrt(confidence_width(n_obs, n_combinations, alpha_conf))
    ub_min = float(np.min(mean + width * sd))
    in_region = (mean - width * sd) <= ub_min
    scores = lcb(mean, sd, rho)
    i = _first_argmin(np.where(in_region, scores, np.inf))
    return i, float(scores[i]), REGION_ADAPTIVE


def pick_ei_contour(mean, sd, a: float, alpha_eps: float):
    scores = ei_contour(mean, sd, a, alpha_eps)
    i = _first_argmax(scores)
    return i, float(scores[i]), REGION_WHOLE


def pick_ecl(mean, sd, a: float):
    scores = ecl(mean, sd, a)
    i = _first_argmax(scores)
    return i, float(scores[i]), REGION_WHOLE


def pick_ei_mc(mean, sd, levels, alpha_eps: float):
    scores = ei_multi_contour(mean, sd, levels, alpha_eps)
    i = _first_argmax(scores)
    return i, float(scores[i]), REGION_WHOLE


def pick_ei_sc(mean, sd, alpha_eps: float):
    """Automatic single-contour EI: take the predictive mean at the
    highest-variance candidate as the level, then maximize contour EI."""
    i_var = _first_argmax(np.asarray(sd))
    level = float(np.asarray(mean)[i_var])
    scores = ei_contour(mean, sd, level, alpha_eps)
    i = _first_argmax(scores)
    return i, float(scores[i]), REGION_WHOLE


def pick_lcb_c(mean, sd, a: float, rho: float):
    scores = np.abs(np.asarray(mean) - a) - rho * np.asarray(sd)
    i = _first_argmin(scores)
    return i, float(scores[i]), REGION_WHOLE


def pick_arsd_c(mean, sd, n_obs: int, n_combinations: int, a: float, rho: float, alpha_conf: float):
    """ARSD with the distance to the contour level in place of the mean."""
    width = math.sqrt(confidence_width(n_obs, n_combinations, alpha_conf))
    dev = np.abs(np.asarray(mean) - a)
    sd = np.asarray(sd)
    ub_min = float(np.min(dev + width * sd))
    in_region = (dev - width * sd) <= ub_min
    scores = dev - rho * sd
    i = _first_argmin(np.where(in_region, scores, np.inf))
    return i, float(scores[i]), REGION_ADAPTIVE


def pick_rcc(mean, sd, n_obs: int, n_combinations: int, a: float, alpha_conf: float, delta: float):
    """Region-based cooperative criterion.

    Candidates split into A1 (confidently off-contour) and A2 (possibly
    on-contour).  A1 proposes its highest-sd member among those whose lower
    bound beats the pool's best upper bound; A2 proposes its ECL maximizer.
    The proposal with the larger sd / max(delta, |mean - a|) wins; an empty
    group forfeits.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    width = math.sqrt(confidence_width(n_obs, n_combinations, alpha_conf))
    dev = np.abs(mean - a)
    lower = dev - width * sd
    upper = dev + width * sd
    in_a1 = lower > 0
    ub_min = float(np.min(upper))

    cand1 = None
    if in_a1.any():
        shortlisted = in_a1 & (lower <= ub_min)
        # once the pool's best upper bound collapses the shortlist can be
        # empty while A1 is not; the group's proposal then falls back to its
        # underlying objective, the highest-sd confidently-off member
        pick_from = shortlisted if shortlisted.any() else in_a1
        cand1 = _first_argmax(np.where(pick_from, sd, -np.inf))
    cand2 = None
    if (~in_a1).any():
        cand2 = _first_argmax(np.where(~in_a1, ecl(mean, sd, a), -np.inf))

    ratio = sd / np.maximum(delta, dev)
    if cand1 is None and cand2 is None:
        # cannot happen: when A2 is empty the upper-bound minimizer is in A1
        # and beats ub_min, so the A1 shortlist is nonempty
        raise RuntimeError("both candidate groups empty")
    if cand2 is None or (cand1 is not None and ratio[cand1] > ratio[cand2]):
        return cand1, float(ratio[cand1]), REGION_A1
    return cand2, float(ratio[cand2]), REGION_A2


# --- model-level wrappers ---------------------------------------------------


def _stats(model, candidates):
    if not candidates:
        raise ValueError("candidate pool is empty")
    return model.predict_batch(candidates)


def _wrap(candidates, picked) -> Selection:
    i, score, region = picked
    return Selection(i, candidates[i], score, region)


def ei_select(model, candidates, f_min: float | None = None) -> Selection:
    mean, sd = _stats(model, candidates)
    if f_min is None:
        f_min = float(np.min(model.dataset.y))
    return _wrap(candidates, pick_ei(mean, sd, f_min))


def lcb_select(model, candidates, rho: float = 2.0) -> Selection:
    mean, sd = _stats(model, candidates)
    return _wrap(candidates, pick_lcb(mean, sd, rho))


def arsd_select(model, candidates, rho: float = 2.0, alpha_conf: float = 0.05) -> Selection:
    mean, sd = _stats(model, candidates)
    return _wrap(
        candidates, pick_arsd(mean, sd, model.n, model.space.n_combinations, rho, alpha_conf)
    )


def ei_sc_select(model, candidates, alpha_eps: float = 1.96) -> Selection:
    mean, sd = _stats(model, candidates)
    return _wrap(candidates, pick_ei_sc(mean, sd, alpha_eps))


def rcc_select(
    model, candidates, a: float, alpha_conf: float = 0.05, delta: float = 0.05
) -> Selection:
    mean, sd = _stats(model, candidates)
    return _wrap(
        candidates, pick_rcc(mean, sd, model.n, model.space.n_combinations, a, alpha_conf, delta)
    )


def lcb_c_select(model, candidates, a: float, rho: float = 0.5) -> Selection:
    mean, sd = _stats(model, candidates)
    return _wrap(candidates, pick_lcb_c(mean, sd, a, rho))


def arsd_c_select(
    model, candidates, a: float, rho: float = 0.5, alpha_conf: float = 0.05
) -> Selection:
    mean, sd = _stats(model, candidates)
    return _wrap(
        candidates,
        pick_arsd_c(mean, sd, model.n, model.space.n_combinations, a, rho, alpha_conf),
    )


# --- acquisition configuration ----------------------------------------------


DEFAULT_RHO = {"lcb": 2.0, "ucb": 2.0, "arsd": 2.0, "lcb-c": 0.5, "arsd-c": 0.5}


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which criterion drives an adaptive run, with its tuning constants.

    ``a`` is required for contour criteria; ``delta`` is the RCC tie-break
    floor; ``levels`` fixes the EI-MC contour set explicitly, otherwise
    ``n_contours`` equally spaced levels are estimated each iteration from
    a probe design of ``probe_per_dim * p`` points.  ``rho`` left unset
    resolves per criterion: 2 for the optimization bounds, 0.5 for the
    contour variants (which need a stronger exploitation tilt to settle on
    the contour within small budgets).
    """

    kind: str
    a: float | None = None
    rho: float | None = None
    alpha_conf: float = 0.05
    alpha_eps: float = 1.96
    delta: float = 0.05
    levels: tuple[float, ...] | None = None
    n_contours: int = 10
    probe_per_dim: int = 1000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown criterion {self.kind!r}; expected one of {KINDS}")
        if self.kind in CONTOUR_KINDS and self.a is None:
            raise ValueError(f"criterion {self.kind!r} needs a contour level a")
        if self.rho is not None and self.rho < 0:
            raise ValueError("rho must be >= 0")
        if not 0 < self.alpha_conf < 1:
            raise ValueError("alpha_conf must lie in (0, 1)")
        if self.alpha_eps <= 0:
            raise ValueError("alpha_eps must be > 0")
        if self.kind == "rcc" and self.delta <= 0:
            raise ValueError("rcc needs delta > 0")
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
            if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
                raise ValueError("levels must be strictly increasing")
        if self.n_contours < 1:
            raise ValueError("n_contours must be >= 1")

    @property
    def resolved_rho(self) -> float:
        if self.rho is not None:
            return self.rho
        return DEFAULT_RHO.get(self.kind, 2.0)
