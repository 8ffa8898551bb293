"""Gaussian-process emulators for mixed quantitative/qualitative inputs.

The main surrogate is an additive GP whose covariance between inputs
w_i = (x_i, z_i) and w_j = (x_j, z_j) is

    phi(w_i, w_j) = var0 * exp(-sum_k theta0[k] (x_ik - x_jk)^2)
                  + sum_h 1{z_ih = z_jh = l} var_h * exp(-sum_k theta_h[k,l] (x_ik - x_jk)^2)

a shared Gaussian-kernel process plus one extra process per qualitative
factor, switched on only when both points share that factor's level.  With
q = 0 this is ordinary kriging with a Gaussian correlation.

The constant mean is profiled out of the likelihood in closed form; the
remaining parameters are estimated by multi-start bounded L-BFGS-B on the
log scale with an analytic gradient.  A second, multiplicative kernel
(Gaussian correlation on x times an exchangeable correlation per factor)
is provided for surrogate pools that want structural alternatives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize

from .design_space import Dataset, DesignSpace, MixedPoint, require_valid
from .sampling import RngStream


class FactorizationFailure(RuntimeError):
    """The jittered Gram matrix is not numerically positive definite."""


class FitFailure(RuntimeError):
    """Every restart of the likelihood optimization failed to factorize."""


@dataclass(frozen=True)
class Posterior:
    """Predictive distribution at one input: mean and standard deviation."""

    mean: float
    sd: float

    def __post_init__(self):
        if self.sd < 0:
            raise ValueError("posterior sd must be >= 0")


@dataclass(frozen=True, eq=False)
class EzGPParams:
    """Parameters of the additive mixed-input covariance.

    theta_factor[h] has shape (p, m_h): one positive rate per quantitative
    dimension and per level of factor h.  The total count is
    2 + p + q + p * sum(m_h), counting the mean, all variances, and all
    correlation rates.
    """

    mu: float
    var0: float
    theta0: np.ndarray
    var_factor: np.ndarray = field(default_factory=lambda: np.empty(0))
    theta_factor: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=float))
        object.__setattr__(self, "var_factor", np.asarray(self.var_factor, dtype=float))
        object.__setattr__(
            self, "theta_factor", tuple(np.asarray(t, dtype=float) for t in self.theta_factor)
        )
        if self.var0 <= 0 or np.any(self.var_factor <= 0):
            raise ValueError("variances must be strictly positive")
        if np.any(self.theta0 <= 0) or any(np.any(t <= 0) for t in self.theta_factor):
            raise ValueError("correlation rates must be strictly positive")
        if len(self.var_factor) != len(self.theta_factor):
            raise ValueError("one variance and one rate matrix per factor")

    @property
    def p(self) -> int:
        return len(self.theta0)

    @property
    def q(self) -> int:
        return len(self.var_factor)

    @property
    def total_var(self) -> float:
        return float(self.var0 + self.var_factor.sum())

    @property
    def count(self) -> int:
        levels = sum(t.shape[1] for t in self.theta_factor)
        return 2 + self.p + self.q + self.p * levels

    def validate_for(self, space: DesignSpace) -> None:
        if self.p != space.p or self.q != space.q:
            raise ValueError(
                f"parameter shapes (p={self.p}, q={self.q}) do not match space "
                f"(p={space.p}, q={space.q})"
            )
        for h, (t, m) in enumerate(zip(self.theta_factor, space.factors)):
            if t.shape != (space.p, m):
                raise ValueError(f"theta_factor[{h}] must have shape {(space.p, m)}, got {t.shape}")
        expected = 2 + space.p + space.q + space.p * sum(space.factors)
        if self.count != expected:
            raise ValueError(f"parameter count {self.count} != expected {expected}")


def _as_arrays(space: DesignSpace, points: Sequence[MixedPoint]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([w.x for w in points], dtype=float).reshape(len(points), space.p)
    Z = np.array([w.z for w in points], dtype=np.int64).reshape(len(points), space.q)
    return X, Z


def cross_covariance(
    params: EzGPParams,
    X1: np.ndarray,
    Z1: np.ndarray,
    X2: np.ndarray,
    Z2: np.ndarray,
) -> np.ndarray:
    """Covariance matrix between two point sets under the additive kernel
    (no jitter)."""
    n1, n2 = X1.shape[0], X2.shape[0]
    D = (X1[:, None, :] - X2[None, :, :]) ** 2  # (n1, n2, p)
    R = params.var0 * np.exp(-(D @ params.theta0)) if params.p else np.full((n1, n2), params.var0)
    for h in range(params.q):
        var_h = params.var_factor[h]
        z1h, z2h = Z1[:, h], Z2[:, h]
        for lev in range(1, params.theta_factor[h].shape[1] + 1):
            mask = (z1h == lev)[:, None] & (z2h == lev)[None, :]
            if not mask.any():
                continue
            if params.p:
                comp = var_h * np.exp(-(D @ params.theta_factor[h][:, lev - 1]))
            else:
                comp = np.full((n1, n2), var_h)
            R = np.where(mask, R + comp, R)
    return R


def kernel_phi(space: DesignSpace, w_i: MixedPoint, w_j: MixedPoint, params: EzGPParams) -> float:
    """Covariance between two points under the additive kernel."""
    require_valid(space, w_i)
    require_valid(space, w_j)
    params.validate_for(space)
    X1, Z1 = _as_arrays(space, [w_i])
    X2, Z2 = _as_arrays(space, [w_j])
    return float(cross_covariance(params, X1, Z1, X2, Z2)[0, 0])


def gram_matrix(
    data: Dataset, params: EzGPParams, jitter: float
) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix of the training set plus ``jitter`` on the diagonal, and
    its lower-triangular Cholesky factor.

    Raises :class:`FactorizationFailure` if the jittered matrix is not
    numerically positive definite.
    """
    if data.n < 1:
        raise ValueError("dataset must be nonempty")
    params.validate_for(data.space)
    phi = cross_covariance(params, data.X, data.Z, data.X, data.Z)
    phi = phi + jitter * np.eye(data.n)
    return phi, _chol(phi)


def _chol(phi: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(phi)):
        raise FactorizationFailure("non-finite covariance entries")
    try:
        return np.linalg.cholesky(phi)
    except np.linalg.LinAlgError as err:
        raise FactorizationFailure(str(err)) from err


def _profiled_terms(L: np.ndarray, y: np.ndarray):
    """Log-determinant, profiled mean, and solves shared by the likelihood
    and the predictive equations."""
    n = len(y)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    ones = np.ones(n)
    phiinv_y = cho_solve((L, True), y)
    phiinv_one = cho_solve((L, True), ones)
    s11 = float(ones @ phiinv_one)
    s1y = float(ones @ phiinv_y)
    syy = float(y @ phiinv_y)
    mu = s1y / s11
    nll = logdet + syy - s1y * s1y / s11
    alpha = phiinv_y - mu * phiinv_one  # = Phi^{-1} (y - mu 1)
    return logdet, mu, nll, alpha, phiinv_one, s11


def profiled_mean(y: np.ndarray, chol: np.ndarray) -> float:
    """Generalized-least-squares estimate of the constant mean,
    (1' Phi^-1 1)^-1 1' Phi^-1 y, from a Cholesky factor of Phi."""
    _, mu, _, _, _, _ = _profiled_terms(chol, np.asarray(y, dtype=float))
    return mu


def neg_log_likelihood(data: Dataset, params: EzGPParams, jitter: float) -> float:
    """Profiled negative log-likelihood (constants dropped):
    log|Phi| + y'Phi^-1 y - (1'Phi^-1 1)^-1 (1'Phi^-1 y)^2.

    The mean in ``params`` is ignored (it is profiled out).  Returns +inf
    if the jittered Gram matrix cannot be factorized.
    """
    try:
        _, L = gram_matrix(data, params, jitter)
    except FactorizationFailure:
        return math.inf
    _, _, nll, _, _, _ = _profiled_terms(L, data.y)
    return float(nll)


@dataclass(frozen=True)
class FitOptions:
    """Controls for maximum-likelihood fitting.

    Bounds are applied on the log scale; variance bounds are relative to
    the response variance.  ``jitter_rel`` scales the total prior variance
    and escalates by 10x up to ``jitter_cap_rel`` when factorization fails.
    """

    restarts: int = 5
    max_iters: int = 200
    theta_bounds: tuple[float, float] = (1e-3, 1e3)
    var_bounds_rel: tuple[float, float] = (1e-6, 1e2)
    jitter_rel: float = 1e-8
    jitter_cap_rel: float = 1e-4
    tol: float = 1e-9

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("need at least one restart")
        if self.jitter_rel <= 0:
            raise ValueError("jitter must be positive")


class _FittedGP:
    """Shared predictive machinery for fitted GP surrogates."""

    def __init__(self, dataset, jitter, chol, nll, mu, alpha, phiinv_one, s11, total_var, rng_label):
        self.dataset = dataset
        self.space = dataset.space
        self.jitter = float(jitter)
        self.chol = chol
        self.nll = float(nll)
        self.mu_hat = float(mu)
        self.alpha = alpha
        self.phiinv_one = phiinv_one
        self.one_phiinv_one = float(s11)
        self.total_prior_var = float(total_var)
        self.rng_label = rng_label

    @property
    def n(self) -> int:
        return self.dataset.n

    def _cross(self, Xc: np.ndarray, Zc: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_arrays(self, Xc: np.ndarray, Zc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predictive means and standard deviations for a batch of inputs
        given as coordinate arrays."""
        r0 = self._cross(Xc, Zc)  # (n, m)
        mean = self.mu_hat + r0.T @ self.alpha
        v = cho_solve((self.chol, True), r0)
        quad = np.einsum("ij,ij->j", r0, v)
        t = self.phiinv_one @ r0
        var = self.total_prior_var - quad + (1.0 - t) ** 2 / self.one_phiinv_one
        sd = np.sqrt(np.clip(var, 0.0, None))
        return mean, sd

    def predict_batch(self, points: Sequence[MixedPoint]) -> tuple[np.ndarray, np.ndarray]:
        Xc, Zc = _as_arrays(self.space, points)
        return self.predict_arrays(Xc, Zc)

    def predict(self, w: MixedPoint) -> Posterior:
        require_valid(self.space, w)
        mean, sd = self.predict_batch([w])
        return Posterior(float(mean[0]), float(sd[0]))


class FittedEzGP(_FittedGP):
    """Additive mixed-input GP with cached Gram factorization.

    Produced by :func:`fit` or :meth:`from_params`; immutable by
    convention, safe to share across threads for prediction.
    """

    def __init__(self, dataset, params: EzGPParams, jitter: float, rng_label: str = ""):
        params.validate_for(dataset.space)
        phi, L = gram_matrix(dataset, params, jitter)
        _, mu_prof, nll, _, phiinv_one, s11 = _profiled_terms(L, dataset.y)
        resid = dataset.y - params.mu
        alpha = cho_solve((L, True), resid)
        super().__init__(
            dataset, jitter, L, nll, params.mu, alpha, phiinv_one, s11, params.total_var, rng_label
        )
        self.params = params

    @classmethod
    def from_params(
        cls, dataset: Dataset, params: EzGPParams, jitter: float, profile_mean: bool = False
    ) -> "FittedEzGP":
        """Build a model from explicit parameters without optimization.

        With ``profile_mean`` the stored mean is replaced by its
        generalized-least-squares estimate.
        """
        if profile_mean:
            _, L = gram_matrix(dataset, params, jitter)
            mu = profiled_mean(dataset.y, L)
            params = EzGPParams(mu, params.var0, params.theta0, params.var_factor, params.theta_factor)
        return cls(dataset, params, jitter)

    def _cross(self, Xc: np.ndarray, Zc: np.ndarray) -> np.ndarray:
        return cross_covariance(self.params, self.dataset.X, self.dataset.Z, Xc, Zc)

    def to_json(self) -> str:
        """Audit record: every parameter, the jitter, the achieved
        objective, the fit stream, and the training data."""
        doc = {
            "format": "almix-ezgp v1",
            "space": {"p": self.space.p, "factors": list(self.space.factors)},
            "params": {
                "mu": self.params.mu,
                "var0": self.params.var0,
                "theta0": self.params.theta0.tolist(),
                "var_factor": self.params.var_factor.tolist(),
                "theta_factor": [t.tolist() for t in self.params.theta_factor],
            },
            "jitter": self.jitter,
            "nll": self.nll,
            "rng": self.rng_label,
            "data": {
                "points": [{"x": list(w.x), "z": list(w.z)} for w in self.dataset.points],
                "responses": list(self.dataset.responses),
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FittedEzGP":
        doc = json.loads(text)
        if doc.get("format") != "almix-ezgp v1":
            raise ValueError(f"unsupported model format {doc.get('format')!r}")
        space = DesignSpace(doc["space"]["p"], tuple(doc["space"]["factors"]))
        pts = tuple(MixedPoint(tuple(d["x"]), tuple(d["z"])) for d in doc["data"]["points"])
        dataset = Dataset(space, pts, tuple(doc["data"]["responses"]))
        pr = doc["params"]
        params = EzGPParams(
            pr["mu"],
            pr["var0"],
            np.asarray(pr["theta0"]),
            np.asarray(pr["var_factor"]),
            tuple(np.asarray(t) for t in pr["theta_factor"]),
        )
        model = cls(dataset, params, doc["jitter"], rng_label=doc.get("rng", ""))
        model.nll = float(doc["nll"])
        return model


def _multistart(nll_grad, lo, hi, opts: FitOptions, gen: np.random.Generator):
    """Run bounded L-BFGS-B from log-uniform start points; return the best
    finite optimum or raise :class:`FitFailure`."""
    dim = len(lo)
    starts = gen.uniform(lo, hi, size=(opts.restarts, dim))
    best_x, best_f = None, math.inf
    bounds = list(zip(lo, hi))
    for r in range(opts.restarts):
        res = minimize(
            nll_grad,
            starts[r],
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": opts.max_iters, "ftol": opts.tol},
        )
        if np.isfinite(res.fun) and res.fun < best_f:
            best_f, best_x = float(res.fun), np.asarray(res.x)
    if best_x is None:
        raise FitFailure("all restarts failed to factorize the Gram matrix")
    return best_x, best_f


def _jitter_schedule(opts: FitOptions):
    jr = opts.jitter_rel
    while jr <= opts.jitter_cap_rel:
        yield jr
        jr *= 10.0


def fit(data: Dataset, opts: FitOptions = FitOptions(), rng: RngStream = RngStream(0)) -> FittedEzGP:
    """Maximum-likelihood fit of the additive mixed-input GP.

    Deterministic given ``rng``: start points are drawn log-uniformly over
    the bound box from the stream, and the best optimize result over all
    restarts is kept.
    """
    space = data.space
    if data.n < 1:
        raise ValueError("cannot fit on an empty dataset")
    p, q = space.p, space.q
    y = data.y
    var_y = float(np.var(y))
    scale = var_y if var_y > 1e-12 else 1.0

    D_stack = (data.X[:, None, :] - data.X[None, :, :]) ** 2  # (n, n, p)
    masks = [
        [(data.Z[:, h] == lev)[:, None] & (data.Z[:, h] == lev)[None, :] for lev in range(1, m + 1)]
        for h, m in enumerate(space.factors)
    ]
    eye = np.eye(data.n)

    n_var = 1 + q
    n_theta0 = p
    dim = n_var + n_theta0 + p * sum(space.factors)
    lo = np.empty(dim)
    hi = np.empty(dim)
    lo[:n_var] = math.log(opts.var_bounds_rel[0] * scale)
    hi[:n_var] = math.log(opts.var_bounds_rel[1] * scale)
    lo[n_var:] = math.log(opts.theta_bounds[0])
    hi[n_var:] = math.log(opts.theta_bounds[1])

    def unpack(xlog):
        vals = np.exp(xlog)
        var0 = vals[0]
        var_f = vals[1 : 1 + q]
        theta0 = vals[n_var : n_var + p]
        thetas = []
        off = n_var + p
        for m in space.factors:
            thetas.append(vals[off : off + p * m].reshape(p, m))
            off += p * m
        return var0, var_f, theta0, thetas

    def components(var0, var_f, theta0, thetas):
        c0 = var0 * np.exp(-(D_stack @ theta0)) if p else np.full((data.n, data.n), var0)
        per_factor = []
        for h, m in enumerate(space.factors):
            levels = []
            for lev in range(m):
                mask = masks[h][lev]
                if mask.any():
                    if p:
                        comp = var_f[h] * np.exp(-(D_stack @ thetas[h][:, lev])) * mask
                    else:
                        comp = var_f[h] * mask
                else:
                    comp = None
                levels.append(comp)
            per_factor.append(levels)
        return c0, per_factor

    def nll_grad(xlog):
        var0, var_f, theta0, thetas = unpack(xlog)
        total = var0 + var_f.sum()
        c0, per_factor = components(var0, var_f, theta0, thetas)
        phi0 = c0.copy()
        for levels in per_factor:
            for comp in levels:
                if comp is not None:
                    phi0 += comp
        L = None
        for jr in _jitter_schedule(opts):
            try:
                L = _chol(phi0 + jr * total * eye)
                break
            except FactorizationFailure:
                continue
        if L is None:
            return math.inf, np.zeros(dim)

        _, _, nll, alpha, _, _ = _profiled_terms(L, y)
        kinv = cho_solve((L, True), eye)
        S = kinv - np.outer(alpha, alpha)
        tr_s = float(np.trace(S))

        grad = np.empty(dim)
        grad[0] = float(np.sum(S * c0)) + jr * var0 * tr_s
        for h in range(q):
            acc = jr * var_f[h] * tr_s
            for comp in per_factor[h]:
                if comp is not None:
                    acc += float(np.sum(S * comp))
            grad[1 + h] = acc
        if p:
            T0 = S * c0
            grad[n_var : n_var + p] = -theta0 * np.einsum("ij,ijk->k", T0, D_stack)
            off = n_var + p
            for h, m in enumerate(space.factors):
                block = np.zeros((p, m))
                for lev in range(m):
                    comp = per_factor[h][lev]
                    if comp is not None:
                        Tl = S * comp
                        block[:, lev] = -thetas[h][:, lev] * np.einsum("ij,ijk->k", Tl, D_stack)
                grad[off : off + p * m] = block.reshape(-1)
                off += p * m
        return float(nll), grad

    best_x, _ = _multistart(nll_grad, lo, hi, opts, rng.generator())

    var0, var_f, theta0, thetas = unpack(best_x)
    total = var0 + var_f.sum()
    jitter_abs = None
    for jr in _jitter_schedule(opts):
        try:
            probe = EzGPParams(0.0, var0, theta0, var_f, tuple(thetas))
            _, L = gram_matrix(data, probe, jr * total)
            jitter_abs = jr * total
            break
        except FactorizationFailure:
            continue
    if jitter_abs is None:
        raise FitFailure("optimum parameters failed to factorize")
    mu = profiled_mean(y, L)
    params = EzGPParams(mu, var0, theta0, var_f, tuple(thetas))
    return FittedEzGP(data, params, jitter_abs, rng_label=rng.label())


# --- multiplicative (exchangeable) kernel, used in surrogate pools ---------


@dataclass(frozen=True, eq=False)
class ProductKernelParams:
    """Gaussian correlation on x times, per factor, an exchangeable
    correlation: 1 when levels match, rho_h in (0, 1) otherwise."""

    mu: float
    var: float
    theta: np.ndarray
    rho: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        if self.var <= 0 or np.any(self.theta <= 0):
            raise ValueError("variance and rates must be strictly positive")
        if np.any(self.rho <= 0) or np.any(self.rho >= 1):
            raise ValueError("level correlations must lie in (0, 1)")


def product_cross_covariance(params, X1, Z1, X2, Z2) -> np.ndarray:
    n1, n2 = X1.shape[0], X2.shape[0]
    if X1.shape[1]:
        D = (X1[:, None, :] - X2[None, :, :]) ** 2
        R = params.var * np.exp(-(D @ params.theta))
    else:
        R = np.full((n1, n2), params.var)
    for h in range(len(params.rho)):
        neq = Z1[:, h][:, None] != Z2[:, h][None, :]
        R = R * np.where(neq, params.rho[h], 1.0)
    return R


class FittedProductGP(_FittedGP):
    """Kriging surrogate with the multiplicative mixed-input kernel."""

    def __init__(self, dataset, params: ProductKernelParams, jitter: float, rng_label: str = ""):
        phi = product_cross_covariance(params, dataset.X, dataset.Z, dataset.X, dataset.Z)
        L = _chol(phi + jitter * np.eye(dataset.n))
        _, mu_prof, nll, _, phiinv_one, s11 = _profiled_terms(L, dataset.y)
        resid = dataset.y - params.mu
        alpha = cho_solve((L, True), resid)
        super().__init__(
            dataset, jitter, L, nll, params.mu, alpha, phiinv_one, s11, params.var, rng_label
        )
        self.params = params

    def _cross(self, Xc, Zc):
        return product_cross_covariance(self.params, self.dataset.X, self.dataset.Z, Xc, Zc)


def fit_product(
    data: Dataset, opts: FitOptions = FitOptions(), rng: RngStream = RngStream(0)
) -> FittedProductGP:
    """Maximum-likelihood fit of the multiplicative-kernel surrogate."""
    space = data.space
    p, q = space.p, space.q
    y = data.y
    var_y = float(np.var(y))
    scale = var_y if var_y > 1e-12 else 1.0

    D_stack = (data.X[:, None, :] - data.X[None, :, :]) ** 2
    neq_masks = [data.Z[:, h][:, None] != data.Z[:, h][None, :] for h in range(q)]
    eye = np.eye(data.n)

    dim = 1 + p + q
    lo = np.empty(dim)
    hi = np.empty(dim)
    lo[0], hi[0] = math.log(opts.var_bounds_rel[0] * scale), math.log(opts.var_bounds_rel[1] * scale)
    lo[1 : 1 + p] = math.log(opts.theta_bounds[0])
    hi[1 : 1 + p] = math.log(opts.theta_bounds[1])
    lo[1 + p :] = math.log(1e-6)
    hi[1 + p :] = math.log(1.0 - 1e-6)

    def unpack(xlog):
        vals = np.exp(xlog)
        return vals[0], vals[1 : 1 + p], vals[1 + p :]

    def nll_grad(xlog):
        var, theta, rho = unpack(xlog)
        phi0 = var * np.exp(-(D_stack @ theta)) if p else np.full((data.n, data.n), var)
        for h in range(q):
            phi0 = phi0 * np.where(neq_masks[h], rho[h], 1.0)
        L = None
        for jr in _jitter_schedule(opts):
            try:
                L = _chol(phi0 + jr * var * eye)
                break
            except FactorizationFailure:
                continue
        if L is None:
            return math.inf, np.zeros(dim)
        _, _, nll, alpha, _, _ = _profiled_terms(L, y)
        kinv = cho_solve((L, True), eye)
        S = kinv - np.outer(alpha, alpha)
        grad = np.empty(dim)
        grad[0] = float(np.sum(S * phi0)) + jr * var * float(np.trace(S))
        if p:
            T = S * phi0
            grad[1 : 1 + p] = -theta * np.einsum("ij,ijk->k", T, D_stack)
        for h in range(q):
            grad[1 + p + h] = float(np.sum(S * phi0 * neq_masks[h]))
        return float(nll), grad

    best_x, _ = _multistart(nll_grad, lo, hi, opts, rng.generator())

    var, theta, rho = unpack(best_x)
    phi0 = None
    jitter_abs = None
    params0 = ProductKernelParams(0.0, var, theta, rho)
    for jr in _jitter_schedule(opts):
        phi = product_cross_covariance(params0, data.X, data.Z, data.X, data.Z) + jr * var * eye
        try:
            L = _chol(phi)
            jitter_abs = jr * var
            break
        except FactorizationFailure:
            continue
    if jitter_abs is None:
        raise FitFailure("optimum parameters failed to factorize")
    mu = profiled_mean(y, L)
    params = ProductKernelParams(mu, var, theta, rho)
    return FittedProductGP(data, params, jitter_abs, rng_label=rng.label())
