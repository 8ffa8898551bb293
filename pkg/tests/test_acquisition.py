import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from almix import acquisition as acq
from almix.acquisition import (
    AcquisitionSpec,
    confidence_width,
    ecl,
    ei_contour,
    ei_min,
    ei_multi_contour,
    lcb,
    ucb,
)
from almix.design_space import Dataset, DesignSpace, MixedPoint
from almix.emulator import EzGPParams, FittedEzGP
from almix.sampling import RngStream, candidate_set

finite_means = st.floats(-50, 50)
sds = st.floats(0, 20)


# --- closed forms -----------------------------------------------------------


def test_ei_min_values():
    assert ei_min(0.0, 1.0, 0.0) == pytest.approx(0.3989422804014327)
    assert ei_min(1.0, 0.0, 0.0) == 0.0
    # frozen from a 1e6-draw Monte Carlo mean of max(0, 1 - N(0,1))
    assert ei_min(0.0, 1.0, 1.0) == pytest.approx(1.0833154705876864)


def test_lcb_ucb_values():
    assert lcb(1.0, 0.5, 0.0) == 1.0
    assert lcb(1.0, 0.0, 3.0) == ucb(1.0, 0.0, 3.0) == 1.0
    assert lcb(1.0, 0.5, 2.0) == pytest.approx(0.0)
    assert ucb(1.0, 0.5, 2.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        lcb(0.0, 1.0, -1.0)


def test_confidence_width_values():
    assert confidence_width(9, 3, 0.05) == pytest.approx(17.97298803873057)
    assert confidence_width(1, 1, math.pi**2 / 6) == pytest.approx(0.0, abs=1e-12)
    assert confidence_width(10, 3, 0.05) > confidence_width(9, 3, 0.05)
    assert confidence_width(9, 4, 0.05) > confidence_width(9, 3, 0.05)
    assert confidence_width(9, 3, 0.1) < confidence_width(9, 3, 0.05)


def test_ei_contour_values():
    # mean on the level with unit sd and alpha_eps=1: closed form is 2*pdf(1)
    assert ei_contour(0.0, 1.0, 0.0, 1.0) == pytest.approx(0.48394144903828673)
    assert ei_contour(5.0, 0.0, 1.0, 1.96) == 0.0
    with pytest.raises(ValueError):
        ei_contour(0.0, 1.0, 0.0, 0.0)


@given(finite_means, st.floats(1e-3, 20), st.floats(0, 30), st.floats(0.1, 3))
def test_ei_contour_symmetric_in_mean_offset(a, sd, t, alpha_eps):
    up = ei_contour(a + t, sd, a, alpha_eps)
    down = ei_contour(a - t, sd, a, alpha_eps)
    assert up == pytest.approx(down, rel=1e-9, abs=1e-12)


def test_ecl_values():
    assert ecl(2.0, 1.0, 2.0) == pytest.approx(math.log(2.0))
    # binary entropy at p = Phi(1), frozen from scipy
    assert ecl(3.0, 1.0, 2.0) == pytest.approx(0.4374332409271191)
    assert ecl(1.0, 0.0, 2.0) == 0.0
    assert ecl(2.0, 0.0, 2.0) == 0.0


@given(finite_means, sds, finite_means)
def test_ecl_bounds_and_symmetry(mean, sd, a):
    val = ecl(mean, sd, a)
    assert 0.0 <= val <= math.log(2.0) + 1e-12
    assert val == pytest.approx(ecl(2 * a - mean, sd, a), rel=1e-9, abs=1e-12)


@given(finite_means, sds, finite_means, st.floats(0.1, 3))
def test_nonnegativity(mean, sd, other, alpha_eps):
    assert ei_min(mean, sd, other) >= 0
    assert ei_contour(mean, sd, other, alpha_eps) >= 0
    assert ei_multi_contour(mean, sd, (other, other + 1.0), alpha_eps) >= 0


def test_ei_multi_contour_reductions():
    assert ei_multi_contour(0.3, 1.2, (0.5,), 1.5) == pytest.approx(
        ei_contour(0.3, 1.2, 0.5, 1.5)
    )
    assert ei_multi_contour(0.3, 0.0, (0.5, 1.0), 1.5) == 0.0
    # symmetric pair around the mean doubles the single-offset value
    t = 0.7
    pair = ei_multi_contour(0.0, 1.0, (-t, t), 1.96)
    assert pair == pytest.approx(2 * ei_contour(t, 1.0, 0.0, 1.96))
    with pytest.raises(ValueError):
        ei_multi_contour(0.0, 1.0, (1.0, 1.0), 1.0)
    with pytest.raises(ValueError):
        ei_multi_contour(0.0, 1.0, (), 1.0)


def mc_mean_and_se(samples):
    return samples.mean(), samples.std() / math.sqrt(len(samples))


@pytest.mark.parametrize("case", range(6))
def test_monte_carlo_spot_checks(case):
    gen = np.random.default_rng(1000 + case)
    mean = float(gen.uniform(-2, 2))
    sd = float(gen.uniform(0.1, 2.0))
    a = float(gen.uniform(-2, 2))
    alpha_eps = float(gen.uniform(0.5, 2.5))
    draws = gen.normal(mean, sd, 200_000)

    got, se = mc_mean_and_se(np.maximum(a - draws, 0.0))
    assert ei_min(mean, sd, a) == pytest.approx(got, abs=5 * se + 1e-12)

    eps = alpha_eps * sd
    got, se = mc_mean_and_se(eps**2 - np.minimum((draws - a) ** 2, eps**2))
    assert ei_contour(mean, sd, a, alpha_eps) == pytest.approx(got, abs=5 * se + 1e-12)


# --- selection over pools ----------------------------------------------------


def test_pick_arsd_cases():
    i, score, region = acq.pick_arsd(np.array([1.0]), np.array([0.5]), 5, 3, 2.0, 0.05)
    assert i == 0 and region == "arsd-region"
    # zero sd everywhere: region is the set of mean-minimizers
    mean = np.array([3.0, 1.0, 2.0])
    i, score, _ = acq.pick_arsd(mean, np.zeros(3), 5, 3, 2.0, 0.05)
    assert i == 1 and score == 1.0


@given(
    st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 3)), min_size=1, max_size=40),
    st.integers(1, 50),
    st.integers(1, 27),
)
def test_arsd_region_contains_ub_minimizer(stats, n_obs, n_comb):
    mean = np.array([s[0] for s in stats])
    sd = np.array([s[1] for s in stats])
    width = math.sqrt(confidence_width(n_obs, n_comb, 0.05))
    ub_min_idx = int(np.argmin(mean + width * sd))
    in_region = (mean - width * sd) <= np.min(mean + width * sd)
    assert in_region[ub_min_idx]
    i, _, _ = acq.pick_arsd(mean, sd, n_obs, n_comb, 2.0, 0.05)
    assert in_region[i]


@given(
    st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 3)), min_size=1, max_size=40),
    st.floats(-4, 4),
)
def test_rcc_partition_is_exhaustive(stats, a):
    mean = np.array([s[0] for s in stats])
    sd = np.array([s[1] for s in stats])
    width = math.sqrt(confidence_width(7, 3, 0.05))
    dev = np.abs(mean - a)
    in_a1 = dev - width * sd > 0
    in_a2 = dev - width * sd <= 0
    assert np.all(in_a1 | in_a2)
    assert not np.any(in_a1 & in_a2)
    i, _, region = acq.pick_rcc(mean, sd, 7, 3, a, 0.05, 0.05)
    assert 0 <= i < len(mean)
    assert region in ("A1", "A2")


def test_rcc_all_in_a2_is_pure_ecl():
    mean = np.array([1.0, 1.02, 0.9])
    sd = np.array([0.5, 0.8, 0.2])
    a = 1.0
    i, _, region = acq.pick_rcc(mean, sd, 9, 3, a, 0.05, 0.05)
    assert region == "A2"
    assert i == int(np.argmax(ecl(mean, sd, a)))


def test_rcc_all_in_a1_equal_dev_prefers_max_sd():
    # deviations equal and far beyond the width: the shortlist keeps the
    # lower-bound minimizers, i.e. the largest-sd members
    mean = np.array([10.0, 10.0, 10.0])
    sd = np.array([0.01, 0.03, 0.02])
    i, _, region = acq.pick_rcc(mean, sd, 9, 3, 0.0, 0.05, 0.05)
    assert region == "A1"
    assert i == 1


def test_pick_lcb_c_cases():
    mean = np.array([0.5, 1.4, 3.0])
    sd = np.array([0.2, 0.2, 0.2])
    i, _, _ = acq.pick_lcb_c(mean, sd, 1.5, 0.0)
    assert i == 1
    i2, _, _ = acq.pick_lcb_c(mean, sd, 1.5, 2.0)
    assert i2 == i  # constant sd shifts every score equally


@given(st.floats(0.1, 100))
def test_lcb_c_scale_equivariance(c):
    mean = np.array([0.5, 1.4, 3.0, 1.9])
    sd = np.array([0.2, 0.05, 0.4, 0.3])
    a = 1.7
    base, _, _ = acq.pick_lcb_c(mean, sd, a, 0.5)
    scaled, _, _ = acq.pick_lcb_c(c * mean, c * sd, c * a, 0.5)
    assert scaled == base


def test_pick_arsd_c_cases():
    i, _, region = acq.pick_arsd_c(np.array([2.0]), np.array([0.1]), 5, 3, 1.0, 0.5, 0.05)
    assert i == 0 and region == "arsd-region"
    mean = np.array([3.0, 1.2, 0.4])
    i, _, _ = acq.pick_arsd_c(mean, np.zeros(3), 5, 3, 1.0, 0.5, 0.05)
    assert i == 1  # closest to the level when sd is identically zero


def test_pick_ei_sc_auto_level_and_ties():
    mean = np.array([4.0, 2.0])
    sd = np.array([1.0, 1.0])  # tie on sd: lowest index hosts the level
    i, score, _ = acq.pick_ei_sc(mean, sd, 1.96)
    # level = mean[0]; contour EI is symmetric, equal at both candidates;
    # the tie goes to the first index
    assert i == 0
    single = acq.pick_ei_sc(np.array([1.5]), np.array([0.3]), 1.0)
    assert single[0] == 0


def test_spec_validation():
    with pytest.raises(ValueError):
        AcquisitionSpec("nope")
    with pytest.raises(ValueError):
        AcquisitionSpec("rcc")  # missing a
    with pytest.raises(ValueError):
        AcquisitionSpec("rcc", a=1.0, delta=0.0)
    with pytest.raises(ValueError):
        AcquisitionSpec("ei", alpha_eps=0.0)
    with pytest.raises(ValueError):
        AcquisitionSpec("ei-mc", levels=(2.0, 1.0))
    spec = AcquisitionSpec("lcb-c", a=1.0)
    assert spec.resolved_rho == 0.5
    assert AcquisitionSpec("lcb").resolved_rho == 2.0


def test_model_level_selectors_return_pool_members():
    space = DesignSpace(1, (2,))
    pts = tuple(candidate_set(space, 4, RngStream(3)))
    data = Dataset(space, pts, tuple(w.x[0] + w.z[0] for w in pts))
    params = EzGPParams(0.0, 1.0, np.array([2.0]), np.array([1.0]), (np.full((1, 2), 2.0),))
    model = FittedEzGP.from_params(data, params, 1e-8, profile_mean=True)
    pool = candidate_set(space, 25, RngStream(8))
    for select, kwargs in [
        (acq.ei_select, {}),
        (acq.lcb_select, {}),
        (acq.arsd_select, {}),
        (acq.ei_sc_select, {}),
        (acq.rcc_select, {"a": 2.0}),
        (acq.lcb_c_select, {"a": 2.0}),
        (acq.arsd_c_select, {"a": 2.0}),
    ]:
        sel = select(model, pool, **kwargs)
        assert sel.point == pool[sel.index]
        assert sel.point in pool
