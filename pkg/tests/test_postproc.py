import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from fcstereo.core import CostVolume, DataError, DisparityMap, GuideImage, NumericError, ParameterError
from fcstereo.geodesic import affinity_from_sigmas
from fcstereo.postproc import (label_regions, plane_fit, seed_fields, subpixel, suppress_small_regions, upscale,
                               weighted_median)


def _guide(h, w, seed=0):
    return GuideImage(np.random.default_rng(seed).uniform(0, 255, (h, w, 3)))


def test_constants_are_fixed_points():
    g = _guide(9, 9)
    assert np.allclose(upscale(np.full((3, 3), 4.0), g, 4, 3.4, 3.4).values, 4.0, rtol=1e-12)
    c = np.full((9, 9), 4.0)
    assert np.array_equal(weighted_median(c, g).values, c)
    assert np.allclose(plane_fit(c).values, c, rtol=1e-14)
    assert np.array_equal(suppress_small_regions(c, 5).values, c)


def test_upscale_identity_and_oracle():
    g = _guide(9, 9, 1)
    s = np.random.default_rng(2).uniform(0, 10, (9, 9))
    assert np.array_equal(upscale(s, g, 1, 1.0, 1.0).values, s)
    sd = np.random.default_rng(3).uniform(0, 10, (3, 3))
    out = upscale(sd, g, 4, 3.4, 3.4).values
    s_in, msk = seed_fields(sd, (9, 9), 4)
    p = affinity_from_sigmas(3.4, 3.4)
    ref = oracles.filter_oracle(s_in, g.pixels, p.a, p.delta) / oracles.filter_oracle(msk, g.pixels, p.a, p.delta)
    assert np.allclose(out, ref, rtol=1e-10)
    assert np.allclose(out[::4, ::4], sd, atol=5.0)
    assert out.min() >= sd.min() - 1e-9 and out.max() <= sd.max() + 1e-9


def test_upscale_errors():
    g = _guide(9, 9)
    with pytest.raises(DataError):
        upscale(np.zeros((4, 4)), g, 4, 1, 1)
    with pytest.raises(ParameterError):
        upscale(np.zeros((3, 3)), g, 4, 0, 1)
    with pytest.raises(NumericError):
        upscale(np.zeros((3, 3)), g, 4, 0.01, 0.01)


def test_median_removes_outlier():
    s = np.full((7, 7), 5.0)
    s[3, 3] = 20.0
    out = weighted_median(s, GuideImage(np.full((7, 7, 3), 100.0)), rho_nocc=1)
    assert np.all(out.values == 5.0)


@pytest.mark.parametrize("variant", ["weight", "weight_times_value"])
def test_median_matches_oracle(variant):
    rng = np.random.default_rng(4)
    s = rng.integers(0, 6, (9, 9)).astype(float) + 1
    g = GuideImage(rng.uniform(90, 130, (9, 9, 3)))
    occ = rng.random((9, 9)) < 0.3
    out = weighted_median(s, g, occ, 1, 3, 10.0, variant).values
    ref = oracles.weighted_median_oracle(s, g.pixels, occ, 1, 3, 10.0, variant == "weight_times_value")
    assert np.array_equal(out, ref)


def test_median_errors():
    with pytest.raises(DataError):
        weighted_median(np.zeros((2, 2)), _guide(3, 3))
    with pytest.raises(ParameterError):
        weighted_median(np.zeros((3, 3)), _guide(3, 3), variant="mean")


def test_plane_fit_keeps_planes():
    y, x = np.mgrid[0:12, 0:14]
    s = 0.5 * x - 0.25 * y + 3
    assert np.allclose(plane_fit(s).values, s, rtol=1e-12)


def test_plane_fit_matches_oracle():
    s = np.random.default_rng(5).uniform(0, 6, (7, 8))
    assert np.allclose(plane_fit(s, 2.0, 0.5, 5).values, oracles.plane_fit_oracle(s, 2.0, 0.5, 5), rtol=1e-12)
    with pytest.raises(ParameterError):
        plane_fit(s, window=4)


def test_plane_fit_keeps_large_step():
    s = np.where(np.arange(30)[None, :] < 15, 2.0, 42.0) + np.zeros((10, 1))
    out = plane_fit(s).values
    far = np.abs(np.arange(30) - 14.5) > 2
    assert np.allclose(out[:, far], s[:, far], atol=1e-6)


def test_subpixel_examples():
    v = np.zeros((1, 1, 12))
    v[0, 0, 9:12] = (4.0, 1.0, 2.0)
    assert subpixel(np.array([[10.0]]), CostVolume(v)).values[0, 0] == pytest.approx(10.25)
    v[0, 0, 9:12] = (3.0, 1.0, 3.0)
    assert subpixel(np.array([[10.0]]), CostVolume(v)).values[0, 0] == 10.0
    flat = CostVolume(np.zeros((1, 1, 12)))
    assert subpixel(np.array([[10.0]]), flat).values[0, 0] == 10.0  # no curvature, no refinement
    assert subpixel(np.array([[0.0]]), CostVolume(v)).values[0, 0] == 0.0  # border label
    w = np.zeros((1, 1, 12))
    w[0, 0, 3:6] = (4.0, 1.0, 2.0)
    stepped = CostVolume(w, label_origin=2, label_step=2)
    assert subpixel(np.array([[10.0]]), stepped).values[0, 0] == pytest.approx(10.5)


@settings(max_examples=100, deadline=None)
@given(c=arrays(np.float64, (3, 4, 7), elements=st.floats(0, 10)), seed=st.integers(0, 2**31))
def test_subpixel_offset_bounded(c, seed):
    s = np.random.default_rng(seed).integers(0, 7, (3, 4)).astype(float)
    out = subpixel(s, CostVolume(c)).values
    assert np.all(np.abs(out - s) <= 0.5)


def test_suppress_island():
    s = np.full((6, 6), 3.0)
    s[2, 2:4] = 9.0
    out = suppress_small_regions(s, 3).values
    assert np.all(out == 3.0)


def test_suppress_two_islands_take_their_neighbours():
    s = np.zeros((6, 12))
    s[:, 6:] = 10.0
    s[2, 1] = 30.0
    s[3, 9] = -20.0
    lab, n = oracles.flood_components(s, 1)
    assert n == 4
    out = suppress_small_regions(s, 2).values
    assert out[2, 1] == 0.0 and out[3, 9] == 10.0
    assert np.array_equal(out[:, :6] == 0, np.ones((6, 6), bool))


def test_suppress_all_small_unchanged():
    s = np.arange(16, dtype=float).reshape(4, 4) * 3
    assert np.array_equal(suppress_small_regions(s, 5).values, s)


@settings(max_examples=60, deadline=None)
@given(s=arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.integers(0, 4).map(float)),
       tol=st.sampled_from([0.0, 1.0, 2.0]))
def test_regions_match_flood_fill(s, tol):
    lab, n = label_regions(s, tol)
    ref, nref = oracles.flood_components(s, tol)
    assert n == nref and np.array_equal(lab, ref)


@settings(max_examples=60, deadline=None)
@given(s=arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(2, 8)), elements=st.integers(0, 4).map(float)),
       area=st.integers(1, 6))
def test_suppress_leaves_no_mergeable_small_region(s, area):
    out = suppress_small_regions(DisparityMap(s), area).values
    lab, n = oracles.flood_components(s, 1)
    sizes = np.bincount(lab.ravel())
    big = sizes[lab] >= area
    assert np.array_equal(out[big], s[big])
