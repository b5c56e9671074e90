import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcbt.camera import CameraParams
from qcbt.coincidence import CoincidencePairs
from qcbt.events import TAG_BACKGROUND, make_events
from qcbt.optics import InvalidParameter
from qcbt.source import Plane
from qcbt.tracking import (EstimationError, FitError, Mode, TrialStatistics, aperture_center, centroid,
                           centroid_variance_prediction, correlation_centroid, digital_aperture,
                           displacement_estimate, displacement_variance_prediction, efficiency_bound,
                           expected_product, fisher_crb, fit_gaussian_width, histogram_fit, uncertainty_product)


def laser_shifts(rng, sigma, n, m):
    """Centroid shift between two n-photon frames of a Gaussian beam, m trials."""
    a = rng.normal(0, sigma, (m, n)).mean(axis=1)
    b = rng.normal(0, sigma, (m, n)).mean(axis=1)
    return b - a


def spdc_shifts(rng, delta, n, m):
    """Shift of the mean pair-correlation coordinate (width delta per pair)."""
    return laser_shifts(rng, delta, n, m)


def test_centroid_basics():
    assert centroid([[1.0, 2.0], [3.0, 4.0]]).tolist() == [2.0, 3.0]
    with pytest.raises(EstimationError):
        centroid(np.zeros((0, 2)))


def test_variance_predictions():
    assert centroid_variance_prediction(52.7, 5000) == pytest.approx(52.7 ** 2 / 5000)
    assert math.sqrt(displacement_variance_prediction(52.7, 5000)) == pytest.approx(1.054, abs=5e-4)
    assert math.sqrt(displacement_variance_prediction(42.0, 5000)) == pytest.approx(0.840, abs=5e-4)
    assert math.sqrt(displacement_variance_prediction(52.7, 1)) / math.sqrt(
        displacement_variance_prediction(52.7, 4)) == pytest.approx(2.0)
    with pytest.raises(InvalidParameter):
        centroid_variance_prediction(0.0, 10)
    with pytest.raises(InvalidParameter):
        displacement_variance_prediction(1.0, 0)


def test_laser_and_spdc_displacement_spread():
    rng = np.random.default_rng(1)
    m = 2000
    assert laser_shifts(rng, 52.7, 5000, m).std(ddof=1) == pytest.approx(1.054, rel=0.05)
    assert spdc_shifts(rng, 42.0, 5000, m).std(ddof=1) == pytest.approx(0.840, rel=0.05)


@pytest.mark.parametrize("sigma", [52.7, 42.0])
def test_variance_scales_inverse_n(sigma):
    rng = np.random.default_rng(2)
    scaled = [n * laser_shifts(rng, sigma, n, 3000).var(ddof=1) for n in (10, 100, 1000)]
    for v in scaled:
        assert v == pytest.approx(2 * sigma ** 2, rel=0.08)


def test_product_ordering():
    rng = np.random.default_rng(3)
    n, m = 2000, 1000
    laser = TrialStatistics(laser_shifts(rng, 52.7, n, m), n), TrialStatistics(laser_shifts(rng, 1.41e-2, n, m), n)
    spdc = TrialStatistics(spdc_shifts(rng, 42.0, n, m), n), TrialStatistics(spdc_shifts(rng, 1.06e-3, n, m), n)
    pl = uncertainty_product(*laser)
    ps = uncertainty_product(*spdc)
    assert ps.product < 1 / n < pl.product
    assert pl.scaled == pytest.approx(expected_product(52.7, 1.41e-2, 1), rel=0.1)
    assert ps.scaled == pytest.approx(expected_product(42.0, 1.06e-3, 1), rel=0.1)
    with pytest.raises(EstimationError):
        uncertainty_product(laser[0], TrialStatistics(laser_shifts(rng, 1.0, 10, 5), 10))


def test_trial_statistics_needs_two():
    with pytest.raises(EstimationError):
        TrialStatistics(np.array([1.0]), 5)
    t = TrialStatistics(np.array([[1.0, 0.0], [3.0, 2.0]]), 5)
    assert t.mean.tolist() == [2.0, 1.0] and t.trials == 2


def test_correlation_centroid_modes():
    cam = CameraParams()
    sig = make_events([0, 1], [10, 12], [5, 5], Plane.POSITION, 0)
    idl = make_events([0, 1], [138, 138], [5, 5], Plane.POSITION, 1)
    pairs = CoincidencePairs(sig, idl, np.zeros(2, np.int64), Plane.POSITION)
    c = correlation_centroid(pairs, cam, Mode.CORRELATION_DIFFERENCE)
    assert c.tolist() == pytest.approx([55.0, 0.0])
    with pytest.raises(EstimationError):
        correlation_centroid(pairs, cam, Mode.CORRELATION_SUM)
    with pytest.raises(EstimationError):
        correlation_centroid(pairs, cam, Mode.CLASSICAL_CENTROID)
    with pytest.raises(EstimationError):
        displacement_estimate(pairs, pairs, Mode.CLASSICAL_CENTROID, cam)
    est = displacement_estimate(pairs, pairs, "difference", cam)
    assert est.value.tolist() == [0.0, 0.0] and est.n == 2


def test_classical_mode_rejects_mixed_planes():
    cam = CameraParams()
    ev = make_events([0, 1], [1, 2], [1, 1], [Plane.POSITION, Plane.MOMENTUM], 0)
    with pytest.raises(EstimationError):
        displacement_estimate(ev, ev, Mode.CLASSICAL_CENTROID, cam)


def test_fisher_crb():
    info, var = fisher_crb(52.7, 5000)
    assert info == pytest.approx(1 / 52.7 ** 2) and var == pytest.approx(52.7 ** 2 / 5000)
    rng = np.random.default_rng(4)
    means = rng.normal(0, 52.7, (2000, 5000)).mean(axis=1)
    assert means.var(ddof=1) / var == pytest.approx(1.0, rel=0.08)


def test_fit_recovers_binned_once_width():
    rng = np.random.default_rng(5)
    p = 55.0
    x = rng.normal(0, 42.0, 2_000_000)
    q = (np.floor(x / p) + 0.5) * p  # pixel centres
    fit = histogram_fit(q, p, center=0.5 * p)
    assert fit.width == pytest.approx(math.sqrt(42.0 ** 2 + p ** 2 / 12), rel=0.02)
    assert abs(fit.center) < 1.0


def test_fit_errors():
    x = np.linspace(-10, 10, 21)
    with pytest.raises(FitError):
        fit_gaussian_width(x, np.ones_like(x) * 50)
    y = np.zeros_like(x)
    y[9:12] = [5, 10, 5]
    with pytest.raises(FitError) as e:
        fit_gaussian_width(x, y)
    assert "5 non-empty bins" in str(e.value)


def test_digital_aperture():
    rng = np.random.default_rng(6)
    beam = rng.normal(0, 50.0, (20000, 2)) + [30.0, -10.0]
    bg = rng.uniform(-3000, 3000, (20000, 2))
    xy = np.vstack([beam, bg])
    tags = np.r_[np.zeros(len(beam), int), np.full(len(bg), TAG_BACKGROUND)]
    full = digital_aperture(xy, (0, 0), math.inf, tags)
    assert full.mask.all()
    r = digital_aperture(xy, (30.0, -10.0), 125.0, tags)
    sel = xy[r.mask]
    se = 50.0 / math.sqrt(r.n_in)
    assert abs(sel[:, 0].mean() - 30.0) < 5 * se and abs(sel[:, 1].mean() + 10.0) < 5 * se
    assert r.sbr > full.sbr
    est = digital_aperture(xy, (30.0, -10.0), 125.0)  # annulus background estimate
    assert est.background_in == pytest.approx(r.background_in, rel=0.5)
    with pytest.raises(InvalidParameter):
        digital_aperture(xy, (0, 0), 0.0)


def test_aperture_center_is_off_lattice():
    rng = np.random.default_rng(7)
    p = 55.0
    xy = (np.floor(rng.normal(12.0, 52.7, (50000, 2)) / p) + 0.5) * p
    c = aperture_center(xy, 150.0)
    assert c[0] == pytest.approx(12.0, abs=2.0)
    with pytest.raises(EstimationError):
        aperture_center(np.zeros((0, 2)), 1.0)


def test_efficiency_bound():
    b = efficiency_bound(53.8, 1.06e-3, 1.0, 1)
    assert b.break_even == pytest.approx(0.114, abs=1e-3)
    assert round(b.break_even, 2) == 0.11
    b = efficiency_bound(53.8, 1.06e-3, 0.02, 1000)
    assert b.value * 1000 == pytest.approx(5.7, abs=0.01)
    with pytest.raises(InvalidParameter):
        efficiency_bound(42.0, 1e-3, 0.0, 10)
    with pytest.raises(InvalidParameter):
        efficiency_bound(42.0, 1e-3, 0.5, 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0, 200.0), st.floats(1e-4, 1e-2), st.floats(0.01, 1.0), st.integers(1, 10 ** 6))
def test_efficiency_bound_property(dr, dk, eps, n):
    b = efficiency_bound(dr, dk, eps, n)
    # beats 1/n_s exactly when eps exceeds the break-even efficiency
    assert (b.value < 1 / n) == (eps > b.break_even) or math.isclose(eps, b.break_even, rel_tol=1e-9)
