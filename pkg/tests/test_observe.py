import json
import math

import numpy as np
import pytest
from helpers import random_density
from hypothesis import given
from hypothesis import strategies as st

from mcpt.atomic import FieldVector
from mcpt.exceptions import DomainError
from mcpt.observe import (
    DEFAULT_EFFICIENCY,
    DetectionModel,
    ScanResult,
    calibrate_efficiency,
    dip_metrics,
    fluorescence_rate,
    scan_field,
    sensitivity,
)
from mcpt.solve import steady_state

Z = (0.0, 0.0, 1.0)


def rate_at(model, B, detection):
    rho = steady_state(model.liouvillian(FieldVector(0, 0, B)), model.initial_state())
    return fluorescence_rate(rho, detection, model)


def test_no_p_population_no_counts(paper_model):
    rho = paper_model.initial_state()
    for ch in ("455", "493"):
        assert fluorescence_rate(rho, DetectionModel(ch), paper_model) == 0.0


@given(st.integers(0, 2**32 - 1), st.sampled_from(["455", "493"]), st.floats(0, 1e4))
def test_fluorescence_bounds(paper_model, seed, channel, background):
    rho = random_density(np.random.default_rng(seed), 18)
    det = DetectionModel(channel, 0.5, background)
    upper, lower = det.terms
    top = det.efficiency * paper_model.data.partial_rate(upper, lower) + background
    assert background <= fluorescence_rate(rho, det, paper_model) <= top * (1 + 1e-12)


def test_detection_validation():
    for kwargs in ({"channel": "650"}, {"efficiency": 0.0}, {"efficiency": 1.5}, {"background": -1}, {"noise_variance": -1}):
        with pytest.raises(DomainError):
            DetectionModel(**kwargs)


def test_transparent_at_zero_field_493(paper_model_493):
    det = DetectionModel("493")
    assert rate_at(paper_model_493, 0.0, det) < 1e-6 * rate_at(paper_model_493, 2.0, det)


def test_background_sets_zero_field_floor(paper_model):
    det = DetectionModel("455", background=1e4)
    floor = rate_at(paper_model, 0.0, det)
    assert floor == pytest.approx(1e4, rel=1e-6)
    assert rate_at(paper_model, 0.5, det) > 1.5 * floor


@pytest.fixture(scope="module")
def z_scan(paper_model):
    grid = np.linspace(-1.0, 1.0, 81)
    return scan_field(paper_model, Z, grid, DetectionModel("455"))


def test_scan_dip_at_zero_and_even(z_scan):
    i0 = int(np.argmin(z_scan.rate))
    assert z_scan.B_values[i0] == 0.0
    np.testing.assert_allclose(z_scan.rate, z_scan.rate[::-1], rtol=1e-8, atol=0)


def test_zero_field_derivative(z_scan):
    i0 = int(np.flatnonzero(z_scan.B_values == 0.0)[0])
    h = z_scan.B_values[i0 + 1] - z_scan.B_values[i0]
    fd = (z_scan.rate[i0 + 1] - z_scan.rate[i0 - 1]) / (2 * h)
    scale = np.abs(z_scan.derivative).max()
    assert abs(z_scan.derivative[i0] - fd) < 1e-6 * scale
    assert abs(z_scan.derivative[i0]) < 1e-9 * scale


def test_threaded_scan_is_identical(paper_model):
    grid = np.linspace(-0.3, 0.3, 7)
    a = scan_field(paper_model, Z, grid, DetectionModel(), derivative=False)
    b = scan_field(paper_model, Z, grid, DetectionModel(), derivative=False, threads=3)
    np.testing.assert_array_equal(a.rate, b.rate)
    assert a.derivative is None


def test_493_changes_wings_but_not_the_dip(paper_model, paper_model_493):
    grid = np.linspace(-1.0, 1.0, 21)
    off = scan_field(paper_model, Z, grid, DetectionModel(), derivative=False)
    on = scan_field(paper_model_493, Z, grid, DetectionModel(), derivative=False)
    for s in (off, on):
        assert s.B_values[np.argmin(s.rate)] == 0.0
    assert np.max(np.abs(on.rate - off.rate)) > 0.05 * off.rate.max()


def test_scan_result_validation_and_output():
    with pytest.raises(DomainError):
        ScanResult(Z, [0, 1, 1], [1, 2, 3])
    with pytest.raises(DomainError):
        ScanResult(Z, [0, 1], [1, 2, 3])
    s = ScanResult(Z, [-1.0, 0.0, 1.0], [2.0, 1.0, 2.0], [-1.0, 0.0, 1.0], {"k": 1})
    lines = s.to_csv().splitlines()
    assert lines[0] == "B_gauss,rate_counts_per_s,derivative_counts_per_s_per_gauss"
    assert lines[1] == "-1.0,2.0,-1.0"
    assert json.loads(s.to_json())["params"] == {"k": 1}
    assert ScanResult(Z, [0.0, 1.0], [1.0, 2.0]).to_csv().splitlines()[1] == "0.0,1.0,"


# --- dip metrics ---------------------------------------------------------------


def triangle_scan(w, n=401, span=3.0, centre=0.0):
    B = np.linspace(-span, span, n) + centre
    return ScanResult(Z, B, np.minimum(np.abs(B - centre) / w, 1.0))


@pytest.mark.parametrize("w", [0.5, 1.0, 1.7])
def test_triangle_fwhm_equals_half_width(w):
    assert dip_metrics(triangle_scan(w)).fwhm == pytest.approx(w, abs=1e-12)


@given(st.floats(0.2, 2.0), st.floats(-0.5, 0.5), st.integers(101, 301))
def test_dip_metrics_reversal(w, centre, n):
    s = triangle_scan(w, n, centre=centre)
    rev = ScanResult(Z, -s.B_values, s.rate)
    a, b = dip_metrics(s), dip_metrics(rev)
    assert abs(a.fwhm - b.fwhm) <= 1e-12
    assert a.max_slope == pytest.approx(b.max_slope, rel=1e-12)


def test_dip_metrics_on_physical_scan(z_scan):
    m = dip_metrics(z_scan)
    rev = ScanResult(Z, -z_scan.B_values, z_scan.rate, -z_scan.derivative)
    assert abs(dip_metrics(rev).fwhm - m.fwhm) <= 1e-12
    assert 0 < m.fwhm < 2.0
    assert m.min_rate == pytest.approx(0.0, abs=1e-6 * z_scan.rate.max())


def test_dip_metrics_errors():
    B = np.linspace(0, 1, 11)
    with pytest.raises(DomainError):
        dip_metrics(ScanResult(Z, B, B))
    with pytest.raises(DomainError):
        dip_metrics(ScanResult(Z, B, np.ones(11)))


# --- sensitivity ---------------------------------------------------------------


def test_sensitivity_quoted_inputs():
    s = sensitivity(1.61e6, math.sqrt(60))
    assert s.gauss_per_rthz == pytest.approx(4.81e-6, rel=1e-3)
    assert s.pT_per_rthz == pytest.approx(481.1, abs=0.1)
    assert s.tesla_per_rthz == pytest.approx(4.81e-10, rel=1e-3)


def test_sensitivity_limits():
    assert sensitivity(2.0, 6.0).gauss_per_rthz == pytest.approx(2 * sensitivity(2.0, 3.0).gauss_per_rthz)
    assert sensitivity(math.inf, 3.0).gauss_per_rthz == 0.0
    with pytest.raises(DomainError):
        sensitivity(0.0, 1.0)
    with pytest.raises(DomainError):
        sensitivity(1.0, -1.0)


def test_efficiency_calibration(paper_model):
    grid = np.linspace(0.0, 5.0, 11)
    eta = calibrate_efficiency(paper_model, grid)
    det = DetectionModel(efficiency=eta)
    peak = max(rate_at(paper_model, B, det) for B in grid)
    assert peak == pytest.approx(6e4, rel=1e-9)
    assert eta == pytest.approx(DEFAULT_EFFICIENCY, rel=0.05)
