from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intermittency_lab.errors import ValidationError
from intermittency_lab.evolve import SpectralMeasure, eigen_state, eigendecompose, site_state
from intermittency_lab.exponents import (
    FREE_BAND_LOG_OFFSET,
    AlphaFunction,
    alpha_scan,
    beta_estimate,
    beta_from_series,
    correlation_dimension_direct,
    correlation_integral,
    d2_estimate,
    d2_from_series,
    slope_envelope,
)
from intermittency_lab.observables import TimeAverageSeries, log_time_grid
from intermittency_lab.operators import build_free_laplacian


def _power(t, p, c=1.0):
    return TimeAverageSeries(t, c * t**p, "synthetic")


@given(st.floats(-2, 2), st.floats(0.1, 10))
def test_pure_power_law_recovered(p, c):
    t = log_time_grid(1.0, 1e3, 16)
    est = slope_envelope(_power(t, p, c), 0.5)
    assert est.lower == pytest.approx(p, abs=1e-9)
    assert est.upper == pytest.approx(p, abs=1e-9)


def alternating(t, slopes=(-0.2, -0.8), period=1.0):
    """Piecewise power law switching slope every ``period`` decades."""
    lt = np.log10(t)
    edges = np.arange(0, lt.max() + period, period)
    logv = np.zeros_like(lt)
    level = 0.0
    for k, e0 in enumerate(edges[:-1]):
        s = slopes[k % 2]
        seg = (lt >= e0) & (lt <= e0 + period)
        logv[seg] = level + s * (lt[seg] - e0)
        level += s * period
    return TimeAverageSeries(t, 10**logv, "alternating")


def test_alternating_slopes_bracketed():
    t = log_time_grid(1.0, 1e6, 32)
    est = slope_envelope(alternating(t), 0.5)
    assert est.lower == pytest.approx(-0.8, abs=0.05)
    assert est.upper == pytest.approx(-0.2, abs=0.05)


def test_envelope_json_and_checks():
    t = log_time_grid(1.0, 100.0, 8)
    est = slope_envelope(_power(t, -1.0), 1.0)
    doc = json.loads(est.to_json())
    assert set(doc) >= {"quantity", "lower", "upper", "window_decades", "slopes", "config_hash"}
    with pytest.raises(ValidationError):
        slope_envelope(_power(log_time_grid(1.0, 3.0, 8), -1.0), 1.0)
    with pytest.raises(ValidationError):
        slope_envelope(TimeAverageSeries(t, np.zeros_like(t), "z"), 0.5)


def test_d2_free_band_with_log_correction():
    es = eigendecompose(build_free_laplacian(512))
    grid = log_time_grid(10.0, 200.0, 32)
    est = d2_estimate(es, site_state(es.sites, 0), grid, 1.0, FREE_BAND_LOG_OFFSET)
    assert 0.98 < est.lower <= est.upper < 1.02
    assert est.flags[0].startswith("log_corrected")


def test_d2_eigenvector_is_zero():
    es = eigendecompose(build_free_laplacian(64))
    est = d2_estimate(es, eigen_state(es, 10), log_time_grid(1.0, 100.0, 16), 1.0)
    assert abs(est.lower) < 1e-9 and abs(est.upper) < 1e-9


def test_d2_wiener_subtraction_rejects_floor_crossing():
    t = log_time_grid(1.0, 100.0, 8)
    s = TimeAverageSeries(t, 0.5 + 0.0 * t, "flat")
    with pytest.raises(ValidationError):
        d2_from_series(s, 1.0, wiener_floor=0.5)


def test_beta_free_band_ballistic():
    es = eigendecompose(build_free_laplacian(512))
    est = beta_estimate(es, site_state(es.sites, 0), 2.0, log_time_grid(5.0, 150.0, 16))
    assert est.lower == pytest.approx(1.0, abs=1e-3) and est.upper == pytest.approx(1.0, abs=1e-3)


def test_beta_zero_moment_is_zero():
    t = log_time_grid(1.0, 100.0, 8)
    est = beta_from_series(TimeAverageSeries(t, np.zeros_like(t), "m"), 2.0)
    assert est.lower == est.upper == 0.0 and "zero_moment" in est.flags


def test_correlation_integral_uniform_atoms():
    n = 4000
    x = (np.arange(n) + 0.5) / n
    mu = SpectralMeasure(x, np.full(n, 1.0 / n), groups=[np.array([i]) for i in range(n)])
    # continuum value 2 eps - eps^2, local slope (2 - 2 eps) / (2 - eps) >= 0.947 for eps <= 0.1
    eps = np.logspace(-2, -1, 11)
    assert correlation_integral(mu, [0.1])[0] == pytest.approx(0.19, abs=2e-3)
    est = correlation_dimension_direct(mu, eps)
    assert est.lower > 0.93 and est.upper < 1.01


def test_correlation_dimension_point_mass():
    mu = SpectralMeasure(np.array([0.3]), np.array([1.0]))
    est = correlation_dimension_direct(mu, np.logspace(-4, -1, 31))
    assert est.upper == pytest.approx(0.0, abs=1e-12)


def test_alpha_functions():
    t = np.array([1.0, 10.0, 100.0])
    assert np.allclose(AlphaFunction.parse("power:2")(t), t**2)
    assert np.allclose(AlphaFunction.parse("log_power:1")(t), np.log1p(t))
    assert np.allclose(AlphaFunction.parse("iterated_log")(t), np.log1p(np.log1p(t)))
    tab = AlphaFunction("user_table", table=((1.0, 0.0), (100.0, 2.0)))
    assert tab(10.0) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        tab(1000.0)
    with pytest.raises(ValidationError):
        AlphaFunction.parse("exp:1")


def test_alpha_scan_growth_flag():
    t = log_time_grid(1.0, 1e3, 16)
    s = TimeAverageSeries(t, 1.0 / t, "c")
    sup, _, growth = alpha_scan(AlphaFunction("power", 2.0), s)
    assert growth and sup == pytest.approx(1e3)
    sup, _, growth = alpha_scan(AlphaFunction("power", 0.5), s)
    assert not growth and sup == pytest.approx(1.0)
