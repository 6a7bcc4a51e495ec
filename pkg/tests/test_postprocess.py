import math

import numpy as np
import pytest
from scipy.integrate import quad

from coopg2.analytic import g2_ppd
from coopg2.dynamics import G2Curve, Numerics
from coopg2.errors import DisjointSupport, GridTooCoarse
from coopg2.postprocess import InstrumentResponse, compare_curves, convolve_irf

GAMMA = 1 / 1760.0
TAU = Numerics().tau_steps() * 0.1


def curve(values, tau=TAU):
    return G2Curve(tau, values, 1.0, label="c")


def test_irf_is_normalized_gaussian():
    irf = InstrumentResponse(240.0)
    area, _ = quad(irf, -2000, 2000, points=[0.0])
    assert area == pytest.approx(1.0, rel=1e-10)
    assert irf(120.0) == pytest.approx(irf(0.0) / 2)


def test_constant_curve_is_unchanged():
    out = convolve_irf(curve(np.ones_like(TAU)), 240.0)
    assert np.max(np.abs(out.g2 - 1)) < 1e-14
    assert out.numerics["irf_fwhm_ps"] == 240.0
    assert out.header()["irf_fwhm_ps"] == 240.0


def test_delta_limit():
    g = g2_ppd(TAU, GAMMA, GAMMA, 1 / 199)
    out = convolve_irf(curve(g), 0.1 / 100)  # fwhm a hundredth of the finest step
    assert np.max(np.abs(out.g2 - g)) < 1e-4


def test_matches_dense_trapezoid_oracle():
    irf = InstrumentResponse(240.0)
    g = g2_ppd(TAU, GAMMA, GAMMA, 1 / 199)
    out = convolve_irf(curve(g), irf)

    for i in np.searchsorted(TAU, [0.0, 150.0, 600.0, 3000.0]):
        t = TAU[i]
        # dense trapezoid over +-12 sigma of the piecewise-linear, evenly extended curve
        s = np.linspace(t - 12 * irf.sigma, t + 12 * irf.sigma, 400001)
        ref = np.trapezoid(np.interp(np.abs(s), TAU, g) * irf(t - s), s)
        assert out.g2[i] == pytest.approx(ref, abs=1e-9)


def test_grid_too_coarse():
    tau = np.arange(0, 3000.0, 50.0)
    with pytest.raises(GridTooCoarse):
        convolve_irf(curve(np.ones_like(tau), tau), 240.0)


def test_compare_curves_window_and_interpolation():
    a = curve(np.ones_like(TAU))
    b = curve(np.full(11, 1.5), np.linspace(0, 100, 11))
    d = compare_curves(a, b, (10.0, 50.0))
    assert d["max_abs"] == pytest.approx(0.5) and d["rms"] == pytest.approx(0.5)
    assert d["window"] == (10.0, 50.0)
    with pytest.raises(DisjointSupport):
        compare_curves(a, b, (200.0, 300.0))


def test_convolution_is_smoothing():
    # a narrow dip is filled in and the minimum rises
    g = 1 - 0.5 * np.exp(-TAU / 20.0)
    out = convolve_irf(curve(g), 240.0)
    assert out.g2.min() > g.min()
    assert math.isclose(out.g2[-1], g[-1], abs_tol=1e-12)


def test_convolution_preserves_mean_and_is_linear():
    g = g2_ppd(TAU, GAMMA, GAMMA, 1 / 199)
    h = 1 - 0.3 * np.exp(-TAU / 300.0)
    out = convolve_irf(curve(g), 240.0)
    # unit area: the integral of a deviation that dies out before the grid edge is kept
    u = np.arange(0.0, 6000.0, 2.0)
    hu = 1 - 0.3 * np.exp(-u / 300.0)
    dev = lambda y: np.trapezoid(y - 1, u)  # noqa: E731
    assert dev(convolve_irf(curve(hu, u), 240.0).g2) == pytest.approx(dev(hu), rel=1e-6)
    conv_h = convolve_irf(curve(h), 240.0).g2
    both = convolve_irf(curve(g + 2 * h), 240.0).g2
    assert np.max(np.abs(both - out.g2 - 2 * conv_h)) < 1e-12
