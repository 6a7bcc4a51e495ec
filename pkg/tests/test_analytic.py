import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopg2.analytic import (
    FitResult,
    InitialDropModel,
    PpdModel,
    fit_model,
    fitted_curve,
    g2_initial_drop,
    g2_ppd,
    model_for,
    superradiant_g2_lindblad,
)
from coopg2.dynamics import G2Curve, Numerics, Scenario
from coopg2.errors import DomainError, GridMismatch
from coopg2.postprocess import compare_curves
from coopg2.quantum import DecayMode, LindbladSpec

GAMMA = 1 / 1760.0
TAU = Numerics().tau_steps() * 0.1


def synthetic(values, rates=(GAMMA, GAMMA)):
    sc = Scenario(LindbladSpec(*rates))
    return G2Curve(TAU, values, 0.5, sc)


def test_ppd_limits():
    assert g2_ppd(0.0, GAMMA, GAMMA, 1 / 3900) == 1.0
    assert g2_ppd(1e7, GAMMA, GAMMA, 1 / 3900) == pytest.approx(1.0, abs=1e-15)
    assert np.all(g2_ppd(TAU, GAMMA, GAMMA, 0.0) == 1.0)
    assert np.allclose(g2_ppd(-TAU, GAMMA, GAMMA, 0.01), g2_ppd(TAU, GAMMA, GAMMA, 0.01))
    with pytest.raises(DomainError):
        g2_ppd(1.0, GAMMA, 2 * GAMMA, 0.0)


@settings(max_examples=40, deadline=None)
@given(gd=st.floats(0.0, 1.0), t=st.floats(0.0, 1e5))
def test_ppd_bounded_between_half_and_one(gd, t):
    v = g2_ppd(t, GAMMA, GAMMA, gd)
    assert 0.5 <= v <= 1.0


def test_initial_drop_limits():
    assert g2_initial_drop(0.0, 0.0854, GAMMA, GAMMA) == pytest.approx(1 - 0.0854)
    assert g2_initial_drop(1e7, 0.0854, GAMMA, GAMMA) == pytest.approx(1.0, abs=1e-15)
    assert np.all(g2_initial_drop(TAU, 0.0, GAMMA, GAMMA) == 1.0)
    for bad in (-0.1, 1.1):
        with pytest.raises(DomainError):
            g2_initial_drop(0.0, bad, GAMMA, GAMMA)


def test_fit_recovers_initial_drop():
    curve = synthetic(g2_initial_drop(TAU, 0.0854, GAMMA, GAMMA))
    fit = fit_model(curve, InitialDropModel(GAMMA, GAMMA))
    assert fit.params["a"] == pytest.approx(0.0854, abs=1e-6)
    assert fit.rms < 1e-12


@pytest.mark.parametrize("lifetime", [199.0, 3900.0, 40000.0])
def test_fit_recovers_ppd_rate(lifetime):
    curve = synthetic(g2_ppd(TAU, GAMMA, GAMMA, 1 / lifetime))
    fit = fit_model(curve, "PpdModel")
    assert 1 / fit.params["gamma_d"] == pytest.approx(lifetime, rel=1e-6)


def test_fit_window_errors():
    curve = synthetic(np.ones_like(TAU))
    with pytest.raises(GridMismatch):
        fit_model(curve, PpdModel(GAMMA, GAMMA), (1.0, 1e5))
    with pytest.raises(GridMismatch):
        fit_model(curve, PpdModel(GAMMA, GAMMA), (1.0, 1.2))


def test_fit_result_roundtrip(tmp_path):
    curve = synthetic(g2_ppd(TAU, GAMMA, GAMMA, 1 / 3900))
    fit = fit_model(curve, PpdModel(GAMMA, GAMMA))
    back = FitResult.load(fit.save(tmp_path / "fit.txt"))
    assert back.as_dict() == fit.as_dict()
    fc = fitted_curve(curve, back)
    assert np.allclose(fc.g2, curve.g2, atol=1e-12)


def test_model_for_takes_rates_from_curve():
    curve = synthetic(np.ones_like(TAU), (GAMMA, GAMMA))
    assert model_for("PpdModel", curve).gamma == GAMMA
    with pytest.raises(ValueError):
        model_for("nope", curve)


def test_ppd_vs_initial_drop_metric():
    ppd = synthetic(g2_ppd(TAU, GAMMA, GAMMA, 1 / 3900))
    drop = synthetic(g2_initial_drop(TAU, 0.0854, GAMMA, GAMMA))
    d = compare_curves(ppd, drop)
    diff = g2_ppd(TAU, GAMMA, GAMMA, 1 / 3900) - g2_initial_drop(TAU, 0.0854, GAMMA, GAMMA)
    assert d["max_abs"] == pytest.approx(np.max(np.abs(diff)), rel=1e-14)
    assert d["rms"] == pytest.approx(math.sqrt(np.mean(diff**2)), rel=1e-14)
    assert d["max_abs"] > 0
    assert compare_curves(ppd, ppd)["max_abs"] == 0 == compare_curves(ppd, ppd)["rms"]


def g0(ratio, gd=0.0):
    spec = LindbladSpec(GAMMA, ratio * GAMMA, gd, DecayMode.SUPERRADIANT)
    return superradiant_g2_lindblad(spec, [0.0]).g2[0]


def test_superradiant_g2_zero_ordering():
    assert g0(1.0) == pytest.approx(1.0, abs=1e-9)
    assert g0(10.0) < 1 < g0(0.1)
    assert abs(g0(0.1, 1 / 199) - 1) < abs(g0(0.1) - 1)
    with pytest.raises(DomainError):
        superradiant_g2_lindblad(LindbladSpec(GAMMA, GAMMA), [0.0])
