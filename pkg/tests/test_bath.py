import math

import numpy as np
import pytest
from scipy import constants as sc
from scipy.integrate import quad

from coopg2.bath import (
    DeformationPotentialSD,
    OhmicSD,
    TabulatedSD,
    bath_correlation,
    build_kernel,
    decoherence_exponent,
    evaluate_sd,
    ibm_decoherence,
    ibm_plateau,
    memory_steps,
    ohmic_long_time_rate,
)
from coopg2.errors import NegativeFrequency

MEV = 1e-3 * sc.e  # J
HBAR_MEV_PS = sc.hbar / MEV * 1e12


def omega(mev):
    return mev / HBAR_MEV_PS  # rad/ps


def j_def_reference(w_ps):
    """Deformation-potential J(w) evaluated from SI constants, independently of the package."""
    w = w_ps * 1e12
    we, wh = omega(2.9) * 1e12, omega(4.4) * 1e12
    form = (7.0 * math.exp(-(w / we) ** 2) + 3.5 * math.exp(-(w / wh) ** 2)) * sc.e
    j_si = w**3 * form**2 / (4 * math.pi**2 * 5370.0 * sc.hbar * 5110.0**5)  # 1/s
    return j_si / 1e12


def test_deformation_potential_value_at_2mev():
    w = omega(2.0)
    assert evaluate_sd(DeformationPotentialSD(), w) == pytest.approx(j_def_reference(w), rel=1e-8)
    assert evaluate_sd(DeformationPotentialSD(), 0.0) == 0.0


def test_ohmic_value_at_cutoff():
    sd = OhmicSD()
    wc = omega(4.0)
    assert evaluate_sd(sd, wc) == pytest.approx(7.5e-5 * wc / math.e, rel=1e-6)


def test_negative_frequency_rejected():
    with pytest.raises(NegativeFrequency):
        evaluate_sd(OhmicSD(), -1.0)


def test_tabulated_interpolates():
    sd = TabulatedSD((0.0, 1.0, 2.0), (0.0, 2.0, 0.0))
    assert np.allclose(evaluate_sd(sd, [0.5, 1.5, 3.0]), [1.0, 1.0, 0.0])


@pytest.mark.parametrize("sd", [DeformationPotentialSD(), OhmicSD()], ids=["superohmic", "ohmic"])
def test_correlation_limits(sd):
    c0 = bath_correlation(sd, 0.0)
    assert c0.imag == 0.0 and c0.real > 0
    assert abs(bath_correlation(sd, 50.0)) < 1e-3 * abs(c0)


def test_correlation_zero_temperature_is_integral_of_j():
    sd = DeformationPotentialSD(temperature=0.0)
    ref, _ = quad(sd, 0.0, 20.0, limit=400, epsabs=0, epsrel=1e-11)
    assert bath_correlation(sd, 0.0).real == pytest.approx(ref, rel=1e-7)


def test_onsite_coefficient_matches_time_domain_integral():
    # eta_0 = int_0^dt dt1 int_0^t1 C(t1 - t2) dt2 = int_0^dt (dt - u) C(u) du
    sd = DeformationPotentialSD()
    dt = 0.1
    kern = build_kernel(sd, dt, dt)
    re, _ = quad(lambda u: (dt - u) * bath_correlation(sd, u).real, 0, dt, epsrel=1e-10)
    im, _ = quad(lambda u: (dt - u) * bath_correlation(sd, u).imag, 0, dt, epsrel=1e-10)
    assert kern.eta[0].real == pytest.approx(re, rel=1e-6)
    assert kern.eta[0].imag == pytest.approx(im, rel=1e-5, abs=1e-9 * abs(re))
    # the real part is half the full-cell frequency integral 2(1 - cos w dt) J coth / w^2
    cell, _ = quad(lambda w: sd.weighted(w) * 2 * (1 - math.cos(w * dt)) / w**2, 1e-9, sd.omega_max(),
                   limit=400, epsrel=1e-11)
    assert kern.eta[0].real == pytest.approx(0.5 * cell, rel=1e-6)


def test_lag_coefficient_matches_time_domain_integral():
    # eta_k = int_{-dt}^{dt} (dt - |u|) C(k dt + u) du for k >= 1
    sd = DeformationPotentialSD()
    dt, k = 0.2, 2
    kern = build_kernel(sd, dt, 2 * dt)

    def part(u, f):
        return (dt - abs(u)) * f(bath_correlation(sd, k * dt + u))

    re = sum(quad(part, a, b, args=(np.real,), epsrel=1e-10)[0] for a, b in ((-dt, 0), (0, dt)))
    im = sum(quad(part, a, b, args=(np.imag,), epsrel=1e-10)[0] for a, b in ((-dt, 0), (0, dt)))
    assert kern.eta[k] == pytest.approx(complex(re, im), rel=1e-6)


def test_kernel_truncation_contract():
    kern = build_kernel(OhmicSD(), 0.5, 2.0)
    assert kern.n_steps == memory_steps(0.5, 2.0) == 4
    assert kern.eta.shape == (5,)
    assert kern.eta_at(10) == 0
    assert kern.truncation_error > 0
    zero = build_kernel(TabulatedSD((0.0, 1.0), (0.0, 0.0)), 0.1, 1.0)
    assert zero.is_zero()


def test_ibm_starts_at_one_and_reaches_plateau():
    sd = DeformationPotentialSD()
    c = ibm_decoherence(sd, [0.0, 5.0, 20.0], doubling=True, coupling="difference")
    plateau = ibm_plateau(sd, doubling=True)
    assert c.values[0] == 1.0
    assert 0 < plateau < 1
    assert abs(c.modulus[1] - plateau) < 1e-2
    assert abs(c.modulus[2] - plateau) < 1e-4


def test_doubling_squares_the_decoherence():
    sd = DeformationPotentialSD()
    t = [0.5, 2.0, 8.0]
    single = ibm_decoherence(sd, t, coupling="difference").values
    double = ibm_decoherence(sd, t, doubling=True, coupling="difference").values
    assert np.allclose(double, single**2, rtol=1e-9)


def test_ibm_phase_frame():
    # the projector coupling carries the polaron phase, the difference coupling does not
    sd = DeformationPotentialSD()
    phi = decoherence_exponent(sd, 3.0)
    proj = ibm_decoherence(sd, [3.0]).values[0]
    diff = ibm_decoherence(sd, [3.0], coupling="difference").values[0]
    assert proj == pytest.approx(np.exp(-phi))
    assert diff.imag == 0 and diff.real == pytest.approx(abs(proj))


def test_ohmic_decoherence_decays_in_ns_range():
    sd = OhmicSD()
    c = ibm_decoherence(sd, [1000.0, 10000.0], doubling=True, coupling="difference")
    assert c.modulus[0] > 0.1 > c.modulus[1]
    # long-time slope approaches pi alpha kB T / hbar (doubled)
    slope = -np.log(c.modulus[1] / c.modulus[0]) / 9000.0
    assert slope == pytest.approx(ohmic_long_time_rate(sd, doubling=True), rel=1e-3)


@pytest.mark.parametrize("sd", [DeformationPotentialSD(), OhmicSD()], ids=["superohmic", "ohmic"])
def test_kernel_subcell_consistency(sd):
    # a coarse cell is the sum of its 2x2 fine sub-cells; three grid levels
    for dt in (0.4, 0.2):
        coarse = build_kernel(sd, dt, 2.0).eta
        fine = build_kernel(sd, dt / 2, 2.0).eta
        summed = np.array([2 * fine[0] + fine[1]]
                          + [fine[2 * k - 1] + 2 * fine[2 * k] + fine[2 * k + 1] for k in range(1, 5)])
        assert np.max(np.abs(summed - coarse[:5])) < 1e-8 * np.max(np.abs(coarse))
