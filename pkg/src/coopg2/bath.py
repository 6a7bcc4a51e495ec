"""
Phonon environments: spectral densities, thermal bath correlation
functions, discretized influence coefficients and the independent boson
decoherence function.

Frequencies are angular frequencies in rad/ps, spectral densities are in
1/ps (``J(w) = sum_q |g_q|^2 delta(w - w_q)`` with couplings in 1/ps), so the
bath correlation function is in 1/ps^2 and the influence coefficients are
dimensionless.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from coopg2.constants import EV_SI, HBAR, HBAR_SI, KB, PS_PER_S, omega_from_mev
from coopg2.errors import NegativeFrequency, QuadratureFailure

EPSREL = 1e-8
QUAD_LIMIT = 2000
SD_FLOOR = 1e-14  # J(w) below SD_FLOOR * max J is treated as zero
OMEGA_TINY = 1e-10  # rad/ps; stand-in for w = 0 in limits
COTH_SERIES_BELOW = 1e-3  # hbar*w / kB*T below which the coth series is used

# Deformation-potential prefactor.  The default is the standard bulk-phonon
# value 1/(4 pi^2); the bare prefactor 1/2 is kept selectable.
TEXTBOOK_NORMALIZATION = 1.0 / (4.0 * math.pi**2)
BARE_NORMALIZATION = 0.5
DEFAULT_NORMALIZATION = TEXTBOOK_NORMALIZATION


class SpectralDensity:
    """Base class. Subclasses implement ``_evaluate`` and ``params``."""

    kind: str = "abstract"
    temperature: float = 0.0

    def __call__(self, omega):
        return self._evaluate(np.asarray(omega, dtype=float))

    def _evaluate(self, omega: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def _search_scale(self) -> float:
        raise NotImplementedError

    def omega_max(self) -> float:
        """Frequency beyond which ``J < SD_FLOOR * max J``."""
        scale = self._search_scale()
        grid = np.linspace(0.0, 40.0 * scale, 40001)
        vals = self(grid)
        peak = vals.max()
        if peak <= 0:
            return scale
        above = np.nonzero(vals >= SD_FLOOR * peak)[0]
        return float(grid[min(above[-1] + 1, grid.size - 1)])

    def is_zero(self) -> bool:
        grid = np.linspace(0.0, 40.0 * self._search_scale(), 4001)
        return not np.any(self(grid) > 0)

    def describe(self) -> dict:
        return {"kind": self.kind, "temperature_K": self.temperature, **self.params()}

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def scaled(self, factor: float) -> "SpectralDensity":
        return ScaledSD(self, factor)

    def weighted(self, omega: float) -> float:
        """Scalar ``J(w) coth(hbar w/2kT)`` with its finite ``w -> 0`` limit."""
        w = max(float(omega), OMEGA_TINY)
        return float(self(w) * self.thermal_factor(w))

    def thermal_factor(self, omega):
        """``coth(hbar w / 2 kB T)``; series below ``hbar w = 1e-3 kB T``, 1 at T = 0."""
        omega = np.asarray(omega, dtype=float)
        if self.temperature <= 0:
            return np.ones_like(omega)
        x = HBAR * omega / (2.0 * KB * self.temperature)
        small = x < 0.5 * COTH_SERIES_BELOW
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(small, 1.0 / x + x / 3.0, 1.0 / np.tanh(x))
        return out


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))


@dataclass(frozen=True)
class DeformationPotentialSD(SpectralDensity):
    """Superohmic deformation-potential coupling of a parabolic quantum dot.

    ``J(w) = norm * w^3 / (rho hbar c_s^5) * (D_e exp(-w^2/w_e^2) - D_h exp(-w^2/w_h^2))^2``
    with ``norm = 1/(4 pi^2)`` by default (``BARE_NORMALIZATION = 1/2`` is
    the alternative prefactor).
    """

    mass_density: float = 5370.0  # kg/m^3
    sound_speed: float = 5110.0  # m/s
    d_e: float = 7.0  # eV
    d_h: float = -3.5  # eV
    omega_e: float = omega_from_mev(2.9)  # rad/ps
    omega_h: float = omega_from_mev(4.4)  # rad/ps
    temperature: float = 4.0  # K
    normalization: float = DEFAULT_NORMALIZATION
    kind: str = field(default="deformation_potential", init=False)

    def _evaluate(self, omega):
        w_si = omega * PS_PER_S
        form = self.d_e * np.exp(-(omega / self.omega_e) ** 2) - self.d_h * np.exp(-(omega / self.omega_h) ** 2)
        pref = self.normalization / (self.mass_density * HBAR_SI * self.sound_speed**5)
        return pref * w_si**3 * (form * EV_SI) ** 2 / PS_PER_S

    def low_frequency_coefficient(self) -> float:
        """``lim J(w)/w^3`` in ps^2."""
        pref = self.normalization / (self.mass_density * HBAR_SI * self.sound_speed**5)
        return pref * PS_PER_S**2 * ((self.d_e - self.d_h) * EV_SI) ** 2

    def params(self):
        return dict(
            mass_density=self.mass_density,
            sound_speed=self.sound_speed,
            d_e=self.d_e,
            d_h=self.d_h,
            omega_e=self.omega_e,
            omega_h=self.omega_h,
            normalization=self.normalization,
        )

    def _search_scale(self):
        return max(self.omega_e, self.omega_h)


@dataclass(frozen=True)
class OhmicSD(SpectralDensity):
    """``J(w) = alpha * w * exp(-w^2 / w_c^2)``."""

    alpha: float = 7.5e-5
    omega_c: float = omega_from_mev(4.0)
    temperature: float = 4.0
    kind: str = field(default="ohmic", init=False)

    def _evaluate(self, omega):
        return self.alpha * omega * np.exp(-(omega / self.omega_c) ** 2)

    def params(self):
        return dict(alpha=self.alpha, omega_c=self.omega_c)

    def _search_scale(self):
        return self.omega_c


@dataclass(frozen=True)
class TabulatedSD(SpectralDensity):
    """Piecewise-linear J(w) through tabulated points, zero outside."""

    omegas: tuple = (0.0, 1.0)
    values: tuple = (0.0, 0.0)
    temperature: float = 4.0
    kind: str = field(default="tabulated", init=False)

    def __post_init__(self):
        w = tuple(float(x) for x in self.omegas)
        v = tuple(float(x) for x in self.values)
        if len(w) != len(v) or len(w) < 2:
            raise ValueError("tabulated SD needs matching omega/value tables of length >= 2")
        if any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError("tabulated omegas must be strictly increasing")
        if w[0] < 0 or any(x < 0 for x in v):
            raise ValueError("tabulated SD must be non-negative on w >= 0")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "values", v)

    def _evaluate(self, omega):
        return np.interp(omega, self.omegas, self.values, left=0.0, right=0.0)

    def params(self):
        return dict(omegas=list(self.omegas), values=list(self.values))

    def _search_scale(self):
        return self.omegas[-1] / 40.0

    def omega_max(self):
        return float(self.omegas[-1])


@dataclass(frozen=True)
class ScaledSD(SpectralDensity):
    """``factor * J_base(w)`` at the base temperature."""

    base: SpectralDensity = None
    factor: float = 1.0
    kind: str = field(default="scaled", init=False)

    @property
    def temperature(self):
        return self.base.temperature

    def _evaluate(self, omega):
        return self.factor * self.base(omega)

    def params(self):
        return dict(factor=self.factor, base=self.base.describe())

    def _search_scale(self):
        return self.base._search_scale()

    def omega_max(self):
        return self.base.omega_max()


def evaluate_sd(sd: SpectralDensity, omega):
    """J(w) in 1/ps for angular frequencies in rad/ps."""
    arr = np.asarray(omega, dtype=float)
    if np.any(arr < 0):
        raise NegativeFrequency(f"spectral density is defined for w >= 0, got {omega}")
    out = sd(arr)
    return float(out) if out.ndim == 0 else out


# -- quadrature -------------------------------------------------------------

def _integrate(func, a, b, *, weight=None, wvar=None, epsabs=0.0, epsrel=EPSREL, what="integral"):
    if b <= a:
        return 0.0
    kwargs = dict(epsabs=epsabs, epsrel=epsrel, limit=QUAD_LIMIT, full_output=1)
    if weight is not None:
        kwargs.update(weight=weight, wvar=wvar)
        if weight in ("cos", "sin"):
            kwargs["limlst"] = 100
    res = quad(func, a, b, **kwargs)
    if len(res) > 3:
        raise QuadratureFailure(f"{what}: {res[3].splitlines()[0] if res[3] else 'quadrature failed'}")
    return res[0]


def _envelope(func, a, b, what):
    """Absolute scale of an integrand, used as a floor for oscillatory integrals."""
    val = _integrate(lambda w: abs(func(w)), a, b, epsrel=1e-6, what=what)
    return max(val, 1e-300)


def _x_minus_sin(x):
    if abs(x) < 1e-3:
        return x**3 / 6.0 - x**5 / 120.0
    return x - math.sin(x)


def bath_correlation(sd: SpectralDensity, t: float) -> complex:
    """``C(t) = int_0^inf dw J(w) [coth(hbar w/2 kB T) cos wt - i sin wt]``."""
    if t < 0:
        raise ValueError("bath_correlation expects t >= 0; use C(-t) = C(t)^*")
    wmax = sd.omega_max()

    def re_f(w):
        return sd.weighted(w)

    def im_f(w):
        return float(sd(w))

    floor = EPSREL * _envelope(re_f, 0.0, wmax, "C(t) envelope")
    if t == 0:
        return complex(_integrate(re_f, 0.0, wmax, epsabs=floor, what="Re C(0)"), 0.0)
    re = _integrate(re_f, 0.0, wmax, weight="cos", wvar=t, epsabs=floor, what="Re C(t)")
    im = -_integrate(im_f, 0.0, wmax, weight="sin", wvar=t, epsabs=floor, what="Im C(t)")
    return complex(re, im)


# -- influence coefficients -------------------------------------------------

@dataclass(frozen=True)
class MemoryKernel:
    """Discretized influence coefficients on a uniform grid.

    ``eta[0]`` is the on-site (triangle) coefficient
    ``int_0^dt dt1 int_0^t1 dt2 C(t1 - t2)``; ``eta[k]`` for ``k >= 1`` is the
    full cell integral ``int_0^dt int_0^dt C(k dt + t1 - t2)``.  Coefficients
    beyond ``n_steps`` are truncated; ``truncation_error`` is the summed
    magnitude of the next ``n_steps`` coefficients.
    """

    dt: float
    n_steps: int
    eta: np.ndarray
    coupling_eigenvalues: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    truncation_error: float = 0.0
    sd_fingerprint: str = ""

    def __post_init__(self):
        eta = np.array(self.eta, dtype=complex)
        if eta.shape != (self.n_steps + 1,):
            raise ValueError(f"eta must have n_steps + 1 = {self.n_steps + 1} entries")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @property
    def t_mem(self) -> float:
        return self.n_steps * self.dt

    def eta_at(self, lag: int) -> complex:
        return complex(self.eta[lag]) if lag <= self.n_steps else 0.0j

    def scaled(self, factor: float) -> "MemoryKernel":
        return MemoryKernel(self.dt, self.n_steps, self.eta * factor, self.coupling_eigenvalues,
                            self.truncation_error * abs(factor), self.sd_fingerprint)

    def truncated(self, n_steps: int) -> "MemoryKernel":
        n_steps = min(n_steps, self.n_steps)
        return MemoryKernel(self.dt, n_steps, self.eta[: n_steps + 1], self.coupling_eigenvalues,
                            self.truncation_error, self.sd_fingerprint)

    def is_zero(self) -> bool:
        return not np.any(self.eta)


def memory_steps(dt: float, t_mem: float) -> int:
    return max(1, math.ceil(t_mem / dt - 1e-9))


def _eta_lags(sd: SpectralDensity, dt: float, lags) -> np.ndarray:
    wmax = sd.omega_max()

    def cell(w):
        # |int_0^dt e^{iwu} du|^2 = 4 sin^2(w dt/2) / w^2
        w = max(w, OMEGA_TINY)
        s = math.sin(0.5 * w * dt)
        return 4.0 * s * s / (w * w)

    def re_f(w):
        return sd.weighted(w) * cell(w)

    def im_f(w):
        return float(sd(w)) * cell(w)

    floor = EPSREL * _envelope(re_f, 0.0, wmax, "eta envelope")
    out = np.zeros(len(lags), dtype=complex)
    for i, k in enumerate(lags):
        t = k * dt
        re = _integrate(re_f, 0.0, wmax, weight="cos", wvar=t, epsabs=floor, what=f"Re eta[{k}]")
        im = -_integrate(im_f, 0.0, wmax, weight="sin", wvar=t, epsabs=floor, what=f"Im eta[{k}]")
        out[i] = complex(re, im)
    return out


def _eta_onsite(sd: SpectralDensity, dt: float) -> complex:
    wmax = sd.omega_max()

    def re_f(w):
        w = max(w, OMEGA_TINY)
        s = math.sin(0.5 * w * dt)
        return sd.weighted(w) * 2.0 * s * s / (w * w)

    def im_f(w):
        w = max(w, OMEGA_TINY)
        return float(sd(w)) * _x_minus_sin(w * dt) / (w * w)

    floor = EPSREL * 1e-2 * _envelope(re_f, 0.0, wmax, "eta[0] envelope")
    re = _integrate(re_f, 0.0, wmax, epsabs=floor, what="Re eta[0]")
    im = -_integrate(im_f, 0.0, wmax, epsabs=floor, what="Im eta[0]")
    return complex(re, im)


def build_kernel(sd: SpectralDensity, dt: float, t_mem: float) -> MemoryKernel:
    """Influence coefficients for lags ``0..ceil(t_mem/dt)``.

    Each coefficient is a single frequency integral: the two time integrals
    over the step cells are done analytically.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_mem < dt:
        raise ValueError("t_mem must be >= dt")
    n = memory_steps(dt, t_mem)
    if sd.is_zero():
        return MemoryKernel(dt, n, np.zeros(n + 1, complex), sd_fingerprint=sd.fingerprint())
    eta = np.empty(n + 1, dtype=complex)
    eta[0] = _eta_onsite(sd, dt)
    eta[1:] = _eta_lags(sd, dt, range(1, n + 1))
    tail = _eta_lags(sd, dt, range(n + 1, 2 * n + 1))
    return MemoryKernel(dt, n, eta, truncation_error=float(np.sum(np.abs(tail))),
                        sd_fingerprint=sd.fingerprint())


# -- independent boson model ------------------------------------------------

@dataclass(frozen=True)
class IbmDecoherence:
    j_eff: SpectralDensity
    times: np.ndarray
    values: np.ndarray

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


def decoherence_exponent(sd: SpectralDensity, t: float) -> complex:
    """``Phi(t) = int dw J/w^2 [coth(hbar w/2kT)(1 - cos wt) + i sin wt]``.

    The small-frequency part (``w < 20 pi / t``) is integrated directly, the
    remainder with Fourier-weighted quadrature, so the ``1/w`` behaviour of
    ohmic densities stays harmless at long times.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0j
    wmax = sd.omega_max()
    wsplit = min(wmax, 20.0 * math.pi / t)

    def g(w):
        return sd.weighted(w) / (w * w)

    def h(w):
        return float(sd(w)) / (w * w)

    def low_re(w):
        if w < 1e-12:
            return 0.0
        s = math.sin(0.5 * w * t)
        return g(w) * 2.0 * s * s

    def low_im(w):
        if w < 1e-12:
            return 0.0
        return h(w) * math.sin(w * t)

    floor = EPSREL * 1e-2 * _envelope(low_re, 0.0, wsplit, "Phi envelope")
    re = _integrate(low_re, 0.0, wsplit, epsabs=floor, what="Re Phi (low)")
    im = _integrate(low_im, 0.0, wsplit, epsabs=floor, what="Im Phi (low)")
    if wsplit < wmax:
        re += _integrate(g, wsplit, wmax, epsabs=floor, what="Re Phi (flat)")
        re -= _integrate(g, wsplit, wmax, weight="cos", wvar=t, epsabs=floor, what="Re Phi (osc)")
        im += _integrate(h, wsplit, wmax, weight="sin", wvar=t, epsabs=floor, what="Im Phi (osc)")
    return complex(re, im)


def ibm_decoherence(sd: SpectralDensity, grid, doubling: bool = False, coupling: str = "projector") -> IbmDecoherence:
    """Normalised coherence ``c(t)/c(0) = exp(-Phi(t))`` of the independent boson model.

    ``doubling`` uses ``J_eff = 2 J`` (two identical local baths seen from the
    single-excitation manifold of two emitters).  ``coupling="projector"``
    couples the bath to ``|e><e|`` and reports the coherence in the frame that
    removes the polaron shift; ``coupling="difference"`` couples to
    ``sigma_z/2`` (the two-emitter mapping), where the phase drops out and
    only ``Re Phi`` remains.
    """
    times = np.asarray(grid, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("grid must be sorted and non-negative")
    if coupling not in ("projector", "difference"):
        raise ValueError("coupling must be 'projector' or 'difference'")
    j_eff = sd.scaled(2.0) if doubling else sd
    phis = np.array([decoherence_exponent(j_eff, t) for t in times], dtype=complex)
    if coupling == "difference":
        phis = phis.real.astype(complex)
    return IbmDecoherence(j_eff, times, np.exp(-phis))


def ibm_plateau(sd: SpectralDensity, doubling: bool = False) -> float:
    """Long-time ``|c(inf)/c(0)| = exp(-int dw J_eff/w^2 coth)`` (superohmic only)."""
    j_eff = sd.scaled(2.0) if doubling else sd
    wmax = j_eff.omega_max()

    def g(w):
        if w < 1e-12:
            return 0.0
        return j_eff.weighted(w) / (w * w)

    return math.exp(-_integrate(g, 0.0, wmax, what="plateau exponent"))


def ohmic_long_time_rate(sd: OhmicSD, doubling: bool = False) -> float:
    """Asymptotic decay rate ``pi * alpha * kB T / hbar`` (times 2 if doubled) of an ohmic bath."""
    rate = math.pi * sd.alpha * KB * sd.temperature / HBAR
    return 2.0 * rate if doubling else rate

