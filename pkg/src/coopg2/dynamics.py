"""
Observables of the two-emitter system: stationary states, emitted intensity
and the two-photon coincidence function g2(tau), with or without phonon
environments.

The first photon detection is a single operator insertion
``rho -> sigma_S^- rho sigma_S^+`` on the stationary extended state, so the
environment memory carried by the process-tensor bonds survives the
detection.  Without phonons the same curve is also available from the
quantum regression theorem, which serves as an independent check.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from coopg2.bath import SpectralDensity
from coopg2.cache import Store
from coopg2.errors import GridMismatch, InvalidRates, NoPumpNoDecay, NotStationary, ZeroIntensity
from coopg2.io import fingerprint, read_csv, write_csv
from coopg2.process_tensor import Evolution, ExtendedState
from coopg2.quantum import (
    SIGMA_S_MINUS,
    SIGMA_S_PLUS,
    DecayMode,
    DensityMatrix,
    LindbladSpec,
    lindblad_generator,
    propagator,
    sandwich,
    steady_state,
    vec,
)

log = logging.getLogger(__name__)

ZERO_INTENSITY = 1e-14
N_S = (SIGMA_S_PLUS @ SIGMA_S_MINUS).matrix  # emitted-intensity operator


class Geometry(enum.Enum):
    """Emitter separation regime: far apart (independent decay) or close (collective)."""

    MEASUREMENT_INDUCED = "measurement-induced"
    SUPERRADIANT = "superradiant"

    @property
    def decay_mode(self) -> DecayMode:
        return DecayMode.INDEPENDENT if self is Geometry.MEASUREMENT_INDUCED else DecayMode.SUPERRADIANT


@dataclass(frozen=True)
class Numerics:
    """Discretization and truncation parameters (times in ps).

    The delay grid is every step on ``[0, tau_fine]`` followed by
    ``n_coarse`` geometrically spaced points up to ``tau_max`` (rounded to
    whole steps).  With ``richardson`` the phonon results are extrapolated
    linearly in ``dt`` from runs at ``dt`` and ``dt/2``; it is off by default
    since the pure-dephasing part is exact at any ``dt`` and the remaining
    splitting error is of order ``gamma * dt``, while a PT at ``dt/2`` costs
    roughly ten times more to build.
    """

    dt: float = 0.1
    t_mem: float = 10.0
    svd_threshold: float = 1e-8
    max_bond: int = 256
    tau_fine: float = 20.0
    tau_max: float = 6000.0
    n_coarse: int = 1500
    richardson: bool = False
    stationarity_tol: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_mem >= self.dt:
            raise ValueError(f"t_mem ({self.t_mem} ps) must be at least dt ({self.dt} ps)")
        if not 0 < self.svd_threshold < 1:
            raise ValueError("svd_threshold must lie in (0, 1)")
        if self.max_bond < 1:
            raise ValueError("max_bond must be >= 1")
        if not 0 <= self.tau_fine <= self.tau_max:
            raise ValueError("need 0 <= tau_fine <= tau_max")
        if self.n_coarse < 0:
            raise ValueError("n_coarse must be >= 0")

    def tau_steps(self) -> np.ndarray:
        """Step indices (at ``dt``) of the output delay grid."""
        fine = np.arange(0, int(round(self.tau_fine / self.dt)) + 1)
        n_max = int(round(self.tau_max / self.dt))
        if self.n_coarse and n_max > fine[-1]:
            start = max(self.tau_fine, self.dt)
            coarse = np.rint(np.geomspace(start, self.tau_max, self.n_coarse) / self.dt).astype(int)
            steps = np.union1d(fine, coarse[coarse > fine[-1]])
        else:
            steps = fine
        return steps[steps <= max(n_max, fine[-1])]

    def describe(self) -> dict:
        return dict(dt=self.dt, t_mem=self.t_mem, svd_threshold=self.svd_threshold, max_bond=self.max_bond,
                    tau_fine=self.tau_fine, tau_max=self.tau_max, n_coarse=self.n_coarse,
                    richardson=self.richardson, stationarity_tol=self.stationarity_tol)


@dataclass(frozen=True)
class Scenario:
    """One g2 experiment.

    ``phonons`` (if given) couples identically and independently to both
    emitters.  ``ppd_extra`` is pure dephasing added to the Markovian part on
    top of ``lindblad.gamma_d``, for runs that combine phonons with PPD.
    """

    lindblad: LindbladSpec
    geometry: Geometry = Geometry.MEASUREMENT_INDUCED
    phonons: SpectralDensity | None = None
    ppd_extra: float = 0.0
    numerics: Numerics = field(default_factory=Numerics)

    def __post_init__(self):
        object.__setattr__(self, "geometry", Geometry(self.geometry))
        if self.lindblad.decay_mode is not self.geometry.decay_mode:
            raise InvalidRates(f"{self.geometry.value} geometry needs {self.geometry.decay_mode.value} decay, "
                               f"got {self.lindblad.decay_mode.value}")
        if not (math.isfinite(self.ppd_extra) and self.ppd_extra >= 0):
            raise InvalidRates(f"ppd_extra must be finite and >= 0, got {self.ppd_extra}")

    @property
    def has_phonons(self) -> bool:
        return self.phonons is not None and not self.phonons.is_zero()

    def markov_spec(self) -> LindbladSpec:
        return self.lindblad.replace(gamma_d=self.lindblad.gamma_d + self.ppd_extra)

    def with_numerics(self, **changes) -> "Scenario":
        return replace(self, numerics=replace(self.numerics, **changes))

    def describe(self) -> dict:
        spec = self.lindblad
        return dict(geometry=self.geometry.value, gamma=spec.gamma, gamma_p=spec.gamma_p, gamma_d=spec.gamma_d,
                    ppd_extra=self.ppd_extra,
                    phonons=None if self.phonons is None else self.phonons.describe(),
                    numerics=self.numerics.describe())

    def fingerprint(self) -> str:
        return fingerprint(self.describe())


# -- simple observables --------------------------------------------------------

def intensity(rho: DensityMatrix) -> float:
    """Emitted intensity ``<sigma_S^+ sigma_S^->`` (units of the single-emitter rate)."""
    c = rho.coherence
    return float(rho.n_ee + 0.5 * (rho.n_eg + rho.n_ge + 2.0 * c.real))


def g2_zero(rho_ss: DensityMatrix) -> float:
    """``g2(0) = n_ee / I0^2``; raises ``ZeroIntensity`` for a dark state."""
    i0 = intensity(rho_ss)
    if i0 <= ZERO_INTENSITY:
        raise ZeroIntensity(f"stationary intensity {i0:.3g} vanishes")
    return rho_ss.n_ee / i0**2


# -- curves --------------------------------------------------------------------

@dataclass
class G2Curve:
    """Normalized coincidences ``g2(tau)`` (tau in ps) with provenance."""

    tau: np.ndarray
    g2: np.ndarray
    I0: float
    scenario: Scenario | None = None
    numerics: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.g2 = np.asarray(self.g2, dtype=float)
        if self.tau.shape != self.g2.shape or self.tau.ndim != 1:
            raise GridMismatch("tau and g2 must be 1-d arrays of equal length")
        if np.any(np.diff(self.tau) <= 0):
            raise GridMismatch("tau must be strictly increasing")

    @property
    def g2_zero(self) -> float:
        if self.tau[0] != 0:
            raise GridMismatch("curve does not contain tau = 0")
        return float(self.g2[0])

    def at(self, tau) -> np.ndarray:
        """Linear interpolation in tau (``|tau|`` for negative delays)."""
        t = np.abs(np.asarray(tau, dtype=float))
        if np.any(t < self.tau[0]) or np.any(t > self.tau[-1]):
            raise GridMismatch("interpolation outside the curve's support")
        return np.interp(t, self.tau, self.g2)

    def with_values(self, g2, label: str | None = None, **numerics) -> "G2Curve":
        return G2Curve(self.tau.copy(), g2, self.I0, self.scenario, {**self.numerics, **numerics},
                       self.label if label is None else label)

    def header(self) -> dict:
        head = dict(kind="g2", label=self.label, I0=self.I0)
        if self.scenario is not None:
            head["scenario"] = self.scenario.describe()
            head["fingerprint"] = self.scenario.fingerprint()
        head["numerics"] = self.numerics
        if "irf_fwhm_ps" in self.numerics:
            head["irf_fwhm_ps"] = self.numerics["irf_fwhm_ps"]
        return head

    def to_csv(self, path, extra: dict | None = None):
        return write_csv(path, {"tau_ps": self.tau, "g2": self.g2}, {**self.header(), **(extra or {})})

    @classmethod
    def from_csv(cls, path) -> "G2Curve":
        cols, head = read_csv(path)
        numerics = head.get("numerics", {})
        numerics = dict(numerics) if isinstance(numerics, dict) else {}
        for key in ("irf_fwhm_ps", "fingerprint", "scenario"):
            if key in head:
                numerics[key] = head[key]
        return cls(cols["tau_ps"], cols["g2"], float(head.get("I0", math.nan)), None, numerics,
                   str(head.get("label", "")))


@dataclass
class CoherenceTrajectory:
    """Inter-emitter coherence ``c(t)`` (t in ps)."""

    t: np.ndarray
    c: np.ndarray
    scenario: Scenario | None = None
    numerics: dict = field(default_factory=dict)

    def to_csv(self, path, extra: dict | None = None):
        head = dict(kind="coherence", numerics=self.numerics)
        if self.scenario is not None:
            head["scenario"] = self.scenario.describe()
            head["fingerprint"] = self.scenario.fingerprint()
        return write_csv(path, {"t_ps": self.t, "re_c": self.c.real, "im_c": self.c.imag}, {**head, **(extra or {})})


# -- quantum regression (Markovian reference) --------------------------------------

def g2_regression(spec: LindbladSpec, tau) -> tuple:
    """``(g2(tau), I0)`` from the steady state and the regression theorem."""
    gen = lindblad_generator(spec)
    rho = steady_state(gen)
    i0 = intensity(rho)
    if i0 <= ZERO_INTENSITY:
        raise ZeroIntensity(f"stationary intensity {i0:.3g} vanishes")
    post = sandwich(SIGMA_S_MINUS.matrix, SIGMA_S_PLUS.matrix) @ rho.vector
    obs = vec(N_S.T)  # Tr[N rho] = vec(N^T) . vec(rho)
    tau = np.asarray(tau, dtype=float)
    out = np.array([(obs @ (expm(gen.matrix * abs(t)) @ post)).real for t in tau])
    return out / i0**2, i0


# -- process-tensor pipeline --------------------------------------------------------

def _path_class(sc: Scenario) -> str:
    return "single-switch" if sc.geometry is Geometry.MEASUREMENT_INDUCED else "all"


def _evolution(sc: Scenario, dt: float, store: Store) -> tuple:
    num = sc.numerics
    mprop = propagator(lindblad_generator(sc.markov_spec()), dt)
    pts = {}
    stats = {}
    if sc.has_phonons:
        pt = store.process_tensor(sc.phonons, dt, num.t_mem, num.svd_threshold, num.max_bond, _path_class(sc))
        pts = {1: pt, 2: pt}
        stats = dict(pt.stats(), paths=pt.meta.get("paths", "all"))
    return Evolution(pts, mprop, dt), stats


def _settle_steps(spec: LindbladSpec, dt: float) -> int:
    rate = spec.gamma if spec.gamma > 0 else spec.gamma_p
    if rate <= 0:
        raise NoPumpNoDecay("stationarity needs radiative decay or pumping")
    return max(1, int(round(1.0 / rate / dt)))


def stationary_state(sc: Scenario, dt: float | None = None, store: Store | None = None,
                     check: bool = True) -> tuple:
    """Stationary extended state ``(state, evolution, diagnostics)``.

    The fixed point of the converged one-step map is solved for directly and
    then verified: propagating it for ``1/gamma`` must change the reduced
    state by less than ``numerics.stationarity_tol`` (and the bond weights by
    less than the same tolerance relative to their size).
    """
    dt = sc.numerics.dt if dt is None else dt
    store = store or Store()
    evo, stats = _evolution(sc, dt, store)
    n_check = _settle_steps(sc.markov_spec(), dt)
    state = evo.stationary()
    diag = dict(stats)
    if check:
        later, _ = evo.run(state, n_check, sample_steps=[])
        rho0, rho1 = state.reduced().matrix, later.reduced().matrix
        d_rho = float(np.max(np.abs(rho1 - rho0)))
        r0, r1 = state.dense(), later.dense()
        d_bond = float(np.max(np.abs(r1 - r0)) / max(np.max(np.abs(r0)), 1e-300))
        diag.update(stationarity_rho=d_rho, stationarity_bond=d_bond, settle_check_ps=n_check * dt)
        tol = sc.numerics.stationarity_tol
        if d_rho > tol or d_bond > tol:
            raise NotStationary(f"state changed by {d_rho:.2e} (reduced) / {d_bond:.2e} (bonds) over "
                                f"{n_check * dt:.0f} ps; tolerance {tol:g}")
    return state, evo, diag


def _reduced_intensity(state: ExtendedState) -> float:
    return float(np.trace(N_S @ state.reduced().matrix).real)


def _g2_single(sc: Scenario, dt: float, steps: np.ndarray, store: Store, check: bool) -> tuple:
    state, evo, diag = stationary_state(sc, dt, store, check)
    rho = state.reduced()
    i0 = intensity(rho)
    if i0 <= ZERO_INTENSITY:
        raise ZeroIntensity(f"stationary intensity {i0:.3g} vanishes")
    post = evo.insert(state, SIGMA_S_MINUS, SIGMA_S_MINUS)
    _, vals = evo.run(post, int(steps[-1]), steps, callback=_reduced_intensity)
    return np.array(vals) / i0**2, i0, diag


def g2_curve(sc: Scenario, store: Store | None = None, method: str = "pipeline", check: bool = True) -> G2Curve:
    """g2(tau) on the composite delay grid of ``sc.numerics``.

    ``method="pipeline"`` runs the stationary state, detection insertion and
    delay propagation through the process-tensor machinery (PTs only when
    phonons are present).  ``method="regression"`` uses the quantum
    regression theorem and is only valid without phonons.
    """
    num = sc.numerics
    steps = num.tau_steps()
    tau = steps * num.dt
    numerics = dict(num.describe(), method=method)
    if method == "regression":
        if sc.has_phonons:
            raise ValueError("the regression theorem does not apply with phonon memory")
        g2, i0 = g2_regression(sc.markov_spec(), tau)
        return G2Curve(tau, g2, i0, sc, numerics)
    if method != "pipeline":
        raise ValueError(f"unknown method {method!r}")
    store = store or Store()
    g2, i0, diag = _g2_single(sc, num.dt, steps, store, check)
    numerics.update(diag)
    if num.richardson and sc.has_phonons:
        g2_half, i0_half, diag_half = _g2_single(sc, num.dt / 2, 2 * steps, store, check)
        numerics.update({f"half_{k}": v for k, v in diag_half.items()})
        numerics.update(richardson_max_change=float(np.max(np.abs(g2_half - g2))))
        g2 = 2.0 * g2_half - g2
        i0 = 2.0 * i0_half - i0
    return G2Curve(tau, g2, i0, sc, numerics)


def coherence_trajectory(sc: Scenario, rho0: DensityMatrix, t_max: float, store: Store | None = None,
                         stride: int = 1) -> CoherenceTrajectory:
    """``c(t) = <e1 g2|rho(t)|g1 e2>`` from ``rho0`` at ``t = 0`` (baths in equilibrium).

    The Markovian part is taken from the scenario as given; the usual
    protocol switches pumping and decay off.  With phonons and
    ``numerics.richardson`` the result is extrapolated from ``dt`` and ``dt/2``.
    """
    store = store or Store()
    num = sc.numerics
    n = int(round(t_max / num.dt))
    steps = np.arange(0, n + 1, stride)

    def run(dt, sample):
        evo, stats = _evolution(sc, dt, store)
        _, states = evo.run(evo.start(rho0), int(sample[-1]), sample)
        return np.array([s.coherence for s in states]), stats

    c, stats = run(num.dt, steps)
    numerics = dict(num.describe(), **stats)
    if num.richardson and sc.has_phonons:
        c_half, _ = run(num.dt / 2, 2 * steps)
        numerics.update(richardson_max_change=float(np.max(np.abs(c_half - c))))
        c = 2.0 * c_half - c
    return CoherenceTrajectory(steps * num.dt, c, sc, numerics)
