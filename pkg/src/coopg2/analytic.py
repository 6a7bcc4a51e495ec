"""
Closed-form g2 references and least-squares fits.

``g2_ppd`` is the exact coincidence curve of two independently decaying,
equally pumped (``gamma_p == gamma``) emitters with Markovian pure
dephasing.  ``g2_initial_drop`` is the phenomenological form used to
summarize a fast initial drop.  Fits are deterministic: a fixed set of
data-implied starting points, each refined by a bounded trust-region
least-squares solve, best residual wins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from coopg2.dynamics import G2Curve, Geometry, Scenario, g2_regression
from coopg2.errors import DomainError, GridMismatch, InvalidRates, NonConvergence
from coopg2.quantum import DecayMode, LindbladSpec

MIN_FIT_POINTS = 10
DEFAULT_FIT_WINDOW = (1.0, math.inf)  # ps; excludes the polaron drop near tau = 0


def g2_ppd(tau, gamma: float, gamma_p: float, gamma_d: float, rtol: float = 1e-12):
    """Coincidences for PPD at equal pump and decay rates.

    ``1 - (exp(-(g + gp)|tau|) - exp(-(g + gp + gd)|tau|)) / 2``.  The first
    exponential is the population relaxation, the second the decay of the
    measurement-induced coherence, so ``gamma_d = 0`` gives 1 everywhere.
    """
    if not math.isclose(gamma, gamma_p, rel_tol=rtol, abs_tol=0.0):
        raise DomainError(f"closed form holds only for gamma_p == gamma (got {gamma_p} vs {gamma})")
    if min(gamma, gamma_p, gamma_d) < 0:
        raise InvalidRates("rates must be >= 0")
    t = np.abs(np.asarray(tau, dtype=float))
    g = gamma + gamma_p
    return 1.0 - 0.5 * (np.exp(-g * t) - np.exp(-(g + gamma_d) * t))


def g2_initial_drop(tau, a: float, gamma: float, gamma_p: float):
    """``1 - a exp(-(gamma + gamma_p)|tau|)``, with ``0 <= a <= 1``."""
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"a must lie in [0, 1], got {a}")
    t = np.abs(np.asarray(tau, dtype=float))
    return 1.0 - a * np.exp(-(gamma + gamma_p) * t)


# -- models ------------------------------------------------------------------

@dataclass(frozen=True)
class PpdModel:
    """``g2_ppd`` with fixed ``gamma = gamma_p``; free parameter ``gamma_d``."""

    gamma: float
    gamma_p: float
    name = "PpdModel"
    params = ("gamma_d",)

    def __post_init__(self):
        g2_ppd(0.0, self.gamma, self.gamma_p, 0.0)  # domain check

    def __call__(self, tau, gamma_d):
        return g2_ppd(tau, self.gamma, self.gamma_p, gamma_d)

    def starts(self, tau, g2):
        return [np.array([f * self.gamma]) for f in (0.1, 1.0, 10.0)]

    bounds = (np.array([0.0]), np.array([np.inf]))

    def fixed(self) -> dict:
        return dict(gamma=self.gamma, gamma_p=self.gamma_p)


@dataclass(frozen=True)
class InitialDropModel:
    """``g2_initial_drop`` with fixed rates; free parameter ``a``."""

    gamma: float
    gamma_p: float
    name = "InitialDropModel"
    params = ("a",)

    def __call__(self, tau, a):
        return g2_initial_drop(tau, float(np.clip(a, 0.0, 1.0)), self.gamma, self.gamma_p)

    def starts(self, tau, g2):
        a0 = float(np.clip(1.0 - g2[np.argmin(tau)], 0.0, 1.0))
        return [np.array([a0])]

    bounds = (np.array([0.0]), np.array([1.0]))

    def fixed(self) -> dict:
        return dict(gamma=self.gamma, gamma_p=self.gamma_p)


def model_for(name: str, curve: G2Curve | None = None, gamma: float | None = None,
              gamma_p: float | None = None):
    """Build a model by name, taking rates from the curve's scenario when not given."""
    if curve is not None and curve.scenario is not None:
        spec = curve.scenario.lindblad
        gamma = spec.gamma if gamma is None else gamma
        gamma_p = spec.gamma_p if gamma_p is None else gamma_p
    if gamma is None or gamma_p is None:
        raise ValueError("gamma and gamma_p are needed to build a fit model")
    models = {"PpdModel": PpdModel, "ppd": PpdModel, "InitialDropModel": InitialDropModel,
              "initial-drop": InitialDropModel}
    try:
        return models[name](gamma, gamma_p)
    except KeyError:
        raise ValueError(f"unknown model {name!r}") from None


@dataclass
class FitResult:
    params: dict
    residual_norm: float
    covariance_diag: dict
    model: str
    window: tuple = DEFAULT_FIT_WINDOW
    n_points: int = 0
    fixed: dict = field(default_factory=dict)

    @property
    def rms(self) -> float:
        return self.residual_norm / math.sqrt(max(self.n_points, 1))

    def as_dict(self) -> dict:
        return dict(model=self.model, params=self.params, residual_norm=self.residual_norm, rms=self.rms,
                    covariance_diag=self.covariance_diag, window_ps=list(self.window),
                    n_points=self.n_points, fixed=self.fixed)

    def save(self, path) -> Path:
        """Key/value text, one ``key: json`` per line."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{k}: {json.dumps(v, sort_keys=True)}" for k, v in self.as_dict().items()]
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "FitResult":
        d = {}
        for line in Path(path).read_text().splitlines():
            key, _, value = line.partition(":")
            d[key.strip()] = json.loads(value)
        return cls(d["params"], d["residual_norm"], d["covariance_diag"], d["model"],
                   tuple(d["window_ps"]), d["n_points"], d["fixed"])


def fit_model(curve: G2Curve, model, tau_window=DEFAULT_FIT_WINDOW, max_nfev: int = 2000) -> FitResult:
    """Least-squares fit of ``model`` to ``curve`` over ``tau_window`` (ps, inclusive).

    ``model`` is a model instance or a model name (rates then come from the
    curve's scenario).
    """
    if isinstance(model, str):
        model = model_for(model, curve)
    lo, hi = tau_window
    if lo > hi:
        raise GridMismatch("empty fit window")
    if lo < curve.tau[0] or (math.isfinite(hi) and hi > curve.tau[-1]):
        raise GridMismatch(f"fit window {tau_window} exceeds the curve support "
                           f"[{curve.tau[0]}, {curve.tau[-1]}]")
    sel = (curve.tau >= lo) & (curve.tau <= hi)
    tau, g2 = curve.tau[sel], curve.g2[sel]
    if tau.size < MIN_FIT_POINTS:
        raise GridMismatch(f"only {tau.size} samples in the fit window; need {MIN_FIT_POINTS}")

    def resid(p):
        return model(tau, *p) - g2

    best = None
    for x0 in model.starts(tau, g2):
        x0 = np.clip(x0, model.bounds[0], model.bounds[1])
        sol = least_squares(resid, x0, bounds=model.bounds, x_scale="jac", xtol=1e-15, ftol=1e-15,
                            gtol=1e-15, max_nfev=max_nfev, method="trf")
        if sol.status <= 0:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise NonConvergence(f"{model.name}: no start converged within {max_nfev} evaluations")
    res = best.fun
    dof = max(tau.size - best.x.size, 1)
    jtj = best.jac.T @ best.jac
    try:
        cov = np.linalg.inv(jtj) * (res @ res) / dof
        cov_diag = {n: float(cov[i, i]) for i, n in enumerate(model.params)}
    except np.linalg.LinAlgError:
        cov_diag = {n: math.inf for n in model.params}
    return FitResult({n: float(v) for n, v in zip(model.params, best.x)}, float(np.linalg.norm(res)), cov_diag,
                     model.name, (float(lo), float(hi)), int(tau.size), model.fixed())


def fitted_curve(curve: G2Curve, fit: FitResult, label: str = "") -> G2Curve:
    """Evaluate a fit on the curve's grid."""
    model = model_for(fit.model, gamma=fit.fixed["gamma"], gamma_p=fit.fixed["gamma_p"])
    values = model(curve.tau, *(fit.params[n] for n in model.params))
    return G2Curve(curve.tau.copy(), values, curve.I0, curve.scenario,
                   dict(curve.numerics, fit=fit.as_dict()), label or fit.model)


def superradiant_g2_lindblad(spec: LindbladSpec, tau) -> G2Curve:
    """Markovian g2 under collective decay, from the regression theorem."""
    if spec.decay_mode is not DecayMode.SUPERRADIANT:
        raise DomainError("superradiant_g2_lindblad needs superradiant decay")
    tau = np.asarray(tau, dtype=float)
    g2, i0 = g2_regression(spec, tau)
    sc = Scenario(spec, Geometry.SUPERRADIANT)
    return G2Curve(tau, g2, i0, sc, dict(method="regression"))
