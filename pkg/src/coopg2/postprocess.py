"""
Detector response and curve comparison.

The convolution treats the sampled g2 as piecewise linear in tau and
integrates each linear piece against the Gaussian exactly (error
functions), i.e. a product trapezoid rule on the nonuniform grid.  Negative
delays come from ``g2(-tau) = g2(tau)`` and beyond the last sample the curve
is held at its final value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from coopg2.dynamics import G2Curve
from coopg2.errors import DisjointSupport, GridTooCoarse

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
DETECTOR_FWHM_PS = 240.0


@dataclass(frozen=True)
class InstrumentResponse:
    """Gaussian timing jitter of full width at half maximum ``fwhm`` (ps)."""

    fwhm: float = DETECTOR_FWHM_PS
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported IRF kind {self.kind!r}")
        if not (math.isfinite(self.fwhm) and self.fwhm > 0):
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")

    @property
    def sigma(self) -> float:
        return self.fwhm * FWHM_TO_SIGMA

    def __call__(self, t):
        s = self.sigma
        return np.exp(-0.5 * (np.asarray(t, dtype=float) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))


def irf_weights(nodes: np.ndarray, points: np.ndarray, irf: InstrumentResponse) -> np.ndarray:
    """Matrix ``W`` with ``(W @ f)[i] = int f_lin(s) K(points[i] - s) ds`` over the real line.

    ``f_lin`` interpolates ``f`` linearly between ``nodes`` and is constant
    outside them.  Rows are renormalized to unit sum, so constants are
    reproduced to rounding.
    """
    sig = irf.sigma
    s0, s1 = nodes[:-1], nodes[1:]
    h = s1 - s0
    u0 = (s0[None, :] - points[:, None]) / sig
    u1 = (s1[None, :] - points[:, None]) / sig
    area = ndtr(u1) - ndtr(u0)
    dens = (np.exp(-0.5 * u1**2) - np.exp(-0.5 * u0**2)) / math.sqrt(2.0 * math.pi)  # sigma * (K(u1) - K(u0))
    frac = (points[:, None] - s0[None, :]) / h  # position of the kernel centre in segment units
    # f = f0 + (f1 - f0) (s - s0)/h, s - s0 = (s - tau) + (tau - s0)
    w1 = area * frac - sig * dens / h
    w0 = area - w1
    w = np.zeros((points.size, nodes.size))
    w[:, :-1] += w0
    w[:, 1:] += w1
    w[:, 0] += ndtr((nodes[0] - points) / sig)
    w[:, -1] += ndtr((points - nodes[-1]) / sig)
    return w / w.sum(axis=1, keepdims=True)


def convolve_irf(curve: G2Curve, irf: InstrumentResponse | float, label: str | None = None) -> G2Curve:
    """``(g2 * K)(tau)`` on the curve's own grid.

    Raises ``GridTooCoarse`` when a grid interval inside the kernel support
    is wider than ``fwhm / 10``.
    """
    if not isinstance(irf, InstrumentResponse):
        irf = InstrumentResponse(float(irf))
    tau = curve.tau
    if tau[0] != 0.0 and tau[0] > irf.fwhm / 10:
        raise GridTooCoarse(f"curve starts at {tau[0]} ps; the symmetric extension needs tau = 0")
    # Intervals that fit inside the kernel support (+-4 fwhm) must resolve it.  Wider
    # intervals are the delta limit, where the result is the sampled curve itself.
    h = np.diff(tau)
    bad = h[(h > irf.fwhm / 10) & (h <= 8 * irf.fwhm)]
    if bad.size:
        raise GridTooCoarse(f"grid spacing {bad.max():.3g} ps exceeds fwhm/10 = {irf.fwhm / 10:.3g} ps")
    pos, gpos = tau[tau > 0], curve.g2[tau > 0]
    zero, gzero = tau[tau == 0], curve.g2[tau == 0]
    nodes = np.concatenate([-pos[::-1], zero, pos])
    values = np.concatenate([gpos[::-1], gzero, gpos])
    out = irf_weights(nodes, tau, irf) @ values
    numerics = dict(curve.numerics, irf_fwhm_ps=irf.fwhm)
    return G2Curve(tau.copy(), out, curve.I0, curve.scenario, numerics,
                   curve.label if label is None else label)


def compare_curves(a: G2Curve, b: G2Curve, window=(0.0, math.inf)) -> dict:
    """Max-abs and RMS difference of ``a - b`` on ``a``'s samples inside ``window``.

    ``b`` is linearly interpolated when the grids differ.  The RMS is the
    plain root mean square over those samples.
    """
    lo = max(window[0], a.tau[0], b.tau[0])
    hi = min(window[1], a.tau[-1], b.tau[-1])
    sel = (a.tau >= lo) & (a.tau <= hi)
    if lo > hi or not np.any(sel):
        raise DisjointSupport(f"no common samples in window {tuple(window)}")
    tau = a.tau[sel]
    if b.tau.shape == a.tau.shape and np.array_equal(a.tau, b.tau):
        other = b.g2[sel]
    else:
        other = np.interp(tau, b.tau, b.g2)
    diff = a.g2[sel] - other
    return dict(max_abs=float(np.max(np.abs(diff))), rms=float(np.sqrt(np.mean(diff**2))),
                n=int(tau.size), window=(float(lo), float(hi)))
