"""
Liouville-space algebra for two two-level emitters.

Basis ordering of the 4-dim Hilbert space is fixed everywhere in the package::

    index 0: |g1 g2>    index 1: |g1 e2>    index 2: |e1 g2>    index 3: |e1 e2>

i.e. ``index = 2*s1 + s2`` with ``s_i = 1`` for an excited emitter.
Density matrices are vectorized by column stacking, so the superoperator of
``rho -> O @ rho @ P`` is ``kron(P.T, O)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from coopg2.errors import DegenerateSteadyState, InvalidRates, NoPumpNoDecay

DIM = 4
LDIM = DIM * DIM

_SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e| on (g, e)
_ID2 = np.eye(2, dtype=complex)


class DecayMode(enum.Enum):
    INDEPENDENT = "independent"
    SUPERRADIANT = "superradiant"


@dataclass(frozen=True)
class EmitterOperator:
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (DIM, DIM):
            raise ValueError(f"emitter operator must be 4x4, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "EmitterOperator":
        return EmitterOperator(self.matrix.conj().T, self.label + "^dag")

    def __matmul__(self, other: "EmitterOperator") -> "EmitterOperator":
        return EmitterOperator(self.matrix @ other.matrix, f"{self.label}*{other.label}")


def _on_emitter(op2: np.ndarray, emitter: int) -> np.ndarray:
    if emitter == 1:
        return np.kron(op2, _ID2)
    if emitter == 2:
        return np.kron(_ID2, op2)
    raise ValueError("emitter must be 1 or 2")


def sigma_minus(emitter: int) -> EmitterOperator:
    return EmitterOperator(_on_emitter(_SIGMA_MINUS, emitter), f"sigma{emitter}-")


def sigma_plus(emitter: int) -> EmitterOperator:
    return EmitterOperator(_on_emitter(_SIGMA_MINUS.T, emitter), f"sigma{emitter}+")


def sigma_z(emitter: int) -> EmitterOperator:
    """Dephasing operator ``(|e><e| - |g><g|)/2`` of one emitter.

    With this normalisation ``L_{sigma_z}`` damps a single-emitter coherence
    at rate 1/2, so the two channels together damp the inter-emitter
    coherence ``<e1 g2|rho|g1 e2>`` at exactly ``gamma_d``.
    """
    z = np.diag([-0.5, 0.5]).astype(complex)
    return EmitterOperator(_on_emitter(z, emitter), f"sigma{emitter}z")


def projector_excited(emitter: int) -> EmitterOperator:
    e = np.diag([0.0, 1.0]).astype(complex)
    return EmitterOperator(_on_emitter(e, emitter), f"n{emitter}")


def detection_operator(phi1: float = 0.0, phi2: float = 0.0) -> EmitterOperator:
    """Lowering operator seen by the detectors, ``(e^{-i phi1} s1- + e^{-i phi2} s2-)/sqrt2``.

    With both phases zero this is the symmetric Dicke lowering operator.
    """
    m = (np.exp(-1j * phi1) * sigma_minus(1).matrix + np.exp(-1j * phi2) * sigma_minus(2).matrix) / np.sqrt(2)
    return EmitterOperator(m, "sigmaI-")


SIGMA_S_MINUS = EmitterOperator((sigma_minus(1).matrix + sigma_minus(2).matrix) / np.sqrt(2), "sigmaS-")
SIGMA_S_PLUS = SIGMA_S_MINUS.dag
SIGMA_A_MINUS = EmitterOperator((sigma_minus(1).matrix - sigma_minus(2).matrix) / np.sqrt(2), "sigmaA-")
SIGMA_A_PLUS = SIGMA_A_MINUS.dag
IDENTITY = EmitterOperator(np.eye(DIM), "1")

KET_GG = np.array([1, 0, 0, 0], dtype=complex)
KET_EE = np.array([0, 0, 0, 1], dtype=complex)
KET_PSI_S = SIGMA_S_PLUS.matrix @ KET_GG
KET_PSI_A = SIGMA_A_PLUS.matrix @ KET_GG


@dataclass(frozen=True)
class DensityMatrix:
    """Two-emitter density matrix.

    ``subnormalized`` marks post-measurement states whose trace (``weight``)
    is the unnormalized probability and must not be rescaled.
    """

    matrix: np.ndarray
    time: float = 0.0
    subnormalized: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (DIM, DIM):
            raise ValueError(f"density matrix must be 4x4, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_ket(cls, ket: np.ndarray, time: float = 0.0) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex)
        return cls(np.outer(ket, ket.conj()), time)

    @classmethod
    def from_vector(cls, vec: np.ndarray, time: float = 0.0, subnormalized: bool = False) -> "DensityMatrix":
        return cls(unvec(vec), time, subnormalized)

    @property
    def vector(self) -> np.ndarray:
        return vec(self.matrix)

    @property
    def weight(self) -> float:
        return float(np.trace(self.matrix).real)

    trace = weight

    @property
    def n_gg(self) -> float:
        return float(self.matrix[0, 0].real)

    @property
    def n_ge(self) -> float:
        return float(self.matrix[1, 1].real)

    @property
    def n_eg(self) -> float:
        return float(self.matrix[2, 2].real)

    @property
    def n_ee(self) -> float:
        return float(self.matrix[3, 3].real)

    @property
    def coherence(self) -> complex:
        """Inter-emitter coherence ``c = <e1 g2|rho|g1 e2>``."""
        return complex(self.matrix[2, 1])

    @property
    def n_symmetric(self) -> float:
        return float((KET_PSI_S.conj() @ self.matrix @ KET_PSI_S).real)

    @property
    def n_antisymmetric(self) -> float:
        return float((KET_PSI_A.conj() @ self.matrix @ KET_PSI_A).real)

    def expect(self, op: EmitterOperator) -> complex:
        return complex(np.trace(op.matrix @ self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.matrix / np.trace(self.matrix), self.time)


@dataclass(frozen=True)
class LindbladSpec:
    gamma: float = 0.0
    gamma_p: float = 0.0
    gamma_d: float = 0.0
    decay_mode: DecayMode = DecayMode.INDEPENDENT

    def __post_init__(self):
        for name in ("gamma", "gamma_p", "gamma_d"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidRates(f"{name} must be finite and >= 0, got {value}")
        object.__setattr__(self, "decay_mode", DecayMode(self.decay_mode))

    def replace(self, **changes) -> "LindbladSpec":
        values = dict(gamma=self.gamma, gamma_p=self.gamma_p, gamma_d=self.gamma_d, decay_mode=self.decay_mode)
        values.update(changes)
        return LindbladSpec(**values)


@dataclass(frozen=True)
class Superoperator:
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (LDIM, LDIM):
            raise ValueError(f"superoperator must be 16x16, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        return DensityMatrix.from_vector(self.matrix @ rho.vector, rho.time, rho.subnormalized)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix @ other.matrix)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix + other.matrix)


def vec(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix).reshape(-1, order="F")


def unvec(vector: np.ndarray) -> np.ndarray:
    return np.asarray(vector).reshape(DIM, DIM, order="F")


def sandwich(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Superoperator matrix of ``rho -> left @ rho @ right``."""
    return np.kron(np.asarray(right).T, np.asarray(left))


def dissipator(op: EmitterOperator) -> np.ndarray:
    """Matrix of ``L_O[rho] = O rho O^dag - {O^dag O, rho}/2``."""
    o = op.matrix
    od = o.conj().T
    odo = od @ o
    eye = np.eye(DIM)
    return sandwich(o, od) - 0.5 * (sandwich(odo, eye) + sandwich(eye, odo))


def lindblad_generator(spec: LindbladSpec) -> Superoperator:
    """Generator of the two-emitter master equation (rotating frame, H_sys = 0).

    ``gamma_p`` pumps each emitter incoherently, ``gamma_d`` dephases each
    emitter, and radiative decay is either independent (``gamma`` per emitter)
    or collective through the symmetric channel at ``2*gamma``.
    """
    gen = np.zeros((LDIM, LDIM), dtype=complex)
    if spec.gamma_p:
        gen += spec.gamma_p * (dissipator(sigma_plus(1)) + dissipator(sigma_plus(2)))
    if spec.gamma_d:
        gen += spec.gamma_d * (dissipator(sigma_z(1)) + dissipator(sigma_z(2)))
    if spec.gamma:
        if spec.decay_mode is DecayMode.INDEPENDENT:
            gen += spec.gamma * (dissipator(sigma_minus(1)) + dissipator(sigma_minus(2)))
        else:
            gen += 2.0 * spec.gamma * dissipator(SIGMA_S_MINUS)
    return Superoperator(gen)


def propagator(gen: Superoperator, dt: float) -> Superoperator:
    """``exp(L dt)`` by Pade scaling-and-squaring (``scipy.linalg.expm``)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return Superoperator(expm(gen.matrix * dt))


def steady_state(gen: Superoperator, rtol: float = 1e-10) -> DensityMatrix:
    """Unique stationary state from the null space of the generator."""
    mat = gen.matrix
    scale = np.max(np.abs(mat))
    if scale == 0:
        raise NoPumpNoDecay("generator is identically zero; every state is stationary")
    _, svals, vh = np.linalg.svd(mat)
    null = svals < rtol * scale
    if np.count_nonzero(null) > 1:
        raise DegenerateSteadyState(f"null space has dimension {np.count_nonzero(null)}")
    rho = unvec(vh[-1].conj())
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho)


def apply_jump(rho: DensityMatrix, op: EmitterOperator) -> DensityMatrix:
    """Unnormalized post-detection state ``O rho O^dag`` (weight = its trace)."""
    return DensityMatrix(op.matrix @ rho.matrix @ op.matrix.conj().T, rho.time, subnormalized=True)
