"""Two-photon coincidences of cooperative two-level emitters.

Markovian Lindblad dynamics (radiative decay, incoherent pumping, pure
dephasing) combined with per-emitter phonon environments represented as
process tensors.
"""

from coopg2.quantum import (
    DecayMode,
    DensityMatrix,
    EmitterOperator,
    LindbladSpec,
    Superoperator,
    apply_jump,
    lindblad_generator,
    propagator,
    steady_state,
)
from coopg2.bath import (
    DeformationPotentialSD,
    MemoryKernel,
    OhmicSD,
    SpectralDensity,
    TabulatedSD,
    bath_correlation,
    build_kernel,
    evaluate_sd,
    ibm_decoherence,
)
from coopg2.process_tensor import ProcessTensor, build_pt, propagate
from coopg2.dynamics import G2Curve, Geometry, Scenario, g2_curve, g2_zero, intensity

__version__ = "0.1.0"

__all__ = [
    "DecayMode",
    "DensityMatrix",
    "EmitterOperator",
    "LindbladSpec",
    "Superoperator",
    "apply_jump",
    "lindblad_generator",
    "propagator",
    "steady_state",
    "DeformationPotentialSD",
    "MemoryKernel",
    "OhmicSD",
    "SpectralDensity",
    "TabulatedSD",
    "bath_correlation",
    "build_kernel",
    "evaluate_sd",
    "ibm_decoherence",
    "ProcessTensor",
    "build_pt",
    "propagate",
    "G2Curve",
    "Geometry",
    "Scenario",
    "g2_curve",
    "g2_zero",
    "intensity",
]
