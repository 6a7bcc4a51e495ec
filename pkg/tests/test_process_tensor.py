import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from coopg2.bath import DeformationPotentialSD, MemoryKernel, build_kernel
from coopg2.errors import GridMismatch
from coopg2.process_tensor import (
    EE,
    GG,
    Evolution,
    ProcessTensor,
    admissible,
    brute_force_influence,
    build_pt,
    initial_state,
    insert_operator,
    kron_factors,
    propagate,
    to_alpha_order,
    trivial_pt,
)
from coopg2.quantum import (
    IDENTITY,
    KET_EE,
    KET_PSI_S,
    SIGMA_S_MINUS,
    SIGMA_S_PLUS,
    DecayMode,
    DensityMatrix,
    LindbladSpec,
    lindblad_generator,
    propagator,
)

SPLUS = (0, 0, 1, 1)
SMINUS = (0, 1, 0, 1)


def path_sum(eta, path):
    """Feynman-Vernon exponent summed directly over site pairs (k >= k')."""
    expo = 0j
    for k, a in enumerate(path):
        for kp in range(k + 1):
            lag = k - kp
            if lag >= len(eta):
                continue
            b = path[kp]
            expo += (SPLUS[a] - SMINUS[a]) * (eta[lag] * SPLUS[b] - np.conj(eta[lag]) * SMINUS[b])
    return np.exp(-expo)


def random_kernel(seed, n_lags, scale=0.3, dt=0.1):
    rng = np.random.default_rng(seed)
    eta = scale * (rng.normal(size=n_lags + 1) + 1j * rng.normal(size=n_lags + 1))
    eta[0] = abs(eta[0].real) + 1j * eta[0].imag
    return MemoryKernel(dt, n_lags, eta)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), n_lags=st.integers(1, 3), n=st.integers(1, 4))
def test_contraction_equals_path_sum(seed, n_lags, n):
    kern = random_kernel(seed, n_lags)
    pt = build_pt(kern, n_steps=n, svd_threshold=1e-14)
    full = pt.contract(n)
    ref = np.array([path_sum(kern.eta, p) for p in itertools.product(range(4), repeat=n)]).reshape((4,) * n)
    assert np.max(np.abs(full - ref)) < 1e-9 * max(1.0, np.max(np.abs(ref)))
    assert np.allclose(brute_force_influence(kern, n), ref, rtol=1e-12, atol=0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_single_switch_contraction_on_admissible_paths(seed):
    kern = random_kernel(seed, 2, scale=0.2)
    n = 4
    pt = build_pt(kern, n_steps=n, svd_threshold=1e-14, paths="single-switch")
    full = pt.contract(n)
    for path in itertools.product(range(4), repeat=n):
        if admissible(path, "single-switch"):
            assert abs(full[path] - path_sum(kern.eta, path)) < 1e-9
        else:
            assert full[path] == 0


def test_admissible_paths():
    assert admissible((0, 3, 0, 1, 1), "single-switch")
    assert not admissible((0, 1, 0), "single-switch")  # coherence back to population
    assert not admissible((1, 2), "single-switch")
    assert admissible((1, 2, 0), "all")


def test_zero_kernel_is_trivial():
    kern = MemoryKernel(0.1, 3, np.zeros(4, complex))
    pt = build_pt(kern)
    assert pt.is_trivial()
    assert np.allclose(pt.contract(3), 1.0)


def test_converged_blocks_repeat_and_respect_causality():
    kern = random_kernel(7, 3, scale=0.05)
    pt = build_pt(kern, svd_threshold=1e-9)
    assert pt.repeat_block is not None
    assert pt.block(pt.n_steps + 50) is pt.repeat_block
    # tracing a diagonal site leaves the previous closure
    for step in range(1, pt.n_steps + 2):
        q_prev, q = pt.closure(step - 1), pt.closure(step)
        for a in (GG, EE):
            assert np.max(np.abs(pt.block(step)[:, a, :] @ q - q_prev)) < 1e-12
    n = pt.n_steps + 3
    ref = np.array([path_sum(kern.eta, p) for p in itertools.product(range(4), repeat=n)]).reshape((4,) * n)
    assert np.max(np.abs(pt.contract(n) - ref)) < 1e-6


def test_finite_pt_horizon():
    pt = build_pt(random_kernel(3, 2), n_steps=3)
    with pytest.raises(GridMismatch):
        pt.block(4)


def test_save_load_roundtrip(tmp_path):
    pt = build_pt(random_kernel(5, 2, scale=0.05))
    pt.save(tmp_path / "pt.npz")
    back = ProcessTensor.load(tmp_path / "pt.npz", expect=dict(dt=pt.dt))
    assert back.converged_at == pt.converged_at
    assert np.array_equal(back.repeat_block, pt.repeat_block)
    with pytest.raises(ValueError):
        ProcessTensor.load(tmp_path / "pt.npz", expect=dict(dt=0.3))


def test_superohmic_bond_dimension(store):
    pt = store.process_tensor(DeformationPotentialSD(), 0.1, 10.0, 1e-8, 256, "single-switch")
    dims = pt.bond_dims[:100]
    assert len(dims) == 100
    assert max(dims) <= 64


def test_kron_factors():
    spec = LindbladSpec(0.3, 0.2, 0.1)
    m = to_alpha_order(propagator(lindblad_generator(spec), 0.5).matrix)
    a, b = kron_factors(m)
    assert np.allclose(np.kron(a, b), m, atol=1e-13)
    sr = to_alpha_order(propagator(lindblad_generator(spec.replace(decay_mode=DecayMode.SUPERRADIANT)), 0.5).matrix)
    assert kron_factors(sr) is None


RHO_MIX = DensityMatrix(0.6 * np.outer(KET_PSI_S, KET_PSI_S.conj()) + 0.4 * np.outer(KET_EE, KET_EE))


@pytest.mark.parametrize("mode", list(DecayMode))
def test_markovian_propagation_matches_expm(mode):
    spec = LindbladSpec(0.4, 0.3, 0.2, mode)
    gen = lindblad_generator(spec)
    dt = 0.1
    states = propagate(RHO_MIX, {}, propagator(gen, dt), 20, dt=dt)
    for k, rho in enumerate(states):
        ref = expm(gen.matrix * k * dt) @ RHO_MIX.vector
        assert np.max(np.abs(rho.vector - ref)) < 1e-10
    triv = propagate(RHO_MIX, {1: trivial_pt(dt), 2: trivial_pt(dt)}, propagator(gen, dt), 20)
    assert all(np.allclose(a.matrix, b.matrix, atol=1e-14) for a, b in zip(states, triv))


def test_insertion_identities():
    dt = 0.1
    state = initial_state(DensityMatrix.from_ket(KET_EE), dt)
    assert np.allclose(insert_operator(state, IDENTITY, IDENTITY).reduced().matrix, state.reduced().matrix)
    post = insert_operator(state, SIGMA_S_MINUS, SIGMA_S_MINUS)
    assert np.allclose(post.reduced().matrix, np.outer(KET_PSI_S, KET_PSI_S.conj()))


def test_insertion_trace_is_intensity():
    kern = build_kernel(DeformationPotentialSD(), 0.5, 2.0)
    pt = build_pt(kern)
    spec = LindbladSpec(0.05, 0.05)
    evo = Evolution({1: pt, 2: pt}, propagator(lindblad_generator(spec), 0.5))
    state, _ = evo.run(evo.start(RHO_MIX), 12, sample_steps=[])
    rho = state.reduced().matrix
    post = insert_operator(state, SIGMA_S_MINUS, SIGMA_S_MINUS)
    assert np.isclose(np.trace(post.reduced().matrix), np.trace((SIGMA_S_PLUS @ SIGMA_S_MINUS).matrix @ rho))


@pytest.mark.parametrize("mode", list(DecayMode))
def test_stationary_state_is_fixed_point_of_propagation(mode):
    kern = build_kernel(DeformationPotentialSD(), 0.5, 2.0)
    pt = build_pt(kern, svd_threshold=1e-10, paths="all")
    spec = LindbladSpec(0.2, 0.1, 0.0, mode)
    evo = Evolution({1: pt, 2: pt}, propagator(lindblad_generator(spec), 0.5))
    st0 = evo.stationary()
    assert np.isclose(np.trace(st0.reduced().matrix), 1.0)
    later, _ = evo.run(st0, 200, sample_steps=[])
    assert np.max(np.abs(later.reduced().matrix - st0.reduced().matrix)) < 1e-10
    # and long propagation from the ground state lands on it
    from_gg, _ = evo.run(evo.start(DensityMatrix.from_ket(np.eye(4)[0])), 600, sample_steps=[])
    assert np.max(np.abs(from_gg.reduced().matrix - st0.reduced().matrix)) < 1e-8


def test_single_switch_needs_sector_preserving_dynamics():
    kern = build_kernel(DeformationPotentialSD(), 0.5, 1.0)
    pt = build_pt(kern, paths="single-switch")
    sr = LindbladSpec(0.2, 0.1, 0.0, DecayMode.SUPERRADIANT)
    with pytest.raises(ValueError):
        Evolution({1: pt, 2: pt}, propagator(lindblad_generator(sr), 0.5))
    evo = Evolution({1: pt, 2: pt}, propagator(lindblad_generator(LindbladSpec(0.2, 0.1)), 0.5))
    state = evo.insert(evo.start(DensityMatrix.from_ket(KET_EE)), SIGMA_S_MINUS, SIGMA_S_MINUS)
    with pytest.raises(ValueError):
        evo.insert(state, SIGMA_S_MINUS, SIGMA_S_MINUS)


def test_ground_state_paths_have_unit_weight(store):
    pt = store.process_tensor(DeformationPotentialSD(), 0.1, 10.0, 1e-8, 256, "single-switch")
    v = np.ones(1, complex)
    for step in range(1, 301):
        v = v @ pt.block(step)[:, GG, :]
        if step in (1, 50, 100, 101, 300):
            assert abs(v @ pt.closure(step) - 1) < 1e-10


def test_reduced_state_hermitian_and_subnormalized():
    kern = build_kernel(DeformationPotentialSD(), 0.5, 2.0)
    pt = build_pt(kern)
    evo = Evolution({1: pt, 2: pt}, propagator(lindblad_generator(LindbladSpec(0.05, 0.02, 0.01)), 0.5))
    state = evo.start(RHO_MIX)
    for k in range(30):
        state = evo.step(state)
        if k == 10:
            state = insert_operator(state, SIGMA_S_MINUS, SIGMA_S_MINUS)
        rho = state.reduced().matrix
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
        assert np.trace(rho).real <= 1 + 1e-8


def test_closures_match_shorter_tensor():
    kern = random_kernel(11, 3, scale=0.1)
    long = build_pt(kern, n_steps=8, svd_threshold=1e-13)
    spec = LindbladSpec(0.3, 0.2, 0.1)
    m = propagator(lindblad_generator(spec), 0.1)
    for n in (2, 5):
        short = build_pt(kern, n_steps=n, svd_threshold=1e-13)
        a = propagate(RHO_MIX, {1: long, 2: long}, m, n)[-1].matrix
        b = propagate(RHO_MIX, {1: short, 2: short}, m, n)[-1].matrix
        assert np.max(np.abs(a - b)) < 1e-8


def test_markovian_limit_is_linear_in_coupling():
    base = random_kernel(4, 3, scale=0.1)
    m = propagator(lindblad_generator(LindbladSpec(0.3, 0.2)), 0.1)
    ref = propagate(RHO_MIX, {}, m, 10)[-1].matrix
    devs = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        pt = build_pt(base.scaled(eps), n_steps=10, svd_threshold=1e-14)
        devs.append(np.max(np.abs(propagate(RHO_MIX, {1: pt, 2: pt}, m, 10)[-1].matrix - ref)))
    assert devs[0] > 0
    assert devs[0] / devs[1] == pytest.approx(2.0, rel=0.02)
    assert devs[1] / devs[2] == pytest.approx(2.0, rel=0.02)


def test_compression_monotonic():
    kern = random_kernel(9, 3, scale=0.8)
    n = 4
    ref = np.array([path_sum(kern.eta, p) for p in itertools.product(range(4), repeat=n)]).reshape((4,) * n)
    errs = [np.max(np.abs(build_pt(kern, n_steps=n, svd_threshold=thr).contract(n) - ref))
            for thr in (1e-1, 1e-2, 1e-3, 1e-5, 1e-8)]
    assert all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6


def test_trotter_error_is_first_order():
    # pumped and decaying emitters with phonons: step splitting error O(dt)
    sd = DeformationPotentialSD()
    spec = LindbladSpec(0.5, 0.5, 0.2)
    rho0 = DensityMatrix.from_ket(KET_PSI_S)
    vals = []
    for dt in (0.4, 0.2, 0.1):
        pt = build_pt(build_kernel(sd, dt, 1.2), max_bond=1024)
        states = propagate(rho0, {1: pt, 2: pt}, propagator(lindblad_generator(spec), dt), int(round(2.4 / dt)))
        vals.append(states[-1].matrix)
    d1 = np.max(np.abs(vals[0] - vals[1]))
    d2 = np.max(np.abs(vals[1] - vals[2]))
    assert d1 / d2 == pytest.approx(2.0, rel=0.25)
