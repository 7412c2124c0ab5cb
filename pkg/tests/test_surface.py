import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irs_rc.errors import DimensionError, InvalidParameterError
from irs_rc.surface import (
    DEVICE_PROFILES,
    AtomParams,
    AtomState,
    PhaseCodebook,
    SurfaceConfig,
    apply_impairment,
    atom_step,
    atoms_from_profile,
    ideal_reflect,
    internal_response,
    quantize_phase,
    saturate,
    surface_step,
)

from conftest import crandn


def random_surface(rng, n, mode="ideal", memory=None):
    atoms = tuple(
        AtomParams(
            memory_coeff=float(rng.uniform(0, 0.9)) if memory is None else memory,
            input_gain=float(rng.uniform(0.5, 1.5)),
            amplitude=float(rng.uniform(0.1, 1.0)),
            saturation=float(rng.uniform(0.5, 2.0)),
        )
        for _ in range(n)
    )
    return SurfaceConfig(atoms=atoms, phases=rng.uniform(0, 2 * np.pi, n), mode=mode)


def test_identity_reflection(rng):
    u = crandn(rng, 8)
    s = SurfaceConfig.uniform(8)
    assert np.array_equal(ideal_reflect(s, u), u)


def test_sign_flip(rng):
    u = crandn(rng, 8)
    s = SurfaceConfig.uniform(8, phases=np.full(8, np.pi))
    np.testing.assert_allclose(ideal_reflect(s, u), -u, atol=1e-15)


def test_ideal_reflect_matches_dense_diagonal(rng):
    s = random_surface(rng, 12)
    u = crandn(rng, 12)
    dense = np.zeros((12, 12), dtype=complex)
    for n, (p, th) in enumerate(zip(s.atoms, s.phases)):
        dense[n, n] = p.amplitude * np.exp(1j * th)
    # equal up to BLAS summation order
    np.testing.assert_allclose(ideal_reflect(s, u), dense @ u, rtol=1e-14, atol=0)


def test_ideal_reflect_dimension_error():
    with pytest.raises(DimensionError):
        ideal_reflect(SurfaceConfig.uniform(3), np.ones(4))


def test_rescap_memory_coefficient():
    p = AtomParams.from_rescap(500.0, 2e-12, 1e-9)
    assert p.memory_coeff == pytest.approx(math.exp(-1.0))
    assert AtomParams.from_rescap(0.0, 1e-12, 1e-9).memory_coeff == 0.0


@pytest.mark.parametrize("name", sorted(DEVICE_PROFILES))
def test_profiles_are_valid(name):
    hrs, lrs = atoms_from_profile(name, ["hrs", "lrs"])
    # higher resistance => longer time constant => more memory
    assert hrs.memory_coeff > lrs.memory_coeff
    assert 0 < lrs.amplitude <= 1 and 0 < hrs.amplitude <= 1


def test_atom_params_invariants():
    with pytest.raises(InvalidParameterError):
        AtomParams(memory_coeff=1.0)
    with pytest.raises(InvalidParameterError):
        AtomParams(amplitude=1.2)
    with pytest.raises(InvalidParameterError):
        AtomParams(amplitude=0.0)


def test_atom_step_memoryless_linear_limit(rng):
    for _ in range(20):
        u = complex(crandn(rng))
        p = AtomParams(memory_coeff=0.0, input_gain=1.0, amplitude=0.7, saturation=1e9)
        th = float(rng.uniform(0, 2 * np.pi))
        _, out = atom_step(complex(crandn(rng)), u, p, th)
        ref = 0.7 * np.exp(1j * th) * u
        assert abs(out - ref) <= 1e-6 * abs(ref)


def test_atom_step_fading_memory_bound(rng):
    p = AtomParams(memory_coeff=0.6, saturation=0.8)
    s0 = complex(3 * crandn(rng))
    s = s0
    for t in range(1, 60):
        s, _ = atom_step(s, 0j, p, 0.3)
        assert abs(s) <= 0.6**t * abs(s0) * (1 + 1e-12)


def test_atom_step_geometric_series_limit():
    # linear regime: s_t = beta u (1 - alpha^t) / (1 - alpha)
    p = AtomParams(memory_coeff=0.5, input_gain=1.0, saturation=1e6)
    u = 0.1
    s = 0j
    for _ in range(200):
        s, _ = atom_step(s, u, p, 0.0)
    assert abs(s - 1.0 * u / (1 - 0.5)) < 1e-3


def test_saturate_properties(rng):
    z = 5 * crandn(rng, 1000)
    f = saturate(z, 1.3)
    np.testing.assert_allclose(np.angle(f[np.abs(z) > 0]), np.angle(z[np.abs(z) > 0]), atol=1e-12)
    assert np.all(np.abs(f) <= 1.3 + 1e-12)
    assert np.all(np.abs(f) <= np.abs(z) + 1e-15)
    assert saturate(0j, 2.0) == 0
    np.testing.assert_array_equal(saturate(z, np.inf), z)


def test_surface_step_permutation_equivariance(rng):
    s = random_surface(rng, 7, mode="impaired")
    perm = rng.permutation(7)
    sp = SurfaceConfig(atoms=tuple(s.atoms[i] for i in perm), phases=s.phases[perm], mode="impaired")
    st0 = AtomState(crandn(rng, 7))
    u = crandn(rng, 7)
    a_state, a_out = surface_step(st0, u, s)
    b_state, b_out = surface_step(AtomState(st0.state[perm]), u[perm], sp)
    np.testing.assert_allclose(b_out, a_out[perm], rtol=0, atol=1e-15)
    np.testing.assert_allclose(b_state.state, a_state.state[perm], rtol=0, atol=1e-15)


def test_surface_step_single_atom_matches_atom_step(rng):
    p = AtomParams(memory_coeff=0.4, input_gain=0.9, amplitude=0.8, saturation=0.7)
    s = SurfaceConfig(atoms=(p,), phases=[1.1], mode="impaired")
    st0 = AtomState([0.2 - 0.1j])
    u = complex(crandn(rng))
    new, out = surface_step(st0, np.array([u]), s)
    ref_state, ref_out = atom_step(0.2 - 0.1j, u, p, 1.1)
    assert new.state[0] == ref_state
    assert out[0] == ref_out


def test_impaired_limit_matches_ideal(rng):
    for _ in range(20):
        n = int(rng.integers(1, 20))
        ideal = random_surface(rng, n, mode="ideal")
        atoms = tuple(AtomParams(memory_coeff=0.0, input_gain=1.0, amplitude=p.amplitude, saturation=1e9)
                      for p in ideal.atoms)
        imp = SurfaceConfig(atoms=atoms, phases=ideal.phases, mode="impaired")
        u = crandn(rng, n)
        _, a = surface_step(AtomState(crandn(rng, n)), u, ideal)
        _, b = surface_step(AtomState(crandn(rng, n)), u, imp)
        assert np.max(np.abs(a - b) / np.abs(a)) < 1e-6


def test_surface_step_dimension_error():
    with pytest.raises(DimensionError):
        surface_step(AtomState.zeros(3), np.ones(4), SurfaceConfig.uniform(3))


def test_internal_response_matches_stepping(rng):
    s = random_surface(rng, 5, mode="impaired")
    u = crandn(rng, 5, 30)
    out, final = internal_response(s, u)
    state = AtomState.zeros(5)
    for t in range(30):
        state, refl = surface_step(state, u[:, t], s)
        np.testing.assert_allclose(s.coefficients() * out[:, t], refl, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(final.state, state.state)


def test_cascaded_two_stage(rng):
    p = AtomParams(memory_coeff=0.5, memory_coeff2=0.3, input_gain2=1.0, saturation=1e9)
    s = SurfaceConfig(atoms=(p,), phases=[0.0], mode="impaired")
    state = AtomState.zeros(1)
    u = np.array([1.0 + 0j])
    s1 = s2 = 0.0
    for _ in range(10):
        state, out = surface_step(state, u, s)
        s1 = 0.5 * s1 + 1.0
        s2 = 0.3 * s2 + s1
        assert out[0] == pytest.approx(s2, rel=1e-6)


def test_atom_state_reset(rng):
    st0 = AtomState(crandn(rng, 4), crandn(rng, 4))
    st0.reset()
    assert np.all(st0.state == 0) and np.all(st0.state2 == 0)


def test_quantize_nearest():
    assert quantize_phase(0.1, PhaseCodebook(1)) == (0, 0.0)


def test_quantize_tie_goes_low():
    assert quantize_phase(np.pi / 4, PhaseCodebook(2))[0] == 0
    # wrapped tie between the last phase and 0
    assert quantize_phase(2 * np.pi - np.pi / 4, PhaseCodebook(2))[0] == 0


def test_quantize_error_bound(rng):
    cb = PhaseCodebook(3)
    theta = rng.uniform(-20, 20, 100_000)
    idx, q = quantize_phase(theta, cb)
    d = np.abs(np.angle(np.exp(1j * (theta - q))))
    assert d.max() <= np.pi / 8 + 1e-12
    # exhaustive: no codebook entry is strictly closer
    all_d = np.abs(np.angle(np.exp(1j * (theta[:, None] - cb.phases))))
    assert np.all(d <= all_d.min(axis=1) + 1e-12)


@given(bits=st.integers(1, 5), k=st.integers(0, 31))
def test_quantize_idempotent(bits, k):
    cb = PhaseCodebook(bits)
    k = k % cb.size
    assert quantize_phase(cb.phases[k], cb) == (k, cb.phases[k])


def test_codebook_sorted():
    ph = PhaseCodebook(4).phases
    assert np.all(np.diff(ph) > 0) and ph[0] == 0 and ph[-1] < 2 * np.pi


def test_impairment_off_limit(rng):
    s = random_surface(rng, 10, mode="impaired")
    imp = apply_impairment(s, additive_noise=0.0, phase_error=1e9, seed=3)
    u = crandn(rng, 10)
    _, a = surface_step(AtomState.zeros(10), u, s)
    _, b = surface_step(AtomState.zeros(10), u, imp, imp.draw_distortion(np.random.default_rng(0), 1)[:, 0])
    assert np.max(np.abs(a - b)) < 1e-4


def test_impairment_distortion_power():
    s = SurfaceConfig.uniform(64)
    imp = apply_impairment(s, additive_noise=1.0, seed=1)
    d = imp.draw_distortion(np.random.default_rng(5), 100_000)
    per_atom = np.mean(np.abs(d) ** 2, axis=1)
    assert np.all(np.abs(per_atom - 1.0) < 0.03)


def test_phase_error_keeps_amplitudes(rng):
    s = random_surface(rng, 16)
    imp = apply_impairment(s, phase_error=2.0, seed=4)
    np.testing.assert_array_equal(imp.amplitude, s.amplitude)
    np.testing.assert_allclose(np.abs(imp.coefficients()), s.amplitude, rtol=1e-15)
    assert np.any(imp.phase_offsets != 0)
    # offsets survive re-commanding the phases
    assert np.array_equal(imp.with_phases(np.zeros(16)).phase_offsets, imp.phase_offsets)


def test_impairment_rejects_negative():
    with pytest.raises(InvalidParameterError):
        apply_impairment(SurfaceConfig.uniform(2), additive_noise=-1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12), scale=st.floats(0.01, 100))
def test_passivity(seed, n, scale):
    rng = np.random.default_rng(seed)
    u = scale * crandn(rng, n)
    ideal = random_surface(rng, n)
    _, out = surface_step(AtomState.zeros(n), u, ideal)
    assert np.all(np.abs(out) <= np.abs(u) * (1 + 1e-12))
    imp = random_surface(rng, n, mode="impaired")
    state = AtomState(crandn(rng, n))
    for _ in range(5):
        state, out = surface_step(state, scale * crandn(rng, n), imp)
        assert np.all(np.abs(out) <= imp.amplitude.max() * imp.saturation + 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fading_memory_geometric(seed):
    rng = np.random.default_rng(seed)
    s = random_surface(rng, 6, mode="impaired")
    state = AtomState(5 * crandn(rng, 6))
    norm0 = np.linalg.norm(state.state)
    rho = s.alpha.max()
    for t in range(1, 30):
        state, _ = surface_step(state, np.zeros(6), s)
        assert np.linalg.norm(state.state) <= rho**t * norm0 * (1 + 1e-12) + 1e-300
