import cmath
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from irs_rc.errors import InvalidParameterError, SingularSystemError
from irs_rc.reservoir import (
    EchoStateSystem,
    ReadoutTrainingSet,
    check_esp,
    enforce_esp,
    readout_loss,
    run_reservoir,
    train_readout,
)
from irs_rc.surface import AtomParams, SurfaceConfig, saturate

from conftest import crandn


def random_system(rng, n=10, k=2, rho=0.9, psat=1.0):
    return EchoStateSystem(
        input_map=crandn(rng, n, k),
        transition=rng.uniform(0, rho, n),
        saturation=rng.uniform(0.5 * psat, 1.5 * psat, n),
    )


def reference_recursion(b, alpha, psat, x, s0):
    """Straight-line scalar loop, written without the package's helpers."""
    n, t_len = b.shape[0], x.shape[1]
    s = [complex(v) for v in s0]
    out = np.zeros((n, t_len), dtype=complex)
    for t in range(t_len):
        for i in range(n):
            z = alpha[i] * s[i] + sum(b[i, k] * x[k, t] for k in range(b.shape[1]))
            m = abs(z)
            s[i] = 0j if m == 0 else cmath.rect(psat[i] * math.tanh(m / psat[i]), cmath.phase(z))
            out[i, t] = s[i]
    return out


def test_zero_input_zero_state(rng):
    sys = random_system(rng)
    out = run_reservoir(sys, np.zeros((2, 20)))
    assert np.all(out == 0)


def test_one_step_memoryless(rng):
    sys = EchoStateSystem(crandn(rng, 6, 2), np.zeros(6), saturation=0.8)
    x = crandn(rng, 2, 1)
    out = run_reservoir(sys, x, crandn(rng, 6))
    np.testing.assert_array_equal(out[:, 0], saturate(sys.input_map @ x[:, 0], 0.8))


def test_matches_independent_recursion(rng):
    sys = random_system(rng, n=6, k=2)
    x = crandn(rng, 2, 50)
    s0 = crandn(rng, 6)
    ours = run_reservoir(sys, x, s0)
    ref = reference_recursion(np.asarray(sys.input_map), sys.transition, sys.saturation, x, s0)
    # different (but equivalent) float expressions, so agreement is to rounding
    np.testing.assert_allclose(ours, ref, rtol=1e-12, atol=1e-14)


def test_deterministic(rng):
    sys = random_system(rng)
    x = crandn(rng, 2, 30)
    assert np.array_equal(run_reservoir(sys, x), run_reservoir(sys, x))


def test_from_surface(rng):
    atoms = tuple(AtomParams(memory_coeff=0.2 * i, input_gain=1 + i, saturation=2.0) for i in range(4))
    surf = SurfaceConfig(atoms=atoms, phases=np.zeros(4), mode="impaired")
    hf = crandn(rng, 4, 1)
    sys = EchoStateSystem.from_surface(surf, hf)
    np.testing.assert_allclose(sys.transition, [0, 0.2, 0.4, 0.6])
    np.testing.assert_allclose(sys.input_map[:, 0], (1 + np.arange(4)) * hf[:, 0])


def test_strict_transition_bound():
    with pytest.raises(InvalidParameterError):
        EchoStateSystem(np.ones((2, 1)), np.array([0.5, 1.0]))
    EchoStateSystem(np.ones((2, 1)), np.array([0.5, 1.0]), strict=False)


def test_esp_holds_for_contraction(rng):
    sys = EchoStateSystem(crandn(rng, 10, 1), np.full(10, 0.9), saturation=1.0)
    rep = check_esp(sys, horizon=200, tol=1e-4, seed=1)
    assert rep.holds
    assert rep.distance <= 0.9**200 * rep.initial_distance * (1 + 1e-9)


def test_esp_memoryless_is_exact(rng):
    sys = EchoStateSystem(crandn(rng, 5, 1), np.zeros(5), saturation=1.0)
    rep = check_esp(sys, horizon=3, tol=1e-12, seed=2)
    assert rep.trace[0] == 0.0


def test_esp_expansion_detected(rng):
    alpha = np.full(5, 0.5)
    alpha[2] = 1.2
    sys = EchoStateSystem(crandn(rng, 5, 1), alpha, saturation=1e6, strict=False)
    rep = check_esp(sys, horizon=50, tol=1e-4, seed=3, initial_gap=1e-2, input_scale=1e-3)
    assert not rep.holds
    assert np.all(rep.trace >= 0.5 * rep.initial_distance)


def test_enforce_esp_identity_and_clamp():
    ps = [AtomParams(memory_coeff=a) for a in (0.1, 0.5)]
    assert enforce_esp(ps, 0.95) == ps
    clamped = enforce_esp([AtomParams(memory_coeff=0.999, amplitude=0.7)], 0.95)[0]
    assert clamped.memory_coeff == 0.95 and clamped.amplitude == 0.7
    with pytest.raises(InvalidParameterError):
        enforce_esp(ps, 1.0)


def test_enforce_esp_property_sweep(rng):
    for i in range(100):
        ps = [AtomParams(memory_coeff=float(a), saturation=float(p))
              for a, p in zip(rng.uniform(0, 0.9999, 8), rng.uniform(0.3, 3, 8))]
        ps = enforce_esp(ps, 0.95)
        surf = SurfaceConfig(atoms=tuple(ps), phases=np.zeros(8), mode="impaired")
        sys = EchoStateSystem.from_surface(surf, crandn(rng, 8, 1))
        assert check_esp(sys, horizon=200, tol=1e-4, seed=i).holds


@pytest.mark.parametrize("t", [10, 100])
def test_esp_contraction_bound(rng, t):
    for i in range(20):
        sys = random_system(rng, n=8, k=1, rho=0.95)
        rho = sys.transition.max()
        rep = check_esp(sys, horizon=t, tol=1.0, seed=i)
        assert rep.trace[t - 1] <= rho**t * rep.initial_distance * (1 + 1e-9)


def test_readout_identity_features(rng):
    y = crandn(rng, 3, 16)
    w = train_readout(ReadoutTrainingSet(np.eye(16), y, ridge=0.0))
    np.testing.assert_allclose(w, y, atol=1e-12)


def test_readout_infinite_ridge(rng):
    s, y = crandn(rng, 8, 64), crandn(rng, 2, 64)
    w = train_readout(ReadoutTrainingSet(s, y, ridge=1e12))
    assert np.linalg.norm(w) < 1e-6 * np.linalg.norm(y @ s.conj().T)


def test_readout_optimality_and_oracle(rng):
    s, y = crandn(rng, 8, 64), crandn(rng, 2, 64)
    lam = 0.1
    w = train_readout(ReadoutTrainingSet(s, y, ridge=lam))
    grad = 2 * (w @ s - y) @ s.conj().T + 2 * lam * w
    assert np.linalg.norm(grad) < 1e-8
    # oracle: stacked least squares [S^T; sqrt(lam) I] W^T = [Y^T; 0]
    a = np.vstack([s.T, np.sqrt(lam) * np.eye(8)])
    b = np.vstack([y.T, np.zeros((8, 2))])
    w_ref = scipy.linalg.lstsq(a, b)[0].T
    assert np.max(np.abs(w - w_ref)) < 1e-8


def test_readout_washout(rng):
    s, y = crandn(rng, 4, 40), crandn(rng, 1, 40)
    w = train_readout(ReadoutTrainingSet(s, y, ridge=0.0, washout=10))
    w_ref = train_readout(ReadoutTrainingSet(s[:, 10:], y[:, 10:], ridge=0.0))
    np.testing.assert_allclose(w, w_ref, rtol=1e-12)


def test_readout_singular(rng):
    s = crandn(rng, 1, 20)
    s = np.vstack([s, 2 * s])
    with pytest.raises(SingularSystemError, match="rank 1 < 2"):
        train_readout(ReadoutTrainingSet(s, crandn(rng, 1, 20), ridge=0.0))


def test_ridge_monotone_loss(rng):
    s, y = crandn(rng, 10, 40), crandn(rng, 2, 40)
    losses = []
    for lam in (0.0, 1e-3, 1e-1, 1.0, 10.0, 1e3):
        ts = ReadoutTrainingSet(s, y, ridge=lam)
        losses.append(readout_loss(train_readout(ts), ts, include_ridge=False))
    assert all(b >= a - 1e-12 for a, b in zip(losses, losses[1:]))


def test_training_does_not_mutate_system(rng):
    sys = random_system(rng)
    b0, a0 = sys.input_map.copy(), sys.transition.copy()
    x = crandn(rng, 2, 80)
    states = run_reservoir(sys, x)
    w = train_readout(ReadoutTrainingSet(states, x, ridge=1e-3, washout=sys.washout))
    sys = sys.replace(readout=w)
    assert np.array_equal(sys.input_map, b0) and np.array_equal(sys.transition, a0)
    assert sys.readout.shape == (2, 10)


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 32), t=st.integers(33, 256), lam=st.floats(1e-4, 10), seed=st.integers(0, 2**31))
def test_readout_first_order_condition(d, t, lam, seed):
    rng = np.random.default_rng(seed)
    s, y = crandn(rng, d, t), crandn(rng, 2, t)
    w = train_readout(ReadoutTrainingSet(s, y, ridge=lam))
    grad = 2 * (w @ s - y) @ s.conj().T + 2 * lam * w
    assert np.linalg.norm(grad) < 1e-8 * max(1.0, np.linalg.norm(y @ s.conj().T))
