"""Meta-surface models.

Two modes are supported.  ``ideal`` is the diagonal reflection
``out_n = a_n exp(j theta_n) in_n``.  ``impaired`` gives each atom an
internal complex state updated by

    z = alpha * s + beta * u
    s' = f(z),  f(z) = p_sat * tanh(|z| / p_sat) * exp(j arg z)
    out = a * exp(j theta) * s'

where ``alpha = exp(-T_s / RC)`` comes from a first-order discretisation of
the resistor-capacitor cell.  Atoms never couple to each other.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, InvalidParameterError
from .rng import complex_normal

__all__ = [
    "AtomParams",
    "AtomState",
    "DeviceProfile",
    "DEVICE_PROFILES",
    "PhaseCodebook",
    "SurfaceConfig",
    "saturate",
    "ideal_reflect",
    "atom_step",
    "surface_step",
    "internal_response",
    "quantize_phase",
    "apply_impairment",
    "atoms_from_profile",
]

IDEAL = "ideal"
IMPAIRED = "impaired"
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class AtomParams:
    """Per-atom device parameters.

    ``memory_coeff2``, when set, adds a second (alpha, beta) stage in series
    with the first one.
    """

    memory_coeff: float = 0.0
    input_gain: float = 1.0
    amplitude: float = 1.0
    saturation: float = math.inf
    resistance: Optional[float] = None
    capacitance: Optional[float] = None
    sample_period: Optional[float] = None
    memory_coeff2: Optional[float] = None
    input_gain2: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.memory_coeff < 1.0:
            raise InvalidParameterError(f"memory_coeff must lie in [0, 1), got {self.memory_coeff}")
        if self.memory_coeff2 is not None and not 0.0 <= self.memory_coeff2 < 1.0:
            raise InvalidParameterError(f"memory_coeff2 must lie in [0, 1), got {self.memory_coeff2}")
        if not 0.0 < self.amplitude <= 1.0:
            raise InvalidParameterError(f"amplitude must lie in (0, 1], got {self.amplitude}")
        if not self.input_gain > 0 or not self.input_gain2 > 0:
            raise InvalidParameterError("input gains must be positive")
        if not self.saturation > 0:
            raise InvalidParameterError(f"saturation must be positive, got {self.saturation}")

    @classmethod
    def from_rescap(
        cls,
        resistance: float,
        capacitance: float,
        sample_period: float,
        amplitude: float = 1.0,
        saturation: float = math.inf,
        input_gain: float = 1.0,
    ) -> "AtomParams":
        if resistance < 0 or capacitance < 0 or sample_period <= 0:
            raise InvalidParameterError("resistance/capacitance must be >= 0 and sample_period > 0")
        tau = resistance * capacitance
        alpha = math.exp(-sample_period / tau) if tau > 0 else 0.0
        return cls(
            memory_coeff=alpha,
            input_gain=input_gain,
            amplitude=amplitude,
            saturation=saturation,
            resistance=resistance,
            capacitance=capacitance,
            sample_period=sample_period,
        )


@dataclass(frozen=True)
class DeviceProfile:
    """Two-state (HRS/LRS) device table.  All values are modelling assumptions."""

    r_hrs: float
    r_lrs: float
    capacitance: float
    sample_period: float
    a_hrs: float
    a_lrs: float
    saturation: float
    input_gain: float = 1.0

    def params(self, state: str) -> AtomParams:
        if state == "hrs":
            r, a = self.r_hrs, self.a_hrs
        elif state == "lrs":
            r, a = self.r_lrs, self.a_lrs
        else:
            raise InvalidParameterError(f"resistance state must be 'hrs' or 'lrs', got {state!r}")
        return AtomParams.from_rescap(
            r, self.capacitance, self.sample_period, amplitude=a,
            saturation=self.saturation, input_gain=self.input_gain,
        )


DEVICE_PROFILES = {
    # alpha(HRS) = exp(-1/1.2) ~ 0.43, alpha(LRS) = exp(-10) ~ 4.5e-5
    "rescap-default": DeviceProfile(
        r_hrs=600.0, r_lrs=50.0, capacitance=2e-12, sample_period=1e-9,
        a_hrs=0.95, a_lrs=0.8, saturation=1.0,
    ),
    "fefet-like": DeviceProfile(
        r_hrs=1000.0, r_lrs=100.0, capacitance=1e-12, sample_period=1e-9,
        a_hrs=0.9, a_lrs=0.7, saturation=1.5,
    ),
    "reram-like": DeviceProfile(
        r_hrs=2000.0, r_lrs=200.0, capacitance=1e-12, sample_period=1e-9,
        a_hrs=0.85, a_lrs=0.6, saturation=0.8,
    ),
}


def atoms_from_profile(profile: str | DeviceProfile, states: Sequence[str]) -> tuple[AtomParams, ...]:
    if isinstance(profile, str):
        try:
            profile = DEVICE_PROFILES[profile]
        except KeyError:
            raise InvalidParameterError(
                f"unknown device profile {profile!r}; known: {sorted(DEVICE_PROFILES)}"
            ) from None
    return tuple(profile.params(s) for s in states)


@dataclass(frozen=True)
class PhaseCodebook:
    bits: int

    def __post_init__(self):
        if self.bits < 1:
            raise InvalidParameterError(f"codebook needs at least one bit, got {self.bits}")

    @property
    def size(self) -> int:
        return 2**self.bits

    @property
    def phases(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.size) / self.size

    @property
    def resolution(self) -> float:
        """Worst-case quantisation error, pi / 2^bits."""
        return np.pi / self.size


def quantize_phase(theta, cb: PhaseCodebook):
    """Nearest codebook phase by wrapped angular distance.

    Works elementwise on arrays.  Ties (within 1e-12 rad) go to the lower
    index.  Returns ``(index, quantized_phase)``.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidParameterError("phase must be finite")
    phases = cb.phases
    delta = np.mod(theta[..., None] - phases, 2 * np.pi)
    dist = np.minimum(delta, 2 * np.pi - delta)
    near = dist <= dist.min(axis=-1, keepdims=True) + _TIE_TOL
    idx = np.argmax(near, axis=-1)
    if idx.ndim == 0:
        idx = int(idx)
        return idx, float(phases[idx])
    return idx, phases[idx]


@dataclass
class AtomState:
    """Internal memory of every atom (second array used by cascaded atoms)."""

    state: np.ndarray
    state2: np.ndarray = None

    def __post_init__(self):
        self.state = np.array(self.state, dtype=complex)
        if self.state2 is None:
            self.state2 = np.zeros_like(self.state)
        else:
            self.state2 = np.array(self.state2, dtype=complex)
        if self.state.shape != self.state2.shape or self.state.ndim != 1:
            raise DimensionError("atom states must be matching 1-D arrays")

    @classmethod
    def zeros(cls, n: int) -> "AtomState":
        return cls(np.zeros(n, dtype=complex))

    def reset(self) -> None:
        self.state[:] = 0
        self.state2[:] = 0

    def copy(self) -> "AtomState":
        return AtomState(self.state.copy(), self.state2.copy())

    def __len__(self) -> int:
        return self.state.shape[0]


@dataclass(frozen=True)
class SurfaceConfig:
    """Full surface description.

    ``phases`` are the commanded phase shifts in radians; they may be
    continuous (during training) or codebook values.  ``phase_offsets`` are
    hardware phase errors that the controller does not see, and
    ``distortion_power`` is the per-atom additive distortion added to the
    reflected signal.
    """

    atoms: tuple
    phases: np.ndarray
    mode: str = IDEAL
    codebook: Optional[PhaseCodebook] = None
    phase_offsets: np.ndarray = None
    distortion_power: float = 0.0

    def __post_init__(self):
        atoms = tuple(self.atoms)
        phases = np.array(self.phases, dtype=float).reshape(-1)
        if phases.shape[0] != len(atoms):
            raise DimensionError(f"{len(atoms)} atoms but {phases.shape[0]} phases")
        if self.mode not in (IDEAL, IMPAIRED):
            raise InvalidParameterError(f"mode must be 'ideal' or 'impaired', got {self.mode!r}")
        if not np.all(np.isfinite(phases)):
            raise InvalidParameterError("phases must be finite")
        offsets = (
            np.zeros_like(phases)
            if self.phase_offsets is None
            else np.array(self.phase_offsets, dtype=float).reshape(-1)
        )
        if offsets.shape != phases.shape:
            raise DimensionError("phase_offsets must match phases")
        if self.distortion_power < 0:
            raise InvalidParameterError("distortion_power must be non-negative")
        phases.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "phase_offsets", offsets)

    @classmethod
    def uniform(
        cls,
        n: int,
        params: AtomParams = AtomParams(),
        mode: str = IDEAL,
        codebook: Optional[PhaseCodebook] = None,
        phases=None,
    ) -> "SurfaceConfig":
        phases = np.zeros(n) if phases is None else phases
        return cls(atoms=(params,) * n, phases=phases, mode=mode, codebook=codebook)

    @classmethod
    def from_indices(cls, atoms, indices, codebook: PhaseCodebook, mode: str = IDEAL) -> "SurfaceConfig":
        indices = np.asarray(indices, dtype=int)
        if np.any(indices < 0) or np.any(indices >= codebook.size):
            raise InvalidParameterError("phase index out of codebook range")
        return cls(atoms=atoms, phases=codebook.phases[indices], mode=mode, codebook=codebook)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def phase_indices(self) -> np.ndarray:
        if self.codebook is None:
            raise InvalidParameterError("surface has no phase codebook")
        return np.atleast_1d(quantize_phase(self.phases, self.codebook)[0])

    def with_phases(self, phases) -> "SurfaceConfig":
        return dataclasses.replace(self, phases=phases)

    def replace(self, **changes) -> "SurfaceConfig":
        return dataclasses.replace(self, **changes)

    @cached_property
    def alpha(self) -> np.ndarray:
        return np.array([p.memory_coeff for p in self.atoms], dtype=float)

    @cached_property
    def beta(self) -> np.ndarray:
        return np.array([p.input_gain for p in self.atoms], dtype=float)

    @cached_property
    def amplitude(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.atoms], dtype=float)

    @cached_property
    def saturation(self) -> np.ndarray:
        return np.array([p.saturation for p in self.atoms], dtype=float)

    @cached_property
    def cascaded(self) -> np.ndarray:
        return np.array([p.memory_coeff2 is not None for p in self.atoms], dtype=bool)

    @cached_property
    def alpha2(self) -> np.ndarray:
        return np.array([p.memory_coeff2 or 0.0 for p in self.atoms], dtype=float)

    @cached_property
    def beta2(self) -> np.ndarray:
        return np.array([p.input_gain2 for p in self.atoms], dtype=float)

    def coefficients(self, phases=None) -> np.ndarray:
        """Reflection coefficients ``a exp(j(theta + offset))``; broadcasts over a batch."""
        phases = self.phases if phases is None else np.asarray(phases, dtype=float)
        return self.amplitude * np.exp(1j * (phases + self.phase_offsets))

    def draw_distortion(self, rng: np.random.Generator, n_symbols: int) -> np.ndarray:
        """Additive distortion samples, shape ``(N, n_symbols)``; zeros if disabled."""
        if self.distortion_power == 0:
            return np.zeros((self.n_atoms, n_symbols), dtype=complex)
        return complex_normal(rng, (self.n_atoms, n_symbols), self.distortion_power)


def saturate(z, p_sat):
    """Phase-preserving magnitude saturation ``p_sat tanh(|z|/p_sat) e^{j arg z}``."""
    z = np.asarray(z, dtype=complex)
    x = np.abs(z) / np.asarray(p_sat, dtype=float)
    ratio = np.ones_like(x)
    np.divide(np.tanh(x), x, out=ratio, where=x > 0)
    return z * ratio


def ideal_reflect(config: SurfaceConfig, incident) -> np.ndarray:
    incident = np.asarray(incident, dtype=complex)
    if incident.shape[0] != config.n_atoms:
        raise DimensionError(f"incident has length {incident.shape[0]}, surface has {config.n_atoms} atoms")
    coeff = config.coefficients()
    return coeff.reshape(coeff.shape + (1,) * (incident.ndim - 1)) * incident


def atom_step(state: complex, incident: complex, p: AtomParams, theta: float):
    """Single-stage update of one atom; returns ``(new_state, reflected)``."""
    z = p.memory_coeff * state + p.input_gain * incident
    new_state = complex(saturate(z, p.saturation))
    return new_state, p.amplitude * np.exp(1j * theta) * new_state


def _advance(config: SurfaceConfig, s1, s2, u):
    s1 = saturate(config.alpha * s1 + config.beta * u, config.saturation)
    if config.cascaded.any():
        s2_new = saturate(config.alpha2 * s2 + config.beta2 * s1, config.saturation)
        s2 = np.where(config.cascaded, s2_new, 0)
        out = np.where(config.cascaded, s2, s1)
    else:
        out = s1
    return s1, s2, out


def surface_step(states: AtomState, incident, config: SurfaceConfig, distortion=None):
    """Advance every atom by one symbol.

    Returns ``(new_states, reflected)``.  ``distortion`` (length N) is added
    to the reflected signal when given.  Ideal mode leaves the state alone.
    """
    incident = np.asarray(incident, dtype=complex)
    if incident.shape != (config.n_atoms,) or len(states) != config.n_atoms:
        raise DimensionError(
            f"surface has {config.n_atoms} atoms; got incident {incident.shape}, state {len(states)}"
        )
    if config.mode == IDEAL:
        new_states, reflected = states, ideal_reflect(config, incident)
    else:
        s1, s2, out = _advance(config, states.state, states.state2, incident)
        new_states = AtomState(s1, s2)
        reflected = config.coefficients() * out
    if distortion is not None:
        reflected = reflected + distortion
    return new_states, reflected


def internal_response(config: SurfaceConfig, incident, initial: Optional[AtomState] = None):
    """Phase-free atom outputs for a whole block.

    ``incident`` is ``(N, T)``.  Returns ``(outputs, final_state)`` where
    ``reflected[:, t] = coefficients() * outputs[:, t]`` before distortion.
    The outputs do not depend on the commanded phases, because the phase is
    applied after the state update.
    """
    incident = np.asarray(incident, dtype=complex)
    n, t_len = incident.shape
    if n != config.n_atoms:
        raise DimensionError(f"incident has {n} rows, surface has {config.n_atoms} atoms")
    state = AtomState.zeros(n) if initial is None else initial.copy()
    if config.mode == IDEAL:
        return incident.copy(), state
    out = np.empty_like(incident)
    s1, s2 = state.state, state.state2
    for t in range(t_len):
        s1, s2, out[:, t] = _advance(config, s1, s2, incident[:, t])
    return out, AtomState(s1, s2)


def apply_impairment(
    config: SurfaceConfig,
    additive_noise: float = 0.0,
    phase_error: float = math.inf,
    seed: int = 0,
) -> SurfaceConfig:
    """Attach hardware-impairment knobs to a surface.

    ``additive_noise`` is the per-atom, per-symbol distortion power added to
    the reflected signal.  ``phase_error`` is the von Mises concentration of
    a per-atom phase error drawn once here and held for the frame; ``inf``
    disables it.
    """
    if additive_noise < 0:
        raise InvalidParameterError(f"additive noise power must be non-negative, got {additive_noise}")
    if not phase_error >= 0:
        raise InvalidParameterError(f"phase-error concentration must be non-negative, got {phase_error}")
    if math.isinf(phase_error):
        offsets = np.zeros(config.n_atoms)
    else:
        offsets = np.random.default_rng(seed).vonmises(0.0, phase_error, config.n_atoms)
    return dataclasses.replace(config, phase_offsets=offsets, distortion_power=float(additive_noise))
