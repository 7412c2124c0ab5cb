"""Echo-state reservoir: rollouts, echo-state-property checks, ridge readouts."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, InvalidParameterError, SingularSystemError
from .surface import AtomParams, SurfaceConfig, saturate

__all__ = [
    "EchoStateSystem",
    "ReadoutTrainingSet",
    "EspReport",
    "run_reservoir",
    "check_esp",
    "enforce_esp",
    "train_readout",
    "readout_loss",
    "relative_ridge",
]


@dataclass(frozen=True)
class EchoStateSystem:
    """Reservoir ``s[t] = f(A s[t-1] + B x[t])``.

    ``transition`` is a length-N vector (diagonal A, the IRS case) or an
    N x N matrix.  ``saturation`` parametrises the shared activation
    :func:`irs_rc.surface.saturate`.  Set ``strict=False`` to skip the
    ``max |alpha| < 1`` check, e.g. to probe expanding maps.
    """

    input_map: np.ndarray
    transition: np.ndarray
    saturation: np.ndarray | float = np.inf
    readout: Optional[np.ndarray] = None
    washout: int = 10
    strict: bool = True

    def __post_init__(self):
        b = np.array(self.input_map, dtype=complex)
        a = np.array(self.transition)
        if b.ndim != 2:
            raise DimensionError("input_map must be N x K")
        n = b.shape[0]
        if a.shape not in ((n,), (n, n)):
            raise DimensionError(f"transition must be ({n},) or ({n}, {n}), got {a.shape}")
        if self.strict and n and self.spectral_bound(a) >= 1.0:
            raise InvalidParameterError("transition violates the echo-state bound max|alpha| < 1")
        if self.washout < 0:
            raise InvalidParameterError("washout must be non-negative")
        b.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "input_map", b)
        object.__setattr__(self, "transition", a)

    @staticmethod
    def spectral_bound(a: np.ndarray) -> float:
        if a.ndim == 1:
            return float(np.max(np.abs(a)))
        return float(np.linalg.norm(a, 2))

    @property
    def n_states(self) -> int:
        return self.input_map.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_map.shape[1]

    @classmethod
    def from_surface(cls, surface: SurfaceConfig, h_forward: np.ndarray, **kw) -> "EchoStateSystem":
        """The IRS viewed as a reservoir: input map ``diag(beta) h_forward``, transition ``diag(alpha)``."""
        return cls(
            input_map=surface.beta[:, None] * np.asarray(h_forward),
            transition=surface.alpha,
            saturation=surface.saturation,
            **kw,
        )

    def replace(self, **changes) -> "EchoStateSystem":
        return dataclasses.replace(self, **changes)

    def _apply_transition(self, s: np.ndarray) -> np.ndarray:
        if self.transition.ndim == 1:
            return self.transition * s
        return self.transition @ s


def run_reservoir(sys: EchoStateSystem, inputs, initial=None) -> np.ndarray:
    """Roll the reservoir over ``inputs`` (K x T); returns states s[1..T] as N x T."""
    x = np.asarray(inputs, dtype=complex)
    if x.ndim != 2 or x.shape[0] != sys.n_inputs:
        raise DimensionError(f"inputs must be {sys.n_inputs} x T, got {x.shape}")
    n = sys.n_states
    s = np.zeros(n, dtype=complex) if initial is None else np.array(
        getattr(initial, "state", initial), dtype=complex
    )
    if s.shape != (n,):
        raise DimensionError(f"initial state must have length {n}")
    drive = sys.input_map @ x
    out = np.empty((n, x.shape[1]), dtype=complex)
    for t in range(x.shape[1]):
        s = saturate(sys._apply_transition(s) + drive[:, t], sys.saturation)
        out[:, t] = s
    return out


@dataclass(frozen=True)
class EspReport:
    holds: bool
    distance: float
    initial_distance: float
    trace: np.ndarray  # distance after each step, length horizon


def check_esp(
    sys: EchoStateSystem,
    horizon: int,
    tol: float,
    seed: int = 0,
    initial_gap: float = 1.0,
    input_scale: float = 1.0,
) -> EspReport:
    """Drive two copies from different initial states with one random input.

    The copies start ``initial_gap`` apart (Euclidean).  ``holds`` is true
    when their distance after ``horizon`` steps is below ``tol``.
    """
    if horizon < 1:
        raise InvalidParameterError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    n, k = sys.n_states, sys.n_inputs
    x = input_scale * (rng.standard_normal((k, horizon)) + 1j * rng.standard_normal((k, horizon))) / np.sqrt(2)
    s_a = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    gap = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    s_b = s_a + initial_gap * gap / np.linalg.norm(gap)
    traj_a = run_reservoir(sys, x, s_a)
    traj_b = run_reservoir(sys, x, s_b)
    trace = np.linalg.norm(traj_a - traj_b, axis=0)
    dist = float(trace[-1])
    return EspReport(holds=dist < tol, distance=dist, initial_distance=initial_gap, trace=trace)


def enforce_esp(params: Sequence[AtomParams], rho_max: float) -> list[AtomParams]:
    """Clamp every memory coefficient to at most ``rho_max``."""
    if not 0.0 < rho_max < 1.0:
        raise InvalidParameterError(f"rho_max must lie in (0, 1), got {rho_max}")
    out = []
    for p in params:
        changes = {}
        if p.memory_coeff > rho_max:
            changes["memory_coeff"] = rho_max
        if p.memory_coeff2 is not None and p.memory_coeff2 > rho_max:
            changes["memory_coeff2"] = rho_max
        out.append(dataclasses.replace(p, **changes) if changes else p)
    return out


@dataclass(frozen=True)
class ReadoutTrainingSet:
    """Features ``S`` (D x T), targets ``Y`` (K x T) and absolute ridge weight."""

    features: np.ndarray
    targets: np.ndarray
    ridge: float = 0.0
    washout: int = 0

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.features, dtype=complex))
        y = np.atleast_2d(np.asarray(self.targets, dtype=complex))
        if s.shape[1] != y.shape[1]:
            raise DimensionError(f"features have {s.shape[1]} columns, targets {y.shape[1]}")
        if s.shape[1] <= self.washout:
            raise InvalidParameterError(f"need more than washout={self.washout} samples, got {s.shape[1]}")
        if self.ridge < 0:
            raise InvalidParameterError("ridge must be non-negative")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
            raise InvalidParameterError("training data must be finite")
        object.__setattr__(self, "features", s)
        object.__setattr__(self, "targets", y)

    @property
    def kept_features(self) -> np.ndarray:
        return self.features[:, self.washout:]

    @property
    def kept_targets(self) -> np.ndarray:
        return self.targets[:, self.washout:]


def relative_ridge(features: np.ndarray, rel: float, washout: int = 0) -> float:
    """Absolute ridge weight equal to ``rel`` times the mean Gram diagonal."""
    s = np.atleast_2d(features)[:, washout:]
    return float(rel * np.sum(np.abs(s) ** 2) / s.shape[0]) if s.size else 0.0


def train_readout(ts: ReadoutTrainingSet) -> np.ndarray:
    """``argmin_W ||W S - Y||_F^2 + ridge ||W||_F^2`` over the post-washout columns."""
    s, y = ts.kept_features, ts.kept_targets
    d = s.shape[0]
    gram = s @ s.conj().T
    if ts.ridge == 0:
        rank = np.linalg.matrix_rank(s)
        if rank < d:
            raise SingularSystemError(
                f"feature Gram matrix is singular: rank {rank} < {d} features with zero ridge"
            )
    else:
        gram = gram + ts.ridge * np.eye(d)
    # gram is Hermitian, so W^H = gram^{-1} S Y^H
    return np.linalg.solve(gram, s @ y.conj().T).conj().T


def readout_loss(w: np.ndarray, ts: ReadoutTrainingSet, include_ridge: bool = True) -> float:
    r = w @ ts.kept_features - ts.kept_targets
    loss = float(np.sum(np.abs(r) ** 2))
    if include_ridge:
        loss += ts.ridge * float(np.sum(np.abs(w) ** 2))
    return loss
