"""Three-part uplink channel: MS->IRS (forward), IRS->AP (reflect), MS->AP (direct).

MS-side links are Rayleigh and evolve frame to frame with a first-order
Gauss-Markov model.  The AP-IRS link is Rician and static.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .rng import complex_normal, derive_seed, make_rng

__all__ = [
    "ChannelSet",
    "ScenarioConfig",
    "gen_rayleigh",
    "gen_rician",
    "make_channel_set",
    "evolve",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelSet:
    """Complex channel matrices of one uplink scenario.

    Shapes are ``h_direct: (M_ap, K)``, ``h_forward: (N, K)`` and
    ``h_reflect: (M_ap, N)``.  ``power_direct`` and ``power_forward`` are the
    per-entry powers of the MS-side links; :func:`evolve` redraws innovations
    at those powers.
    """

    h_direct: np.ndarray
    h_forward: np.ndarray
    h_reflect: np.ndarray
    blockage: bool = False
    innovation_rate: float = 0.0
    power_direct: float = 1.0
    power_forward: float = 1.0

    def __post_init__(self):
        hd, hf, hr = (_frozen(h) for h in (self.h_direct, self.h_forward, self.h_reflect))
        if hd.ndim != 2 or hf.ndim != 2 or hr.ndim != 2:
            raise InvalidParameterError("channel matrices must be 2-D")
        m_ap, k = hd.shape
        n = hf.shape[0]
        if hf.shape[1] != k or hr.shape != (m_ap, n):
            raise InvalidParameterError(
                f"inconsistent shapes: direct {hd.shape}, forward {hf.shape}, reflect {hr.shape}"
            )
        if self.blockage and np.any(hd != 0):
            raise InvalidParameterError("blockage requires an all-zero direct channel")
        if not all(np.all(np.isfinite(h)) for h in (hd, hf, hr)):
            raise InvalidParameterError("channel matrices must be finite")
        if not 0.0 <= self.innovation_rate <= 1.0:
            raise InvalidParameterError("innovation_rate must lie in [0, 1]")
        object.__setattr__(self, "h_direct", hd)
        object.__setattr__(self, "h_forward", hf)
        object.__setattr__(self, "h_reflect", hr)

    @property
    def n_ap(self) -> int:
        return self.h_direct.shape[0]

    @property
    def n_users(self) -> int:
        return self.h_direct.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.h_forward.shape[0]

    def replace(self, **changes) -> "ChannelSet":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ScenarioConfig:
    """Dimensions and large-scale parameters of the scenario.

    Path losses are linear power multipliers applied per link.
    """

    n_ap: int = 4
    n_atoms: int = 16
    n_users: int = 1
    blockage: bool = False
    k_factor: float = 10.0
    pl_direct: float = 0.01
    pl_forward: float = 1.0
    pl_reflect: float = 1.0
    innovation_rate: float = 0.0


def gen_rayleigh(rows: int, cols: int, power: float, seed: int) -> np.ndarray:
    """i.i.d. CN(0, power) matrix of shape ``(rows, cols)``."""
    if power < 0:
        raise InvalidParameterError(f"power must be non-negative, got {power}")
    if rows < 0 or cols < 0:
        raise InvalidParameterError("rows and cols must be non-negative")
    rng = np.random.default_rng(seed)
    return complex_normal(rng, (rows, cols), power)


def gen_rician(rows: int, cols: int, k_factor: float, los_phase_seed: int, seed: int) -> np.ndarray:
    """Unit-power Rician matrix with a deterministic unit-modulus LOS part.

    The LOS phases are uniform draws keyed by ``los_phase_seed`` so that the
    line-of-sight geometry can be held fixed while the scattered part varies.
    """
    if not k_factor >= 0:
        raise InvalidParameterError(f"k_factor must be non-negative, got {k_factor}")
    los = np.exp(1j * np.random.default_rng(los_phase_seed).uniform(0, 2 * np.pi, (rows, cols)))
    nlos = gen_rayleigh(rows, cols, 1.0, seed)
    return np.sqrt(k_factor / (k_factor + 1.0)) * los + np.sqrt(1.0 / (k_factor + 1.0)) * nlos


def make_channel_set(cfg: ScenarioConfig, seed: int) -> ChannelSet:
    if min(cfg.n_ap, cfg.n_atoms, cfg.n_users) < 1:
        raise InvalidParameterError(
            f"need at least one antenna, atom and user (got {cfg.n_ap}, {cfg.n_atoms}, {cfg.n_users})"
        )
    for name in ("pl_direct", "pl_forward", "pl_reflect"):
        if getattr(cfg, name) < 0:
            raise InvalidParameterError(f"{name} must be non-negative")
    m, n, k = cfg.n_ap, cfg.n_atoms, cfg.n_users
    if cfg.blockage:
        hd = np.zeros((m, k), dtype=complex)
    else:
        hd = gen_rayleigh(m, k, cfg.pl_direct, derive_seed(seed, 0))
    hf = gen_rayleigh(n, k, cfg.pl_forward, derive_seed(seed, 1))
    hr = np.sqrt(cfg.pl_reflect) * gen_rician(
        m, n, cfg.k_factor, derive_seed(seed, 2), derive_seed(seed, 3)
    )
    return ChannelSet(
        h_direct=hd,
        h_forward=hf,
        h_reflect=hr,
        blockage=cfg.blockage,
        innovation_rate=cfg.innovation_rate,
        power_direct=0.0 if cfg.blockage else cfg.pl_direct,
        power_forward=cfg.pl_forward,
    )


def evolve(channels: ChannelSet, seed: int) -> ChannelSet:
    """Advance the MS-side links by one Gauss-Markov step.

    ``h <- sqrt(1 - rho^2) h + rho * fresh`` with ``fresh`` drawn at the
    link's own power.  ``h_reflect`` is passed through untouched.
    """
    rho = channels.innovation_rate
    if rho == 0.0:
        return channels
    keep = np.sqrt(1.0 - rho**2)
    rng = make_rng(seed, 0)
    hf = keep * channels.h_forward + rho * complex_normal(
        rng, channels.h_forward.shape, channels.power_forward
    )
    if channels.blockage:
        hd = channels.h_direct
    else:
        rng = make_rng(seed, 1)
        hd = keep * channels.h_direct + rho * complex_normal(
            rng, channels.h_direct.shape, channels.power_direct
        )
    return channels.replace(h_direct=hd, h_forward=hf, h_reflect=channels.h_reflect)
