"""AP-IRS channel acquisition by full-duplex loopback.

The AP transmits a pilot ``S`` (M_ap x L) and simultaneously hears it come
back off the surface.  With a passive reciprocal channel the round trip
through atom ``n`` is ``phi_n g_n g_n^T``, where ``g_n`` is the n-th column
of the AP->IRS matrix.  Activating one atom at a time makes each loopback
an identifiable rank-one measurement; a round-robin schedule walks through
all atoms, a few per turn.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionError,
    InvalidParameterError,
    LowSNRError,
    ScheduleError,
    UndefinedSubspaceError,
)
from .rng import complex_normal, make_rng

__all__ = [
    "SoundingConfig",
    "AtomChannelEstimate",
    "RoundRobinResult",
    "gen_csrs",
    "simulate_loopback",
    "depilot",
    "estimate_atom_channel",
    "round_robin_schedule",
    "round_robin",
    "detect_variation",
    "subspace_distance",
    "sign_resolved_error",
]


@dataclass(frozen=True)
class SoundingConfig:
    pilot_length: int = 16
    subset_size: int = 4
    noise_power: float = 0.0
    self_interference_power: float = 0.0
    smoothing: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.subset_size < 1:
            raise InvalidParameterError("subset_size must be at least 1")
        if not 0.0 <= self.smoothing <= 1.0:
            raise InvalidParameterError("smoothing must lie in [0, 1]")
        if self.noise_power < 0 or self.self_interference_power < 0:
            raise InvalidParameterError("noise powers must be non-negative")


@dataclass(frozen=True)
class AtomChannelEstimate:
    g_hat: np.ndarray
    residual: float
    sign_ambiguous: bool = True


def gen_csrs(n_ap: int, length: int, seed: int) -> np.ndarray:
    """``n_ap`` rows of a random L x L unitary, scaled so that ``S S^H = L I``."""
    if n_ap < 1 or length < n_ap:
        raise InvalidParameterError(f"pilot length {length} must be at least the {n_ap} AP antennas")
    rng = np.random.default_rng(seed)
    z = complex_normal(rng, (length, length))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return np.sqrt(length) * q[:n_ap, :]


def simulate_loopback(
    g,
    active: Sequence[int],
    phi,
    pilot,
    noise_power: float,
    si_power: float,
    seed: int,
) -> np.ndarray:
    """``Y = (sum_{n in active} phi_n g_n g_n^T) S + noise + residual self-interference``."""
    g = np.asarray(g, dtype=complex)
    s = np.asarray(pilot, dtype=complex)
    active = list(active)
    if not active:
        raise InvalidParameterError("at least one atom must be active")
    m, n = g.shape
    if s.shape[0] != m:
        raise DimensionError(f"pilot has {s.shape[0]} rows, AP has {m} antennas")
    phi = np.broadcast_to(np.asarray(phi, dtype=complex), (n,))
    if min(active) < 0 or max(active) >= n:
        raise DimensionError(f"active atoms must lie in [0, {n})")
    loop = (g[:, active] * phi[active]) @ g[:, active].T
    y = loop @ s
    l_len = s.shape[1]
    if noise_power > 0:
        y = y + complex_normal(make_rng(seed, 0), (m, l_len), noise_power)
    if si_power > 0:
        y = y + complex_normal(make_rng(seed, 1), (m, l_len), si_power)
    return y


def depilot(y, pilot) -> np.ndarray:
    """LS removal of the pilot: ``Y S^H (S S^H)^{-1}``."""
    s = np.asarray(pilot, dtype=complex)
    gram = s @ s.conj().T
    return np.linalg.solve(gram.T, (np.asarray(y) @ s.conj().T).T).T


def estimate_atom_channel(
    y, pilot, phi: complex, noise_power: float = 0.0, floor_factor: float = 1.0
) -> AtomChannelEstimate:
    """Rank-one recovery of ``g_n`` from a single-atom loopback.

    The LS estimate ``A`` of ``g g^T`` is symmetrised, then factored through
    its largest diagonal entry ``i``: ``g_i = sqrt(A_ii)``,
    ``g_j = A_ij / g_i``.  The result is defined up to a global sign.
    """
    if phi == 0:
        raise InvalidParameterError("reflection coefficient of the active atom must be nonzero")
    s = np.asarray(pilot, dtype=complex)
    a = depilot(y, s) / phi
    a = 0.5 * (a + a.T)
    diag = np.abs(np.diag(a))
    anchor = int(np.argmax(diag))
    per_entry = noise_power * float(np.real(np.mean(np.diag(np.linalg.inv(s @ s.conj().T)))))
    floor = floor_factor * np.sqrt(per_entry) / abs(phi)
    if diag[anchor] <= floor or diag[anchor] == 0:
        raise LowSNRError(f"largest diagonal {diag[anchor]:.3g} is below the noise floor {floor:.3g}")
    root = np.sqrt(a[anchor, anchor])
    g_hat = a[anchor, :] / root
    residual = float(np.linalg.norm(a - np.outer(g_hat, g_hat)))
    return AtomChannelEstimate(g_hat=g_hat, residual=residual)


def round_robin_schedule(n_atoms: int, subset_size: int) -> list[list[int]]:
    sched = [list(range(i, min(i + subset_size, n_atoms))) for i in range(0, n_atoms, subset_size)]
    flat = [a for turn in sched for a in turn]
    if sorted(flat) != list(range(n_atoms)):
        raise ScheduleError(f"schedule does not cover atoms 0..{n_atoms - 1} exactly once")
    return sched


@dataclass
class RoundRobinResult:
    estimate: np.ndarray  # M_ap x N
    residuals: np.ndarray  # N
    schedule: list


def round_robin(
    g_truth,
    cfg: SoundingConfig,
    prior: Optional[np.ndarray] = None,
    phi=1.0,
    sweep: int = 0,
    pilot: Optional[np.ndarray] = None,
) -> RoundRobinResult:
    """One full sweep over all atoms, blended into ``prior``.

    Within a turn the subset's atoms are lit one at a time.  Each fresh
    estimate is sign-aligned with the prior and blended as
    ``(1 - beta) prior + beta new``; without a prior the anchor-positive
    branch is taken as is.
    """
    g = np.asarray(g_truth, dtype=complex)
    m, n = g.shape
    s = gen_csrs(m, cfg.pilot_length, cfg.seed) if pilot is None else np.asarray(pilot)
    phi = np.broadcast_to(np.asarray(phi, dtype=complex), (n,))
    sched = round_robin_schedule(n, cfg.subset_size)
    est = np.zeros((m, n), dtype=complex) if prior is None else np.array(prior, dtype=complex)
    residuals = np.zeros(n)
    seen = np.zeros(n, dtype=int)
    for turn in sched:
        for atom in turn:
            y = simulate_loopback(
                g, [atom], phi, s, cfg.noise_power, cfg.self_interference_power,
                seed=int(make_rng(cfg.seed, sweep, atom).integers(2**62)),
            )
            e = estimate_atom_channel(y, s, phi[atom], cfg.noise_power + cfg.self_interference_power)
            new = e.g_hat
            if prior is None:
                est[:, atom] = new
            else:
                old = est[:, atom]
                if np.linalg.norm(-new - old) < np.linalg.norm(new - old):
                    new = -new
                est[:, atom] = (1 - cfg.smoothing) * old + cfg.smoothing * new
            residuals[atom] = e.residual
            seen[atom] += 1
    if np.any(seen != 1):
        raise ScheduleError("an atom was estimated more or less than once in a sweep")
    return RoundRobinResult(estimate=est, residuals=residuals, schedule=sched)


def sign_resolved_error(g_hat, g) -> np.ndarray:
    """Per-column ``min(||g_hat - g||, ||g_hat + g||) / ||g||``."""
    g_hat = np.atleast_2d(g_hat)
    g = np.atleast_2d(g)
    plus = np.linalg.norm(g_hat - g, axis=0)
    minus = np.linalg.norm(g_hat + g, axis=0)
    return np.minimum(plus, minus) / np.linalg.norm(g, axis=0)


def _dominant_basis(a: np.ndarray, rank: int) -> np.ndarray:
    u = np.linalg.svd(a, full_matrices=False)[0]
    return u[:, :rank]


def _numerical_rank(a: np.ndarray, rel: float) -> int:
    sv = np.linalg.svd(a, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rel * sv[0]))


def subspace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sine of the largest principal angle between the column spans of two orthonormal bases.

    Computed as the spectral norm of the part of ``b`` outside ``span(a)``,
    which stays accurate for nearly identical subspaces.
    """
    if a.shape[1] != b.shape[1]:
        return 1.0
    resid = b - a @ (a.conj().T @ b)
    return float(min(1.0, np.linalg.norm(resid, 2)))


def detect_variation(history: Sequence[np.ndarray], pilot=None, rank_tol: float = 1e-6) -> float:
    """Change score of the two most recent measurements, in [0, 1].

    Each measurement is de-piloted (when ``pilot`` is given), its dominant
    ``r``-dimensional column and row subspaces are extracted, ``r`` being
    the larger numerical rank of the pair at ``rank_tol * sigma_max``, and
    the score is the sine of the largest principal angle, maximised over
    the column and row comparisons.
    """
    if len(history) < 2:
        raise InvalidParameterError("need at least two measurements")
    a, b = (np.asarray(h, dtype=complex) for h in history[-2:])
    if a.shape != b.shape:
        raise DimensionError(f"measurement shapes differ: {a.shape} vs {b.shape}")
    if pilot is not None:
        a, b = depilot(a, pilot), depilot(b, pilot)
    ra, rb = _numerical_rank(a, rank_tol), _numerical_rank(b, rank_tol)
    if ra == 0 or rb == 0:
        raise UndefinedSubspaceError("a measurement has numerical rank zero")
    r = max(ra, rb)
    col = subspace_distance(_dominant_basis(a, r), _dominant_basis(b, r))
    row = subspace_distance(_dominant_basis(a.conj().T, r), _dominant_basis(b.conj().T, r))
    return max(col, row)
