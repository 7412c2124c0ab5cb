"""Link metrics and the energy-efficiency power model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidParameterError

__all__ = ["PowerModel", "SINR_CAP", "ber", "evm_sinr", "spectral_efficiency", "energy_efficiency"]

SINR_CAP = 1e9


@dataclass(frozen=True)
class PowerModel:
    """Consumed power (W) and bandwidth (Hz).  Defaults are modelling assumptions."""

    p_tx: float = 0.1
    p_circuit_ap: float = 1.0
    p_atom: float = 0.005
    bandwidth: float = 1e6

    def __post_init__(self):
        if min(self.p_tx, self.p_circuit_ap, self.p_atom, self.bandwidth) < 0:
            raise InvalidParameterError("power model entries must be non-negative")

    def total(self, n_atoms: int) -> float:
        return self.p_tx + self.p_circuit_ap + n_atoms * self.p_atom


def ber(tx_bits, rx_bits) -> float:
    tx = np.asarray(tx_bits).ravel()
    rx = np.asarray(rx_bits).ravel()
    if tx.size != rx.size:
        raise DimensionError(f"bit arrays differ in length: {tx.size} vs {rx.size}")
    if tx.size == 0:
        raise InvalidParameterError("need at least one bit")
    return float(np.count_nonzero(tx != rx) / tx.size)


def evm_sinr(estimates, references, cap: float = SINR_CAP):
    """Effective SINR after fitting one complex gain per stream.

    ``sinr = |g|^2 mean|s|^2 / mean|z - g s|^2`` with ``g`` the LS fit of
    ``z`` on ``s``.  Returns a float for 1-D input, else one value per row.
    """
    z = np.asarray(estimates, dtype=complex)
    s = np.asarray(references, dtype=complex)
    if z.shape != s.shape:
        raise DimensionError(f"shape mismatch: {z.shape} vs {s.shape}")
    flat = z.ndim == 1
    z, s = np.atleast_2d(z), np.atleast_2d(s)
    p_ref = np.mean(np.abs(s) ** 2, axis=1)
    if np.any(p_ref == 0):
        raise InvalidParameterError("reference power is zero")
    g = np.sum(z * s.conj(), axis=1) / np.sum(np.abs(s) ** 2, axis=1)
    p_sig = np.abs(g) ** 2 * p_ref
    p_err = np.mean(np.abs(z - g[:, None] * s) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = np.where(p_err > 0, p_sig / np.where(p_err > 0, p_err, 1.0), np.where(p_sig > 0, cap, 0.0))
    sinr = np.minimum(sinr, cap)
    return float(sinr[0]) if flat else sinr


def spectral_efficiency(sinr):
    return np.log2(1.0 + np.asarray(sinr, dtype=float)) if np.ndim(sinr) else float(np.log2(1.0 + sinr))


def energy_efficiency(se, pm: PowerModel, n_atoms: int) -> float:
    """Bits per Joule: ``se * bandwidth / (p_tx + p_circuit_ap + n_atoms * p_atom)``."""
    total = pm.total(n_atoms)
    if total <= 0:
        raise InvalidParameterError("total consumed power must be positive")
    return float(se * pm.bandwidth / total)
