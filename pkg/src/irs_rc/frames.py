"""Reference-signal frames and Gray-mapped QPSK / 16QAM.

Bit layout per symbol is MSB first.  QPSK sends bit 0 on I and bit 1 on Q
with ``0 -> +1``, ``1 -> -1`` (so ``00 -> (1+j)/sqrt 2``).  16QAM sends bits
0-1 on I and bits 2-3 on Q with the per-axis Gray map
``00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3`` scaled by ``1/sqrt 10``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, TextIO

import numpy as np

from .errors import FramingError, InvalidParameterError
from .rng import derive_seed

__all__ = [
    "BITS_PER_SYMBOL",
    "DMRS",
    "CSRS",
    "DATA",
    "FrameConfig",
    "Frame",
    "FrameBlocks",
    "constellation",
    "modulate",
    "demodulate",
    "reference_symbols",
    "build_frame",
    "split_frame",
    "assemble_frame",
    "dump_frame",
    "load_frame",
]

BITS_PER_SYMBOL = {"QPSK": 2, "16QAM": 4}

# per-axis amplitude levels indexed by the axis bit pattern
_AXIS_LEVELS = {
    "QPSK": np.array([1.0, -1.0]) / np.sqrt(2.0),
    "16QAM": np.array([3.0, 1.0, -3.0, -1.0]) / np.sqrt(10.0),
}
_TIE_TOL = 1e-12

DMRS, CSRS, DATA = "DMRS", "CSRS", "DATA"


def _scheme(scheme: str) -> str:
    key = scheme.upper()
    if key not in BITS_PER_SYMBOL:
        raise InvalidParameterError(f"unknown modulation {scheme!r}; choose from {sorted(BITS_PER_SYMBOL)}")
    return key


def constellation(scheme: str) -> np.ndarray:
    """All points, indexed by the integer value of their bit pattern."""
    scheme = _scheme(scheme)
    half = BITS_PER_SYMBOL[scheme] // 2
    levels = _AXIS_LEVELS[scheme]
    idx = np.arange(2 ** (2 * half))
    return levels[idx >> half] + 1j * levels[idx & ((1 << half) - 1)]


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return bits @ weights


def modulate(bits, scheme: str) -> np.ndarray:
    """Map a bit array (last axis) to symbols."""
    scheme = _scheme(scheme)
    bits = np.asarray(bits, dtype=np.int64)
    bps = BITS_PER_SYMBOL[scheme]
    if bits.shape[-1] % bps:
        raise FramingError(f"{bits.shape[-1]} bits is not a multiple of {bps} bits/symbol for {scheme}")
    if np.any((bits != 0) & (bits != 1)):
        raise InvalidParameterError("bits must be 0 or 1")
    groups = bits.reshape(bits.shape[:-1] + (-1, bps))
    return constellation(scheme)[_bits_to_int(groups)]


def _slice_axis(x: np.ndarray, levels: np.ndarray) -> np.ndarray:
    dist = np.abs(x[..., None] - levels)
    near = dist <= dist.min(axis=-1, keepdims=True) + _TIE_TOL
    # levels are indexed by bit pattern, so the first near index is the
    # lexicographically smallest pattern among the tied ones
    return np.argmax(near, axis=-1)


def demodulate(symbols, scheme: str) -> np.ndarray:
    """Hard minimum-distance decisions; ties go to the smaller bit pattern.

    Both constellations are separable products of their axis levels, so the
    nearest point is found per axis.
    """
    scheme = _scheme(scheme)
    z = np.asarray(symbols, dtype=complex)
    half = BITS_PER_SYMBOL[scheme] // 2
    levels = _AXIS_LEVELS[scheme]
    i_idx = _slice_axis(z.real, levels)
    q_idx = _slice_axis(z.imag, levels)
    word = (i_idx << half) | q_idx
    shifts = np.arange(2 * half - 1, -1, -1)
    bits = (word[..., None] >> shifts) & 1
    return bits.reshape(z.shape[:-1] + (-1,)) if z.ndim else bits


@dataclass(frozen=True)
class FrameConfig:
    """Frame layout.  ``dmrs_positions=None`` places DMRS at every 7th symbol."""

    n_symbols: int = 140
    dmrs_positions: Optional[tuple] = None
    csrs_positions: tuple = ()
    modulation: str = "QPSK"
    seed: int = 0
    n_streams: int = 1

    def __post_init__(self):
        if self.n_symbols < 1:
            raise FramingError("frame needs at least one symbol")
        dmrs = tuple(range(0, self.n_symbols, 7)) if self.dmrs_positions is None else tuple(
            int(p) for p in self.dmrs_positions
        )
        csrs = tuple(int(p) for p in self.csrs_positions)
        object.__setattr__(self, "dmrs_positions", dmrs)
        object.__setattr__(self, "csrs_positions", csrs)
        object.__setattr__(self, "modulation", _scheme(self.modulation))
        if not dmrs:
            raise FramingError("frame needs at least one DMRS position")
        for p in dmrs + csrs:
            if not 0 <= p < self.n_symbols:
                raise FramingError(f"position {p} outside frame of {self.n_symbols} symbols")
        if len(set(dmrs)) != len(dmrs) or len(set(csrs)) != len(csrs) or set(dmrs) & set(csrs):
            raise FramingError("DMRS and CSRS positions must be distinct and disjoint")
        if self.n_streams < 1:
            raise FramingError("need at least one stream")

    @property
    def roles(self) -> tuple:
        roles = [DATA] * self.n_symbols
        for p in self.dmrs_positions:
            roles[p] = DMRS
        for p in self.csrs_positions:
            roles[p] = CSRS
        return tuple(roles)

    def positions(self, role: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.roles) if r == role], dtype=int)

    @property
    def n_data(self) -> int:
        return self.n_symbols - len(self.dmrs_positions) - len(self.csrs_positions)

    @property
    def n_data_bits(self) -> int:
        return self.n_data * BITS_PER_SYMBOL[self.modulation]


def reference_symbols(cfg: FrameConfig, role: str) -> np.ndarray:
    """Pseudo-random QPSK pilots for ``role`` (DMRS or CSRS), reproducible from the seed."""
    key = {DMRS: 0, CSRS: 1}[role]
    n = len(cfg.dmrs_positions if role == DMRS else cfg.csrs_positions)
    rng = np.random.default_rng(derive_seed(cfg.seed, key))
    return modulate(rng.integers(0, 2, (cfg.n_streams, 2 * n)), "QPSK")


@dataclass(frozen=True)
class Frame:
    config: FrameConfig
    symbols: np.ndarray  # n_streams x n_symbols
    data_bits: np.ndarray  # n_streams x n_data_bits

    @property
    def roles(self) -> tuple:
        return self.config.roles


@dataclass(frozen=True)
class FrameBlocks:
    dmrs: np.ndarray
    csrs: np.ndarray
    data: np.ndarray


def assemble_frame(cfg: FrameConfig, blocks: FrameBlocks) -> np.ndarray:
    out = np.zeros((cfg.n_streams, cfg.n_symbols), dtype=complex)
    for role, block in ((DMRS, blocks.dmrs), (CSRS, blocks.csrs), (DATA, blocks.data)):
        pos = cfg.positions(role)
        block = np.asarray(block, dtype=complex).reshape(cfg.n_streams, -1)
        if block.shape[1] != pos.size:
            raise FramingError(f"{role} block has {block.shape[1]} symbols, layout has {pos.size}")
        out[:, pos] = block
    return out


def build_frame(cfg: FrameConfig, data_bits) -> Frame:
    bits = np.asarray(data_bits, dtype=np.int64).reshape(cfg.n_streams, -1) if np.size(data_bits) else np.zeros(
        (cfg.n_streams, 0), dtype=np.int64
    )
    if bits.shape[1] != cfg.n_data_bits:
        raise FramingError(f"frame carries {cfg.n_data_bits} data bits per stream, got {bits.shape[1]}")
    blocks = FrameBlocks(
        dmrs=reference_symbols(cfg, DMRS),
        csrs=reference_symbols(cfg, CSRS),
        data=modulate(bits, cfg.modulation),
    )
    return Frame(config=cfg, symbols=assemble_frame(cfg, blocks), data_bits=bits)


def split_frame(frame: Frame) -> FrameBlocks:
    cfg = frame.config
    return FrameBlocks(
        dmrs=frame.symbols[:, cfg.positions(DMRS)],
        csrs=frame.symbols[:, cfg.positions(CSRS)],
        data=frame.symbols[:, cfg.positions(DATA)],
    )


def dump_frame(frame: Frame, fh: TextIO) -> None:
    """Write a frame as text: header lines, one ``bits`` line per stream, one line per position."""
    cfg = frame.config
    fh.write("irs-frame 1\n")
    fh.write(f"modulation {cfg.modulation}\n")
    fh.write(f"streams {cfg.n_streams}\n")
    fh.write(f"seed {cfg.seed}\n")
    fh.write(f"n_symbols {cfg.n_symbols}\n")
    for k in range(cfg.n_streams):
        fh.write(f"bits {k} {''.join(str(int(b)) for b in frame.data_bits[k])}\n")
    for t, role in enumerate(cfg.roles):
        vals = " ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in frame.symbols[:, t])
        fh.write(f"pos {t} {role} {vals}\n")


def load_frame(fh: TextIO) -> Frame:
    header: dict = {}
    bits: dict = {}
    rows = []
    for lineno, line in enumerate(fh, 1):
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "irs-frame":
            if parts[1:] != ["1"]:
                raise FramingError(f"line {lineno}: unsupported frame format version {parts[1:]}")
        elif tag in ("modulation", "streams", "seed", "n_symbols"):
            header[tag] = parts[1]
        elif tag == "bits":
            bits[int(parts[1])] = parts[2] if len(parts) > 2 else ""
        elif tag == "pos":
            rows.append((int(parts[1]), parts[2], [float(v) for v in parts[3:]]))
        else:
            raise FramingError(f"line {lineno}: unknown record {tag!r}")
    k = int(header["streams"])
    n = int(header["n_symbols"])
    if len(rows) != n or [r[0] for r in rows] != list(range(n)):
        raise FramingError("positions missing or out of order")
    roles = [r[1] for r in rows]
    cfg = FrameConfig(
        n_symbols=n,
        dmrs_positions=tuple(i for i, r in enumerate(roles) if r == DMRS),
        csrs_positions=tuple(i for i, r in enumerate(roles) if r == CSRS),
        modulation=header["modulation"],
        seed=int(header["seed"]),
        n_streams=k,
    )
    vals = np.array([r[2] for r in rows], dtype=float)
    if vals.shape != (n, 2 * k):
        raise FramingError("each position needs one (re, im) pair per stream")
    symbols = (vals[:, 0::2] + 1j * vals[:, 1::2]).T
    data_bits = np.array([[int(c) for c in bits[i]] for i in range(k)], dtype=np.int64).reshape(k, -1)
    return Frame(config=cfg, symbols=symbols, data_bits=data_bits)
