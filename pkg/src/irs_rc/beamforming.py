"""Joint passive/active beamforming on the IRS link.

The uplink is treated as a reservoir with the atoms as state and a linear
readout through the AP combiner.  :func:`train_joint` learns IRS phases
and combiner from DMRS by alternating a closed-form ridge solve with
phase-gradient steps.  :func:`model_based_baseline` is the CSI-driven
coherent phase-alignment design it is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from .channels import ChannelSet
from .errors import (
    DegenerateSolutionError,
    DimensionError,
    InvalidParameterError,
    UnsupportedConfigurationError,
)
from .frames import demodulate
from .reservoir import ReadoutTrainingSet, readout_loss, relative_ridge, train_readout
from .rng import complex_normal, make_rng
from .surface import IDEAL, PhaseCodebook, SurfaceConfig, internal_response, quantize_phase

__all__ = [
    "LinkModel",
    "TrainOptions",
    "TrainResult",
    "BaselineResult",
    "DownlinkDesign",
    "LinkProbe",
    "simulate_uplink",
    "effective_channel",
    "train_joint",
    "model_based_baseline",
    "derive_downlink",
    "demodulate_link",
    "fit_stream_gain",
    "uplink_snr",
    "downlink_snr",
    "write_loss_trace",
]


@dataclass
class LinkModel:
    """One uplink: channels, surface and receiver noise.

    ``combiner`` is K x M_ap and is applied as ``W @ r``; ``precoder`` is
    M_ap x K.
    """

    channels: ChannelSet
    surface: SurfaceConfig
    noise_power: float = 0.0
    combiner: Optional[np.ndarray] = None
    precoder: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.surface.n_atoms != self.channels.n_atoms:
            raise DimensionError(
                f"surface has {self.surface.n_atoms} atoms, channels have {self.channels.n_atoms}"
            )
        if self.noise_power < 0:
            raise InvalidParameterError("noise_power must be non-negative")


class LinkProbe:
    """Received DMRS block as a function of the commanded IRS phases.

    Noise, distortion and the atoms' internal response are drawn or
    computed once, so repeated probes see common random numbers.  The
    internal response is phase independent because the phase shift is
    applied after the state update.
    """

    def __init__(self, link: LinkModel, symbols: np.ndarray, seed: int, initial=None):
        x = np.asarray(symbols, dtype=complex)
        ch = link.channels
        if x.ndim != 2 or x.shape[0] != ch.n_users:
            raise DimensionError(f"symbols must be {ch.n_users} x T, got {x.shape}")
        t_len = x.shape[1]
        self.link = link
        self.n_symbols = t_len
        self._base = ch.h_direct @ x
        self._atoms, self.final_state = internal_response(link.surface, ch.h_forward @ x, initial)
        distortion = link.surface.draw_distortion(make_rng(seed, 1), t_len)
        # distortion is added after the phase shift and reaches the AP through h_reflect
        self._base = self._base + ch.h_reflect @ distortion
        if link.noise_power > 0:
            self._base = self._base + complex_normal(make_rng(seed, 0), (ch.n_ap, t_len), link.noise_power)

    def received(self, phases) -> np.ndarray:
        """``phases`` of shape (N,) gives (M, T); shape (B, N) gives (B, M, T)."""
        phases = np.asarray(phases, dtype=float)
        coeff = self.link.surface.coefficients(phases)
        reflected = coeff[..., :, None] * self._atoms
        return self._base + self.link.channels.h_reflect @ reflected


def simulate_uplink(link: LinkModel, symbols, seed: int, initial=None) -> np.ndarray:
    """``r[t] = h_d x[t] + h_r reflected[t] + n[t]`` for a K x T block, symbol by symbol."""
    return LinkProbe(link, symbols, seed, initial).received(link.surface.phases)


def effective_channel(channels: ChannelSet, surface: SurfaceConfig, phases=None) -> np.ndarray:
    """Memoryless composite channel ``h_d + h_r diag(c) h_f`` (M_ap x K)."""
    coeff = surface.coefficients(phases)
    return channels.h_direct + channels.h_reflect @ (coeff[:, None] * channels.h_forward)


@dataclass(frozen=True)
class TrainOptions:
    """Schedule for :func:`train_joint`.

    ``ridge`` is relative: the absolute weight is ``ridge`` times the mean
    Gram diagonal of the features at the initial phases.  ``step_size`` is
    the largest per-atom phase change of one gradient step, in radians.
    ``gradient`` is ``"auto"`` (analytic for ideal surfaces, central finite
    differences otherwise), ``"analytic"`` or ``"fd"``.  Codebook lattices
    with at most ``exhaustive_limit`` points are searched exhaustively after
    the descent; larger ones by coordinate descent.
    """

    max_outer_iters: int = 40
    inner_steps: int = 5
    step_size: float = 0.5
    ridge: float = 1e-3
    codebook: Optional[PhaseCodebook] = None
    tol: float = 1e-6
    seed: int = 0
    washout: int = 10
    gradient: str = "auto"
    fd_step: float = 1e-3
    quantize_per_iter: bool = False
    refine_quantized: bool = True
    max_halvings: int = 5
    initial_phases: Optional[tuple] = None
    exhaustive_limit: int = 256

    def __post_init__(self):
        if self.max_outer_iters < 0 or self.inner_steps < 1:
            raise InvalidParameterError("iteration counts must be positive")
        if not self.tol > 0 or not self.step_size > 0:
            raise InvalidParameterError("tol and step_size must be positive")
        if self.gradient not in ("auto", "analytic", "fd"):
            raise InvalidParameterError(f"unknown gradient mode {self.gradient!r}")


@dataclass
class TrainResult:
    phases: np.ndarray  # final (quantized when a codebook is set) phases
    phase_indices: Optional[np.ndarray]
    combiner: np.ndarray
    loss: float  # final loss at ``phases``
    continuous_phases: np.ndarray
    continuous_loss: float
    loss_trace: list = field(default_factory=list)  # best-so-far after each outer iteration
    raw_trace: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    ridge: float = 0.0
    converged: bool = False
    diagnostic: str = ""


class _Objective:
    """Ridge readout loss of the probed link."""

    def __init__(self, probe: LinkProbe, targets: np.ndarray, ridge: float, washout: int):
        self.probe = probe
        self.targets = np.asarray(targets, dtype=complex)
        self.ridge = ridge
        self.washout = washout
        self.evaluations = 0
        # losses closer than this are indistinguishable from rounding
        self.floor = 1e-13 * float(np.sum(np.abs(self.targets[:, washout:]) ** 2))

    def training_set(self, phases) -> ReadoutTrainingSet:
        return ReadoutTrainingSet(self.probe.received(phases), self.targets, self.ridge, self.washout)

    def solve(self, phases):
        ts = self.training_set(phases)
        w = train_readout(ts)
        return w, readout_loss(w, ts)

    def profile_batch(self, phases_batch) -> np.ndarray:
        """Loss with the combiner re-solved, for each row in a batch."""
        r = self.probe.received(phases_batch)[..., self.washout:]
        y = self.targets[:, self.washout:]
        m = r.shape[1]
        gram = r @ np.conj(np.swapaxes(r, 1, 2)) + self.ridge * np.eye(m)
        cross = r @ y.conj().T  # (B, M, K)
        wh = np.linalg.solve(gram, cross)
        w = np.conj(np.swapaxes(wh, 1, 2))
        res = w @ r - y
        self.evaluations += len(phases_batch)
        return np.sum(np.abs(res) ** 2, axis=(1, 2)) + self.ridge * np.sum(np.abs(w) ** 2, axis=(1, 2))

    def fixed_batch(self, w: np.ndarray, phases_batch) -> np.ndarray:
        """Loss with the combiner held at ``w``, for each row in a batch."""
        r = self.probe.received(phases_batch)[..., self.washout:]
        res = w @ r - self.targets[:, self.washout:]
        self.evaluations += len(phases_batch)
        return np.sum(np.abs(res) ** 2, axis=(1, 2)) + self.ridge * float(np.sum(np.abs(w) ** 2))

    def grad_fd(self, w, phases, h: float) -> np.ndarray:
        n = phases.shape[0]
        probes = np.repeat(phases[None, :], 2 * n, axis=0)
        probes[np.arange(n), np.arange(n)] += h
        probes[n + np.arange(n), np.arange(n)] -= h
        vals = self.fixed_batch(w, probes)
        return (vals[:n] - vals[n:]) / (2 * h)

    def grad_analytic(self, w, phases) -> np.ndarray:
        link = self.probe.link
        r = self.probe.received(phases)[:, self.washout:]
        err = w @ r - self.targets[:, self.washout:]
        g = w @ link.channels.h_reflect  # K x N
        c = link.surface.coefficients(phases)
        q = self.probe._atoms[:, self.washout:]
        return 2 * np.real(1j * c * np.sum(q * (g.T @ err.conj()), axis=1))


def _wrap(theta: np.ndarray) -> np.ndarray:
    return np.mod(theta, 2 * np.pi)


def _descend(obj: _Objective, phases, w, loss, opts: TrainOptions, use_fd: bool, n_iters: int, result: TrainResult):
    """Alternating minimisation; returns the best (loss, phases, combiner) seen."""
    best = (loss, phases.copy(), w)
    step = opts.step_size
    mu = step
    halvings = 0
    prev = loss
    for _ in range(n_iters):
        theta = phases.copy()
        cur = float(obj.fixed_batch(w, theta[None])[0])
        for _ in range(opts.inner_steps):
            grad = obj.grad_fd(w, theta, opts.fd_step) if use_fd else obj.grad_analytic(w, theta)
            gmax = np.max(np.abs(grad)) if grad.size else 0.0
            if gmax == 0 or not np.isfinite(gmax):
                break
            direction = -grad / gmax
            mu = min(2 * mu, step)
            accepted = False
            while mu > 1e-9:
                cand = _wrap(theta + mu * direction)
                val = float(obj.fixed_batch(w, cand[None])[0])
                if val < cur:
                    theta, cur, accepted = cand, val, True
                    break
                mu /= 2
            if not accepted:
                break
        if opts.quantize_per_iter and opts.codebook is not None:
            theta = np.atleast_1d(quantize_phase(theta, opts.codebook)[1])
        w_new, new = obj.solve(theta)
        result.raw_trace.append(new)
        result.step_trace.append(step)
        if new < best[0]:
            best = (new, theta.copy(), w_new)
        result.loss_trace.append(best[0])
        if new > prev * (1 + opts.tol):
            # no progress: retreat to the best iterate with a smaller step
            halvings += 1
            step /= 2
            mu = step
            if halvings >= opts.max_halvings:
                result.diagnostic = f"step size halved {halvings} times without decrease"
                return best
            phases, w, prev = best[1].copy(), best[2], best[0]
            continue
        phases, w = theta, w_new
        if prev - new <= opts.tol * max(prev, np.finfo(float).tiny):
            result.converged = True
            return best
        prev = new
    if not result.diagnostic and not result.converged:
        result.diagnostic = "max_outer_iters reached"
    return best


def _gauge_fix(obj: _Objective, link: LinkModel, phases, w, loss):
    """With no direct path a common phase rotation is a symmetry of the loss.

    Pick the rotation that makes the combiner's dominant entry real and
    positive, keeping it only if the loss does not grow.
    """
    if np.any(link.channels.h_direct != 0) or w.size == 0:
        return phases, w, loss
    row = w[0]
    c = float(np.angle(row[np.argmax(np.abs(row))]))
    cand = _wrap(phases + c)
    w_c, loss_c = obj.solve(cand)
    if loss_c <= loss * (1 + 1e-9) + obj.floor:
        return cand, w_c, loss_c
    return phases, w, loss


def _exhaustive_discrete(obj: _Objective, phases, cb: PhaseCodebook):
    """Best codebook index vector by enumeration.

    Values within rounding of the minimum count as ties, broken by the
    smallest phase distance to ``phases``.
    """
    n = phases.size
    idx = np.stack(np.unravel_index(np.arange(cb.size**n), (cb.size,) * n), axis=1)
    vals = obj.profile_batch(cb.phases[idx])
    ties = np.flatnonzero(vals <= vals.min() * (1 + 1e-12) + obj.floor)
    gap = np.abs(np.angle(np.exp(1j * (cb.phases[idx[ties]] - phases))))
    return idx[ties[int(np.argmin(gap.sum(axis=1)))]].copy()


def _refine_discrete(obj: _Objective, phases, cb: PhaseCodebook, max_sweeps: int = 10, exhaustive_limit: int = 0):
    """Coordinate descent over the codebook, one atom at a time."""
    if cb.size ** phases.size <= exhaustive_limit:
        return _exhaustive_discrete(obj, phases, cb)
    idx = np.atleast_1d(quantize_phase(phases, cb)[0]).copy()
    table = cb.phases
    current = float(obj.profile_batch(table[idx][None])[0])
    for _ in range(max_sweeps):
        changed = False
        for n in range(idx.size):
            batch = np.repeat(table[idx][None], cb.size, axis=0)
            batch[:, n] = table
            vals = obj.profile_batch(batch)
            k = int(np.argmin(vals))
            if vals[k] < current * (1 - 1e-12) - obj.floor and k != idx[n]:
                idx[n], current, changed = k, float(vals[k]), True
        if not changed:
            break
    return idx


def train_joint(link: LinkModel, dmrs_in, dmrs_target, opts: TrainOptions = TrainOptions()) -> TrainResult:
    """Learn IRS phases and the combiner from a DMRS burst.

    Minimises ``sum_t ||W r[t](theta) - y[t]||^2 + ridge ||W||^2`` over the
    post-washout symbols, where ``r`` is the received DMRS.  On exit the
    phases are quantised to ``opts.codebook`` (if any), refined by
    coordinate descent on the codebook, and the combiner is re-solved.
    """
    x = np.asarray(dmrs_in, dtype=complex)
    y = np.asarray(dmrs_target, dtype=complex)
    if x.shape[1] <= opts.washout:
        raise InvalidParameterError(f"need more than washout={opts.washout} DMRS symbols, got {x.shape[1]}")
    probe = LinkProbe(link, x, opts.seed)
    n = link.surface.n_atoms
    phases = (
        np.array(opts.initial_phases, dtype=float)
        if opts.initial_phases is not None
        else link.surface.phases.copy()
    )
    if phases.shape != (n,):
        raise DimensionError(f"initial phases must have length {n}")
    ridge = relative_ridge(probe.received(phases), opts.ridge, opts.washout) if opts.ridge > 0 else 0.0
    obj = _Objective(probe, y, ridge, opts.washout)
    w, loss = obj.solve(phases)
    result = TrainResult(
        phases=phases, phase_indices=None, combiner=w, loss=loss,
        continuous_phases=phases, continuous_loss=loss, loss_trace=[], ridge=ridge,
    )

    if opts.max_outer_iters == 0 or n == 0:
        if opts.codebook is not None and n:
            idx, phases = quantize_phase(phases, opts.codebook)
            result.phase_indices = np.atleast_1d(idx)
            phases = np.atleast_1d(phases)
            w, loss = obj.solve(phases)
        result.phases, result.combiner, result.loss = phases, w, loss
        result.continuous_loss = min(result.continuous_loss, loss)
        result.converged = True
        result.diagnostic = "no optimisation requested" if n else "surface has no atoms"
        return result

    if opts.gradient == "auto":
        use_fd = link.surface.mode != IDEAL
    else:
        use_fd = opts.gradient == "fd"

    c_loss, c_phases, c_w = _descend(obj, phases, w, loss, opts, use_fd, opts.max_outer_iters, result)
    c_phases, c_w, c_loss = _gauge_fix(obj, link, c_phases, c_w, c_loss)

    if opts.codebook is None:
        result.phases, result.combiner, result.loss = c_phases, c_w, c_loss
        result.continuous_phases, result.continuous_loss = c_phases, c_loss
        return result

    cb = opts.codebook
    for attempt in range(2):
        if opts.refine_quantized:
            idx = _refine_discrete(obj, c_phases, cb, exhaustive_limit=opts.exhaustive_limit)
        else:
            idx = np.atleast_1d(quantize_phase(c_phases, cb)[0])
        q_phases = cb.phases[idx]
        q_w, q_loss = obj.solve(q_phases)
        if q_loss >= c_loss or attempt == 1:
            break
        # the codebook point beats the continuous iterate: resume descent from it
        sub = TrainResult(phases=q_phases, phase_indices=None, combiner=q_w, loss=q_loss,
                          continuous_phases=q_phases, continuous_loss=q_loss)
        c_loss, c_phases, c_w = _descend(obj, q_phases, q_w, q_loss, opts, use_fd, opts.max_outer_iters, sub)
        result.loss_trace.extend(min(v, result.loss_trace[-1]) for v in sub.loss_trace)
        result.raw_trace.extend(sub.raw_trace)
        result.step_trace.extend(sub.step_trace)
    if q_loss < c_loss:
        # a codebook point is also a continuous point
        c_loss, c_phases, c_w = q_loss, q_phases, q_w
    result.phases, result.phase_indices, result.combiner, result.loss = q_phases, idx, q_w, q_loss
    result.continuous_phases, result.continuous_loss = c_phases, c_loss
    return result


def write_loss_trace(result: TrainResult, fh: TextIO) -> None:
    fh.write("iteration,loss,best_loss,step_size\n")
    for i, (raw, best, step) in enumerate(zip(result.raw_trace, result.loss_trace, result.step_trace), 1):
        fh.write(f"{i},{raw:.12g},{best:.12g},{step:.6g}\n")


@dataclass
class BaselineResult:
    phases: np.ndarray
    phase_indices: Optional[np.ndarray]
    combiner: np.ndarray  # 1 x M_ap


def model_based_baseline(csi_est: ChannelSet, link: LinkModel, iterations: int = 10) -> BaselineResult:
    """Coherent phase alignment from (possibly erroneous) CSI, single user.

    For a reference combiner ``u`` each atom gets
    ``theta_n = arg(u^H h_d) - arg(u^H h_r[:, n] h_f[n])`` so that every
    reflected path adds in phase with the direct path.  ``u`` starts at the
    direct-path direction (the dominant cascaded direction under blockage)
    and is then alternated with the matched filter of the resulting
    effective channel.  Phases are quantised with the surface codebook, and
    the combiner is the MMSE filter of the estimated effective channel.
    """
    if csi_est.n_users != 1:
        raise UnsupportedConfigurationError(
            f"model-based baseline supports a single user, got K={csi_est.n_users}"
        )
    surface = link.surface
    if csi_est.n_atoms != surface.n_atoms:
        raise DimensionError("CSI estimate and surface disagree on the number of atoms")
    hd = csi_est.h_direct[:, 0]
    cascade = csi_est.h_reflect * (surface.amplitude * csi_est.h_forward[:, 0])  # M x N
    n = surface.n_atoms
    phases = np.zeros(n)
    if n:
        if np.linalg.norm(hd) > 0:
            u = hd / np.linalg.norm(hd)
        else:
            u = np.linalg.svd(cascade, full_matrices=False)[0][:, 0]
        for _ in range(max(1, iterations)):
            ref = np.angle(np.vdot(u, hd)) if np.linalg.norm(hd) > 0 else 0.0
            phases = _wrap(ref - np.angle(u.conj() @ cascade))
            h_eff = hd + cascade @ np.exp(1j * phases)
            norm = np.linalg.norm(h_eff)
            if norm == 0:
                break
            u_new = h_eff / norm
            if np.allclose(u_new, u, atol=1e-14, rtol=0):
                break
            u = u_new
    indices = None
    if surface.codebook is not None and n:
        indices, phases = quantize_phase(phases, surface.codebook)
        indices, phases = np.atleast_1d(indices), np.atleast_1d(phases)
    h_eff = hd + cascade @ np.exp(1j * phases)
    # K = 1 MMSE filter via the matrix-inversion lemma: h^H / (|h|^2 + sigma^2)
    denom = float(np.vdot(h_eff, h_eff).real) + link.noise_power
    w = (h_eff.conj() / denom)[None, :] if denom > 0 else np.zeros((1, hd.size), dtype=complex)
    return BaselineResult(phases=phases, phase_indices=indices, combiner=w)


@dataclass
class DownlinkDesign:
    precoder: np.ndarray  # M_ap x K, unit-norm columns
    phases: np.ndarray


def derive_downlink(link: LinkModel, combiner, phases) -> DownlinkDesign:
    """Reciprocity: precoder ``conj(W^H) = W^T`` with unit-norm columns, same IRS phases."""
    w = np.atleast_2d(np.asarray(combiner, dtype=complex))
    if w.shape[1] != link.channels.n_ap:
        raise DimensionError(f"combiner must be K x {link.channels.n_ap}, got {w.shape}")
    p = w.T.copy()
    norms = np.linalg.norm(p, axis=0)
    if np.any(norms == 0):
        raise DegenerateSolutionError(f"combiner rows {np.flatnonzero(norms == 0).tolist()} are zero")
    return DownlinkDesign(precoder=p / norms, phases=np.array(phases, dtype=float))


def uplink_snr(channels: ChannelSet, surface: SurfaceConfig, combiner, noise_power: float) -> np.ndarray:
    """Per-stream post-combining SNR of the memoryless link."""
    h = effective_channel(channels, surface)
    w = np.atleast_2d(combiner)
    sig = np.abs(np.sum(w * h.T, axis=1)) ** 2
    return sig / (np.sum(np.abs(w) ** 2, axis=1) * noise_power)


def downlink_snr(channels: ChannelSet, surface: SurfaceConfig, precoder, noise_power: float) -> np.ndarray:
    """Per-user SNR on the reciprocal (transposed) downlink channel."""
    h_dl = effective_channel(channels, surface).T  # K x M
    g = h_dl @ np.asarray(precoder)
    return np.abs(np.diag(g)) ** 2 / noise_power


def fit_stream_gain(estimates, references) -> np.ndarray:
    """Per-stream LS complex gain ``g_k = <z_k, s_k> / ||s_k||^2``."""
    z = np.atleast_2d(estimates)
    s = np.atleast_2d(references)
    return np.sum(z * s.conj(), axis=1) / np.sum(np.abs(s) ** 2, axis=1)


def demodulate_link(received, combiner, modulation: str, reference=None) -> np.ndarray:
    """Combine, descale and slice.

    ``reference = (received_pilots, pilot_symbols)`` supplies known symbols
    for the per-stream gain fit; without it the combiner output is sliced
    as is.  A zero fitted gain leaves the stream unscaled.
    """
    w = np.atleast_2d(combiner)
    z = w @ np.asarray(received, dtype=complex)
    if reference is not None:
        rx_ref, tx_ref = reference
        g = fit_stream_gain(w @ np.asarray(rx_ref, dtype=complex), tx_ref)
        safe = np.where(g == 0, 1.0, g)
        z = z / safe[:, None]
    return demodulate(z, modulation)
