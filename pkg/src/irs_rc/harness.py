"""Monte-Carlo experiment runner.

Seeding rule: trial ``j`` of grid point ``i`` uses ``derive_seed(master, i, j)``
and every random draw inside the trial is a child of that seed.  Adding
trials or points never changes rows that already exist.

Raw CSV columns (frozen)::

    point,trial,method,n_atoms,snr_db,hardware,csi_error,seed,config_hash,
    ber,sinr_db,se_bps_hz,ee_bits_per_joule

Summary CSV columns (frozen)::

    point,method,n_atoms,snr_db,hardware,csi_error,trials,
    median_ber,median_sinr_db,median_se_bps_hz,median_ee_bits_per_joule
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .beamforming import (
    LinkModel,
    TrainOptions,
    model_based_baseline,
    simulate_uplink,
    demodulate_link,
    train_joint,
)
from .channels import ChannelSet, make_channel_set
from .config import ExperimentConfig, config_hash
from .errors import ConfigError
from .frames import DATA, DMRS, FrameConfig, build_frame, split_frame
from .metrics import ber, energy_efficiency, evm_sinr, spectral_efficiency
from .reservoir import enforce_esp
from .rng import complex_normal, derive_seed, make_rng
from .sounding import SoundingConfig, gen_csrs, round_robin, sign_resolved_error
from .surface import (
    DEVICE_PROFILES,
    AtomParams,
    IDEAL,
    IMPAIRED,
    PhaseCodebook,
    SurfaceConfig,
    apply_impairment,
    atoms_from_profile,
)

__all__ = [
    "RESULT_COLUMNS",
    "SUMMARY_COLUMNS",
    "SOUNDING_COLUMNS",
    "GridPoint",
    "grid_points",
    "build_surface",
    "csi_with_error",
    "run_trial",
    "run_sweep",
    "summarize",
    "rows_to_csv",
    "read_csv",
    "run_sounding_eval",
    "summarize_sounding",
    "gnuplot_report",
]

RESULT_COLUMNS = (
    "point", "trial", "method", "n_atoms", "snr_db", "hardware", "csi_error", "seed",
    "config_hash", "ber", "sinr_db", "se_bps_hz", "ee_bits_per_joule",
)
SUMMARY_COLUMNS = (
    "point", "method", "n_atoms", "snr_db", "hardware", "csi_error", "trials",
    "median_ber", "median_sinr_db", "median_se_bps_hz", "median_ee_bits_per_joule",
)
SOUNDING_COLUMNS = ("snr_db", "trial", "sweep", "atom", "residual", "rel_error")
SOUNDING_SUMMARY_COLUMNS = ("snr_db", "sweep", "trials", "median_rel_error")
METHODS = ("rc", "model_based")
HARDWARE = ("ideal", "impaired")


@dataclass(frozen=True)
class GridPoint:
    index: int
    n_atoms: int
    snr_db: float
    hardware: str
    csi_error: float


def grid_points(cfg: ExperimentConfig) -> list[GridPoint]:
    sw = cfg.sweep
    for m in sw.methods:
        if m not in METHODS:
            raise ConfigError(f"[sweep] methods: unknown method tag {m!r}; valid: {list(METHODS)}")
    for h in sw.hardware:
        if h not in HARDWARE:
            raise ConfigError(f"[sweep] hardware: unknown hardware {h!r}; valid: {list(HARDWARE)}")
    combos = itertools.product(sw.n_atoms, sw.snr_db, sw.hardware, sw.csi_error)
    return [GridPoint(i, n, s, h, e) for i, (n, s, h, e) in enumerate(combos)]


def build_surface(cfg: ExperimentConfig, n_atoms: int, hardware: str, seed: int) -> SurfaceConfig:
    """Atoms from the device profile, ESP-clamped.  ``impaired`` adds memory,
    saturation and the configured impairment knobs; ``ideal`` keeps only the
    amplitude."""
    sc = cfg.surface
    if sc.profile not in DEVICE_PROFILES:
        raise ConfigError(f"[surface] profile: unknown device profile {sc.profile!r}")
    base = atoms_from_profile(sc.profile, [sc.resistance_state])[0]
    overrides = {
        k: getattr(sc, k)
        for k in ("memory_coeff", "memory_coeff2", "saturation", "amplitude", "input_gain")
        if getattr(sc, k) is not None
    }
    params = enforce_esp([dataclasses.replace(base, **overrides)], sc.rho_max)[0]
    codebook = PhaseCodebook(sc.bits) if sc.bits > 0 else None
    if hardware == "ideal":
        ideal = AtomParams(amplitude=params.amplitude)
        return SurfaceConfig.uniform(n_atoms, ideal, mode=IDEAL, codebook=codebook)
    surface = SurfaceConfig.uniform(n_atoms, params, mode=IMPAIRED, codebook=codebook)
    return apply_impairment(surface, sc.distortion_power, sc.phase_error, seed)


def csi_with_error(channels: ChannelSet, rel_error: float, seed: int) -> ChannelSet:
    """Add CN(0, rel_error * mean|h|^2) estimation error to each link."""
    if rel_error == 0:
        return channels
    out = {}
    for key, name in enumerate(("h_direct", "h_forward", "h_reflect")):
        h = getattr(channels, name)
        if name == "h_direct" and channels.blockage:
            out[name] = h
            continue
        power = float(np.mean(np.abs(h) ** 2)) if h.size else 0.0
        out[name] = h + complex_normal(make_rng(seed, key), h.shape, rel_error * power)
    return channels.replace(**out)


def _frame_config(cfg: ExperimentConfig, seed: int) -> FrameConfig:
    fs = cfg.frame
    dmrs = tuple(range(0, fs.n_symbols, fs.dmrs_every))
    csrs = () if fs.csrs_every <= 0 else tuple(
        p for p in range(fs.csrs_every // 2 + 1, fs.n_symbols, fs.csrs_every) if p not in dmrs
    )
    return FrameConfig(
        n_symbols=fs.n_symbols, dmrs_positions=dmrs, csrs_positions=csrs,
        modulation=fs.modulation, seed=seed,
    )


def _train_options(cfg: ExperimentConfig, codebook, seed: int) -> TrainOptions:
    t = cfg.train
    return TrainOptions(
        max_outer_iters=t.max_outer_iters, inner_steps=t.inner_steps, step_size=t.step_size,
        ridge=t.ridge, codebook=codebook, tol=t.tol, seed=seed, washout=t.washout,
        gradient=t.gradient, fd_step=t.fd_step, quantize_per_iter=t.quantize_per_iter,
        refine_quantized=t.refine_quantized,
    )


@dataclass
class TrialSetup:
    link: LinkModel
    train_frame: object
    eval_frame: object
    csi: ChannelSet
    seeds: dict


def setup_trial(cfg: ExperimentConfig, point: GridPoint, seed: int) -> TrialSetup:
    seeds = {k: derive_seed(seed, i) for i, k in enumerate(
        ("channel", "surface", "csi", "dmrs", "bits", "train", "eval"))}
    scenario = dataclasses.replace(cfg.scenario, n_atoms=point.n_atoms)
    channels = make_channel_set(scenario, seeds["channel"])
    surface = build_surface(cfg, point.n_atoms, point.hardware, seeds["surface"])
    link = LinkModel(channels, surface, noise_power=10 ** (-point.snr_db / 10))
    fcfg = _frame_config(cfg, seeds["dmrs"])
    rng = np.random.default_rng(seeds["bits"])
    train_frame = build_frame(fcfg, rng.integers(0, 2, fcfg.n_data_bits))
    eval_frame = build_frame(fcfg, rng.integers(0, 2, fcfg.n_data_bits))
    csi = csi_with_error(channels, point.csi_error, seeds["csi"])
    return TrialSetup(link, train_frame, eval_frame, csi, seeds)


def evaluate_design(link: LinkModel, phases, combiner, frame, seed: int) -> dict:
    """Send ``frame`` through the configured link and score the DATA symbols."""
    configured = LinkModel(link.channels, link.surface.with_phases(phases), link.noise_power)
    r = simulate_uplink(configured, frame.symbols, seed)
    cfg = frame.config
    data, dmrs = cfg.positions(DATA), cfg.positions(DMRS)
    z = np.atleast_2d(combiner) @ r
    sinr = float(np.min(evm_sinr(z[:, data], frame.symbols[:, data])))
    bits = demodulate_link(r[:, data], combiner, cfg.modulation, reference=(r[:, dmrs], frame.symbols[:, dmrs]))
    se = float(spectral_efficiency(sinr))
    return {
        "ber": ber(frame.data_bits, bits),
        "sinr_db": 10 * math.log10(sinr) if sinr > 0 else -math.inf,
        "se_bps_hz": se,
    }


def run_method(cfg: ExperimentConfig, setup: TrialSetup, method: str):
    """Design phases and combiner with one method; returns ``(phases, combiner, train_result)``."""
    link = setup.link
    if method == "rc":
        dmrs = split_frame(setup.train_frame).dmrs
        opts = _train_options(cfg, link.surface.codebook, setup.seeds["train"])
        res = train_joint(link, dmrs, dmrs, opts)
        return res.phases, res.combiner, res
    if method == "model_based":
        res = model_based_baseline(setup.csi, link)
        return res.phases, res.combiner, res
    raise ConfigError(f"unknown method tag {method!r}")


def run_trial(cfg: ExperimentConfig, point: GridPoint, trial: int, seed: int, chash: str) -> list[dict]:
    setup = setup_trial(cfg, point, seed)
    rows = []
    for method in cfg.sweep.methods:
        phases, w, _ = run_method(cfg, setup, method)
        m = evaluate_design(setup.link, phases, w, setup.eval_frame, setup.seeds["eval"])
        rows.append({
            "point": point.index, "trial": trial, "method": method, "n_atoms": point.n_atoms,
            "snr_db": point.snr_db, "hardware": point.hardware, "csi_error": point.csi_error,
            "seed": seed, "config_hash": chash, **m,
            "ee_bits_per_joule": energy_efficiency(m["se_bps_hz"], cfg.power, point.n_atoms),
        })
    return rows


def _trial_task(args):
    return run_trial(*args)


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """All grid points x trials x methods, order-stable regardless of ``threads``."""
    chash = config_hash(cfg)
    tasks = [
        (cfg, p, j, derive_seed(cfg.seed, p.index, j), chash)
        for p in grid_points(cfg)
        for j in range(cfg.sweep.trials)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_trial_task, tasks))
    else:
        chunks = [_trial_task(t) for t in tasks]
    order = {m: i for i, m in enumerate(cfg.sweep.methods)}
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["point"], r["trial"], order[r["method"]]))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def rows_to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(r[c]) for c in columns) + "\n")
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def summarize(rows: list[dict]) -> list[dict]:
    """Median of every metric per (point, method); values parsed back from strings if needed."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((int(r["point"]), r["method"]), []).append(r)
    out = []
    methods_seen = []
    for r in rows:
        if r["method"] not in methods_seen:
            methods_seen.append(r["method"])
    for (point, method) in sorted(groups, key=lambda k: (k[0], methods_seen.index(k[1]))):
        g = groups[(point, method)]
        first = g[0]
        med = {
            f"median_{k}": float(np.median([float(x[k]) for x in g]))
            for k in ("ber", "sinr_db", "se_bps_hz", "ee_bits_per_joule")
        }
        out.append({
            "point": point, "method": method, "n_atoms": int(first["n_atoms"]),
            "snr_db": float(first["snr_db"]), "hardware": first["hardware"],
            "csi_error": float(first["csi_error"]), "trials": len(g), **med,
        })
    return out


def check_summary(raw_csv: str, summary: list[dict]) -> None:
    """Recompute medians from the serialised raw rows and compare."""
    again = summarize(read_csv(raw_csv))
    if rows_to_csv(again, SUMMARY_COLUMNS) != rows_to_csv(summary, SUMMARY_COLUMNS):
        raise RuntimeError("summary medians are not reproducible from the raw rows")


def run_sounding_eval(cfg: ExperimentConfig) -> list[dict]:
    """Round-robin sounding error per (SNR, trial, sweep, atom).

    The pilot SNR is the per-entry loopback signal power ``M_ap * P_g^2``
    over the noise power, where ``P_g`` is the mean ``|g|^2`` of the
    AP-IRS channel.  Self-interference is ``si_to_noise`` times the noise.
    """
    sc = cfg.sounding
    rows = []
    for si, snr_db in enumerate(sc.snr_db):
        for trial in range(sc.trials):
            seed = derive_seed(cfg.seed, 7, si, trial)
            g = make_channel_set(cfg.scenario, derive_seed(seed, 0)).h_reflect
            p_g = float(np.mean(np.abs(g) ** 2))
            noise = g.shape[0] * p_g**2 / 10 ** (snr_db / 10) if math.isfinite(snr_db) else 0.0
            scfg = SoundingConfig(
                pilot_length=sc.pilot_length, subset_size=sc.subset_size, noise_power=noise,
                self_interference_power=sc.si_to_noise * noise, smoothing=sc.smoothing,
                seed=derive_seed(seed, 1),
            )
            pilot = gen_csrs(g.shape[0], sc.pilot_length, derive_seed(seed, 2))
            prior = None
            for sweep in range(sc.sweeps):
                rr = round_robin(g, scfg, prior, sweep=sweep, pilot=pilot)
                prior = rr.estimate
                err = sign_resolved_error(rr.estimate, g)
                for atom in range(g.shape[1]):
                    rows.append({
                        "snr_db": float(snr_db), "trial": trial, "sweep": sweep, "atom": atom,
                        "residual": float(rr.residuals[atom]), "rel_error": float(err[atom]),
                    })
    return rows


def summarize_sounding(rows: list[dict]) -> list[dict]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((float(r["snr_db"]), int(r["sweep"])), []).append(r)
    out = []
    for key in sorted(groups):
        g = groups[key]
        out.append({
            "snr_db": key[0], "sweep": key[1], "trials": len({int(r["trial"]) for r in g}),
            "median_rel_error": float(np.median([float(r["rel_error"]) for r in g])),
        })
    return out


def gnuplot_report(summary: list[dict], x: str = "n_atoms", y: str = "median_ee_bits_per_joule") -> str:
    """One data block per (method, hardware, csi_error, snr_db), blocks separated
    by two blank lines so ``plot ... index i`` selects a curve."""
    blocks: dict = {}
    for r in summary:
        key = (r["method"], r["hardware"], float(r["csi_error"]), float(r["snr_db"]))
        blocks.setdefault(key, []).append((float(r[x]), float(r[y])))
    out = io.StringIO()
    for i, key in enumerate(sorted(blocks)):
        if i:
            out.write("\n\n")
        method, hw, err, snr = key
        out.write(f"# index {i}: method={method} hardware={hw} csi_error={err:g} snr_db={snr:g}\n")
        out.write(f"# {x} {y}\n")
        for xv, yv in sorted(blocks[key]):
            out.write(f"{xv:.12g} {yv:.12g}\n")
    return out.getvalue()
