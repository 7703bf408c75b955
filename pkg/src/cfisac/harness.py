"""Experiment driver: Monte-Carlo realizations, parameter sweeps, CSV/JSON
emission.

Every realization q derives all of its randomness from named child
streams of SeedSequence((master_seed, q, label)), so results do not
depend on execution order, the number of worker processes, or how many
APs the adversary happens to know.
"""

import csv
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import adversary as adv
from . import precoder
from .airlink import draw_symbols
from .channel import build_sensing_geometry, complex_normal, draw_comm_channels, rcs_covariance_matrix
from .scenario import SearchGrid, cell_of, validate_config

SWEEP_KINDS = ("target_sweep", "cellsize_sweep", "knownaps_sweep", "single")

CSV_COLUMNS = (
    "sweep_value",
    "m_ue",
    "n_tx",
    "p_d",
    "q_used",
    "flagged",
    "mean_gamma_t",
    "mean_min_comm_sinr",
    "seed",
)


@dataclass
class ExperimentSpec:
    kind: str
    values: list
    config: object
    layout: object = None
    grid: object = None
    known_aps: int = None
    jobs: int = 1


@dataclass
class ResultRow:
    sweep_value: float
    m_ue: int
    n_tx: int
    p_d: float
    q_used: int
    flagged: int
    mean_gamma_t: float
    mean_min_comm_sinr: float
    wall_time_s: float
    seed: int


def stream(master_seed, q, label, idx=0):
    """Named, order-independent RNG stream for realization q."""
    key = zlib.crc32(label.encode("ascii"))
    return np.random.default_rng(np.random.SeedSequence((master_seed, q, key, idx)))


def run_realization(scn, q, known_aps=None):
    """One end-to-end draw: channels -> precoder design -> per-AP signal
    recovery -> vote. Returns a plain record dict (JSON-ready except for
    numpy scalars, which stay numeric)."""
    cfg = scn.cfg
    t0 = time.perf_counter()
    if known_aps is None:
        known_aps = list(range(cfg.n_tx))
    else:
        known_aps = list(known_aps)

    seed = cfg.seed
    channels = draw_comm_channels(scn, stream(seed, q, "channels"))
    geom = build_sensing_geometry(scn)
    rcs_cov = rcs_covariance_matrix(scn)
    s = draw_symbols(scn, stream(seed, q, "symbols"))

    record = {"q": q, "seed": seed, "flagged": None, "known_aps": known_aps}
    state = precoder.run_algorithm1(
        channels, geom, rcs_cov, scn, s, stream(seed, q, "precoder")
    )
    record["cccp_status"] = state.status
    record["cccp_iterations"] = state.iterations
    record["gamma_t_history"] = [float(g) for g in state.gamma_t_history]
    if state.status == "flagged":
        record["flagged"] = state.flag_cause
        record["wall_time_s"] = time.perf_counter() - t0
        return record

    record["gamma_t_init"] = float(state.gamma_t_history[0])
    record["gamma_t_final"] = float(state.gamma_t_final)
    record["min_comm_sinr"] = float(np.min(state.comm_sinr_final))
    record["max_ap_power"] = float(np.max(np.sum(np.abs(state.w) ** 2, axis=(1, 2))))
    record["from_checkpoint"] = state.from_checkpoint
    record["trace"] = state.trace

    bps = []
    per_ap = []
    grid_angles = adv.angle_grid(cfg.angle_grid_size)
    for k in known_aps:
        x_pilot = np.exp(
            1j * (np.pi / 4 + np.pi / 2 * stream(seed, q, "pilot", k).integers(
                0, 4, size=(cfg.m_ap, cfg.block_len)))
        )
        y_pilot = channels.h[scn.layout.adversary_index, k] @ x_pilot
        y_pilot = y_pilot + complex_normal(
            stream(seed, q, "pilot_noise", k), y_pilot.shape, scn.sigma_i2
        )
        est = adv.ls_channel_estimate(y_pilot, x_pilot, noise_var=scn.sigma_i2)

        y_tilde, x_tilde = adv.interference_observation(
            channels, state.w, s, scn.layout, scn, k, stream(seed, q, "obs", k),
            h_hat=est.h_hat,
        )
        x_zf = adv.zf_init(est, y_tilde)
        em = adv.run_em(est, y_tilde, scn)
        if not em.converged:
            record["flagged"] = "em_cap"
        sz = x_tilde.size
        per_ap.append(
            {
                "ap": int(k),
                "em_iterations": em.iterations,
                "em_converged": bool(em.converged),
                "mse_em": float(np.sum(np.abs(em.x_hat - x_tilde) ** 2) / sz),
                "mse_zf": float(np.sum(np.abs(x_zf - x_tilde) ** 2) / sz),
            }
        )
        bps.append(adv.estimate_beampattern(em.x_hat, grid_angles, cfg.m_ap))

    loc = adv.vote_and_localize(
        bps, scn.layout, scn.grid, stream(seed, q, "tie"), known_aps
    )
    tc = cell_of(scn.grid, scn.layout.target_pos)
    record["per_ap"] = per_ap
    record["localization"] = loc.to_record()
    record["target_cell"] = None if tc is None else int(tc)
    record["correct"] = bool(loc.correct)
    record["wall_time_s"] = time.perf_counter() - t0
    return record


def _variant(exp, value):
    """Scenario for one sweep point."""
    cfg = exp.config
    layout = exp.layout
    grid = exp.grid
    known = exp.known_aps
    if exp.kind == "target_sweep":
        scn0 = validate_config(cfg, layout, grid)
        layout = replace(scn0.layout, target_pos=(float(value), -float(value)))
    elif exp.kind == "cellsize_sweep":
        base = grid if grid is not None else SearchGrid()
        if (base.extent / float(value)) % 1.0 > 1e-9:
            raise ValueError(
                "cell size %r does not divide the %gm search area" % (value, base.extent)
            )
        grid = replace(base, cell_size=float(value))
    elif exp.kind == "knownaps_sweep":
        known = int(value)
        if not 1 <= known <= cfg.n_tx:
            raise ValueError("known-AP count %r outside 1..n_tx" % (value,))
    elif exp.kind != "single":
        raise ValueError("unknown sweep kind %r" % (exp.kind,))
    scn = validate_config(cfg, layout, grid)
    known_aps = None if known is None else list(range(int(known)))
    return scn, known_aps


def _worker(args):
    scn, q, known_aps = args
    return run_realization(scn, q, known_aps)


def run_experiment(exp, progress=None):
    """Run every sweep point of an ExperimentSpec.

    Returns (rows, records): one ResultRow per sweep value and the full
    per-realization record lists behind them, in matching order.
    """
    if exp.kind not in SWEEP_KINDS:
        raise ValueError("unknown sweep kind %r" % (exp.kind,))
    values = list(exp.values) if exp.kind != "single" else [math.nan]
    if not values:
        raise ValueError("empty sweep")
    rows, all_records = [], []
    for value in values:
        scn, known_aps = _variant(exp, value)
        cfg = scn.cfg
        t0 = time.perf_counter()
        tasks = [(scn, q, known_aps) for q in range(cfg.q_realizations)]
        if exp.jobs and exp.jobs > 1:
            with ProcessPoolExecutor(max_workers=exp.jobs) as pool:
                records = list(pool.map(_worker, tasks))
        else:
            records = []
            for t in tasks:
                records.append(_worker(t))
                if progress:
                    progress(value, t[1], records[-1])
        records.sort(key=lambda r: r["q"])
        rows.append(_aggregate(records, value, cfg, time.perf_counter() - t0))
        all_records.append(records)
    return rows, all_records


def _aggregate(records, value, cfg, elapsed):
    ok = [r for r in records if r["flagged"] is None]
    p_d = float(np.mean([r["correct"] for r in ok])) if ok else math.nan
    return ResultRow(
        sweep_value=float(value),
        m_ue=cfg.m_ue,
        n_tx=cfg.n_tx,
        p_d=p_d,
        q_used=len(ok),
        flagged=len(records) - len(ok),
        mean_gamma_t=float(np.mean([r["gamma_t_final"] for r in ok])) if ok else math.nan,
        mean_min_comm_sinr=float(np.mean([r["min_comm_sinr"] for r in ok])) if ok else math.nan,
        wall_time_s=elapsed,
        seed=cfg.seed,
    )


def _fmt(v):
    if isinstance(v, float):
        return "%.10g" % v
    return str(v)


def emit_csv(rows, path):
    """Fixed column order, deterministic float formatting. Wall time is
    deliberately left out so identical seeds give identical bytes."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def parse_csv(path):
    """Inverse of emit_csv; wall_time_s comes back as nan."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        for rec in rd:
            out.append(
                ResultRow(
                    sweep_value=float(rec["sweep_value"]),
                    m_ue=int(rec["m_ue"]),
                    n_tx=int(rec["n_tx"]),
                    p_d=float(rec["p_d"]),
                    q_used=int(rec["q_used"]),
                    flagged=int(rec["flagged"]),
                    mean_gamma_t=float(rec["mean_gamma_t"]),
                    mean_min_comm_sinr=float(rec["mean_min_comm_sinr"]),
                    wall_time_s=math.nan,
                    seed=int(rec["seed"]),
                )
            )
    return out


def rows_equal(a, b):
    """Equality over the emitted columns (nan == nan)."""
    for c in CSV_COLUMNS:
        va, vb = getattr(a, c), getattr(b, c)
        if isinstance(va, float) and isinstance(vb, float):
            if math.isnan(va) and math.isnan(vb):
                continue
            if va != vb:
                return False
        elif va != vb:
            return False
    return True
