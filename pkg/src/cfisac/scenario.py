"""Network scenario: geometry, unit conversions, and the search grid.

All internal computation runs in linear units (powers in mW, angles in
radians, gains as ratios). Configs carry the usual dB / dBm / dBsm
quantities and are converted once by validate_config.
"""

import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

SPEED_OF_LIGHT = 299792458.0


def dbm_to_mw(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def mw_to_dbm(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    t = np.asarray(theta, dtype=float)
    out = np.remainder(t + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def azimuth(src, dst):
    """Global azimuth of the ray src -> dst, atan2 convention, in (-pi, pi]."""
    dx = dst[0] - src[0]
    dy = dst[1] - src[1]
    a = math.atan2(dy, dx)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def boresight(pos, origin=(0.0, 0.0)):
    """Array orientation of an AP at pos: the azimuth toward the area center."""
    if pos[0] == origin[0] and pos[1] == origin[1]:
        return 0.0
    return azimuth(pos, origin)


@dataclass
class SimulationConfig:
    """Flat experiment configuration. dB-domain fields end in _db/_dbm/_dbsm."""

    n_tx: int = 8
    n_rx: int = 4
    n_ue: int = 4
    m_ap: int = 64
    m_ue: int = 8
    block_len: int = 64
    p_t_dbm: float = 50.0
    gamma_db: float = 3.0
    sigma_i_dbm: float = -94.0
    sigma_n_dbm: float = -94.0
    sigma_rcs_dbsm: float = 10.0
    rcs_correlation: float = 1.0
    carrier_freq_hz: float = 1.9e9
    pathloss_exp: float = 3.0
    eps_cccp: float = 0.1
    i_max: int = 10
    sigma_err_dbm: float = 10.0
    em_cov_tol: float = 1e-5
    em_dof: float = 3.0
    q_realizations: int = 100
    angle_grid_size: int = 361
    seed: int = 0


@dataclass
class NetworkLayout:
    """AP / UE / target positions in meters, area centered at the origin."""

    tx_ap_pos: np.ndarray
    rx_ap_pos: np.ndarray
    ue_pos: np.ndarray
    target_pos: tuple
    adversary_index: int = 0


@dataclass
class SearchGrid:
    """Square search area split into cell_size x cell_size cells."""

    extent: float = 1000.0
    cell_size: float = 50.0
    origin: tuple = (0.0, 0.0)

    @property
    def n_side(self):
        return int(round(self.extent / self.cell_size))

    @property
    def n_cells(self):
        return self.n_side * self.n_side


@dataclass
class Scenario:
    """Validated scenario with dB quantities converted to linear units."""

    cfg: SimulationConfig
    layout: NetworkLayout
    grid: SearchGrid
    p_t: float = field(init=False)
    gamma: float = field(init=False)
    sigma_i2: float = field(init=False)
    sigma_n2: float = field(init=False)
    sigma_rcs2: float = field(init=False)
    sigma_err2: float = field(init=False)
    lambda_c: float = field(init=False)

    def __post_init__(self):
        c = self.cfg
        self.p_t = float(dbm_to_mw(c.p_t_dbm))
        self.gamma = float(db_to_linear(c.gamma_db))
        self.sigma_i2 = float(dbm_to_mw(c.sigma_i_dbm))
        self.sigma_n2 = float(dbm_to_mw(c.sigma_n_dbm))
        self.sigma_rcs2 = float(db_to_linear(c.sigma_rcs_dbsm))
        self.sigma_err2 = float(dbm_to_mw(c.sigma_err_dbm))
        self.lambda_c = SPEED_OF_LIGHT / c.carrier_freq_hz


def default_layout(n_tx=8):
    """Reference deployment: 8 Tx APs on the area boundary, 4 Rx APs and
    4 UEs on inner squares, target in the upper-left quadrant.

    n_tx=4 keeps the axis-midpoint subset of the Tx ring.
    """
    tx_all = np.array(
        [
            [-500.0, -500.0],
            [500.0, 500.0],
            [-500.0, 500.0],
            [500.0, -500.0],
            [0.0, -500.0],
            [0.0, 500.0],
            [-500.0, 0.0],
            [500.0, 0.0],
        ]
    )
    if n_tx == 8:
        tx = tx_all
    elif n_tx == 4:
        tx = tx_all[4:]
    else:
        raise ValueError("default layout defines n_tx in {4, 8}, got %r" % (n_tx,))
    rx = np.array([[250.0, 250.0], [-250.0, -250.0], [-250.0, 250.0], [250.0, -250.0]])
    ue = np.array([[300.0, 300.0], [-300.0, -300.0], [-300.0, 300.0], [300.0, -300.0]])
    return NetworkLayout(
        tx_ap_pos=tx,
        rx_ap_pos=rx,
        ue_pos=ue,
        target_pos=(-75.0, 75.0),
        adversary_index=0,
    )


def default_grid():
    return SearchGrid(extent=1000.0, cell_size=50.0, origin=(0.0, 0.0))


def validate_config(cfg, layout=None, grid=None):
    """Check a configuration and return the Scenario in linear units.

    Raises ValueError on any violated invariant. layout/grid default to
    the reference deployment sized to cfg.
    """
    if layout is None:
        layout = default_layout(cfg.n_tx)
    if grid is None:
        grid = default_grid()

    for name in ("n_tx", "n_rx", "n_ue", "m_ap", "m_ue", "block_len", "i_max", "q_realizations"):
        v = getattr(cfg, name)
        if not isinstance(v, (int, np.integer)) or v < 1:
            raise ValueError("%s must be a positive integer, got %r" % (name, v))
    if cfg.block_len < cfg.m_ap:
        raise ValueError(
            "block_len (%d) must be >= m_ap (%d) so pilot estimation is determined"
            % (cfg.block_len, cfg.m_ap)
        )
    if not 0.0 <= cfg.rcs_correlation <= 1.0:
        raise ValueError("rcs_correlation must lie in [0, 1]")
    if cfg.pathloss_exp <= 0:
        raise ValueError("pathloss_exp must be positive")
    if cfg.carrier_freq_hz <= 0:
        raise ValueError("carrier_freq_hz must be positive")
    if cfg.eps_cccp <= 0:
        raise ValueError("eps_cccp must be positive")
    if cfg.em_cov_tol <= 0:
        raise ValueError("em_cov_tol must be positive")
    if cfg.em_dof <= 0:
        raise ValueError("em_dof must be positive")
    if cfg.angle_grid_size < 3:
        raise ValueError("angle_grid_size must be at least 3")
    if not isinstance(cfg.seed, (int, np.integer)) or cfg.seed < 0:
        raise ValueError("seed must be a nonnegative integer")

    layout = NetworkLayout(
        tx_ap_pos=np.atleast_2d(np.asarray(layout.tx_ap_pos, dtype=float)),
        rx_ap_pos=np.atleast_2d(np.asarray(layout.rx_ap_pos, dtype=float)),
        ue_pos=np.atleast_2d(np.asarray(layout.ue_pos, dtype=float)),
        target_pos=(float(layout.target_pos[0]), float(layout.target_pos[1])),
        adversary_index=int(layout.adversary_index),
    )
    if layout.tx_ap_pos.shape != (cfg.n_tx, 2):
        raise ValueError("tx_ap_pos must have shape (n_tx, 2)")
    if layout.rx_ap_pos.shape != (cfg.n_rx, 2):
        raise ValueError("rx_ap_pos must have shape (n_rx, 2)")
    if layout.ue_pos.shape != (cfg.n_ue, 2):
        raise ValueError("ue_pos must have shape (n_ue, 2)")
    if not 0 <= layout.adversary_index < cfg.n_ue:
        raise ValueError("adversary_index out of range")

    if grid.extent <= 0 or grid.cell_size <= 0:
        raise ValueError("grid extent and cell_size must be positive")
    ratio = grid.extent / grid.cell_size
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError("grid extent must be an integer multiple of cell_size")

    return Scenario(cfg=cfg, layout=layout, grid=grid)


def cell_of(grid, point):
    """Row-major cell index of a point, or None outside the search area.

    Points exactly on an interior grid line belong to the lower-index
    cell (ties broken toward smaller row/column).
    """
    half = grid.extent / 2.0
    x = point[0] - grid.origin[0]
    y = point[1] - grid.origin[1]
    if x < -half or x > half or y < -half or y > half:
        return None
    n = grid.n_side
    u = (x + half) / grid.cell_size
    w = (half - y) / grid.cell_size
    col = int(math.floor(u))
    if col == u and col > 0:
        col -= 1
    row = int(math.floor(w))
    if row == w and row > 0:
        row -= 1
    col = min(col, n - 1)
    row = min(row, n - 1)
    return row * n + col


def cell_center(grid, idx):
    """Center point (x, y) of a row-major cell index."""
    n = grid.n_side
    row, col = divmod(int(idx), n)
    half = grid.extent / 2.0
    x = -half + (col + 0.5) * grid.cell_size + grid.origin[0]
    y = half - (row + 0.5) * grid.cell_size + grid.origin[1]
    return (x, y)


def preset_config(name):
    """Named presets: 'paper' (full scale) and 'desk' (reduced, CI-sized)."""
    if name == "paper":
        return SimulationConfig()
    if name == "desk":
        return replace(
            SimulationConfig(),
            m_ap=16,
            block_len=64,
            q_realizations=50,
            angle_grid_size=181,
        )
    raise ValueError("unknown preset %r" % (name,))


def config_from_dict(d):
    """Build (cfg, layout, grid) from a flat dict; unknown keys rejected."""
    cfg_names = {f.name for f in fields(SimulationConfig)}
    layout_names = {"tx_ap_pos", "rx_ap_pos", "ue_pos", "target_pos", "adversary_index"}
    grid_names = {"grid_extent", "grid_cell_size", "grid_origin"}
    unknown = set(d) - cfg_names - layout_names - grid_names - {"preset"}
    if unknown:
        raise ValueError("unknown config keys: %s" % sorted(unknown))

    base = preset_config(d.get("preset", "paper"))
    cfg_kw = {k: d[k] for k in d if k in cfg_names}
    for name in ("n_tx", "n_rx", "n_ue", "m_ap", "m_ue", "block_len", "i_max",
                 "q_realizations", "angle_grid_size", "seed"):
        if name in cfg_kw:
            cfg_kw[name] = int(cfg_kw[name])
    cfg = replace(base, **cfg_kw)

    if "tx_ap_pos" in d:
        tx = np.asarray(d["tx_ap_pos"], dtype=float)
    elif cfg.n_tx in (4, 8):
        tx = default_layout(cfg.n_tx).tx_ap_pos
    else:
        raise ValueError(
            "tx_ap_pos must be given explicitly for n_tx=%d" % cfg.n_tx
        )
    ref = default_layout()
    layout = NetworkLayout(
        tx_ap_pos=tx,
        rx_ap_pos=ref.rx_ap_pos,
        ue_pos=ref.ue_pos,
        target_pos=ref.target_pos,
        adversary_index=ref.adversary_index,
    )
    if "rx_ap_pos" in d:
        layout.rx_ap_pos = np.asarray(d["rx_ap_pos"], dtype=float)
    if "ue_pos" in d:
        layout.ue_pos = np.asarray(d["ue_pos"], dtype=float)
    if "target_pos" in d:
        layout.target_pos = tuple(float(v) for v in d["target_pos"])
    if "adversary_index" in d:
        layout.adversary_index = int(d["adversary_index"])

    grid = default_grid()
    if "grid_extent" in d:
        grid.extent = float(d["grid_extent"])
    if "grid_cell_size" in d:
        grid.cell_size = float(d["grid_cell_size"])
    if "grid_origin" in d:
        grid.origin = tuple(float(v) for v in d["grid_origin"])
    return cfg, layout, grid


def load_config(path):
    """Read a flat JSON config file; see config_from_dict for the schema."""
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))
