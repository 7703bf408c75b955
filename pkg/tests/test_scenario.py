import json
import math

import numpy as np
import pytest

from cfisac.scenario import (
    NetworkLayout,
    SearchGrid,
    SimulationConfig,
    azimuth,
    cell_center,
    cell_of,
    config_from_dict,
    dbm_to_mw,
    default_grid,
    default_layout,
    load_config,
    mw_to_dbm,
    preset_config,
    replace,
    validate_config,
    wrap_angle,
)


@pytest.mark.trivial
def test_power_conversion_50_dbm():
    scn = validate_config(SimulationConfig())
    assert scn.p_t == pytest.approx(1e5, rel=1e-12)


@pytest.mark.trivial
def test_sinr_threshold_3_db():
    scn = validate_config(SimulationConfig())
    assert scn.gamma == pytest.approx(10.0**0.3, rel=1e-12)


@pytest.mark.trivial
def test_linear_noise_floors():
    scn = validate_config(SimulationConfig())
    assert scn.sigma_i2 == pytest.approx(10.0**-9.4, rel=1e-12)
    assert scn.sigma_n2 == pytest.approx(10.0**-9.4, rel=1e-12)
    assert scn.sigma_rcs2 == pytest.approx(10.0, rel=1e-12)


@pytest.mark.trivial
def test_wavelength_from_carrier():
    scn = validate_config(SimulationConfig())
    assert scn.lambda_c == pytest.approx(299792458.0 / 1.9e9, rel=1e-12)


@pytest.mark.trivial
def test_layout_length_mismatch_rejected():
    lay = default_layout(8)
    lay = replace(lay, tx_ap_pos=lay.tx_ap_pos[:7])
    with pytest.raises(ValueError):
        validate_config(SimulationConfig(), lay)


@pytest.mark.trivial
def test_default_layout_positions():
    lay = default_layout()
    assert tuple(lay.tx_ap_pos[0]) == (-500.0, -500.0)
    assert any(tuple(p) == (250.0, -250.0) for p in lay.rx_ap_pos)
    assert lay.target_pos == (-75.0, 75.0)
    assert lay.adversary_index == 0
    corners = {(-500.0, -500.0), (500.0, 500.0), (-500.0, 500.0), (500.0, -500.0)}
    mids = {(0.0, -500.0), (0.0, 500.0), (-500.0, 0.0), (500.0, 0.0)}
    assert {tuple(p) for p in lay.tx_ap_pos} == corners | mids
    assert {tuple(p) for p in lay.ue_pos} == {
        (300.0, 300.0), (-300.0, -300.0), (-300.0, 300.0), (300.0, -300.0)
    }


@pytest.mark.trivial
def test_default_layout_four_tx_subset():
    lay = default_layout(4)
    assert {tuple(p) for p in lay.tx_ap_pos} == {
        (0.0, -500.0), (0.0, 500.0), (-500.0, 0.0), (500.0, 0.0)
    }
    with pytest.raises(ValueError):
        default_layout(5)


@pytest.mark.trivial
def test_azimuth_axes():
    assert azimuth((0, 0), (1, 0)) == pytest.approx(0.0, abs=1e-15)
    assert azimuth((0, 0), (0, 1)) == pytest.approx(math.pi / 2, rel=1e-15)


@pytest.mark.oracle
def test_azimuth_off_axis():
    # ray from the west-edge AP to the target, direct trigonometry
    assert azimuth((-500, 0), (-75, 75)) == pytest.approx(
        math.atan2(75.0, 425.0), rel=1e-12
    )


@pytest.mark.trivial
def test_cell_of_corner_and_outside():
    grid = default_grid()
    assert cell_of(grid, (-475.0, 475.0)) == 0
    assert cell_of(grid, (600.0, 0.0)) is None


@pytest.mark.oracle
def test_cell_of_target_cell():
    # (-75, 75) sits in the cell covering [-100, -50) x [50, 100):
    # column 8, row 8 on the 20 x 20 grid
    grid = default_grid()
    idx = cell_of(grid, (-75.0, 75.0))
    assert idx == 8 * 20 + 8
    cx, cy = cell_center(grid, idx)
    assert -100.0 < cx < -50.0 and 50.0 < cy < 100.0


@pytest.mark.trivial
def test_cell_round_trip():
    grid = SearchGrid(extent=400.0, cell_size=50.0)
    for c in range(grid.n_cells):
        assert cell_of(grid, cell_center(grid, c)) == c


@pytest.mark.trivial
def test_cell_boundary_lower_index_wins():
    grid = default_grid()
    # interior grid line at x = -450 between columns 0 and 1
    a = cell_of(grid, (-450.0, 475.0))
    assert a == 0
    # y = 450 line between rows 0 and 1
    assert cell_of(grid, (-475.0, 450.0)) == 0
    # area edge still belongs to the nearest cell
    assert cell_of(grid, (-500.0, 500.0)) == 0
    assert cell_of(grid, (500.0, -500.0)) == grid.n_cells - 1


@pytest.mark.trivial
def test_azimuth_antisymmetry():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a, b = rng.uniform(-500, 500, (2, 2))
        assert wrap_angle(azimuth(a, b) - wrap_angle(azimuth(b, a) + math.pi)) == (
            pytest.approx(0.0, abs=1e-12)
        )


@pytest.mark.trivial
def test_dbm_round_trip():
    vals = np.array([-94.0, 0.0, 13.7, 50.0])
    back = mw_to_dbm(dbm_to_mw(vals))
    assert np.max(np.abs(back - vals) / np.abs(np.where(vals == 0, 1.0, vals))) < 1e-12


@pytest.mark.trivial
def test_validation_errors():
    with pytest.raises(ValueError):
        validate_config(replace(SimulationConfig(), block_len=32))  # < m_ap
    with pytest.raises(ValueError):
        validate_config(replace(SimulationConfig(), rcs_correlation=1.5))
    with pytest.raises(ValueError):
        validate_config(replace(SimulationConfig(), pathloss_exp=0.0))
    with pytest.raises(ValueError):
        validate_config(replace(SimulationConfig(), eps_cccp=-1.0))
    with pytest.raises(ValueError):
        validate_config(replace(SimulationConfig(), n_tx=0))
    with pytest.raises(ValueError):
        validate_config(replace(SimulationConfig(), seed=-1))
    lay = replace(default_layout(), adversary_index=4)
    with pytest.raises(ValueError):
        validate_config(SimulationConfig(), lay)
    with pytest.raises(ValueError):
        validate_config(SimulationConfig(), grid=SearchGrid(cell_size=300.0))


@pytest.mark.trivial
def test_presets():
    paper = preset_config("paper")
    assert (paper.m_ap, paper.q_realizations, paper.angle_grid_size) == (64, 100, 361)
    desk = preset_config("desk")
    assert (desk.m_ap, desk.q_realizations, desk.angle_grid_size) == (16, 50, 181)
    assert desk.n_tx == paper.n_tx == 8
    with pytest.raises(ValueError):
        preset_config("laptop")


@pytest.mark.trivial
def test_config_from_dict_rejects_unknown_key():
    with pytest.raises(ValueError):
        config_from_dict({"preset": "desk", "m_app": 8})


@pytest.mark.trivial
def test_config_from_dict_overrides(tmp_path):
    d = {
        "preset": "desk",
        "seed": 3,
        "m_ue": 4,
        "target_pos": [100.0, -100.0],
        "grid_cell_size": 100.0,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    cfg, layout, grid = load_config(str(path))
    assert (cfg.seed, cfg.m_ue, cfg.m_ap) == (3, 4, 16)
    assert layout.target_pos == (100.0, -100.0)
    assert grid.cell_size == 100.0
    validate_config(cfg, layout, grid)


@pytest.mark.trivial
def test_config_from_dict_custom_counts_need_positions():
    base = {"n_tx": 2, "n_rx": 1, "n_ue": 1, "m_ap": 4, "m_ue": 2, "block_len": 8}
    with pytest.raises(ValueError):
        config_from_dict(base)
    d = dict(
        base,
        tx_ap_pos=[[-500.0, 0.0], [500.0, 0.0]],
        rx_ap_pos=[[250.0, 250.0]],
        ue_pos=[[300.0, 300.0]],
    )
    cfg, layout, grid = config_from_dict(d)
    scn = validate_config(cfg, layout, grid)
    assert scn.cfg.n_tx == 2 and layout.rx_ap_pos.shape == (1, 2)
