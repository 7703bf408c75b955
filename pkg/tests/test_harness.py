import json
import math

import numpy as np
import pytest

from cfisac import cli
from cfisac.harness import (
    CSV_COLUMNS,
    ExperimentSpec,
    ResultRow,
    _variant,
    emit_csv,
    parse_csv,
    rows_equal,
    run_experiment,
    run_realization,
    stream,
)
from cfisac.scenario import cell_of, replace

from conftest import RX_POOL, TX_POOL, UE_POOL, make_scenario


def tiny_scenario(**kw):
    """Smallest full-pipeline scenario: two APs, one UE, short blocks."""
    base = dict(n_tx=2, n_rx=1, n_ue=1, m_ap=4, m_ue=2, block_len=8,
                i_max=2, q_realizations=2, angle_grid_size=91)
    base.update(kw)
    return make_scenario(**base)


def strip_wall(record):
    r = json.loads(json.dumps(record, sort_keys=True, default=float))
    r.pop("wall_time_s", None)
    return r


@pytest.mark.trivial
def test_streams_reproducible_and_separated():
    a = stream(0, 0, "channels").standard_normal(8)
    np.testing.assert_array_equal(a, stream(0, 0, "channels").standard_normal(8))
    for other in (
        stream(0, 1, "channels"),
        stream(1, 0, "channels"),
        stream(0, 0, "symbols"),
        stream(0, 0, "channels", idx=1),
    ):
        assert not np.array_equal(a, other.standard_normal(8))


@pytest.mark.trivial
def test_realization_record_shape():
    scn = tiny_scenario()
    rec = run_realization(scn, 0)
    assert rec["q"] == 0
    assert rec["seed"] == scn.cfg.seed
    assert rec["flagged"] is None
    assert rec["known_aps"] == [0, 1]
    assert rec["cccp_status"] in ("converged", "max_iter")
    assert len(rec["gamma_t_history"]) == rec["cccp_iterations"] + 1
    assert rec["min_comm_sinr"] >= scn.gamma * (1.0 - 1e-4)
    assert rec["max_ap_power"] <= scn.p_t * (1.0 + 1e-6)
    assert [p["ap"] for p in rec["per_ap"]] == [0, 1]
    for p in rec["per_ap"]:
        assert p["mse_em"] >= 0.0 and p["mse_zf"] >= 0.0
    assert rec["target_cell"] == cell_of(scn.grid, scn.layout.target_pos)
    assert rec["correct"] == rec["localization"]["correct"]
    assert rec["wall_time_s"] > 0.0


@pytest.mark.oracle
def test_realization_deterministic():
    scn = tiny_scenario()
    r1 = run_realization(scn, 1)
    r2 = run_realization(scn, 1)
    assert strip_wall(r1) == strip_wall(r2)


@pytest.mark.oracle
def test_unmeetable_constraints_are_flagged_not_crashed():
    scn_kw = dict(gamma_db=60.0, p_t_dbm=-50.0)
    exp = ExperimentSpec(kind="single", values=[], config=tiny_scenario(**scn_kw).cfg,
                         layout=tiny_scenario(**scn_kw).layout)
    rows, records = run_experiment(exp)
    row = rows[0]
    assert row.q_used == 0
    assert row.flagged == 2
    assert math.isnan(row.p_d) and math.isnan(row.mean_gamma_t)
    assert all(r["flagged"] == "infeasible_init" for r in records[0])
    assert row.q_used + row.flagged == scn_kw.get("q_realizations", 2)


@pytest.mark.trivial
def test_variant_target_mirror():
    scn = tiny_scenario()
    exp = ExperimentSpec(kind="target_sweep", values=[-75.0], config=scn.cfg,
                         layout=scn.layout)
    v, known = _variant(exp, -75.0)
    assert v.layout.target_pos == (-75.0, 75.0)
    assert known is None


@pytest.mark.trivial
def test_variant_cellsize_divisibility():
    scn = tiny_scenario()
    exp = ExperimentSpec(kind="cellsize_sweep", values=[], config=scn.cfg,
                         layout=scn.layout)
    v, _ = _variant(exp, 250.0)
    assert v.grid.cell_size == 250.0
    assert v.grid.n_side == 4
    with pytest.raises(ValueError):
        _variant(exp, 300.0)


@pytest.mark.trivial
def test_variant_knownaps_bounds():
    scn = tiny_scenario()
    exp = ExperimentSpec(kind="knownaps_sweep", values=[], config=scn.cfg,
                         layout=scn.layout)
    _, known = _variant(exp, 2.0)
    assert known == [0, 1]
    with pytest.raises(ValueError):
        _variant(exp, 3.0)
    with pytest.raises(ValueError):
        _variant(exp, 0.0)


def crafted_rows():
    return [
        ResultRow(sweep_value=-75.0, m_ue=8, n_tx=2, p_d=0.1234567891,
                  q_used=49, flagged=1, mean_gamma_t=797.6537548,
                  mean_min_comm_sinr=1.995262315, wall_time_s=12.5, seed=0),
        ResultRow(sweep_value=math.nan, m_ue=4, n_tx=8, p_d=1.0,
                  q_used=50, flagged=0, mean_gamma_t=1.25e-3,
                  mean_min_comm_sinr=2.0, wall_time_s=2.0, seed=7),
        ResultRow(sweep_value=50.0, m_ue=16, n_tx=8, p_d=math.nan,
                  q_used=0, flagged=50, mean_gamma_t=math.nan,
                  mean_min_comm_sinr=math.nan, wall_time_s=0.0, seed=3),
    ]


@pytest.mark.trivial
def test_csv_roundtrip(tmp_path):
    rows = crafted_rows()
    path = tmp_path / "rows.csv"
    emit_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4
    assert "0.1234567891" in lines[1]  # ten significant digits survive
    back = parse_csv(path)
    assert len(back) == 3
    assert all(rows_equal(a, b) for a, b in zip(rows, back))


@pytest.mark.trivial
def test_rows_equal_ignores_wall_time():
    a, b = crafted_rows()[0], crafted_rows()[0]
    b.wall_time_s = 99.0
    assert rows_equal(a, b)
    b.p_d = 0.5
    assert not rows_equal(a, b)


@pytest.mark.oracle
def test_repeat_run_byte_identical_csv(tmp_path):
    scn = tiny_scenario()
    exp = ExperimentSpec(kind="single", values=[], config=scn.cfg,
                         layout=scn.layout)
    paths = []
    for tag in ("a", "b"):
        rows, _ = run_experiment(exp)
        p = tmp_path / ("rows_%s.csv" % tag)
        emit_csv(rows, p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


@pytest.mark.oracle
def test_parallel_jobs_match_serial(tmp_path):
    scn = tiny_scenario()
    serial = ExperimentSpec(kind="single", values=[], config=scn.cfg,
                            layout=scn.layout, jobs=1)
    parallel = replace(serial, jobs=2)
    rows_s, recs_s = run_experiment(serial)
    rows_p, recs_p = run_experiment(parallel)
    assert rows_equal(rows_s[0], rows_p[0])
    assert [strip_wall(r) for r in recs_s[0]] == [strip_wall(r) for r in recs_p[0]]


def write_config(tmp_path, **overrides):
    d = dict(
        n_tx=2, n_rx=1, n_ue=1, m_ap=4, m_ue=2, block_len=8,
        i_max=2, q_realizations=2, angle_grid_size=91,
        tx_ap_pos=TX_POOL[:2].tolist(),
        rx_ap_pos=RX_POOL[:1].tolist(),
        ue_pos=UE_POOL[:1].tolist(),
        target_pos=[-75.0, 75.0],
    )
    d.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return str(path)


@pytest.mark.oracle
def test_cli_run_emits_csv_and_json(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out_csv = tmp_path / "rows.csv"
    out_json = tmp_path / "all.json"
    rc = cli.main(["run", "--config", cfg, "--out", str(out_csv),
                   "--json", str(out_json)])
    assert rc == 0
    rows = parse_csv(out_csv)
    assert len(rows) == 1
    assert rows[0].q_used + rows[0].flagged == 2
    payload = json.loads(out_json.read_text())
    assert len(payload["rows"]) == 1
    assert len(payload["records"][0]) == 2
    assert "p_d=" in capsys.readouterr().out


@pytest.mark.oracle
def test_cli_sweep_kinds(tmp_path):
    cfg = write_config(tmp_path)
    out_csv = tmp_path / "sweep.csv"
    rc = cli.main(["sweep", "--kind", "knownaps", "--values", "1,2",
                   "--config", cfg, "--out", str(out_csv)])
    assert rc == 0
    rows = parse_csv(out_csv)
    assert [r.sweep_value for r in rows] == [1.0, 2.0]


@pytest.mark.trivial
def test_cli_preset_and_config_are_exclusive(tmp_path):
    cfg = write_config(tmp_path)
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", cfg, "--preset", "desk"])


@pytest.mark.trivial
def test_cli_rejects_empty_values(tmp_path):
    cfg = write_config(tmp_path)
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--kind", "target", "--values", ",", "--config", cfg])
