"""Acceptance gate: one test per shipped capability claim.

Each test name states the claim; running this module with -v produces one
pass/fail line per criterion. The desk-size Monte-Carlo stages behind
criteria 3-5 and 7 run once in a shared fixture (around 17 minutes on one
core). The full-scale spot check (criterion 6) only runs when
CFISAC_FULL_SCALE is set; scripts/full_scale.py is its standalone form.
"""

import math
import os
import subprocess
import sys
import time

import pytest

from cfisac.harness import ExperimentSpec, emit_csv, run_experiment
from cfisac.scenario import preset_config, replace, validate_config

DESK = preset_config("desk")


def _stage(cfg, known_aps=None, kind="single", values=()):
    exp = ExperimentSpec(kind=kind, values=list(values), config=cfg,
                         known_aps=known_aps)
    t0 = time.monotonic()
    rows, records = run_experiment(exp)
    return {"row": rows[0], "records": records[0],
            "wall": time.monotonic() - t0}


@pytest.fixture(scope="module")
def stages():
    out = {"mue8": _stage(DESK)}
    for m in (2, 4, 16):
        out["mue%d" % m] = _stage(replace(DESK, m_ue=m))
    out["known6"] = _stage(DESK, known_aps=6)
    out["cell250"] = _stage(replace(DESK, m_ue=16),
                            kind="cellsize_sweep", values=[250.0])
    return out


def _pytest_subset(marker):
    t0 = time.monotonic()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-m", marker, "-q",
         "-p", "no:cacheprovider", "tests"],
        cwd=os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
        capture_output=True,
        text=True,
    )
    return proc, time.monotonic() - t0


def test_criterion_1_closed_form_suite_under_10s():
    proc, wall = _pytest_subset("trivial")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert wall < 10.0, "trivial suite took %.1fs" % wall


def test_criterion_2_oracle_suite_under_5min():
    proc, wall = _pytest_subset("oracle")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert wall < 300.0, "oracle suite took %.1fs" % wall


def test_criterion_3_precoder_feasibility_on_50_desk_seeds(stages):
    scn = validate_config(DESK)
    ok = [r for r in stages["mue8"]["records"] if r["flagged"] is None]
    assert ok, "no accepted runs"
    for r in ok:
        assert r["min_comm_sinr"] >= scn.gamma * (1.0 - 1e-4)
        assert r["max_ap_power"] <= scn.p_t * (1.0 + 1e-6)
    grew = sum(1 for r in ok if r["gamma_t_final"] >= r["gamma_t_init"])
    assert grew >= 0.9 * len(ok), "%d/%d grew" % (grew, len(ok))
    assert stages["mue8"]["wall"] < 1800.0


def test_criterion_4_em_beats_zf_in_80pct_of_realizations(stages):
    ok = [r for r in stages["mue8"]["records"] if r["flagged"] is None]
    wins = 0
    for r in ok:
        mse_em = sum(p["mse_em"] for p in r["per_ap"])
        mse_zf = sum(p["mse_zf"] for p in r["per_ap"])
        wins += mse_em <= mse_zf
    assert wins >= 0.8 * len(ok), "EM won %d of %d" % (wins, len(ok))


def test_criterion_5a_detection_grows_with_ue_antennas(stages):
    p = [stages["mue%d" % m]["row"].p_d for m in (2, 4, 8, 16)]
    assert all(not math.isnan(v) for v in p), p
    drops = [(a - b) for a, b in zip(p, p[1:]) if b < a]
    assert len(drops) <= 1 and all(d <= 0.05 for d in drops), p


def test_criterion_5b_six_known_aps_nearly_suffice(stages):
    p6 = stages["known6"]["row"].p_d
    p8 = stages["mue8"]["row"].p_d
    assert p6 >= 0.95 * p8, (p6, p8)
    walls = sum(stages[k]["wall"] for k in
                ("mue2", "mue4", "mue8", "mue16", "known6"))
    assert walls < 7200.0


@pytest.mark.slow
def test_criterion_6_full_scale_spot_check():
    if not os.environ.get("CFISAC_FULL_SCALE"):
        pytest.skip("hours-long; set CFISAC_FULL_SCALE=1 or run "
                    "scripts/full_scale.py")
    cfg = replace(preset_config("paper"), m_ue=16)
    st = _stage(cfg)
    assert st["row"].p_d >= 0.55, st["row"]


def test_criterion_7_finer_cells_do_not_hide_the_target(stages):
    p_fine = stages["mue16"]["row"].p_d
    p_coarse = stages["cell250"]["row"].p_d
    assert p_fine > p_coarse or (p_fine > 0.5 and p_coarse > 0.5), (
        p_fine, p_coarse)


def test_criterion_8_rerun_gives_byte_identical_csv(tmp_path):
    cfg = replace(DESK, q_realizations=5)
    blobs = []
    for tag in ("first", "second"):
        rows, _ = run_experiment(ExperimentSpec(kind="single", values=[],
                                                config=cfg))
        path = tmp_path / ("%s.csv" % tag)
        emit_csv(rows, path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]
