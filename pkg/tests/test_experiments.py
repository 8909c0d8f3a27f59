import csv
import io
import math
import subprocess
import sys

import pytest

from irsrm import __version__, cli
from irsrm.experiments import (FIELDS, METHODS, ExperimentConfig, TrialRecord, aggregate,
                               load_config, parse_config, records_to_csv, run_experiment,
                               summary_to_csv)
from irsrm.model import dbm_to_watt, linear_to_db
from irsrm.scenario import derive_seed, draw_instance


# configuration

def test_parse_types_comments_and_lists():
    cfg = parse_config("""
        # desk run
        K = 3
        p_max_dbm = 17.5   # watts later
        methods = admm, no_irs
        sweep_param = delta_scale
        sweep_values = 0.5, 0.9
        timing = yes
    """)
    assert cfg.K == 3 and cfg.p_max_dbm == 17.5
    assert cfg.methods == ("admm", "no_irs")
    assert cfg.sweep_values == (0.5, 0.9)
    assert cfg.timing is True
    assert cfg.M == ExperimentConfig().M


@pytest.mark.parametrize("text, msg", [
    ("K = 3\nbogus = 1", "unknown key"),
    ("K = 3\nK = 4", "duplicate"),
    ("K 3", "expected"),
    ("K = three", "bad value"),
    ("timing = maybe", "bad value"),
    ("methods = admm, teleport", "unknown methods"),
    ("trials = 0", "trials"),
    ("eps_bisect = 0", "eps_bisect"),
    ("sweep_param = trials\nsweep_values = 1", "cannot sweep"),
    ("sweep_param = K", "without sweep_values"),
    ("csi_xi = 1.5", "csi_xi"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ValueError, match=msg):
        parse_config(text)


def test_precedence(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("K = 2\ntrials = 7\n", encoding="utf-8")
    cfg = load_config(path, _defaults=dict(K=5, M=9, trials=3), master_seed=11, trials=None)
    assert (cfg.K, cfg.M, cfg.trials, cfg.master_seed) == (2, 9, 7, 11)


def test_points_cast_to_field_type():
    cfg = ExperimentConfig(sweep_param="K", sweep_values=(1.0, 2.0))
    pts = cfg.points()
    assert [v for v, _ in pts] == [1.0, 2.0]
    assert isinstance(pts[1][1].K, int) and pts[1][1].K == 2
    v, same = ExperimentConfig().points()[0]
    assert math.isnan(v) and same == ExperimentConfig()


# running

def test_single_link_closed_form():
    cfg = ExperimentConfig(K=1, methods=("no_irs",), trials=1, eps_bisect=1e-9)
    (rec,) = run_experiment(cfg)
    _, ch = draw_instance(cfg.scenario(), derive_seed(0, 0, "instance"))
    want = dbm_to_watt(20) * abs(ch.d_direct[0, 0]) ** 2 / dbm_to_watt(-90)
    assert rec.method == "no_irs" and rec.trial == 0 and math.isnan(rec.value)
    assert rec.per_user_sinr[0] == pytest.approx(want, rel=1e-8)
    assert rec.min_sinr_db == pytest.approx(linear_to_db(want), abs=1e-7)
    assert rec.triggered_count == 0 and rec.subset == 0


SMALL = dict(K=2, M=3, L=2, trials=3, delta_scale=0.5, methods=METHODS)


@pytest.fixture(scope="module")
def small_records():
    return run_experiment(ExperimentConfig(**SMALL))


def test_cells_exactly_once_and_invariants(small_records):
    cells = [(r.value if not math.isnan(r.value) else None, r.trial, r.method) for r in small_records]
    assert len(cells) == len(set(cells)) == 3 * len(METHODS)
    for r in small_records:
        assert r.triggered_count == bin(r.subset).count("1")
        if r.per_user_sinr:
            assert r.min_sinr_db == pytest.approx(linear_to_db(min(r.per_user_sinr)))


def test_trial_order_and_workers_do_not_matter(small_records):
    cfg = ExperimentConfig(**SMALL)
    a = records_to_csv(small_records)
    assert records_to_csv(run_experiment(cfg, trial_order=[2, 0, 1])) == a
    assert records_to_csv(run_experiment(cfg, workers=2)) == a
    assert summary_to_csv(aggregate(run_experiment(cfg, trial_order=[1, 2, 0]))) == \
        summary_to_csv(aggregate(small_records))
    with pytest.raises(ValueError):
        run_experiment(cfg, trial_order=[0, 0, 1])


def test_sweep_sorted_by_value():
    cfg = ExperimentConfig(K=2, M=2, L=2, trials=2, methods=("no_irs",),
                           sweep_param="p_max_dbm", sweep_values=(10.0, 0.0))
    recs = run_experiment(cfg)
    assert [(r.value, r.trial) for r in recs] == [(0.0, 0), (0.0, 1), (10.0, 0), (10.0, 1)]
    # more power lifts the noise-limited min SINR
    assert recs[2].min_sinr_db > recs[0].min_sinr_db


def test_trace_dir(tmp_path):
    cfg = ExperimentConfig(K=2, M=2, L=2, trials=1, methods=("admm",))
    run_experiment(cfg, trace_dir=tmp_path)
    files = list(tmp_path.iterdir())
    assert len(files) == 1 and files[0].name == "admm_vnan_t0.csv"
    assert files[0].read_text().count("\n") > 2


def test_af_needs_enough_antennas():
    cfg = ExperimentConfig(K=4, M=5, L=1, trials=1, methods=("af",), delta_scale=0.05)
    (rec,) = run_experiment(cfg)
    if rec.triggered_count < 4:
        assert rec.warnings == ("too_few_relay_antennas",)
        assert math.isnan(rec.min_sinr_db)


# output format

def _rec(**kw):
    base = dict(trial=0, method="admm", value=math.nan, min_sinr_db=10.0, per_user_sinr=(10.0,),
                triggered_count=2, subset=0b101, total_tx_power_w=0.1, sum_rate_bph=1.0,
                ee_bpjphz=2.0, phase1_iters=5, outer_iters=1, runtime_ms=None)
    base.update(kw)
    return TrialRecord(**base)


def test_csv_format():
    text = records_to_csv([_rec(min_sinr_db=1 / 3, per_user_sinr=(2 / 3, 4.0),
                                warnings=("max_outer",), value=0.5)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == FIELDS
    row = dict(zip(FIELDS, rows[1]))
    assert row["min_sinr_db"] == "0.333333333"
    assert row["per_user_sinr"] == "0.666666667;4"
    assert row["subset"] == "0x5"
    assert row["runtime_ms"] == "" and row["value"] == "0.5"
    assert row["warnings"] == "max_outer"
    assert records_to_csv([_rec()]).splitlines()[1].split(",")[2] == ""


def test_csv_deterministic(small_records):
    cfg = ExperimentConfig(**SMALL)
    assert records_to_csv(run_experiment(cfg)) == records_to_csv(small_records)


# aggregation

def test_aggregate_single_and_equal():
    (row,) = aggregate([_rec()])
    assert row["min_sinr_db_mean"] == 10.0 and row["min_sinr_db_stderr"] == 0.0
    (row,) = aggregate([_rec(), _rec(trial=1)])
    assert row["n"] == 2 and row["ee_bpjphz_stderr"] == 0.0


def test_aggregate_hand_computed():
    recs = [_rec(trial=0, min_sinr_db=1.0, total_tx_power_w=0.2),
            _rec(trial=1, min_sinr_db=2.0, total_tx_power_w=0.4),
            _rec(trial=2, min_sinr_db=6.0, total_tx_power_w=0.3),
            _rec(trial=3, min_sinr_db=100.0, warnings=("max_outer",)),
            _rec(trial=4, min_sinr_db=float("nan"))]
    (row,) = aggregate(recs)
    assert row["n"] == 3 and row["excluded"] == 2
    assert row["min_sinr_db_mean"] == pytest.approx(3.0)
    # sample std of (1, 2, 6) is sqrt(7), over sqrt(3)
    assert row["min_sinr_db_stderr"] == pytest.approx(math.sqrt(7 / 3))
    assert row["total_tx_power_w_mean"] == pytest.approx(0.3)


def test_aggregate_groups_and_empty():
    recs = [_rec(method="mrs", value=1.0), _rec(method="admm", value=2.0),
            _rec(method="admm", value=1.0, warnings=("x",))]
    rows = aggregate(recs)
    assert [(r["method"], r["value"]) for r in rows] == [("admm", 1.0), ("admm", 2.0), ("mrs", 1.0)]
    assert rows[0]["note"] == "empty group" and rows[0]["n"] == 0
    assert "nan" not in summary_to_csv(rows).lower()
    with pytest.raises(ValueError):
        aggregate([])


# command line

def test_cli_bound(capsys):
    assert cli.main(["bound", "--M", "5", "--K", "5", "--N", "100", "--pmax-dbm", "20"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(3.97135679, rel=1e-8)


def test_cli_simulate_and_errors(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("K = 1\nM = 1\nL = 2\ntrials = 2\nmethods = no_irs\n", encoding="utf-8")
    out, summ = tmp_path / "o.csv", tmp_path / "s.csv"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "3",
                     "--summary", str(summ)]) == 0
    first = out.read_bytes()
    assert first.splitlines()[0].decode() == ",".join(FIELDS)
    assert len(first.splitlines()) == 3
    assert summ.read_text().startswith("method,value,n")
    cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "4"])
    assert out.read_bytes() != first
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n", encoding="utf-8")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--workers", "0"]) == 2


def test_cli_version_subprocess():
    r = subprocess.run([sys.executable, "-m", "irsrm.cli", "--version"],
                       capture_output=True, text=True, check=True)
    assert __version__ in r.stdout
