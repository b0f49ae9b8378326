import csv
import json

import numpy as np
import pytest

from ricci_lab import harness
from ricci_lab.config import ExperimentConfig
from ricci_lab.harness import CSV_HEADER, emit_plots, exit_status, refine_sweep, run, worker_count

SMALL = dict(n=16, levels=2, steps=4)


def test_report_schema_and_csv(tmp_path):
    checks = ("besse1", "besse5", "thm1-scalar", "i3", "ibp", "curvature", "bianchi")
    res = run(ExperimentConfig(name="s", checks=checks, **SMALL), tmp_path)
    rep = json.loads((tmp_path / "s_report.json").read_text())
    assert list(rep) == list(checks)
    for r in rep.values():
        assert {"terms", "eps_slope", "h_order", "verdict"} <= set(r)
        assert r["verdict"] in ("verified", "discretization-limited", "formula-discrepancy")
        for norms in r["terms"].values():
            assert set(norms) == {"linf", "l2"}
    for name in ("s.csv", "s_dsdt_oracle.csv"):
        with (tmp_path / name).open() as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_HEADER
        assert len(rows) == 1 + SMALL["steps"] + 1
    assert res.exit_status == 0
    meta = json.loads((tmp_path / "s_meta.json").read_text())
    assert meta["error"] is None and meta["completed"] == list(checks)


def test_flat_preset_everything_verified(tmp_path):
    cfg = ExperimentConfig(name="flat", preset="flat-const", a=0.0, B=0.0, **SMALL)
    res = run(cfg, tmp_path)
    for name, r in res.report.items():
        assert r["verdict"] == "verified", name
        if "residual" in r["terms"]:
            assert r["terms"]["residual"]["linf"] <= 1e-11, name


def test_besse4_eps_slope(tmp_path):
    res = run(ExperimentConfig(name="b4", checks=("besse4",), **SMALL), tmp_path)
    assert abs(res.report["besse4"]["eps_slope"] - 2.0) < 0.2


def test_deterministic_bytes(tmp_path):
    cfg = ExperimentConfig(name="d", preset="random-smooth", seed=7, checks=("besse2", "i5", "ds-dt"), **SMALL)
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for f in ("d_report.json", "d.csv", "d_dsdt_oracle.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_exit_status_contract():
    rep = {"ds-dt": {"verdict": "formula-discrepancy"}, "besse1": {"verdict": "verified"}}
    assert exit_status(rep, ("besse1",)) == 0
    assert exit_status(rep, ("ds-dt",)) == 1
    assert exit_status({"ibp": {"verdict": "discretization-limited"}}, ("ibp",)) == 0


def test_error_names_check_and_flushes(tmp_path, monkeypatch):
    real = harness._dispatch

    def boom(ctx, name, series):
        if name == "ibp":
            raise RuntimeError("synthetic")
        return real(ctx, name, series)

    monkeypatch.setattr(harness, "_dispatch", boom)
    res = run(ExperimentConfig(name="e", checks=("besse5", "ibp", "besse1"), **SMALL), tmp_path)
    assert res.exit_status == 2
    assert "'ibp'" in res.error
    rep = json.loads((tmp_path / "e_report.json").read_text())
    assert list(rep) == ["besse5"]


def test_nan_serialised_as_null():
    text = harness.dumps({"x": float("nan"), "y": np.float64(1.5), "z": [np.inf]})
    assert json.loads(text) == {"x": None, "y": 1.5, "z": [None]}


def test_worker_count(monkeypatch):
    monkeypatch.setenv("RICCI_LAB_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("RICCI_LAB_THREADS", "0")
    assert worker_count() >= 1
    monkeypatch.setenv("RICCI_LAB_THREADS", "-1")
    with pytest.raises(ValueError):
        worker_count()


def test_thread_count_does_not_change_bytes(tmp_path, monkeypatch):
    cfg = ExperimentConfig(name="t", checks=("besse3", "besse6", "bianchi"), **SMALL)
    monkeypatch.setenv("RICCI_LAB_THREADS", "1")
    run(cfg, tmp_path / "one")
    monkeypatch.setenv("RICCI_LAB_THREADS", "4")
    run(cfg, tmp_path / "four")
    assert (tmp_path / "one" / "t_report.json").read_bytes() == (tmp_path / "four" / "t_report.json").read_bytes()


def test_sweep_and_plots(tmp_path):
    cfg = ExperimentConfig(name="sw", n=16, checks=("curvature", "besse1"), output_dir=str(tmp_path))
    table = refine_sweep(cfg, 3)
    row = {r["check"]: r for r in table}
    assert 3.5 <= row["curvature"]["order"] <= 4.5 and row["curvature"]["flag"] == ""
    assert [g[0] for g in row["curvature"]["grids"]] == [16, 32, 64]
    assert (tmp_path / "sw_sweep.csv").exists()
    run(ExperimentConfig(name="sw", checks=("besse1",), **SMALL), tmp_path)
    script = emit_plots(tmp_path / "sw.csv").read_text()
    assert "sw.csv" in script and "sw_sweep.csv" in script and "logscale" in script


def test_sweep_flat_reports_exact(tmp_path):
    cfg = ExperimentConfig(name="fl", preset="flat-const", n=8, checks=("bianchi",), output_dir=str(tmp_path))
    assert refine_sweep(cfg, 2)[0]["flag"] == "exact"


def test_plot_scripts_per_preset(tmp_path):
    for preset in ("flat-const", "conformal-bump", "random-smooth"):
        run(ExperimentConfig(name=preset, preset=preset, checks=("besse5",), **SMALL), tmp_path)
        assert f"'{preset}.csv'" in emit_plots(tmp_path / f"{preset}.csv").read_text()


def test_chart_probe_isolates_gamma_terms():
    ctx = harness.make_context(ExperimentConfig(preset="random-smooth", n=64))
    probe = harness.chart_probe(ctx, 5)
    others = max(v for k, v in probe["self_change"].items() if k != "gamma")
    assert probe["self_change"]["gamma"] > 20 * others


def test_df_dt_substitution_isolates_gamma_term():
    ctx = harness.make_context(ExperimentConfig(preset="random-smooth", n=32, levels=2))
    rep = harness.check_identity(ctx, "df-dt")
    sub = rep["details"]["ds_oracle_substitution"]
    assert sub["isolation"]["responsible"] == ["gamma_grad_f"]
    assert abs(sub["isolation"]["per_term"]["gamma_grad_f"]["alpha"] + 1.0) < 1e-3
