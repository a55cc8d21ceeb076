import math

import pandas as pd
import pytest

from bench import REPORT_COLUMNS, BenchReport, run_bench
from graph import serialize_instance
from instgen import generate
from models import GenConfig


def row(instance, mode, ip_obj, t_total, lp_obj=None, t_price=0.0):
    return {
        "instance": instance, "mode": mode, "lp_obj": lp_obj if lp_obj is not None else ip_obj,
        "ip_obj": ip_obj, "iters": 5, "cols": 40, "t_total_s": t_total,
        "t_price_s": t_price, "t_lp_s": 0.1, "t_ip_s": 0.1,
    }


@pytest.fixture
def report():
    return BenchReport.from_rows([
        row("a", "baseline", 10.0, 4.0, t_price=3.0),
        row("a", "optimal", 10.0, 2.0, t_price=1.0),
        row("a", "fast", 11.0, 1.0),
        row("b", "baseline", 20.0, 10.0, t_price=8.0),
        row("b", "optimal", 20.0, 10.0, t_price=7.0),
        row("b", "fast", 21.0, 2.0),
    ])


def test_per_instance_gap_and_ratio(report):
    df = report.per_instance().set_index(["instance", "mode"])
    assert df.loc[("a", "fast"), "gap_pct"] == pytest.approx(10.0)
    assert df.loc[("b", "fast"), "gap_pct"] == pytest.approx(5.0)
    assert df.loc[("a", "optimal"), "ratio_pct"] == pytest.approx(50.0)
    assert df.loc[("b", "baseline"), "ratio_pct"] == pytest.approx(100.0)


def test_summary_averages_per_instance_ratios(report):
    summary = report.summary().set_index("mode")
    assert list(summary.index) == ["baseline", "optimal", "fast"]
    # mean of 50% and 100%, not total time over total time
    assert summary.loc["optimal", "mean_ratio_pct"] == pytest.approx(75.0)
    assert summary.loc["fast", "mean_gap_pct"] == pytest.approx(7.5)
    assert summary.loc["baseline", "price_share"] == pytest.approx(11.0 / 14.0)
    assert (summary["failures"] == 0).all()


def test_failed_runs_are_counted_not_averaged():
    failed = {column: math.nan for column in REPORT_COLUMNS}
    failed.update(instance="b", mode="fast")
    report = BenchReport.from_rows([
        row("a", "baseline", 10.0, 4.0), row("a", "fast", 12.0, 1.0),
        row("b", "baseline", 20.0, 8.0), failed,
    ])
    summary = report.summary().set_index("mode")
    assert summary.loc["fast", "failures"] == 1
    assert summary.loc["fast", "instances"] == 1
    assert summary.loc["fast", "mean_gap_pct"] == pytest.approx(20.0)


def test_report_written_and_reread(report, tmp_path):
    path = tmp_path / "test.csv"
    summary_path = report.write(path)
    assert summary_path == tmp_path / "test_summary.csv"
    assert path.read_text().splitlines()[0] == \
        "instance,mode,lp_obj,ip_obj,iters,cols,t_total_s,t_price_s,t_lp_s,t_ip_s"
    again = BenchReport.from_csv(path)
    pd.testing.assert_frame_equal(again.summary(), report.summary())


def test_foreign_csv_is_rejected(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("instance,mode,objective\na,baseline,1\n")
    with pytest.raises(ValueError, match="header"):
        BenchReport.from_csv(path)


def test_baseline_bench_end_to_end(tmp_path, toy_graph, small_graph):
    paths = []
    for name, g in (("toy", toy_graph), ("small", small_graph)):
        p = tmp_path / f"{name}.rcsp"
        p.write_bytes(serialize_instance(g))
        paths.append(str(p))
    broken = tmp_path / "broken.rcsp"
    broken.write_bytes(b"{")
    report = run_bench(paths + [str(broken)], ["baseline"], trajectory_dir=tmp_path / "traj")
    rows = report.rows.set_index("instance")
    assert rows.loc["toy", "ip_obj"] >= rows.loc["toy", "lp_obj"] - 1e-9
    assert math.isnan(rows.loc["broken", "ip_obj"])
    assert (tmp_path / "traj" / "small_baseline.csv").exists()
    summary = report.summary().set_index("mode")
    assert summary.loc["baseline", "mean_gap_pct"] == pytest.approx(0.0)
    assert summary.loc["baseline", "failures"] == 1


def test_pricing_dominates_baseline_time(tmp_path):
    paths = []
    for seed in (1, 2):
        path = tmp_path / f"instance_{seed:05d}.rcsp"
        path.write_bytes(serialize_instance(generate(GenConfig(seed=seed))))
        paths.append(str(path))
    report = run_bench(paths, ["baseline"])
    rows = report.rows
    assert (rows["t_price_s"] + rows["t_lp_s"] + rows["t_ip_s"] <= rows["t_total_s"] + 1e-6).all()
    assert report.summary().set_index("mode").loc["baseline", "price_share"] > 0.5
